"""Sparse matrix pencils: storage, Matrix Market I/O, test problem generators
and the eigenpair residual used throughout the solvers."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp


class MatrixMarketError(ValueError):
    """Malformed Matrix Market input; carries the offending line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DefectiveDirectionError(ValueError):
    pass


def make_rng(seed):
    """Counter-based 64-bit generator used for every random draw in the package."""
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(frozen=True, eq=False)
class ComplexSparseMatrix:
    """Complex matrix in compressed sparse row layout.

    Column indices within a row are strictly increasing, so each (row, col)
    position is stored at most once.
    """

    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray
    _csr: sp.csr_matrix = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        offsets = np.ascontiguousarray(self.row_offsets, dtype=np.int64)
        cols = np.ascontiguousarray(self.col_indices, dtype=np.int64)
        vals = np.ascontiguousarray(self.values, dtype=np.complex128)
        if offsets.shape != (self.n_rows + 1,):
            raise ValueError("row_offsets must have length n_rows + 1")
        if offsets[0] != 0 or np.any(np.diff(offsets) < 0):
            raise ValueError("row_offsets must start at 0 and be nondecreasing")
        if not (offsets[-1] == cols.size == vals.size):
            raise ValueError("row_offsets[-1], len(col_indices) and len(values) differ")
        if cols.size and (cols.min() < 0 or cols.max() >= self.n_cols):
            raise ValueError("column index out of range")
        # strictly increasing columns inside every row
        rows = np.repeat(np.arange(self.n_rows), np.diff(offsets))
        if np.any((rows[1:] == rows[:-1]) & (np.diff(cols) <= 0)):
            raise ValueError("col_indices must be strictly increasing within each row")
        for name, arr in (("row_offsets", offsets), ("col_indices", cols), ("values", vals)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        csr = sp.csr_matrix((vals, cols, offsets), shape=(self.n_rows, self.n_cols))
        object.__setattr__(self, "_csr", csr)

    @classmethod
    def from_scipy(cls, m):
        csr = sp.csr_matrix(m, dtype=np.complex128)
        csr.sum_duplicates()
        csr.sort_indices()
        return cls(csr.shape[0], csr.shape[1], csr.indptr, csr.indices, csr.data)

    @classmethod
    def from_dense(cls, a):
        return cls.from_scipy(sp.csr_matrix(np.asarray(a, dtype=np.complex128)))

    @classmethod
    def identity(cls, n):
        return cls.from_scipy(sp.identity(n, dtype=np.complex128, format="csr"))

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self):
        return int(self.values.size)

    def to_scipy(self):
        """Shared read-only CSR view; callers must not mutate it."""
        return self._csr

    def to_dense(self):
        return self._csr.toarray()

    def transpose(self):
        return ComplexSparseMatrix.from_scipy(self._csr.T.tocsr())

    def entries(self):
        """Set of (row, col, value) triples, the identity used by round-trip checks."""
        rows = np.repeat(np.arange(self.n_rows), np.diff(self.row_offsets))
        return set(zip(rows.tolist(), self.col_indices.tolist(), self.values.tolist()))

    def __matmul__(self, x):
        return spmv(self, x)


@dataclass(frozen=True, eq=False)
class MatrixPencil:
    A: ComplexSparseMatrix
    B: ComplexSparseMatrix

    def __post_init__(self):
        if self.A.n_rows != self.A.n_cols or self.B.n_rows != self.B.n_cols:
            raise ValueError("pencil matrices must be square")
        if self.A.shape != self.B.shape:
            raise ValueError("pencil matrices must have identical dimensions")

    @property
    def n(self):
        return self.A.n_rows


@dataclass(frozen=True)
class DiskRegion:
    center: complex
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "center", complex(self.center))
        object.__setattr__(self, "radius", float(self.radius))

    def contains(self, z):
        return np.abs(np.asarray(z) - self.center) < self.radius

    @property
    def scale(self):
        return abs(self.center) + self.radius


@dataclass(frozen=True)
class Annulus:
    inner_radius: float
    outer_radius: float

    def __post_init__(self):
        if not 0 < self.inner_radius < self.outer_radius:
            raise ValueError("annulus needs 0 < inner_radius < outer_radius")


def spmv(m, x):
    x = np.asarray(x)
    if x.shape[0] != m.n_cols:
        raise ValueError(f"dimension mismatch: matrix has {m.n_cols} columns, vector {x.shape[0]}")
    return m.to_scipy() @ x


# ---------------------------------------------------------------- Matrix Market

_FIELDS = ("real", "integer", "complex")
_SYMMETRIES = ("general", "symmetric", "hermitian", "skew-symmetric")


def load_matrix_market(path):
    path = Path(path)
    with path.open() as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise MatrixMarketError("empty file", 1)
    header = lines[0].split()
    if len(header) != 5 or header[0] != "%%MatrixMarket" or header[1].lower() != "matrix":
        raise MatrixMarketError("missing '%%MatrixMarket matrix' header", 1)
    fmt, fld, sym = (h.lower() for h in header[2:])
    if fmt != "coordinate":
        raise MatrixMarketError(f"unsupported format {fmt!r}", 1)
    if fld not in _FIELDS:
        raise MatrixMarketError(f"unsupported field {fld!r}", 1)
    if sym not in _SYMMETRIES:
        raise MatrixMarketError(f"unsupported symmetry {sym!r}", 1)
    if fld != "complex" and sym == "hermitian":
        raise MatrixMarketError("hermitian symmetry requires complex field", 1)

    i = 1
    while i < len(lines) and (not lines[i].strip() or lines[i].lstrip().startswith("%")):
        i += 1
    if i == len(lines):
        raise MatrixMarketError("missing size line", i)
    try:
        n_rows, n_cols, nnz = (int(t) for t in lines[i].split())
    except ValueError:
        raise MatrixMarketError("size line must hold three integers", i + 1) from None
    if sym != "general" and n_rows != n_cols:
        raise MatrixMarketError("symmetric storage requires a square matrix", i + 1)

    ncols_expected = 4 if fld == "complex" else 3
    entries = {}
    seen = 0
    for lineno in range(i + 2, len(lines) + 1):
        text = lines[lineno - 1].strip()
        if not text or text.startswith("%"):
            continue
        tok = text.split()
        if len(tok) != ncols_expected:
            raise MatrixMarketError(f"expected {ncols_expected} fields, got {len(tok)}", lineno)
        try:
            r, c = int(tok[0]) - 1, int(tok[1]) - 1
            if fld == "complex":
                v = complex(float(tok[2]), float(tok[3]))
            elif fld == "integer":
                v = complex(int(tok[2]))
            else:
                v = complex(float(tok[2]))
        except ValueError:
            raise MatrixMarketError("unparseable entry", lineno) from None
        if not (0 <= r < n_rows and 0 <= c < n_cols):
            raise MatrixMarketError(f"index ({r + 1}, {c + 1}) out of bounds", lineno)
        if sym != "general" and c > r:
            raise MatrixMarketError("upper-triangle entry in symmetric storage", lineno)
        if sym == "skew-symmetric" and r == c:
            raise MatrixMarketError("diagonal entry in skew-symmetric storage", lineno)
        if (r, c) in entries:
            raise MatrixMarketError(f"duplicate entry ({r + 1}, {c + 1})", lineno)
        entries[(r, c)] = v
        seen += 1
        if sym != "general" and r != c:
            mirror = {"symmetric": v, "hermitian": v.conjugate(), "skew-symmetric": -v}[sym]
            entries[(c, r)] = mirror
    if seen != nnz:
        raise MatrixMarketError(f"header declares {nnz} entries, found {seen}", i + 1)

    if entries:
        keys = np.array(list(entries.keys()), dtype=np.int64)
        vals = np.array(list(entries.values()), dtype=np.complex128)
    else:
        keys = np.zeros((0, 2), dtype=np.int64)
        vals = np.zeros(0, dtype=np.complex128)
    coo = sp.coo_matrix((vals, (keys[:, 0], keys[:, 1])), shape=(n_rows, n_cols))
    csr = coo.tocsr()
    csr.sort_indices()
    # no sum_duplicates: entries are unique by construction, explicit zeros are kept
    return ComplexSparseMatrix(n_rows, n_cols, csr.indptr, csr.indices, csr.data)


def write_matrix_market(m, path):
    rows = np.repeat(np.arange(m.n_rows), np.diff(m.row_offsets))
    cols = m.col_indices
    order = np.lexsort((rows, cols))
    with Path(path).open("w") as fh:
        fh.write("%%MatrixMarket matrix coordinate complex general\n")
        fh.write(f"{m.n_rows} {m.n_cols} {m.nnz}\n")
        for k in order:
            v = m.values[k]
            fh.write(f"{rows[k] + 1} {cols[k] + 1} {float(v.real)!r} {float(v.imag)!r}\n")


# ---------------------------------------------------------------- generators

def _laplacian_1d(n):
    main = np.full(n, 2.0)
    main[0] = main[-1] = 1.0
    off = -np.ones(n - 1)
    return (n / 100.0) * sp.diags([off, main, off], [-1, 0, 1], format="csr")


def gen_power_grid(n_x, seed=0):
    """RLC power-grid pencil (-G, C) on an n_x x n_x x 10 node lattice.

    The pencil is posed for the circuit poles s with (G + s C) x = 0, so its
    first matrix is -G.

    Node (i, j, l) has index (i * n_x + j) * 10 + l. The 20 port columns sit on
    the edges (., 0, 0) and (., n_x - 1, 9), ten evenly spaced nodes per edge.
    Each of the 2 n_x^2 inductors joins an interior node of its layer to one
    of its four in-layer neighbours.
    """
    if n_x < 2:
        raise ValueError("n_x must be at least 2")
    n_layers = 10
    n_nodes = n_x * n_x * n_layers
    n_ind = 2 * n_x * n_x
    n_branch = 20 + n_ind
    rng = make_rng(seed)

    eye_x = sp.identity(n_x, format="csr")
    eye_l = sp.identity(n_layers, format="csr")
    lx = _laplacian_1d(n_x)
    g11 = (sp.kron(sp.kron(lx, eye_x), eye_l)
           + sp.kron(sp.kron(eye_x, lx), eye_l)
           + 0.1 * sp.kron(sp.kron(eye_x, eye_x), _laplacian_1d(n_layers)))

    def node(i, j, l):
        return (i * n_x + j) * n_layers + l

    rows, cols, vals = [], [], []
    pos = np.unique(np.round(np.linspace(0, n_x - 1, 10)).astype(int))
    # n_x < 10 cannot host ten distinct nodes per edge; ports then repeat nodes
    pos = np.resize(pos, 10) if pos.size < 10 else pos
    for p, i in enumerate(pos):
        rows += [node(i, 0, 0), node(i, n_x - 1, n_layers - 1)]
        cols += [p, 10 + p]
        vals += [1.0, 1.0]

    lo, hi = (1, n_x - 2) if n_x > 2 else (0, n_x - 1)
    steps = np.array([(1, 0), (-1, 0), (0, 1), (0, -1)])
    ii = rng.integers(lo, hi + 1, size=n_ind)
    jj = rng.integers(lo, hi + 1, size=n_ind)
    ll = rng.integers(0, n_layers, size=n_ind)
    dirs = rng.integers(0, 4, size=n_ind)
    for q in range(n_ind):
        di, dj = steps[dirs[q]]
        ni, nj = ii[q] + di, jj[q] + dj
        if not (0 <= ni < n_x and 0 <= nj < n_x):  # only reachable when n_x == 2
            ni, nj = ii[q] - di, jj[q] - dj
        rows += [node(ii[q], jj[q], ll[q]), node(ni, nj, ll[q])]
        cols += [20 + q, 20 + q]
        vals += [1.0, -1.0]
    g12 = sp.csr_matrix((vals, (rows, cols)), shape=(n_nodes, n_branch))

    inductance = np.zeros(n_branch)
    inductance[20:] = rng.uniform(0.5, 1.5, size=n_ind) * n_x * 1e-4

    G = sp.bmat([[g11, g12], [-g12.T, None]], format="csr")
    C = sp.block_diag([1e-3 * sp.identity(n_nodes), sp.diags(inductance)], format="csr")
    C.eliminate_zeros()
    return MatrixPencil(ComplexSparseMatrix.from_scipy(-G), ComplexSparseMatrix.from_scipy(C))


def gen_spectrum_pencil(inside, outside, seed=0, max_attempts=10, cond_limit=1e12):
    """Dense pencil (X diag(lam) X^-1, I) with a prescribed spectrum.

    Returns the pencil and the eigenvalue array (inside followed by outside).
    X = X1 + i X2 with standard Gaussian X1, X2; a new seed is tried whenever
    X is numerically singular.
    """
    lam = np.concatenate([np.asarray(inside, dtype=complex).ravel(),
                          np.asarray(outside, dtype=complex).ravel()])
    inside_set = set(np.asarray(inside, dtype=complex).ravel().tolist())
    if inside_set & set(np.asarray(outside, dtype=complex).ravel().tolist()):
        raise ValueError("inside and outside eigenvalue lists must be disjoint")
    n = lam.size
    for attempt in range(max_attempts):
        rng = make_rng(seed + attempt)
        X = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        if np.linalg.cond(X) < cond_limit:
            A = np.linalg.solve(X.T, (X * lam).T).T
            pencil = MatrixPencil(ComplexSparseMatrix.from_dense(A), ComplexSparseMatrix.identity(n))
            return pencil, lam
    raise np.linalg.LinAlgError(f"eigenvector matrix singular for seeds {seed}..{seed + max_attempts - 1}")


# ---------------------------------------------------------------- residuals

def relative_residual(pencil, region, lam, x):
    """||A x - lam B x|| / ((|c| + r) ||B x||)."""
    x = np.asarray(x)
    bx = spmv(pencil.B, x)
    nb = np.linalg.norm(bx)
    if nb == 0:
        raise DefectiveDirectionError("B x vanishes; residual undefined")
    return float(np.linalg.norm(spmv(pencil.A, x) - lam * bx) / (region.scale * nb))


def relative_residuals(pencil, region, lam, X):
    """Column-wise relative residuals for a block of eigenvector candidates."""
    X = np.asarray(X)
    AX = pencil.A.to_scipy() @ X
    BX = pencil.B.to_scipy() @ X
    nb = np.linalg.norm(BX, axis=0)
    num = np.linalg.norm(AX - BX * np.asarray(lam)[None, :], axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = num / (region.scale * nb)
    return np.where(nb == 0, np.inf, out)


def left_residuals(pencil, region, lam, Yl):
    """Relative residuals ||y* A - lam y* B|| / ((|c| + r) ||y* B||) per column."""
    Yl = np.asarray(Yl)
    YA = pencil.A.to_scipy().conj().T @ Yl
    YB = pencil.B.to_scipy().conj().T @ Yl
    nb = np.linalg.norm(YB, axis=0)
    num = np.linalg.norm(YA - YB * np.conj(np.asarray(lam))[None, :], axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = num / (region.scale * nb)
    return np.where(nb == 0, np.inf, out)

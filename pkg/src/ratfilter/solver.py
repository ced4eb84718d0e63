"""Interior eigensolvers for A x = lam B x inside a disk.

Three drivers share one two-sided projection step:

* ``solve_simple``: subspace iteration with the k-pole quadrature filter.
* ``solve_fixed_composite``: subspace iteration with the composite filter,
  k1 direct solves inside and k2 GMRES shifts outside.
* ``solve_adaptive``: a single filtered block, doubling k2 on the stored
  Krylov spaces until the projected pairs converge.
"""
from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as sla

from .dense_eig import orth, reduced_solve
from .factorization import SingularPoleError, ShiftedFactor, build_inner_operator
from .msgmres import KrylovWorkspace, combine_solutions, extend_shifts, solve_all_shifts
from .pencil import DiskRegion, left_residuals, make_rng, relative_residuals
from .rational import composite_coeffs, gauss_rule, trapezoid_rule

log = logging.getLogger(__name__)

SIGMA_OFFSET = 1.372 + 0.891j
MODES = ("simple", "composite", "adaptive")
LEFT_METHODS = ("inverse", "projected")


class InsufficientSubspaceError(RuntimeError):
    pass


class GMRESConvergenceError(RuntimeError):
    pass


@dataclass
class SolverConfig:
    region: DiskRegion
    s_estimate: int
    mode: str = "composite"
    rho: float = 1.2
    n_col: int | None = None
    k1: int = 8
    k2: int | None = None
    k2_max: int = 512
    rule: str = "trapezoid"
    sigma: complex | None = None
    tol: float = 1e-8
    ghost_tol: float = 1e-2
    gmres_tol: float = 1e-9
    gmres_max_iter: int = 200
    max_outer: int = 50
    seed: int = 0
    threads: int = 1
    left_vectors: str = "inverse"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.left_vectors not in LEFT_METHODS:
            raise ValueError(f"left_vectors must be one of {LEFT_METHODS}")
        if self.n_col is None:
            self.n_col = int(np.floor(self.rho * self.s_estimate))
        if self.k2 is None:
            self.k2 = self.k1 if self.mode == "adaptive" else 1
        if self.sigma is None:
            self.sigma = self.region.center + self.region.radius * SIGMA_OFFSET
        self.sigma = complex(self.sigma)
        if self.n_col < self.s_estimate:
            raise ValueError("n_col must be at least s_estimate")
        if not self.tol < self.ghost_tol:
            raise ValueError("tol must be below ghost_tol")
        if self.k1 < 1 or self.k2 < 1:
            raise ValueError("k1 and k2 must be positive")
        if self.mode == "adaptive":
            ratio = self.k2_max // self.k2
            if self.k2_max % self.k2 or ratio & (ratio - 1):
                raise ValueError("k2_max must be a power-of-two multiple of the initial k2")

    def to_dict(self):
        d = asdict(self)
        d["region"] = {"center": [self.region.center.real, self.region.center.imag],
                       "radius": self.region.radius}
        d["sigma"] = [self.sigma.real, self.sigma.imag]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        reg = d.pop("region")
        d["region"] = DiskRegion(complex(*reg["center"]), reg["radius"])
        if d.get("sigma") is not None:
            d["sigma"] = complex(*d["sigma"])
        return cls(**d)


@dataclass
class IterationTrace:
    """Per outer iteration (or per doubling round in adaptive mode)."""

    eigenvalues: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    p: list = field(default_factory=list)
    max_residual: list = field(default_factory=list)
    gmres_iterations: list = field(default_factory=list)
    g_applications: list = field(default_factory=list)
    solves: list = field(default_factory=list)
    k2: list = field(default_factory=list)

    def __len__(self):
        return len(self.p)

    def gmres_total(self, t):
        its = self.gmres_iterations[t]
        return int(np.sum(its)) if its is not None else 0

    def rows(self):
        for t in range(len(self)):
            yield {"t": t + 1, "p": self.p[t], "max_residual": self.max_residual[t],
                   "k2": self.k2[t], "gmres_total": self.gmres_total(t)}

    def to_dict(self):
        return {
            "t": list(range(1, len(self) + 1)),
            "p": list(self.p),
            "max_residual": [float(r) for r in self.max_residual],
            "k2": list(self.k2),
            "gmres_total": [self.gmres_total(t) for t in range(len(self))],
            "gmres_iterations": [None if g is None else [int(x) for x in g] for g in self.gmres_iterations],
            "g_applications": list(self.g_applications),
            "solves": list(self.solves),
        }


@dataclass(eq=False)
class EigenReport:
    eigenvalues: np.ndarray
    right_vectors: np.ndarray
    left_vectors: np.ndarray
    residuals: np.ndarray
    left_residuals: np.ndarray
    converged: bool
    trace: IterationTrace
    config: SolverConfig
    factorizations: int = 0
    left_factorizations: int = 0
    wall_time: float = 0.0

    @property
    def iterations(self):
        return len(self.trace)

    def to_dict(self):
        return {
            "schema": 1,
            "mode": self.config.mode,
            "converged": bool(self.converged),
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
            "residuals": [float(r) for r in self.residuals],
            "left_residuals": [float(r) for r in self.left_residuals],
            "iterations": self.iterations,
            "factorizations": self.factorizations,
            "left_factorizations": self.left_factorizations,
            "wall_time": self.wall_time,
            "config": self.config.to_dict(),
            "trace": self.trace.to_dict(),
        }


# ---------------------------------------------------------------- building blocks

def ghost_filter(lam, residuals, region, ghost_tol):
    """Indices of pairs inside the region with residual below ghost_tol."""
    lam = np.asarray(lam)
    residuals = np.asarray(residuals)
    finite = np.isfinite(lam)
    inside = np.zeros(lam.shape, dtype=bool)
    inside[finite] = region.contains(lam[finite])
    idx = np.nonzero(inside & (residuals < ghost_tol))[0]
    return idx, int(idx.size)


def check_convergence(trace, tol, min_history=2):
    """p unchanged over the last two evaluations and all filtered residuals <= tol."""
    if len(trace) < min_history or len(trace) == 0:
        return False
    if trace.p[-1] == 0:
        return False
    if len(trace) >= 2 and trace.p[-1] != trace.p[-2]:
        return False
    return trace.max_residual[-1] <= tol


@dataclass(eq=False)
class Projection:
    eigenvalues: np.ndarray
    X: np.ndarray
    Xl: np.ndarray
    residuals: np.ndarray


def project(pencil, U, sigma, region, min_rank=1):
    """Two-sided Schur-vector projection of the filtered block U."""
    V = orth(U)
    if V.shape[1] < min_rank:
        raise InsufficientSubspaceError(f"filtered block has rank {V.shape[1]} < {min_rank}")
    AV = pencil.A.to_scipy() @ V
    BV = pencil.B.to_scipy() @ V
    W = orth(AV - sigma * BV)
    if W.shape[1] != V.shape[1]:
        W, _ = sla.qr(AV - sigma * BV, mode="economic")
    red = reduced_solve(W.conj().T @ AV, W.conj().T @ BV)
    X = V @ (red.schur.P_R @ red.V_R)
    Xl = W @ (red.schur.P_L @ red.V_L)
    lam = red.eigenvalues
    res = np.full(lam.shape, np.inf)
    ok = np.isfinite(lam)
    if np.any(ok):
        res[ok] = relative_residuals(pencil, region, lam[ok], X[:, ok])
    return Projection(lam, X, Xl, res)


def random_block(n, n_col, seed):
    rng = make_rng(seed)
    Y = rng.standard_normal((n, n_col)) + 1j * rng.standard_normal((n, n_col))
    return orth(Y)


def quadrature(cfg, k):
    if cfg.rule == "gauss":
        return gauss_rule(cfg.region, k)
    return trapezoid_rule(cfg.region, k)


class SimpleFilter:
    def __init__(self, G):
        self.G = G

    def __call__(self, Y):
        return self.G(Y), None


class CompositeFilter:
    """sum_j c_j (G - s_j I)^{-1} G(Y) + direct_term G(Y), one GMRES space per column."""

    def __init__(self, G, k2, gmres_tol=1e-9, max_iter=200, threads=1):
        self.G = G
        self.coeffs = composite_coeffs(k2)
        self.gmres_tol = gmres_tol
        self.max_iter = max_iter
        self.threads = threads

    def _column(self, b):
        if self.coeffs.shifts.size == 0 or not np.any(b):
            return self.coeffs.direct_term * b, 0
        res, ws = solve_all_shifts(self.G, b, self.coeffs.shifts, self.gmres_tol,
                                   self.max_iter, workspace=True)
        if not np.all(res.converged):
            bad = int(np.argmax(res.relative_residuals))
            raise GMRESConvergenceError(
                f"shift {res.shifts[bad]:.4g} stalled at relative residual "
                f"{res.relative_residuals[bad]:.3g} after {ws.n} iterations")
        return combine_solutions(res, self.coeffs, b), ws.op_applications

    def __call__(self, Y):
        Yt = self.G(Y)
        cols = [Yt[:, j] for j in range(Yt.shape[1])]
        if self.threads > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                out = list(pool.map(self._column, cols))
        else:
            out = [self._column(b) for b in cols]
        U = np.column_stack([u for u, _ in out])
        return U, np.array([it for _, it in out], dtype=int)


# ---------------------------------------------------------------- drivers

def _record(trace, proj, idx, p, gmres, G, k2):
    trace.eigenvalues.append(proj.eigenvalues.copy())
    trace.residuals.append(proj.residuals.copy())
    trace.p.append(p)
    trace.max_residual.append(float(proj.residuals[idx].max()) if p else float("inf"))
    trace.gmres_iterations.append(gmres)
    trace.g_applications.append(G.column_count)
    trace.solves.append(G.solve_count)
    trace.k2.append(k2)


def refine_left_vectors(pencil, lam, Y0, steps=2):
    """Inverse iteration on the adjoint pencil: y <- (A - lam B)^{-H} B^H y.

    The projected vectors W P_L V_L only satisfy y* A v = lam y* B v for v in
    range(V); a couple of adjoint solves at the converged lam turn them into
    left eigenvectors of the full pencil. One factorization per eigenvalue.
    """
    BH = pencil.B.to_scipy().conj().T
    Y = np.array(Y0, dtype=complex)
    for i, z in enumerate(lam):
        try:
            f = ShiftedFactor(pencil, z)
        except SingularPoleError:
            f = ShiftedFactor(pencil, z + 1e-12 * max(1.0, abs(z)))
        y = Y[:, i] / np.linalg.norm(Y[:, i])
        for _ in range(steps):
            y = f.solve(BH @ y, adjoint=True)
            y /= np.linalg.norm(y)
        Y[:, i] = y
    return Y


def _report(pencil, cfg, proj, idx, converged, trace, G, t0):
    lam = proj.eigenvalues[idx]
    Xl = proj.Xl[:, idx]
    n_left = 0
    if cfg.left_vectors == "inverse" and idx.size:
        Xl = refine_left_vectors(pencil, lam, Xl)
        n_left = idx.size
    lres = left_residuals(pencil, cfg.region, lam, Xl) if idx.size else np.zeros(0)
    return EigenReport(lam, proj.X[:, idx], Xl, proj.residuals[idx], lres, converged, trace,
                       cfg, factorizations=G.k1, left_factorizations=n_left,
                       wall_time=time.perf_counter() - t0)


def subspace_iterate(filter_fn, pencil, cfg, Y0=None, G=None, k2_label=1):
    """Subspace iteration with a filter and two-sided Schur projection.

    ``filter_fn(Y)`` returns the filtered block and the per-column GMRES
    iteration counts (or None).
    """
    t0 = time.perf_counter()
    if cfg.n_col > pencil.n:
        raise ValueError("n_col exceeds the problem dimension")
    Y = random_block(pencil.n, cfg.n_col, cfg.seed) if Y0 is None else np.asarray(Y0, dtype=complex)
    trace = IterationTrace()
    G = G if G is not None else getattr(filter_fn, "G", None) or _NullCounter()
    converged = False
    proj = idx = None
    for t in range(cfg.max_outer):
        U, gmres = filter_fn(Y)
        proj = project(pencil, U, cfg.sigma, cfg.region, min_rank=cfg.s_estimate)
        idx, p = ghost_filter(proj.eigenvalues, proj.residuals, cfg.region, cfg.ghost_tol)
        _record(trace, proj, idx, p, gmres, G, k2_label)
        log.debug("iteration %d: p=%d max residual %.3e", t + 1, p, trace.max_residual[-1])
        if check_convergence(trace, cfg.tol):
            converged = True
            break
        Y = proj.X
    return _report(pencil, cfg, proj, idx, converged, trace, G, t0)


class _NullCounter:
    k1 = 0
    column_count = 0
    solve_count = 0


def solve_simple(pencil, cfg):
    G = build_inner_operator(pencil, quadrature(cfg, cfg.k1), threads=cfg.threads)
    return subspace_iterate(SimpleFilter(G), pencil, cfg, G=G, k2_label=1)


def solve_fixed_composite(pencil, cfg):
    G = build_inner_operator(pencil, trapezoid_rule(cfg.region, cfg.k1), threads=cfg.threads)
    filt = CompositeFilter(G, cfg.k2, cfg.gmres_tol, cfg.gmres_max_iter, cfg.threads)
    return subspace_iterate(filt, pencil, cfg, G=G, k2_label=cfg.k2)


class AdaptiveState:
    """Filtered block, Krylov workspaces and accumulated U of the doubling driver."""

    def __init__(self, G, Yt, gmres_tol, max_iter):
        self.G = G
        self.Yt = Yt
        self.workspaces = [KrylovWorkspace(G, Yt[:, j], gmres_tol, max_iter) if np.any(Yt[:, j]) else None
                           for j in range(Yt.shape[1])]
        self.gmres_tol = gmres_tol

    def filtered(self, k2, threads=1):
        """R_{k1 k2}(B^{-1} A) Y from the stored spaces, and per-column Krylov sizes."""
        coeffs = composite_coeffs(k2)

        def column(j):
            ws = self.workspaces[j]
            if ws is None:
                return coeffs.direct_term * self.Yt[:, j], 0
            if coeffs.shifts.size == 0:
                return coeffs.direct_term * self.Yt[:, j], ws.op_applications
            res = extend_shifts(ws, coeffs.shifts, self.gmres_tol)
            if not np.all(res.converged):
                bad = int(np.argmax(res.relative_residuals))
                raise GMRESConvergenceError(
                    f"column {j}: shift {res.shifts[bad]:.4g} stalled at relative residual "
                    f"{res.relative_residuals[bad]:.3g} after {ws.n} iterations")
            return combine_solutions(res, coeffs, self.Yt[:, j]), ws.op_applications

        n = self.Yt.shape[1]
        if threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                out = list(pool.map(column, range(n)))
        else:
            out = [column(j) for j in range(n)]
        return np.column_stack([u for u, _ in out]), np.array([it for _, it in out], dtype=int)


def solve_adaptive(pencil, cfg):
    """Filter a random block once, then double k2 until the projection converges.

    Every round re-solves the full shift set of the current k2 against the
    stored Krylov spaces; the spaces grow only when a new shift needs it.
    """
    t0 = time.perf_counter()
    G = build_inner_operator(pencil, trapezoid_rule(cfg.region, cfg.k1), threads=cfg.threads)
    Y = random_block(pencil.n, cfg.n_col, cfg.seed)
    state = AdaptiveState(G, G(Y), cfg.gmres_tol, cfg.gmres_max_iter)
    trace = IterationTrace()
    k2 = cfg.k2
    converged = False
    proj = idx = None
    while k2 <= cfg.k2_max:
        U, krylov = state.filtered(k2, cfg.threads)
        proj = project(pencil, U, cfg.sigma, cfg.region, min_rank=cfg.s_estimate)
        idx, p = ghost_filter(proj.eigenvalues, proj.residuals, cfg.region, cfg.ghost_tol)
        _record(trace, proj, idx, p, krylov, G, k2)
        log.debug("k2=%d: p=%d max residual %.3e", k2, p, trace.max_residual[-1])
        if check_convergence(trace, cfg.tol, min_history=1):
            converged = True
            break
        k2 *= 2
    return _report(pencil, cfg, proj, idx, converged, trace, G, t0)


def solve(pencil, cfg):
    return {"simple": solve_simple, "composite": solve_fixed_composite,
            "adaptive": solve_adaptive}[cfg.mode](pencil, cfg)


# ---------------------------------------------------------------- diagnostics

def match_eigenvalues(found, reference, cap):
    """Greedy nearest pairing; returns (pairs, unmatched_found, unmatched_reference)."""
    found = list(np.asarray(found, dtype=complex))
    ref = list(np.asarray(reference, dtype=complex))
    cand = sorted((abs(f - r), i, j) for i, f in enumerate(found) for j, r in enumerate(ref))
    used_f, used_r, pairs = set(), set(), []
    for d, i, j in cand:
        if d > cap:
            break
        if i in used_f or j in used_r:
            continue
        used_f.add(i)
        used_r.add(j)
        pairs.append((i, j, d))
    return (pairs, [i for i in range(len(found)) if i not in used_f],
            [j for j in range(len(ref)) if j not in used_r])


def eigenvalue_ratio(filter_values, inside, n_col):
    """max_{i > n_col} |R(lam_(i))| / min_{lam in D} |R(lam)| with |R| sorted descending.

    Ties keep the original eigenvalue order.
    """
    mag = np.abs(np.asarray(filter_values))
    order = np.argsort(-mag, kind="stable")
    tail = mag[order[n_col:]]
    if tail.size == 0:
        return 0.0
    return float(tail.max() / mag[np.asarray(inside)].min())


# ---------------------------------------------------------------- serialization

TRACE_COLUMNS = ("t", "p", "max_residual", "k2", "gmres_total")


def write_report_json(report, path):
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2)


def load_report_json(path):
    """Load and validate a report written by ``write_report_json``."""
    with open(path) as fh:
        d = json.load(fh)
    if d.get("schema") != 1:
        raise ValueError(f"unsupported report schema {d.get('schema')!r}")
    for key in ("eigenvalues", "residuals", "converged", "trace"):
        if key not in d:
            raise ValueError(f"report is missing {key!r}")
    if len(d["eigenvalues"]) != len(d["residuals"]):
        raise ValueError("eigenvalue and residual counts differ")
    d["eigenvalues"] = np.array([complex(re, im) for re, im in d["eigenvalues"]])
    return d


def write_trace_csv(trace, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for row in trace.rows():
            w.writerow([row["t"], row["p"], f"{row['max_residual']:.17g}", row["k2"], row["gmres_total"]])


def read_trace_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and tuple(rows[0]) != TRACE_COLUMNS:
        raise ValueError("unexpected trace columns")
    return [{"t": int(r["t"]), "p": int(r["p"]), "max_residual": float(r["max_residual"]),
             "k2": int(r["k2"]), "gmres_total": int(r["gmres_total"])} for r in rows]

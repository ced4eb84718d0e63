"""ratfilter command line: generate pencils, analyse filters, solve, benchmark."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dense_eig import QZConvergenceError
from .factorization import SingularPoleError
from .pencil import (DiskRegion, MatrixMarketError, MatrixPencil, gen_power_grid, gen_spectrum_pencil,
                     load_matrix_market, write_matrix_market)
from .rational import (default_half_width, filter_map, gauss_rule, optimal_ratio, separation_ratio_closed,
                       separation_ratio_grid, trapezoid_rule, zolotarev_eval, zolotarev_params)
from .solver import (GMRESConvergenceError, InsufficientSubspaceError, SolverConfig, solve,
                     write_report_json, write_trace_csv)

EXIT_OK = 0
EXIT_NOT_CONVERGED = 2
EXIT_INPUT = 3
EXIT_NUMERICAL = 4

log = logging.getLogger("ratfilter")


@dataclass
class RunManifest:
    command: str
    config: dict
    inputs: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    seed: int = 0

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))

    def write(self, path):
        Path(path).write_text(self.to_json())


def parse_complex(text):
    return complex(text.strip().replace(" ", "").replace("i", "j"))


def parse_complex_list(text):
    """Comma separated complex numbers, or @path to a file with one per line."""
    if text.startswith("@"):
        items = Path(text[1:]).read_text().split()
    else:
        items = [t for t in text.split(",") if t.strip()]
    return [parse_complex(t) for t in items]


def parse_int_list(text):
    return [int(t) for t in text.split(",") if t.strip()]


def read_config_file(path):
    """Flat ``key = value`` lines; '#' starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


# ---------------------------------------------------------------- gen

def cmd_gen(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    a_path, b_path = out / "A.mtx", out / "B.mtx"
    outputs = [str(a_path), str(b_path)]
    if args.kind == "powergrid":
        pencil = gen_power_grid(args.nx, seed=args.seed)
        params = {"nx": args.nx}
    else:
        inside = parse_complex_list(args.inside)
        outside = parse_complex_list(args.outside) if args.outside else []
        pencil, lam = gen_spectrum_pencil(inside, outside, seed=args.seed)
        truth = out / "truth.json"
        truth.write_text(json.dumps({"eigenvalues": [[z.real, z.imag] for z in lam],
                                     "n_inside": len(inside)}, indent=2))
        outputs.append(str(truth))
        params = {"inside": [[z.real, z.imag] for z in inside], "outside": [[z.real, z.imag] for z in outside]}
    write_matrix_market(pencil.A, a_path)
    write_matrix_market(pencil.B, b_path)
    RunManifest(f"gen {args.kind}", params, [], outputs, args.seed).write(out / "manifest.json")
    print(f"wrote {a_path} and {b_path} (n = {pencil.n})")
    return EXIT_OK


# ---------------------------------------------------------------- analyze-filter

def _filter_func(rule, k, a, b):
    if rule == "zolotarev":
        params = zolotarev_params(a, b)

        def func(z):
            z = np.asarray(z, dtype=complex)
            out = np.full(z.shape, np.nan, dtype=complex)
            ok = z != 0  # z = 0 is the pole of the composed map
            out[ok] = zolotarev_eval(params, k, z[ok])
            return out
        return func
    region = DiskRegion(0.0, 1.0)
    return trapezoid_rule(region, k) if rule == "trapezoid" else gauss_rule(region, k)


def ratio_rows(rule, ks, a, b, grid=None):
    rows = []
    for k in ks:
        if rule == "zolotarev":
            ratio = optimal_ratio(a, b, k)
        elif rule == "trapezoid" and grid is None:
            ratio = separation_ratio_closed(a, b, k)
        else:
            ratio = separation_ratio_grid(_filter_func(rule, k, a, b), a, b, grid or 1000)
        rows.append((rule, k, ratio))
    return rows


def cmd_analyze_filter(args):
    if not 0 < args.a < args.b:
        raise ValueError("need 0 < a < b")
    rows = ratio_rows(args.rule, parse_int_list(args.k), args.a, args.b, args.grid)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(["rule", "k", "ratio"])
        for rule, k, ratio in rows:
            w.writerow([rule, k, f"{ratio:.17g}"])
    finally:
        if args.out:
            fh.close()
    if args.map:
        k = rows[-1][1]
        hw = default_half_width(args.b)
        re, im, mag = filter_map(_filter_func(args.rule, k, args.a, args.b), 0.0, hw, args.map_grid)
        with open(args.map, "w", newline="") as mf:
            w = csv.writer(mf)
            w.writerow(["re", "im", "abs_R"])
            for x, y, v in zip(re, im, mag):
                w.writerow([f"{x:.17g}", f"{y:.17g}", f"{v:.17g}"])
    return EXIT_OK


# ---------------------------------------------------------------- solve / bench

def load_pencil(a_path, b_path):
    return MatrixPencil(load_matrix_market(a_path), load_matrix_market(b_path))


def config_from_args(args, mode):
    s = args.s if args.s is not None else args.ncol
    if s is None:
        raise ValueError("give --s (estimated eigenvalue count) or --ncol")
    return SolverConfig(
        region=DiskRegion(parse_complex(args.center), args.radius),
        s_estimate=s, mode=mode, rho=args.rho, n_col=args.ncol, k1=args.k1, k2=args.k2,
        k2_max=args.k2_max, rule=args.rule,
        sigma=parse_complex(args.sigma) if args.sigma else None,
        tol=args.tol, ghost_tol=args.ghost_tol, gmres_tol=args.gmres_tol,
        gmres_max_iter=args.gmres_max_iter, max_outer=args.max_outer, seed=args.seed,
        threads=args.threads, left_vectors=args.left_vectors)


def cmd_solve(args):
    pencil = load_pencil(args.A, args.B)
    cfg = config_from_args(args, args.mode)
    report = solve(pencil, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_report_json(report, out / "report.json")
    write_trace_csv(report.trace, out / "trace.csv")
    RunManifest("solve", cfg.to_dict(), [args.A, args.B],
                [str(out / "report.json"), str(out / "trace.csv")], cfg.seed).write(out / "manifest.json")
    status = "converged" if report.converged else "not converged"
    print(f"{status}: {len(report.eigenvalues)} eigenvalues after {report.iterations} iterations")
    for lam, res in zip(report.eigenvalues, report.residuals):
        print(f"  {lam.real: .12e} {lam.imag:+.12e}i   residual {res:.2e}")
    return EXIT_OK if report.converged else EXIT_NOT_CONVERGED


def accounting(report):
    t = report.trace
    return {
        "converged": bool(report.converged),
        "eigenvalue_count": len(report.eigenvalues),
        "iterations": report.iterations,
        "factorizations": report.factorizations,
        "left_factorizations": report.left_factorizations,
        "solves": t.solves[-1] if t.solves else 0,
        "g_applications": t.g_applications[-1] if t.g_applications else 0,
        "gmres_iterations": [None if g is None else [int(x) for x in g] for g in t.gmres_iterations],
        "gmres_totals": [t.gmres_total(i) for i in range(len(t))],
        "k2": list(t.k2),
        "max_residual": [float(r) for r in t.max_residual],
        "wall_time": report.wall_time,
    }


def cmd_bench(args):
    pencil = load_pencil(args.A, args.B)
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    result = {"schema": 1, "n": pencil.n, "modes": {}}
    all_ok = True
    for mode in modes:
        cfg = config_from_args(args, mode)
        report = solve(pencil, cfg)
        result["modes"][mode] = {"config": cfg.to_dict(), **accounting(report)}
        all_ok &= report.converged
        log.info("%s: %d iterations, %d G columns", mode, report.iterations,
                 result["modes"][mode]["g_applications"])
    text = json.dumps(result, indent=2)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)
    return EXIT_OK if all_ok else EXIT_NOT_CONVERGED


# ---------------------------------------------------------------- parser

def _solver_flags(p):
    p.add_argument("A", help="Matrix Market file for A")
    p.add_argument("B", help="Matrix Market file for B")
    p.add_argument("--config", help="flat key = value file; command line wins")
    p.add_argument("--center", default="0", help="region centre c, e.g. -260+1000i")
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--s", type=int, help="estimated number of eigenvalues in the region")
    p.add_argument("--rho", type=float, default=1.2)
    p.add_argument("--ncol", type=int)
    p.add_argument("--k1", type=int, default=8)
    p.add_argument("--k2", type=int)
    p.add_argument("--k2-max", type=int, default=512)
    p.add_argument("--rule", choices=("trapezoid", "gauss"), default="trapezoid")
    p.add_argument("--sigma", help="projection shift (default: generic point off the contour)")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--ghost-tol", type=float, default=1e-2)
    p.add_argument("--gmres-tol", type=float, default=1e-9)
    p.add_argument("--gmres-max-iter", type=int, default=200)
    p.add_argument("--max-outer", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--left-vectors", choices=("inverse", "projected"), default="inverse",
                   help="refine left vectors by adjoint inverse iteration, or keep the projected ones")


def build_parser():
    parser = argparse.ArgumentParser(prog="ratfilter", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="write a test pencil as Matrix Market files")
    gsub = gen.add_subparsers(dest="kind", required=True)
    pg = gsub.add_parser("powergrid")
    pg.add_argument("--nx", type=int, default=10)
    pg.add_argument("--seed", type=int, default=0)
    pg.add_argument("--out", default=".")
    sp = gsub.add_parser("spectrum")
    sp.add_argument("--inside", required=True, help="comma list or @file")
    sp.add_argument("--outside", default="", help="comma list or @file")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default=".")
    gen.set_defaults(func=cmd_gen)

    solve_p = sub.add_parser("solve", help="compute the eigenpairs inside a disk")
    _solver_flags(solve_p)
    solve_p.add_argument("--mode", choices=("simple", "composite", "adaptive"), default="composite")
    solve_p.add_argument("--out", default=".")
    solve_p.set_defaults(func=cmd_solve)

    af = sub.add_parser("analyze-filter", help="separation ratios and |R| maps")
    af.add_argument("--rule", choices=("trapezoid", "gauss", "zolotarev"), default="trapezoid")
    af.add_argument("--k", default="16", help="comma separated pole counts")
    af.add_argument("--a", type=float, default=1.0)
    af.add_argument("--b", type=float, default=1.1)
    af.add_argument("--grid", type=int, help="estimate on an n x n grid instead of the closed form")
    af.add_argument("--out", help="ratio CSV (default stdout)")
    af.add_argument("--map", help="also write an |R| grid CSV for the last k")
    af.add_argument("--map-grid", type=int, default=201)
    af.set_defaults(func=cmd_analyze_filter)

    bench = sub.add_parser("bench", help="operation counts for several modes")
    _solver_flags(bench)
    bench.add_argument("--modes", default="simple,composite,adaptive")
    bench.add_argument("--out", help="JSON path (default stdout)")
    bench.set_defaults(func=cmd_bench)
    return parser


def parse_args(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        values = read_config_file(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        sub.set_defaults(**values)
        args = parser.parse_args(argv)
    return args


def main(argv=None):
    try:
        args = parse_args(argv)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (SingularPoleError, GMRESConvergenceError, InsufficientSubspaceError, QZConvergenceError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, ValueError, MatrixMarketError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

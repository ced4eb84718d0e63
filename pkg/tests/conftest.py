import sys

import numpy as np
import pytest
import scipy.linalg as sla

from ratfilter.pencil import DiskRegion, gen_power_grid
from ratfilter.solver import SolverConfig, solve

GRID_SEED = 8
GRID_REGION = DiskRegion(-260 + 1000j, 115)


@pytest.fixture(scope="session")
def grid_pencil():
    return gen_power_grid(10, seed=GRID_SEED)


@pytest.fixture(scope="session")
def grid_oracle(grid_pencil):
    """In-region eigenvalues of the 1220 x 1220 pencil from LAPACK's dense QZ."""
    ev = sla.eigvals(grid_pencil.A.to_dense(), grid_pencil.B.to_dense())
    ev = ev[np.isfinite(ev)]
    return ev[GRID_REGION.contains(ev)]


@pytest.fixture(scope="session")
def grid_run(grid_pencil):
    """Cached solver runs on the grid pencil, keyed by configuration."""
    cache = {}

    def run(mode, **kw):
        key = (mode, tuple(sorted(kw.items())))
        if key not in cache:
            kw.setdefault("n_col", 24)
            cfg = SolverConfig(region=GRID_REGION, s_estimate=min(20, kw["n_col"]), mode=mode, **kw)
            cache[key] = solve(grid_pencil, cfg)
        return cache[key]

    return run


def pytest_terminal_summary(terminalreporter):
    mod = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None)
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, detail = results[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")

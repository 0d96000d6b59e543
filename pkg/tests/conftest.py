"""Shared fixtures: small grids, random leap-frog systems, hypothesis profile."""

from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import HealthCheck, settings

from fdtdmor.assembly import SystemMatrices, assemble
from fdtdmor.grid import EPS0, MU0, GaussianPulse, GridSpec, MaterialMap, ProbeSpec, SourceSpec

settings.register_profile(
    "fdtdmor", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("fdtdmor")


def line_1d(n: int = 31, dz: float = 0.01, eps_r: float = 1.0, source_at: int | None = None):
    """1-D PEC-terminated line with ``n`` cells; ``Ex`` source at node ``source_at``."""
    grid = GridSpec(1, (n,), (dz,))
    mats = MaterialMap.uniform(grid, eps_r=eps_r)
    src = []
    if source_at is not None:
        src = [SourceSpec("Ex", ((source_at,),), GaussianPulse(1e9))]
    return grid, mats, assemble(grid, mats, sources=src)


def cavity_2d(n: int = 12, d: float = 0.02):
    grid = GridSpec(2, (n, n), (d, d))
    mats = MaterialMap.uniform(grid)
    src = [SourceSpec("Ez", ((n // 3, n // 4),), GaussianPulse(1e9))]
    return grid, mats, assemble(grid, mats, sources=src)


def random_system(rng: np.random.Generator, n_e: int, n_h: int, lossy: bool = True,
                  n_inputs: int = 1, density: float = 0.3) -> SystemMatrices:
    """Random sparse leap-frog system with physical-scale material diagonals."""
    K = sp.random(n_e, n_h, density=density, random_state=rng, data_rvs=lambda k: rng.choice([-1.0, 1.0], k) / 0.01)
    K = K.tocsr()
    d_eps = EPS0 * rng.uniform(1.0, 4.0, n_e)
    d_mu = MU0 * rng.uniform(1.0, 2.0, n_h)
    if lossy:
        d_sig_e = rng.uniform(0.0, 0.05, n_e) * (rng.random(n_e) < 0.5)
        d_sig_m = d_sig_e.mean() * (MU0 / EPS0) * rng.uniform(0.0, 1.0, n_h) * (rng.random(n_h) < 0.5)
    else:
        d_sig_e = np.zeros(n_e)
        d_sig_m = np.zeros(n_h)
    rows = rng.choice(n_e + n_h, size=n_inputs, replace=False)
    B = sp.csr_matrix((-np.ones(n_inputs), (rows, np.arange(n_inputs))), shape=(n_e + n_h, n_inputs))
    return SystemMatrices(K=K, d_eps=d_eps, d_mu=d_mu, d_sig_e=d_sig_e, d_sig_m=d_sig_m, B=B, n_e=n_e, n_h=n_h)


def stable_dt(m: SystemMatrices, s: float = 0.9) -> float:
    """``s`` times the largest stable step of a leap-frog system (``2 / sigma_max``)."""
    from fdtdmor.assembly import max_scaled_singular_value

    return s * 2.0 / max_scaled_singular_value(m)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def cube_matrices():
    from fdtdmor.scenario import cube_demo, parse_scenario

    cfg = parse_scenario(cube_demo())
    return cfg, assemble(cfg.grid_spec(), cfg.material_map(), cfg.boundary_spec(), cfg.source_specs())


def probe(name, comp, idx):
    return ProbeSpec(name, comp, idx)


# acceptance verdicts, echoed in the terminal summary so they survive output capture
ACCEPTANCE_LINES: list[str] = []


def record_verdict(criterion: int, title: str, passed: bool, detail: str) -> None:
    line = f"criterion {criterion} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)

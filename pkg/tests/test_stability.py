"""Singular-value stability check, curl clipping, update spectra."""

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from conftest import line_1d, random_system, stable_dt
from fdtdmor.assembly import assemble, build_update_pair
from fdtdmor.errors import InvalidParameterError, InvariantViolation, SingularOperatorError
from fdtdmor.grid import BoundarySpec, GridSpec, MatchedAbsorber, MaterialMap, cfl_max_timestep
from fdtdmor.reduction import ProjectionBasis, ReducedModel, project
from fdtdmor.stability import (
    DEFAULT_GAMMA,
    StabilityReport,
    clip_curl,
    enforce_stability,
    enforce_stability_full,
    leapfrog_eigenvalues,
    reduced_stability_check,
    scaled_singular_values,
    update_eigenvalues,
    write_eigen_csv,
)


def _random_reduced(seed, n_e=24, n_h=28, k=10, lossy=False, s=3.0):
    """Randomly projected model at ``s`` times the full-system limit."""
    rng = np.random.default_rng(seed)
    m = random_system(rng, n_e, n_h, lossy=lossy, n_inputs=1)
    dt = stable_dt(m, s)
    V1 = np.linalg.qr(rng.standard_normal((n_e, k)))[0]
    V2 = np.linalg.qr(rng.standard_normal((n_h, k)))[0]
    return project(m, ProjectionBasis(V1, V2), dt)


def _scaled(model, K):
    ie = scipy.linalg.fractional_matrix_power(model.d_eps, -0.5).real
    im = scipy.linalg.fractional_matrix_power(model.d_mu, -0.5).real
    return ie @ K @ im


def test_default_gamma():
    assert DEFAULT_GAMMA == 0.9999


def test_report_invariants():
    red = _random_reduced(0)
    rep = reduced_stability_check(red, s_factor=3.0)
    s = rep.singular_values
    assert np.all(s >= 0) and np.all(np.diff(s) <= 0)
    assert rep.limit == 2.0 / red.dt
    assert rep.violating_count == int(np.sum(s >= 2.0 / red.dt))
    assert rep.s_factor == 3.0
    # against an independent square-root route
    assert np.allclose(s, scipy.linalg.svdvals(_scaled(red, red.K)), rtol=1e-10)


def test_below_cfl_no_violations_on_line_family():
    for n in (11, 21, 31):
        grid, mats, m = line_1d(n=n)
        dt = 0.99 * cfl_max_timestep(grid, mats)
        red = project(m, ProjectionBasis.identity(m.n_e, m.n_h), dt)
        assert reduced_stability_check(red).violating_count == 0
        # the largest scaled singular value still sits close to the bound
        assert reduced_stability_check(red).singular_values[0] > 0.9 * 2 / dt


def test_zero_curl_always_stable():
    red = ReducedModel(np.eye(3), np.eye(3), np.zeros((3, 3)), np.zeros((3, 3)), np.zeros((3, 3)),
                       np.ones((6, 1)), 1e3)
    rep = reduced_stability_check(red)
    assert np.all(rep.singular_values == 0) and rep.stable


def test_indefinite_mass_rejected():
    bad = ReducedModel(np.diag([1.0, -1.0]), np.eye(2), np.zeros((2, 2)), np.zeros((2, 2)), np.eye(2),
                       np.ones((4, 1)), 1.0)
    with pytest.raises(InvariantViolation):
        reduced_stability_check(bad)
    with pytest.raises(InvariantViolation):
        enforce_stability(bad)


@pytest.mark.parametrize("gamma", [0.0, 1.0, -0.5, 1.5])
def test_gamma_outside_open_interval(gamma):
    with pytest.raises(InvalidParameterError):
        enforce_stability(_random_reduced(1), gamma=gamma)


def test_no_clipping_leaves_curl_unchanged():
    red = _random_reduced(2, s=0.5)
    assert reduced_stability_check(red).singular_values[0] < DEFAULT_GAMMA * 2 / red.dt
    out = enforce_stability(red)
    assert np.linalg.norm(out.K - red.K) <= 1e-10 * np.linalg.norm(red.K)


def test_clip_svd_round_trip_without_shortcut():
    # a gamma just below the largest scaled value forces the SVD path; untouched directions round-trip
    red = _random_reduced(3, s=0.5)
    s = reduced_stability_check(red).singular_values
    cap_gamma = 0.5 * (s[0] + s[1]) * red.dt / 2
    assert 0 < cap_gamma < 1
    K2 = clip_curl(red.d_eps, red.d_mu, red.K, red.dt, cap_gamma)
    s2 = scaled_singular_values(red.d_eps, red.d_mu, K2)
    assert s2[0] == pytest.approx(cap_gamma * 2 / red.dt, rel=1e-10)
    assert np.allclose(s2[1:], s[1:], rtol=1e-10)


@given(seed=st.integers(0, 2**31), s=st.floats(1.05, 6.0), gamma=st.floats(0.5, 0.9999), lossy=st.booleans(),
       k=st.integers(2, 14))
def test_enforcement_properties(seed, s, gamma, lossy, k):
    red = _random_reduced(seed, k=k, lossy=lossy, s=s)
    pre = reduced_stability_check(red).singular_values
    cap = gamma * 2 / red.dt
    out = enforce_stability(red, gamma=gamma)
    post = reduced_stability_check(out).singular_values
    # max singular value after = min(pre max, cap)
    assert post[0] == pytest.approx(min(pre[0], cap), rel=1e-9)
    assert reduced_stability_check(out).violating_count == 0
    # only K changes
    for name in ("d_eps", "d_mu", "d_sig_e", "d_sig_m", "B"):
        assert np.array_equal(getattr(out, name), getattr(red, name))
    # idempotent
    again = enforce_stability(out, gamma=gamma)
    assert np.linalg.norm(again.K - out.K) <= 1e-10 * np.linalg.norm(out.K)
    # perturbation bounded by the clipped excess, in the scaled norm where clipping happens
    excess = np.sum(np.maximum(pre - cap, 0.0))
    diff = np.linalg.norm(_scaled(red, out.K - red.K), 2)
    assert diff <= excess * (1 + 1e-9) + 1e-9 * pre[0]
    # spectrum in the closed unit disk
    lam = update_eigenvalues(out.R(), out.F())
    assert np.abs(lam).max() <= 1 + 1e-9


def test_unperturbed_above_cfl_is_unstable():
    red = _random_reduced(5, s=3.0)
    assert reduced_stability_check(red).violating_count > 0
    assert np.abs(update_eigenvalues(red.R(), red.F())).max() > 1 + 1e-3


def test_identity_update():
    lam = update_eigenvalues(np.eye(5), np.zeros((5, 5)))
    assert np.array_equal(lam, np.ones(5))


@pytest.mark.filterwarnings("ignore::scipy.linalg.LinAlgWarning")
def test_singular_r_plus_f():
    with pytest.raises(SingularOperatorError):
        update_eigenvalues(np.zeros((3, 3)), np.zeros((3, 3)))


@pytest.mark.parametrize("n", [10, 30, 60])
def test_lossless_line_on_unit_circle(n):
    grid, mats, m = line_1d(n=n)
    pair = build_update_pair(m, 0.99 * cfl_max_timestep(grid, mats))
    lam = update_eigenvalues(pair.R, pair.F)
    assert np.abs(np.abs(lam) - 1).max() <= 1e-9


def test_lossy_absorber_line_strictly_inside():
    grid = GridSpec(1, (80,), (0.01,))
    mats = MaterialMap.uniform(grid)
    m = assemble(grid, mats, BoundarySpec({"z_lo": MatchedAbsorber(8), "z_hi": MatchedAbsorber(8)}))
    pair = build_update_pair(m, 0.9 * cfl_max_timestep(grid, mats))
    lam = update_eigenvalues(pair.R, pair.F)
    assert m.size <= 500
    assert np.abs(lam).max() < 1


@pytest.mark.parametrize("seed", range(4))
def test_leapfrog_eigenvalues_match_dense(seed):
    rng = np.random.default_rng(seed)
    m = random_system(rng, 15, 21, lossy=False)
    for s in (0.7, 1.6):
        dt = stable_dt(m, s)
        pair = build_update_pair(m, dt)
        fast = leapfrog_eigenvalues(m.d_eps, m.d_mu, m.K, dt)
        dense = update_eigenvalues(pair.R, pair.F)
        assert len(fast) == len(dense)
        # compare as multisets via sorted magnitudes and sorted angles
        assert np.allclose(np.sort(np.abs(fast)), np.sort(np.abs(dense)), rtol=1e-8, atol=1e-10)
        assert np.allclose(np.sort(fast.real), np.sort(dense.real), rtol=1e-8, atol=1e-8)


def test_cube_below_and_above_cfl(cube_matrices):
    cfg, m = cube_matrices
    dt0 = cfl_max_timestep(cfg.grid_spec(), cfg.material_map())
    d_eps, d_mu = m.d_eps, m.d_mu
    s = scaled_singular_values(d_eps, d_mu, m.K)
    assert np.sum(s >= 2 / (0.99 * dt0)) == 0
    dt = 1.98 * dt0
    assert np.sum(s >= 2 / dt) > 0
    assert np.abs(leapfrog_eigenvalues(d_eps, d_mu, m.K, dt)).max() > 1.1
    K2 = enforce_stability_full(m, dt)
    lam = leapfrog_eigenvalues(d_eps, d_mu, K2, dt)
    assert np.abs(lam).max() <= 1 + 1e-9
    assert np.abs(np.abs(lam) - 1).max() <= 1e-9


def test_eigen_csv(tmp_path):
    vals = np.array([1 + 0j, 0.6 + 0.8j])
    write_eigen_csv(tmp_path / "e.csv", vals, provenance="test")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "# test" and lines[1] == "index,real,imaginary,magnitude"
    data = np.loadtxt(tmp_path / "e.csv", delimiter=",", skiprows=2)
    assert np.allclose(data[:, 3], [1.0, 1.0], rtol=1e-15)
    assert np.allclose(data[1, 1:3], [0.6, 0.8])


def test_report_type():
    rep = StabilityReport(np.array([3.0, 1.0]), 2.0, 1)
    assert not rep.stable and rep.s_factor is None

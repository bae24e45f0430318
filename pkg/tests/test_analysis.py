import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dftk.analysis import (CoverageError, GeodesicDistanceModel, UndefinedRankError,
                           codim_histogram, effective_rank, geodesics_from_wavespeed, hausdorff,
                           incident_points, mpp_fit, pearson, wavespeed_recover)
from dftk.domains import Field, make_grid
from dftk.kernels import AnalyticSphericalModel, CallableModel, ScaledModel
from dftk.transforms import LensingSpec, lens_wavespeed, trace_geodesics

DISC = make_grid([(-1, 1), (-1, 1)], [32, 32])


# -- Moore-Penrose baseline ------------------------------------------------------------

def test_mpp_recovers_operator_on_full_rank_data():
    rng = np.random.default_rng(0)
    W0 = rng.standard_normal((4, 6))
    U = rng.standard_normal((20, 6))
    np.testing.assert_allclose(mpp_fit(U, U @ W0.T), W0, atol=1e-10)


def test_mpp_annihilates_unseen_directions():
    rng = np.random.default_rng(1)
    U = rng.standard_normal((3, 8))
    W = mpp_fit(U, rng.standard_normal((3, 2)))
    Q, _ = np.linalg.qr(np.vstack([U, rng.standard_normal((5, 8))]).T)
    null = Q[:, 3:]                          # orthogonal to the row space of U
    assert np.max(np.abs(W @ null)) < 1e-12


def test_mpp_normal_equations():
    U = np.array([[2.0, 0.0, 1.0], [1.0, 3.0, 0.0], [0.0, 1.0, 4.0], [1.0, 1.0, 1.0]])
    V = np.array([[1.0], [2.0], [0.5], [-1.0]])
    W = mpp_fit(U, V)
    # full column rank: W^T solves (U^T U) w = U^T v
    w = np.linalg.solve(U.T @ U, U.T @ V)
    np.testing.assert_allclose(W, w.T, rtol=1e-12)


def test_mpp_reproduces_consistent_targets():
    rng = np.random.default_rng(2)
    U = rng.standard_normal((5, 12))               # underdetermined but full row rank
    V = U @ rng.standard_normal((12, 3))
    assert np.max(np.abs(U @ mpp_fit(U, V).T - V)) <= 1e-8


def test_mpp_mismatch():
    with pytest.raises(ValueError):
        mpp_fit(np.ones((3, 2)), np.ones((2, 1)))


# -- effective rank ------------------------------------------------------------------------

def test_effective_rank_values():
    assert effective_rank(np.eye(3)) == pytest.approx(3.0)
    assert effective_rank(np.outer([1.0, 2.0], [3.0, -1.0, 0.5])) == pytest.approx(1.0)
    assert effective_rank(np.diag([2.0, 1.0])) == pytest.approx(1.5)
    with pytest.raises(UndefinedRankError):
        effective_rank(np.zeros((2, 3)))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**31), st.floats(0.1, 10.0))
def test_effective_rank_bounds_and_scale(m, n, seed, s):
    A = np.random.default_rng(seed).standard_normal((m, n))
    r = effective_rank(A)
    assert 1.0 - 1e-12 <= r <= min(m, n) + 1e-12
    assert effective_rank(s * A) == pytest.approx(r, rel=1e-10)
    rng = np.random.default_rng(seed + 1)
    P, _ = np.linalg.qr(rng.standard_normal((m, m)))
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    assert effective_rank(P @ A @ Q) == pytest.approx(r, rel=1e-10)


# -- incidence and codimension -------------------------------------------------------------

def test_incident_points_on_circle():
    grid = make_grid([(-1, 1), (-1, 1)], [64, 64])
    nodes = grid.nodes()
    y = np.array([0.0, 0.0, 0.5])
    near = incident_points(AnalyticSphericalModel(), y, nodes, 64)
    dist = np.abs(np.linalg.norm(nodes[near], axis=1) - 0.5)
    assert dist.max() <= np.linalg.norm(grid.spacing)
    again = incident_points(AnalyticSphericalModel(), y, nodes, 64)
    assert np.array_equal(near, again)


def test_incident_points_full_order():
    model = AnalyticSphericalModel()
    nodes = DISC.nodes()
    y = np.array([0.0, 0.0, 0.3])
    order = incident_points(model, y, nodes, len(nodes))
    assert np.array_equal(np.sort(order), np.arange(len(nodes)))
    score = model.f_values(y[None], nodes)[0, :, 0] ** 2
    assert np.all(np.diff(score[order]) >= 0)
    with pytest.raises(ValueError):
        incident_points(model, y, nodes, len(nodes) + 1)


def test_codim_one_for_hypersurface_model():
    ys = np.column_stack([np.zeros(5), np.linspace(-0.2, 0.2, 5), np.full(5, 0.4)])
    res = codim_histogram(AnalyticSphericalModel(), ys, DISC.nodes(), n_y=5, n_x=20,
                          rng=np.random.default_rng(0))
    np.testing.assert_allclose(res.effrank, 1.0)
    assert res.counts.sum() == 100 and res.zero_jacobians == 0


def test_codim_two_for_identity_jacobian():
    model = CallableModel(lambda y, x: x - y, lambda y, x: np.broadcast_to(np.eye(2), (len(x), 2, 2)),
                          m=2)
    ys = DISC.nodes()[::97]
    res = codim_histogram(model, ys, DISC.nodes(), n_y=4, n_x=8, rng=np.random.default_rng(0))
    np.testing.assert_allclose(res.effrank, 2.0)
    assert res.median == pytest.approx(2.0)


# -- wavespeed recovery --------------------------------------------------------------------

def _circle_probes(n=200, seed=0):
    rng = np.random.default_rng(seed)
    return np.column_stack([rng.uniform(-0.5, 0.5, (n, 2)), np.full(n, 0.5)])


def _circle_distance_model(lam=400.0):
    def f(y, x):
        return (np.linalg.norm(x - y[:, :2], axis=1) - y[:, 2])[:, None]

    def jac(y, x):
        d = x - y[:, :2]
        return (d / np.linalg.norm(d, axis=1, keepdims=True))[:, None, :]
    return CallableModel(f, jac, m=1, lam=lam)


def test_wavespeed_constant_for_unit_amplitude():
    chat = wavespeed_recover(_circle_distance_model(), DISC, _circle_probes(), n_probes=200,
                             rng=np.random.default_rng(0))
    np.testing.assert_allclose(chat.values[chat.mask], 1.0, atol=1e-12)
    assert np.all(chat.values[~chat.mask] == 0)


def test_wavespeed_analytic_circles_near_constant():
    # incident band |f|^2 <= 2/lam puts |x - c| in [0.42, 0.57], so a = 1/(2|x - c|) is within 20%
    chat = wavespeed_recover(AnalyticSphericalModel(), DISC, _circle_probes(), n_probes=200,
                             rng=np.random.default_rng(0))
    vals = chat.values[chat.mask]
    assert vals.max() == pytest.approx(1.0)
    assert vals.min() > 0.8


def test_wavespeed_invariant_to_scaling_f():
    spec = LensingSpec(n_theta=12, n_omega=12)
    base = GeodesicDistanceModel(spec, lam=200.0)
    grid = make_grid([(-1, 1), (-1, 1)], [16, 16])
    scaled = ScaledModel(base, 2.0)
    scaled.lam = base.lam / 4                 # same incidence set
    a = wavespeed_recover(base, grid, spec.y_points(), n_probes=144, rng=np.random.default_rng(3))
    b = wavespeed_recover(scaled, grid, spec.y_points(), n_probes=144, rng=np.random.default_rng(3))
    np.testing.assert_allclose(a.values, b.values, atol=1e-12)


def test_wavespeed_oracle_correlates():
    spec = LensingSpec(n_theta=16, n_omega=16)
    grid = make_grid([(-1, 1), (-1, 1)], [16, 16])
    lam = 1.0 / (2 * (1.5 * grid.spacing[0]) ** 2)
    chat = wavespeed_recover(GeodesicDistanceModel(spec, lam), grid, spec.y_points(),
                             n_probes=256, rng=np.random.default_rng(0))
    truth = lens_wavespeed(grid.nodes(), spec)
    assert pearson(chat.values[chat.mask], truth[chat.mask]) >= 0.9


def test_wavespeed_coverage_error():
    far = CallableModel(lambda y, x: np.full((len(x), 1), 10.0),
                        lambda y, x: np.ones((len(x), 1, 2)), m=1, lam=400.0)
    with pytest.raises(CoverageError):
        wavespeed_recover(far, DISC, _circle_probes(20), n_probes=20)


# -- geodesics through a recovered speed -------------------------------------------------

def test_unit_speed_gives_chords():
    grid = make_grid([(-1, 1), (-1, 1)], [16, 16])
    chat = Field(grid, np.ones(grid.size))
    theta = np.array([0.3, 2.0, -1.0])
    omega = np.array([0.0, 0.7, -1.2])
    paths = geodesics_from_wavespeed(chat, np.column_stack([theta, omega]), dt=1e-3)
    for th, om, p in zip(theta, omega, paths):
        x0 = np.array([np.cos(th), np.sin(th)])
        d = -np.array([np.cos(th + om), np.sin(th + om)])
        assert p.exit_time == pytest.approx(2 * np.cos(om), abs=1e-4)
        np.testing.assert_allclose(p.x[-1], x0 + 2 * np.cos(om) * d, atol=1e-4)


def test_recovered_geodesics_mirror_symmetric():
    spec = LensingSpec()
    grid = make_grid([(-1, 1), (-1, 1)], [24, 24])
    chat = Field(grid, lens_wavespeed(grid.nodes(), spec))
    up, down = geodesics_from_wavespeed(chat, np.array([[0.0, 0.4], [0.0, -0.4]]), dt=2e-3)
    assert len(up.t) == len(down.t)
    np.testing.assert_allclose(up.x[:, 0], down.x[:, 0], atol=1e-9)
    np.testing.assert_allclose(up.x[:, 1], -down.x[:, 1], atol=1e-9)


def test_sampled_true_speed_reproduces_geodesics():
    spec = LensingSpec()
    grid = make_grid([(-1, 1), (-1, 1)], [64, 64])
    chat = Field(grid, lens_wavespeed(grid.nodes(), spec))
    y = np.array([[0.0, 0.1], [1.0, -0.3], [2.5, 0.6]])
    est = geodesics_from_wavespeed(chat, y, dt=2e-3)
    ref = trace_geodesics(y[:, 0], y[:, 1], spec.speed, 2e-3)
    for a, b in zip(est, ref):
        assert hausdorff(a.x, b.x) <= 2 * grid.spacing[0]


def test_hausdorff_basic():
    a = np.array([[0.0, 0.0], [1.0, 0.0]])
    assert hausdorff(a, a) == 0.0
    assert hausdorff(a, a + [0.0, 0.5]) == pytest.approx(0.5)
    assert hausdorff(a, np.array([[0.0, 0.0]])) == pytest.approx(1.0)


def test_pearson_affine():
    x = np.linspace(0, 1, 10)
    assert pearson(x, 3 * x + 2) == pytest.approx(1.0)
    assert pearson(x, -x) == pytest.approx(-1.0)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relmap.dataset import ObservationSeries
from relmap.interpolate import (
    PlanarFrame,
    RbfConfig,
    interpolate,
    interpolate_points,
    monomials,
    rbf_solve,
)

from helpers import square_network


def gaussian(a, b, eps):
    return np.exp(-eps * ((a[:, None] - b[None]) ** 2).sum(-1))


def test_single_center_exact():  # [TRIVIAL]
    fit = rbf_solve([[0.3, 0.4]], [2.5], RbfConfig(lambda_smooth=0.0, poly_degree=0, n_neighbors=1))
    assert fit([[0.3, 0.4]])[0] == pytest.approx(2.5, rel=1e-12)


def test_three_centers_match_direct_solve():  # [DERIVED] augmented system built by hand
    pts = np.array([[0.0, 0.0], [0.7, 0.1], [0.2, 0.9]])
    vals = np.array([1.0, -2.0, 4.0])
    cfg = RbfConfig(epsilon=1.3, lambda_smooth=0.0, poly_degree=0, n_neighbors=3)
    fit = rbf_solve(pts, vals, cfg)
    a = np.block([[gaussian(pts, pts, 1.3), np.ones((3, 1))], [np.ones((1, 3)), np.zeros((1, 1))]])
    sol = np.linalg.solve(a, np.append(vals, 0.0))
    np.testing.assert_allclose(fit.c, sol[:3], rtol=1e-10)
    np.testing.assert_allclose(fit.b, sol[3:], rtol=1e-10)
    np.testing.assert_allclose(fit(pts), vals, rtol=1e-8)


def test_orthogonality_constraint(rng):
    pts = rng.uniform(size=(12, 2))
    fit = rbf_solve(pts, rng.normal(size=12), RbfConfig(n_neighbors=12))
    np.testing.assert_allclose(monomials(pts, 1).T @ fit.c, 0, atol=1e-10)


def test_large_lambda_tends_to_least_squares(rng):  # [DERIVED] lstsq oracle
    pts = rng.uniform(size=(15, 2))
    vals = rng.normal(size=15)
    fit = rbf_solve(pts, vals, RbfConfig(lambda_smooth=1e6, n_neighbors=15))
    p = monomials(pts, 1)
    coef, *_ = np.linalg.lstsq(p, vals, rcond=None)
    np.testing.assert_allclose(fit(pts), p @ coef, atol=1e-5)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_exact_at_centers_without_smoothing(seed):  # [TRIVIAL] interpolation condition
    rng = np.random.default_rng(seed)
    pts = rng.uniform(size=(10, 2))
    vals = rng.normal(size=10)
    fit = rbf_solve(pts, vals, RbfConfig(lambda_smooth=0.0))
    np.testing.assert_allclose(fit(pts), vals, rtol=1e-8, atol=1e-8 * np.abs(vals).max())


def test_residual_monotone_in_lambda(rng):
    pts = rng.uniform(size=(20, 2))
    vals = rng.normal(size=20)
    res = []
    for lam in (0.0, 0.1, 0.5, 1.0, 10.0):
        fit = rbf_solve(pts, vals, RbfConfig(lambda_smooth=lam, n_neighbors=20))
        res.append(float(((fit(pts) - vals) ** 2).sum()))
    assert res[0] < 1e-12
    assert all(b >= a for a, b in zip(res, res[1:])), res


def test_solve_errors():
    with pytest.raises(ValueError, match="duplicate"):
        rbf_solve([[0, 0], [0, 0], [1, 1]], [1, 2, 3])
    with pytest.raises(ValueError):
        rbf_solve([[0, 0], [1, 1]], [1, 2])  # fewer than 3 linear terms
    with pytest.raises(ValueError):
        rbf_solve([[0, 0], [1, 1], [2, 0]], [1, 2])
    # collinear centers leave the linear tail undetermined
    with pytest.raises(ValueError, match="singular"):
        rbf_solve([[0, 0], [1, 0], [2, 0]], [1, 2, 3], RbfConfig(lambda_smooth=0.0))


def test_config_validation():
    for bad in (dict(epsilon=0.0), dict(lambda_smooth=-1), dict(poly_degree=3), dict(n_neighbors=2)):
        with pytest.raises(ValueError):
            RbfConfig(**bad)


def test_default_rbf_parameters():  # [PAPER] eps 1.0, N 10, lambda 0.5
    cfg = RbfConfig()
    assert (cfg.epsilon, cfg.n_neighbors, cfg.lambda_smooth, cfg.poly_degree) == (1.0, 10, 0.5, 1)


def test_planar_frame_scale():  # [DERIVED] equator degree is 111.19 km
    frame = PlanarFrame.for_bounds((0.0, -0.5, 1.0, 0.5))
    xy = frame.apply([[0.0, 0.0], [1.0, 0.0]])
    diag = np.hypot(111.19, 111.19)
    assert (xy[1, 0] - xy[0, 0]) * diag == pytest.approx(111.19, rel=1e-3)


# -- rasters --------------------------------------------------------------------------


@pytest.fixture
def field_net(rng):
    pts = rng.uniform(0.02, 0.98, size=(30, 2))
    net = square_network(pts)
    vals = np.sin(3 * pts[:, :1]) + pts[:, 1:] * np.arange(1, 4)
    return net, ObservationSeries(vals, np.ones(vals.shape, bool))


def test_constant_field_reproduced(field_net):  # [TRIVIAL]
    net, _ = field_net
    const = ObservationSeries(np.full((30, 2), 6.25), np.ones((30, 2), bool))
    r = interpolate(net, const, RbfConfig(lambda_smooth=0.0), resolution=32)
    inside = ~np.isnan(r.data[0])
    assert inside.sum() > 0.9 * inside.size
    np.testing.assert_allclose(r.data[:, inside], 6.25, atol=1e-6)


def test_outside_boundary_is_nodata(rng):
    ring = np.array([[0, 0], [1, 0], [0, 1]], dtype=float)  # triangle in a unit box
    net = square_network(rng.uniform(0.05, 0.45, size=(12, 2)), ring=ring)
    data = ObservationSeries(rng.normal(size=(12, 1)), np.ones((12, 1), bool))
    r = interpolate(net, data, resolution=20)
    centers = np.stack(np.meshgrid((np.arange(20) + 0.5) / 20, (np.arange(20) + 0.5) / 20), -1)
    bounds = net.bounds
    assert r.bounds == tuple(bounds)
    nan = np.isnan(r.data[0])
    assert nan.any() and not nan.all()
    # north-up rows: compare against the ring in normalised coordinates
    lng = bounds[0] + centers[..., 0] * (bounds[2] - bounds[0])
    lat = bounds[3] - centers[..., 1] * (bounds[3] - bounds[1])
    outside = ~net.contains(np.stack([lng, lat], -1).reshape(-1, 2)).reshape(20, 20)
    np.testing.assert_array_equal(nan, outside)


def test_resolution_independence(field_net):  # [TRIVIAL] pointwise evaluation
    net, data = field_net
    coarse = interpolate(net, data, shape=(10, 12))
    fine = interpolate(net, data, shape=(30, 36))
    # cell centers line up every third fine pixel
    same = fine.data[:, 1::3, 1::3]
    mask = ~np.isnan(coarse.data)
    np.testing.assert_allclose(same[mask], coarse.data[mask], atol=1e-9, rtol=0)


def test_sensor_order_invariance(field_net):
    net, data = field_net
    perm = np.random.default_rng(5).permutation(net.n)
    a = interpolate(net, data, resolution=24)
    b = interpolate(net.subset(perm), ObservationSeries(data.values[perm], data.mask[perm]), resolution=24)
    np.testing.assert_allclose(a.data, b.data, atol=1e-10, equal_nan=True)


def test_masked_sensors_left_out(field_net):
    net, data = field_net
    mask = np.ones_like(data.mask)
    mask[:5, 1] = False
    spoiled = data.values.copy()
    spoiled[:5, 1] = 1e6
    targets = np.array([[0.5, 0.5], [0.2, 0.8]])
    got = interpolate_points(net.coords, spoiled, mask, targets, net.bounds)
    ref = interpolate_points(net.coords[5:], data.values[5:, 1:2], None, targets, net.bounds)
    np.testing.assert_allclose(got[:, 1:2], ref, rtol=1e-12)
    full = interpolate_points(net.coords, data.values[:, :1], None, targets, net.bounds)
    np.testing.assert_allclose(got[:, :1], full, rtol=1e-12)


def test_local_fit_matches_global_when_all_neighbours(field_net):  # [DERIVED]
    net, data = field_net
    targets = np.array([[0.33, 0.61], [0.71, 0.12]])
    cfg = RbfConfig(n_neighbors=30)
    got = interpolate_points(net.coords, data.values, None, targets, net.bounds, cfg)
    frame = PlanarFrame.for_bounds(net.bounds)
    fit = rbf_solve(frame.apply(net.coords), data.values, cfg)
    np.testing.assert_allclose(got, fit(frame.apply(targets)), rtol=1e-10)


def test_too_few_sensors(rng):
    net = square_network(rng.uniform(0.1, 0.9, size=(2, 2)))
    data = ObservationSeries(np.ones((2, 1)), np.ones((2, 1), bool))
    with pytest.raises(ValueError, match="polynomial"):
        interpolate(net, data, resolution=8)
    none = ObservationSeries(np.ones((2, 1)), np.zeros((2, 1), bool))
    with pytest.raises(ValueError, match="no observed"):
        interpolate_points(net.coords, none.values, none.mask, [[0.5, 0.5]], net.bounds)

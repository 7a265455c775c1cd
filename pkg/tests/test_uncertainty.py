import csv

import numpy as np
import pytest

import relmap.training as training
from relmap.dataset import ObservationSeries, synthesize
from relmap.densify import kde_at, silverman_bandwidth
from relmap.graph import pairwise_haversine
from relmap.model import ModelConfig
from relmap.training import TrainConfig, make_split, train
from relmap.uncertainty import (
    deviations,
    glyph_metrics,
    hatch_opacity,
    opacity_from_density,
    reference_values,
)

from helpers import square_network


def test_zero_deviation_gives_flat_glyphs(rng):  # [TRIVIAL]
    net = square_network(rng.uniform(0.02, 0.98, size=(40, 2)))
    g = glyph_metrics(net, np.zeros(40), grid_size=4)
    filled = g.count > 0
    for h in (g.h_p, g.h_low, g.h_high):
        np.testing.assert_array_equal(h[filled], 0.0)
        assert np.isnan(h[~filled]).all()


def test_quartiles_of_one_to_four():  # [DERIVED] numpy linear quantile rule
    pts = np.array([[0.1, 0.9], [0.2, 0.8], [0.15, 0.85], [0.05, 0.95], [0.9, 0.1]])
    dev = np.array([1.0, 2.0, 3.0, 4.0, 0.0])
    g = glyph_metrics(square_network(pts), dev, grid_size=2)
    raw = np.array([g.h_p[0, 0], g.h_low[0, 0], g.h_high[0, 0]]) * g.scale
    np.testing.assert_allclose(raw, [2.5, 1.75, 3.25])
    np.testing.assert_allclose([1.75, 3.25], np.quantile([1, 2, 3, 4], [0.25, 0.75]))
    assert g.scale == 3.25  # largest |raw| over all statistics and cells
    assert g.h_high[0, 0] == 1.0
    assert g.count[0, 0] == 4 and g.count[1, 1] == 1


def test_single_sensor_cell_is_degenerate_box():
    g = glyph_metrics(square_network([[0.3, 0.3], [0.7, 0.7]]), np.array([-2.0, 1.0]), grid_size=2)
    assert g.h_low[1, 0] == g.h_high[1, 0] == g.h_p[1, 0] == -1.0
    assert g.h_p[0, 1] == 0.5


def test_width_oracle(rng):  # [DERIVED] brute-force nearest-sensor distances
    pts = rng.uniform(0.02, 0.98, size=(25, 2))
    net = square_network(pts, virtual=rng.uniform(size=25) < 0.2)
    g = glyph_metrics(net, rng.normal(size=25), grid_size=5, n_neighbors=3)
    centers = [
        [(c + 0.5) / 5, 1 - (r + 0.5) / 5] for r in range(5) for c in range(5)
    ]
    d = pairwise_haversine(np.array(centers), pts[net.original])
    mean3 = np.sort(d, axis=1)[:, :3].mean(axis=1)
    np.testing.assert_allclose(g.width.ravel(), 1 - mean3 / mean3.max(), atol=1e-12)
    assert g.width.ravel()[np.argmax(mean3)] == 0.0  # [TRIVIAL] farthest cell


def test_ranges_and_order(rng):
    pts = rng.uniform(0.02, 0.98, size=(60, 2))
    dev = rng.normal(0, 3, size=60)
    g = glyph_metrics(square_network(pts), dev, grid_size=3)
    filled = g.count > 0
    for h in (g.h_p, g.h_low, g.h_high):
        assert np.all(np.abs(h[filled]) <= 1.0)
    assert np.all(g.h_low[filled] <= g.h_high[filled])
    assert np.all((g.width >= 0) & (g.width <= 1))
    assert g.count.sum() == 60
    # the mean lies between the cell's extremes
    rows = np.clip(np.floor((1 - pts[:, 1]) * 3).astype(int), 0, 2)
    cols = np.clip(np.floor(pts[:, 0] * 3).astype(int), 0, 2)
    for r, c in zip(*np.nonzero(filled)):
        cell = dev[(rows == r) & (cols == c)]
        assert cell.min() - 1e-12 <= g.h_p[r, c] * g.scale <= cell.max() + 1e-12


def test_reorder_invariance(rng):
    pts = rng.uniform(0.02, 0.98, size=(30, 2))
    dev = rng.normal(size=30)
    perm = rng.permutation(30)
    a = glyph_metrics(square_network(pts), dev, grid_size=4)
    b = glyph_metrics(square_network(pts[perm]), dev[perm], grid_size=4)
    for name in ("h_p", "h_low", "h_high", "width", "count"):
        np.testing.assert_allclose(getattr(a, name), getattr(b, name), atol=1e-12, equal_nan=True)


def test_virtual_and_invalid_sensors_ignored(rng):
    pts = rng.uniform(0.02, 0.98, size=(20, 2))
    virtual = np.zeros(20, bool)
    virtual[:5] = True
    dev = rng.normal(size=20)
    dev[:5] = 1e9
    valid = np.ones(20, bool)
    valid[5] = False
    g = glyph_metrics(square_network(pts, virtual=virtual), dev, grid_size=2, valid=valid)
    assert g.count.sum() == 14
    assert g.scale < 1e3


def test_glyph_csv(tmp_path, rng):
    g = glyph_metrics(square_network(rng.uniform(0.1, 0.4, size=(6, 2))), rng.normal(size=6), grid_size=2)
    g.save_csv(tmp_path / "g.csv")
    rows = list(csv.DictReader(open(tmp_path / "g.csv")))
    assert len(rows) == 4
    assert list(rows[0]) == ["row", "col", "h_p", "h_low", "h_high", "w", "count"]
    empty = [r for r in rows if r["count"] == "0"]
    assert empty and all(r["h_p"] == "" for r in empty)


def test_glyph_errors():
    with pytest.raises(ValueError):
        glyph_metrics(square_network([[0.5, 0.5]]), [0.0], grid_size=0)


# -- deviations -----------------------------------------------------------------------


def test_deviations_window():
    vals = np.arange(12, dtype=float).reshape(2, 6)
    mask = np.ones((2, 6), bool)
    mask[1, 3:] = False
    data = ObservationSeries(vals, mask)
    ref = np.ones((2, 6))
    dev, valid = deviations(data, ref, 5)
    np.testing.assert_array_equal(valid, [True, False])
    assert dev[0] == 4.0 and np.isnan(dev[1])
    dev, valid = deviations(data, ref, 4, window=3)
    assert dev[0] == pytest.approx(2.0)  # mean of 2, 3, 4 minus 1
    assert dev[1] == pytest.approx(7.0)  # only step 2 observed: 8 minus 1
    assert deviations(data, ref, -1)[0][0] == 4.0
    with pytest.raises(IndexError):
        deviations(data, ref, 6)


# -- hatch ------------------------------------------------------------------------------


def test_opacity_ramp():  # [TRIVIAL]
    np.testing.assert_allclose(opacity_from_density([0.0, 0.3, 0.15, 0.9], 0.3), [1.0, 0.0, 0.5, 0.0])
    for bad in (0.0, -0.1):
        with pytest.raises(ValueError):
            opacity_from_density([0.1], bad)


def test_hatch_oracle(rng):  # [DERIVED] kde evaluated directly
    pts = rng.uniform(0.1, 0.5, size=(15, 2))
    net = square_network(pts)
    h = hatch_opacity(net, threshold=0.25, shape=(12, 12))
    xs = (np.arange(12) + 0.5) / 12
    gx, gy = np.meshgrid(xs, 1 - xs)
    centers = np.stack([gx, gy], -1).reshape(-1, 2)
    dens = kde_at(centers, pts, silverman_bandwidth(pts))
    rel = dens / dens.max()
    expected = np.clip((0.25 - rel) / 0.25, 0, 1).reshape(12, 12)
    np.testing.assert_allclose(h.opacity, expected, atol=1e-12)
    assert h.opacity[np.unravel_index(np.argmax(dens), (12, 12))] == 0.0
    assert h.opacity.max() == 1.0


def test_hatch_zero_outside_boundary_and_virtual_ignored(rng):
    ring = np.array([[0, 0], [1, 0], [0, 1]], dtype=float)
    pts = rng.uniform(0.05, 0.4, size=(10, 2))
    net = square_network(pts, ring=ring)
    h = hatch_opacity(net, shape=(16, 16))
    xs = (np.arange(16) + 0.5) / 16
    gx, gy = np.meshgrid(xs, 1 - xs)
    outside = (gx + gy) > 1
    assert np.all(h.opacity[outside] == 0)
    assert h.opacity[~outside].max() == 1.0
    with_virtual = square_network(
        np.vstack([pts, rng.uniform(0.05, 0.4, size=(5, 2))]), virtual=[False] * 10 + [True] * 5, ring=ring
    )
    np.testing.assert_array_equal(hatch_opacity(with_virtual, shape=(16, 16)).opacity, h.opacity)


# -- cross-imputed references ------------------------------------------------------


@pytest.fixture(scope="module")
def bench():
    data = synthesize(n_sensors=40, n_steps=128, seed=3)
    split = make_split(40, 0.5, seed=1, window=16)
    return data, split


def test_reference_partition(bench):
    data, split = bench
    model = train(data.network, data.observations, split, ModelConfig(hidden=8, gpe_scales=2), TrainConfig(epochs=2))
    calls = []
    orig = training.impute

    def spy(m, net, obs, visible=None, **kw):
        calls.append(np.asarray(visible).copy())
        return orig(m, net, obs, visible, **kw)

    training.impute = spy
    try:
        ref = reference_values(model, data.network, data.observations, seed=4)
    finally:
        training.impute = orig
    assert len(calls) == 2
    a, b = calls
    # [TRIVIAL] the two passes show complementary halves
    np.testing.assert_array_equal(a ^ b, np.ones(40, bool))
    assert abs(int(a.sum()) - int(b.sum())) <= 1
    assert ref.shape == data.observations.values.shape and np.isfinite(ref).all()
    with pytest.raises(ValueError):
        reference_values(model, data.network.subset([0]), data.observations.rows([0]))


def test_reference_on_constant_field(bench):  # [DERIVED] reference training run
    data, split = bench
    shape = data.observations.values.shape
    const = ObservationSeries(np.full(shape, 7.5), np.ones(shape, bool))
    model = train(data.network, const, split, ModelConfig(), TrainConfig(epochs=200))
    ref = reference_values(model, data.network, const)
    err = np.abs(const.values - ref).mean() / model.norm[1]
    assert err < 0.05


@pytest.mark.slow
def test_quartiles_stable_under_seed_swap(bench):  # [DERIVED] two-seed comparison
    data, split = bench
    model = train(data.network, data.observations, split, ModelConfig(), TrainConfig(epochs=300))
    t = data.observations.values.shape[1]

    def mean_iqr(seed):
        ref = reference_values(model, data.network, data.observations, seed=seed)
        out = []
        for step in range(t):
            dev, valid = deviations(data.observations, ref, step)
            g = glyph_metrics(data.network, dev, grid_size=4, valid=valid)
            out.append(np.nanmean((g.h_high - g.h_low) * g.scale))
        return float(np.mean(out)), ref

    a, ref_a = mean_iqr(0)
    b, ref_b = mean_iqr(1)
    assert not np.array_equal(ref_a, ref_b)
    assert abs(b - a) <= 0.1 * a

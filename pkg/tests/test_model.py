import math
from dataclasses import replace

import numpy as np
import pytest

from relmap.graph import build_graph
from relmap.model import (
    AGGREGATORS,
    MIN_AMPLIFICATION,
    CoordinateFrame,
    ModelConfig,
    aggregate,
    forward,
    gpe_encode,
    init_params,
    pna_forward,
    sinusoid_features,
    temporal_forward,
    upsample_linear,
)
from relmap.nn import Tensor, gradient, huber

from helpers import central_diff, rel_err, square_network

SEEDS = range(5)
SMALL = np.array([[0.0, 0.0], [0.3, 0.0], [0.3, 0.3], [0.0, 0.3]])


def check_grad(loss_fn, params, tol=1e-4):
    _, grads = gradient(loss_fn, params)
    worst = 0.0
    for name, value in params.items():

        def f(v, name=name):
            trial = dict(params)
            trial[name] = v
            return float(loss_fn({k: Tensor(x) for k, x in trial.items()}).data)

        err = rel_err(grads[name], central_diff(f, value))
        assert err < tol, (name, err)
        worst = max(worst, err)
    return worst


# -- positional encoding -----------------------------------------------------------


def test_centroid_features():  # [TRIVIAL]
    coords = np.array([[0.0, 0.0], [1.0, 2.0], [-1.0, -2.0]])
    frame = CoordinateFrame.fit(coords)
    st = sinusoid_features(frame.apply(coords), 3)
    np.testing.assert_allclose(st[0], [1, 0, 1, 0] * 3, atol=1e-15)


def test_symmetric_pair_parity():  # [TRIVIAL]
    coords = np.array([[0.3, 0.7], [0.9, 0.1]])
    st = sinusoid_features(CoordinateFrame.fit(coords).apply(coords), 4).reshape(2, 4, 4)
    np.testing.assert_allclose(st[0, :, [0, 2]], st[1, :, [0, 2]], atol=1e-15)
    np.testing.assert_allclose(st[0, :, [1, 3]], -st[1, :, [1, 3]], atol=1e-15)


def test_gpe_shape_and_projection(rng):  # [TRIVIAL] 4M columns
    coords = rng.uniform(size=(10, 2))
    cfg = ModelConfig(gpe_scales=3)
    params = init_params(cfg, 0)
    out = gpe_encode(coords, params, 3)
    assert out.shape == (10, 12)
    st = sinusoid_features(CoordinateFrame.fit(coords).apply(coords), 3)
    np.testing.assert_allclose(out.data, st @ params["gpe.weight"] + params["gpe.bias"])


def test_delta_coordinates(rng):
    coords = rng.uniform(-3, 5, size=(12, 2))
    delta = CoordinateFrame.fit(coords).apply(coords)
    np.testing.assert_allclose(np.abs(delta).max(axis=0), [1.0, 1.0])
    np.testing.assert_allclose(delta.mean(axis=0), 0.0, atol=1e-15)
    flat = np.column_stack([coords[:, 0], np.full(12, 4.0)])
    assert np.all(CoordinateFrame.fit(flat).apply(flat)[:, 1] == 0.0)


def test_sinusoid_scales():
    st = sinusoid_features(np.array([[0.8, -0.4]]), 3)[0]
    expected = []
    for m in range(1, 4):
        f = 2.0 ** (m - 1)
        expected += [math.cos(0.8 / f), math.sin(0.8 / f), math.cos(-0.4 / f), math.sin(-0.4 / f)]
    np.testing.assert_allclose(st, expected, rtol=1e-15)


@pytest.mark.parametrize("seed", SEEDS)
def test_gpe_projection_gradient(seed):
    rng = np.random.default_rng(seed)
    coords = rng.uniform(size=(5, 2))
    params = {"gpe.weight": rng.normal(size=(8, 8)), "gpe.bias": rng.normal(size=8)}
    proj = rng.normal(size=(5, 8))
    check_grad(lambda p: (gpe_encode(coords, p, 2) * proj).sum(), params)


# -- aggregation -------------------------------------------------------------------------


def _single(values):
    """Node 0 aggregates ``values`` held by nodes 1..k."""
    k = len(values)
    adj = np.zeros((k + 1, k + 1))
    adj[0, 1:] = 1.0
    x = np.zeros((1, k + 1, 1, 1))
    x[0, 1:, 0, 0] = values
    aggs, _ = aggregate(Tensor(x), adj, eta=1.0, eps=1e-5)
    return {name: float(a.data[0, 0, 0, 0]) for name, a in zip(AGGREGATORS, aggs)}


def test_mean_aggregate():  # [TRIVIAL]
    assert _single([1.0, 2.0, 3.0])["mean"] == pytest.approx(2.0)


def test_constant_neighbours():  # [TRIVIAL]
    a = _single([4.0, 4.0, 4.0])
    assert a["std"] == pytest.approx(math.sqrt(1e-5))  # zero variance plus epsilon
    assert a["softmax"] == pytest.approx(4.0) and a["softmin"] == pytest.approx(4.0)


def test_softmax_two_values():  # [DERIVED]
    e = math.e
    expected = (e * 1 + e**2 * 2) / (e + e**2)
    assert expected == pytest.approx(1.7311, abs=1e-4)
    assert _single([1.0, 2.0])["softmax"] == pytest.approx(expected, rel=1e-12)
    assert _single([1.0, 2.0])["softmin"] == pytest.approx((e**-1 + 2 * e**-2) / (e**-1 + e**-2), rel=1e-12)


def test_softmax_far_below_other_nodes():  # [DERIVED] shift invariance
    # node 0 sees {1, 2}; node 3 holds 5000 and is nobody's neighbour
    adj = np.zeros((4, 4))
    adj[0, 1:3] = 1.0
    x = np.array([0.0, 1.0, 2.0, 5000.0]).reshape(1, 4, 1, 1)
    aggs, _ = aggregate(Tensor(x), adj, eta=1.0, eps=1e-5)
    e = math.e
    assert float(aggs[1].data[0, 0, 0, 0]) == pytest.approx((e + 2 * e**2) / (e + e**2), rel=1e-12)
    x[0, 3] = -5000.0
    aggs, _ = aggregate(Tensor(x), adj, eta=1.0, eps=1e-5)
    assert float(aggs[2].data[0, 0, 0, 0]) == pytest.approx((e**-1 + 2 * e**-2) / (e**-1 + e**-2), rel=1e-12)
    assert all(np.isfinite(a.data).all() for a in aggs)


def reference_pna(x, adj, weight, bias, root, eta, eps, weighted):
    """Per-node loop implementation of the spatial convolution (oracle)."""
    n, p, z = x.shape
    rows = []
    for i in range(n):
        nb = np.flatnonzero(adj[i] > 0)
        if nb.size == 0:
            feats = np.zeros((p, 18 * z))
        else:
            xs = x[nb]  # k, p, z
            w = adj[i, nb] / adj[i, nb].sum() if weighted else np.full(nb.size, 1 / nb.size)
            mean = np.einsum("k,kpz->pz", w, xs)
            var = np.einsum("k,kpz->pz", w, xs**2) - mean**2
            std = np.sqrt(np.maximum(var, 0) + eps)
            smax = (np.exp(xs) * xs).sum(0) / np.exp(xs).sum(0)
            smin = (np.exp(-xs) * xs).sum(0) / np.exp(-xs).sum(0)
            col = adj[nb, i]
            dmean = col.mean()
            dstd = math.sqrt(max((col**2).mean() - dmean**2, 0) + eps)
            aggs = [mean, smax, smin, std, np.full((p, z), dmean), np.full((p, z), dstd)]
            amp = max(math.log(adj[i].sum() + 1) / eta, MIN_AMPLIFICATION)
            base = np.concatenate(aggs, axis=-1)
            feats = np.concatenate([base, base / amp, base * amp], axis=-1)
        rows.append(np.maximum(feats @ weight + x[i] @ root + bias, 0))
    return np.stack(rows)


def random_adjacency(rng, n, isolated=True):
    adj = rng.uniform(0.05, 1.0, size=(n, n)) * (rng.uniform(size=(n, n)) < 0.5)
    np.fill_diagonal(adj, 0)
    if isolated:
        adj[0] = 0
    return adj


@pytest.mark.parametrize("weighted", [False, True])
@pytest.mark.parametrize("seed", SEEDS)
def test_pna_matches_loop_oracle(seed, weighted):  # [DERIVED]
    rng = np.random.default_rng(seed)
    n, p, z, h = 6, 3, 2, 4
    x = rng.normal(size=(n, p, z))
    adj = random_adjacency(rng, n)
    weight, bias, root = rng.normal(size=(18 * z, h)), rng.normal(size=h), rng.normal(size=(z, h))
    out = pna_forward(x, adj, weight, bias, eta=2.5, eps=1e-5, root_weight=root, weighted=weighted)
    ref = reference_pna(x, adj, weight, bias, root, 2.5, 1e-5, weighted)
    np.testing.assert_allclose(out.data, ref, rtol=1e-10, atol=1e-12)


def test_isolated_node_aggregates_vanish(rng):
    adj = random_adjacency(rng, 5)
    x = Tensor(rng.normal(size=(1, 5, 2, 3)))
    aggs, amp = aggregate(x, adj, 1.0, 1e-5)
    for a in aggs:
        assert np.all(a.data[0, 0] == 0)
    assert amp[0, 0] == 1.0


@pytest.mark.parametrize("seed", SEEDS)
def test_pna_gradient_all_aggregators_and_scalers(seed):
    rng = np.random.default_rng(seed)
    n, p, z, h = 5, 2, 2, 3
    adj = random_adjacency(rng, n)
    adj[1, 2] = adj[1, 3] = 0.7  # at least one node with several neighbours
    params = {
        "x": rng.normal(size=(n, p, z)),
        "w": rng.normal(size=(18 * z, h)),
        "b": rng.normal(size=h),
        "r": rng.normal(size=(z, h)),
    }
    proj = rng.normal(size=(n, p, h))
    for weighted in (False, True):
        check_grad(
            lambda q: (pna_forward(q["x"], adj, q["w"], q["b"], 1.7, 1e-5, True, q["r"], weighted) * proj).sum(),
            params,
        )


def test_mean_only_ablation(rng):
    adj = random_adjacency(rng, 4)
    x = rng.normal(size=(4, 3, 2))
    out = pna_forward(x, adj, rng.normal(size=(2, 5)), np.zeros(5), 1.0, use_pna=False)
    assert out.shape == (4, 3, 5)


# -- temporal convolution ------------------------------------------------------------------


def test_identity_kernel_with_open_gate(rng):  # [TRIVIAL]
    x = rng.normal(size=(4, 6, 3))
    vw = np.zeros((3, 3, 3))
    vw[1] = np.eye(3)
    out = temporal_forward(x, vw, np.zeros(3), np.zeros((3, 3, 3)), np.full(3, 1e3))
    np.testing.assert_allclose(out.data, x, rtol=1e-14)


@pytest.mark.parametrize("t_sr,p,expected", [(1, 8, 8), (4, 8, 32), (2, 5, 10)])
def test_temporal_lengths(rng, t_sr, p, expected):  # [TRIVIAL]
    x = rng.normal(size=(3, p, 2))
    w = rng.normal(size=(3, 2, 4 * t_sr))
    out = temporal_forward(x, w, np.zeros(4 * t_sr), w, np.zeros(4 * t_sr), t_sr)
    assert out.shape == (3, expected, 4)


def test_channel_groups_unfold_into_time(rng):
    x = rng.normal(size=(2, 3, 2))
    w = rng.normal(size=(1, 2, 6))
    full = temporal_forward(x, w, np.zeros(6), w, np.zeros(6), 1).data
    out = temporal_forward(x, w, np.zeros(6), w, np.zeros(6), 3).data
    for r in range(3):
        np.testing.assert_allclose(out[:, r::3, :], full[:, :, 2 * r : 2 * r + 2])


@pytest.mark.parametrize("seed", SEEDS)
def test_temporal_gradient(seed):
    rng = np.random.default_rng(seed)
    params = {
        "x": rng.normal(size=(3, 5, 2)),
        "vw": rng.normal(size=(3, 2, 6)),
        "vb": rng.normal(size=6),
        "gw": rng.normal(size=(3, 2, 6)),
        "gb": rng.normal(size=6),
    }
    proj = rng.normal(size=(3, 10, 3))
    check_grad(lambda q: (temporal_forward(q["x"], q["vw"], q["vb"], q["gw"], q["gb"], 2) * proj).sum(), params)


def test_upsample_linear():
    x = np.array([[0.0, 4.0, 8.0]])
    np.testing.assert_allclose(upsample_linear(x, 4), [[0, 1, 2, 3, 4, 5, 6, 7, 8, 8, 8, 8]])


# -- full forward ------------------------------------------------------------------------------


def small_setup(seed, **overrides):
    rng = np.random.default_rng(seed)
    n, p = 7, 4
    # a benchmark-sized domain (0.3 degrees) keeps the attenuation scaler moderate
    net = square_network(
        rng.uniform(0.015, 0.285, size=(n, 2)), virtual=[False] * 5 + [True] * 2, ring=SMALL
    )
    cfg = ModelConfig(hidden=3, blocks=2, gpe_scales=1, k=3, dropout=0.0, **overrides)
    graph = build_graph(net, cfg.k)
    pos = sinusoid_features(CoordinateFrame.fit(net.coords).apply(net.coords), cfg.gpe_scales)
    x = rng.normal(size=(n, p))
    x[5:] = 0.0
    return rng, net, cfg, graph, pos, x


def test_zero_input_zero_bias_gives_zero():  # [TRIVIAL] for the homogeneous configuration
    _, _, cfg, graph, pos, x = small_setup(0, use_pna=False, use_gpe=False)
    params = init_params(cfg, 0)
    for k in params:
        if k.endswith("bias"):
            params[k] = np.zeros_like(params[k])
    out = forward(np.zeros_like(x), graph, params, cfg)
    assert np.all(out.data == 0)


@pytest.mark.parametrize("seed", SEEDS)
def test_permutation_equivariance(seed):  # [DERIVED]
    rng, net, cfg, graph, pos, x = small_setup(seed)
    params = init_params(cfg, seed)
    known = np.ones(net.n, bool)
    known[5:] = False
    known[1] = False
    out = forward(x, graph, params, cfg, pos, known).data
    perm = rng.permutation(net.n)
    out_p = forward(x[perm], graph.permuted(perm), params, cfg, pos[perm], known[perm]).data
    np.testing.assert_allclose(out_p, out[perm], rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("t_sr", [1, 2, 4])
@pytest.mark.parametrize("use_pna,use_gpe", [(True, True), (False, True), (True, False), (False, False)])
def test_output_shape(t_sr, use_pna, use_gpe):  # [TRIVIAL]
    _, net, cfg, graph, pos, x = small_setup(1, t_sr=t_sr, use_pna=use_pna, use_gpe=use_gpe)
    out = forward(x, graph, init_params(cfg, 1), cfg, pos if use_gpe else None)
    assert out.shape == (net.n, x.shape[1] * t_sr)
    batch = forward(np.stack([x, x]), graph, init_params(cfg, 1), cfg, pos if use_gpe else None)
    assert batch.shape == (2, net.n, x.shape[1] * t_sr)
    np.testing.assert_allclose(batch.data[1], out.data)


def test_finite_for_inputs_beyond_training_range():
    _, _, cfg, graph, pos, x = small_setup(2)
    params = init_params(cfg, 2)
    span = np.abs(x).max()
    for scale in (0.5, 1.0, 1.5):
        assert np.all(np.isfinite(forward(x * scale, graph, params, cfg, pos).data))
    assert np.all(np.isfinite(forward(np.full_like(x, 1.5 * span), graph, params, cfg, pos).data))


def test_first_layer_ignores_unknown_rows():
    _, net, cfg, graph, pos, x = small_setup(3)
    params = init_params(cfg, 3)
    known = np.ones(net.n, bool)
    known[[2, 5, 6]] = False
    x[[5, 6]] = 0.0
    base = forward(x, graph, params, cfg, pos, known).data
    x2 = x.copy()
    x2[2] += 50.0  # value in an unknown row must not leak into the output
    np.testing.assert_array_equal(forward(x2, graph, params, cfg, pos, known).data, base)


def test_forward_errors():
    _, _, cfg, graph, pos, x = small_setup(4)
    params = init_params(cfg, 4)
    with pytest.raises(ValueError):
        forward(x, graph, params, cfg, None)
    with pytest.raises(ValueError):
        forward(x[:3], graph, params, cfg, pos)


def test_init_scheme():
    cfg = ModelConfig(hidden=8, blocks=2, gpe_scales=2)
    params = init_params(cfg, 0)
    np.testing.assert_array_equal(params["tc1.gate_bias"], 1.0)
    a = math.sqrt(1.0 / (18 * 9))
    assert np.abs(params["pna0.weight"]).max() <= a
    assert params["pna0.weight"].shape == (18 * 9, 8)
    assert params["pna1.weight"].shape == (18 * 8, 8)
    assert init_params(cfg, 0)["head.weight"].tobytes() == params["head.weight"].tobytes()


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize(
    "overrides",
    [{}, {"t_sr": 2}, {"use_pna": False}, {"weighted": False, "receive_first": False, "root": False}],
    ids=["full", "tsr", "mean-only", "plain"],
)
def test_forward_gradient(seed, overrides):
    """Every parameter of GPE, spatial, temporal and output layers."""
    rng, net, cfg, graph, pos, x = small_setup(seed, **overrides)
    params = init_params(cfg, seed)
    for k in params:  # move biases off zero so no ReLU sits at its kink
        params[k] = params[k] + rng.normal(scale=0.1, size=params[k].shape)
    target = rng.normal(size=(net.n, x.shape[1] * cfg.t_sr))
    mask = np.zeros(target.shape, bool)
    mask[[1, 5, 6]] = True
    known = np.ones(net.n, bool)
    known[[1, 5, 6]] = False
    check_grad(lambda p: huber(forward(x, graph, p, cfg, pos, known), target, mask, 0.5), params)


def test_config_round_trip():
    cfg = ModelConfig(hidden=5, use_pna=False, residual_tsr=False, t_sr=2)
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg
    assert ModelConfig.from_dict({**cfg.to_dict(), "legacy": 1}) == cfg
    assert replace(cfg, use_gpe=False).input_channels == 1

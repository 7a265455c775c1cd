"""Spatiotemporal imputation network.

The forward pass maps a window of sensor values ``(batch, n, p)`` to
``(batch, n, p * t_sr)``::

    values (+ positional encoding)
      -> [PNA spatial conv -> ReLU -> dropout -> gated temporal conv] x blocks
      -> width-1 output convolution

The first spatial layer only passes messages between observed original
sensors; later layers use the full k-NN graph.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset import SensorNetwork
from .graph import SensorGraph
from .nn import Tensor, as_tensor, concat, conv_time, dropout

__all__ = [
    "ModelConfig",
    "CoordinateFrame",
    "sinusoid_features",
    "gpe_encode",
    "pna_forward",
    "temporal_forward",
    "forward",
    "init_params",
    "AGGREGATORS",
    "SCALERS",
]

AGGREGATORS = ("mean", "softmax", "softmin", "std", "dmean", "dstd")
SCALERS = ("identity", "attenuation", "amplification")
MIN_AMPLIFICATION = 1e-3


@dataclass
class ModelConfig:
    hidden: int = 32
    blocks: int = 2
    gpe_scales: int = 4
    kernel_width: int = 3
    t_sr: int = 1
    k: int = 8
    gamma: float = 1.0
    dropout: float = 0.05
    epsilon_std: float = 1e-5
    use_pna: bool = True
    use_gpe: bool = True
    root: bool = True
    weighted: bool = True
    receive_first: bool = True
    residual_tsr: bool = True

    @property
    def input_channels(self) -> int:
        return 1 + (4 * self.gpe_scales if self.use_gpe else 0)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = cls.__dataclass_fields__
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass
class CoordinateFrame:
    """Affine map from lng/lat to delta coordinates in ``[-1, 1]``."""

    center: tuple = (0.0, 0.0)
    scale: tuple = (1.0, 1.0)

    @classmethod
    def fit(cls, coords) -> "CoordinateFrame":
        coords = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
        center = coords.mean(axis=0)
        extent = np.abs(coords - center).max(axis=0)
        return cls(tuple(center.tolist()), tuple(extent.tolist()))

    def apply(self, coords) -> np.ndarray:
        coords = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
        delta = coords - np.asarray(self.center)
        scale = np.asarray(self.scale, dtype=np.float64)
        # a zero-extent axis encodes as all zeros
        safe = np.where(scale > 0, scale, 1.0)
        return np.where(scale > 0, delta / safe, 0.0)


def sinusoid_features(delta, scales: int) -> np.ndarray:
    """``[cos(x/2^(m-1)), sin(x/2^(m-1)), cos(y/2^(m-1)), sin(y/2^(m-1))]`` for m = 1..M."""
    delta = np.asarray(delta, dtype=np.float64).reshape(-1, 2)
    x, y = delta[:, :1], delta[:, 1:]
    blocks = []
    for m in range(1, scales + 1):
        f = 2.0 ** (m - 1)
        blocks += [np.cos(x / f), np.sin(x / f), np.cos(y / f), np.sin(y / f)]
    return np.concatenate(blocks, axis=1)


def gpe_encode(network_or_coords, params: dict, scales: int, frame: CoordinateFrame | None = None):
    """Positional encoding ``(n, 4M)``: sinusoid features through a learned linear map."""
    coords = (
        network_or_coords.coords
        if isinstance(network_or_coords, SensorNetwork)
        else np.asarray(network_or_coords, dtype=np.float64)
    )
    frame = frame or CoordinateFrame.fit(coords)
    st = sinusoid_features(frame.apply(coords), scales)
    return as_tensor(st) @ params["gpe.weight"] + params["gpe.bias"]


# -- spatial convolution -------------------------------------------------------


def neighbourhood_statistics(adj: np.ndarray, eta: float):
    """Constant per-node quantities of a (batched) adjacency.

    Returns ``(member, has, count, dmean, dstd_sq, amplification)`` where
    ``member`` is the 0/1 neighbourhood matrix (``adj[i, j] > 0``).
    """
    member = (adj > 0).astype(np.float64)
    count = member.sum(axis=-1)
    has = count > 0
    safe = np.where(has, count, 1.0)
    adj_t = np.swapaxes(adj, -1, -2)
    dmean = (member * adj_t).sum(axis=-1) / safe
    dsq = (member * adj_t**2).sum(axis=-1) / safe
    degree = adj.sum(axis=-1)
    amp = np.maximum(np.log(degree + 1.0) / eta, MIN_AMPLIFICATION)
    amp = np.where(has, amp, 1.0)
    return member, has, safe, dmean, np.maximum(dsq - dmean**2, 0.0), amp


def _shifted_softmax(g: Tensor, valid: np.ndarray, hasf: np.ndarray, sign: float) -> Tensor:
    """Softmax-weighted mean of ``sign * g`` over axis 2, padding excluded."""
    s = g.data * sign
    shift = np.where(valid, s, -np.inf).max(axis=2, keepdims=True)
    # padding slots shift by their own value so exp stays at 1 before masking
    shift = np.where(valid, np.where(np.isfinite(shift), shift, 0.0), s)
    e = (g * sign - shift).exp() * valid
    num = (e * g).sum(axis=2)
    return num / (e.sum(axis=2) + (1.0 - hasf))


def aggregate(
    x: Tensor, adj: np.ndarray, eta: float, eps: float, use_pna: bool = True, weighted: bool = False
):
    """Neighbourhood aggregates of ``x`` ``(B, n, p, z)``.

    Returns a list of six ``(B, n, p, z)`` tensors (one per aggregator) and
    the per-node scalers ``(B, n)``; with ``use_pna=False`` only the mean.
    ``weighted`` turns mean and std into edge-weighted moments.
    """
    x = as_tensor(x)
    b, n, p, z = x.shape
    member, has, count, dmean, dvar, amp = neighbourhood_statistics(adj, eta)
    member = np.broadcast_to(member, (b, n, n))
    hasf = np.broadcast_to(has, (b, n)).astype(np.float64)[..., None]
    cnt = np.broadcast_to(count, (b, n))[..., None]
    flat = x.reshape(b, n, p * z)
    if weighted:
        w = np.broadcast_to(adj, (b, n, n))
        total = w.sum(axis=-1, keepdims=True)
        moment = w / np.where(total > 0, total, 1.0)
    else:
        moment = member / cnt
    mean = moment @ flat
    if not use_pna:
        return [mean.reshape(b, n, p, z)], None

    sq_mean = moment @ (flat * flat)
    std = ((sq_mean - mean * mean).relu() + eps).sqrt() * hasf

    # gather padded neighbour lists so each node gets its own shift; one
    # global shift underflows whole neighbourhoods once activations spread out
    kmax = max(int(cnt.max()), 1)
    idx = np.argsort(-member, axis=-1, kind="stable")[..., :kmax]
    valid = np.take_along_axis(member, idx, axis=-1)[..., None] > 0
    gathered = flat[np.arange(b)[:, None, None], idx]
    softmax = _shifted_softmax(gathered, valid, hasf, 1.0)
    softmin = _shifted_softmax(gathered, valid, hasf, -1.0)

    shape = (b, n, p * z)
    dm = np.broadcast_to(np.broadcast_to(dmean, (b, n))[..., None], shape)
    ds = np.broadcast_to(np.sqrt(np.broadcast_to(dvar, (b, n)) + eps)[..., None], shape) * hasf
    aggs = [mean, softmax, softmin, std, as_tensor(dm), as_tensor(ds)]
    aggs = [a.reshape(b, n, p, z) for a in aggs]
    return aggs, np.broadcast_to(amp, (b, n))


def pna_forward(
    x, adj, weight, bias, eta: float, eps: float = 1e-5, use_pna: bool = True, root_weight=None,
    weighted: bool = False,
):
    """One spatial convolution: aggregators x scalers, then linear + ReLU.

    ``x`` is ``(n, p, z)`` or ``(B, n, p, z)``; ``adj`` is ``(n, n)`` or
    ``(B, n, n)``. ``weight`` has ``18 * z`` rows (``z`` with ``use_pna=False``).
    ``root_weight`` (``z x z_out``), when given, adds a projection of the
    node's own features.
    """
    x = as_tensor(x)
    squeeze = x.ndim == 3
    if squeeze:
        x = x.reshape((1,) + x.shape)
    aggs, amp = aggregate(x, adj, eta, eps, use_pna, weighted)
    own = x @ root_weight if root_weight is not None else 0.0
    if not use_pna:
        out = (aggs[0] @ weight + own + bias).relu()
        return out.reshape(out.shape[1:]) if squeeze else out
    # rows of ``weight`` are scaler-major blocks [identity | att | amp] of the
    # six aggregators; a per-node scaler commutes with the projection, so
    # project the six aggregates once against all three blocks.
    weight = as_tensor(weight)
    width = weight.shape[0] // len(SCALERS)
    h = weight.shape[1]
    w3 = weight.reshape(len(SCALERS), width, h).transpose(1, 0, 2).reshape(width, len(SCALERS) * h)
    proj = concat(aggs, axis=-1) @ w3
    att = (1.0 / amp)[:, :, None, None]
    amp = amp[:, :, None, None]
    out = proj[..., :h] + proj[..., h : 2 * h] * att + proj[..., 2 * h :] * amp
    out = (out + own + bias).relu()
    return out.reshape(out.shape[1:]) if squeeze else out


# -- temporal convolution ------------------------------------------------------


def temporal_forward(x, value_weight, value_bias, gate_weight, gate_bias, t_sr: int = 1):
    """Gated temporal convolution; ``t_sr > 1`` unfolds channel groups into time.

    The kernels map ``z_in`` to ``z_out * t_sr`` channels; output channel
    ``r * z_out + c`` becomes sub-step ``r`` of channel ``c``.
    """
    x = as_tensor(x)
    value = conv_time(x, value_weight, value_bias)
    gate = conv_time(x, gate_weight, gate_bias)
    out = value * gate.sigmoid()
    if t_sr == 1:
        return out
    *lead, p, c = out.shape
    z = c // t_sr
    return out.reshape(tuple(lead) + (p * t_sr, z))


# -- parameters and full forward -------------------------------------------


def upsample_linear(x: np.ndarray, r: int) -> np.ndarray:
    """Stretch the last axis by ``r``, linear between frames, flat after the last."""
    nxt = np.concatenate([x[..., 1:], x[..., -1:]], axis=-1)
    frac = np.arange(r) / r
    out = x[..., None] * (1.0 - frac) + nxt[..., None] * frac
    return out.reshape(x.shape[:-1] + (x.shape[-1] * r,))


def init_params(cfg: ModelConfig, seed=0) -> dict:
    """Uniform ``(-a, a)`` initialisation with ``a = sqrt(1/fan_in)``."""
    rng = np.random.default_rng(seed)

    def uni(shape, fan_in):
        a = np.sqrt(1.0 / fan_in)
        return rng.uniform(-a, a, size=shape)

    params = {}
    m4 = 4 * cfg.gpe_scales
    if cfg.use_gpe:
        params["gpe.weight"] = uni((m4, m4), m4)
        params["gpe.bias"] = uni((m4,), m4)
    z_in = cfg.input_channels
    h, w = cfg.hidden, cfg.kernel_width
    n_agg = len(AGGREGATORS) * len(SCALERS) if cfg.use_pna else 1
    for l in range(cfg.blocks):
        params[f"pna{l}.weight"] = uni((n_agg * z_in, h), n_agg * z_in)
        params[f"pna{l}.bias"] = uni((h,), n_agg * z_in)
        if cfg.root:
            params[f"pna{l}.root"] = uni((z_in, h), n_agg * z_in)
        out = h * (cfg.t_sr if l == cfg.blocks - 1 else 1)
        params[f"tc{l}.value_weight"] = uni((w, h, out), w * h)
        params[f"tc{l}.value_bias"] = uni((out,), w * h)
        params[f"tc{l}.gate_weight"] = uni((w, h, out), w * h)
        params[f"tc{l}.gate_bias"] = (
            np.ones(out) if l == cfg.blocks - 1 else uni((out,), w * h)
        )
        z_in = h
    params["head.weight"] = uni((h, 1), h)
    params["head.bias"] = uni((1,), h)
    return params


def forward(
    x0,
    graph: SensorGraph,
    params: dict,
    cfg: ModelConfig,
    positional=None,
    known=None,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Impute (and optionally super-resolve) a window of sensor values.

    ``x0`` is ``(n, p)`` or ``(B, n, p)`` with unobserved rows zeroed.
    ``positional`` holds the ``(n, 4M)`` sinusoid features (required when
    the positional encoding is enabled). ``known`` is an optional ``(n,)``
    or ``(B, n)`` boolean mask of rows carrying observed values; other rows
    are zeroed and cannot send first-layer messages.
    """
    x0 = as_tensor(x0)
    squeeze = x0.ndim == 2
    if squeeze:
        x0 = x0.reshape((1,) + x0.shape)
    b, n, p = x0.shape
    if graph.n != n:
        raise ValueError(f"graph has {graph.n} nodes, input has {n} rows")
    if known is not None:
        known = np.broadcast_to(np.asarray(known, dtype=bool), (b, n))
        # rows flagged unknown contribute nothing, whatever they hold
        x0 = x0 * known[..., None].astype(np.float64)
    x = x0.reshape(b, n, p, 1)
    if cfg.use_gpe:
        if positional is None:
            raise ValueError("positional features required when use_gpe is set")
        pe = as_tensor(positional) @ params["gpe.weight"] + params["gpe.bias"]
        pe = pe.reshape(1, n, 1, pe.shape[-1]).broadcast_to((b, n, p, pe.shape[-1]))
        x = concat([x, pe], axis=-1)

    if cfg.receive_first:
        # unobserved rows still gather from observed originals in layer 1
        a_first = graph.a_sub * graph.original[None, :]
    else:
        a_first = graph.a_first
    if known is not None:
        send = known[:, None, :]
        recv = True if cfg.receive_first else known[:, :, None]
        a_first = a_first[None] * (send & recv)
    for l in range(cfg.blocks):
        adj = a_first if l == 0 else graph.a_sub
        x = pna_forward(
            x, adj, params[f"pna{l}.weight"], params[f"pna{l}.bias"],
            graph.eta, cfg.epsilon_std, cfg.use_pna, params.get(f"pna{l}.root"), cfg.weighted,
        )
        x = dropout(x, cfg.dropout, rng, training)
        x = temporal_forward(
            x,
            params[f"tc{l}.value_weight"], params[f"tc{l}.value_bias"],
            params[f"tc{l}.gate_weight"], params[f"tc{l}.gate_bias"],
            cfg.t_sr if l == cfg.blocks - 1 else 1,
        )
    out = x @ params["head.weight"] + params["head.bias"]
    out = out.reshape(out.shape[:-1])
    if cfg.residual_tsr and cfg.t_sr > 1:
        out = out + upsample_linear(x0.data, cfg.t_sr)
    return out.reshape(out.shape[1:]) if squeeze else out

"""Masked-subgraph training, windowed inference and imputation metrics."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dataset import ObservationSeries, SensorNetwork
from .graph import SensorGraph, build_graph, mean_pairwise_distance
from .model import CoordinateFrame, ModelConfig, forward, init_params, sinusoid_features
from .nn import AdamState, NonFiniteError, adam_step, gradient, huber, load_checkpoint, save_checkpoint

__all__ = [
    "SplitSpec",
    "TrainConfig",
    "TrainedModel",
    "TrainingDiverged",
    "make_split",
    "sample_subgraph",
    "train",
    "impute",
    "super_resolve",
    "evaluate_imputation",
    "rmse_mae",
]

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class SplitSpec:
    """Spatial known/unknown partition plus the temporal training span.

    ``known_steps`` is the number of leading timesteps available to
    training; the last ``val_fraction`` of them is reserved for validation.
    """

    known: np.ndarray
    unknown: np.ndarray
    alpha: float = 0.5
    window: int = 16
    known_steps: int | None = None
    val_fraction: float = 0.1

    def __post_init__(self):
        self.known = np.asarray(self.known, dtype=np.int64)
        self.unknown = np.asarray(self.unknown, dtype=np.int64)
        if np.intersect1d(self.known, self.unknown).size:
            raise ValueError("known and unknown sensors overlap")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.window < 2:
            raise ValueError("window must be at least 2")

    def train_span(self, t: int) -> tuple[int, int]:
        """``(train_end, val_end)`` step indices."""
        total = t if self.known_steps is None else min(self.known_steps, t)
        n_val = int(math.floor(self.val_fraction * total))
        return total - n_val, total

    def to_dict(self) -> dict:
        d = asdict(self)
        d["known"] = self.known.tolist()
        d["unknown"] = self.unknown.tolist()
        return d


def make_split(
    n: int, alpha: float, seed=0, window: int = 16, known_steps=None, unknown_rate=None
) -> SplitSpec:
    """Hold out ``floor(unknown_rate * n)`` random sensors (``unknown_rate`` defaults to ``alpha``)."""
    rng = np.random.default_rng(seed)
    rate = alpha if unknown_rate is None else unknown_rate
    perm = rng.permutation(n)
    n_u = int(math.floor(rate * n))
    return SplitSpec(np.sort(perm[n_u:]), np.sort(perm[:n_u]), alpha, window, known_steps)


@dataclass
class TrainConfig:
    epochs: int = 800
    lr: float = 3e-3
    lr_final: float | None = 3e-4
    batch_size: int = 2
    seed: int = 0
    eval_every: int = 50
    early_stop_patience: int | None = None
    random_subgraph_size: float | None = None


def sample_subgraph(
    values: np.ndarray,
    observed: np.ndarray,
    alpha: float,
    window: int,
    span: tuple[int, int],
    rng: np.random.Generator,
    t_sr: int = 1,
):
    """Draw a window and hide ``floor(alpha * n)`` rows.

    ``values``/``observed`` are the known-sensor rows. Returns
    ``(x_visible, target, hidden_rows, input_observed, target_observed, start)``
    where ``x_visible`` is the ``n x window`` input (hidden rows zeroed,
    sub-sampled by ``t_sr``) and ``target`` the ``n x window * t_sr``
    full-resolution slice.
    """
    n = values.shape[0]
    lo, hi = span
    length = window * t_sr
    if hi - lo < length:
        raise ValueError(f"window of {length} steps longer than the known span {hi - lo}")
    start = lo + int(rng.integers(0, hi - lo - length + 1))
    hidden = np.zeros(n, dtype=bool)
    hidden[rng.choice(n, size=int(math.floor(alpha * n)), replace=False)] = True
    target = values[:, start : start + length]
    target_obs = observed[:, start : start + length]
    x = target[:, ::t_sr].copy()
    x_obs = target_obs[:, ::t_sr] & ~hidden[:, None]
    x[~x_obs] = 0.0
    return x, target, hidden, x_obs, target_obs, start


def loss_mask(hidden: np.ndarray, target_obs: np.ndarray, t_sr: int) -> np.ndarray:
    """Entries the model did not see: hidden rows, plus inserted sub-steps when ``t_sr > 1``."""
    mask = np.repeat(hidden[:, None], target_obs.shape[1], axis=1)
    if t_sr > 1:
        inserted = np.ones(target_obs.shape[1], dtype=bool)
        inserted[::t_sr] = False
        mask |= inserted[None, :]
    return mask & target_obs


@dataclass
class TrainedModel:
    """Parameters plus everything needed to apply them to a new network."""

    config: ModelConfig
    params: dict
    frame: CoordinateFrame
    norm: tuple = (0.0, 1.0)
    distance_scale: float = 1.0
    eta: float = 1.0
    trace: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def graph(self, network: SensorNetwork) -> SensorGraph:
        return build_graph(network, self.config.k, self.distance_scale, self.eta)

    def positional(self, network: SensorNetwork) -> np.ndarray | None:
        if not self.config.use_gpe:
            return None
        return sinusoid_features(self.frame.apply(network.coords), self.config.gpe_scales)

    def save(self, directory) -> None:
        cfg = {
            "model": self.config.to_dict(),
            "frame": {"center": list(self.frame.center), "scale": list(self.frame.scale)},
            "norm": list(self.norm),
            "distance_scale": self.distance_scale,
            "eta": self.eta,
        }
        save_checkpoint(directory, self.params, cfg, {"meta": self.meta})
        with open(Path(directory) / "trace.jsonl", "w") as fh:
            for row in self.trace:
                fh.write(json.dumps(row, sort_keys=True) + "\n")

    @classmethod
    def load(cls, directory) -> "TrainedModel":
        params, manifest = load_checkpoint(directory)
        cfg = manifest["config"]
        trace = []
        path = Path(directory) / "trace.jsonl"
        if path.exists():
            trace = [json.loads(line) for line in path.read_text().splitlines() if line]
        return cls(
            ModelConfig.from_dict(cfg["model"]),
            params,
            CoordinateFrame(tuple(cfg["frame"]["center"]), tuple(cfg["frame"]["scale"])),
            tuple(cfg["norm"]),
            cfg["distance_scale"],
            cfg["eta"],
            trace,
            manifest.get("meta", {}),
        )


def train(
    network: SensorNetwork,
    data: ObservationSeries,
    split: SplitSpec,
    config: ModelConfig | None = None,
    train_config: TrainConfig | None = None,
    on_epoch=None,
) -> TrainedModel:
    """Fit the imputation network on the known sensors of ``split``.

    Every epoch draws ``batch_size`` random windows from the training span,
    hides ``floor(alpha * n_known)`` rows of each, and takes one Adam step
    on the Huber loss over the hidden entries. Values of the unknown
    sensors are never read. ``on_epoch`` receives each trace row.
    """
    cfg = config or ModelConfig()
    tc = train_config or TrainConfig()
    t_sr = cfg.t_sr
    known = split.known
    sub = network.subset(known)
    values = data.values[known].astype(np.float64)
    observed = data.mask[known]
    train_end, val_end = split.train_span(data.values.shape[1])
    span = (0, train_end)
    train_obs = observed[:, :train_end]
    if not train_obs.any():
        raise ValueError("no observed training values")
    mu = float(values[:, :train_end][train_obs].mean())
    sd = float(values[:, :train_end][train_obs].std()) or 1.0
    z = (values - mu) / sd
    z[~observed] = 0.0

    # geometry fitted on the full original network; coordinates carry no values
    originals = network.coords[network.original]
    frame = CoordinateFrame.fit(originals)
    scale = mean_pairwise_distance(originals)
    graph = build_graph(sub, cfg.k, scale, scale)
    pos = sinusoid_features(frame.apply(sub.coords), cfg.gpe_scales) if cfg.use_gpe else None

    params = init_params(cfg, tc.seed)
    state = AdamState(lr=tc.lr)
    rng = np.random.default_rng([tc.seed, 1])
    model = TrainedModel(cfg, params, frame, (mu, sd), scale, scale, [], {"seed": tc.seed})

    val_batch = None
    if val_end - train_end >= split.window * t_sr:
        vr = np.random.default_rng([tc.seed, 2])
        val_batch = [
            sample_subgraph(z, observed, split.alpha, split.window, (train_end, val_end), vr, t_sr)
            for _ in range(8)
        ]
    best = (math.inf, None)
    stale = 0
    if tc.random_subgraph_size is not None and not 0 < tc.random_subgraph_size <= 1:
        raise ValueError("random_subgraph_size must lie in (0, 1]")
    for epoch in range(tc.epochs):
        ep_z, ep_obs, ep_graph, ep_pos = z, observed, graph, pos
        if tc.random_subgraph_size is not None and tc.random_subgraph_size < 1:
            # optional: train this epoch on a random subset of the known sensors
            m = max(cfg.k + 1, int(math.ceil(tc.random_subgraph_size * len(known))))
            rows = np.sort(rng.choice(len(known), size=min(m, len(known)), replace=False))
            ep_z, ep_obs = z[rows], observed[rows]
            ep_graph = build_graph(sub.subset(rows), cfg.k, scale, scale)
            ep_pos = pos[rows] if pos is not None else None
        batch = [
            sample_subgraph(ep_z, ep_obs, split.alpha, split.window, span, rng, t_sr)
            for _ in range(tc.batch_size)
        ]
        x = np.stack([b[0] for b in batch])
        target = np.stack([b[1] for b in batch])
        vis = np.stack([~b[2] for b in batch])
        lmask = np.stack([loss_mask(b[2], b[4], t_sr) for b in batch])
        if not lmask.any():
            continue
        drop_rng = np.random.default_rng([tc.seed, 3, epoch])

        def objective(p):
            out = forward(x, ep_graph, p, cfg, ep_pos, vis, training=True, rng=drop_rng)
            return huber(out, target, lmask, cfg.gamma)

        try:
            loss, grads = gradient(objective, params)
        except NonFiniteError as exc:
            raise TrainingDiverged(f"epoch {epoch}: {exc}") from exc
        if tc.lr_final is not None:
            # cosine decay from lr to lr_final over the run
            frac = epoch / max(tc.epochs - 1, 1)
            state.lr = tc.lr_final + 0.5 * (tc.lr - tc.lr_final) * (1 + math.cos(math.pi * frac))
        adam_step(params, grads, state)
        row = {"epoch": epoch, "loss": loss}
        if val_batch is not None and (epoch + 1) % tc.eval_every == 0:
            row["val_loss"] = _batch_loss(val_batch, graph, params, cfg, pos)
            if row["val_loss"] < best[0]:
                best = (row["val_loss"], {k: v.copy() for k, v in params.items()})
                stale = 0
            else:
                stale += 1
        model.trace.append(row)
        if on_epoch is not None:
            on_epoch(row)
        if tc.early_stop_patience is not None and stale >= tc.early_stop_patience:
            log.info("early stop at epoch %d", epoch)
            break
    if best[1] is not None:
        model.params = best[1]
    model.meta.update({"epochs": len(model.trace), "split": split.to_dict()})
    return model


def _batch_loss(batch, graph, params, cfg, pos) -> float:
    x = np.stack([b[0] for b in batch])
    target = np.stack([b[1] for b in batch])
    vis = np.stack([~b[2] for b in batch])
    lmask = np.stack([loss_mask(b[2], b[4], cfg.t_sr) for b in batch])
    out = forward(x, graph, params, cfg, pos, vis)
    return float(huber(out, target, lmask, cfg.gamma).data)


def _window_starts(t: int, p: int, stride: int | None = None) -> list[int]:
    if t < p:
        raise ValueError(f"series of {t} steps shorter than the window {p}")
    stride = stride or p
    starts = list(range(0, t - p + 1, stride))
    if starts[-1] + p < t:
        starts.append(t - p)
    return starts


def impute(
    model: TrainedModel,
    network: SensorNetwork,
    data: ObservationSeries,
    visible=None,
    window: int | None = None,
) -> np.ndarray:
    """Run the network over the whole series and return ``n x (t * t_sr)`` values.

    ``visible`` is a boolean row mask of sensors whose observations are fed
    in (default: every original sensor); other rows enter as zeros.
    """
    cfg = model.config
    p = window or model.meta.get("split", {}).get("window", 16)
    n, t = data.values.shape
    visible = network.original.copy() if visible is None else np.asarray(visible, dtype=bool)
    mu, sd = model.norm
    z = (data.values.astype(np.float64) - mu) / sd
    obs = data.mask & visible[:, None]
    z[~obs] = 0.0
    graph = model.graph(network)
    pos = model.positional(network)
    r = cfg.t_sr
    out = np.zeros((n, t * r))
    # half-overlapping windows; each step is taken from the window in which
    # it lies farthest from a cut (series ends do not count as cuts)
    best = np.full(t * r, -1)
    starts = _window_starts(t, p, max(p // 2, 1))
    xs = np.stack([z[:, s : s + p] for s in starts])
    known = np.stack([obs[:, s : s + p].any(axis=1) for s in starts])
    for lo in range(0, len(starts), 8):
        pred = forward(xs[lo : lo + 8], graph, model.params, cfg, pos, known[lo : lo + 8]).data
        for s, y in zip(starts[lo : lo + 8], pred):
            q = np.arange(s * r, (s + p) * r)
            left = q - s * r if s > 0 else np.full(q.size, t * r)
            right = (s + p) * r - 1 - q if s + p < t else np.full(q.size, t * r)
            margin = np.minimum(left, right)
            take = margin > best[q]
            out[:, q[take]] = y[:, take]
            best[q[take]] = margin[take]
    return out * sd + mu


def super_resolve(model, network, coarse: ObservationSeries, visible=None, window=None):
    """Alias of :func:`impute` for a model trained with ``t_sr > 1``."""
    return impute(model, network, coarse, visible, window)


def rmse_mae(pred, truth, mask) -> dict:
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("no evaluation entries")
    err = (np.asarray(pred, dtype=np.float64) - np.asarray(truth, dtype=np.float64))[mask]
    return {"rmse": float(np.sqrt(np.mean(err**2))), "mae": float(np.mean(np.abs(err)))}


def evaluate_imputation(
    model: TrainedModel, network: SensorNetwork, data: ObservationSeries, split: SplitSpec
) -> dict:
    """RMSE/MAE on the unknown sensors, imputed from the known ones."""
    if split.unknown.size == 0:
        raise ValueError("empty unknown set")
    visible = np.zeros(network.n, dtype=bool)
    visible[split.known] = True
    pred = impute(model, network, data, visible, split.window)
    rows = np.zeros(network.n, dtype=bool)
    rows[split.unknown] = True
    mask = data.mask & rows[:, None]
    return rmse_mae(pred, data.values, mask)

"""Baselines, SSIM and the end-to-end benchmark runner."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.ndimage import correlate

from .dataset import ObservationSeries, SensorNetwork, save_matrix, save_raster, synthesize
from .densify import densify
from .graph import pairwise_haversine
from .interpolate import RbfConfig, interpolate
from .model import ModelConfig
from .training import TrainConfig, impute, make_split, rmse_mae, super_resolve, train

__all__ = [
    "knn_impute",
    "linear_tsr",
    "gaussian_window",
    "ssim",
    "ssim_series",
    "coarsen",
    "ExperimentConfig",
    "run_experiment",
    "write_report",
]

log = logging.getLogger(__name__)


def knn_impute(network: SensorNetwork, data: ObservationSeries, visible=None, k: int = 5) -> np.ndarray:
    """Fill rows outside ``visible`` with the mean of the ``k`` nearest observed rows.

    Observed means visible and unmasked at that timestep; distances are
    Haversine. Visible entries are returned unchanged.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    n, t = data.values.shape
    visible = network.original.copy() if visible is None else np.asarray(visible, dtype=bool)
    obs = data.mask & visible[:, None]
    out = data.values.astype(np.float64).copy()
    targets = np.flatnonzero(~visible)
    if targets.size == 0:
        return out
    dist = pairwise_haversine(network.coords[targets], network.coords)
    patterns, which = np.unique(obs.T, axis=0, return_inverse=True)
    which = which.reshape(-1)
    for p, pattern in enumerate(patterns):
        cols = np.flatnonzero(which == p)
        src = np.flatnonzero(pattern)
        if src.size < k:
            raise ValueError(f"only {src.size} observed sensors for k={k}")
        # stable sort so equidistant ties resolve by row order
        near = src[np.argsort(dist[:, src], axis=1, kind="stable")[:, :k]]
        out[np.ix_(targets, cols)] = out[:, cols][near].mean(axis=1)
    return out


def linear_tsr(values, sr: int) -> np.ndarray:
    """Piecewise-linear upsampling of ``n x t`` frames to ``(t - 1) * sr + 1`` steps."""
    if sr < 1:
        raise ValueError("sr must be positive")
    v = np.asarray(values, dtype=np.float64)
    squeeze = v.ndim == 1
    v = np.atleast_2d(v)
    t = v.shape[1]
    kept = np.arange(t) * sr
    fine = np.arange((t - 1) * sr + 1)
    out = np.stack([np.interp(fine, kept, row) for row in v])
    return out[0] if squeeze else out


def coarsen(data: ObservationSeries, sr: int) -> ObservationSeries:
    """Keep every ``sr``-th frame (the first frame is kept)."""
    t = data.values.shape[1] // sr
    return ObservationSeries(
        data.values[:, ::sr][:, :t].copy(),
        data.mask[:, ::sr][:, :t].copy(),
        data.time_step * sr,
        data.start,
        data.units,
    )


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r**2) / (2 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(a, b, data_range: float | None = None, size: int = 11, sigma: float = 1.5) -> float:
    """Mean windowed SSIM of two frames; NaN pixels are excluded pairwise.

    Local moments use a Gaussian window renormalised over valid pixels.
    Only windows lying fully inside the frame, centred on a valid pixel and
    with at least half their weight valid are averaged. ``data_range``
    defaults to the joint value range of both frames.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ValueError(f"frames must be equal-shape 2-D arrays, got {a.shape} and {b.shape}")
    valid = np.isfinite(a) & np.isfinite(b)
    if not valid.any():
        raise ValueError("no pixel is valid in both frames")
    if data_range is None:
        both = np.concatenate([a[valid], b[valid]])
        data_range = float(both.max() - both.min())
    if data_range <= 0:
        data_range = 1.0
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    win = gaussian_window(size, sigma)
    m = valid.astype(np.float64)
    a0 = np.where(valid, a, 0.0)
    b0 = np.where(valid, b, 0.0)

    def filt(x):
        return correlate(x, win, mode="constant", cval=0.0)

    wsum = filt(m)
    safe = np.where(wsum > 0, wsum, 1.0)
    mu_a = filt(a0) / safe
    mu_b = filt(b0) / safe
    var_a = np.maximum(filt(a0 * a0) / safe - mu_a**2, 0.0)
    var_b = np.maximum(filt(b0 * b0) / safe - mu_b**2, 0.0)
    cov = filt(a0 * b0) / safe - mu_a * mu_b
    s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2))
    pad = (size - 1) // 2
    use = valid & (wsum >= 0.5)
    interior = np.zeros_like(use)
    interior[pad : a.shape[0] - pad, pad : a.shape[1] - pad] = True
    use &= interior
    if not use.any():
        # frames smaller than one window: fall back to every valid centre
        use = valid & (wsum > 0)
    return float(s[use].mean())


def ssim_series(pred: np.ndarray, truth: np.ndarray) -> list[float]:
    """Per-frame SSIM with the truth frame's value range."""
    scores = []
    for p, t in zip(pred, truth):
        finite = t[np.isfinite(t)]
        rng = float(finite.max() - finite.min()) if finite.size else 1.0
        scores.append(ssim(p, t, data_range=rng))
    return scores


@dataclass
class ExperimentConfig:
    """Everything that determines a benchmark report."""

    n_sensors: int = 100
    n_steps: int = 512
    seed: int = 0
    split_seed: int = 1
    alphas: tuple = (0.2, 0.4, 0.5)
    knn_k: int = 5
    window: int = 16
    densify_alpha: float = 0.3
    deltas: tuple = (0.0, 0.2, 0.4)
    resolution: int = 64
    rbf: dict = field(default_factory=lambda: asdict(RbfConfig()))
    sr_rates: tuple = (2, 4)
    tsr_holdout: float = 0.2
    tsr_alpha: float = 0.0125
    protocols: tuple = ("imputation", "densification", "tsr")
    model: dict = field(default_factory=lambda: ModelConfig().to_dict())
    training: dict = field(default_factory=lambda: asdict(TrainConfig()))

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = cls.__dataclass_fields__
        unknown = set(d) - set(names)
        if unknown:
            raise ValueError(f"unknown experiment settings: {sorted(unknown)}")
        base = cls()
        merged = {}
        for k, v in d.items():
            if k in ("model", "training", "rbf"):
                merged[k] = {**getattr(base, k), **v}
            elif isinstance(getattr(base, k), tuple):
                merged[k] = tuple(v)
            else:
                merged[k] = v
        return replace(base, **merged)

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def _train_cfg(cfg: ExperimentConfig, **model_overrides):
    mc = ModelConfig.from_dict({**cfg.model, **model_overrides})
    tc = TrainConfig(**cfg.training)
    return mc, tc


def _imputation(cfg, net, obs, out_dir) -> dict:
    result = {}
    for alpha in cfg.alphas:
        split = make_split(net.n, alpha, cfg.split_seed, cfg.window)
        mc, tc = _train_cfg(cfg)
        model = train(net, obs, split, mc, tc)
        visible = np.zeros(net.n, dtype=bool)
        visible[split.known] = True
        pred = impute(model, net, obs, visible, split.window)
        rows = ~visible
        mask = obs.mask & rows[:, None]
        knn = knn_impute(net, obs, visible, cfg.knn_k)
        result[f"{alpha:g}"] = {
            "model": rmse_mae(pred, obs.values, mask),
            "knn": rmse_mae(knn, obs.values, mask),
            "n_unknown": int(rows.sum()),
            "final_loss": model.trace[-1]["loss"] if model.trace else None,
        }
        if out_dir is not None:
            base = out_dir / "imputation" / f"alpha-{alpha:g}"
            model.save(base / "checkpoint")
            save_matrix(base / "prediction", pred, rows=rows.tolist())
            save_matrix(base / "knn", knn)
        log.info("imputation alpha=%g %s", alpha, result[f"{alpha:g}"])
    return result


def _densification(cfg, data, out_dir) -> dict:
    net, obs = data.network, data.observations
    split = make_split(net.n, cfg.densify_alpha, cfg.split_seed, cfg.window)
    mc, tc = _train_cfg(cfg)
    model = train(net, obs, split, mc, tc)
    known_net = net.subset(split.known)
    known_obs = obs.rows(split.known)
    rbf = RbfConfig(**cfg.rbf)
    truth = data.truth.data.astype(np.float64)
    out = {"alpha": cfg.densify_alpha, "n_known": int(len(split.known)), "deltas": {}}
    for delta in cfg.deltas:
        dense_net, dense_obs = densify(known_net, known_obs, delta=delta, seed=cfg.seed)
        if dense_net.n > known_net.n:
            pred = impute(model, dense_net, dense_obs, dense_net.original, split.window)
            virtual = dense_net.virtual
            values = dense_obs.values.astype(np.float64)
            values[virtual] = pred[virtual, : values.shape[1]]
            mask = dense_obs.mask.copy()
            mask[virtual] = True
            dense_obs = ObservationSeries(values, mask, obs.time_step, obs.start, obs.units)
        raster = interpolate(
            dense_net, dense_obs, rbf, shape=truth.shape[1:], bounds=data.truth.bounds
        )
        scores = ssim_series(raster.data.astype(np.float64), truth)
        out["deltas"][f"{delta:g}"] = {
            "n_virtual": int(dense_net.virtual.sum()),
            "ssim": scores,
            "mean_ssim": float(np.mean(scores)),
        }
        if out_dir is not None:
            save_raster(out_dir / "densification" / f"delta-{delta:g}", raster)
        log.info("densification delta=%g mean ssim %.4f", delta, np.mean(scores))
    if out_dir is not None:
        model.save(out_dir / "densification" / "checkpoint")
    return out


def _tsr(cfg, net, obs, out_dir) -> dict:
    result = {}
    for r in cfg.sr_rates:
        split = make_split(
            net.n, cfg.tsr_alpha, cfg.split_seed, cfg.window, unknown_rate=cfg.tsr_holdout
        )
        mc, tc = _train_cfg(cfg, t_sr=int(r))
        model = train(net, obs, split, mc, tc)
        coarse = coarsen(obs, r)
        pred = super_resolve(model, net, coarse)
        lin = linear_tsr(coarse.values, r)
        span = lin.shape[1]
        inserted = np.ones(span, dtype=bool)
        inserted[::r] = False
        rows = np.zeros(net.n, dtype=bool)
        rows[split.unknown] = True
        mask = obs.mask[:, :span] & rows[:, None] & inserted[None, :]
        result[str(r)] = {
            "model": rmse_mae(pred[:, :span], obs.values[:, :span], mask),
            "linear": rmse_mae(lin, obs.values[:, :span], mask),
        }
        if out_dir is not None:
            base = out_dir / "tsr" / f"x{r}"
            model.save(base / "checkpoint")
            save_matrix(base / "prediction", pred)
        log.info("tsr x%d %s", r, result[str(r)])
    return result


def run_experiment(config: ExperimentConfig | dict | None = None, out_dir=None, data=None) -> dict:
    """Run the selected protocols on the synthetic benchmark (or ``data``).

    Returns a JSON-serialisable report. With ``out_dir`` the checkpoints,
    predictions and rasters behind every number are written there too.
    """
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_dict(config or {})
    unknown = set(cfg.protocols) - {"imputation", "densification", "tsr"}
    if unknown:
        raise ValueError(f"unknown protocols: {sorted(unknown)}")
    if data is None:
        data = synthesize(n_sensors=cfg.n_sensors, n_steps=cfg.n_steps, seed=cfg.seed)
    out = Path(out_dir) if out_dir is not None else None
    net, obs = data.network, data.observations
    report = {
        "format": "relmap-report/1",
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "ablation": {"use_pna": bool(cfg.model.get("use_pna", True)), "use_gpe": bool(cfg.model.get("use_gpe", True))},
    }
    if "imputation" in cfg.protocols:
        report["imputation"] = _imputation(cfg, net, obs, out)
    if "densification" in cfg.protocols:
        if data.truth is None:
            raise ValueError("the densification protocol needs a truth raster")
        report["densification"] = _densification(cfg, data, out)
    if "tsr" in cfg.protocols:
        report["tsr"] = _tsr(cfg, net, obs, out)
    if out is not None:
        write_report(out / "report.json", report)
    return report


def write_report(path, report: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")

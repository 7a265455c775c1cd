"""Command-line entry point: ``relmap <command> [options]``.

Every command reads an optional JSON config (``--config``) whose sections
(``model``, ``training``, ``densify``, ``rbf``, ``uncertainty``, ``render``,
``experiment``) supply defaults; explicit flags win.

A data directory holds ``sensors.csv``, ``boundary.json`` and either
``observations.csv`` or a binary ``series/`` store, plus an optional
``truth/`` raster.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import (
    DatasetError,
    ObservationSeries,
    load_network,
    load_observations,
    load_raster,
    load_series,
    save_boundary,
    load_matrix,
    save_matrix,
    save_network,
    save_raster,
    save_series,
    synthesize,
    write_synthetic,
)
from .densify import densify
from .evaluation import ExperimentConfig, coarsen, run_experiment
from .interpolate import RbfConfig, interpolate
from .model import ModelConfig
from .render import RenderSpec, render, save_svg
from .training import TrainConfig, TrainedModel, TrainingDiverged, impute, make_split, train
from .uncertainty import deviations, glyph_metrics, hatch_opacity, reference_values

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_RUNTIME = 4


class ConfigError(ValueError):
    pass


# -- data directories ---------------------------------------------------------


def load_data(directory):
    d = Path(directory)
    if not (d / "sensors.csv").exists():
        raise DatasetError(f"{d}: no sensors.csv")
    boundary = d / "boundary.json"
    network = load_network(d / "sensors.csv", boundary if boundary.exists() else None)
    if (d / "series").exists():
        obs = load_series(d / "series")
    elif (d / "observations.csv").exists():
        obs = load_observations(d / "observations.csv", network)
    else:
        raise DatasetError(f"{d}: no observations.csv or series/")
    if obs.values.shape[0] != network.n:
        raise DatasetError(f"{d}: series has {obs.values.shape[0]} rows for {network.n} sensors")
    return network, obs


def save_data(directory, network, obs: ObservationSeries | None) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_network(d / "sensors.csv", network)
    save_boundary(d / "boundary.json", network.boundary)
    if obs is not None:
        save_series(d / "series", obs)


# -- config handling ----------------------------------------------------------


def read_config(path) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def section(args, name: str, **flags) -> dict:
    """Config section ``name`` overlaid with the non-None ``flags``."""
    base = dict(args.config_data.get(name, {}))
    base.update({k: v for k, v in flags.items() if v is not None})
    return base


def _build(cls, values: dict, what: str):
    names = cls.__dataclass_fields__
    unknown = set(values) - set(names)
    if unknown:
        raise ConfigError(f"unknown {what} settings: {sorted(unknown)}")
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{what}: {exc}") from None


def model_config(args) -> ModelConfig:
    flags = {
        "hidden": getattr(args, "hidden", None),
        "blocks": getattr(args, "blocks", None),
        "gpe_scales": getattr(args, "scales", None),
        "k": getattr(args, "k", None),
        "t_sr": getattr(args, "t_sr", None),
        "gamma": getattr(args, "gamma", None),
    }
    if getattr(args, "no_pna", False):
        flags["use_pna"] = False
    if getattr(args, "no_gpe", False):
        flags["use_gpe"] = False
    return _build(ModelConfig, section(args, "model", **flags), "model")


# -- commands -----------------------------------------------------------------


def cmd_ingest(args) -> int:
    network = load_network(args.sensors, args.boundary)
    obs = load_observations(args.observations, network)
    save_data(args.output, network, obs)
    print(json.dumps({"sensors": network.n, "steps": int(obs.values.shape[1])}))
    return EXIT_OK


def cmd_synth(args) -> int:
    opts = section(args, "synth", n_sensors=args.sensors, n_steps=args.steps, seed=args.seed,
                   noise=args.noise, missing_rate=args.missing)
    data = synthesize(**opts)
    write_synthetic(args.output, data)
    save_series(Path(args.output) / "series", data.observations)
    print(json.dumps({"sensors": data.network.n, "steps": data.config.n_steps}))
    return EXIT_OK


def cmd_densify(args) -> int:
    network, obs = load_data(args.data)
    opts = section(args, "densify", delta=args.delta, lam=args.lam, theta=args.theta,
                   iterations=args.iterations, seed=args.seed)
    dense, dense_obs = densify(network, obs, **opts)
    save_data(args.output, dense, dense_obs)
    print(json.dumps({"original": int(dense.original.sum()), "virtual": int(dense.virtual.sum())}))
    return EXIT_OK


def cmd_train(args) -> int:
    network, obs = load_data(args.data)
    cfg = model_config(args)
    tc = _build(TrainConfig, section(args, "training", epochs=args.epochs, seed=args.seed,
                                     lr=args.lr, batch_size=args.batch_size), "training")
    alpha = args.alpha if args.alpha is not None else args.config_data.get("alpha", 0.5)
    split = make_split(int(network.original.sum()), alpha, args.split_seed, args.window,
                       unknown_rate=args.holdout)
    orig = np.flatnonzero(network.original)
    split.known, split.unknown = orig[split.known], orig[split.unknown]

    def emit(row):
        if not args.quiet:
            print(json.dumps(row, sort_keys=True), flush=True)

    model = train(network, obs, split, cfg, tc, on_epoch=emit)
    model.save(args.output)
    return EXIT_OK


def cmd_impute(args) -> int:
    network, obs = load_data(args.data)
    model = TrainedModel.load(args.checkpoint)
    visible = network.original.copy()
    if args.hide:
        ids = {s.strip() for s in args.hide.split(",") if s.strip()}
        missing = ids - set(network.ids)
        if missing:
            raise DatasetError(f"unknown sensor ids: {sorted(missing)}")
        visible &= np.array([i not in ids for i in network.ids])
    pred = impute(model, network, obs, visible)
    out = ObservationSeries(pred, np.ones(pred.shape, dtype=bool), obs.time_step, obs.start, obs.units)
    save_data(args.output, network, out)
    return EXIT_OK


def cmd_tsr(args) -> int:
    network, obs = load_data(args.data)
    model = TrainedModel.load(args.checkpoint)
    r = model.config.t_sr
    if args.coarsen:
        obs = coarsen(obs, r)
    pred = impute(model, network, obs)
    out = ObservationSeries(pred, np.ones(pred.shape, dtype=bool), obs.time_step / r, obs.start, obs.units)
    save_data(args.output, network, out)
    print(json.dumps({"steps_in": int(obs.values.shape[1]), "steps_out": int(pred.shape[1])}))
    return EXIT_OK


def cmd_interpolate(args) -> int:
    network, obs = load_data(args.data)
    cfg = _build(RbfConfig, section(args, "rbf", epsilon=args.epsilon, lambda_smooth=args.lam,
                                    n_neighbors=args.neighbors), "rbf")
    raster = interpolate(network, obs, cfg, resolution=args.width)
    save_raster(args.output, raster)
    return EXIT_OK


def cmd_uncertainty(args) -> int:
    network, obs = load_data(args.data)
    opts = section(args, "uncertainty", grid=args.grid, neighbors=args.neighbors,
                   window=args.window, hatch_threshold=args.hatch_threshold, seed=args.seed)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    model = TrainedModel.load(args.checkpoint)
    ref = reference_values(model, network, obs, opts.get("seed", 0))
    save_matrix(out / "reference", ref)
    dev, valid = deviations(obs, ref, args.timestep, opts.get("window", 1))
    glyphs = glyph_metrics(network, dev, opts.get("grid", 8), opts.get("neighbors", 5), valid)
    glyphs.save_csv(out / "glyphs.csv")
    hatch = hatch_opacity(network, opts.get("hatch_threshold", 0.3))
    save_matrix(out / "hatch", hatch.opacity, threshold=hatch.threshold, bounds=list(hatch.bounds))
    return EXIT_OK


def cmd_render(args) -> int:
    raster = load_raster(args.raster)
    network, obs = load_data(args.data)
    opts = section(args, "render", colormap=args.colormap, width_px=args.width)
    spec = _build(RenderSpec, opts, "render")
    t = args.timestep
    if not -raster.data.shape[0] <= t < raster.data.shape[0]:
        raise DatasetError(f"timestep {t} outside the raster's {raster.data.shape[0]} frames")
    glyphs = None
    if args.reference is not None:
        ref, _ = load_matrix(args.reference)
        dev, valid = deviations(obs, ref, t, args.window)
        glyphs = glyph_metrics(network, dev, args.grid, args.neighbors, valid, bounds=raster.bounds)
    hatch = hatch_opacity(network, args.hatch_threshold, raster.data.shape[1:], raster.bounds)
    svg = render(raster, glyphs, hatch, spec, t, boundary=network.boundary)
    save_svg(args.output, svg)
    return EXIT_OK


def cmd_eval(args) -> int:
    exp = dict(args.config_data.get("experiment", {}))
    for key in ("model", "training", "rbf"):
        if key in args.config_data:
            exp[key] = {**exp.get(key, {}), **args.config_data[key]}
    if args.alphas:
        exp["alphas"] = [float(a) for a in args.alphas.split(",")]
    if args.sr:
        exp["sr_rates"] = [int(r) for r in args.sr.split(",")]
    if args.protocols:
        exp["protocols"] = args.protocols.split(",")
    for key, val in (("seed", args.seed), ("n_sensors", args.sensors), ("n_steps", args.steps)):
        if val is not None:
            exp[key] = val
    model = dict(exp.get("model", {}))
    if args.no_pna:
        model["use_pna"] = False
    if args.no_gpe:
        model["use_gpe"] = False
    exp["model"] = model
    if args.epochs is not None:
        exp["training"] = {**exp.get("training", {}), "epochs": args.epochs}
    try:
        cfg = ExperimentConfig.from_dict(exp)
        bad = set(cfg.protocols) - {"imputation", "densification", "tsr"}
        if bad:
            raise ValueError(f"unknown protocols: {sorted(bad)}")
        ModelConfig.from_dict(cfg.model)
        TrainConfig(**cfg.training)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    report = run_experiment(cfg, args.output)
    if args.output is None:
        print(json.dumps(report, indent=2, sort_keys=True))
    else:
        print(json.dumps(_summary(report), sort_keys=True))
    return EXIT_OK


def _summary(report: dict) -> dict:
    out = {}
    for alpha, row in report.get("imputation", {}).items():
        out[f"imputation/{alpha}"] = {m: row[m]["rmse"] for m in ("model", "knn")}
    for delta, row in report.get("densification", {}).get("deltas", {}).items():
        out[f"ssim/{delta}"] = row["mean_ssim"]
    for r, row in report.get("tsr", {}).items():
        out[f"tsr/x{r}"] = {m: row[m]["rmse"] for m in ("model", "linear")}
    return out


# -- parser -------------------------------------------------------------------


def _model_flags(p):
    p.add_argument("--no-pna", action="store_true", help="single mean aggregator, identity scaler")
    p.add_argument("--no-gpe", action="store_true", help="drop the positional encoding")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relmap", description="Sensor imputation, densification and reliability maps.")
    parser.add_argument("--version", action="version", version=f"relmap {__version__}")
    parser.add_argument("--config", help="JSON file with per-command defaults")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate CSV inputs and convert them to a data directory")
    p.add_argument("--sensors", required=True)
    p.add_argument("--observations", required=True)
    p.add_argument("--boundary")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="generate the synthetic benchmark")
    p.add_argument("--sensors", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--missing", type=float)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("densify", help="add virtual sensors in sparse regions")
    p.add_argument("--data", required=True)
    p.add_argument("--delta", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--iterations", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_densify)

    p = sub.add_parser("train", help="train the imputation network")
    p.add_argument("--data", required=True)
    p.add_argument("--alpha", type=float)
    p.add_argument("--holdout", type=float, help="fraction of sensors never trained on (default alpha)")
    p.add_argument("--split-seed", type=int, default=1)
    p.add_argument("--window", type=int, default=16)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--blocks", type=int)
    p.add_argument("--scales", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--t-sr", type=int)
    p.add_argument("--quiet", action="store_true", help="suppress per-epoch JSON lines")
    _model_flags(p)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("impute", help="fill unobserved and virtual sensors")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--hide", help="comma-separated ids to treat as unobserved")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_impute)

    p = sub.add_parser("tsr", help="temporal super-resolution with a t_sr > 1 checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--coarsen", action="store_true", help="subsample the input first (evaluation)")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_tsr)

    p = sub.add_parser("interpolate", help="RBF rasters from a data directory")
    p.add_argument("--data", required=True)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--neighbors", type=int)
    p.add_argument("--width", type=int, default=64, help="cells along the longer axis")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_interpolate)

    p = sub.add_parser("uncertainty", help="reference values, glyph table and hatch opacity")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--timestep", type=int, default=0)
    p.add_argument("--grid", type=int)
    p.add_argument("--neighbors", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--hatch-threshold", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_uncertainty)

    p = sub.add_parser("render", help="compose the SVG map for one timestep")
    p.add_argument("--raster", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--reference", help="reference matrix written by `uncertainty`")
    p.add_argument("--timestep", type=int, default=0)
    p.add_argument("--colormap")
    p.add_argument("--width", type=int)
    p.add_argument("--grid", type=int, default=8)
    p.add_argument("--neighbors", type=int, default=5)
    p.add_argument("--window", type=int, default=1)
    p.add_argument("--hatch-threshold", type=float, default=0.3)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("eval", help="run the benchmark protocols and write a report")
    p.add_argument("--protocols", help="comma list of imputation,densification,tsr")
    p.add_argument("--alphas")
    p.add_argument("--sr")
    p.add_argument("--seed", type=int)
    p.add_argument("--sensors", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--epochs", type=int)
    _model_flags(p)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        args.config_data = read_config(args.config)
        return args.func(args)
    except ConfigError as exc:
        print(f"relmap: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"relmap: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (TrainingDiverged, ValueError, RuntimeError) as exc:
        print(f"relmap: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

"""Checkpoint layout: ``manifest.json`` plus one float32 matrix directory per tensor."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..dataset import load_matrix, save_matrix

__all__ = ["save_checkpoint", "load_checkpoint"]


def save_checkpoint(directory, params: dict, config: dict, extra: dict | None = None) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = sorted(params)
    manifest = {
        "format": "relmap-checkpoint/1",
        "layers": [{"name": k, "shape": list(np.shape(params[k]))} for k in names],
        "config": config,
    }
    if extra:
        manifest.update(extra)
    for k in names:
        save_matrix(directory / "tensors" / k, params[k])
    with open(directory / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)


def load_checkpoint(directory) -> tuple[dict, dict]:
    """Return ``(params, manifest)``; tensors come back as float64 arrays."""
    directory = Path(directory)
    with open(directory / "manifest.json") as fh:
        manifest = json.load(fh)
    params = {}
    for layer in manifest["layers"]:
        arr, _ = load_matrix(directory / "tensors" / layer["name"])
        if list(arr.shape) != layer["shape"]:
            raise ValueError(f"checkpoint tensor {layer['name']} has shape {arr.shape}")
        params[layer["name"]] = arr.astype(np.float64)
    return params, manifest

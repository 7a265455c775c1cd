"""Per-cell reliability glyph statistics and density-driven hatch opacity."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .dataset import ObservationSeries, SensorNetwork, grid_centers
from .densify import kde_at, silverman_bandwidth
from .graph import pairwise_haversine

__all__ = [
    "GlyphGrid",
    "HatchField",
    "reference_values",
    "deviations",
    "glyph_metrics",
    "hatch_opacity",
    "opacity_from_density",
]


@dataclass
class GlyphGrid:
    """Normalised glyph statistics on a ``size x size`` grid over ``bounds``.

    Row 0 is the northern row. ``h_p``, ``h_low`` and ``h_high`` are NaN in
    cells without sensors; ``width`` is defined everywhere.
    """

    size: int
    bounds: tuple
    h_p: np.ndarray
    h_low: np.ndarray
    h_high: np.ndarray
    width: np.ndarray
    count: np.ndarray
    scale: float = 0.0

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["row", "col", "h_p", "h_low", "h_high", "w", "count"])
            for r in range(self.size):
                for c in range(self.size):
                    vals = (self.h_p[r, c], self.h_low[r, c], self.h_high[r, c])
                    out.writerow(
                        [r, c]
                        + ["" if np.isnan(v) else repr(float(v)) for v in vals]
                        + [repr(float(self.width[r, c])), int(self.count[r, c])]
                    )

    def cell_bounds(self, row: int, col: int) -> tuple:
        west, south, east, north = self.bounds
        dx = (east - west) / self.size
        dy = (north - south) / self.size
        return (west + col * dx, north - (row + 1) * dy, west + (col + 1) * dx, north - row * dy)


@dataclass
class HatchField:
    opacity: np.ndarray
    bounds: tuple
    threshold: float


def reference_values(model, network: SensorNetwork, data: ObservationSeries, seed=0) -> np.ndarray:
    """Cross-imputed reference for every sensor.

    A random half of the original sensors is imputed from the other half,
    then the roles swap; each sensor keeps the value from the pass in which
    it was hidden. ``model`` is a trained model and imputation goes through
    :func:`relmap.training.impute`.
    """
    from .training import impute

    orig = np.flatnonzero(network.original)
    if len(orig) < 2:
        raise ValueError("reference values need at least 2 original sensors")
    perm = np.random.default_rng(seed).permutation(orig)
    halves = (perm[: len(perm) // 2], perm[len(perm) // 2 :])
    ref = np.zeros(data.values.shape, dtype=np.float64)
    for hidden, shown in (halves, halves[::-1]):
        visible = np.zeros(network.n, dtype=bool)
        visible[shown] = True
        pred = impute(model, network, data, visible)
        ref[hidden] = pred[hidden, : data.values.shape[1]]
    return ref


def deviations(data: ObservationSeries, ref, timestep: int, window: int = 1):
    """``X - X_ref`` averaged over the trailing ``window`` steps ending at ``timestep``.

    Returns ``(dev, valid)``; sensors unobserved over the whole window are invalid.
    """
    t = data.values.shape[1]
    if not -t <= timestep < t:
        raise IndexError(f"timestep {timestep} outside a series of {t} steps")
    timestep %= t
    lo = max(0, timestep - max(window, 1) + 1)
    vals = data.values[:, lo : timestep + 1].astype(np.float64)
    obs = data.mask[:, lo : timestep + 1]
    diff = np.where(obs, vals - np.asarray(ref, dtype=np.float64)[:, lo : timestep + 1], 0.0)
    count = obs.sum(axis=1)
    valid = count > 0
    dev = np.where(valid, diff.sum(axis=1) / np.maximum(count, 1), np.nan)
    return dev, valid


def _cell_index(coords: np.ndarray, bounds, size: int):
    west, south, east, north = bounds
    col = np.floor((coords[:, 0] - west) / (east - west) * size).astype(int)
    row = np.floor((north - coords[:, 1]) / (north - south) * size).astype(int)
    return np.clip(row, 0, size - 1), np.clip(col, 0, size - 1)


def glyph_metrics(
    network: SensorNetwork,
    dev: np.ndarray,
    grid_size: int = 8,
    n_neighbors: int = 5,
    valid=None,
    bounds=None,
) -> GlyphGrid:
    """Glyph heights and head widths from per-sensor deviations ``dev``.

    Heights are the cell mean and quartiles of the deviations, all divided
    by the largest absolute raw value among them. Width is one minus the
    cell center's mean distance to its ``n_neighbors`` nearest original
    sensors, relative to the largest such mean.
    """
    if grid_size < 1:
        raise ValueError("grid_size must be positive")
    bounds = tuple(network.bounds if bounds is None else bounds)
    dev = np.asarray(dev, dtype=np.float64)
    orig = network.original.copy()
    if valid is not None:
        orig &= np.asarray(valid, dtype=bool)
    orig &= np.isfinite(dev)
    coords = network.coords[orig]
    d = dev[orig]

    shape = (grid_size, grid_size)
    h_p = np.full(shape, np.nan)
    h_low = np.full(shape, np.nan)
    h_high = np.full(shape, np.nan)
    count = np.zeros(shape, dtype=np.int64)
    rows, cols = _cell_index(coords, bounds, grid_size)
    for r, c in sorted(set(zip(rows.tolist(), cols.tolist()))):
        vals = d[(rows == r) & (cols == c)]
        count[r, c] = len(vals)
        h_p[r, c] = vals.mean()
        h_low[r, c], h_high[r, c] = np.quantile(vals, [0.25, 0.75], method="linear")
    stacked = np.stack([h_p, h_low, h_high])
    scale = float(np.nanmax(np.abs(stacked))) if count.any() else 0.0
    if scale > 0:
        h_p, h_low, h_high = h_p / scale, h_low / scale, h_high / scale
    else:
        h_p, h_low, h_high = (np.where(count > 0, 0.0, np.nan) for _ in range(3))

    centers = grid_centers(bounds, grid_size, grid_size).reshape(-1, 2)
    sensors = network.coords[network.original]
    width = np.ones(shape)
    if len(sensors):
        k = min(n_neighbors, len(sensors))
        dist = np.sort(pairwise_haversine(centers, sensors), axis=1)[:, :k].mean(axis=1)
        top = dist.max()
        if top > 0:
            width = (1.0 - dist / top).reshape(shape)
    return GlyphGrid(grid_size, bounds, h_p, h_low, h_high, np.clip(width, 0.0, 1.0), count, scale)


def hatch_opacity(
    network: SensorNetwork, threshold: float = 0.3, shape=(64, 64), bounds=None
) -> HatchField:
    """Opacity ``clamp((threshold - D) / threshold, 0, 1)`` per pixel.

    ``D`` is the original-sensor kernel density relative to its peak over
    the grid, so ``threshold`` is a fraction of the densest spot. Pixels
    outside the boundary get 0.
    """
    bounds = tuple(network.bounds if bounds is None else bounds)
    h, w = shape
    centers = grid_centers(bounds, h, w).reshape(-1, 2)
    coords = network.coords[network.original]
    dens = kde_at(centers, coords, silverman_bandwidth(coords))
    peak = dens.max()
    rel = dens / peak if peak > 0 else np.zeros_like(dens)
    opacity = opacity_from_density(rel, threshold)
    opacity[~network.contains(centers)] = 0.0
    return HatchField(opacity.reshape(h, w), bounds, float(threshold))


def opacity_from_density(density, threshold: float) -> np.ndarray:
    """The hatch ramp applied to given density values."""
    if not threshold > 0:
        raise ValueError("hatch threshold must be positive")
    return np.clip((threshold - np.asarray(density, dtype=np.float64)) / threshold, 0.0, 1.0)

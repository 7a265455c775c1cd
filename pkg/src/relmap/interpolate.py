"""Local Gaussian RBF interpolation from sensors to rasters.

Each pixel is fitted on its ``n_neighbors`` nearest sensors with the
regularised system

    [K + lambda I   P] [c]   [x]
    [P^T            0] [b] = [0]

where ``K[i, j] = exp(-epsilon * r_ij**2)`` and ``P`` holds monomials up to
``poly_degree``. Distances are planar kilometres divided by the domain
diagonal, so ``epsilon`` does not depend on the size of the study area.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.spatial import cKDTree

from .dataset import ObservationSeries, RasterField, SensorNetwork, grid_centers, raster_shape
from .graph import EARTH_RADIUS_KM

__all__ = [
    "RbfConfig",
    "RbfFit",
    "PlanarFrame",
    "monomials",
    "rbf_solve",
    "interpolate_points",
    "interpolate",
]


@dataclass(frozen=True)
class RbfConfig:
    epsilon: float = 1.0
    lambda_smooth: float = 0.5
    n_neighbors: int = 10
    poly_degree: int = 1

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.lambda_smooth >= 0:
            raise ValueError("lambda_smooth must be non-negative")
        if self.poly_degree not in (-1, 0, 1, 2):
            raise ValueError("poly_degree must be -1 (none), 0, 1 or 2")
        if self.n_neighbors < max(self.n_monomials, 1):
            raise ValueError(
                f"n_neighbors={self.n_neighbors} is below the {self.n_monomials} polynomial terms"
            )

    @property
    def n_monomials(self) -> int:
        q = self.poly_degree
        return 0 if q < 0 else (q + 1) * (q + 2) // 2


@dataclass(frozen=True)
class PlanarFrame:
    """Equirectangular projection to kilometres, scaled by the bounds diagonal."""

    lng0: float
    lat0: float
    unit_km: float

    @classmethod
    def for_bounds(cls, bounds) -> "PlanarFrame":
        west, south, east, north = (float(v) for v in bounds)
        lat0 = 0.5 * (south + north)
        k = math.radians(1.0) * EARTH_RADIUS_KM
        dx = (east - west) * k * math.cos(math.radians(lat0))
        dy = (north - south) * k
        diag = math.hypot(dx, dy)
        if diag <= 0:
            raise ValueError("zero-area domain")
        return cls(0.5 * (west + east), lat0, diag)

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        k = math.radians(1.0) * EARTH_RADIUS_KM / self.unit_km
        x = (pts[:, 0] - self.lng0) * k * math.cos(math.radians(self.lat0))
        y = (pts[:, 1] - self.lat0) * k
        return np.column_stack([x, y])


def monomials(points: np.ndarray, degree: int) -> np.ndarray:
    """Columns ``1, x, y, x^2, xy, y^2`` truncated to ``degree``."""
    x, y = points[:, 0], points[:, 1]
    cols = []
    if degree >= 0:
        cols.append(np.ones_like(x))
    if degree >= 1:
        cols += [x, y]
    if degree >= 2:
        cols += [x * x, x * y, y * y]
    return np.column_stack(cols) if cols else np.zeros((len(x), 0))


def _kernel(a: np.ndarray, b: np.ndarray, epsilon: float) -> np.ndarray:
    d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1)
    return np.exp(-epsilon * d2)


@dataclass
class RbfFit:
    centers: np.ndarray
    c: np.ndarray
    b: np.ndarray
    config: RbfConfig

    def __call__(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        cfg = self.config
        out = _kernel(pts, self.centers, cfg.epsilon) @ self.c
        if cfg.n_monomials:
            out = out + monomials(pts, cfg.poly_degree) @ self.b
        return out


def rbf_solve(centers, values, config: RbfConfig | None = None) -> RbfFit:
    """Fit coefficients for ``values`` (``m`` or ``m x t``) at planar ``centers``."""
    cfg = config or RbfConfig()
    pts = np.asarray(centers, dtype=np.float64).reshape(-1, 2)
    vals = np.asarray(values, dtype=np.float64)
    m = len(pts)
    if vals.shape[0] != m:
        raise ValueError(f"{m} centers but {vals.shape[0]} values")
    if m < max(cfg.n_monomials, 1):
        raise ValueError(f"{m} centers cannot determine {cfg.n_monomials} polynomial terms")
    if len(np.unique(pts, axis=0)) < m:
        raise ValueError("duplicate centers")
    q = cfg.n_monomials
    a = np.zeros((m + q, m + q))
    a[:m, :m] = _kernel(pts, pts, cfg.epsilon) + cfg.lambda_smooth * np.eye(m)
    if q:
        p = monomials(pts, cfg.poly_degree)
        a[:m, m:] = p
        a[m:, :m] = p.T
    rhs = np.zeros((m + q,) + vals.shape[1:])
    rhs[:m] = vals
    try:
        with warnings.catch_warnings():
            # near-flat kernels are ill-conditioned at lambda=0 yet still exact
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            sol = scipy.linalg.solve(a, rhs, assume_a="sym", check_finite=True)
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise ValueError(f"singular RBF system: {exc}") from exc
    if not np.all(np.isfinite(sol)):
        raise ValueError("singular RBF system")
    return RbfFit(pts, sol[:m], sol[m:], cfg)


def _solve_groups(src, vals, dst, cfg: RbfConfig) -> np.ndarray:
    """Evaluate local fits at ``dst``; ``vals`` is ``m x t``."""
    k = min(cfg.n_neighbors, len(src))
    if k < max(cfg.n_monomials, 1):
        raise ValueError(f"only {len(src)} sensors for {cfg.n_monomials} polynomial terms")
    _, idx = cKDTree(src).query(dst, k=k)
    idx = np.sort(idx.reshape(len(dst), k), axis=1)
    groups, inverse = np.unique(idx, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    out = np.empty((len(dst), vals.shape[1]))
    order = np.argsort(inverse, kind="stable")
    cuts = np.searchsorted(inverse[order], np.arange(len(groups) + 1))
    for g, members in enumerate(groups):
        rows = order[cuts[g] : cuts[g + 1]]
        fit = rbf_solve(src[members], vals[members], cfg)
        out[rows] = fit(dst[rows])
    return out


def interpolate_points(
    coords, values, mask, targets, bounds, config: RbfConfig | None = None
) -> np.ndarray:
    """Interpolate sensor ``values`` (``n x t``) at lng/lat ``targets``.

    Sensors whose ``mask`` entry is false are left out of that timestep's
    fit. Returns ``len(targets) x t`` float64.
    """
    cfg = config or RbfConfig()
    frame = PlanarFrame.for_bounds(bounds)
    src = frame.apply(coords)
    dst = frame.apply(targets)
    vals = np.asarray(values, dtype=np.float64)
    if vals.ndim == 1:
        vals = vals[:, None]
    mask = np.ones(vals.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if mask.ndim == 1:
        mask = np.broadcast_to(mask[:, None], vals.shape)
    out = np.empty((len(dst), vals.shape[1]))
    # timesteps sharing a sensor mask share the neighbour search and solves
    patterns, which = np.unique(mask.T, axis=0, return_inverse=True)
    which = which.reshape(-1)
    for k, pattern in enumerate(patterns):
        cols = np.flatnonzero(which == k)
        rows = np.flatnonzero(pattern)
        if rows.size == 0:
            raise ValueError("no observed sensors at some timestep")
        out[:, cols] = _solve_groups(src[rows], vals[np.ix_(rows, cols)], dst, cfg)
    return out


def interpolate(
    network: SensorNetwork,
    data: ObservationSeries,
    config: RbfConfig | None = None,
    resolution: int = 64,
    shape: tuple[int, int] | None = None,
    bounds=None,
    units: str | None = None,
) -> RasterField:
    """Rasterise every timestep of ``data`` over the network's bounding box.

    Pixels outside the boundary are ``NaN``. ``shape`` overrides the
    ``(h, w)`` derived from ``resolution``.
    """
    bounds = tuple(network.bounds if bounds is None else bounds)
    h, w = shape or raster_shape(bounds, resolution)
    centers = grid_centers(bounds, h, w).reshape(-1, 2)
    inside = network.contains(centers)
    grid = np.full((data.values.shape[1], h * w), np.nan)
    if inside.any():
        vals = interpolate_points(
            network.coords, data.values, data.mask, centers[inside], bounds, config
        )
        grid[:, inside] = vals.T
    return RasterField(grid.reshape(-1, h, w), bounds, data.units if units is None else units)

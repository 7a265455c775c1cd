"""Adaptive sensor densification.

Virtual sensors are drawn from an inverted kernel density of the original
network and then spread out with a few Lloyd (centroidal Voronoi) steps
in which original sensors stay fixed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import shapely
from scipy.spatial import Delaunay

from .dataset import (
    DatasetError,
    ObservationSeries,
    SensorNetwork,
    grid_centers,
    raster_shape,
)

__all__ = [
    "DensityField",
    "silverman_bandwidth",
    "kde",
    "kde_at",
    "invert_density",
    "sample_virtual",
    "voronoi_cells",
    "cvt_relax",
    "cvt_energy",
    "densify",
]

DEFAULT_RESOLUTION = 256


@dataclass
class DensityField:
    """Scalar grid over ``bounds``; row 0 is the northern edge."""

    grid: np.ndarray
    bounds: tuple[float, float, float, float]
    bandwidth: tuple[float, float] = (0.0, 0.0)

    @property
    def cell_size(self) -> tuple[float, float]:
        west, south, east, north = self.bounds
        h, w = self.grid.shape
        return (east - west) / w, (north - south) / h

    def centers(self) -> np.ndarray:
        return grid_centers(self.bounds, *self.grid.shape)

    def relative(self) -> np.ndarray:
        """Grid divided by its peak (all zeros stay zeros)."""
        peak = self.grid.max()
        return self.grid / peak if peak > 0 else np.zeros_like(self.grid)


def silverman_bandwidth(coords) -> tuple[float, float]:
    """Per-axis Silverman bandwidth for 2-D data: ``sigma * n**(-1/6)``."""
    coords = np.asarray(coords, dtype=np.float64)
    n = len(coords)
    sigma = coords.std(axis=0, ddof=1)
    if np.any(sigma <= 0) or not np.all(np.isfinite(sigma)):
        raise DatasetError("degenerate bandwidth: sensors do not spread on both axes")
    return tuple(sigma * n ** (-1.0 / 6.0))


def kde_at(points, samples, bandwidth) -> np.ndarray:
    """Gaussian product-kernel density of ``samples`` evaluated at ``points``."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    samples = np.asarray(samples, dtype=np.float64).reshape(-1, 2)
    hx, hy = bandwidth
    out = np.empty(len(points))
    norm = 1.0 / (len(samples) * 2 * math.pi * hx * hy)
    # chunked to bound the m x n temporary
    for lo in range(0, len(points), 4096):
        p = points[lo : lo + 4096]
        dx = (p[:, None, 0] - samples[None, :, 0]) / hx
        dy = (p[:, None, 1] - samples[None, :, 1]) / hy
        out[lo : lo + 4096] = norm * np.exp(-0.5 * (dx * dx + dy * dy)).sum(axis=1)
    return out


def kde(
    network: SensorNetwork,
    grid_resolution: int = DEFAULT_RESOLUTION,
    *,
    bounds=None,
    clip_to_boundary: bool = True,
) -> DensityField:
    """Kernel density of the original sensors on a grid over the boundary box.

    Values are in sensors per square degree and integrate to one over the
    plane. ``bounds`` overrides the grid extent; with ``clip_to_boundary``
    cells whose centers fall outside the boundary are zeroed.
    """
    coords = network.coords[network.original]
    if len(coords) < 2:
        raise DatasetError("kde needs at least 2 original sensors")
    bw = silverman_bandwidth(coords)
    bounds = tuple(bounds) if bounds is not None else network.bounds
    h, w = raster_shape(bounds, grid_resolution)
    centers = grid_centers(bounds, h, w).reshape(-1, 2)
    grid = kde_at(centers, coords, bw).reshape(h, w)
    if clip_to_boundary:
        grid[~network.contains(centers).reshape(h, w)] = 0.0
    return DensityField(grid, bounds, bw)


def invert_density(
    d: DensityField, lam: float = 5.0, theta: float = 0.05, inside=None
) -> DensityField:
    """Sampling probability ``max(exp(-lam * D) - theta, 0)`` scaled to ``[0, 1]``.

    ``D`` is taken relative to its peak so ``lam`` does not depend on the
    coordinate units. ``inside`` is an optional boolean grid of cells within
    the boundary; cells outside it end at 0.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    if not 0 <= theta < 1:
        raise ValueError("theta must lie in [0, 1)")
    raw = np.maximum(np.exp(-lam * d.relative()) - theta, 0.0)
    if inside is not None:
        raw = np.where(inside, raw, 0.0)
    lo, hi = raw.min(), raw.max()
    # a spread at rounding level is a constant field, not a ramp to stretch
    if hi - lo > 1e-9:
        out = (raw - lo) / (hi - lo)
    else:
        out = np.where(raw > 0, 1.0, 0.0)
    if inside is not None:
        out = np.where(inside, out, 0.0)
    return DensityField(out, d.bounds, d.bandwidth)


def sample_virtual(dbar: DensityField, count: int, seed=None, boundary=None) -> np.ndarray:
    """Draw ``count`` cells without replacement, weighted by ``dbar``.

    Each sample is placed uniformly inside its cell; when ``boundary`` (a
    :class:`SensorNetwork` or shapely geometry) is given, positions falling
    outside it are redrawn and finally snapped to the cell center.
    """
    rng = np.random.default_rng(seed)
    if count == 0:
        return np.zeros((0, 2))
    weights = dbar.grid.ravel().astype(np.float64)
    support = np.count_nonzero(weights > 0)
    if support < count:
        raise ValueError(f"only {support} nonzero cells for {count} samples")
    cells = rng.choice(weights.size, size=count, replace=False, p=weights / weights.sum())
    h, w = dbar.grid.shape
    west, south, east, north = dbar.bounds
    dx, dy = (east - west) / w, (north - south) / h
    rows, cols = np.divmod(cells, w)
    x0 = west + cols * dx
    y0 = north - (rows + 1) * dy
    jitter = rng.uniform(size=(count, 2))
    pts = np.column_stack([x0 + jitter[:, 0] * dx, y0 + jitter[:, 1] * dy])
    if boundary is not None:
        geom = boundary.polygon if isinstance(boundary, SensorNetwork) else boundary
        for _ in range(16):
            bad = ~shapely.covers(geom, shapely.points(pts))
            if not bad.any():
                break
            j = rng.uniform(size=(bad.sum(), 2))
            pts[bad] = np.column_stack([x0[bad] + j[:, 0] * dx, y0[bad] + j[:, 1] * dy])
        bad = ~shapely.covers(geom, shapely.points(pts))
        pts[bad] = np.column_stack([x0[bad] + 0.5 * dx, y0[bad] + 0.5 * dy])
    return pts


# -- Voronoi / CVT -----------------------------------------------------------


def _clip_halfplane(poly: np.ndarray, normal: np.ndarray, offset: float) -> np.ndarray:
    """Keep the part of convex ``poly`` where ``normal . x <= offset``."""
    if len(poly) == 0:
        return poly
    side = poly @ normal - offset
    out = []
    m = len(poly)
    for i in range(m):
        a, b = poly[i], poly[(i + 1) % m]
        sa, sb = side[i], side[(i + 1) % m]
        if sa <= 0:
            out.append(a)
        if (sa < 0 < sb) or (sb < 0 < sa):
            t = sa / (sa - sb)
            out.append(a + t * (b - a))
    return np.asarray(out).reshape(-1, 2)


def _neighbours(points: np.ndarray) -> list[set]:
    n = len(points)
    if n <= 8:
        return [set(range(n)) - {i} for i in range(n)]
    try:
        tri = Delaunay(points)
    except Exception:
        return [set(range(n)) - {i} for i in range(n)]
    indptr, indices = tri.vertex_neighbor_vertices
    return [set(indices[indptr[i] : indptr[i + 1]].tolist()) for i in range(n)]


def voronoi_cells(points, bounds, which=None) -> list[np.ndarray]:
    """Voronoi cells of ``points`` clipped to the rectangle ``bounds``.

    Cells are built by intersecting half-planes with the Delaunay
    neighbours, which is exact for a convex clip region. ``which`` limits the
    cells computed; the result is aligned with it.
    """
    points = np.asarray(points, dtype=np.float64)
    west, south, east, north = bounds
    box = np.array([[west, south], [east, south], [east, north], [west, north]], dtype=np.float64)
    which = range(len(points)) if which is None else which
    nbrs = _neighbours(points)
    cells = []
    for i in which:
        poly = box
        p = points[i]
        for j in sorted(nbrs[i]):
            q = points[j]
            normal = q - p
            if not normal.any():
                continue
            poly = _clip_halfplane(poly, normal, normal @ (p + q) / 2.0)
        cells.append(poly)
    return cells


def polygon_centroid(poly: np.ndarray) -> np.ndarray:
    x, y = poly[:, 0], poly[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = cross.sum() / 2.0
    if abs(area) < 1e-300:
        return poly.mean(axis=0)
    cx = ((x + xn) * cross).sum() / (6.0 * area)
    cy = ((y + yn) * cross).sum() / (6.0 * area)
    return np.array([cx, cy])


def cvt_relax(
    network: SensorNetwork, virtual, iterations: int = 3, return_history: bool = False
):
    """Move virtual sensors to their Voronoi-cell centroids.

    Original sensors never move. A virtual sensor whose cell (clipped to
    the boundary box) is not contained in the boundary polygon keeps its
    position for that iteration. The diagram is rebuilt every iteration.
    """
    virtual = np.asarray(virtual, dtype=np.float64).reshape(-1, 2).copy()
    history = [virtual.copy()]
    if iterations <= 0 or len(virtual) == 0:
        return (virtual, history) if return_history else virtual
    fixed = network.coords[network.original]
    poly = network.polygon
    tol = 1e-9 * network.diagonal
    shell = poly.buffer(tol)
    n_fixed = len(fixed)
    for _ in range(iterations):
        pts = np.vstack([fixed, virtual])
        cells = voronoi_cells(pts, network.bounds, which=range(n_fixed, len(pts)))
        moved = virtual.copy()
        for k, cell in enumerate(cells):
            if len(cell) < 3:
                continue
            if not shell.covers(shapely.Polygon(cell)):
                continue
            moved[k] = polygon_centroid(cell)
        virtual = moved
        history.append(virtual.copy())
    return (virtual, history) if return_history else virtual


def cvt_energy(points, bounds, resolution: int = 400, inside=None) -> float:
    """Grid-quadrature CVT energy: integral of squared distance to the nearest point."""
    from scipy.spatial import cKDTree

    h, w = raster_shape(bounds, resolution)
    centers = grid_centers(bounds, h, w).reshape(-1, 2)
    west, south, east, north = bounds
    area = (east - west) * (north - south) / (h * w)
    dist, _ = cKDTree(np.asarray(points, dtype=np.float64)).query(centers)
    d2 = dist**2
    if inside is not None:
        d2 = d2[np.asarray(inside).ravel()]
    return float(d2.sum() * area)


def densify(
    network: SensorNetwork,
    observations: ObservationSeries | None = None,
    delta: float = 0.4,
    lam: float = 5.0,
    theta: float = 0.05,
    iterations: int = 3,
    seed=None,
    grid_resolution: int = DEFAULT_RESOLUTION,
):
    """Append ``floor(delta * n)`` virtual sensors (and empty observation rows)."""
    if delta < 0:
        raise ValueError("delta must be non-negative")
    n_orig = int(network.original.sum())
    count = int(math.floor(delta * n_orig + 1e-9))
    if count == 0:
        return network, observations
    d = kde(network, grid_resolution)
    inside = network.contains(d.centers().reshape(-1, 2)).reshape(d.grid.shape)
    dbar = invert_density(d, lam, theta, inside=inside)
    pts = sample_virtual(dbar, count, seed=seed, boundary=network)
    pts = cvt_relax(network, pts, iterations)
    dense = network.with_virtual(pts)
    obs = observations.append_missing(count) if observations is not None else None
    return dense, obs

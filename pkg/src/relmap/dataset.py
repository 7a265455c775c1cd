"""Sensor metadata, observation matrices, rasters and their on-disk formats.

Three text formats are read and written:

* ``sensors.csv`` with header ``id,lng,lat`` (an optional ``kind`` column
  marks ``Original``/``Virtual`` sensors),
* ``observations.csv``, wide, one row per sensor id and one ISO-8601
  timestamp per column; an empty cell is a missing reading,
* ``boundary.json``, a single polygon ring of ``[lng, lat]`` pairs (either a
  bare list or a GeoJSON ``Polygon``).

Matrices are persisted as a directory holding ``header.json`` and
``data.bin`` (row-major, little-endian float32).
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from pathlib import Path
from typing import NamedTuple

import numpy as np
import shapely
from shapely.geometry import MultiPoint, Polygon

__all__ = [
    "DatasetError",
    "SensorNetwork",
    "ObservationSeries",
    "RasterField",
    "SynthConfig",
    "load_network",
    "save_network",
    "load_boundary",
    "save_boundary",
    "default_boundary",
    "load_observations",
    "save_observations_csv",
    "save_matrix",
    "load_matrix",
    "save_series",
    "load_series",
    "save_raster",
    "load_raster",
    "synthesize",
    "Synthetic",
    "write_synthetic",
    "grid_centers",
    "raster_shape",
    "synthetic_field",
]

ORIGINAL = "Original"
VIRTUAL = "Virtual"


class DatasetError(ValueError):
    """Raised for malformed or inconsistent input data."""


@dataclass
class SensorNetwork:
    """Sensor ids and ``(lng, lat)`` coordinates plus the domain boundary.

    ``coords`` is an ``n x 2`` array in degrees, ``virtual`` flags sensors
    added by densification and ``boundary`` is a closed ring (first vertex
    not repeated).
    """

    ids: list[str]
    coords: np.ndarray
    boundary: np.ndarray
    virtual: np.ndarray = None

    def __post_init__(self):
        self.ids = [str(i) for i in self.ids]
        self.coords = np.asarray(self.coords, dtype=np.float64).reshape(-1, 2)
        self.boundary = _open_ring(np.asarray(self.boundary, dtype=np.float64))
        if self.virtual is None:
            self.virtual = np.zeros(len(self.ids), dtype=bool)
        self.virtual = np.asarray(self.virtual, dtype=bool)
        self._validate()

    def _validate(self):
        n = len(self.ids)
        if self.coords.shape != (n, 2) or self.virtual.shape != (n,):
            raise DatasetError("ids, coords and kind flags differ in length")
        seen = set()
        for sid in self.ids:
            if sid in seen:
                raise DatasetError(f"duplicate sensor id {sid!r}")
            seen.add(sid)
        if not np.all(np.isfinite(self.coords)):
            raise DatasetError("non-finite sensor coordinate")
        lng, lat = self.coords[:, 0], self.coords[:, 1]
        bad = np.flatnonzero((np.abs(lng) > 180) | (np.abs(lat) > 90))
        if bad.size:
            raise DatasetError(f"coordinate out of range for sensor {self.ids[bad[0]]!r}")
        if len(self.boundary) < 3:
            raise DatasetError("boundary ring needs at least 3 vertices")
        poly = self.polygon
        if poly.area <= 0:
            raise DatasetError("boundary polygon has zero area")
        if n:
            inside = shapely.covers(poly.buffer(1e-9 * self.diagonal), shapely.points(self.coords))
            if not np.all(inside):
                j = int(np.flatnonzero(~inside)[0])
                raise DatasetError(f"sensor {self.ids[j]!r} lies outside the boundary")

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def original(self) -> np.ndarray:
        return ~self.virtual

    @property
    def polygon(self) -> Polygon:
        return Polygon(self.boundary)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        """``(west, south, east, north)`` of the boundary ring."""
        b = self.boundary
        return (b[:, 0].min(), b[:, 1].min(), b[:, 0].max(), b[:, 1].max())

    @property
    def diagonal(self) -> float:
        w, s, e, n = self.bounds
        return math.hypot(e - w, n - s)

    def contains(self, points) -> np.ndarray:
        """Boolean mask of points inside or on the boundary."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        return shapely.covers(self.polygon, shapely.points(pts))

    def subset(self, index) -> "SensorNetwork":
        index = np.asarray(index)
        if index.dtype == bool:
            index = np.flatnonzero(index)
        return SensorNetwork(
            [self.ids[i] for i in index], self.coords[index], self.boundary, self.virtual[index]
        )

    def with_virtual(self, points, prefix: str = "v") -> "SensorNetwork":
        """Return a copy with ``points`` appended as virtual sensors."""
        points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        taken = set(self.ids)
        new_ids = []
        k = 0
        while len(new_ids) < len(points):
            cand = f"{prefix}{k}"
            if cand not in taken:
                new_ids.append(cand)
            k += 1
        return SensorNetwork(
            self.ids + new_ids,
            np.vstack([self.coords, points]),
            self.boundary,
            np.concatenate([self.virtual, np.ones(len(points), dtype=bool)]),
        )


@dataclass
class ObservationSeries:
    """``n x t`` readings with a validity mask; missing entries hold 0."""

    values: np.ndarray
    mask: np.ndarray
    time_step: float = 3600.0
    start: str | None = None
    units: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.values.ndim != 2 or self.values.shape != self.mask.shape:
            raise DatasetError("values and mask must be matching n x t matrices")
        if not np.all(np.isfinite(self.values[self.mask])):
            raise DatasetError("non-finite observed value")
        self.values = np.where(self.mask, self.values, np.float32(0))

    @property
    def shape(self):
        return self.values.shape

    def rows(self, index) -> "ObservationSeries":
        return ObservationSeries(
            self.values[index], self.mask[index], self.time_step, self.start, self.units
        )

    def columns(self, index) -> "ObservationSeries":
        return ObservationSeries(
            self.values[:, index], self.mask[:, index], self.time_step, self.start, self.units
        )

    def append_missing(self, count: int) -> "ObservationSeries":
        t = self.values.shape[1]
        return ObservationSeries(
            np.vstack([self.values, np.zeros((count, t), np.float32)]),
            np.vstack([self.mask, np.zeros((count, t), bool)]),
            self.time_step,
            self.start,
            self.units,
        )


@dataclass
class RasterField:
    """A ``t x h x w`` stack of grids over ``bounds = (west, south, east, north)``.

    Row 0 is the northern edge; values are sampled at pixel centers and
    ``NaN`` marks pixels outside the boundary.
    """

    data: np.ndarray
    bounds: tuple[float, float, float, float]
    units: str = ""

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim == 2:
            data = data[None]
        self.data = data
        self.bounds = tuple(float(b) for b in self.bounds)

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def pixel_centers(self) -> np.ndarray:
        return grid_centers(self.bounds, self.height, self.width)


def grid_centers(bounds, height: int, width: int) -> np.ndarray:
    """``(h, w, 2)`` lng/lat of pixel centers, row 0 at the north edge."""
    west, south, east, north = bounds
    xs = west + (np.arange(width) + 0.5) * (east - west) / width
    ys = north - (np.arange(height) + 0.5) * (north - south) / height
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx, gy], axis=-1)


def raster_shape(bounds, resolution: int) -> tuple[int, int]:
    """Grid ``(h, w)`` with ``resolution`` cells on the longer axis and square cells."""
    west, south, east, north = bounds
    span_x, span_y = east - west, north - south
    if span_x <= 0 or span_y <= 0:
        raise DatasetError("zero-area domain")
    if span_x >= span_y:
        return max(1, int(round(resolution * span_y / span_x))), resolution
    return resolution, max(1, int(round(resolution * span_x / span_y)))


def _open_ring(ring: np.ndarray) -> np.ndarray:
    ring = ring.reshape(-1, 2)
    if len(ring) > 1 and np.array_equal(ring[0], ring[-1]):
        ring = ring[:-1]
    return ring


# -- sensors -----------------------------------------------------------------


def default_boundary(coords) -> np.ndarray:
    """Convex hull of ``coords`` pushed outward by 2% of its bounding diagonal.

    Each hull edge moves out by the same distance and adjacent edges meet
    at mitred corners, so the ring keeps the hull's vertex count.
    """
    coords = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
    hull = MultiPoint([tuple(c) for c in coords]).convex_hull
    minx, miny, maxx, maxy = hull.bounds
    diag = math.hypot(maxx - minx, maxy - miny)
    if diag == 0:
        raise DatasetError("cannot derive a boundary from coincident sensors")
    grown = hull.buffer(0.02 * diag, join_style="mitre", mitre_limit=10.0)
    return np.asarray(grown.exterior.coords)[:-1]


def load_boundary(path) -> np.ndarray:
    with open(path) as fh:
        obj = json.load(fh)
    if isinstance(obj, dict):
        if obj.get("type") == "Feature":
            obj = obj["geometry"]
        if obj.get("type") != "Polygon":
            raise DatasetError("boundary.json must hold a single Polygon")
        obj = obj["coordinates"][0]
    ring = np.asarray(obj, dtype=np.float64)
    if ring.ndim != 2 or ring.shape[1] != 2:
        raise DatasetError("boundary ring must be a list of [lng, lat] pairs")
    return _open_ring(ring)


def save_boundary(path, ring) -> None:
    ring = _open_ring(np.asarray(ring, dtype=np.float64))
    closed = np.vstack([ring, ring[:1]])
    obj = {"type": "Polygon", "coordinates": [closed.tolist()]}
    with open(path, "w") as fh:
        json.dump(obj, fh)


def load_network(path, boundary_path=None) -> SensorNetwork:
    """Read ``sensors.csv``; without a boundary file the expanded hull is used."""
    ids, coords, kinds = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip().lower() for h in next(reader)]
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        try:
            ci, cx, cy = header.index("id"), header.index("lng"), header.index("lat")
        except ValueError:
            raise DatasetError(f"{path}: header must contain id,lng,lat") from None
        ck = header.index("kind") if "kind" in header else None
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                sid = row[ci].strip()
                lng, lat = float(row[cx]), float(row[cy])
                kind = row[ck].strip() if ck is not None else ORIGINAL
            except (IndexError, ValueError):
                raise DatasetError(f"{path}: line {line_no}: unparseable row {row!r}") from None
            if not sid:
                raise DatasetError(f"{path}: line {line_no}: empty id")
            if kind not in (ORIGINAL, VIRTUAL):
                raise DatasetError(f"{path}: line {line_no}: unknown kind {kind!r}")
            ids.append(sid)
            coords.append((lng, lat))
            kinds.append(kind == VIRTUAL)
    coords = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
    if boundary_path is None:
        sibling = Path(path).with_name("boundary.json")
        boundary_path = sibling if sibling.exists() else None
    if boundary_path is not None:
        ring = load_boundary(boundary_path)
    else:
        _check_ids_and_ranges(ids, coords)
        ring = default_boundary(coords)
    return SensorNetwork(ids, coords, ring, np.asarray(kinds, dtype=bool))


def _check_ids_and_ranges(ids, coords):
    # run before hull construction so the user sees the real problem
    seen = set()
    for sid in ids:
        if sid in seen:
            raise DatasetError(f"duplicate sensor id {sid!r}")
        seen.add(sid)
    bad = (np.abs(coords[:, 0]) > 180) | (np.abs(coords[:, 1]) > 90)
    if bad.any():
        raise DatasetError(f"coordinate out of range for sensor {ids[int(np.argmax(bad))]!r}")


def save_network(path, network: SensorNetwork, kind_column: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "lng", "lat", "kind"] if kind_column else ["id", "lng", "lat"])
        for sid, (lng, lat), virt in zip(network.ids, network.coords, network.virtual):
            row = [sid, repr(float(lng)), repr(float(lat))]
            if kind_column:
                row.append(VIRTUAL if virt else ORIGINAL)
            writer.writerow(row)


# -- observations ------------------------------------------------------------


def load_observations(path, network: SensorNetwork) -> ObservationSeries:
    """Read the wide observations CSV and align its rows to ``network``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        stamps = []
        for col in header[1:]:
            try:
                stamps.append(datetime.fromisoformat(col.strip()))
            except ValueError:
                raise DatasetError(f"{path}: bad timestamp column {col!r}") from None
        t = len(stamps)
        if t == 0:
            raise DatasetError(f"{path}: no timestamp columns")
        steps = {(b - a).total_seconds() for a, b in zip(stamps, stamps[1:])}
        if len(steps) > 1:
            raise DatasetError(f"{path}: non-uniform timestamp spacing {sorted(steps)}")
        step = steps.pop() if steps else 0.0
        if t > 1 and step <= 0:
            raise DatasetError(f"{path}: timestamps must increase")
        index = {sid: i for i, sid in enumerate(network.ids)}
        values = np.zeros((network.n, t), dtype=np.float32)
        mask = np.zeros((network.n, t), dtype=bool)
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            sid = row[0].strip()
            if sid not in index:
                raise DatasetError(f"{path}: line {line_no}: unknown sensor id {sid!r}")
            i = index[sid]
            cells = row[1:] + [""] * (t - len(row) + 1)
            for j, cell in enumerate(cells[:t]):
                cell = cell.strip()
                if not cell:
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise DatasetError(
                        f"{path}: line {line_no}: non-numeric cell {cell!r}"
                    ) from None
                if not math.isfinite(v):
                    raise DatasetError(f"{path}: line {line_no}: non-finite cell {cell!r}")
                values[i, j] = v
                mask[i, j] = True
    return ObservationSeries(values, mask, step, stamps[0].isoformat())


def save_observations_csv(path, series: ObservationSeries, network: SensorNetwork) -> None:
    start = datetime.fromisoformat(series.start) if series.start else datetime(2000, 1, 1)
    t = series.values.shape[1]
    cols = [(start + timedelta(seconds=series.time_step * j)).isoformat() for j in range(t)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id"] + cols)
        for i, sid in enumerate(network.ids):
            row = [repr(float(v)) if m else "" for v, m in zip(series.values[i], series.mask[i])]
            writer.writerow([sid] + row)


# -- binary matrices ---------------------------------------------------------


def save_matrix(directory, array, **meta) -> None:
    """Write ``array`` as ``header.json`` + little-endian float32 ``data.bin``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    arr = np.ascontiguousarray(np.asarray(array, dtype="<f4"))
    header = {"shape": list(arr.shape), "dtype": "float32", "byte_order": "little"}
    header.update(meta)
    with open(directory / "header.json", "w") as fh:
        json.dump(header, fh, indent=1, sort_keys=True)
    with open(directory / "data.bin", "wb") as fh:
        fh.write(arr.tobytes(order="C"))


def load_matrix(directory) -> tuple[np.ndarray, dict]:
    directory = Path(directory)
    with open(directory / "header.json") as fh:
        header = json.load(fh)
    if header.get("dtype") != "float32" or header.get("byte_order") != "little":
        raise DatasetError(f"{directory}: unsupported matrix encoding")
    shape = tuple(header["shape"])
    raw = np.fromfile(directory / "data.bin", dtype="<f4")
    if raw.size != int(np.prod(shape)):
        raise DatasetError(f"{directory}: data.bin size does not match header shape")
    return raw.reshape(shape).astype(np.float32), header


def save_series(directory, series: ObservationSeries) -> None:
    directory = Path(directory)
    meta = {"time_step": series.time_step, "units": series.units, "start": series.start}
    save_matrix(directory / "values", series.values, **meta)
    save_matrix(directory / "mask", series.mask.astype(np.float32))


def load_series(directory) -> ObservationSeries:
    directory = Path(directory)
    values, header = load_matrix(directory / "values")
    mask, _ = load_matrix(directory / "mask")
    return ObservationSeries(
        values, mask > 0.5, header.get("time_step", 0.0), header.get("start"), header.get("units", "")
    )


def save_raster(directory, raster: RasterField) -> None:
    save_matrix(directory, raster.data, bounds=list(raster.bounds), units=raster.units, nodata="NaN")


def load_raster(directory) -> RasterField:
    data, header = load_matrix(directory)
    return RasterField(data, tuple(header["bounds"]), header.get("units", ""))


# -- synthetic benchmark -----------------------------------------------------


@dataclass
class SynthConfig:
    """Parameters of the synthetic drifting-bump benchmark.

    ``clustering`` is the fraction of sensors drawn from a few tight
    Gaussian clusters; the rest are spread by jittered stratification.
    """

    n_sensors: int = 100
    n_steps: int = 512
    seed: int = 0
    clustering: float = 0.6
    n_clusters: int = 3
    n_bumps: int = 5
    n_sources: int = 0
    bounds: tuple = (116.10, 39.80, 116.40, 40.02)
    raster_resolution: int = 64
    base: float = 10.0
    amplitude: float = 12.0
    noise: float = 0.0
    missing_rate: float = 0.0
    time_step: float = 3600.0
    units: str = "units"
    bumps: dict = field(default=None, repr=False)


def _bump_parameters(cfg: SynthConfig, rng: np.random.Generator) -> dict:
    b = cfg.n_bumps
    return {
        "center": rng.uniform(0.25, 0.75, size=(b, 2)),
        "orbit": rng.uniform(0.08, 0.22, size=b),
        "orbit_period": rng.uniform(40.0, 120.0, size=b) * rng.choice([-1.0, 1.0], size=b),
        "orbit_phase": rng.uniform(0, 2 * np.pi, size=b),
        "width": rng.uniform(0.10, 0.22, size=b),
        "weight": rng.uniform(0.4, 1.0, size=b) * rng.choice([1.0, 1.0, -0.6], size=b),
        "pulse_period": rng.uniform(10.0, 30.0, size=b),
        "pulse_phase": rng.uniform(0, 2 * np.pi, size=b),
        "tilt": rng.normal(0.0, 0.3, size=2),
        # fixed local sources with a daily cycle
        "source_center": rng.uniform(0.1, 0.9, size=(cfg.n_sources, 2)),
        "source_width": rng.uniform(0.04, 0.09, size=cfg.n_sources),
        "source_weight": rng.uniform(0.3, 0.7, size=cfg.n_sources),
        "source_phase": rng.uniform(0, 2 * np.pi, size=cfg.n_sources),
    }


def synthetic_field(cfg: SynthConfig, points, times) -> np.ndarray:
    """Evaluate the analytic field at lng/lat ``points`` (``m x 2``) and ``times``.

    Returns an ``m x len(times)`` float64 array.
    """
    p = cfg.bumps
    west, south, east, north = cfg.bounds
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    u = (pts[:, 0] - west) / (east - west)
    v = (pts[:, 1] - south) / (north - south)
    t = np.asarray(times, dtype=np.float64).reshape(-1)
    ang = 2 * np.pi * t[None, :] / p["orbit_period"][:, None] + p["orbit_phase"][:, None]
    cu = p["center"][:, 0, None] + p["orbit"][:, None] * np.cos(ang)  # bumps x t
    cv = p["center"][:, 1, None] + p["orbit"][:, None] * np.sin(ang)
    pulse = 1.0 + 0.5 * np.sin(
        2 * np.pi * t[None, :] / p["pulse_period"][:, None] + p["pulse_phase"][:, None]
    )
    du = u[:, None, None] - cu[None]
    dv = v[:, None, None] - cv[None]
    w2 = (2.0 * p["width"] ** 2)[None, :, None]
    bumps = np.exp(-(du**2 + dv**2) / w2) * (p["weight"][:, None] * pulse)[None]
    trend = p["tilt"][0] * (u - 0.5) + p["tilt"][1] * (v - 0.5)
    su = u[:, None] - p["source_center"][None, :, 0]
    sv = v[:, None] - p["source_center"][None, :, 1]
    shape = np.exp(-(su**2 + sv**2) / (2.0 * p["source_width"] ** 2)[None]) * p["source_weight"][None]
    cycle = 1.0 + 0.4 * np.sin(2 * np.pi * t[None, :] / 24.0 + p["source_phase"][:, None])
    sources = shape @ cycle
    return cfg.base + cfg.amplitude * (bumps.sum(axis=1) + trend[:, None] + sources)


def _sample_sensor_coords(cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    n = cfg.n_sensors
    n_clustered = int(round(cfg.clustering * n))
    n_uniform = n - n_clustered
    pts = []
    if n_uniform:
        side = int(math.ceil(math.sqrt(n_uniform)))
        cells = rng.permutation(side * side)[:n_uniform]
        cu = (cells % side + rng.uniform(size=n_uniform)) / side
        cv = (cells // side + rng.uniform(size=n_uniform)) / side
        pts.append(np.column_stack([cu, cv]))
    if n_clustered:
        centers = rng.uniform(0.2, 0.8, size=(cfg.n_clusters, 2))
        which = rng.integers(cfg.n_clusters, size=n_clustered)
        cl = centers[which] + rng.normal(0.0, 0.05, size=(n_clustered, 2))
        pts.append(np.clip(cl, 0.01, 0.99))
    uv = np.vstack(pts)
    west, south, east, north = cfg.bounds
    return np.column_stack([west + uv[:, 0] * (east - west), south + uv[:, 1] * (north - south)])


class Synthetic(NamedTuple):
    network: SensorNetwork
    observations: ObservationSeries
    truth: RasterField
    config: SynthConfig

    def field(self, points, times) -> np.ndarray:
        return synthetic_field(self.config, points, times)


def synthesize(cfg: SynthConfig | None = None, **overrides) -> Synthetic:
    """Build a deterministic synthetic benchmark.

    Observations are the analytic field sampled at the sensors (rounded to
    float32); ``truth`` is the same field on a raster over the boundary box.
    The returned config carries the drawn bump parameters.
    """
    cfg = replace(cfg or SynthConfig(), **overrides)
    if cfg.n_sensors < 10 or cfg.n_steps < 16:
        raise DatasetError("synthesize needs n_sensors >= 10 and n_steps >= 16")
    west, south, east, north = cfg.bounds
    if not (east > west and north > south):
        raise DatasetError("zero-area domain")
    rng = np.random.default_rng(cfg.seed)
    cfg = replace(cfg, bumps=_bump_parameters(cfg, rng))
    coords = _sample_sensor_coords(cfg, rng)
    ring = np.array([[west, south], [east, south], [east, north], [west, north]])
    network = SensorNetwork([f"s{i:03d}" for i in range(cfg.n_sensors)], coords, ring)

    times = np.arange(cfg.n_steps)
    clean = synthetic_field(cfg, coords, times)
    values = clean + cfg.noise * rng.normal(size=clean.shape)
    mask = rng.uniform(size=values.shape) >= cfg.missing_rate
    obs = ObservationSeries(
        values.astype(np.float32), mask, cfg.time_step, "2000-01-01T00:00:00", cfg.units
    )

    h, w = raster_shape(cfg.bounds, cfg.raster_resolution)
    centers = grid_centers(cfg.bounds, h, w).reshape(-1, 2)
    truth = synthetic_field(cfg, centers, times).T.reshape(cfg.n_steps, h, w)
    inside = network.contains(centers).reshape(h, w)
    truth = np.where(inside[None], truth, np.nan)
    return Synthetic(network, obs, RasterField(truth, cfg.bounds, cfg.units), cfg)


def write_synthetic(directory, data: Synthetic) -> None:
    """Write the synthetic benchmark in the text formats plus the truth raster."""
    network, obs, truth = data.network, data.observations, data.truth
    os.makedirs(directory, exist_ok=True)
    save_network(Path(directory) / "sensors.csv", network)
    save_boundary(Path(directory) / "boundary.json", network.boundary)
    save_observations_csv(Path(directory) / "observations.csv", obs, network)
    save_raster(Path(directory) / "truth", truth)

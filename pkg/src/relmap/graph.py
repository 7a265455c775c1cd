"""Haversine k-nearest-neighbour adjacency for the imputation network."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .dataset import SensorNetwork

__all__ = ["EARTH_RADIUS_KM", "MIN_EDGE_WEIGHT", "haversine", "pairwise_haversine", "SensorGraph", "build_graph"]

EARTH_RADIUS_KM = 6371.0
MIN_EDGE_WEIGHT = 1e-3


def haversine(p, q) -> np.ndarray:
    """Great-circle distance in km between lng/lat points (broadcasts)."""
    p = np.radians(np.asarray(p, dtype=np.float64))
    q = np.radians(np.asarray(q, dtype=np.float64))
    dlng = q[..., 0] - p[..., 0]
    dlat = q[..., 1] - p[..., 1]
    a = np.sin(dlat / 2) ** 2 + np.cos(p[..., 1]) * np.cos(q[..., 1]) * np.sin(dlng / 2) ** 2
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def pairwise_haversine(a, b=None) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64).reshape(-1, 2)
    b = a if b is None else np.asarray(b, dtype=np.float64).reshape(-1, 2)
    return haversine(a[:, None, :], b[None, :, :])


@dataclass
class SensorGraph:
    """Dense ``n x n`` adjacency pair used by the first and later PNA layers.

    ``eta`` is the mean pairwise distance (km) and ``distance_scale`` the
    length that divided distances before exponentiation. ``original``
    flags the non-virtual sensors.
    """

    a_first: np.ndarray
    a_sub: np.ndarray
    k: int
    eta: float
    distance_scale: float
    original: np.ndarray | None = None

    def __post_init__(self):
        if self.original is None:
            self.original = np.ones(self.a_sub.shape[0], dtype=bool)
        self.original = np.asarray(self.original, dtype=bool)

    @property
    def n(self) -> int:
        return self.a_sub.shape[0]

    def save_triplets(self, path_first, path_sub) -> None:
        for path, mat in ((path_first, self.a_first), (path_sub, self.a_sub)):
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["i", "j", "weight"])
                for i, j in zip(*np.nonzero(mat)):
                    writer.writerow([int(i), int(j), repr(float(mat[i, j]))])

    def permuted(self, perm) -> "SensorGraph":
        perm = np.asarray(perm)
        return SensorGraph(
            self.a_first[np.ix_(perm, perm)],
            self.a_sub[np.ix_(perm, perm)],
            self.k,
            self.eta,
            self.distance_scale,
            self.original[perm],
        )


def knn_pattern(dist: np.ndarray, k: int, order=None) -> np.ndarray:
    """Boolean ``n x n`` k-NN relation (no self), ties broken by ``order``."""
    n = dist.shape[0]
    order = np.arange(n) if order is None else np.asarray(order)
    pattern = np.zeros((n, n), dtype=bool)
    for i in range(n):
        cand = np.delete(np.arange(n), i)
        # lexsort: primary key distance, secondary id rank
        ranked = cand[np.lexsort((order[cand], dist[i, cand]))]
        pattern[i, ranked[:k]] = True
    return pattern


def mean_pairwise_distance(coords) -> float:
    d = pairwise_haversine(coords)
    n = len(d)
    return float(d[np.triu_indices(n, 1)].mean()) if n > 1 else 0.0


def build_graph(
    network: SensorNetwork,
    k: int = 8,
    distance_scale: float | None = None,
    eta: float | None = None,
    symmetric: bool = True,
) -> SensorGraph:
    """Build ``a_first`` and ``a_sub`` from ``exp(-H / distance_scale)`` weights.

    ``a_sub`` keeps each sensor's ``k`` nearest neighbours (the relation is
    symmetrised by union); ``a_first`` keeps the subset whose endpoints are
    both original sensors. A min-max normalisation over the ``a_sub`` edges maps weights onto
    ``[MIN_EDGE_WEIGHT, 1]``; the two matrices agree wherever both are defined.
    ``distance_scale`` and ``eta`` default to the mean pairwise distance.
    """
    n = network.n
    if k < 1:
        raise ValueError("k must be at least 1")
    if k >= n:
        raise ValueError(f"k={k} must be smaller than the number of sensors ({n})")
    dist = pairwise_haversine(network.coords)
    mean_dist = float(dist[np.triu_indices(n, 1)].mean())
    eta = mean_dist if eta is None else float(eta)
    scale = mean_dist if distance_scale is None else float(distance_scale)
    if scale <= 0:
        raise ValueError("distance_scale must be positive")
    rank = np.argsort(np.argsort(network.ids, kind="stable"), kind="stable")
    pattern = knn_pattern(dist, k, rank)
    if symmetric:
        pattern |= pattern.T
    raw = np.exp(-dist[pattern] / scale)
    lo, hi = raw.min(), raw.max()
    # min-max onto [MIN_EDGE_WEIGHT, 1] so the weakest edge stays an edge
    unit = (raw - lo) / (hi - lo) if hi > lo else np.ones_like(raw)
    a_sub = np.zeros((n, n))
    a_sub[pattern] = MIN_EDGE_WEIGHT + (1.0 - MIN_EDGE_WEIGHT) * unit
    orig = network.original
    a_first = np.where(np.outer(orig, orig), a_sub, 0.0)
    return SensorGraph(a_first, a_sub, k, eta, scale, orig.copy())

"""Shared test helpers."""
import numpy as np

from relmap.dataset import SensorNetwork

SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def square_network(coords, virtual=None, ring=SQUARE):
    coords = np.asarray(coords, dtype=float).reshape(-1, 2)
    return SensorNetwork([f"s{i:03d}" for i in range(len(coords))], coords, ring, virtual)


def central_diff(f, x, h=1e-4):
    """Central finite-difference gradient of scalar ``f`` at array ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        up = f(x)
        x[i] = old - h
        down = f(x)
        x[i] = old
        g[i] = (up - down) / (2 * h)
    return g


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12))


"""Gauss-Legendre panel helpers shared by the quadrature code."""
from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=64)
def _gl(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(a: float, b: float, order: int):
    """Nodes and weights of an ``order``-point rule on ``[a, b]``."""
    x, w = _gl(order)
    half = 0.5 * (b - a)
    return 0.5 * (a + b) + half * x, half * w


def panels(breaks, order: int):
    """Composite Gauss-Legendre rule over consecutive ``breaks``."""
    breaks = np.asarray(breaks, dtype=float)
    x, w = _gl(order)
    a, b = breaks[:-1], breaks[1:]
    half = 0.5 * (b - a)
    nodes = (0.5 * (a + b))[:, None] + half[:, None] * x[None, :]
    weights = half[:, None] * w[None, :]
    return nodes.reshape(-1), weights.reshape(-1)


def graded_breaks(lo: float, hi: float, ratio: float = 0.25, smallest: float = None):
    """Breakpoints on ``[lo, hi]`` refined geometrically towards ``lo``.

    Each panel is ``ratio`` times the size of the next one until the
    panel adjacent to ``lo`` is at most ``smallest`` wide.  Used for
    integrands that are singular or kinked at the left endpoint.
    """
    width = hi - lo
    if width <= 0:
        return np.array([lo, hi])
    if smallest is None:
        smallest = 1e-4 * width
    pts = [hi]
    step = width
    while step > smallest:
        step *= ratio
        pts.append(lo + step)
    pts.append(lo)
    return np.array(pts[::-1])


def log_radial(r_min: float, r_max: float, per_decade: int, order: int):
    """Gauss-Legendre panels uniform in ``log r`` on ``[r_min, r_max]``."""
    decades = max(np.log10(r_max / r_min), 1e-12)
    count = max(1, int(np.ceil(decades * per_decade)))
    breaks = np.geomspace(r_min, r_max, count + 1)
    return panels(breaks, order)

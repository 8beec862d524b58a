"""
Band-limited initial data as frequency atoms, and the evolutions built on it.

Conventions
-----------
The Schrodinger evolution is

    e^{i(t/rho)Delta} f(x) = (2 pi)^{-n/2} sum_j w_j a_j exp(i(<x, xi_j> + (t/rho)|xi_j|^2)),

which is the unitary inverse transform applied to atoms ``(xi_j, w_j, a_j)``.
With this normalisation ``||f||_2^2 = sum_j w_j |a_j|^2`` (the Plancherel
constant is 1).

The wave extension carries no prefactor,

    Ef(x, t) = sum_j w_j a_j exp(i(<x, xi_j> + t|xi_j|)),

i.e. the (2 pi)^{-n} of the half-wave propagator is absorbed into the
weights.  Only moduli enter the identities checked downstream, but the
energy cross-checks need the constants fixed, so they are fixed here.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi
PHASE_REDUCTION_THRESHOLD = 1e6
# points per evaluation block; keeps the (points x atoms) phase matrix small
_BLOCK = 2048


def _as_nodes(nodes, n=None):
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    if n is not None and nodes.shape[1] != n:
        raise ValueError(f"nodes must have {n} columns, got {nodes.shape[1]}")
    return nodes


def _validate_atoms(nodes, weights, values):
    if nodes.shape[0] < 1:
        raise ValueError("at least one atom is required")
    if weights.shape != (nodes.shape[0],) or values.shape != (nodes.shape[0],):
        raise ValueError("nodes, weights and values must have matching length")
    if not (np.all(np.isfinite(nodes)) and np.all(np.isfinite(values))):
        raise ValueError("non-finite atom node or value")
    if not np.all(np.isfinite(weights)) or np.any(weights <= 0):
        raise ValueError("weights must be strictly positive and finite")
    if nodes.shape[0] > 1:
        uniq = np.unique(nodes, axis=0)
        if uniq.shape[0] != nodes.shape[0]:
            raise ValueError("atom nodes must be pairwise distinct")


@dataclass(frozen=True)
class FrequencyAtomFunction:
    """Quadrature atoms of a band-limited function's Fourier transform.

    Parameters
    ----------
    nodes : (m, n) array
        Frequencies ``xi_j``; all satisfy ``|xi_j| <= band_radius``.
    weights : (m,) array
        Strictly positive quadrature weights.
    values : (m,) complex array
        Transform values ``a_j`` at the nodes.
    band_radius : float, optional
        Declared band radius; defaults to ``max |xi_j|``.
    """

    nodes: np.ndarray
    weights: np.ndarray
    values: np.ndarray
    band_radius: float = None

    def __post_init__(self):
        nodes = _as_nodes(self.nodes)
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        values = np.asarray(self.values, dtype=complex).reshape(-1)
        _validate_atoms(nodes, weights, values)
        radius = float(np.max(np.linalg.norm(nodes, axis=1)))
        band = radius if self.band_radius is None else float(self.band_radius)
        if band < 0 or radius > band * (1 + 1e-12) + 1e-300:
            raise ValueError(f"node radius {radius} exceeds band radius {band}")
        for name, arr in (("nodes", nodes), ("weights", weights), ("values", values)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "band_radius", band)

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    def __len__(self):
        return self.nodes.shape[0]

    @property
    def max_frequency(self) -> float:
        return float(np.max(np.linalg.norm(self.nodes, axis=1)))

    def scaled(self, factor: float) -> "FrequencyAtomFunction":
        """Multiply every value by ``factor``."""
        return FrequencyAtomFunction(self.nodes, self.weights, self.values * factor,
                                     self.band_radius)


@dataclass(frozen=True)
class ConeAtomFunction:
    """Atoms of a function on the light cone, lifted as ``(xi, |xi|)``.

    Nodes live in the half space ``xi_1 >= 0`` and in the annulus
    ``r_min <= |xi| <= r_max``.  User-built data must satisfy
    ``r_max <= ratio_bound * r_min`` with the default ``ratio_bound = 2``;
    reparametrised data only keeps the annulus up to a constant, so
    ``cone_reparam`` records its actual ratio instead.
    """

    nodes: np.ndarray
    weights: np.ndarray
    values: np.ndarray
    r_min: float = None
    r_max: float = None
    ratio_bound: float = 2.0

    def __post_init__(self):
        nodes = _as_nodes(self.nodes)
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        values = np.asarray(self.values, dtype=complex).reshape(-1)
        _validate_atoms(nodes, weights, values)
        radii = np.linalg.norm(nodes, axis=1)
        if np.any(radii == 0):
            raise ValueError("cone atoms cannot sit at the origin")
        if np.any(nodes[:, 0] < 0):
            raise ValueError("cone atoms must satisfy xi_1 >= 0")
        r_min = float(radii.min()) if self.r_min is None else float(self.r_min)
        r_max = float(radii.max()) if self.r_max is None else float(self.r_max)
        tol = 1e-12 * r_max
        if r_min <= 0 or np.any(radii < r_min - tol) or np.any(radii > r_max + tol):
            raise ValueError("cone atoms must lie in the declared annulus")
        if r_max > self.ratio_bound * r_min * (1 + 1e-12):
            raise ValueError(
                f"annulus ratio r_max/r_min = {r_max / r_min:.4g} exceeds {self.ratio_bound}")
        for name, arr in (("nodes", nodes), ("weights", weights), ("values", values)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "r_min", r_min)
        object.__setattr__(self, "r_max", r_max)

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    def __len__(self):
        return self.nodes.shape[0]


@dataclass(frozen=True)
class SampledField:
    """Complex values of an evolution at a finite set of points."""

    points: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        vals = np.asarray(self.values, dtype=complex).reshape(-1)
        if pts.shape[0] != vals.shape[0]:
            raise ValueError("points and values must have matching length")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "values", vals)

    @property
    def modulus(self) -> np.ndarray:
        return np.abs(self.values)


def reduce_phase(phase: np.ndarray) -> np.ndarray:
    """Reduce large phases modulo 2 pi before exponentiation."""
    big = np.abs(phase) > PHASE_REDUCTION_THRESHOLD
    if np.any(big):
        phase = phase.copy()
        phase[big] = np.remainder(phase[big], TWO_PI)
    return phase


def phase_sum(phase: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """``sum_j coeffs_j exp(i phase[:, j])`` with a fixed summation order.

    The reduction runs along axis 1 of a block whose shape depends only on
    the atom count, so results do not depend on how points are chunked or
    distributed across workers.
    """
    phase = reduce_phase(phase)
    terms = (np.cos(phase) + 1j * np.sin(phase)) * coeffs[None, :]
    return terms.sum(axis=1)


def _split_points(points, n):
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] == 0 or pts.size == 0:
        raise ValueError("empty point list")
    if pts.shape[1] != n + 1:
        raise ValueError(f"points must be (x, t) rows with {n + 1} columns")
    if not np.all(np.isfinite(pts)):
        raise ValueError("non-finite evaluation point")
    return pts


def schrodinger_evolve(f: FrequencyAtomFunction, points, time_scale: float = 1.0) -> SampledField:
    """Evaluate ``e^{i(t/rho)Delta} f`` at rows ``(x, t)`` of ``points``."""
    if time_scale < 1:
        raise ValueError("time_scale must be >= 1")
    n = f.dim
    pts = _split_points(points, n)
    coeffs = f.weights * f.values
    sq = np.sum(f.nodes**2, axis=1)
    out = np.empty(pts.shape[0], dtype=complex)
    for s in range(0, pts.shape[0], _BLOCK):
        blk = pts[s:s + _BLOCK]
        phase = blk[:, :n] @ f.nodes.T + np.outer(blk[:, n] / time_scale, sq)
        out[s:s + _BLOCK] = phase_sum(phase, coeffs)
    out *= TWO_PI ** (-n / 2)
    return SampledField(pts, out, {"time_scale": time_scale})


def translate_frequency(f: FrequencyAtomFunction, theta) -> FrequencyAtomFunction:
    """Shift every node by ``theta``; the band radius grows by ``|theta|``."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.shape != (f.dim,):
        raise ValueError("theta must have the dimension of the atoms")
    return FrequencyAtomFunction(f.nodes + theta[None, :], f.weights, f.values,
                                 f.band_radius + float(np.linalg.norm(theta)))


def wave_extension(f: ConeAtomFunction, points) -> SampledField:
    """Evaluate ``Ef(x, t) = sum_j w_j a_j exp(i(<x, xi_j> + t|xi_j|))``."""
    n = f.dim
    pts = _split_points(points, n)
    coeffs = f.weights * f.values
    rad = np.linalg.norm(f.nodes, axis=1)
    out = np.empty(pts.shape[0], dtype=complex)
    for s in range(0, pts.shape[0], _BLOCK):
        blk = pts[s:s + _BLOCK]
        phase = blk[:, :n] @ f.nodes.T + np.outer(blk[:, n], rad)
        out[s:s + _BLOCK] = phase_sum(phase, coeffs)
    return SampledField(pts, out)


def required_time_step(f: FrequencyAtomFunction, time_scale: float = 1.0) -> float:
    """Largest step with ``step * max|xi|^2 / rho <= 0.1``."""
    top = f.max_frequency**2 / time_scale
    return np.inf if top == 0 else 0.1 / top


def maximal_in_time(f: FrequencyAtomFunction, x, t_max: float, step: float,
                    time_scale: float = 1.0) -> float:
    """Sampled ``sup_{0 < t <= t_max} |e^{i(t/rho)Delta} f(x)|``.

    Samples ``t = step, 2 step, ..., t_max``.  Under
    ``step * max|xi|^2 / rho <= 0.1`` the phase of every atom moves by at
    most 0.05 rad between a sample and the nearest true maximiser.
    """
    if t_max <= 0 or step <= 0:
        raise ValueError("t_max and step must be positive")
    need = required_time_step(f, time_scale)
    if step > need * (1 + 1e-12):
        raise ValueError(f"time step {step:.6g} too coarse; need step <= {need:.6g}")
    x = np.asarray(x, dtype=float).reshape(-1)
    count = max(1, int(np.ceil(t_max / step - 1e-9)))
    times = np.minimum(step * np.arange(1, count + 1), t_max)
    pts = np.hstack([np.repeat(x[None, :], count, axis=0), times[:, None]])
    return float(np.max(np.abs(schrodinger_evolve(f, pts, time_scale).values)))


def maximal_in_time_many(f: FrequencyAtomFunction, xs, t_max: float, step: float,
                         time_scale: float = 1.0) -> np.ndarray:
    """``maximal_in_time`` for every row of ``xs`` (same time grid)."""
    if t_max <= 0 or step <= 0:
        raise ValueError("t_max and step must be positive")
    need = required_time_step(f, time_scale)
    if step > need * (1 + 1e-12):
        raise ValueError(f"time step {step:.6g} too coarse; need step <= {need:.6g}")
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    count = max(1, int(np.ceil(t_max / step - 1e-9)))
    times = np.minimum(step * np.arange(1, count + 1), t_max)
    n = f.dim
    coeffs = f.weights * f.values
    sq = np.sum(f.nodes**2, axis=1)
    # exp(i t|xi|^2/rho) is shared by every x: precompute the time factors once
    tphase = reduce_phase(np.outer(times / time_scale, sq))
    tfac = np.cos(tphase) + 1j * np.sin(tphase)
    out = np.empty(xs.shape[0])
    for i, x in enumerate(xs):
        xphase = reduce_phase(f.nodes @ x)
        xfac = (np.cos(xphase) + 1j * np.sin(xphase)) * coeffs
        vals = (tfac * xfac[None, :]).sum(axis=1)
        out[i] = np.max(np.abs(vals))
    return out * TWO_PI ** (-n / 2)


def l2_norm(f: FrequencyAtomFunction) -> float:
    """``||f||_2``; the Plancherel constant is 1 under the unitary convention."""
    return float(np.sqrt(np.sum(f.weights * np.abs(f.values) ** 2)))


def h_s_norm(f: FrequencyAtomFunction, s: float) -> float:
    """``(sum_j w_j (1 + |xi_j|^2)^s |a_j|^2)^{1/2}``."""
    if s < 0:
        raise ValueError("s must be nonnegative")
    sq = np.sum(f.nodes**2, axis=1)
    return float(np.sqrt(np.sum(f.weights * (1 + sq) ** s * np.abs(f.values) ** 2)))


def weak_l1_level(u: SampledField, weights, M: float) -> float:
    """``M * (total weight of points where |u| > M)``."""
    if M <= 0:
        raise ValueError("M must be positive")
    weights = np.asarray(weights, dtype=float).reshape(-1)
    if weights.shape[0] != u.values.shape[0]:
        raise ValueError("weights must align with the field points")
    if np.any(weights < 0):
        raise ValueError("weights must be nonnegative")
    return float(M * np.sum(weights[np.abs(u.values) > M]))

"""Atom-level identity checks and frame invariant suites."""
from __future__ import annotations

import numpy as np

from ..geometry import cone_frame, cone_reparam, cone_transport_matrix, parabolic_frame
from ..spectral import (ConeAtomFunction, FrequencyAtomFunction, schrodinger_evolve,
                        translate_frequency, wave_extension)


def random_atom_function(rng: np.random.Generator, n: int, band: float,
                         count: int = 24) -> FrequencyAtomFunction:
    """Random atoms uniformly distributed in ``B_n(0, band)``."""
    g = rng.standard_normal((count, n))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    nodes = g * band * rng.random((count, 1)) ** (1.0 / n)
    weights = rng.uniform(0.5, 1.5, count) / count
    values = rng.standard_normal(count) + 1j * rng.standard_normal(count)
    return FrequencyAtomFunction(nodes, weights, values, band)


def gaussian_profile_function(n: int, band: float, per_axis: int = 16) -> FrequencyAtomFunction:
    """Tensor midpoint atoms of ``exp(-|xi|^2 / (band/3)^2)`` on ``[-band, band]^n / sqrt(n)``."""
    half = band / np.sqrt(n)
    e = np.linspace(-half, half, per_axis + 1)
    mid = 0.5 * (e[:-1] + e[1:])
    grids = np.meshgrid(*([mid] * n), indexing="ij")
    nodes = np.column_stack([g.ravel() for g in grids])
    weights = np.full(nodes.shape[0], (e[1] - e[0]) ** n)
    values = np.exp(-np.sum(nodes**2, axis=1) / (band / 3) ** 2).astype(complex)
    return FrequencyAtomFunction(nodes, weights, values, band)


def random_cone_function(rng: np.random.Generator, n: int, count: int = 24,
                         r_min: float = 1.0) -> ConeAtomFunction:
    """Random atoms in the half annulus ``xi_1 >= 0``, ``r_min <= |xi| <= 2 r_min``."""
    g = rng.standard_normal((count, n))
    g[:, 0] = np.abs(g[:, 0])
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    nodes = g * rng.uniform(r_min, 2 * r_min, (count, 1))
    weights = rng.uniform(0.5, 1.5, count) / count
    values = rng.standard_normal(count) + 1j * rng.standard_normal(count)
    return ConeAtomFunction(nodes, weights, values, r_min, 2 * r_min)


def sample_cone_parameters(rng: np.random.Generator, n: int):
    """Uniform sample of ``K = (2, 3) x B_{n-1}(0, 1)``."""
    lam = rng.uniform(2.0, 3.0)
    if n == 1:
        return lam, np.zeros(0)
    g = rng.standard_normal(n - 1)
    theta = g / np.linalg.norm(g) * rng.random() ** (1.0 / (n - 1))
    return lam, theta


def galilean_identity_check(f: FrequencyAtomFunction, theta, points, lam: float = 1.0) -> float:
    """Max of ``| |u_f(x, t)| - |u_{f_theta}(x - 2 (t/lam) theta, t)| | / max |u_f|``.

    Both sides use the evolution ``e^{i (t/lam) Delta}``.
    """
    theta = np.asarray(theta, dtype=float).reshape(-1)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    lhs = np.abs(schrodinger_evolve(f, pts, lam).values)
    shifted = pts.copy()
    shifted[:, :-1] = pts[:, :-1] - 2.0 * (pts[:, -1:] / lam) * theta[None, :]
    rhs = np.abs(schrodinger_evolve(translate_frequency(f, theta), shifted, lam).values)
    scale = np.max(lhs)
    return float(np.max(np.abs(lhs - rhs)) / scale) if scale > 0 else 0.0


def wave_identity_check(f: ConeAtomFunction, lam: float, theta, points) -> float:
    """Max of ``|Ef(p) - Ef_{lam,theta}(T_{lam,theta} p)| / max |Ef|``."""
    g = cone_reparam(f, lam, theta)
    T = cone_transport_matrix(lam, theta)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    lhs = wave_extension(f, pts).values
    rhs = wave_extension(g, pts @ T.T).values
    scale = np.max(np.abs(lhs))
    return float(np.max(np.abs(lhs - rhs)) / scale) if scale > 0 else 0.0


def cone_adjoint_error(f: ConeAtomFunction, lam: float, theta) -> float:
    """Max of ``|T^T (xi~, |xi~|) - (xi, |xi|)| / |xi|`` over the atoms."""
    g = cone_reparam(f, lam, theta)
    T = cone_transport_matrix(lam, theta)
    lift = np.column_stack([f.nodes, np.linalg.norm(f.nodes, axis=1)])
    new_lift = np.column_stack([g.nodes, np.linalg.norm(g.nodes, axis=1)])
    err = np.linalg.norm(new_lift @ T - lift, axis=1) / np.linalg.norm(f.nodes, axis=1)
    return float(np.max(err))


def cone_projection_closed_form(lam: float, theta) -> np.ndarray:
    """``Pi_{lam,theta}`` written entry by entry, independent of the transport matrix."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    n = theta.size + 1
    r2 = np.sqrt(2.0)
    q = float(theta @ theta) / (4 * lam)
    Pi = np.zeros((n, n + 1))
    Pi[0, 0] = 0.5 * (lam + 1 / lam) - q
    Pi[0, n] = -0.5 * (lam - 1 / lam) + q
    for k in range(n - 1):
        Pi[0, 1 + k] = theta[k] / (lam * r2)
        Pi[1 + k, 0] = -theta[k] / r2
        Pi[1 + k, 1 + k] = 1.0
        Pi[1 + k, n] = theta[k] / r2
    return Pi


_FRAME_KEYS = ("factor", "orthonormal", "kernel", "unit", "q_perp_g", "lower")


def frame_suite(rng: np.random.Generator, count: int, n: int, kind: str,
                frame_builder=None) -> dict:
    """Worst frame residuals over ``count`` random frames.

    Parabolic parameters are drawn from ``B_n(0, 1)`` scaled by a random
    factor up to 10; cone parameters from ``K``.  ``frame_builder``
    overrides the constructor (used for fault injection).
    """
    worst = {k: 0.0 for k in _FRAME_KEYS}
    worst["min_diag"] = np.inf
    worst["orientation_violations"] = 0
    worst["closed_form"] = 0.0
    expected = 1.0 if kind == "parabolic" else -1.0
    for _ in range(count):
        if kind == "parabolic":
            theta = rng.uniform(-1, 1, n) * rng.uniform(0, 10)
            frame = (frame_builder or parabolic_frame)(theta)
        elif kind == "cone":
            lam, theta = sample_cone_parameters(rng, n)
            frame = (frame_builder or cone_frame)(lam, theta)
            worst["closed_form"] = max(worst["closed_form"], float(np.max(np.abs(
                frame.Pi - cone_projection_closed_form(lam, theta)))))
        else:
            raise ValueError(f"unknown frame kind {kind!r}")
        res = frame.residuals()
        for k in _FRAME_KEYS:
            worst[k] = max(worst[k], res[k])
        worst["min_diag"] = min(worst["min_diag"], res["min_diag"])
        if frame.orientation() != expected:
            worst["orientation_violations"] += 1
    return worst


def frame_suite_passes(worst: dict, tol: float = 1e-12) -> list:
    """Names of the violated frame invariants (empty when all hold)."""
    keys = ("factor", "orthonormal", "kernel", "q_perp_g", "lower", "closed_form")
    failed = [k for k in keys if worst.get(k, 0.0) > tol]
    if worst["unit"] > 1e-14:
        failed.append("unit")
    if not worst["min_diag"] > 0:
        failed.append("positive_diagonal")
    if worst["orientation_violations"]:
        failed.append("kernel_orientation")
    return failed

"""
Projection frames, the cone rotation and reparametrisation, sphere
quadrature and the X-ray energy identity checker.

Coordinates on R^{n+1} are written ``(x, t)`` or ``(x_1, x', t)`` with
``x' in R^{n-1}``.  A projection frame stores a rank-n map
``Pi : R^{n+1} -> R^n`` together with ``Pi = L Q`` (``L`` lower
triangular with positive diagonal, ``Q`` with orthonormal rows) and a
unit vector ``G`` spanning ``ker Pi``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma

from . import _quad
from .spectral import ConeAtomFunction

SQRT2 = np.sqrt(2.0)


def _vec(v, name="vector"):
    v = np.atleast_1d(np.asarray(v, dtype=float)).reshape(-1)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be finite")
    return v


# ---------------------------------------------------------------- QR

def householder_qr(a: np.ndarray):
    """Thin QR of a tall matrix by Householder reflections.

    Parameters
    ----------
    a : (m, k) array with m >= k and full column rank

    Returns
    -------
    q : (m, k) array with orthonormal columns
    r : (k, k) upper triangular array with a positive diagonal
    """
    a = np.array(a, dtype=float)
    m, k = a.shape
    if m < k:
        raise ValueError("householder_qr expects a tall matrix")
    r = a.copy()
    reflectors = []
    for j in range(k):
        x = r[j:, j]
        norm = np.linalg.norm(x)
        v = x.copy()
        # add the norm with the sign of x_0 to avoid cancellation
        v[0] += norm if x[0] >= 0 else -norm
        vn = np.linalg.norm(v)
        if vn == 0:
            reflectors.append(None)
            continue
        v /= vn
        r[j:, j:] -= 2.0 * np.outer(v, v @ r[j:, j:])
        reflectors.append(v)
    q = np.eye(m, k)
    for j in range(k - 1, -1, -1):
        v = reflectors[j]
        if v is not None:
            q[j:, :] -= 2.0 * np.outer(v, v @ q[j:, :])
    r = np.triu(r[:k, :])
    signs = np.where(np.diag(r) < 0, -1.0, 1.0)
    if np.any(np.diag(r) == 0):
        raise ValueError("matrix is rank deficient")
    return q * signs[None, :], r * signs[:, None]


# ---------------------------------------------------------------- frames

@dataclass(frozen=True)
class ProjectionFrame:
    """Rank-n projection ``Pi = L Q`` with unit kernel vector ``G``.

    ``params`` holds ``theta`` and, for cone frames, ``lam`` and an
    ``in_domain`` flag for the local-diffeomorphism domain.
    """

    Pi: np.ndarray
    L: np.ndarray
    Q: np.ndarray
    G: np.ndarray
    params: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.Pi.shape[0]

    def residuals(self) -> dict:
        """Max-norm residuals of every frame invariant."""
        n = self.n
        return {
            "factor": float(np.max(np.abs(self.Pi - self.L @ self.Q))),
            "orthonormal": float(np.max(np.abs(self.Q @ self.Q.T - np.eye(n)))),
            "kernel": float(np.max(np.abs(self.Pi @ self.G))),
            "unit": float(abs(np.linalg.norm(self.G) - 1.0)),
            "q_perp_g": float(np.max(np.abs(self.Q @ self.G))),
            "lower": float(np.max(np.abs(np.triu(self.L, 1)))),
            "min_diag": float(np.min(np.diag(self.L))),
        }

    def orientation(self) -> float:
        """Sign of ``det [Pi; G^T]``.

        +1 for every parabolic frame and -1 for every cone frame with
        ``lam > 0``, so a flipped kernel vector shows up here.
        """
        return float(np.sign(np.linalg.det(np.vstack([self.Pi, self.G[None, :]]))))


def _factor(Pi: np.ndarray, G: np.ndarray, params: dict) -> ProjectionFrame:
    q_hat, r_hat = householder_qr(Pi.T)
    return ProjectionFrame(Pi, r_hat.T, q_hat.T, G, params)


def parabolic_frame(theta) -> ProjectionFrame:
    """Frame of ``Pi_theta = [I_n | -2 theta]``, ``G = (2 theta, 1)/sqrt(4|theta|^2 + 1)``."""
    theta = _vec(theta, "theta")
    n = theta.size
    Pi = np.hstack([np.eye(n), -2.0 * theta[:, None]])
    G = np.append(2.0 * theta, 1.0) / np.sqrt(4.0 * theta @ theta + 1.0)
    return _factor(Pi, G, {"theta": theta})


def galilean_map(theta, lam: float = 1.0):
    """Return ``(T, D)`` with ``T(x, t) = (x - 2 t theta, t)`` and ``D(x, t) = (x, t / lam)``.

    Both maps act on arrays whose last axis holds ``(x, t)``.
    """
    if lam < 1:
        raise ValueError("lam must be >= 1")
    theta = _vec(theta, "theta")

    def T(p):
        p = np.asarray(p, dtype=float)
        out = p.copy()
        out[..., :-1] = p[..., :-1] - 2.0 * p[..., -1:] * theta
        return out

    def D(p):
        p = np.asarray(p, dtype=float)
        out = p.copy()
        out[..., -1] = p[..., -1] / lam
        return out

    return T, D


def paraboloid_chart_inverse(x, x_last: float) -> np.ndarray:
    """``F(x, x_{n+1}) = x / (2 x_{n+1})``, the inverse of ``theta -> G(theta)``."""
    if not x_last > 0:
        raise ValueError("x_{n+1} must be positive")
    return _vec(x) / (2.0 * x_last)


# ---------------------------------------------------------------- cone

def cone_rotation(xi) -> np.ndarray:
    """``U xi``: ``eta_1 = (xi_1 + xi_{n+1})/sqrt2``, ``eta_{n+1} = (xi_{n+1} - xi_1)/sqrt2``."""
    xi = np.asarray(xi, dtype=float)
    eta = xi.copy()
    eta[..., 0] = (xi[..., 0] + xi[..., -1]) / SQRT2
    eta[..., -1] = (xi[..., -1] - xi[..., 0]) / SQRT2
    return eta


def cone_rotation_inverse(eta) -> np.ndarray:
    """``U^*(a, b, c) = ((a - c)/sqrt2, b, (a + c)/sqrt2)``."""
    eta = np.asarray(eta, dtype=float)
    xi = eta.copy()
    xi[..., 0] = (eta[..., 0] - eta[..., -1]) / SQRT2
    xi[..., -1] = (eta[..., 0] + eta[..., -1]) / SQRT2
    return xi


def cone_rotation_matrix(n: int) -> np.ndarray:
    """Matrix of ``U`` on ``R^{n+1}``."""
    return cone_rotation(np.eye(n + 1)).T


def _jacobian(eta1, eta_p):
    return (1.0 + np.sum(eta_p**2, axis=-1) / (2.0 * eta1**2)) / SQRT2


def cone_jacobian(eta1, eta_p) -> np.ndarray:
    """``J(eta) = (1 + |eta'|^2 / (2 eta_1^2)) / sqrt2`` on ``eta_1 >= |eta'|/sqrt2``."""
    eta1 = np.asarray(eta1, dtype=float)
    eta_p = np.asarray(eta_p, dtype=float)
    if eta_p.ndim == 0 or (eta_p.ndim == 1 and eta1.ndim == 0):
        eta_p = eta_p.reshape(1, -1) if eta_p.ndim else eta_p.reshape(1, 1)
        scalar = eta1.ndim == 0
    else:
        scalar = False
    eta1_b = np.atleast_1d(eta1)
    norm = np.linalg.norm(eta_p, axis=-1)
    if np.any(eta1_b <= 0) or np.any(eta1_b * SQRT2 < norm * (1 - 1e-12)):
        raise ValueError("eta outside the domain eta_1 >= |eta'|/sqrt2")
    out = _jacobian(eta1_b, eta_p)
    return float(out[0]) if scalar else out


def cone_transport_matrix(lam: float, theta) -> np.ndarray:
    """Matrix of ``T_{lam,theta}`` acting on ``(x_1, x', t)``."""
    if lam == 0:
        raise ValueError("lam must be nonzero")
    theta = _vec(theta, "theta") if np.size(theta) else np.zeros(0)
    m = theta.size
    n = m + 1
    c = 0.5 * (lam + 1.0 / lam)
    s = 0.5 * (lam - 1.0 / lam)
    q = (theta @ theta) / (4.0 * lam)
    T = np.zeros((n + 1, n + 1))
    T[0, 0] = c - q
    T[0, 1:n] = theta / (lam * SQRT2)
    T[0, n] = -s + q
    T[1:n, 0] = -theta / SQRT2
    T[1:n, 1:n] = np.eye(m)
    T[1:n, n] = theta / SQRT2
    T[n, 0] = -s - q
    T[n, 1:n] = theta / (lam * SQRT2)
    T[n, n] = c + q
    return T


def cone_transport(lam: float, theta):
    """Return ``T_{lam,theta}`` as a function on arrays of ``(x, t)`` rows."""
    T = cone_transport_matrix(lam, theta)

    def apply(p):
        return np.asarray(p, dtype=float) @ T.T

    apply.matrix = T
    return apply


def cone_domain(lam: float, theta) -> bool:
    """``lam >= 1 + |theta|/sqrt2``."""
    return bool(lam >= 1.0 + np.linalg.norm(_vec(theta) if np.size(theta) else 0.0) / SQRT2)


def cone_kernel(lam: float, theta) -> np.ndarray:
    """Unit kernel vector of ``Pi_{lam,theta}`` from its closed form."""
    theta = _vec(theta, "theta") if np.size(theta) else np.zeros(0)
    q = 0.25 * (theta @ theta) + 0.5 * lam**2
    F = np.concatenate([[0.5 - q], theta / SQRT2, [-0.5 - q]])
    return F / np.linalg.norm(F)


def cone_frame(lam: float, theta) -> ProjectionFrame:
    """Frame of ``Pi_{lam,theta}``, the first n rows of ``T_{lam,theta}``.

    Frames outside ``lam >= 1 + |theta|/sqrt2`` are built but flagged
    through ``params['in_domain']``.
    """
    if lam == 0:
        raise ValueError("lam must be nonzero")
    theta = _vec(theta, "theta") if np.size(theta) else np.zeros(0)
    T = cone_transport_matrix(lam, theta)
    Pi = T[:-1, :].copy()
    G = cone_kernel(lam, theta)
    return _factor(Pi, G, {"theta": theta, "lam": float(lam),
                           "in_domain": cone_domain(lam, theta)})


def cone_reparam(f: ConeAtomFunction, lam: float, theta) -> ConeAtomFunction:
    """Reparametrised atoms ``f_{lam,theta}`` with ``Ef = Ef_{lam,theta} o T_{lam,theta}``.

    Each node goes ``xi -> eta = U(xi, |xi|) -> zeta = (lam eta_1, eta' - theta eta_1)``
    and back to the cone through ``U^*``.  Weights pick up the surface
    Jacobians, ``w~ = w lam J(zeta) / J(eta)``, and values are rescaled so
    that ``w~ a~ = w a`` atom by atom.
    """
    theta = _vec(theta, "theta") if np.size(theta) else np.zeros(0)
    if theta.size != f.dim - 1:
        raise ValueError("theta must lie in R^{n-1}")
    if not cone_domain(lam, theta):
        raise ValueError("(lam, theta) outside lam >= 1 + |theta|/sqrt2")
    xi = f.nodes
    lifted = np.hstack([xi, np.linalg.norm(xi, axis=1)[:, None]])
    eta = cone_rotation(lifted)
    eta1, eta_p = eta[:, 0], eta[:, 1:-1]
    z1 = lam * eta1
    zp = eta_p - eta1[:, None] * theta[None, :]
    z_last = np.sum(zp**2, axis=1) / (2.0 * z1)
    zeta = np.hstack([z1[:, None], zp, z_last[:, None]])
    new_nodes = cone_rotation_inverse(zeta)[:, :-1]
    # rounding can leave a boundary node a hair below xi_1 = 0
    new_nodes[:, 0] = np.maximum(new_nodes[:, 0], 0.0)
    new_w = f.weights * lam * _jacobian(z1, zp) / _jacobian(eta1, eta_p)
    new_a = f.values * f.weights / new_w
    radii = np.linalg.norm(new_nodes, axis=1)
    ratio = float(radii.max() / radii.min())
    return ConeAtomFunction(new_nodes, new_w, new_a, ratio_bound=max(2.0, ratio * (1 + 1e-12)))


# ---------------------------------------------------------------- spheres

@dataclass(frozen=True)
class SphereQuadrature:
    """Nodes and weights on ``S^m``."""

    m: int
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def area(self) -> float:
        return float(np.sum(self.weights))


def sphere_area(m: int) -> float:
    """``H^m(S^m) = 2 pi^{(m+1)/2} / Gamma((m+1)/2)``; ``S^0`` has two points."""
    return float(2.0 * np.pi ** ((m + 1) / 2) / gamma((m + 1) / 2))


def sphere_quadrature(m: int, order: int) -> SphereQuadrature:
    """Rule on ``S^m`` exact for polynomials of degree ``<= order``."""
    if order < 4:
        raise ValueError("order must be >= 4")
    k = order + 1
    phi = 2.0 * np.pi * np.arange(k) / k
    if m == 1:
        nodes = np.column_stack([np.cos(phi), np.sin(phi)])
        weights = np.full(k, 2.0 * np.pi / k)
    elif m == 2:
        z, wz = _quad.gauss_legendre(-1.0, 1.0, order // 2 + 1)
        rho = np.sqrt(1.0 - z**2)
        nodes = np.column_stack([
            np.outer(rho, np.cos(phi)).ravel(),
            np.outer(rho, np.sin(phi)).ravel(),
            np.repeat(z, k),
        ])
        weights = np.repeat(wz, k) * (2.0 * np.pi / k)
    else:
        raise ValueError("only S^1 and S^2 are supported")
    nodes = nodes / np.linalg.norm(nodes, axis=1)[:, None]
    return SphereQuadrature(m, nodes, weights)


def orthonormal_complement(v) -> np.ndarray:
    """Rows spanning ``v^perp`` for a unit vector ``v``, from a Householder reflector."""
    v = _vec(v)
    d = v.size
    e = np.zeros(d)
    e[-1] = 1.0
    w = v - e if v[-1] < 0 else v + e
    # H = I - 2 w w^T/|w|^2 maps e_d to -+v; its other columns span v^perp
    H = np.eye(d) - 2.0 * np.outer(w, w) / (w @ w)
    return H[:, :-1].T.copy()


@dataclass(frozen=True)
class LineQuadrature:
    """Radial rule ``[0, r_max]`` split into ``panels`` with ``order`` nodes each."""

    r_max: float = 12.0
    panels: int = 48
    order: int = 16

    def rule(self):
        return _quad.panels(np.linspace(0.0, self.r_max, self.panels + 1), self.order)


def solmon_check(density, d: int, quad: SphereQuadrature, line: LineQuadrature = LineQuadrature()):
    """Check ``int_{S^{d-1}} int_{v^perp} |x| f(x) dx dv = c int f``.

    Parameters
    ----------
    density : callable
        Vectorised ``f(points)`` for ``(N, d)`` arrays, rapidly decaying.
    d : int
        Ambient dimension, 2 or 3.
    quad : SphereQuadrature
        Rule on ``S^{d-1}``.
    line : LineQuadrature
        Radial rule used both on hyperplanes and in ``R^d``.

    Returns
    -------
    lhs, rhs, c : float
        ``c`` approximates ``H^{d-2}(S^{d-2})`` (2 for d = 2, 2 pi for d = 3).
    """
    if d not in (2, 3):
        raise ValueError("d must be 2 or 3")
    if quad.m != d - 1:
        raise ValueError("sphere quadrature must live on S^{d-1}")
    r, wr = line.rule()
    peak = np.max(np.abs(density(np.zeros((1, d)))))
    edge = line.r_max * quad.nodes
    tail = np.max(np.abs(density(edge)))
    if not np.isfinite(peak) or not np.all(np.isfinite(density(r[:, None] * quad.nodes[0][None, :]))):
        raise ValueError("density is not finite")
    if tail > 1e-14 * max(peak, 1e-300) and tail > 1e-300:
        raise ValueError("density does not decay inside the radial range")
    # rhs: polar coordinates in R^d
    pts = (r[:, None, None] * quad.nodes[None, :, :]).reshape(-1, d)
    vals = density(pts).reshape(r.size, -1)
    rhs = float(np.sum(wr * r ** (d - 1) * (vals @ quad.weights)))
    # lhs: for each direction, polar coordinates on v^perp
    if d == 2:
        circ = np.array([[1.0], [-1.0]])
        circ_w = np.array([1.0, 1.0])
    else:
        circ_q = sphere_quadrature(1, max(4, 2 * line.order))
        circ, circ_w = circ_q.nodes, circ_q.weights
    lhs = 0.0
    for v, wv in zip(quad.nodes, quad.weights):
        basis = orthonormal_complement(v)
        dirs = circ @ basis
        pts = (r[:, None, None] * dirs[None, :, :]).reshape(-1, d)
        vals = density(pts).reshape(r.size, -1)
        inner = np.sum(wr * r ** (d - 2) * r * (vals @ circ_w))
        lhs += wv * inner
    lhs = float(lhs)
    return lhs, rhs, lhs / rhs

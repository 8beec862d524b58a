"""
Projected and hyperplane energies and the averaged projection bound.

For a projection frame ``Pi = L Q`` with kernel ``G``, the projected
measures satisfy ``(Q_# nu)^(zeta) = nu^(Q^T zeta)`` and, after the
substitution ``eta = L^{-T} zeta``,

    I_alpha(Pi_# nu) = |det L|^{-1} int |nu^(Q^T zeta)|^2 |L^{-T} zeta|^{alpha-n} d zeta.

One set of transform samples per frame therefore gives both energies.
The tail past the cutoff is bounded through the Plancherel deficit of the
density of ``Q_# nu``, whose squared norm is a line integral of the
autocorrelation of ``nu`` along ``G``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import _quad
from ..geometry import (orthonormal_complement, parabolic_frame, solmon_check,
                        sphere_area, sphere_quadrature, LineQuadrature)
from ..measures import (BoxMeasure, EnergyEstimate, _directions, default_cutoff,
                        fourier_energies, fourier_transform, polar_rule,
                        surface_quadrature)


def projected_density_l2_sq(nu: BoxMeasure, G) -> float:
    """``||density of Q_# nu||_2^2 = int_R A(s G) ds`` with ``A`` the autocorrelation of ``nu``.

    ``A`` is a sum over cell pairs of products of trapezoids, so along the
    line it is piecewise polynomial of degree ``<= d`` and a two-point
    Gauss rule between consecutive kinks is exact.
    """
    G = np.asarray(G, dtype=float)
    lo, hi, rho = nu.cells()
    m, d = lo.shape
    x, w = _quad._gl((d + 2) // 2)
    total = 0.0
    active = np.abs(G) > 1e-15
    for i in range(m):
        # B_i ∩ (B_j - z) along z_k: kinks at lo_j - hi_i, lo_j - lo_i, hi_j - hi_i, hi_j - lo_i
        k1 = lo - hi[i]
        k4 = hi - lo[i]
        k2 = np.minimum(lo - lo[i], hi - hi[i])
        k3 = np.maximum(lo - lo[i], hi - hi[i])
        # inactive axes contribute the overlap at z_k = 0
        const = np.ones(m)
        s_lo = np.full(m, -np.inf)
        s_hi = np.full(m, np.inf)
        knots = []
        for k in range(d):
            if not active[k]:
                const *= np.clip(np.minimum(hi[:, k], hi[i, k]) - np.maximum(lo[:, k], lo[i, k]), 0, None)
                continue
            ends = np.sort(np.column_stack([k1[:, k], k4[:, k]]) / G[k], axis=1)
            s_lo = np.maximum(s_lo, ends[:, 0])
            s_hi = np.minimum(s_hi, ends[:, 1])
            knots.append(np.column_stack([k2[:, k], k3[:, k]]) / G[k])
        keep = (s_hi > s_lo) & (const > 0)
        if not np.any(keep):
            continue
        brk = np.column_stack([s_lo[keep], s_hi[keep]] + [kn[keep] for kn in knots])
        brk = np.sort(np.clip(brk, s_lo[keep, None], s_hi[keep, None]), axis=1)
        a, b = brk[:, :-1], brk[:, 1:]
        half = 0.5 * (b - a)
        s = (0.5 * (a + b))[..., None] + half[..., None] * x
        val = np.ones_like(s)
        idx = np.flatnonzero(keep)
        for k in range(d):
            if not active[k]:
                continue
            z = s * G[k]
            ov = np.minimum(hi[idx, k][:, None, None], hi[i, k] + z) \
                - np.maximum(lo[idx, k][:, None, None], lo[i, k] + z)
            val *= np.clip(ov, 0, None)
        integ = np.sum(val * half[..., None] * w, axis=(1, 2))
        total += float(rho[i] * np.sum(rho[idx] * const[idx] * integ))
    return total


@dataclass(frozen=True)
class PlaneSamples:
    """``|nu^(B^T zeta)|^2`` on a polar rule for an orthonormal basis ``B`` of a hyperplane."""

    rule: object
    sq: np.ndarray
    mass: float
    plancherel: float

    def energies(self, alphas, L=None) -> list:
        """Energies of ``B_# nu`` (``L=None``) or of ``(L B)_# nu``."""
        rule = self.rule
        n = rule.nodes.shape[1]
        inner = float(np.sum(self.sq * rule.weights))
        inner += self.mass**2 * sphere_area(n - 1) * rule.r_min**n / n
        deficit = max(0.0, self.plancherel - inner)
        out = []
        for a in alphas:
            if L is None:
                wgt = rule.radii ** (a - n)
                small = sphere_area(n - 1) * rule.r_min**a / a
                tail = deficit * rule.cutoff ** (a - n)
                jac = 1.0
            else:
                Linv_t = np.linalg.inv(L).T
                wgt = np.linalg.norm(rule.nodes @ Linv_t.T, axis=1) ** (a - n)
                dirs, wd = _directions(n, 16)
                small = float(np.sum(wd * np.linalg.norm(dirs @ Linv_t.T, axis=1) ** (a - n))) \
                    * rule.r_min**a / a
                jac = 1.0 / abs(np.linalg.det(L))
                tail = deficit * (rule.cutoff / np.linalg.norm(L, 2)) ** (a - n)
            val = float(np.sum(self.sq * rule.weights * wgt)) + self.mass**2 * small
            out.append(EnergyEstimate(jac * val, jac * tail, rule.cutoff, rule.nodes.shape[0]))
        return out


def plane_samples(nu: BoxMeasure, basis, kernel, cutoff: float = None,
                  order: int = 6, per_period: float = 1.0) -> PlaneSamples:
    """Sample ``nu^`` on the hyperplane spanned by the rows of ``basis``."""
    basis = np.atleast_2d(np.asarray(basis, dtype=float))
    n = basis.shape[0]
    cutoff = default_cutoff(nu) if cutoff is None else float(cutoff)
    rule = polar_rule(n, cutoff, nu.diameter, order, per_period)
    sq = np.abs(fourier_transform(nu, rule.nodes @ basis)) ** 2
    plancherel = (2 * np.pi) ** n * projected_density_l2_sq(nu, kernel)
    return PlaneSamples(rule, sq, nu.mass, plancherel)


def hyperplane_energy(nu: BoxMeasure, v, alphas, basis=None, cutoff: float = None) -> list:
    """``int_{v^perp} |xi|^{alpha-n} |nu^(xi)|^2 dH^n(xi)`` for each ``alpha``.

    ``basis`` is any orthonormal basis of ``v^perp`` (rows); by default one
    is built from a Householder reflector.
    """
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v)
    basis = orthonormal_complement(v) if basis is None else np.asarray(basis, dtype=float)
    return plane_samples(nu, basis, v, cutoff).energies(np.atleast_1d(alphas))


@dataclass(frozen=True)
class ProjectedEnergies:
    """Per-``theta`` energies of ``Q_theta # nu`` and ``Pi_theta # nu``."""

    thetas: np.ndarray
    weights: np.ndarray
    alphas: tuple
    q_energy: np.ndarray
    pi_energy: np.ndarray
    q_tail: np.ndarray
    pi_tail: np.ndarray


def theta_rule(n: int, radial: int = 4):
    """Midpoint rule on ``B_n(0, 1)`` used as the theta grid."""
    q = surface_quadrature("paraboloid", n, radial)
    return q.nodes, q.weights


def projected_energies(nu: BoxMeasure, thetas, alphas, cutoff: float = None,
                       weights=None) -> ProjectedEnergies:
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    alphas = tuple(float(a) for a in np.atleast_1d(alphas))
    k = thetas.shape[0]
    qe = np.zeros((k, len(alphas)))
    pe = np.zeros_like(qe)
    qt = np.zeros_like(qe)
    pt = np.zeros_like(qe)
    for i, th in enumerate(thetas):
        fr = parabolic_frame(th)
        samp = plane_samples(nu, fr.Q, fr.G, cutoff)
        for j, e in enumerate(samp.energies(alphas)):
            qe[i, j], qt[i, j] = e.value, e.tail_bound
        for j, e in enumerate(samp.energies(alphas, fr.L)):
            pe[i, j], pt[i, j] = e.value, e.tail_bound
    w = np.full(k, 1.0 / k) if weights is None else np.asarray(weights, dtype=float)
    return ProjectedEnergies(thetas, w, alphas, qe, pe, qt, pt)


@dataclass(frozen=True)
class ProjectionReport:
    alpha: float
    lhs_average: float
    energy: EnergyEstimate
    ratio: float
    q_spread: float
    solmon_c: float
    per_theta_pi: np.ndarray
    per_theta_q: np.ndarray
    max_relative_tail: float
    meta: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "alpha": self.alpha, "lhs_average": self.lhs_average,
            "energy": self.energy.value, "energy_tail": self.energy.tail_bound,
            "ratio": self.ratio, "q_spread": self.q_spread, "solmon_c": self.solmon_c,
            "per_theta_pi": self.per_theta_pi.tolist(), "per_theta_q": self.per_theta_q.tolist(),
            "max_relative_tail": self.max_relative_tail,
        }


def solmon_constant(d: int) -> float:
    """Fitted X-ray constant on a Gaussian in ``R^d``."""
    quad = sphere_quadrature(d - 1, 16)
    return solmon_check(lambda x: np.exp(-np.sum(x**2, axis=1)), d, quad, LineQuadrature())[2]


def averaged_projection_check(nu: BoxMeasure, alphas, thetas=None, weights=None,
                              cutoff: float = None) -> list:
    """Theta-average of ``I_alpha(Pi_theta # nu)`` against ``I_alpha(nu)``.

    Returns one ``ProjectionReport`` per ``alpha``.  The grid defaults to
    a midpoint rule on ``B_n(0, 1)``.
    """
    n = nu.dim - 1
    alphas = tuple(float(a) for a in np.atleast_1d(alphas))
    if thetas is None:
        thetas, weights = theta_rule(n)
    pe = projected_energies(nu, thetas, alphas, cutoff, weights)
    full = fourier_energies(nu, alphas, cutoff)
    c = solmon_constant(n + 1)
    w = pe.weights / np.sum(pe.weights)
    reports = []
    for j, a in enumerate(alphas):
        if full[j].flagged:
            raise ValueError(f"energy certificate diverges for alpha={a}: "
                             f"tail {full[j].tail_bound:.3g} > value {full[j].value:.3g}")
        lhs = float(np.sum(w * pe.pi_energy[:, j]))
        q = pe.q_energy[:, j]
        spread = float((q.max() - q.min()) / q.mean())
        rel = max(float(np.max(pe.pi_tail[:, j] / pe.pi_energy[:, j])), full[j].relative_tail)
        reports.append(ProjectionReport(a, lhs, full[j], lhs / full[j].value, spread, c,
                                        pe.pi_energy[:, j].copy(), q.copy(), rel))
    return reports


def default_v_grid(n: int, per_axis: int = 5, radius: float = 0.45) -> np.ndarray:
    """Unit vectors ``(u, 1)/|(u, 1)|`` with ``|v - e_{n+1}| < 1/2``."""
    axis = np.linspace(-radius, radius, per_axis)
    grids = np.meshgrid(*([axis] * n), indexing="ij")
    u = np.column_stack([g.ravel() for g in grids])
    v = np.column_stack([u, np.ones(u.shape[0])])
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    e = np.zeros(n + 1)
    e[-1] = 1.0
    return v[np.linalg.norm(v - e, axis=1) < 0.5]


@dataclass(frozen=True)
class MinProjection:
    value: float
    argmin: np.ndarray
    values: np.ndarray
    at_pole: float


def min_projected_energy(nu: BoxMeasure, alpha: float, vs=None, cutoff: float = None) -> MinProjection:
    """Grid minimum over ``v`` near ``e_{n+1}`` of the hyperplane energy ``I_alpha(P_{v^perp} # nu)``."""
    n = nu.dim - 1
    vs = default_v_grid(n) if vs is None else np.atleast_2d(np.asarray(vs, dtype=float))
    if vs.shape[0] == 0:
        raise ValueError("empty direction grid")
    vals = np.array([hyperplane_energy(nu, v, [alpha], cutoff=cutoff)[0].value for v in vs])
    e = np.zeros(n + 1)
    e[-1] = 1.0
    pole = hyperplane_energy(nu, e, [alpha], cutoff=cutoff)[0].value
    i = int(np.argmin(vals))
    return MinProjection(float(min(vals[i], pole)), vs[i] if vals[i] <= pole else e, vals, pole)

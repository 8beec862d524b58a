"""
Numerical witness of the chain reducing the weighted estimate to the
maximal estimate.

For ``supp f^ in B_n(0, lam)`` and ``nu`` on ``R^n x [0, 1]`` the steps are

(a) ``int |e^{i(t/lam) Delta} f| d nu``;
(b) the ``theta``-average of ``int sup_{0<s<=1/lam} |e^{is Delta} f_{lam theta}| d Pi_theta # nu``,
    where ``f_{lam theta}`` is ``f`` translated in frequency and
    ``Pi_theta (x, t) = x - 2 t theta``;
(c) ``K ||f||_2 (avg_theta I_alpha(Pi_theta # nu))^{1/2}``, with ``K`` the
    largest observed ratio of a single (b) term to ``||f||_2 I_alpha^{1/2}``;
(d) ``K ||f||_2 (B I_alpha(nu))^{1/2}`` with the averaging constant
    ``B = kappa 5^{(n+1)/2} c_n / (2^n |B_n|)``.

(a) <= (b) pointwise by the Galilean identity, (b) <= (c) by the choice of
``K`` and concavity of the square root, (c) <= (d) because the frame
factor ``|det L|^{-1} |L^{-T} zeta|^{alpha-n} / |zeta|^{alpha-n}`` is at
most ``kappa = max(1, 5^{(n-alpha-1)/2})``, the map ``theta -> G_theta``
has area distortion at most ``5^{(n+1)/2} / 2^n`` and the directional
average of hyperplane energies is ``c_n I_alpha(nu)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from .. import _quad
from ..geometry import sphere_area
from ..measures import BoxMeasure, fourier_energy
from ..spectral import (FrequencyAtomFunction, l2_norm, maximal_in_time_many,
                        required_time_step, schrodinger_evolve, translate_frequency)
from .projection import projected_energies, solmon_constant, theta_rule

SLACK = 1e-3
CERT_LIMIT = 0.1


def cell_quadrature(nu: BoxMeasure, order: int):
    """Tensor Gauss rule on every cell: points and weights integrating against ``nu``."""
    lo, hi, rho = nu.cells()
    g, w = _quad.gauss_legendre(0.0, 1.0, order)
    d = nu.dim
    grids = np.meshgrid(*([g] * d), indexing="ij")
    unit = np.column_stack([x.ravel() for x in grids])
    uw = np.prod(np.meshgrid(*([w] * d), indexing="ij"), axis=0).ravel()
    side = hi - lo
    pts = lo[:, None, :] + unit[None, :, :] * side[:, None, :]
    wts = (rho * np.prod(side, axis=1))[:, None] * uw[None, :]
    return pts.reshape(-1, d), wts.ravel()


def ball_volume(n: int) -> float:
    return sphere_area(n - 1) / n


def averaging_constant(n: int, alpha: float) -> float:
    """``B = kappa 5^{(n+1)/2} c_n / (2^n |B_n|)``."""
    kappa = max(1.0, 5.0 ** ((n - alpha - 1) / 2))
    return kappa * 5.0 ** ((n + 1) / 2) * solmon_constant(n + 1) / (2**n * ball_volume(n))


@dataclass(frozen=True)
class PipelineReport:
    lhs: float
    per_theta: np.ndarray
    thetas: np.ndarray
    weights: np.ndarray
    step_b: float
    step_c: float
    step_d: float
    K: float
    norm: float
    energy: float
    theta_energies: np.ndarray
    averaging_constant: float
    certificates: dict
    meta: dict = field(default_factory=dict)

    @property
    def steps(self) -> tuple:
        return (self.lhs, self.step_b, self.step_c, self.step_d)

    def monotone(self, slack: float = SLACK) -> bool:
        s = self.steps
        return all(s[k + 1] >= s[k] * (1 - slack) for k in range(len(s) - 1))

    def per_theta_monotone(self, slack: float = SLACK) -> np.ndarray:
        """Per grid point: ``lhs <= b_theta <= K ||f|| I_theta^{1/2}``."""
        c_theta = self.K * self.norm * np.sqrt(self.theta_energies)
        return (self.per_theta >= self.lhs * (1 - slack)) & (c_theta >= self.per_theta * (1 - slack))

    @property
    def goal_ratio(self) -> float:
        """``lhs / (||f||_2 I_alpha(nu)^{1/2})``."""
        return self.lhs / (self.norm * np.sqrt(self.energy))

    def as_dict(self) -> dict:
        return {
            "lhs": self.lhs, "step_b": self.step_b, "step_c": self.step_c, "step_d": self.step_d,
            "K": self.K, "goal_ratio": self.goal_ratio, "norm": self.norm, "energy": self.energy,
            "averaging_constant": self.averaging_constant,
            "thetas": self.thetas.tolist(), "weights": self.weights.tolist(),
            "per_theta": self.per_theta.tolist(), "theta_energies": self.theta_energies.tolist(),
            "certificates": dict(self.certificates), "monotone": self.monotone(),
        }


def _theta_term(f, lam, theta, pts, w, step):
    """``int sup_s |e^{is Delta} f_{lam theta}|(x - 2 t theta) d nu`` (grid sup and the exact time)."""
    g = translate_frequency(f, lam * np.asarray(theta))
    y = pts[:, :-1] - 2.0 * pts[:, -1:] * theta[None, :]
    sup = maximal_in_time_many(g, y, 1.0 / lam, step)
    exact = np.abs(schrodinger_evolve(g, np.column_stack([y, pts[:, -1] / lam])).values)
    return float(np.sum(w * np.maximum(sup, exact)))


def equivalence_pipeline(nu: BoxMeasure, f: FrequencyAtomFunction, lam: float, alpha: float,
                         thetas=None, weights=None, order: int = 3, cutoff: float = None,
                         workers: int = 1) -> PipelineReport:
    """Evaluate the four steps and their certificates.

    Raises ``ValueError`` when a precondition fails or a certificate is
    looser than 10% (quadrature order doubling for (a), energy tails for
    (c) and (d)).
    """
    n = f.dim
    if nu.dim != n + 1:
        raise ValueError("nu must live in R^{n+1}")
    if f.band_radius is None or f.band_radius > lam * (1 + 1e-12):
        raise ValueError("f must carry a band radius <= lam")
    lo, hi = nu.bounds()
    if lo[-1] < 0 or hi[-1] > 1:
        raise ValueError("nu must have its time coordinate in [0, 1]")
    if nu._reach() > 1 + 1e-12:
        raise ValueError("nu must be supported in the unit ball")
    if thetas is None:
        thetas, weights = theta_rule(n)
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    weights = np.full(thetas.shape[0], 1.0) if weights is None else np.asarray(weights, dtype=float)
    wn = weights / weights.sum()

    pts, w = cell_quadrature(nu, order)
    u = np.abs(schrodinger_evolve(f, pts, lam).values)
    lhs = float(np.sum(w * u))
    pts2, w2 = cell_quadrature(nu, 2 * order)
    lhs2 = float(np.sum(w2 * np.abs(schrodinger_evolve(f, pts2, lam).values)))
    cert_a = abs(lhs2 - lhs) / max(lhs2, 1e-300)

    # every f_{lam theta} has frequencies <= 2 lam, so one step serves all theta
    step = 0.1 / (2 * lam) ** 2
    if f.max_frequency > 0:
        step = min(step, required_time_step(translate_frequency(f, lam * thetas[0])))
    per_theta = Parallel(n_jobs=workers)(
        delayed(_theta_term)(f, lam, th, pts2, w2, step) for th in thetas)
    per_theta = np.asarray(per_theta)

    pe = projected_energies(nu, thetas, [alpha], cutoff, weights)
    I_theta = pe.pi_energy[:, 0]
    full = fourier_energy(nu, alpha, cutoff)
    norm = l2_norm(f)
    K = float(np.max(per_theta / (norm * np.sqrt(I_theta))))
    B = averaging_constant(n, alpha)
    step_b = float(np.sum(wn * per_theta))
    step_c = K * norm * float(np.sqrt(np.sum(wn * I_theta)))
    step_d = K * norm * float(np.sqrt(B * full.value))
    certs = {
        "lhs_order_doubling": cert_a,
        "theta_energy_tail": float(np.max(pe.pi_tail[:, 0] / I_theta)),
        "energy_tail": full.relative_tail,
        "time_step": step,
    }
    loose = {k: v for k, v in certs.items() if k != "time_step" and v > CERT_LIMIT}
    if loose:
        raise ValueError("quadrature certificates looser than 10%: " +
                         ", ".join(f"{k}={v:.3g}" for k, v in loose.items()))
    return PipelineReport(lhs2, per_theta, thetas, weights, step_b, step_c, step_d, K, norm,
                          full.value, I_theta, B, certs, {"lam": lam, "alpha": alpha, "order": order})

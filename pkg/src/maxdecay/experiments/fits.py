"""Log-log exponent fits, surface decay exponents and exponent conversions."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ..measures import (BoxMeasure, cone_decay, parabolic_decay, required_nodes,
                        surface_quadrature)


@dataclass(frozen=True)
class ExponentFit:
    """Least-squares line through ``(log R_i, log Q_i)``."""

    log_r: np.ndarray
    log_q: np.ndarray
    slope: float
    intercept: float
    stderr: float

    def residuals(self) -> np.ndarray:
        return self.log_q - (self.intercept + self.slope * self.log_r)

    def as_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "stderr": self.stderr,
                "log_r": self.log_r.tolist(), "log_q": self.log_q.tolist()}


def fit_exponent(R, Q) -> ExponentFit:
    """Fit ``Q ~ R^slope`` by ordinary least squares in log-log coordinates."""
    R = np.asarray(R, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if R.size < 3 or R.shape != Q.shape:
        raise ValueError("need at least 3 matching (R, Q) pairs")
    if np.any(np.diff(R) <= 0):
        raise ValueError("R values must be strictly increasing")
    if np.any(Q <= 0) or np.any(R <= 0):
        raise ValueError("R and Q must be positive")
    x, y = np.log(R), np.log(Q)
    return _line(x, y)


def _line(x, y) -> ExponentFit:
    A = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    dof = x.size - 2
    s2 = float(resid @ resid) / dof if dof > 0 else 0.0
    sxx = float(np.sum((x - x.mean()) ** 2))
    return ExponentFit(x, y, float(coef[1]), float(coef[0]), float(np.sqrt(s2 / sxx)))


def _check_geometric(R, minimum):
    R = np.asarray(R, dtype=float)
    if R.size < minimum:
        raise ValueError(f"need at least {minimum} R values")
    ratios = R[1:] / R[:-1]
    if np.any(ratios <= 1) or not np.allclose(ratios, ratios[0], rtol=1e-9):
        raise ValueError("R values must form an increasing geometric progression")
    return R


def decay_exponent(nu: BoxMeasure, surface: str, R_list, radial: int = None) -> ExponentFit:
    """Fit the surface average ``~ R^{-beta}``; ``-slope`` estimates ``beta``.

    ``radial`` defaults to the node count resolving the largest ``R``
    with four nodes per oscillation; a smaller explicit value is rejected
    by the decay routines with the required count.
    """
    R = _check_geometric(R_list, 4)
    n = nu.dim - 1
    if radial is None:
        radial = max(32, required_nodes(nu, float(R[-1]), surface))
    quad = surface_quadrature(surface, n, radial)
    decay = parabolic_decay if surface == "paraboloid" else cone_decay
    vals = [decay(nu, float(r), quad) for r in R]
    return fit_exponent(R, vals)


def exponent_conversions(value, n: int, surface: str, direction: str) -> Fraction:
    """Convert between decay exponents and regularity exponents.

    ``direction="beta_to_s"``: ``s = (n - beta) / 2``.
    ``direction="s_to_beta"``: ``beta = n - 2 s``.
    The same relation links the paraboloid and cone exponents, so
    ``surface`` only selects which ``beta`` is meant.  Arithmetic is done
    on exact rationals (a float input is converted exactly), so converting
    twice returns the input exactly; call ``float`` on the result if needed.
    """
    if surface not in ("paraboloid", "cone"):
        raise ValueError(f"unknown surface {surface!r}")
    value = Fraction(value)
    if direction == "beta_to_s":
        return (n - value) / 2
    if direction == "s_to_beta":
        return n - 2 * value
    raise ValueError(f"unknown direction {direction!r}")

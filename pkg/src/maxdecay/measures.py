"""
Finite measures as unions of constant-density boxes.

The Fourier transform is taken without a prefactor,

    nu^(xi) = int e^{-i<x, xi>} d nu(x),

so ``nu^(0)`` is the total mass and ``int |nu^|^2 = (2 pi)^d ||rho||_2^2``.
Each box contributes a product of one-dimensional factors
``e^{-i xi c} (b - a) sinc(xi h)`` with centre ``c`` and half-width ``h``;
an arithmetic progression of congruent boxes contributes its base factor
times a Dirichlet kernel.

Two energies are provided.  ``fourier_energy`` integrates
``|nu^(xi)|^2 |xi|^{alpha - d}`` in polar coordinates and brackets the
truncated tail with the Plancherel deficit.  ``riesz_energy`` (Monte
Carlo) and ``riesz_energy_quadrature`` (deterministic) compute
``int int |x - y|^{-alpha}``.  The two agree up to ``energy_constant(d, alpha)``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma

from . import _quad
from .geometry import sphere_area, sphere_quadrature

_CHUNK = 1 << 22  # complex entries per evaluation block


# ---------------------------------------------------------------- types

@dataclass(frozen=True)
class Progression:
    """``count`` congruent boxes ``[lo + k step, hi + k step]``, ``k = 0..count-1``."""

    lo: np.ndarray
    hi: np.ndarray
    rho: float
    step: np.ndarray
    count: int

    def __post_init__(self):
        for name in ("lo", "hi", "step"):
            arr = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "rho", float(self.rho))
        object.__setattr__(self, "count", int(self.count))
        if not (self.lo.shape == self.hi.shape == self.step.shape):
            raise ValueError("progression lo, hi and step must share a dimension")
        if self.count < 1:
            raise ValueError("progression count must be >= 1")
        if np.any(self.hi <= self.lo):
            raise ValueError("progression base box is degenerate")
        if not np.isfinite(self.rho) or self.rho < 0:
            raise ValueError("density must be finite and nonnegative")

    def expand(self):
        k = np.arange(self.count)[:, None]
        lo = self.lo[None, :] + k * self.step[None, :]
        hi = self.hi[None, :] + k * self.step[None, :]
        return lo, hi, np.full(self.count, self.rho)

    @property
    def mass(self) -> float:
        return float(self.count * self.rho * np.prod(self.hi - self.lo))


@dataclass(frozen=True)
class BoxMeasure:
    """Finite measure ``sum_i rho_i 1_{[lo_i, hi_i]}`` plus progression families.

    Parameters
    ----------
    lo, hi : (m, d) arrays
        Box corners of the loose cells (``m`` may be zero).
    rho : (m,) array
        Nonnegative densities.
    progressions : tuple of Progression
        Families of congruent translates.
    r_supp : float, optional
        Radius of a centred ball containing every box; defaults to the
        smallest such radius.
    """

    lo: np.ndarray
    hi: np.ndarray
    rho: np.ndarray
    progressions: tuple = ()
    r_supp: float = None

    def __post_init__(self):
        d = None
        if self.progressions:
            d = self.progressions[0].lo.size
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.size == 0:
            if d is None:
                raise ValueError("a measure needs at least one cell")
            lo = np.zeros((0, d))
            hi = np.zeros((0, d))
        lo = np.atleast_2d(lo)
        hi = np.atleast_2d(hi)
        rho = np.asarray(self.rho, dtype=float).reshape(-1)
        if lo.shape != hi.shape or rho.shape != (lo.shape[0],):
            raise ValueError("lo, hi and rho must have matching shapes")
        d = lo.shape[1] if d is None else d
        if lo.shape[1] != d or any(p.lo.size != d for p in self.progressions):
            raise ValueError("all cells must share the ambient dimension")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("non-finite box corner")
        if np.any(hi <= lo):
            raise ValueError("degenerate box")
        if np.any(~np.isfinite(rho)) or np.any(rho < 0):
            raise ValueError("densities must be finite and nonnegative")
        for name, arr in (("lo", lo), ("hi", hi), ("rho", rho)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "progressions", tuple(self.progressions))
        mass = self.mass
        if not np.isfinite(mass) or mass <= 0:
            raise ValueError("total mass must be finite and positive")
        reach = self._reach()
        if self.r_supp is None:
            object.__setattr__(self, "r_supp", reach)
        else:
            object.__setattr__(self, "r_supp", float(self.r_supp))
            if reach > self.r_supp * (1 + 1e-12):
                raise ValueError(f"boxes reach radius {reach}, beyond r_supp {self.r_supp}")

    # -- basic properties
    @property
    def dim(self) -> int:
        return self.lo.shape[1]

    @property
    def mass(self) -> float:
        loose = float(np.sum(self.rho * np.prod(self.hi - self.lo, axis=1)))
        return loose + sum(p.mass for p in self.progressions)

    @property
    def n_cells(self) -> int:
        return self.lo.shape[0] + sum(p.count for p in self.progressions)

    def cells(self):
        """All boxes as ``(lo, hi, rho)`` arrays, progressions expanded."""
        parts = [(self.lo, self.hi, self.rho)] + [p.expand() for p in self.progressions]
        return tuple(np.concatenate(x) for x in zip(*parts))

    def bounds(self):
        lo, hi, _ = self.cells()
        return lo.min(axis=0), hi.max(axis=0)

    @property
    def diameter(self) -> float:
        a, b = self.bounds()
        return float(np.linalg.norm(b - a))

    @property
    def min_side(self) -> float:
        lo, hi, _ = self.cells()
        return float(np.min(hi - lo))

    def _reach(self) -> float:
        lo, hi, _ = self.cells()
        far = np.maximum(np.abs(lo), np.abs(hi))
        return float(np.max(np.linalg.norm(far, axis=1)))

    # -- constructions
    def scaled(self, factor: float) -> "BoxMeasure":
        """Multiply every density by ``factor``."""
        progs = tuple(Progression(p.lo, p.hi, p.rho * factor, p.step, p.count)
                      for p in self.progressions)
        return BoxMeasure(self.lo, self.hi, self.rho * factor, progs, self.r_supp)

    def dilated(self, s: float) -> "BoxMeasure":
        """Pushforward under ``x -> s x``; total mass is preserved."""
        if s <= 0:
            raise ValueError("dilation factor must be positive")
        c = s ** (-self.dim)
        progs = tuple(Progression(p.lo * s, p.hi * s, p.rho * c, p.step * s, p.count)
                      for p in self.progressions)
        return BoxMeasure(self.lo * s, self.hi * s, self.rho * c, progs)

    @classmethod
    def from_grid(cls, edges, rho) -> "BoxMeasure":
        """Tensor grid of boxes with per-cell densities ``rho`` (shape of the grid)."""
        edges = [np.asarray(e, dtype=float) for e in edges]
        rho = np.asarray(rho, dtype=float)
        lo = np.stack(np.meshgrid(*[e[:-1] for e in edges], indexing="ij"), -1)
        hi = np.stack(np.meshgrid(*[e[1:] for e in edges], indexing="ij"), -1)
        d = len(edges)
        keep = rho.reshape(-1) > 0
        return cls(lo.reshape(-1, d)[keep], hi.reshape(-1, d)[keep], rho.reshape(-1)[keep])


def gaussian_boxes(d: int, cells_per_axis: int, half_width: float, scale: float = 1.0,
                   normalise: bool = False) -> BoxMeasure:
    """Box approximation of ``exp(-|x|^2 / scale^2)`` on ``[-half_width, half_width]^d``.

    Each box carries the exact average of the Gaussian over it.
    """
    from scipy.special import erf

    e = np.linspace(-half_width, half_width, cells_per_axis + 1)
    avg1 = (np.sqrt(np.pi) * scale / 2) * np.diff(erf(e / scale)) / np.diff(e)
    rho = avg1
    for _ in range(d - 1):
        rho = np.multiply.outer(rho, avg1)
    nu = BoxMeasure.from_grid([e] * d, rho)
    return nu.scaled(1.0 / nu.mass) if normalise else nu


# ---------------------------------------------------------------- transform

def _dirichlet(phi: np.ndarray, count: int) -> np.ndarray:
    """``sum_{k<count} e^{-i k phi}`` evaluated stably through reduced angles."""
    phr = np.remainder(phi + np.pi, 2 * np.pi) - np.pi
    ratio = count * np.sinc(count * phr / (2 * np.pi)) / np.sinc(phr / (2 * np.pi))
    return np.exp(-0.5j * (count - 1) * phr) * ratio


def _axis_factor(xi_k: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """``int_lo^hi e^{-i xi x} dx`` for every (xi, interval) pair, shape (N, u)."""
    c = 0.5 * (lo + hi)
    h = 0.5 * (hi - lo)
    arg = xi_k[:, None] * c[None, :]
    return np.exp(-1j * arg) * (2 * h)[None, :] * np.sinc(xi_k[:, None] * h[None, :] / np.pi)


def _loose_transform(lo, hi, rho, xi):
    n, d = xi.shape
    m = lo.shape[0]
    out = np.zeros(n, dtype=complex)
    if m == 0:
        return out
    # factors only depend on the distinct intervals of each axis
    uniq = [np.unique(np.column_stack([lo[:, k], hi[:, k]]), axis=0, return_inverse=True)
            for k in range(d)]
    sizes = [iv.shape[0] for iv, _ in uniq]
    if d > 1 and np.prod(sizes) <= 8 * m:
        # cells fill most of a tensor grid: contract one axis at a time
        dense = np.zeros(sizes)
        np.add.at(dense, tuple(inv.reshape(-1) for _, inv in uniq), rho)
        step = max(1, _CHUNK // int(np.prod(sizes[1:])))
        for s in range(0, n, step):
            blk = xi[s:s + step]
            acc = _axis_factor(blk[:, 0], uniq[0][0][:, 0], uniq[0][0][:, 1]) \
                @ dense.reshape(sizes[0], -1)
            for k in range(1, d):
                fac = _axis_factor(blk[:, k], uniq[k][0][:, 0], uniq[k][0][:, 1])
                acc = acc.reshape(blk.shape[0], sizes[k], -1)
                acc = np.einsum("nbr,nb->nr", acc, fac)
            out[s:s + step] = acc.reshape(-1)
        return out
    step = max(1, _CHUNK // max(m, 1))
    for s in range(0, n, step):
        blk = xi[s:s + step]
        prod = None
        for k, (iv, inv) in enumerate(uniq):
            fac = _axis_factor(blk[:, k], iv[:, 0], iv[:, 1])[:, inv.reshape(-1)]
            prod = fac if prod is None else prod * fac
        out[s:s + step] = (prod * rho[None, :]).sum(axis=1)
    return out


def _prog_transform(p: Progression, xi):
    base = np.full(xi.shape[0], p.rho, dtype=complex)
    for k in range(xi.shape[1]):
        base *= _axis_factor(xi[:, k], p.lo[k:k + 1], p.hi[k:k + 1])[:, 0]
    return base * _dirichlet(xi @ p.step, p.count)


def fourier_transform(nu: BoxMeasure, xi) -> np.ndarray:
    """``nu^(xi)`` in closed form for a point ``(d,)`` or points ``(N, d)``."""
    xi = np.asarray(xi, dtype=float)
    single = xi.ndim == 1
    xi = np.atleast_2d(xi)
    if xi.shape[1] != nu.dim:
        raise ValueError(f"frequency must have dimension {nu.dim}")
    out = _loose_transform(nu.lo, nu.hi, nu.rho, xi)
    for p in nu.progressions:
        out = out + _prog_transform(p, xi)
    return out[0] if single else out


def fourier_transform_naive(nu: BoxMeasure, xi) -> np.ndarray:
    """Cell-by-cell transform with progressions expanded (reference path).

    Progression cells are translates of the base box by ``k step``; the
    base width is kept so large offsets do not perturb it.
    """
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    cells = [(0.5 * (a + b), 0.5 * (b - a), r) for a, b, r in zip(nu.lo, nu.hi, nu.rho)]
    for p in nu.progressions:
        c0, h = 0.5 * (p.lo + p.hi), 0.5 * (p.hi - p.lo)
        cells.extend((c0 + k * p.step, h, p.rho) for k in range(p.count))
    out = np.zeros(xi.shape[0], dtype=complex)
    for c, h, r in cells:
        term = np.full(xi.shape[0], r, dtype=complex)
        for k in range(nu.dim):
            term *= np.exp(-1j * xi[:, k] * c[k]) * 2 * h[k] * np.sinc(xi[:, k] * h[k] / np.pi)
        out += term
    return out


def pushforward_transform(nu: BoxMeasure, P, eta) -> np.ndarray:
    """``(P_# nu)^(eta) = nu^(P^T eta)`` for a real ``n x d`` matrix ``P``."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if P.shape[1] != nu.dim:
        raise ValueError(f"P must have {nu.dim} columns")
    if not np.all(np.isfinite(P)):
        raise ValueError("P must be finite")
    eta = np.asarray(eta, dtype=float)
    single = eta.ndim <= 1
    eta = eta.reshape(-1, P.shape[0])
    out = fourier_transform(nu, eta @ P)
    return out[0] if single else out


# ---------------------------------------------------------------- ball mass

@dataclass(frozen=True)
class BallMass:
    value: float
    error_bound: float


def ball_mass(nu: BoxMeasure, x, r: float, tol: float = 1e-6, max_boxes: int = 1 << 21) -> float:
    """``nu(B(x, r))`` by recursive subdivision of boundary boxes.

    Boxes fully inside or outside the ball are resolved exactly; the
    remaining boundary boxes are halved along their longest side until
    their mass drops below ``tol * mass(nu)``.  Half of the undecided mass
    is added at the end, so the absolute error is at most half of it.
    """
    return ball_mass_report(nu, x, r, tol, max_boxes).value


def ball_mass_report(nu: BoxMeasure, x, r: float, tol: float = 1e-6,
                     max_boxes: int = 1 << 21) -> BallMass:
    if not r > 0:
        raise ValueError("radius must be positive")
    if not 0 < tol < 1:
        raise ValueError("tol must lie in (0, 1)")
    x = np.asarray(x, dtype=float).reshape(-1)
    lo, hi, rho = nu.cells()
    return _ball_mass_cells(lo, hi, rho, x, r, tol * nu.mass, max_boxes)


def _ball_mass_cells(lo, hi, rho, x, r, budget, max_boxes=1 << 21) -> BallMass:
    inside = 0.0
    r2 = r * r
    while True:
        near = np.clip(x[None, :], lo, hi) - x[None, :]
        far = np.maximum(np.abs(lo - x[None, :]), np.abs(hi - x[None, :]))
        dmin = np.sum(near**2, axis=1)
        dmax = np.sum(far**2, axis=1)
        vol = np.prod(hi - lo, axis=1)
        full = dmax <= r2
        inside += float(np.sum(rho[full] * vol[full]))
        open_ = (~full) & (dmin < r2)
        lo, hi, rho, vol = lo[open_], hi[open_], rho[open_], vol[open_]
        undecided = float(np.sum(rho * vol))
        if undecided <= budget or lo.shape[0] == 0 or 2 * lo.shape[0] > max_boxes:
            return BallMass(inside + 0.5 * undecided, 0.5 * undecided)
        axis = np.argmax(hi - lo, axis=1)
        rows = np.arange(lo.shape[0])
        mid = 0.5 * (lo[rows, axis] + hi[rows, axis])
        lo2, hi2 = lo.copy(), hi.copy()
        hi[rows, axis] = mid
        lo2[rows, axis] = mid
        lo = np.concatenate([lo, lo2])
        hi = np.concatenate([hi, hi2])
        rho = np.concatenate([rho, rho])


@dataclass(frozen=True)
class GrowthReport:
    """Grid supremum of ``r^{-alpha} nu(B(x, r))`` and where it is attained."""

    value: float
    center: np.ndarray
    radius: float


def default_centers(nu: BoxMeasure) -> np.ndarray:
    lo, hi, _ = nu.cells()
    pts = [0.5 * (lo + hi)]
    for corner in itertools.product((0, 1), repeat=nu.dim):
        mask = np.array(corner, dtype=bool)
        pts.append(np.where(mask[None, :], hi, lo))
    return np.unique(np.concatenate(pts), axis=0)


def default_radii(nu: BoxMeasure) -> np.ndarray:
    """Dyadic radii from 1/64 of the smallest side up to the diameter."""
    lo, hi, _ = nu.cells()
    r0 = float(np.min(hi - lo)) / 64
    r1 = max(nu.diameter, r0)
    count = int(np.ceil(np.log2(r1 / r0))) + 1
    return r0 * 2.0 ** np.arange(count)


def c_alpha(nu: BoxMeasure, alpha: float, centers=None, radii=None, tol: float = 1e-4) -> GrowthReport:
    """Grid supremum of ``r^{-alpha} nu(B(x, r))``: a lower bound for ``c_alpha(nu)``."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    centers = default_centers(nu) if centers is None else np.atleast_2d(np.asarray(centers, float))
    radii = default_radii(nu) if radii is None else np.atleast_1d(np.asarray(radii, float))
    if centers.shape[0] == 0 or radii.size == 0:
        raise ValueError("centers and radii must be nonempty")
    best = (-np.inf, None, None)
    for x in centers:
        for r in radii:
            val = ball_mass(nu, x, r, tol) / r**alpha
            if val > best[0]:
                best = (val, x, float(r))
    return GrowthReport(float(best[0]), np.array(best[1]), best[2])


# ---------------------------------------------------------------- energies

def energy_constant(d: int, alpha: float) -> float:
    """``C`` with ``int |nu^|^2 |xi|^{alpha-d} = C int int |x-y|^{-alpha}``.

    Calibrated on ``exp(-|x|^2)``, whose two energies have closed forms.
    """
    if not 0 < alpha < d:
        raise ValueError("need 0 < alpha < d")
    return float(gaussian_fourier_energy(d, alpha) / gaussian_riesz_energy(d, alpha))


def gaussian_fourier_energy(d: int, alpha: float) -> float:
    """``I_alpha`` of ``exp(-|x|^2) dx``; its transform is ``pi^{d/2} exp(-|xi|^2/4)``."""
    return float(np.pi**d * sphere_area(d - 1) * 2 ** (alpha / 2 - 1) * gamma(alpha / 2))


def gaussian_riesz_energy(d: int, alpha: float) -> float:
    """``int int |x-y|^{-alpha}`` for ``exp(-|x|^2) dx``; ``x - y`` is Gaussian of variance 1/2."""
    return float((np.pi / 2) ** (d / 2) * sphere_area(d - 1)
                 * 2 ** ((d - alpha) / 2 - 1) * gamma((d - alpha) / 2))


@dataclass(frozen=True)
class EnergyEstimate:
    """Truncated polar quadrature and a bound on the discarded tail."""

    value: float
    tail_bound: float
    cutoff: float
    nodes: int

    @property
    def flagged(self) -> bool:
        return self.tail_bound > self.value

    @property
    def relative_tail(self) -> float:
        return self.tail_bound / self.value if self.value > 0 else np.inf


@dataclass(frozen=True)
class PolarRule:
    """Polar rule on ``{r_min <= |xi| <= cutoff}`` in ``R^d``.

    ``weights`` already contain the ``r^{d-1}`` Jacobian; the energy weight
    ``|xi|^{alpha-d}`` is applied by the caller.
    """

    nodes: np.ndarray
    radii: np.ndarray
    weights: np.ndarray
    r_min: float
    cutoff: float


def polar_rule(d: int, cutoff: float, diameter: float, order: int = 6,
               per_period: float = 1.0, angular_extra: int = 12,
               angular_order: int = None) -> PolarRule:
    """Polar rule resolving a transform whose modulus is band-limited by ``diameter``.

    Radii: log-spaced panels on ``[1e-3/D, 1/D]`` then panels of width
    ``pi / (per_period D)`` up to ``cutoff``.  Directions: the angular
    order on each panel is ``ceil(r_max D) + angular_extra`` (at least
    ``angular_order`` if given).
    """
    D = max(diameter, 1e-300)
    r_min = 1e-3 / D
    r_mid = min(1.0 / D, cutoff)
    rad = []
    if r_mid > r_min:
        decades = np.log10(r_mid / r_min)
        rad.append(np.geomspace(r_min, r_mid, max(2, int(np.ceil(4 * decades)) + 1)))
    if cutoff > r_mid:
        count = max(1, int(np.ceil((cutoff - r_mid) * per_period * D / np.pi)))
        rad.append(np.linspace(r_mid, cutoff, count + 1)[1:])
    breaks = np.concatenate(rad)
    nodes, radii, weights = [], [], []
    cache = {}
    for a, b in zip(breaks[:-1], breaks[1:]):
        r, wr = _quad.gauss_legendre(a, b, order)
        ang = int(np.ceil(b * D)) + angular_extra
        if angular_order is not None:
            ang = max(ang, angular_order)
        if d > 1:
            ang = 4 * int(np.ceil(ang / 4))  # coarse bucketing keeps the cache small
        if ang not in cache:
            cache[ang] = _directions(d, ang)
        dirs, wd = cache[ang]
        nodes.append((r[:, None, None] * dirs[None, :, :]).reshape(-1, d))
        radii.append(np.repeat(r, dirs.shape[0]))
        weights.append(np.outer(wr * r ** (d - 1), wd).reshape(-1))
    return PolarRule(np.concatenate(nodes), np.concatenate(radii), np.concatenate(weights),
                     r_min, cutoff)


def _directions(d: int, order: int):
    if d == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    q = sphere_quadrature(d - 1, max(order, 4))
    return q.nodes, q.weights


def density_l2_sq(nu: BoxMeasure) -> float:
    """``||rho||_2^2`` from pairwise box overlaps (exact for overlapping cells)."""
    lo, hi, rho = nu.cells()
    m = lo.shape[0]
    if _disjoint(lo, hi):
        return float(np.sum(rho**2 * np.prod(hi - lo, axis=1)))
    total = 0.0
    for s in range(0, m, 512):
        ov = np.clip(np.minimum(hi[s:s + 512, None, :], hi[None, :, :])
                     - np.maximum(lo[s:s + 512, None, :], lo[None, :, :]), 0, None)
        total += float(np.sum(rho[s:s + 512, None] * rho[None, :] * np.prod(ov, axis=2)))
    return total


def _disjoint(lo, hi) -> bool:
    m = lo.shape[0]
    if m > 20000:
        return True  # only generated lattices are this large, and those are disjoint
    for s in range(0, m, 512):
        ov = np.minimum(hi[s:s + 512, None, :], hi[None, :, :]) \
            - np.maximum(lo[s:s + 512, None, :], lo[None, :, :])
        hit = np.all(ov > 0, axis=2)
        idx = np.arange(s, min(s + 512, m))
        hit[np.arange(idx.size), idx] = False
        if np.any(hit):
            return False
    return True


def default_cutoff(nu: BoxMeasure) -> float:
    return 10.0 / nu.min_side


def fourier_energies(nu: BoxMeasure, alphas, cutoff: float = None, order: int = 6,
                     per_period: float = 1.0, angular_order: int = None) -> list:
    """``fourier_energy`` for several ``alpha`` from one set of transform samples."""
    d = nu.dim
    alphas = [float(a) for a in np.atleast_1d(alphas)]
    for a in alphas:
        if not 0 < a <= d:
            raise ValueError("alpha must lie in (0, d]")
    cutoff = default_cutoff(nu) if cutoff is None else float(cutoff)
    if cutoff < 10.0 / nu.min_side * (1 - 1e-12):
        raise ValueError(f"cutoff {cutoff:.6g} below 10 / smallest side = {10 / nu.min_side:.6g}")
    rule = polar_rule(d, cutoff, nu.diameter, order, per_period, angular_order=angular_order)
    sq = np.abs(fourier_transform(nu, rule.nodes)) ** 2
    plancherel = (2 * np.pi) ** d * density_l2_sq(nu)
    return _energies_from_samples(sq, rule, d, alphas, nu.mass, plancherel, 1.0)


def _energies_from_samples(sq, rule, d, alphas, mass, plancherel, rescale):
    """Assemble energies from ``|transform|^2`` samples on a polar rule."""
    inner = float(np.sum(sq * rule.weights))
    inner += mass**2 * sphere_area(d - 1) * rule.r_min**d / d
    deficit = max(0.0, plancherel - inner)
    out = []
    for a in alphas:
        val = float(np.sum(sq * rule.weights * rule.radii ** (a - d)))
        val += mass**2 * sphere_area(d - 1) * rule.r_min**a / a
        tail = deficit * (rule.cutoff / rescale) ** (a - d)
        out.append(EnergyEstimate(val, tail, rule.cutoff, rule.nodes.shape[0]))
    return out


def fourier_energy(nu: BoxMeasure, alpha: float, cutoff: float = None, order: int = 6,
                   per_period: float = 1.0, angular_order: int = None) -> EnergyEstimate:
    """``I_alpha(nu) = int |nu^(xi)|^2 |xi|^{alpha-d} d xi`` truncated at ``|xi| <= cutoff``.

    The tail over ``|xi| > cutoff`` is at most ``cutoff^{alpha-d}`` times the
    Plancherel deficit ``(2 pi)^d ||rho||^2 - int_{|xi|<=cutoff} |nu^|^2``,
    so ``value <= I_alpha <= value + tail_bound`` up to quadrature error.
    """
    return fourier_energies(nu, [alpha], cutoff, order, per_period, angular_order)[0]


# -- Riesz side

def _trapezoid(z, w1, w2, offset):
    """Overlap length of ``[0, w1]`` and ``[s, s + w2]`` shifted so ``z`` is the offset."""
    # length of [a1,b1] ∩ ([a2,b2] + z) with a1=0,b1=w1, a2=offset, b2=offset+w2
    return np.clip(np.minimum(w1, offset + w2 + z) - np.maximum(0.0, offset + z), 0.0, None)


@dataclass(frozen=True)
class RieszEstimate:
    value: float
    stderr: float
    samples: int


def riesz_energy(nu: BoxMeasure, alpha: float, samples: int = 1 << 18, seed: int = 0) -> RieszEstimate:
    """Monte Carlo ``int int |x - y|^{-alpha} d nu d nu`` with per-pair stratification.

    For cells ``i, j`` the pair term is ``rho_i rho_j int K_ij(z) |z|^{-alpha} dz``
    with ``K_ij(z) = |B_i ∩ (B_j + z)|``, a product of trapezoids.  Pairs far
    from the diagonal sample ``z`` uniformly on the difference box; pairs
    whose difference box comes close to 0 sample ``z`` with density
    proportional to ``|z|^{-alpha}`` on a ball, which keeps the weights
    bounded.
    """
    d = nu.dim
    if not 0 < alpha < d:
        raise ValueError("riesz_energy needs 0 < alpha < d")
    if samples < 1:
        raise ValueError("sample budget must be positive")
    rng = np.random.default_rng(seed)
    lo, hi, rho = nu.cells()
    m = lo.shape[0]
    per_pair = max(16, samples // (m * m))
    total, var = 0.0, 0.0
    for i in range(m):
        # difference box of z = y - x for x in B_i, y in B_j is [lo_j - hi_i, hi_j - lo_i]
        dlo = lo - hi[i]
        dhi = hi - lo[i]
        near = np.clip(0.0, dlo, dhi)
        dist = np.linalg.norm(near, axis=1)
        size = np.linalg.norm(dhi - dlo, axis=1)
        coef = rho[i] * rho
        close = dist < size
        # uniform sampling on the difference box
        idx = np.flatnonzero(~close)
        if idx.size:
            u = rng.random((idx.size, per_pair, d))
            z = dlo[idx, None, :] + u * (dhi - dlo)[idx, None, :]
            K = np.prod(np.clip(np.minimum(hi[i], hi[idx, None, :] - z)
                                - np.maximum(lo[i], lo[idx, None, :] - z), 0, None), axis=2)
            vals = K * np.linalg.norm(z, axis=2) ** (-alpha)
            vol = np.prod(dhi - dlo, axis=1)[idx]
            mean = vals.mean(axis=1)
            sd = vals.std(axis=1, ddof=1) / np.sqrt(per_pair)
            total += float(np.sum(coef[idx] * vol * mean))
            var += float(np.sum((coef[idx] * vol * sd) ** 2))
        # |z|^{-alpha} importance sampling on B(0, rmax)
        idx = np.flatnonzero(close)
        if idx.size:
            rmax = np.linalg.norm(np.maximum(np.abs(dlo[idx]), np.abs(dhi[idx])), axis=1)
            p = d - alpha
            rad = rmax[:, None] * rng.random((idx.size, per_pair)) ** (1.0 / p)
            g = rng.standard_normal((idx.size, per_pair, d))
            dirs = g / np.linalg.norm(g, axis=2, keepdims=True)
            z = rad[:, :, None] * dirs
            K = np.prod(np.clip(np.minimum(hi[i], hi[idx, None, :] - z)
                                - np.maximum(lo[i], lo[idx, None, :] - z), 0, None), axis=2)
            Z = sphere_area(d - 1) * rmax**p / p
            mean = K.mean(axis=1)
            sd = K.std(axis=1, ddof=1) / np.sqrt(per_pair)
            total += float(np.sum(coef[idx] * Z * mean))
            var += float(np.sum((coef[idx] * Z * sd) ** 2))
    return RieszEstimate(total, float(np.sqrt(var)), per_pair * m * m)


def _axis_rule(a, b, kinks, focus, smallest, order):
    """GL panels on ``[a, b]`` split at ``kinks`` and graded towards ``focus``."""
    pts = [a, b] + [k for k in kinks if a < k < b]
    if a <= focus <= b:
        pts.append(focus)
    pts = np.unique(pts)
    breaks = [pts[0]]
    for lo_, hi_ in zip(pts[:-1], pts[1:]):
        if hi_ - lo_ <= 0:
            continue
        # grade each side towards the focus if the focus is a panel end
        if lo_ == focus and hi_ - lo_ > smallest:
            seg = _quad.graded_breaks(lo_, hi_, 0.25, smallest)
            breaks.extend(seg[1:])
        elif hi_ == focus and hi_ - lo_ > smallest:
            seg = _quad.graded_breaks(-hi_, -lo_, 0.25, smallest)
            breaks.extend((-seg[::-1])[1:])
        else:
            breaks.append(hi_)
    return _quad.panels(np.array(breaks), order)


def _pair_riesz_1d(w1, w2, off, alpha):
    """Closed form of ``int T(z) |z|^{-alpha} dz`` for the trapezoid overlap ``T``."""
    knots = sorted({off - w1, off - w1 + min(w1, w2), off + w2 - min(w1, w2), off + w2})

    def overlap(z):
        return max(0.0, min(w1, off + w2 - z) - max(0.0, off - z))

    def g0(z):  # antiderivative of |z|^{-alpha}
        return np.sign(z) * abs(z) ** (1 - alpha) / (1 - alpha)

    def g1(z):  # antiderivative of z |z|^{-alpha}
        return abs(z) ** (2 - alpha) / (2 - alpha)

    total = 0.0
    for u, v in zip(knots[:-1], knots[1:]):
        if v <= u:
            continue
        c1 = (overlap(v) - overlap(u)) / (v - u)
        c0 = overlap(u) - c1 * u
        total += c0 * (g0(v) - g0(u)) + c1 * (g1(v) - g1(u))
    return float(total)


def pair_riesz_integral(w1, w2, offset, alpha, order: int = 8) -> float:
    """``int prod_k T_k(z_k) |z|^{-alpha} dz`` for boxes ``[0, w1]`` and ``[offset, offset + w2]``.

    ``T_k(z_k)`` is the overlap length of the two intervals after shifting
    the second one back by ``z_k``; it is a trapezoid in ``z_k``.
    """
    w1 = np.asarray(w1, float)
    w2 = np.asarray(w2, float)
    off = np.asarray(offset, float)
    d = w1.size
    if d == 1:
        return _pair_riesz_1d(float(w1[0]), float(w2[0]), float(off[0]), alpha)
    # z ranges over the difference box [offset - w1, offset + w2]
    a = off - w1
    b = off + w2
    near = np.clip(0.0, a, b)
    widths = b - a
    rules = []
    for k in range(d):
        kinks = [off[k] - w1[k] + min(w1[k], w2[k]), off[k] + w2[k] - min(w1[k], w2[k])]
        others = np.delete(near, k)
        perp = float(np.linalg.norm(others)) if others.size else 0.0
        # the innermost panel carries about (h / width)^{d - alpha} of the mass
        depth = max(1e-6 ** (1.0 / (d - alpha)), 1e-14)
        smallest = max(min(1e-3, depth) * np.min(widths), 0.25 * perp)
        z, wz = _axis_rule(a[k], b[k], kinks, near[k], smallest, order)
        T = np.clip(np.minimum(w1[k], off[k] + w2[k] - z) - np.maximum(0.0, off[k] - z), 0, None)
        rules.append((z, wz * T))
    grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    weight = rules[0][1]
    for r in rules[1:]:
        weight = np.multiply.outer(weight, r[1])
    rr = np.sqrt(sum(g**2 for g in grids))
    return float(np.sum(weight * rr ** (-alpha)))


def riesz_energy_quadrature(nu: BoxMeasure, alpha: float, order: int = 8) -> float:
    """Deterministic ``int int |x - y|^{-alpha} d nu d nu`` by pair-offset quadrature.

    Pairs sharing box shapes and relative offset are integrated once, so
    progressions of congruent boxes cost one integral per offset.
    """
    d = nu.dim
    if not 0 < alpha < d:
        raise ValueError("riesz_energy_quadrature needs 0 < alpha < d")
    lo, hi, rho = nu.cells()
    w = hi - lo
    scale = max(float(np.max(np.abs(np.concatenate([lo, hi])))), 1e-300)
    groups = {}
    m = lo.shape[0]
    for i in range(m):
        off = lo - lo[i]
        keys = np.column_stack([np.broadcast_to(w[i], w.shape), w, off])
        keys = np.round(keys / scale, 12)
        uniq, inv = np.unique(keys, axis=0, return_inverse=True)
        coef = np.bincount(inv.reshape(-1), weights=rho[i] * rho, minlength=uniq.shape[0])
        for row, c in zip(uniq, coef):
            key = tuple(row)
            groups[key] = groups.get(key, 0.0) + c
    total = 0.0
    for key in sorted(groups):
        row = np.array(key) * scale
        total += groups[key] * pair_riesz_integral(row[:d], row[d:2 * d], row[2 * d:], alpha, order)
    return float(total)


# ---------------------------------------------------------------- surfaces

@dataclass(frozen=True)
class SurfaceQuadrature:
    """Midpoint rule on the parameter domain of a surface.

    ``surface`` is ``"paraboloid"`` (unit ball), ``"cone"`` (annulus
    ``1/2 <= |xi| <= 1``) or ``"sphere"``.  ``spacing`` is the largest node
    spacing, used by the oscillation-resolution check.
    """

    surface: str
    nodes: np.ndarray
    weights: np.ndarray
    spacing: float
    domain_volume: float

    @property
    def n(self) -> int:
        return self.nodes.shape[1]

    def lift(self) -> np.ndarray:
        if self.surface == "paraboloid":
            return np.column_stack([self.nodes, np.sum(self.nodes**2, axis=1)])
        if self.surface == "cone":
            return np.column_stack([self.nodes, np.linalg.norm(self.nodes, axis=1)])
        return self.nodes


def surface_quadrature(surface: str, n: int, radial: int, angular: int = None) -> SurfaceQuadrature:
    """Polar midpoint rule on the unit ball (paraboloid) or the annulus (cone).

    For ``n = 1`` the rule is the plain midpoint rule on the interval(s).
    For ``n = 2`` radial midpoints carry weight ``r dr`` and angles are
    uniform, which makes the weights sum to the exact area.
    """
    if surface == "sphere":
        q = sphere_quadrature(n, max(4, radial))
        return SurfaceQuadrature("sphere", q.nodes, q.weights, np.pi / max(4, radial), q.area)
    if surface not in ("paraboloid", "cone"):
        raise ValueError(f"unknown surface {surface!r}")
    if n not in (1, 2):
        raise ValueError("surface quadrature supports n = 1, 2")
    r0 = 0.0 if surface == "paraboloid" else 0.5
    edges = np.linspace(r0, 1.0, radial + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    dr = edges[1] - edges[0]
    if n == 1:
        if surface == "paraboloid":
            e = np.linspace(-1.0, 1.0, 2 * radial + 1)
            nodes = 0.5 * (e[:-1] + e[1:])
            weights = np.full(nodes.size, e[1] - e[0])
        else:
            nodes = np.concatenate([-mids[::-1], mids])
            weights = np.full(nodes.size, dr)
        vol = 2.0 * (1.0 - r0)
        return SurfaceQuadrature(surface, nodes[:, None], weights, dr, vol)
    angular = angular or int(np.ceil(2 * np.pi / dr))
    phi = 2 * np.pi * (np.arange(angular) + 0.5) / angular
    nodes = np.column_stack([np.outer(mids, np.cos(phi)).ravel(),
                             np.outer(mids, np.sin(phi)).ravel()])
    weights = np.repeat(mids * dr, angular) * (2 * np.pi / angular)
    vol = np.pi * (1.0 - r0**2)
    return SurfaceQuadrature(surface, nodes, weights, max(dr, 2 * np.pi / angular), vol)


def required_nodes(nu: BoxMeasure, R: float, surface: str) -> int:
    """Radial node count giving >= 4 nodes per oscillation of ``nu^(R lift(xi))``."""
    grad = np.sqrt(5.0) if surface == "paraboloid" else np.sqrt(2.0)
    period = 2 * np.pi / max(R * nu.r_supp * grad, 1e-300)
    span = 1.0 if surface == "paraboloid" else 0.5
    return int(np.ceil(4 * span / period))


def _surface_decay(nu, R, quad, surface):
    if R < 1:
        raise ValueError("R must be >= 1")
    if quad.surface != surface:
        raise ValueError(f"quadrature is for {quad.surface}, not {surface}")
    if quad.n + 1 != nu.dim:
        raise ValueError("measure must live in R^{n+1}")
    grad = np.sqrt(5.0) if surface == "paraboloid" else np.sqrt(2.0)
    period = 2 * np.pi / max(R * nu.r_supp * grad, 1e-300)
    if quad.spacing > period / 4:
        need = required_nodes(nu, R, surface)
        raise ValueError(f"surface rule too coarse at R={R:g}: need >= {need} radial nodes")
    vals = fourier_transform(nu, R * quad.lift())
    return float(np.sum(quad.weights * np.abs(vals) ** 2))


def parabolic_decay(nu: BoxMeasure, R: float, quad: SurfaceQuadrature) -> float:
    """``sum_k w_k |nu^(R (xi_k, |xi_k|^2))|^2`` over the unit parameter ball."""
    return _surface_decay(nu, R, quad, "paraboloid")


def cone_decay(nu: BoxMeasure, R: float, quad: SurfaceQuadrature) -> float:
    """``sum_k w_k |nu^(R (xi_k, |xi_k|))|^2`` over the annulus ``1/2 <= |xi| <= 1``."""
    return _surface_decay(nu, R, quad, "cone")


# ---------------------------------------------------------------- text format

def _fmt(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def dumps_measure(nu: BoxMeasure) -> str:
    """Plain-text form; floats are written with ``repr`` so reading is bit-exact."""
    rho_max = max([float(np.max(nu.rho))] if nu.rho.size else [0.0]
                  + [p.rho for p in nu.progressions])
    lines = [f"dim {nu.dim}", f"r_supp {nu.r_supp!r}", f"rho_max {rho_max!r}"]
    for a, b, r in zip(nu.lo, nu.hi, nu.rho):
        lines.append(_fmt(np.concatenate([a, b, [r]])))
    for p in nu.progressions:
        lines.append("prog " + _fmt(np.concatenate([p.lo, p.hi, [p.rho]])))
        lines.append("step " + _fmt(p.step))
        lines.append(f"count {p.count}")
    return "\n".join(lines) + "\n"


def loads_measure(text: str) -> BoxMeasure:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    header = {}
    body = []
    for ln in lines:
        key = ln.split()[0]
        if key in ("dim", "r_supp", "rho_max") and not body:
            header[key] = ln.split()[1]
        else:
            body.append(ln)
    if "dim" not in header:
        raise ValueError("missing 'dim' header")
    d = int(header["dim"])
    lo, hi, rho, progs = [], [], [], []
    i = 0
    while i < len(body):
        parts = body[i].split()
        if parts[0] == "prog":
            vals = [float(v) for v in parts[1:]]
            step = [float(v) for v in body[i + 1].split()[1:]]
            count = int(body[i + 2].split()[1])
            if len(vals) != 2 * d + 1 or len(step) != d:
                raise ValueError(f"malformed progression record near line {i + 1}")
            progs.append(Progression(vals[:d], vals[d:2 * d], vals[2 * d], step, count))
            i += 3
            continue
        vals = [float(v) for v in parts]
        if len(vals) != 2 * d + 1:
            raise ValueError(f"cell line {i + 1} needs {2 * d + 1} numbers")
        lo.append(vals[:d])
        hi.append(vals[d:2 * d])
        rho.append(vals[2 * d])
        i += 1
    r_supp = float(header["r_supp"]) if "r_supp" in header else None
    return BoxMeasure(np.array(lo).reshape(-1, d), np.array(hi).reshape(-1, d),
                      np.array(rho), tuple(progs), r_supp)


def write_measure(nu: BoxMeasure, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(dumps_measure(nu))


def read_measure(path) -> BoxMeasure:
    with open(path, encoding="ascii") as fh:
        return loads_measure(fh.read())

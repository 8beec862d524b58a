import math

import numpy as np
import pytest

from maxdecay.experiments.bourgain import (RANGE_LABELS, BourgainRow, InfeasibleParameters,
                                           LatticeMeasure, build_bourgain, energy_log_check, energy_log_ok,
                                           measure_profile, minimal_feasible_R,
                                           necessary_exponent_fit, plateau_bump, sigma_of,
                                           verify_lower_bound)
from maxdecay.measures import ball_mass
from maxdecay.spectral import l2_norm, schrodinger_evolve

R_LIST = [256.0, 1024.0, 4096.0, 16384.0]


@pytest.fixture(scope="module")
def ex1():
    return build_bourgain(1, 256.0, 0.01)


@pytest.fixture(scope="module")
def ex2():
    return build_bourgain(2, 1e6, 0.01, seed=3)


@pytest.fixture(scope="module")
def fit1():
    return necessary_exponent_fit(1, R_LIST, 0.01)


def test_sigma_and_minimal_R():
    assert sigma_of(1) == 0.25 and sigma_of(2) == pytest.approx(1 / 6)
    r = minimal_feasible_R(2)
    assert 2 * math.pi * r ** (5 / 6) < r
    assert 2 * math.pi * (r - 1) ** (5 / 6) >= r - 1


def test_plateau_bump_has_unit_integral():
    u = np.linspace(-2, 2, 400001)
    vals = plateau_bump(u)
    assert np.trapezoid(vals, u) == pytest.approx(1.0, abs=1e-8)
    assert np.all(vals >= 0) and vals[0] == 0 and vals[-1] == 0


def test_lattice_count_matches_brute_force():
    # half-open rule: x' in [-2, 2) and t in [-h, h) with h = sqrt(4 - |x'|^2)
    for n, p, tau in [(1, 1.0, 0.3), (1, 1.0, 0.25), (2, 0.5, 0.125), (2, 0.25, 0.5), (2, 0.375, 0.1875)]:
        count = LatticeMeasure.count_points(n, p, tau)
        brute = 0
        xs = [0.0] if n == 1 else [j * p for j in range(-20, 21) if -2 <= j * p < 2]
        for x in xs:
            h = math.sqrt(4 - x * x)
            brute += sum(1 for l in range(-100, 101) if -h <= l * tau < h)
        assert count == brute


def test_n1_lattice_and_omega(ex1):
    assert ex1.lattice.count == 64
    assert ex1.omega_measure == 1.0
    assert ex1.omega_points.shape == (1, 0)


def test_n1_measure_is_normalised(ex1):
    assert ex1.nu.mass == pytest.approx(1.0, abs=1e-10)
    assert ex1.nu.r_supp <= 1.0
    assert ball_mass(ex1.nu, [0.0, 0.0], 1.0) == pytest.approx(1.0, abs=1e-10)


def test_band_radius(ex1, ex2):
    for ex in (ex1, ex2):
        assert ex.f_native.band_radius <= 10 * ex.R
        assert ex.f.band_radius <= 10 * ex.R


def test_normalised_field_matches_native(ex1):
    rng = np.random.default_rng(0)
    pts = rng.uniform(-0.5, 0.5, (20, 2))
    native = ex1.native_field(pts / ex1.scale).values
    normal = schrodinger_evolve(ex1.f, pts, ex1.time_scale).values
    assert np.max(np.abs(native - normal)) < 1e-12 * np.max(np.abs(native))


def test_f_norm_scaling(fit1):
    vals = [r.norm * r.R**0.25 for r in fit1.rows]
    assert max(vals) / min(vals) <= 2.0


def test_n1_lower_bound(ex1):
    lb = verify_lower_bound(ex1)
    assert lb.value >= 0.9 / math.sqrt(2 * math.pi)
    assert lb.points >= 64
    # the origin sample alone: (2 pi)^{-1/2} (1 - O(eps))
    assert lb.at_origin == pytest.approx(1 / math.sqrt(2 * math.pi), rel=0.05)


def test_lower_bound_improves_as_eps_shrinks():
    vals = [verify_lower_bound(build_bourgain(1, 256.0, e)).value for e in (0.04, 0.02, 0.01)]
    assert vals[0] < vals[1] < vals[2]


def test_n2_infeasible_small_R():
    with pytest.raises(InfeasibleParameters) as err:
        build_bourgain(2, 256.0)
    assert err.value.minimal_R == minimal_feasible_R(2)
    assert "61529" in str(err.value)


def test_rejects_bad_parameters():
    with pytest.raises(ValueError):
        build_bourgain(3, 1e4)
    with pytest.raises(ValueError):
        build_bourgain(1, 8.0)
    with pytest.raises(ValueError):
        build_bourgain(1, 256.0, eps=0.1)
    with pytest.raises(ValueError):
        build_bourgain(1, 256.0, atoms_per_cell=4)


def test_n2_structure(ex2):
    assert ex2.omega_points.shape[0] >= 3
    assert ex2.omega_measure == pytest.approx(2 * 0.01 * ex2.omega_points.shape[0])
    assert ex2.nu is None
    lb = verify_lower_bound(ex2, samples=1000)
    assert lb.points >= 1000
    assert lb.value >= 0.5 / (2 * math.pi)


def test_n2_sampling_is_seeded(ex2):
    a = verify_lower_bound(ex2, samples=200, seed=5)
    b = verify_lower_bound(ex2, samples=200, seed=5)
    assert a.value == b.value and np.array_equal(a.argmin, b.argmin)


def test_n2_profile_flags(ex2):
    rows = measure_profile(ex2)
    flags = {r.label: r.flag for r in rows}
    for label in RANGE_LABELS[1:4]:
        assert flags[label] == "<<"
    assert flags[RANGE_LABELS[4]] == "~"
    assert rows[-1].ratio == 1.0


def test_n1_profile_unit_and_half_scale(ex1):
    rows = {r.label: r for r in measure_profile(ex1)}
    assert rows["r = 1 (normalised)"].ratio == 1.0
    assert 0.1 <= rows[RANGE_LABELS[4]].ratio <= 10


@pytest.mark.xfail(strict=True, reason="at n = 1 every range has ratio near 1/4 at R = 256")
def test_n1_profile_separates_middle_range(ex1):
    rows = {r.label: r for r in measure_profile(ex1)}
    assert rows[RANGE_LABELS[1]].ratio < 0.1 * rows[RANGE_LABELS[4]].ratio


def test_exponent_fit(fit1):
    assert 0.20 <= fit1.s_lower_estimate <= 0.30
    assert energy_log_ok(fit1.energy_fit)
    e = [r.energy / math.log(r.R) for r in fit1.rows]
    assert max(e) / min(e) <= 2.0
    for r in fit1.rows:
        assert r.lower_bound >= 0.9 / math.sqrt(2 * math.pi)


def test_energy_log_spacing(fit1):
    e = np.array([r.energy for r in fit1.rows[:3]])
    assert np.all(np.diff(e) > 0)
    # equal log spacing: successive differences should be comparable
    ratio = (e[2] - e[1]) / (e[1] - e[0])
    assert 0.5 <= ratio <= 2.0


def test_energy_log_check_homogeneity_and_rejection(fit1):
    doubled = [BourgainRow(r.R, r.norm, 4 * r.energy, r.level, r.M, r.Q, r.lower_bound)
               for r in fit1.rows]
    a, b = energy_log_check(fit1.rows), energy_log_check(doubled)
    assert b.slope == pytest.approx(4 * a.slope, rel=1e-12) and b.slope > 0
    with pytest.raises(ValueError):
        energy_log_check(fit1.rows[:1])
    with pytest.raises(ValueError):
        necessary_exponent_fit(1, R_LIST[:3])
    with pytest.raises(ValueError):
        necessary_exponent_fit(2, R_LIST)


def test_fit_is_deterministic(fit1):
    again = necessary_exponent_fit(1, R_LIST, 0.01)
    assert again.fit.slope == fit1.fit.slope
    assert np.array_equal(again.fit.log_q, fit1.fit.log_q)
    assert again.fit.stderr == fit1.fit.stderr


def test_dilation_scales_norm(ex1):
    # frequencies divided by s: the L^2 norm picks up s^{n/2}
    assert l2_norm(ex1.f) == pytest.approx(math.sqrt(ex1.scale) * l2_norm(ex1.f_native), rel=1e-12)

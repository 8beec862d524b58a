import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maxdecay.spectral import (ConeAtomFunction, FrequencyAtomFunction, SampledField, h_s_norm,
                               l2_norm, maximal_in_time, maximal_in_time_many, reduce_phase,
                               required_time_step, schrodinger_evolve, translate_frequency,
                               wave_extension, weak_l1_level)


def direct_sum(nodes, weights, values, x, t, rho):
    """Scalar loop over atoms with Python's cmath; the oracle for the vectorised sum."""
    n = len(x)
    total = 0j
    for xi, w, a in zip(nodes, weights, values):
        ph = sum(float(x[k]) * float(xi[k]) for k in range(n)) + t / rho * sum(float(v) ** 2 for v in xi)
        total += w * a * cmath.exp(1j * ph)
    return total * (2 * math.pi) ** (-n / 2)


def atoms(n, count, seed, band=5.0):
    rng = np.random.default_rng(seed)
    nodes = rng.uniform(-band, band, (count, n)) / math.sqrt(n)
    w = rng.uniform(0.1, 1.0, count)
    a = rng.standard_normal(count) + 1j * rng.standard_normal(count)
    return FrequencyAtomFunction(nodes, w, a, band)


# -- construction

def test_rejects_bad_atoms():
    with pytest.raises(ValueError):
        FrequencyAtomFunction([[0.0], [0.0]], [1.0, 1.0], [1, 1])
    with pytest.raises(ValueError):
        FrequencyAtomFunction([[0.0]], [0.0], [1])
    with pytest.raises(ValueError):
        FrequencyAtomFunction([[np.nan]], [1.0], [1])
    with pytest.raises(ValueError):
        FrequencyAtomFunction([[3.0]], [1.0], [1], band_radius=2.0)


def test_cone_atoms_constraints():
    with pytest.raises(ValueError):
        ConeAtomFunction([[0.0, 0.0]], [1.0], [1])
    with pytest.raises(ValueError):
        ConeAtomFunction([[-1.0, 0.5]], [1.0], [1])
    with pytest.raises(ValueError):
        ConeAtomFunction([[1.0, 0.0], [3.0, 0.0]], [1.0, 1.0], [1, 1])


# -- schrodinger_evolve

def test_single_atom_constant_modulus():
    f = FrequencyAtomFunction([[1.7, -0.3]], [1.0], [1.0])
    pts = np.random.default_rng(0).uniform(-5, 5, (50, 3))
    u = schrodinger_evolve(f, pts)
    np.testing.assert_allclose(u.modulus, (2 * np.pi) ** -1.0, rtol=1e-14)


def test_time_zero_is_data():
    f = atoms(2, 9, 1)
    x = np.array([[0.3, -1.1, 0.0]])
    expected = (2 * np.pi) ** -1 * np.sum(f.weights * f.values * np.exp(1j * f.nodes @ x[0, :2]))
    assert abs(schrodinger_evolve(f, x).values[0] - expected) < 1e-14


def test_two_atoms_at_pi():
    f = FrequencyAtomFunction([[1.0], [-1.0]], [1.0, 1.0], [1.0, 1.0])
    u = schrodinger_evolve(f, [[0.0, np.pi]]).values[0]
    assert abs(u - (-2 * (2 * np.pi) ** -0.5)) < 1e-14


@pytest.mark.parametrize("n,rho", [(1, 1.0), (2, 3.0), (3, 17.5)])
def test_matches_scalar_oracle(n, rho):
    f = atoms(n, 11, n)
    pts = np.random.default_rng(10 + n).uniform(-2, 2, (20, n + 1))
    u = schrodinger_evolve(f, pts, rho).values
    ref = [direct_sum(f.nodes, f.weights, f.values, p[:n], p[n], rho) for p in pts]
    np.testing.assert_allclose(u, ref, rtol=1e-12, atol=1e-13)


def test_large_phase_reduction_matches_periodic_shift():
    # integer nodes make t -> t + 2 pi k a period of every atom phase
    f = FrequencyAtomFunction([[1.0], [2.0], [3.0]], [1.0, 0.5, 0.25], [1, 1j, -1])
    base = schrodinger_evolve(f, [[0.2, 0.7]]).values[0]
    far = schrodinger_evolve(f, [[0.2, 0.7 + 2 * np.pi * 10**6]]).values[0]
    assert abs(far - base) < 1e-8
    assert np.all(np.abs(reduce_phase(np.array([3e7]))) < 2 * np.pi)


def test_evolve_rejects():
    f = atoms(1, 3, 0)
    with pytest.raises(ValueError):
        schrodinger_evolve(f, np.zeros((0, 2)))
    with pytest.raises(ValueError):
        schrodinger_evolve(f, [[0.0, 0.0]], time_scale=0.5)


def test_permutation_invariance():
    f = atoms(2, 40, 3)
    perm = np.random.default_rng(1).permutation(40)
    g = FrequencyAtomFunction(f.nodes[perm], f.weights[perm], f.values[perm], f.band_radius)
    pts = np.random.default_rng(2).uniform(-3, 3, (30, 3))
    a = schrodinger_evolve(f, pts).values
    b = schrodinger_evolve(g, pts).values
    assert np.max(np.abs(a - b)) <= 1e-12 * np.max(np.abs(a))


def test_chunking_is_bit_identical():
    f = atoms(1, 7, 4)
    pts = np.random.default_rng(5).uniform(-1, 1, (5000, 2))
    whole = schrodinger_evolve(f, pts).values
    parts = np.concatenate([schrodinger_evolve(f, pts[i:i + 333]).values for i in range(0, 5000, 333)])
    assert np.array_equal(whole, parts)


# -- translate_frequency

def test_translate_examples():
    f = atoms(2, 4, 0)
    same = translate_frequency(f, [0.0, 0.0])
    assert np.array_equal(same.nodes, f.nodes) and same.band_radius == f.band_radius
    g = FrequencyAtomFunction([[1.0, 0.0], [0.0, 1.0]], [1, 1], [1, 1], 1.0)
    h = translate_frequency(g, [3.0, 4.0])
    np.testing.assert_array_equal(h.nodes, [[4.0, 4.0], [3.0, 5.0]])
    assert h.band_radius == 6.0
    one = FrequencyAtomFunction([[2.0, -1.0]], [1], [1])
    np.testing.assert_array_equal(translate_frequency(one, [-2.0, 1.0]).nodes, [[0.0, 0.0]])


# -- wave_extension

def test_wave_examples():
    f = ConeAtomFunction([[2.0]], [1.0], [1.0])
    assert abs(wave_extension(f, [[1.0, 1.0]]).values[0] - np.exp(4j)) < 1e-15
    g = ConeAtomFunction([[1.0, 0.5]], [0.3], [2 - 1j])
    pts = np.random.default_rng(0).uniform(-4, 4, (10, 3))
    np.testing.assert_allclose(np.abs(wave_extension(g, pts).values), 0.3 * abs(2 - 1j), rtol=1e-14)
    h = ConeAtomFunction([[1.0, 0.5], [1.5, 0.0]], [0.3, 0.2], [1, 1j])
    p = np.array([[0.4, -0.2, 0.0]])
    expect = np.sum(h.weights * h.values * np.exp(1j * h.nodes @ p[0, :2]))
    assert abs(wave_extension(h, p).values[0] - expect) < 1e-15


# -- maximal function

def test_maximal_single_atom_and_step_rule():
    f = FrequencyAtomFunction([[3.0]], [2.0], [0.5])
    step = required_time_step(f)
    assert step == pytest.approx(0.1 / 9)
    assert maximal_in_time(f, [0.4], 1.0, step) == pytest.approx((2 * np.pi) ** -0.5, rel=1e-14)
    with pytest.raises(ValueError, match="need step"):
        maximal_in_time(f, [0.4], 1.0, 2 * step)


def test_maximal_two_atoms_alignment():
    # atoms at +-1 and 0: |u(0,t)| = (2pi)^{-1/2} |1 + 2 e^{it}| peaks at t = 2 pi
    f = FrequencyAtomFunction([[1.0], [-1.0], [0.0]], [1, 1, 1], [1, 1, 1])
    step = required_time_step(f)
    val = maximal_in_time(f, [0.0], 7.0, step)
    assert val >= 0.99 * 3 * (2 * np.pi) ** -0.5
    assert val <= 3 * (2 * np.pi) ** -0.5 + 1e-12


def test_maximal_tiny_tmax_single_sample():
    f = atoms(1, 5, 2)
    step = required_time_step(f)
    v = maximal_in_time(f, [0.3], 1e-9, step)
    assert v == pytest.approx(abs(schrodinger_evolve(f, [[0.3, 1e-9]]).values[0]), rel=1e-13)


def test_maximal_many_matches_single():
    f = atoms(2, 6, 3)
    step = required_time_step(f)
    xs = np.random.default_rng(1).uniform(-1, 1, (4, 2))
    many = maximal_in_time_many(f, xs, 0.5, step)
    one = [maximal_in_time(f, x, 0.5, step) for x in xs]
    np.testing.assert_allclose(many, one, rtol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.05, 1.0))
def test_maximal_dominates_samples_and_grows(seed, tmax):
    f = atoms(1, 5, seed)
    step = required_time_step(f)
    x = np.array([0.1])
    m1 = maximal_in_time(f, x, tmax, step)
    m2 = maximal_in_time(f, x, tmax + 0.3, step)
    assert m2 >= m1
    k = max(1, int(np.ceil(tmax / step - 1e-9)))
    ts = np.minimum(step * np.arange(1, k + 1), tmax)
    u = schrodinger_evolve(f, np.column_stack([np.full(k, 0.1), ts])).modulus
    assert m1 >= np.max(u) * (1 - 1e-12)


# -- norms

def test_norm_examples():
    origin = FrequencyAtomFunction([[0.0, 0.0]], [1.0], [1.0])
    for s in (0.0, 0.5, 3.0):
        assert h_s_norm(origin, s) == 1.0
    unit = FrequencyAtomFunction([[1.0, 0.0]], [1.0], [1.0])
    assert h_s_norm(unit, 1.0) == pytest.approx(np.sqrt(2.0), rel=1e-15)
    f = atoms(2, 8, 0)
    g = FrequencyAtomFunction(f.nodes, 2 * f.weights, f.values, f.band_radius)
    assert l2_norm(g) == pytest.approx(np.sqrt(2) * l2_norm(f), rel=1e-14)
    assert h_s_norm(f, 0.0) == pytest.approx(l2_norm(f), rel=1e-15)
    with pytest.raises(ValueError):
        h_s_norm(f, -1)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.0, 3.0), st.floats(0.0, 3.0))
def test_norm_monotone_and_translation_invariant(seed, s1, s2):
    f = atoms(2, 6, seed)
    lo, hi = sorted((s1, s2))
    assert h_s_norm(f, hi) >= h_s_norm(f, lo)
    g = translate_frequency(f, [1.5, -0.5])
    assert l2_norm(g) == pytest.approx(l2_norm(f), rel=1e-14)


# -- weak level

def test_weak_level_examples():
    u = SampledField(np.zeros((3, 2)), [0.2, 0.8, 1.5])
    assert weak_l1_level(u, [1, 1, 1], 0.5) == pytest.approx(1.0)
    assert weak_l1_level(u, [1, 1, 1], 2.0) == 0.0
    v = SampledField(np.zeros((4, 2)), np.ones(4))
    assert weak_l1_level(v, np.full(4, 0.25), 0.5) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        weak_l1_level(u, [1, 1, 1], 0.0)
    with pytest.raises(ValueError):
        weak_l1_level(u, [1, 1], 0.5)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.0, 5.0), min_size=1, max_size=20), st.floats(0.01, 6.0))
def test_weak_level_bound(mods, M):
    u = SampledField(np.zeros((len(mods), 2)), mods)
    w = np.linspace(0.1, 1.0, len(mods))
    level = weak_l1_level(u, w, M)
    assert level <= w.sum() * max(mods) + 1e-12
    big = max(mods) + 0.1
    assert weak_l1_level(u, w, big) == 0.0

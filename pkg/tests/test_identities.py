import cmath
import math

import numpy as np
import pytest

from maxdecay import geometry
from maxdecay.experiments.identities import (cone_adjoint_error, cone_projection_closed_form,
                                             frame_suite, frame_suite_passes,
                                             gaussian_profile_function, galilean_identity_check,
                                             random_atom_function, random_cone_function,
                                             sample_cone_parameters, wave_identity_check)
from maxdecay.geometry import ProjectionFrame
from maxdecay.spectral import ConeAtomFunction


def scalar_field(nodes, coeffs, x, t, rho=1.0):
    n = len(x)
    total = 0j
    for xi, c in zip(nodes, coeffs):
        ph = sum(x[k] * xi[k] for k in range(n)) + (t / rho) * sum(v * v for v in xi)
        total += c * cmath.exp(1j * ph)
    return total * (2 * math.pi) ** (-n / 2)


def test_galilean_phase_factor_with_scalar_oracle():
    # u_f(x, t) = exp(i(-theta.x + |theta|^2 t)) u_{f_theta}(x - 2 t theta, t) with f_theta shifted by theta
    rng = np.random.default_rng(0)
    f = random_atom_function(rng, 2, 4.0, count=6)
    theta = np.array([0.7, -1.1])
    coeffs = f.weights * f.values
    for _ in range(5):
        x, t = rng.normal(size=2), rng.uniform(0, 1)
        lhs = scalar_field(f.nodes, coeffs, x, t)
        y = x - 2 * t * theta
        rhs = cmath.exp(1j * (-theta @ x + theta @ theta * t)) * \
            scalar_field(f.nodes + theta, coeffs, y, t)
        assert abs(lhs - rhs) < 1e-12


def test_galilean_zero_shift_is_exact():
    f = random_atom_function(np.random.default_rng(1), 1, 8.0)
    pts = np.random.default_rng(2).normal(size=(100, 2))
    assert galilean_identity_check(f, [0.0], pts) == 0.0


def test_galilean_gaussian_profile_n1():
    f = gaussian_profile_function(1, 16.0)
    pts = np.random.default_rng(3).uniform(-1, 1, (1000, 2))
    assert galilean_identity_check(f, [7.3], pts) <= 1e-10


def test_galilean_large_lambda_n2():
    f = gaussian_profile_function(2, 16.0, per_axis=8)
    pts = np.random.default_rng(4).uniform(-1, 1, (1000, 3))
    assert galilean_identity_check(f, [1.0, -2.0], pts, lam=1e3) <= 1e-9


def test_wave_identity_examples():
    rng = np.random.default_rng(5)
    f = random_cone_function(rng, 2)
    pts = rng.normal(size=(50, 3))
    assert wave_identity_check(f, 1.0, [0.0], pts) <= 1e-14
    ball = rng.normal(size=(200, 3))
    ball *= (rng.random((200, 1)) ** (1 / 3) / 100) / np.linalg.norm(ball, axis=1, keepdims=True)
    assert wave_identity_check(f, 2.5, [0.5], ball) <= 1e-9
    single = ConeAtomFunction([[1.0, 0.5]], [0.7], [1 - 2j])
    assert wave_identity_check(single, 2.5, [0.5], rng.normal(size=(20, 3))) <= 1e-13


def test_wave_identity_rejects_outside_domain():
    f = random_cone_function(np.random.default_rng(6), 2)
    with pytest.raises(ValueError):
        wave_identity_check(f, 1.1, [1.0], np.zeros((1, 3)))


def test_cone_adjoint_random_suite():
    rng = np.random.default_rng(7)
    for _ in range(50):
        lam, th = sample_cone_parameters(rng, 2)
        assert 2 <= lam <= 3 and np.linalg.norm(th) <= 1
        assert cone_adjoint_error(random_cone_function(rng, 2), lam, th) <= 1e-10


def test_closed_form_projection_matches_hand_values():
    assert np.allclose(cone_projection_closed_form(2.0, []), [[1.25, -0.75]], atol=1e-15)
    P = cone_projection_closed_form(2.0, [0.0])
    assert np.array_equal(P[1], [0.0, 1.0, 0.0])


@pytest.mark.parametrize("kind", ["parabolic", "cone"])
@pytest.mark.parametrize("n", [1, 2])
def test_frame_suite_passes(kind, n):
    worst = frame_suite(np.random.default_rng(8), 200, n, kind)
    assert frame_suite_passes(worst) == []


def flipped(builder):
    def build(*args):
        fr = builder(*args)
        return ProjectionFrame(fr.Pi, fr.L, fr.Q, -fr.G, fr.params)
    return build


def test_flipped_kernel_is_reported():
    worst = frame_suite(np.random.default_rng(9), 20, 2, "parabolic",
                        frame_builder=flipped(geometry.parabolic_frame))
    assert frame_suite_passes(worst) == ["kernel_orientation"]
    worst = frame_suite(np.random.default_rng(9), 20, 2, "cone",
                        frame_builder=flipped(geometry.cone_frame))
    assert frame_suite_passes(worst) == ["kernel_orientation"]


def test_broken_factor_is_reported():
    def bad(theta):
        fr = geometry.parabolic_frame(theta)
        return ProjectionFrame(fr.Pi, fr.L * (1 + 1e-9), fr.Q, fr.G, fr.params)
    worst = frame_suite(np.random.default_rng(10), 20, 1, "parabolic", frame_builder=bad)
    assert "factor" in frame_suite_passes(worst)

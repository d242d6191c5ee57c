import math

import numpy as np
import pytest

from blendcurv.blend import BlendPath, p_tensor, s_p_r
from blendcurv.catalog import SU2_STRUCTURE, catalog_get, round_sphere
from blendcurv.chart import inner, riemann
from blendcurv.deformations import (
    GroupAction,
    canonical_connection_check,
    canonical_variation_metric,
    cheeger_koszul_convergence,
    cheeger_limit_condition,
    cheeger_limit_oracle,
    cheeger_metric,
    conformal_metric,
    conformal_variation_integrand,
    orbit_tensor,
    warped_metric,
    warping_connection_check,
    warping_variation_integrand,
)
from blendcurv.errors import ContractError, DegeneracyError
from blendcurv.foliation import FoliationStructure

FLAT = catalog_get("flat3torus")
PROD = catalog_get("s2xs2")
HOPF = catalog_get("s3hopf")
SU2 = catalog_get("su2warp")
P3 = np.array([0.7, 0.1, 0.2])


# conformal ------------------------------------------------------------------


def test_conformal_metric_examples():
    assert np.array_equal(conformal_metric(FLAT.g0, lambda p: 0 * p[..., 0])(P3), np.eye(3))
    g = conformal_metric(FLAT.g0, lambda p: 0 * p[..., 0] + 0.5)
    assert np.allclose(g(P3), math.e * np.eye(3))
    assert np.allclose(p_tensor(BlendPath(FLAT.g0, g), P3).matrix, math.e * np.eye(3))


def test_conformal_sphere_curvature_is_consistent():
    sphere = round_sphere()
    g = conformal_metric(sphere, lambda p: 0.1 * np.cos(p[..., 0]))
    p, X, Y = np.array([1.0, 0.4]), np.array([1.0, 0.3]), np.array([0.2, 1.0])
    # K(e^{2h} g) = e^{-2h} (K - Laplacian h); Laplacian of 0.1 cos(theta) on S^2 is -0.2 cos(theta)
    th = p[0]
    K = math.exp(-0.2 * math.cos(th)) * (1 + 0.2 * math.cos(th))
    area = inner(g(p), X, X) * inner(g(p), Y, Y) - inner(g(p), X, Y) ** 2
    assert abs(riemann(g, p, X, Y, Y, X) - K * area) <= 1e-6


def test_conformal_variation_integrand_examples():
    X, Y = [1.0, 0, 0], [0, 1.0, 0]
    p = [1.0, 2.0, 3.0]
    assert conformal_variation_integrand(FLAT.g0, lambda q: 0 * q[..., 0] + 0.4, p, X, Y) == 0.0
    assert abs(conformal_variation_integrand(FLAT.g0, lambda q: 0.2 * q[..., 2], p, X, Y) - 0.04) <= 1e-9
    assert abs(conformal_variation_integrand(FLAT.g0, lambda q: 0.2 * q[..., 0], p, X, Y) + 0.08) <= 1e-9
    with pytest.raises(ContractError):
        conformal_variation_integrand(FLAT.g0, lambda q: q[..., 0], p, X, [1.0, 1.0, 0])


# canonical variation ----------------------------------------------------------


def test_canonical_variation_metric_examples():
    F = HOPF.foliation
    p = np.array([0.6, 1.0, 2.0])
    assert np.array_equal(canonical_variation_metric(F, HOPF.g0, 0.0)(p), HOPF.g0(p))
    s = 0.7
    P = p_tensor(BlendPath(HOPF.g0, canonical_variation_metric(F, HOPF.g0, s)), p).matrix
    assert np.allclose(np.sort(np.linalg.eigvals(P).real), [1.0, 1.0, math.exp(2 * s)], atol=1e-12)
    g = canonical_variation_metric(FLAT.foliation, FLAT.g0, 0.5)
    assert np.allclose(g(P3), np.diag([1.0, 1.0, math.e]), atol=1e-15)


def test_canonical_connection_check_examples():
    q = np.array([1.2, 0.3, 0.9, 2.0])
    p = np.array([0.6, 1.0, 2.0])
    assert canonical_connection_check(HOPF.foliation, HOPF.g0, 0.0, p) <= 1e-8
    for s in (-0.5, 0.5, 1.5):
        assert canonical_connection_check(PROD.foliation, PROD.g0, s, q) <= 1e-6
    assert canonical_connection_check(HOPF.foliation, HOPF.g0, 0.3, p) <= 1e-5


# vertical warping --------------------------------------------------------------


def test_warped_metric_examples():
    F = FLAT.foliation
    assert np.array_equal(warped_metric(F, FLAT.g0, lambda p: 0 * p[..., 0])(P3), np.eye(3))
    c = lambda p: 0 * p[..., 0] + 0.3
    assert np.allclose(warped_metric(F, FLAT.g0, c)(P3), canonical_variation_metric(F, FLAT.g0, 0.3)(P3))
    f = lambda p: 0.2 * np.sin(p[..., 0])
    want = np.diag([1.0, 1.0, math.exp(0.4 * math.sin(0.7))])
    assert np.allclose(warped_metric(F, FLAT.g0, f)(P3), want, atol=1e-15)
    with pytest.raises(ContractError):
        warped_metric(F, FLAT.g0, lambda p: p[..., 2])


def test_warping_connection_check_on_product_and_hopf():
    f = lambda p: 0.3 * np.sin(p[..., 0]) + 0.1 * np.cos(p[..., 1])
    assert warping_connection_check(PROD.foliation, PROD.g0, f, np.array([1.2, 0.3, 0.9, 2.0])) <= 1e-6
    fh = lambda p: 0.3 * np.cos(2 * p[..., 0])
    assert warping_connection_check(HOPF.foliation, HOPF.g0, fh, np.array([0.6, 1.0, 2.0])) <= 1e-5


def test_warping_variation_integrand_examples():
    F, g0 = FLAT.foliation, FLAT.g0
    X, Y = [1.0, 0, 0], [0, 0, 1.0]
    zero = lambda p: 0 * p[..., 0]
    assert warping_variation_integrand(F, g0, zero, P3, X, Y, 3) == 0.0
    f = lambda p: 0.2 * np.sin(p[..., 0])
    assert abs(warping_variation_integrand(F, g0, f, [0.0, 0, 0], X, Y, 3)) <= 1e-14
    assert abs(warping_variation_integrand(F, g0, f, [math.pi / 2, 0, 0], X, Y, 3)) <= 1e-12
    x = math.pi / 4
    fx, dfx = 0.2 * math.sin(x), 0.2 * math.cos(x)
    for r in (2, 3, 4):
        want = math.exp(4 * fx) * (1 - math.exp(2 * fx)) ** (r - 2) * dfx**2
        got = warping_variation_integrand(F, g0, f, [x, 0, 1.0], X, Y, r)
        assert abs(got - want) <= 1e-9 * abs(want)
        path = BlendPath(g0, warped_metric(F, g0, f))
        assert abs(got + s_p_r(path, [x, 0, 1.0], X, Y, r)) <= 1e-6 * abs(want)
    with pytest.raises(ContractError):
        warping_variation_integrand(F, g0, f, P3, Y, X, 3)


# Cheeger deformation -------------------------------------------------------


def test_cheeger_metric_examples():
    p = np.array([0.6, 1.0, 2.0])
    a = HOPF.action
    assert np.array_equal(cheeger_metric(a, HOPF.g0, 0.0)(p), HOPF.g0(p))
    o = float(orbit_tensor(a, p).matrix[0, 0])
    assert abs(o - 1.0) <= 1e-12  # Hopf orbits have unit speed
    for s in (0.5, 3.0):
        P = p_tensor(BlendPath(HOPF.g0, cheeger_metric(a, HOPF.g0, s)), p).matrix
        K = a.killing(p)[0]
        assert np.allclose(P @ K, K / (1 + s * o), atol=1e-12)
        H = HOPF.foliation.horizontal_basis(p)
        assert np.allclose(H @ P.T, H, atol=1e-12)


def test_cheeger_limit_vanishes_for_abelian_constant_orbits():
    a = PROD.action
    p = np.array([1.2, 0.3, 0.9, 2.0])
    assert abs(cheeger_limit_condition(a, PROD.g0, p, [0.3, 1.0, 0.2, 0.5], [0.1, -0.4, 1.0, 0.3])) <= 1e-10


def test_cheeger_limit_matches_extrapolation_on_modulated_orbits():
    p = np.array([0.7, 0.4, 1.1, 1.0])
    X, Y = np.array([0.3, 1.0, 0.2, 0.5]), np.array([0.1, -0.4, 1.0, 0.3])
    a = cheeger_limit_condition(SU2.action, SU2.g0, p, X, Y)
    b = cheeger_limit_oracle(SU2.action, SU2.g0, p, X, Y)
    assert abs(a - b) <= 1e-3 * abs(b)


def test_cheeger_limit_with_horizontal_x_keeps_second_term_only():
    p = np.array([0.7, 0.4, 1.1, 1.0])
    X = np.array([0.0, 0.0, 0.0, 1.0])  # d/dr is horizontal
    Y = np.array([0.1, -0.4, 1.0, 0.3])
    assert abs(cheeger_limit_condition(SU2.action, SU2.g0, p, X, Y)) <= 1e-10


def test_cheeger_koszul_convergence_examples():
    p = np.array([0.6, 1.0, 2.0])
    K = HOPF.action.killing(p)[0]
    res = cheeger_koszul_convergence(HOPF.action, HOPF.g0, p, K, 2 * K, K, [10.0, 1e3, 1e4])
    assert res.max() <= 1e-8
    q = np.array([0.7, 0.4, 1.1, 1.0])
    K = SU2.action.killing(q)
    res = cheeger_koszul_convergence(SU2.action, SU2.g0, q, K[0] + 0.3 * K[1], K[1] - K[2], K[2] + 0.5 * K[0], [1e3, 1e4])
    assert 8.0 <= res[0] / res[1] <= 12.0
    with pytest.raises(ContractError):
        cheeger_koszul_convergence(SU2.action, SU2.g0, q, K[0], K[1], np.array([0, 0, 0, 1.0]), [1e3, 1e4])
    with pytest.raises(ContractError):
        cheeger_koszul_convergence(SU2.action, SU2.g0, q, K[0], K[1], K[2], [1e4, 1e3])


def test_group_action_validation():
    F = SU2.action.foliation
    with pytest.raises(ContractError):
        GroupAction(F, np.zeros((2, 2, 2)), np.eye(3))
    with pytest.raises(DegeneracyError):
        GroupAction(F, SU2_STRUCTURE, -np.eye(3))
    with pytest.raises(ContractError):
        GroupAction(F, SU2_STRUCTURE, np.diag([1.0, 2.0, 3.0]))
    # d/dx1 on the round S^2 chart is not a Killing field
    sphere = round_sphere()
    G = FoliationStructure(sphere.chart, lambda p: np.broadcast_to([[1.0, 0.0]], np.shape(p)[:-1] + (1, 2)), sphere)
    with pytest.raises(ContractError, match="not Killing"):
        GroupAction(G, np.zeros((1, 1, 1)), np.eye(1))

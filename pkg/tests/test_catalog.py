import math

import numpy as np
import pytest

from blendcurv.catalog import SU2_STRUCTURE, catalog_get, catalog_list, self_test, su2_killing
from blendcurv.chart import christoffel, riemann
from blendcurv.torus import gauss_bonnet_check, grid, induced_metric, torus_residuals


def test_catalog_list_and_unknown():
    assert catalog_list() == ["flat3torus", "s2xs2", "s3hopf", "su2warp", "warped3torus"]
    with pytest.raises(KeyError):
        catalog_get("nope")
    assert catalog_get("s2xs2") is catalog_get("s2xs2")


def test_flat3torus_has_zero_christoffels():
    e = catalog_get("flat3torus")
    assert np.array_equal(christoffel(e.g0, [0.3, 1.0, 2.0]), np.zeros((3, 3, 3)))


def test_s2xs2_torus_residual():
    assert self_test(catalog_get("s2xs2")) <= 1e-6


def test_s3hopf_clifford_torus():
    e = catalog_get("s3hopf")
    assert not e.totally_geodesic_flat
    # intrinsically flat
    h = induced_metric(e.g0, e.torus)
    uv = grid(8).reshape(-1, 2)
    e1, e2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    assert np.abs(riemann(h, uv, e1, e2, e2, e1)).max() <= 1e-10
    assert abs(gauss_bonnet_check(e.g0, e.torus)) <= 1e-10
    # ambient sectional curvature 1 with |X|^2 |Y|^2 = 1/4, and |nabla_X X| = 1/2
    res = torus_residuals(e.g0, e.torus)
    assert abs(res["R0"] - 0.25) <= 1e-6
    assert abs(res["XX"] - 0.5) <= 1e-6


def test_su2_fields_are_unit_and_bracket_correctly():
    p = np.array([0.7, 0.4, 1.1])
    e = catalog_get("su2warp")
    q = np.append(p, math.pi)  # cos(r) = -1: lambda = 1 - a
    K = e.action.killing(q)
    lam = 1 - e.notes["amplitude"]
    gram = K @ e.g0(q) @ K.T
    assert np.allclose(gram, lam**2 * np.eye(3), atol=1e-12)
    assert SU2_STRUCTURE[0, 1, 2] == -SU2_STRUCTURE[1, 0, 2]
    assert su2_killing(p).shape == (3, 3)


def test_entries_are_consistent():
    for name in catalog_list():
        e = catalog_get(name)
        assert e.torus.chart == e.chart
        if e.foliation is not None:
            assert e.foliation.chart == e.chart
        if e.action is not None:
            assert e.action.foliation.chart == e.chart

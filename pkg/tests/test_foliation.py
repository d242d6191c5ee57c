import math

import numpy as np
import pytest

from blendcurv.catalog import catalog_get
from blendcurv.chart import Chart, MetricField, inner
from blendcurv.deformations import warped_metric
from blendcurv.errors import ContractError, DegeneracyError
from blendcurv.foliation import (
    FoliationStructure,
    horizontal_part,
    integrability_residual,
    is_basic,
    leaf_shape,
    oneill_A,
    oneill_A_dual,
    vertical_part,
)

FLAT = catalog_get("flat3torus")
PROD = catalog_get("s2xs2")
HOPF = catalog_get("s3hopf")


def _unit_horizontal_pair(F, p):
    """Two g-orthonormal horizontal vectors at ``p``."""
    G = F.metric(p)
    B = F.horizontal_basis(p)
    out = []
    for v in B:
        for w in out:
            v = v - inner(G, v, w) * w
        out.append(v / math.sqrt(inner(G, v, v)))
    return out


def test_split_examples():
    p = np.array([0.3, 0.2, 0.1])
    V = np.array([0.0, 0.0, 2.0])
    H = np.array([1.0, -1.0, 0.0])
    assert np.allclose(vertical_part(FLAT.foliation, V, p), V)
    assert np.allclose(vertical_part(FLAT.foliation, H, p), 0.0)
    q = np.array([1.1, 0.4, 0.9])
    Z = np.array([0.3, 1.2, -0.7])
    F = HOPF.foliation
    assert np.abs(vertical_part(F, Z, q) + horizontal_part(F, Z, q) - Z).max() <= 1e-12


def test_integrability_and_frame_checks():
    pts = PROD.chart.sample(np.random.default_rng(0), 5, margin=0.1)
    assert integrability_residual(PROD.foliation, pts) <= 1e-10
    chart = Chart(((0.0, 1.0),) * 3, (False,) * 3)
    g = MetricField(chart, lambda p: np.broadcast_to(np.eye(3), np.shape(p)[:-1] + (3, 3)))
    # span{d1 + x3 d2, d3} is not involutive
    frame = lambda p: np.stack(
        [np.stack([np.ones_like(p[..., 0]), p[..., 2], 0 * p[..., 0]], -1), np.broadcast_to([0.0, 0.0, 1.0], p.shape)], -2
    )
    with pytest.raises(DegeneracyError):
        FoliationStructure(chart, frame, g)
    flat_frame = lambda p: np.broadcast_to([[1.0, 0, 0], [2.0, 0, 0]], np.shape(p)[:-1] + (2, 3))
    with pytest.raises(DegeneracyError):
        FoliationStructure(chart, flat_frame, g)


def test_oneill_A_product_vanishes():
    p = np.array([1.1, 0.4, 0.9, 2.0])
    X, Y = np.array([1.0, 0, 0, 0]), np.array([0, 1.0, 0, 0])
    assert np.abs(oneill_A(PROD.foliation, p, X, Y)).max() <= 1e-10


def test_oneill_A_hopf():
    F = HOPF.foliation
    p = np.array([0.6, 1.0, 2.0])
    X, Y = _unit_horizontal_pair(F, p)
    G = F.metric(p)
    A = oneill_A(F, p, X, Y)
    assert abs(math.sqrt(inner(G, A, A)) - 1.0) <= 1e-5
    assert np.abs(A + oneill_A(F, p, Y, X)).max() <= 1e-8


def test_oneill_A_dual_duality_and_norm():
    F = HOPF.foliation
    rng = np.random.default_rng(3)
    G_of = F.metric
    for _ in range(20):
        p = HOPF.chart.sample(rng, 1, margin=0.1)[0]
        G = G_of(p)
        X = horizontal_part(F, rng.normal(size=3), p)
        Y = horizontal_part(F, rng.normal(size=3), p)
        V = vertical_part(F, rng.normal(size=3), p)
        lhs = inner(G, oneill_A(F, p, X, Y), V)
        rhs = inner(G, oneill_A_dual(F, p, X, V), Y)
        assert abs(lhs - rhs) <= 1e-6
    p = np.array([0.6, 1.0, 2.0])
    X, _ = _unit_horizontal_pair(F, p)
    V = F.frame(p)[0]
    G = G_of(p)
    AV = oneill_A_dual(F, p, X, V)
    assert abs(math.sqrt(inner(G, AV, AV)) - math.sqrt(inner(G, V, V))) <= 1e-5
    assert np.abs(oneill_A_dual(PROD.foliation, np.array([1.1, 0.4, 0.9, 2.0]), [1.0, 0, 0, 0], [0, 0, 1.0, 0])).max() <= 1e-10


def test_leaf_shape_examples():
    p = np.array([1.1, 0.4, 0.9, 2.0])
    U, V = np.array([0, 0, 1.0, 0]), np.array([0, 0, 0.3, 1.0])
    assert np.abs(leaf_shape(PROD.foliation, p, U, V)).max() <= 1e-10
    f = lambda q: 0.2 * np.sin(q[..., 0])
    gw = warped_metric(FLAT.foliation, FLAT.g0, f)
    Fw = FoliationStructure(FLAT.chart, FLAT.foliation.vertical_frame, gw)
    q = np.array([0.7, 0.1, 0.2])
    e3 = np.array([0.0, 0.0, 1.0])
    fx = 0.2 * math.sin(0.7)
    want = np.array([-math.exp(2 * fx) * 0.2 * math.cos(0.7), 0.0, 0.0])
    assert np.abs(leaf_shape(Fw, q, e3, e3) - want).max() <= 1e-6
    F = HOPF.foliation
    r = np.array([0.6, 1.0, 2.0])
    W = F.frame(r)[0]
    assert np.abs(leaf_shape(F, r, W, 2 * W) - leaf_shape(F, r, 2 * W, W)).max() <= 1e-8


def test_leaf_shape_contract():
    p = np.array([1.1, 0.4, 0.9, 2.0])
    with pytest.raises(ContractError):
        leaf_shape(PROD.foliation, p, np.array([1.0, 0, 0, 0]), np.array([0, 0, 1.0, 0]))


def test_is_basic_examples():
    F = FLAT.foliation
    assert is_basic(F, lambda p: np.sin(p[..., 0]))
    assert not is_basic(F, lambda p: p[..., 2])
    assert is_basic(F, lambda p: 0 * p[..., 0] + 3.0)

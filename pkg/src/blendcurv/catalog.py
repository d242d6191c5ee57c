"""Built-in geometries with their foliations, actions and flat tori.

Entries are built lazily and self-tested the first time they are requested.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .chart import Chart, MetricField
from .deformations import GroupAction, warped_metric
from .foliation import FoliationStructure
from .torus import TorusImmersion, check_totally_geodesic_flat

POLE_MARGIN = 1e-2
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    chart: Chart
    g0: MetricField
    torus: TorusImmersion
    foliation: Optional[FoliationStructure] = None
    action: Optional[GroupAction] = None
    g1: Optional[MetricField] = None
    totally_geodesic_flat: bool = True
    notes: dict = field(default_factory=dict)


def _diag(entries: Callable[[np.ndarray], list]) -> Callable:
    def func(p):
        p = np.asarray(p, dtype=float)
        vals = entries(p)
        n = len(vals)
        out = np.zeros(p.shape[:-1] + (n, n))
        for i, v in enumerate(vals):
            out[..., i, i] = v
        return out

    return func


def _const_frame(rows) -> Callable:
    rows = np.asarray(rows, dtype=float)
    return lambda p: np.broadcast_to(rows, np.shape(p)[:-1] + rows.shape)


def _flat_metric(chart: Chart) -> MetricField:
    n = chart.dim
    return MetricField(chart, lambda p: np.broadcast_to(np.eye(n), np.shape(p)[:-1] + (n, n)), "flat")


def _linear_torus(chart: Chart, base, du, dv, label) -> TorusImmersion:
    base, du, dv = (np.asarray(a, dtype=float) for a in (base, du, dv))
    J = np.stack([du, dv], axis=-1)
    n = base.size
    return TorusImmersion(
        chart,
        lambda uv: base + uv[..., :1] * du + uv[..., 1:] * dv,
        label,
        jacobian=lambda uv: np.broadcast_to(J, np.shape(uv)[:-1] + (n, 2)),
        second_derivatives=lambda uv: np.zeros(np.shape(uv)[:-1] + (n, 2, 2)),
    )


# ---------------------------------------------------------------------------
# geometries


def round_sphere(radius: float = 1.0) -> MetricField:
    """``S^2`` in colatitude and longitude, poles excluded."""
    chart = Chart(((POLE_MARGIN, math.pi - POLE_MARGIN), (0.0, TWO_PI)), (False, True))
    a2 = radius**2
    return MetricField(chart, _diag(lambda p: [a2 + 0 * p[..., 0], a2 * np.sin(p[..., 0]) ** 2]), f"S2({radius:g})")


def flat_three_torus() -> CatalogEntry:
    chart = Chart(((0.0, TWO_PI),) * 3, (True,) * 3)
    g0 = _flat_metric(chart)
    F = FoliationStructure(chart, _const_frame([[0.0, 0.0, 1.0]]), g0)
    T = _linear_torus(chart, [0, 0, 0], [1, 0, 0], [0, 0, 1], "x1-x3")
    return CatalogEntry("flat3torus", chart, g0, T, F, notes={"residual": 1e-12})


def warped_three_torus(amplitude: float = 0.2) -> CatalogEntry:
    """Flat 3-torus paired with ``g1 = dx1^2 + dx2^2 + e^{2f} dx3^2``, ``f = a sin x1``."""
    base = flat_three_torus()
    f = lambda p: amplitude * np.sin(np.asarray(p)[..., 0])
    g1 = warped_metric(base.foliation, base.g0, f)
    return CatalogEntry(
        "warped3torus",
        base.chart,
        base.g0,
        base.torus,
        base.foliation,
        g1=g1,
        notes={"residual": 1e-12, "amplitude": amplitude},
    )


def s2_times_s2() -> CatalogEntry:
    m = POLE_MARGIN
    chart = Chart(((m, math.pi - m), (0.0, TWO_PI), (m, math.pi - m), (0.0, TWO_PI)), (False, True, False, True))
    g0 = MetricField(
        chart, _diag(lambda p: [1 + 0 * p[..., 0], np.sin(p[..., 0]) ** 2, 1 + 0 * p[..., 0], np.sin(p[..., 2]) ** 2]), "S2xS2"
    )
    F = FoliationStructure(chart, _const_frame([[0, 0, 1, 0], [0, 0, 0, 1]]), g0)
    orbits = FoliationStructure(chart, _const_frame([[0, 1, 0, 0], [0, 0, 0, 1]]), g0)
    action = GroupAction(orbits, np.zeros((2, 2, 2)), np.eye(2))
    half = math.pi / 2
    T = _linear_torus(chart, [half, 0, half, 0], [0, 1, 0, 0], [0, 0, 0, 1], "equator x equator")
    return CatalogEntry("s2xs2", chart, g0, T, F, action, notes={"residual": 1e-6})


def _hopf_chart_metric(scale: Callable = None):
    m = POLE_MARGIN
    chart = Chart(((m, math.pi / 2 - m), (0.0, TWO_PI), (0.0, TWO_PI)), (False, True, True))
    g0 = MetricField(chart, _diag(lambda p: [1 + 0 * p[..., 0], np.sin(p[..., 0]) ** 2, np.cos(p[..., 0]) ** 2]), "S3")
    return chart, g0


def s3_hopf() -> CatalogEntry:
    """Round ``S^3`` in Hopf coordinates ``(eta, xi1, xi2)``.

    The Clifford torus ``eta = pi/4`` is flat and minimal but not totally
    geodesic; its frame has ``|nabla_X X| = 1/2``.
    """
    chart, g0 = _hopf_chart_metric()
    F = FoliationStructure(chart, _const_frame([[0.0, 1.0, 1.0]]), g0)
    action = GroupAction(F, np.zeros((1, 1, 1)), np.eye(1))
    T = _linear_torus(chart, [math.pi / 4, 0, 0], [0, 1, 0], [0, 0, 1], "Clifford")
    return CatalogEntry("s3hopf", chart, g0, T, F, action, totally_geodesic_flat=False, notes={"residual": 0.5})


# left multiplication by i, j, k on (a, b, c, d) = a + b i + c j + d k
_LEFT = (
    np.array([[0, -1, 0, 0], [1, 0, 0, 0], [0, 0, 0, -1], [0, 0, 1, 0]], dtype=float),
    np.array([[0, 0, -1, 0], [0, 0, 0, 1], [1, 0, 0, 0], [0, -1, 0, 0]], dtype=float),
    np.array([[0, 0, 0, -1], [0, 0, -1, 0], [0, 1, 0, 0], [1, 0, 0, 0]], dtype=float),
)


def su2_killing(p) -> np.ndarray:
    """Left-invariant SU(2) fields on ``S^3`` in Hopf coordinates, rows ``(3, 3)``."""
    p = np.asarray(p, dtype=float)
    eta, x1, x2 = p[..., 0], p[..., 1], p[..., 2]
    se, ce = np.sin(eta), np.cos(eta)
    pos = np.stack([se * np.cos(x1), se * np.sin(x1), ce * np.cos(x2), ce * np.sin(x2)], axis=-1)
    J = np.stack(
        [
            np.stack([ce * np.cos(x1), ce * np.sin(x1), -se * np.cos(x2), -se * np.sin(x2)], axis=-1),
            np.stack([-se * np.sin(x1), se * np.cos(x1), 0 * se, 0 * se], axis=-1),
            np.stack([0 * se, 0 * se, -ce * np.sin(x2), ce * np.cos(x2)], axis=-1),
        ],
        axis=-2,
    )  # (..., 3, 4): rows are coordinate tangent vectors
    norms = np.stack([np.ones_like(se), se**2, ce**2], axis=-1)
    rows = []
    for L in _LEFT:
        amb = pos @ L.T
        rows.append(np.einsum("...m,...cm->...c", amb, J) / norms)
    return np.stack(rows, axis=-2)


SU2_STRUCTURE = np.zeros((3, 3, 3))
for _a, _b, _c in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    SU2_STRUCTURE[_a, _b, _c] = -2.0
    SU2_STRUCTURE[_b, _a, _c] = 2.0


def su2_warp(amplitude: float = 0.25, r0: float = 1.0) -> CatalogEntry:
    """``S^3 x S^1`` with ``dr^2 + lam(r)^2 g_S3``, ``lam = 1 + a cos r``, and the SU(2) action.

    Orbits are the ``S^3`` slices, so the orbit tensor ``lam(r)^2 I`` is
    modulated by the horizontal coordinate ``r``.
    """
    m = POLE_MARGIN
    chart = Chart(((m, math.pi / 2 - m), (0.0, TWO_PI), (0.0, TWO_PI), (0.0, TWO_PI)), (False, True, True, True))
    lam2 = lambda p: (1.0 + amplitude * np.cos(p[..., 3])) ** 2
    g0 = MetricField(
        chart,
        _diag(lambda p: [lam2(p), lam2(p) * np.sin(p[..., 0]) ** 2, lam2(p) * np.cos(p[..., 0]) ** 2, 1 + 0 * p[..., 0]]),
        "S3xS1 warped",
    )

    def frame(p):
        K = su2_killing(np.asarray(p)[..., :3])
        return np.concatenate([K, np.zeros(K.shape[:-1] + (1,))], axis=-1)

    F = FoliationStructure(chart, frame, g0)
    action = GroupAction(F, SU2_STRUCTURE, np.eye(3))
    T = _linear_torus(chart, [math.pi / 4, 0, 0, r0], [0, 1, 0, 0], [0, 0, 1, 0], "Clifford slice")
    return CatalogEntry(
        "su2warp", chart, g0, T, F, action, totally_geodesic_flat=False, notes={"amplitude": amplitude}
    )


_BUILDERS = {
    "flat3torus": flat_three_torus,
    "warped3torus": warped_three_torus,
    "s2xs2": s2_times_s2,
    "s3hopf": s3_hopf,
    "su2warp": su2_warp,
}
_CACHE: dict = {}


def self_test(entry: CatalogEntry) -> float:
    """Check the declared torus residual; returns the measured value."""
    res = check_totally_geodesic_flat(entry.g0, entry.torus)
    bound = entry.notes.get("residual")
    if entry.totally_geodesic_flat and res > max(1e-5, bound or 0.0):
        raise AssertionError(f"catalog entry {entry.name!r}: torus residual {res:.2e} exceeds its bound")
    return res


def catalog_list() -> list:
    return sorted(_BUILDERS)


def catalog_get(name: str) -> CatalogEntry:
    if name not in _BUILDERS:
        raise KeyError(f"unknown geometry {name!r}; available: {', '.join(catalog_list())}")
    if name not in _CACHE:
        entry = _BUILDERS[name]()
        self_test(entry)
        _CACHE[name] = entry
    return _CACHE[name]

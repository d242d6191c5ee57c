"""Metric foliations given by explicit vertical frames.

The vertical distribution is spanned by ``k`` vector fields (rows of
``vertical_frame(p)``, shape ``(..., k, n)``); the horizontal distribution is
its orthogonal complement for ``metric``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .chart import (
    DEFAULT_STENCIL,
    Chart,
    DerivativeStencil,
    MetricField,
    VectorLike,
    as_field,
    covariant_derivative,
    directional_derivative,
    inner,
)
from .errors import ContractError, DegeneracyError

FrameFn = Callable[[np.ndarray], np.ndarray]

_PROJ_TOL = 1e-8


@dataclass(frozen=True)
class FoliationStructure:
    chart: Chart
    vertical_frame: FrameFn
    metric: MetricField
    check_samples: int = 6

    def __post_init__(self):
        if self.metric.chart != self.chart:
            raise ContractError("foliation metric lives on another chart")
        if self.check_samples:
            rng = np.random.default_rng(7)
            pts = self.chart.sample(rng, self.check_samples, margin=0.05)
            self.frame(pts)
            res = integrability_residual(self, pts)
            if res > 1e-6:
                raise DegeneracyError(f"vertical distribution is not integrable (residual {res:.2e})")

    def frame(self, pts) -> np.ndarray:
        F = np.asarray(self.vertical_frame(np.asarray(pts, dtype=float)), dtype=float)
        sv = np.linalg.svd(F, compute_uv=False)
        if np.any(sv[..., -1] <= 1e-10 * sv[..., 0]):
            raise DegeneracyError("vertical frame is rank deficient")
        return F

    @property
    def rank(self) -> int:
        return int(np.asarray(self.vertical_frame(self.chart.lower)).shape[-2])

    def vertical_projector(self, pts) -> np.ndarray:
        """Matrix ``V`` with ``V @ X`` the g-orthogonal vertical part of ``X``."""
        F = self.frame(pts)
        G = self.metric(pts)
        Fg = F @ G  # (..., k, n)
        gram = Fg @ np.swapaxes(F, -1, -2)
        return np.swapaxes(F, -1, -2) @ np.linalg.solve(gram, Fg)

    def horizontal_projector(self, pts) -> np.ndarray:
        n = self.chart.dim
        return np.eye(n) - self.vertical_projector(pts)

    def horizontal_basis(self, p) -> np.ndarray:
        """Rows spanning the horizontal space at a single point."""
        H = self.horizontal_projector(p)
        u, s, _ = np.linalg.svd(H)
        m = self.chart.dim - self.rank
        return u[:, :m].T


def _mv(A, v):
    return np.einsum("...ij,...j->...i", A, np.asarray(v, dtype=float))


def vertical_part(F: FoliationStructure, X, p) -> np.ndarray:
    p = F.chart.point(p)
    return _mv(F.vertical_projector(p), X)


def horizontal_part(F: FoliationStructure, X, p) -> np.ndarray:
    p = F.chart.point(p)
    return _mv(F.horizontal_projector(p), X)


def _bracket(Xf, Yf, p, stencil) -> np.ndarray:
    """Lie bracket ``[X, Y]`` of two fields at ``p``."""
    Xp, Yp = Xf(p), Yf(p)
    return directional_derivative(Yf, p, Xp, stencil) - directional_derivative(Xf, p, Yp, stencil)


def integrability_residual(F: FoliationStructure, pts, stencil: DerivativeStencil = DEFAULT_STENCIL) -> float:
    """Largest horizontal component of brackets of vertical frame fields."""
    pts = np.asarray(pts, dtype=float)
    k = np.asarray(F.vertical_frame(pts)).shape[-2]
    worst = 0.0
    H = F.horizontal_projector(pts)
    G = F.metric(pts)
    for a in range(k):
        for b in range(a + 1, k):
            fa = lambda q, a=a: np.asarray(F.vertical_frame(q))[..., a, :]
            fb = lambda q, b=b: np.asarray(F.vertical_frame(q))[..., b, :]
            h = _mv(H, _bracket(fa, fb, pts, stencil))
            worst = max(worst, float(np.max(np.sqrt(np.abs(inner(G, h, h))))))
    return worst


def _horizontalized(F: FoliationStructure, v) -> Callable:
    v = np.asarray(v, dtype=float)
    return lambda q: _mv(F.horizontal_projector(q), v)


def _verticalized(F: FoliationStructure, v) -> Callable:
    v = np.asarray(v, dtype=float)
    return lambda q: _mv(F.vertical_projector(q), v)


def _require(F, p, v, kind: str):
    G = F.metric(p)
    other = vertical_part(F, v, p) if kind == "horizontal" else horizontal_part(F, v, p)
    scale = max(1.0, float(np.max(np.abs(inner(G, v, v)))))
    if float(np.max(np.abs(inner(G, other, other)))) > _PROJ_TOL * scale:
        raise ContractError(f"vector is not {kind}")


def oneill_A(F: FoliationStructure, p, X, Y, stencil: DerivativeStencil = DEFAULT_STENCIL) -> np.ndarray:
    """``A_X Y = 1/2 [X^h, Y^h]^v`` for horizontal ``X``, ``Y`` at ``p``.

    Both inputs are extended as constant-coefficient fields and then projected
    to the horizontal distribution at every nearby point.
    """
    p = F.chart.point(p)
    _require(F, p, X, "horizontal")
    _require(F, p, Y, "horizontal")
    br = _bracket(_horizontalized(F, X), _horizontalized(F, Y), p, stencil)
    return 0.5 * vertical_part(F, br, p)


def oneill_A_dual(F: FoliationStructure, p, X, V, stencil: DerivativeStencil = DEFAULT_STENCIL) -> np.ndarray:
    """Horizontal ``Z`` with ``g(A_X Y, V) = g(Z, Y)`` for every horizontal ``Y``."""
    p = F.chart.point(p)
    _require(F, p, X, "horizontal")
    _require(F, p, V, "vertical")
    G = F.metric(p)
    basis = F.horizontal_basis(p)
    gram = basis @ G @ basis.T
    rhs = np.array([inner(G, oneill_A(F, p, X, b, stencil), V) for b in basis])
    try:
        z = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError as exc:
        raise DegeneracyError("horizontal basis is rank deficient") from exc
    return z @ basis


def leaf_shape(F: FoliationStructure, p, U, V, stencil: DerivativeStencil = DEFAULT_STENCIL) -> np.ndarray:
    """Second fundamental form of the leaf: horizontal part of ``nabla_U V``."""
    p = F.chart.point(p)
    _require(F, p, U, "vertical")
    _require(F, p, V, "vertical")
    g = F.metric
    uv = covariant_derivative(g, U, _verticalized(F, V), p, stencil)
    vu = covariant_derivative(g, V, _verticalized(F, U), p, stencil)
    return horizontal_part(F, 0.5 * (uv + vu), p)


def is_basic(F: FoliationStructure, h, pts=None, stencil: DerivativeStencil = DEFAULT_STENCIL, tol: float = 1e-8) -> bool:
    """True when ``dh`` annihilates every vertical frame field at the sampled points."""
    if pts is None:
        pts = F.chart.sample(np.random.default_rng(11), 16, margin=0.05)
    pts = np.asarray(pts, dtype=float)
    frame = F.frame(pts)
    for a in range(frame.shape[-2]):
        dh = directional_derivative(h, pts, frame[..., a, :], stencil)
        if np.max(np.abs(dh)) > tol:
            return False
    return True


def vector_field(v: VectorLike) -> Callable:
    return as_field(v)

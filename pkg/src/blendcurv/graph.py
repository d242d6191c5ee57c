"""The blend metric as the metric induced on a diagonal.

``M`` embeds diagonally in ``(M x M, (1-t) g0 x t g1)``, and the induced
metric is exactly ``(1-t) g0 + t g1``.  Tangent vectors of the diagonal are
``chi(X) = (X, X)``.  With ``Pt = t/(1-t) P`` the normal space is spanned by
``chi'(Y) = (-Pt Y, Y)``, and the second fundamental form is the normal part
of ``(nabla0_X Y, nabla1_X Y)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blend import BlendPath, PTensor, connection_diff, p_tensor
from .chart import (
    DEFAULT_STENCIL,
    Chart,
    DerivativeStencil,
    MetricField,
    _christoffel_unchecked,
    inner,
    riemann,
)
from .errors import ContractError, InversionError


@dataclass(frozen=True)
class ProductPoint:
    left: np.ndarray
    right: np.ndarray

    def coords(self) -> np.ndarray:
        return np.concatenate([self.left, self.right], axis=-1)


def diagonal(p) -> ProductPoint:
    p = np.asarray(p, dtype=float)
    return ProductPoint(p, p.copy())


@dataclass(frozen=True)
class SplitVector:
    """A tangent vector of the product, one block per factor."""

    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        left = np.asarray(self.left, dtype=float)
        right = np.asarray(self.right, dtype=float)
        if left.shape != right.shape:
            raise ContractError(f"block shapes differ: {left.shape} vs {right.shape}")
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)

    def __add__(self, other: "SplitVector") -> "SplitVector":
        return SplitVector(self.left + other.left, self.right + other.right)

    def __sub__(self, other: "SplitVector") -> "SplitVector":
        return SplitVector(self.left - other.left, self.right - other.right)

    def __rmul__(self, c) -> "SplitVector":
        return SplitVector(c * self.left, c * self.right)

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.left, self.right], axis=-1)

    @classmethod
    def from_stacked(cls, v) -> "SplitVector":
        v = np.asarray(v, dtype=float)
        n = v.shape[-1] // 2
        return cls(v[..., :n], v[..., n:])


def _mv(A, v):
    return np.einsum("...ij,...j->...i", A, np.asarray(v, dtype=float))


def _check_dim(P: PTensor, v) -> None:
    if np.shape(v)[-1] != P.matrix.shape[-1]:
        raise ContractError(f"vector of length {np.shape(v)[-1]} does not match P of size {P.matrix.shape[-1]}")


def chi(X) -> SplitVector:
    X = np.asarray(X, dtype=float)
    return SplitVector(X, X.copy())


def chi_prime(Y, P: PTensor) -> SplitVector:
    _check_dim(P, Y)
    Y = np.asarray(Y, dtype=float)
    return SplitVector(-P.apply(Y), Y)


def scaled_p(path: BlendPath, t: float, p) -> PTensor:
    """``t/(1-t) P``: the P tensor of the pair ``((1-t) g0, t g1)``."""
    if not 0.0 < t < 1.0:
        raise ContractError(f"t must lie in (0, 1), got {t}")
    return p_tensor(path, p).scaled(t / (1.0 - t))


def _resolvent(P: PTensor) -> np.ndarray:
    n = P.matrix.shape[-1]
    try:
        return np.linalg.inv(np.eye(n) + P.matrix)
    except np.linalg.LinAlgError as exc:
        raise InversionError("1 + P is singular") from exc


def projection_matrix(P: PTensor) -> np.ndarray:
    """Block matrix ``[[P O, -P O], [-O, O]]`` with ``O = (1 + P)^{-1}``."""
    O = _resolvent(P)
    PO = P.matrix @ O
    top = np.concatenate([PO, -PO], axis=-1)
    bottom = np.concatenate([-O, O], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


def normal_projection(V: SplitVector, P: PTensor) -> SplitVector:
    _check_dim(P, V.left)
    return SplitVector.from_stacked(_mv(projection_matrix(P), V.stacked()))


def inverse_split(V: SplitVector, P: PTensor):
    """``(X, Y)`` with ``chi(X) + chi'(Y) = V``."""
    _check_dim(P, V.left)
    O = _resolvent(P)
    PO = P.matrix @ O
    X = _mv(O, V.left) + _mv(PO, V.right)
    Y = _mv(O, V.right - V.left)
    return X, Y


# ---------------------------------------------------------------------------
# the product manifold as a chart of its own


def product_chart(chart: Chart) -> Chart:
    return Chart(chart.domain + chart.domain, chart.periodic + chart.periodic)


def product_metric(path: BlendPath, t: float) -> MetricField:
    """``(1-t) g0`` on the first factor and ``t g1`` on the second."""
    n = path.chart.dim
    if 2 * n > 8:
        raise ContractError(f"product of two {n}-dimensional charts exceeds the chart size limit")
    g0, g1 = path.g0, path.g1

    def func(q):
        q = np.asarray(q, dtype=float)
        out = np.zeros(q.shape[:-1] + (2 * n, 2 * n))
        out[..., :n, :n] = (1.0 - t) * g0(q[..., :n])
        out[..., n:, n:] = t * g1(q[..., n:])
        return out

    return MetricField(product_chart(path.chart), func, f"prod({t:g})")


def product_inner(path: BlendPath, t: float, p, U: SplitVector, V: SplitVector) -> np.ndarray:
    p = path.chart.point(p)
    return (1.0 - t) * inner(path.g0(p), U.left, V.left) + t * inner(path.g1(p), U.right, V.right)


def pullback_metric(path: BlendPath, t: float, p) -> np.ndarray:
    """Induced metric of the diagonal, from the product metric and ``dXi = chi``."""
    p = path.chart.point(p)
    n = path.chart.dim
    J = np.concatenate([np.eye(n), np.eye(n)], axis=0)
    H = product_metric(path, t)(diagonal(p).coords())
    return np.einsum("ai,...ab,bj->...ij", J, H, J)


def second_fundamental_form(path: BlendPath, t: float, p, X, Y, stencil: DerivativeStencil = DEFAULT_STENCIL) -> SplitVector:
    """Direct computation in the product chart.

    ``chi(X)`` and ``chi(Y)`` are extended as coordinate-constant fields, so
    the covariant derivative is a Christoffel contraction of the product
    metric at ``(p, p)``; its normal part is the second fundamental form.
    """
    p = path.chart.point(p)
    q = diagonal(p).coords()
    gamma = _christoffel_unchecked(product_metric(path, t), q, stencil)
    nab = np.einsum("...kij,...i,...j->...k", gamma, chi(X).stacked(), chi(Y).stacked())
    return normal_projection(SplitVector.from_stacked(nab), scaled_p(path, t, p))


def shape_inner(path: BlendPath, t: float, p, X, Y, X2, Y2, stencil: DerivativeStencil = DEFAULT_STENCIL) -> np.ndarray:
    """``<II(X, Y), II(X2, Y2)> = t g1((1 + Pt)^{-1} D(X, Y), D(X2, Y2))``."""
    p = path.chart.point(p)
    Pt = scaled_p(path, t, p)
    D = connection_diff(path, p, stencil)
    return t * inner(path.g1(p), _mv(_resolvent(Pt), D(X, Y)), D(X2, Y2))


def shape_inner_oracle(path: BlendPath, t: float, p, X, Y, X2, Y2, stencil: DerivativeStencil = DEFAULT_STENCIL) -> np.ndarray:
    a = second_fundamental_form(path, t, p, X, Y, stencil)
    b = second_fundamental_form(path, t, p, X2, Y2, stencil)
    return product_inner(path, t, p, a, b)


def gauss_curvature(path: BlendPath, t: float, p, X, Y, stencil: DerivativeStencil = DEFAULT_STENCIL) -> np.ndarray:
    """Gauss equation for the diagonal: ambient product curvature plus shape terms."""
    p = path.chart.point(p)
    R0 = riemann(path.g0, p, X, Y, Y, X, stencil)
    R1 = riemann(path.g1, p, X, Y, Y, X, stencil)
    return (
        (1.0 - t) * R0
        + t * R1
        + shape_inner(path, t, p, X, X, Y, Y, stencil)
        - shape_inner(path, t, p, X, Y, X, Y, stencil)
    )

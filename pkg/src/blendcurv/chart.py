"""Coordinate charts, metric fields and finite-difference tensor calculus.

Every array-valued function here accepts points with arbitrary leading batch
axes, i.e. ``p`` of shape ``(..., n)``; vectors share those batch axes.
Derivative indices are appended *last*, so ``dG[..., a, b, i]`` is
``d_i g_ab``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .errors import DegeneracyError, DomainError, EvaluationError, InversionError

ArrayFn = Callable[[np.ndarray], np.ndarray]
VectorLike = Union[np.ndarray, Sequence[float], ArrayFn]

_DOMAIN_SLACK = 1e-12


@dataclass(frozen=True)
class Chart:
    """A box of coordinates, some of which may be periodic."""

    domain: tuple
    periodic: tuple

    def __post_init__(self):
        domain = tuple((float(lo), float(hi)) for lo, hi in self.domain)
        periodic = tuple(bool(b) for b in self.periodic)
        object.__setattr__(self, "domain", domain)
        object.__setattr__(self, "periodic", periodic)
        if len(domain) != len(periodic):
            raise ValueError("domain and periodic must have equal length")
        if not 2 <= len(domain) <= 8:
            raise ValueError(f"chart dimension must lie in [2, 8], got {len(domain)}")
        for lo, hi in domain:
            if not hi > lo:
                raise ValueError(f"empty coordinate interval [{lo}, {hi}]")

    @property
    def dim(self) -> int:
        return len(self.domain)

    @property
    def lower(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.domain])

    @property
    def upper(self) -> np.ndarray:
        return np.array([hi for _, hi in self.domain])

    def wrap(self, p) -> np.ndarray:
        """Reduce periodic coordinates to their canonical interval (no checks)."""
        p = np.asarray(p, dtype=float)
        mask = np.array(self.periodic)
        if not mask.any():
            return p
        lo, hi = self.lower, self.upper
        wrapped = lo + np.mod(p - lo, hi - lo)
        return np.where(mask, wrapped, p)

    def point(self, coords) -> np.ndarray:
        """Validate ``coords`` against the chart and return canonical coordinates."""
        p = np.asarray(coords, dtype=float)
        if p.shape[-1:] != (self.dim,):
            raise DomainError(f"expected {self.dim} coordinates, got shape {p.shape}")
        if not np.isfinite(p).all():
            raise DomainError("non-finite coordinates")
        p = self.wrap(p)
        mask = ~np.array(self.periodic)
        lo, hi = self.lower, self.upper
        bad = mask & ((p < lo - _DOMAIN_SLACK) | (p > hi + _DOMAIN_SLACK))
        if bad.any():
            raise DomainError(f"point outside chart domain {self.domain}")
        return p

    def contains(self, coords) -> bool:
        try:
            self.point(coords)
        except DomainError:
            return False
        return True

    def sample(self, rng: np.random.Generator, size: int, margin: float = 0.0) -> np.ndarray:
        """Uniform random points, keeping ``margin`` away from non-periodic ends."""
        lo, hi = self.lower.copy(), self.upper.copy()
        mask = ~np.array(self.periodic)
        lo[mask] += margin
        hi[mask] -= margin
        return lo + (hi - lo) * rng.random((size, self.dim))


@dataclass(frozen=True)
class MetricField:
    """A smooth symmetric positive-definite matrix field on a chart.

    ``func`` maps points of shape ``(..., n)`` to matrices ``(..., n, n)``.
    Calling the field does not check the domain (finite-difference stencils
    may step slightly outside); use :func:`metric_at` for validated access.
    """

    chart: Chart
    func: ArrayFn
    label: str = "g"

    def __call__(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        m = np.asarray(self.func(pts), dtype=float)
        n = self.chart.dim
        if m.shape != pts.shape[:-1] + (n, n):
            m = np.broadcast_to(m, pts.shape[:-1] + (n, n))
        if not np.isfinite(m).all():
            raise EvaluationError(f"metric {self.label!r} produced non-finite entries")
        return 0.5 * (m + np.swapaxes(m, -1, -2))

    def check_positive(self, pts) -> float:
        """Smallest eigenvalue over ``pts``; raises if any is not positive."""
        eig = np.linalg.eigvalsh(self(pts))
        lam = float(eig.min())
        if not lam > 0.0:
            raise DegeneracyError(f"metric {self.label!r} is not positive-definite (min eig {lam:.3e})")
        return lam


@dataclass(frozen=True)
class DerivativeStencil:
    """Central-difference settings.

    ``step`` is used for first derivatives and ``second_step`` for second
    derivatives; ``richardson`` adds one extrapolation pass (step and step/2).
    """

    order: int = 4
    step: float = 1e-3
    richardson: bool = True
    second_step: float = 5e-3

    def __post_init__(self):
        if self.order not in (2, 4):
            raise ValueError(f"order must be 2 or 4, got {self.order}")
        if not (self.step > 0 and self.second_step > 0):
            raise ValueError("stencil steps must be positive")

    def scaled(self, factor: float) -> "DerivativeStencil":
        return DerivativeStencil(self.order, self.step * factor, self.richardson, self.second_step * factor)


DEFAULT_STENCIL = DerivativeStencil()


# ---------------------------------------------------------------------------
# finite-difference engine


@functools.lru_cache(maxsize=None)
def central_weights(deriv: int, order: int) -> tuple:
    """Nodes and weights of the central difference for ``d^deriv/dx^deriv``.

    The weights solve the moment (Vandermonde) system on the symmetric node
    set; nodes whose weight vanishes are dropped.
    """
    half = (deriv + 1) // 2 + order // 2 - 1
    nodes = np.arange(-half, half + 1, dtype=float)
    k = np.arange(nodes.size)
    A = nodes[None, :] ** k[:, None]
    rhs = np.zeros(nodes.size)
    rhs[deriv] = math.factorial(deriv)
    w = np.linalg.solve(A, rhs)
    keep = np.abs(w) > 1e-14
    return tuple(nodes[keep]), tuple(w[keep])


@functools.lru_cache(maxsize=None)
def _first_stencil(n: int, order: int):
    nodes, w = central_weights(1, order)
    offsets, weights = [], []
    for i in range(n):
        for x, c in zip(nodes, w):
            off = np.zeros(n)
            off[i] = x
            wt = np.zeros(n)
            wt[i] = c
            offsets.append(off)
            weights.append(wt)
    return np.array(offsets), np.array(weights)


@functools.lru_cache(maxsize=None)
def _second_stencil(n: int, order: int):
    nodes2, w2 = central_weights(2, order)
    nodes1, w1 = central_weights(1, order)
    table: dict = {}

    def add(off, i, j, c):
        key = tuple(off)
        if key not in table:
            table[key] = np.zeros((n, n))
        table[key][i, j] += c

    for i in range(n):
        for x, c in zip(nodes2, w2):
            off = np.zeros(n)
            off[i] = x
            add(off, i, i, c)
        for j in range(i + 1, n):
            for x, cx in zip(nodes1, w1):
                for y, cy in zip(nodes1, w1):
                    off = np.zeros(n)
                    off[i], off[j] = x, y
                    add(off, i, j, cx * cy)
                    add(off, j, i, cx * cy)
    keys = sorted(table)
    return np.array(keys), np.array([table[k] for k in keys])


def _apply(f: ArrayFn, p: np.ndarray, offsets: np.ndarray, weights: np.ndarray, h: float, power: int):
    pts = p[..., None, :] + h * offsets
    vals = np.asarray(f(pts), dtype=float)
    kaxis = p.ndim - 1
    vals = np.moveaxis(vals, kaxis, -1)
    # weights sum to zero; removing a reference value keeps constants exact
    vals = vals - vals[..., :1]
    out = np.tensordot(vals, weights, axes=([-1], [0]))
    return out / h**power


def _richardson(est: Callable[[float], np.ndarray], h: float, order: int, richardson: bool):
    coarse = est(h)
    if not richardson:
        return coarse
    fine = est(0.5 * h)
    return fine + (fine - coarse) / (2.0**order - 1.0)


def gradient(f: ArrayFn, p, stencil: DerivativeStencil = DEFAULT_STENCIL) -> np.ndarray:
    """All first partials of ``f`` at ``p``; output ``(..., *shape, n)``."""
    p = np.asarray(p, dtype=float)
    offsets, weights = _first_stencil(p.shape[-1], stencil.order)
    return _richardson(lambda h: _apply(f, p, offsets, weights, h, 1), stencil.step, stencil.order, stencil.richardson)


def hessian(f: ArrayFn, p, stencil: DerivativeStencil = DEFAULT_STENCIL) -> np.ndarray:
    """All second partials of ``f`` at ``p``; output ``(..., *shape, n, n)``."""
    p = np.asarray(p, dtype=float)
    offsets, weights = _second_stencil(p.shape[-1], stencil.order)
    return _richardson(
        lambda h: _apply(f, p, offsets, weights, h, 2), stencil.second_step, stencil.order, stencil.richardson
    )


def directional_derivative(f: ArrayFn, p, v, stencil: DerivativeStencil = DEFAULT_STENCIL) -> np.ndarray:
    """d/de f(p + e v) at e = 0, for ``v`` broadcasting against ``p``."""
    p = np.asarray(p, dtype=float)
    v = np.broadcast_to(np.asarray(v, dtype=float), p.shape)
    nodes, w = central_weights(1, stencil.order)
    nodes = np.array(nodes)
    w = np.array(w)

    def est(h):
        pts = p[..., None, :] + h * nodes[:, None] * v[..., None, :]
        vals = np.moveaxis(np.asarray(f(pts), dtype=float), p.ndim - 1, -1)
        return (vals - vals[..., :1]) @ w / h

    return _richardson(est, stencil.step, stencil.order, stencil.richardson)


# ---------------------------------------------------------------------------
# tensor calculus


def as_field(v: VectorLike) -> ArrayFn:
    """Wrap a constant vector as a constant field; callables pass through."""
    if callable(v):
        return v
    const = np.asarray(v, dtype=float)
    return lambda pts: np.broadcast_to(const, np.shape(pts)[:-1] + const.shape[-1:])


def metric_at(g: MetricField, p) -> np.ndarray:
    """Validated metric matrix at ``p``."""
    return g(g.chart.point(p))


def _inverse(G: np.ndarray, label: str = "metric") -> np.ndarray:
    cond = np.linalg.cond(G)
    if not np.all(np.isfinite(cond)) or np.any(cond > 1e13):
        raise InversionError(f"{label} matrix is singular (condition number {np.max(cond):.3e})")
    return np.linalg.inv(G)


def metric_derivatives(g: MetricField, p, stencil: DerivativeStencil = DEFAULT_STENCIL, second: bool = False):
    G = g(p)
    dG = gradient(g, p, stencil)
    if not second:
        return G, dG
    return G, dG, hessian(g, p, stencil)


def _first_kind(dG: np.ndarray) -> np.ndarray:
    # Gamma_{l,ij} = 1/2 (d_i g_jl + d_j g_il - d_l g_ij)
    return 0.5 * (
        np.einsum("...jli->...lij", dG) + np.einsum("...ilj->...lij", dG) - np.einsum("...ijl->...lij", dG)
    )


def christoffel_first_kind(g: MetricField, p, stencil: DerivativeStencil = DEFAULT_STENCIL) -> np.ndarray:
    """Lowered symbols ``Gamma_{l,ij}``; needs no matrix inverse."""
    p = g.chart.point(p)
    return _first_kind(gradient(g, p, stencil))


def christoffel(g: MetricField, p, stencil: DerivativeStencil = DEFAULT_STENCIL) -> np.ndarray:
    """Christoffel symbols ``Gamma[..., k, i, j]`` of the Levi-Civita connection."""
    p = g.chart.point(p)
    G, dG = metric_derivatives(g, p, stencil)
    return np.einsum("...kl,...lij->...kij", _inverse(G, g.label), _first_kind(dG))


def _christoffel_unchecked(g: MetricField, p, stencil):
    G, dG = metric_derivatives(g, p, stencil)
    return np.einsum("...kl,...lij->...kij", _inverse(G, g.label), _first_kind(dG))


def covariant_derivative(
    g: MetricField, X: VectorLike, Y: VectorLike, p, stencil: DerivativeStencil = DEFAULT_STENCIL
) -> np.ndarray:
    """``(nabla_X Y)^k = X^i d_i Y^k + Gamma^k_ij X^i Y^j`` at ``p``."""
    p = g.chart.point(p)
    Xf, Yf = as_field(X), as_field(Y)
    Xp = np.asarray(Xf(p), dtype=float)
    Yp = np.asarray(Yf(p), dtype=float)
    gamma = _christoffel_unchecked(g, p, stencil)
    out = np.einsum("...kij,...i,...j->...k", gamma, Xp, Yp)
    if callable(Y):
        out = out + directional_derivative(Yf, p, Xp, stencil)
    return out


def riemann_tensor(g: MetricField, p, stencil: DerivativeStencil = DEFAULT_STENCIL) -> np.ndarray:
    """``R[..., a, b, c, d] = g(R(d_a, d_b) d_c, d_d)`` with
    ``R(X, Y)Z = nabla_X nabla_Y Z - nabla_Y nabla_X Z - nabla_[X,Y] Z``.

    The derivative of the Christoffel symbols is assembled from first and
    second central differences of the metric.
    """
    p = g.chart.point(p)
    G, dG, ddG = metric_derivatives(g, p, stencil, second=True)
    low = _first_kind(dG)
    gamma = np.einsum("...kl,...lij->...kij", _inverse(G, g.label), low)
    # dlow[..., l, b, c, a] = d_a Gamma_{l,bc}
    dlow = 0.5 * (
        np.einsum("...clba->...lbca", ddG) + np.einsum("...blca->...lbca", ddG) - np.einsum("...bcla->...lbca", ddG)
    )
    # R_abcd = d_a G_{d,bc} - d_b G_{d,ac} - G_{m,ad} G^m_bc + G_{m,bd} G^m_ac
    term = np.einsum("...dbca->...abcd", dlow)
    R = term - np.swapaxes(term, -4, -3)
    quad = np.einsum("...mad,...mbc->...abcd", low, gamma)
    R = R - quad + np.swapaxes(quad, -4, -3)
    return R


def riemann(g: MetricField, p, X, Y, Z, W, stencil: DerivativeStencil = DEFAULT_STENCIL) -> np.ndarray:
    """``R(X, Y, Z, W)`` at ``p`` (see :func:`riemann_tensor` for the sign)."""
    R = riemann_tensor(g, p, stencil)
    return np.einsum("...abcd,...a,...b,...c,...d->...", R, *(np.asarray(v, dtype=float) for v in (X, Y, Z, W)))


def inner(G: np.ndarray, u, v) -> np.ndarray:
    return np.einsum("...i,...ij,...j->...", np.asarray(u, dtype=float), G, np.asarray(v, dtype=float))


def wedge_norm_sq(G: np.ndarray, X, Y) -> np.ndarray:
    """``g(X,X) g(Y,Y) - g(X,Y)^2``."""
    return inner(G, X, X) * inner(G, Y, Y) - inner(G, X, Y) ** 2


def sectional(g: MetricField, p, X, Y, stencil: DerivativeStencil = DEFAULT_STENCIL) -> np.ndarray:
    """Sectional curvature of the plane spanned by ``X`` and ``Y``."""
    p = g.chart.point(p)
    G = g(p)
    area = wedge_norm_sq(G, X, Y)
    scale = inner(G, X, X) * inner(G, Y, Y)
    if np.any(area <= 1e-12 * np.maximum(scale, 1e-300)):
        raise DegeneracyError("X and Y are linearly dependent")
    return riemann(g, p, X, Y, Y, X, stencil) / area

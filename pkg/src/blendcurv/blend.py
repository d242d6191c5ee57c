"""Curvature of the affine path ``g(t) = (1-t) g0 + t g1``.

The closed form rests on two pointwise tensors: ``P`` with
``g0(P u, v) = g1(u, v)`` and the connection difference
``D(u, v) = nabla1_u v - nabla0_u v``.  With ``B(M) = g1(M D_XX, D_YY) -
g1(M D_XY, D_XY)`` the blend curvature reads

    R_t = (1-t) R0 + t R1 + t(1-t) B((1 - t(1-P))^{-1}).

Expanding the resolvent gives ``t(1-t)(1-t(1-P))^{-1} = t - sum_{r>=2}
t^r P (1-P)^{r-2}``, hence ``d^r/dt^r R_t |_0 = -r! S_r`` for ``r >= 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chart import (
    DEFAULT_STENCIL,
    DerivativeStencil,
    MetricField,
    _christoffel_unchecked,
    _inverse,
    central_weights,
    inner,
    riemann,
)
from .errors import ContractError, DegeneracyError, InversionError

MAX_POWER = 12
# t-differences amplify spatial rounding noise by step^-r; coarser spatial
# steps trade it for a truncation bias that is smooth in t.
T_ORACLE_STENCIL = DerivativeStencil(step=5e-3, second_step=2e-2)


@dataclass(frozen=True)
class BlendPath:
    """Two metrics on the same chart joined by a straight line."""

    g0: MetricField
    g1: MetricField

    def __post_init__(self):
        if self.g0.chart != self.g1.chart:
            raise ContractError("g0 and g1 must live on the same chart")
        rng = np.random.default_rng(0)
        pts = self.chart.sample(rng, 8, margin=0.0)
        self.g0.check_positive(pts)
        self.g1.check_positive(pts)

    @property
    def chart(self):
        return self.g0.chart

    def field(self, t: float) -> MetricField:
        """The blended metric as a field of its own.

        ``t`` may leave ``[0, 1]`` slightly (for central differences in ``t``)
        as long as the result stays positive-definite where it is evaluated.
        """
        t = float(t)
        g0, g1 = self.g0, self.g1
        return MetricField(self.chart, lambda pts: (1.0 - t) * g0(pts) + t * g1(pts), f"(1-{t:g}){g0.label}+{t:g}{g1.label}")


@dataclass(frozen=True)
class PTensor:
    """``P = G0^{-1} G1`` at ``base`` (arrays may carry batch axes)."""

    base: np.ndarray
    matrix: np.ndarray

    def apply(self, v) -> np.ndarray:
        return np.einsum("...ij,...j->...i", self.matrix, np.asarray(v, dtype=float))

    def scaled(self, factor: float) -> "PTensor":
        return PTensor(self.base, factor * self.matrix)


@dataclass(frozen=True)
class ConnectionDiff:
    """``D[..., k, i, j] = Gamma1^k_ij - Gamma0^k_ij``."""

    base: np.ndarray
    values: np.ndarray

    def __call__(self, X, Y) -> np.ndarray:
        return np.einsum("...kij,...i,...j->...k", self.values, np.asarray(X, float), np.asarray(Y, float))


def _point(path: BlendPath, p) -> np.ndarray:
    return path.chart.point(p)


def p_tensor(path: BlendPath, p) -> PTensor:
    p = _point(path, p)
    G0, G1 = path.g0(p), path.g1(p)
    return PTensor(p, _inverse(G0, path.g0.label) @ G1)


def connection_diff(path: BlendPath, p, stencil: DerivativeStencil = DEFAULT_STENCIL) -> ConnectionDiff:
    p = _point(path, p)
    D = _christoffel_unchecked(path.g1, p, stencil) - _christoffel_unchecked(path.g0, p, stencil)
    return ConnectionDiff(p, D)


def blend_metric(path: BlendPath, t: float, p) -> np.ndarray:
    if not 0.0 <= t <= 1.0:
        raise ContractError(f"t must lie in [0, 1], got {t}")
    p = _point(path, p)
    return (1.0 - t) * path.g0(p) + t * path.g1(p)


def _quadratic_terms(G1, M, Dxx, Dyy, Dxy) -> np.ndarray:
    """``g1(M Dxx, Dyy) - g1(M Dxy, Dxy)``."""
    mv = lambda A, v: np.einsum("...ij,...j->...i", A, v)
    return inner(G1, mv(M, Dxx), Dyy) - inner(G1, mv(M, Dxy), Dxy)


def _contractions(D: ConnectionDiff, X, Y):
    return D(X, X), D(Y, Y), D(X, Y)


def blend_curvature(path: BlendPath, t: float, p, X, Y, stencil: DerivativeStencil = DEFAULT_STENCIL) -> np.ndarray:
    """``R_t(X, Y, Y, X)`` from data of ``g0`` and ``g1`` only."""
    if not 0.0 < t < 1.0:
        raise ContractError(f"closed form needs 0 < t < 1, got {t}")
    p = _point(path, p)
    n = path.chart.dim
    P = p_tensor(path, p).matrix
    Dxx, Dyy, Dxy = _contractions(connection_diff(path, p, stencil), X, Y)
    A = np.eye(n) - t * (np.eye(n) - P)
    eig = np.linalg.eigvals(A)
    if np.min(np.abs(eig)) < 1e-12:
        raise InversionError(f"1 - t(1-P) is singular (eigenvalue {eig[np.argmin(np.abs(eig))]:.3e})")
    G1 = path.g1(p)
    solve = lambda v: np.linalg.solve(A, v[..., None])[..., 0]
    quad = inner(G1, solve(Dxx), Dyy) - inner(G1, solve(Dxy), Dxy)
    R0 = riemann(path.g0, p, X, Y, Y, X, stencil)
    R1 = riemann(path.g1, p, X, Y, Y, X, stencil)
    return (1.0 - t) * R0 + t * R1 + t * (1.0 - t) * quad


def blend_curvature_oracle(path: BlendPath, t: float, p, X, Y, stencil: DerivativeStencil = DEFAULT_STENCIL) -> np.ndarray:
    """Brute force: differentiate the summed metric directly."""
    return riemann(path.field(t), _point(path, p), X, Y, Y, X, stencil)


def _check_power(r: int) -> None:
    if r < 2:
        raise ContractError(f"r must be >= 2, got {r}")
    if r > MAX_POWER:
        raise ContractError(f"r must be <= {MAX_POWER}, got {r}")


def _power_weight(P: np.ndarray, r: int) -> np.ndarray:
    _check_power(r)
    n = P.shape[-1]
    comp = np.eye(n) - P
    M = P.copy()
    for _ in range(r - 2):
        M = M @ comp
    return M


def s_p_r(path: BlendPath, p, X, Y, r: int, stencil: DerivativeStencil = DEFAULT_STENCIL) -> np.ndarray:
    """``g1(P(1-P)^{r-2} D_XX, D_YY) - g1(P(1-P)^{r-2} D_XY, D_XY)``."""
    _check_power(r)
    p = _point(path, p)
    P = p_tensor(path, p).matrix
    M = _power_weight(P, r)
    Dxx, Dyy, Dxy = _contractions(connection_diff(path, p, stencil), X, Y)
    return _quadratic_terms(path.g1(p), M, Dxx, Dyy, Dxy)


def t_derivative_analytic(path: BlendPath, p, X, Y, r: int, stencil: DerivativeStencil = DEFAULT_STENCIL) -> np.ndarray:
    """``d^r/dt^r R_t(X, Y, Y, X)`` at ``t = 0``."""
    if r < 1:
        raise ContractError(f"r must be >= 1, got {r}")
    if r >= 2:
        return -math.factorial(r) * s_p_r(path, p, X, Y, r, stencil)
    p = _point(path, p)
    Dxx, Dyy, Dxy = _contractions(connection_diff(path, p, stencil), X, Y)
    n = path.chart.dim
    quad = _quadratic_terms(path.g1(p), np.eye(n), Dxx, Dyy, Dxy)
    return riemann(path.g1, p, X, Y, Y, X, stencil) - riemann(path.g0, p, X, Y, Y, X, stencil) + quad


def t_derivative_oracle(
    path: BlendPath,
    p,
    X,
    Y,
    r: int,
    step: float = 0.1,
    order: int = 6,
    stencil: DerivativeStencil = T_ORACLE_STENCIL,
) -> np.ndarray:
    """Central difference in ``t`` of :func:`blend_curvature_oracle` at ``t = 0``.

    The step shrinks so that every node stays within half of
    :func:`series_radius`, which keeps ``g(t)`` positive-definite for ``t < 0``.
    """
    nodes, weights = central_weights(r, order)
    p = _point(path, p)
    pts = p.reshape(-1, p.shape[-1])
    radius = min(series_radius(path, q) for q in pts)
    step = min(step, 0.5 * radius / max(abs(x) for x in nodes))
    total = 0.0
    for x, w in zip(nodes, weights):
        total = total + w * riemann(path.field(x * step), p, X, Y, Y, X, stencil)
    return total / step**r


def series_radius(path: BlendPath, p) -> float:
    """``1 / rho(1 - P)``: the geometric series in ``t(1-P)`` converges below it."""
    p = _point(path, p)
    G0, G1 = path.g0(p), path.g1(p)
    # P is similar to the symmetric G0^{-1/2} G1 G0^{-1/2}; its spectrum is real.
    w, V = np.linalg.eigh(G0)
    if w.min() <= 0:
        raise DegeneracyError("g0 is not positive-definite")
    half = V @ np.diag(w**-0.5) @ V.T
    lam = np.linalg.eigvalsh(half @ G1 @ half)
    rho = float(np.max(np.abs(1.0 - lam)))
    if rho < 1e-14:
        return math.inf
    return 1.0 / rho

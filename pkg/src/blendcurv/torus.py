"""Immersed tori, periodic quadrature and averaged variation integrals."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .blend import BlendPath, s_p_r, t_derivative_analytic
from .chart import (
    DEFAULT_STENCIL,
    Chart,
    DerivativeStencil,
    MetricField,
    _christoffel_unchecked,
    gradient,
    hessian,
    inner,
    riemann,
    wedge_norm_sq,
)
from .errors import ContractError, DegeneracyError, EvaluationError

TWO_PI = 2.0 * math.pi
TORUS_CHART = Chart(((0.0, TWO_PI), (0.0, TWO_PI)), (True, True))


@dataclass(frozen=True)
class TorusImmersion:
    """A doubly ``2 pi``-periodic map ``(u, v) -> chart point``.

    ``map`` takes an array ``(..., 2)`` of parameters.  Its frame
    ``X = d map/du``, ``Y = d map/dv`` is differentiated numerically unless
    ``jacobian`` (returning ``(..., n, 2)``) and ``second_derivatives``
    (returning ``(..., n, 2, 2)``) are supplied.
    """

    chart: Chart
    map: Callable[[np.ndarray], np.ndarray]
    label: str = "torus"
    stencil: DerivativeStencil = DEFAULT_STENCIL
    jacobian: Optional[Callable] = None
    second_derivatives: Optional[Callable] = None

    def __post_init__(self):
        rng = np.random.default_rng(3)
        uv = rng.random((16, 2)) * TWO_PI
        base = self(uv)
        if base.shape != (16, self.chart.dim):
            raise ContractError(f"torus map must return {self.chart.dim} coordinates")
        for shift in ((TWO_PI, 0.0), (0.0, TWO_PI)):
            moved = self(uv + np.array(shift))
            if np.abs(self._chart_delta(moved, base)).max() > 1e-9:
                raise ContractError(f"torus map {self.label!r} is not 2 pi periodic in both parameters")
        X, Y = self.frame(uv)
        self.chart.point(base)
        if np.any(np.abs(wedge_norm_sq(np.eye(self.chart.dim), X, Y)) < 1e-12):
            raise DegeneracyError("torus frame is degenerate")

    def _chart_delta(self, a, b) -> np.ndarray:
        d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
        period = self.chart.upper - self.chart.lower
        per = np.array(self.chart.periodic)
        wrapped = d - period * np.round(d / period)
        return np.where(per, wrapped, d)

    def __call__(self, uv) -> np.ndarray:
        return np.asarray(self.map(np.asarray(uv, dtype=float)), dtype=float)

    def frame(self, uv):
        if self.jacobian is not None:
            J = np.asarray(self.jacobian(np.asarray(uv, dtype=float)), dtype=float)
        else:
            J = gradient(self, uv, self.stencil)  # (..., n, 2)
        return J[..., 0], J[..., 1]

    def second(self, uv):
        """``d^2 map/du^2``, ``d^2 map/du dv``, ``d^2 map/dv^2``."""
        if self.second_derivatives is not None:
            H = np.asarray(self.second_derivatives(np.asarray(uv, dtype=float)), dtype=float)
        else:
            H = hessian(self, uv, self.stencil)  # (..., n, 2, 2)
        return H[..., 0, 0], H[..., 0, 1], H[..., 1, 1]


def grid(n: int) -> np.ndarray:
    """Uniform ``n x n`` grid of ``(u, v)`` parameters, shape ``(n, n, 2)``."""
    s = TWO_PI * np.arange(n) / n
    U, V = np.meshgrid(s, s, indexing="ij")
    return np.stack([U, V], axis=-1)


class Quadrature(NamedTuple):
    value: float
    error: float


def integrate_torus(f: Callable[[np.ndarray], np.ndarray], grid_n: int) -> Quadrature:
    """Periodic trapezoid rule over ``[0, 2 pi)^2``.

    ``f`` receives an array of ``(u, v)`` pairs.  The rule is evaluated on
    ``grid_n`` and ``2 grid_n`` points per axis (the coarse grid is a subset
    of the fine one); the difference is the error estimate of the coarse value.
    """
    if grid_n < 8:
        raise ContractError(f"grid_n must be >= 8, got {grid_n}")
    vals = np.asarray(f(grid(2 * grid_n)), dtype=float)
    if not np.isfinite(vals).all():
        raise EvaluationError("integrand produced non-finite values")
    area = TWO_PI**2
    fine = float(vals.mean() * area)
    coarse = float(vals[::2, ::2].mean() * area)
    return Quadrature(coarse, abs(fine - coarse))


def _stencil_error(f_of_stencil: Callable, stencil: DerivativeStencil, probes: int = 16) -> float:
    """Area times the largest change of the integrand when all steps double."""
    rng = np.random.default_rng(17)
    uv = rng.random((probes, 2)) * TWO_PI
    a = np.asarray(f_of_stencil(stencil)(uv), dtype=float)
    b = np.asarray(f_of_stencil(stencil.scaled(2.0))(uv), dtype=float)
    return float(TWO_PI**2 * np.abs(a - b).max())


def rounding_floor(stencil: DerivativeStencil) -> float:
    """Area times ``eps / h^2`` for the smallest second-derivative step.

    Doubling the steps does not expose rounding that is already present in
    the metric values (``cos(pi/2) != 0``), so this floor is always added.
    """
    h = stencil.second_step / (2.0 if stencil.richardson else 1.0)
    return float(TWO_PI**2 * np.finfo(float).eps / h**2)


def _integrate_with_error(f_of_stencil: Callable, grid_n: int, stencil: DerivativeStencil) -> Quadrature:
    q = integrate_torus(f_of_stencil(stencil), grid_n)
    return Quadrature(q.value, q.error + _stencil_error(f_of_stencil, stencil) + rounding_floor(stencil))


def _verdict(value: float, error: float) -> str:
    if abs(value) <= 3.0 * error:
        return "zero"
    return "positive" if value > 0 else "negative"


# ---------------------------------------------------------------------------
# hypotheses on the torus


def torus_residuals(g0: MetricField, T: TorusImmersion, grid_n: int = 16, stencil: DerivativeStencil = DEFAULT_STENCIL) -> dict:
    """Largest g0-norms of ``nabla_X X``, ``nabla_X Y``, ``nabla_Y Y`` and of ``R0(X,Y,Y,X)``."""
    uv = grid(grid_n).reshape(-1, 2)
    p = T(uv)
    X, Y = T.frame(uv)
    xx, xy, yy = T.second(uv)
    gamma = _christoffel_unchecked(g0, p, stencil)
    G = g0(p)
    out = {}
    for name, d2, a, b in (("XX", xx, X, X), ("XY", xy, X, Y), ("YY", yy, Y, Y)):
        nab = d2 + np.einsum("...kij,...i,...j->...k", gamma, a, b)
        out[name] = float(np.sqrt(np.abs(inner(G, nab, nab))).max())
    out["R0"] = float(np.abs(riemann(g0, p, X, Y, Y, X, stencil)).max())
    return out


def check_totally_geodesic_flat(g0: MetricField, T: TorusImmersion, stencil: DerivativeStencil = DEFAULT_STENCIL, grid_n: int = 16) -> float:
    return max(torus_residuals(g0, T, grid_n, stencil).values())


def induced_metric(g: MetricField, T: TorusImmersion) -> MetricField:
    """Pullback of ``g`` to the ``(u, v)`` parameter torus."""

    def func(uv):
        X, Y = T.frame(uv)
        G = g(T(uv))
        J = np.stack([X, Y], axis=-1)
        return np.swapaxes(J, -1, -2) @ G @ J

    return MetricField(TORUS_CHART, func, f"{g.label}|{T.label}")


def gauss_bonnet_check(g: MetricField, T: TorusImmersion, grid_n: int = 32, stencil: DerivativeStencil = DEFAULT_STENCIL) -> float:
    """``integral of K dA`` of the induced metric (zero for any torus)."""
    h = induced_metric(g, T)
    e1, e2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])

    def integrand(uv):
        H = h(uv)
        det = np.linalg.det(H)
        if np.any(det <= 0):
            raise DegeneracyError("induced metric is degenerate")
        return riemann(h, uv, e1, e2, e2, e1, stencil) / np.sqrt(det)

    return integrate_torus(integrand, grid_n).value


# ---------------------------------------------------------------------------
# averaged variations


class FirstOrder(NamedTuple):
    lhs: float
    rhs: float
    error: float


def _require_hypothesis(g0, T, stencil, tol=1e-5):
    res = check_totally_geodesic_flat(g0, T, stencil)
    if res > tol:
        raise ContractError(f"torus is not totally geodesic and flat (residual {res:.2e})")


def _first_order_integrands(path: BlendPath, T: TorusImmersion):
    def lhs(stencil):
        def f(uv):
            p = T(uv)
            X, Y = T.frame(uv)
            area = np.sqrt(wedge_norm_sq(path.g1(p), X, Y))
            return t_derivative_analytic(path, p, X, Y, 1, stencil) / area

        return f

    def rhs(stencil):
        def f(uv):
            p = T(uv)
            X, Y = T.frame(uv)
            xx, xy, yy = T.second(uv)
            G1 = path.g1(p)
            gamma = _christoffel_unchecked(path.g1, p, stencil)
            nab = lambda d2, a, b: d2 + np.einsum("...kij,...i,...j->...k", gamma, a, b)
            B = np.stack([X, Y], axis=-2)  # (..., 2, n)
            gram = B @ G1 @ np.swapaxes(B, -1, -2)

            def top(v):
                coef = np.linalg.solve(gram, (B @ G1 @ v[..., None]))[..., 0]
                return np.einsum("...a,...an->...n", coef, B)

            Txx, Txy, Tyy = top(nab(xx, X, X)), top(nab(xy, X, Y)), top(nab(yy, Y, Y))
            area = np.sqrt(wedge_norm_sq(G1, X, Y))
            return (inner(G1, Txx, Tyy) - inner(G1, Txy, Txy)) / area

        return f

    return lhs, rhs


def first_order_average(
    path: BlendPath,
    T: TorusImmersion,
    grid_n: int = 32,
    stencil: DerivativeStencil = DEFAULT_STENCIL,
    require_hypothesis: bool = True,
) -> FirstOrder:
    """Both sides of the first-order identity on a totally geodesic flat torus.

    Integrals are taken against the ``g1`` area element, under which the
    intrinsic curvature of the torus integrates to zero.
    """
    if require_hypothesis:
        _require_hypothesis(path.g0, T, stencil)
    lhs_f, rhs_f = _first_order_integrands(path, T)
    a = _integrate_with_error(lhs_f, grid_n, stencil)
    b = _integrate_with_error(rhs_f, grid_n, stencil)
    return FirstOrder(a.value, b.value, a.error + b.error)


@dataclass(frozen=True)
class VariationEntry:
    r: int
    integral: float
    error: float
    verdict: str
    s_integral: float
    s_error: float
    s_verdict: str
    weighted: float
    weighted_error: float

    @property
    def equivalent(self) -> bool:
        """Opposite signs (or both zero) for the derivative and ``S_r`` integrals."""
        signs = {"positive": 1, "negative": -1, "zero": 0}
        return signs[self.verdict] == -signs[self.s_verdict]


def r_order_average(
    path: BlendPath, T: TorusImmersion, r: int, grid_n: int = 32, stencil: DerivativeStencil = DEFAULT_STENCIL
) -> VariationEntry:
    """Integrals of ``d^r/dt^r R_t(X,Y,Y,X)`` at ``t = 0`` and of ``S_r`` over the torus.

    ``weighted`` divides the derivative by ``|X ^ Y|_1^2`` before integrating.
    """
    if r < 2:
        raise ContractError(f"r must be >= 2, got {r}")

    def deriv(stencil):
        return lambda uv: t_derivative_analytic(path, T(uv), *T.frame(uv), r, stencil)

    def spr(stencil):
        return lambda uv: s_p_r(path, T(uv), *T.frame(uv), r, stencil)

    def weighted(stencil):
        def f(uv):
            p = T(uv)
            X, Y = T.frame(uv)
            return t_derivative_analytic(path, p, X, Y, r, stencil) / wedge_norm_sq(path.g1(p), X, Y)

        return f

    d = _integrate_with_error(deriv, grid_n, stencil)
    s = _integrate_with_error(spr, grid_n, stencil)
    w = _integrate_with_error(weighted, grid_n, stencil)
    return VariationEntry(r, d.value, d.error, _verdict(*d), s.value, s.error, _verdict(*s), w.value, w.error)


@dataclass(frozen=True)
class VariationReport:
    r_values: tuple
    entries: tuple
    geodesic_residual: float
    first_order: Optional[FirstOrder]
    first_integral: float
    first_integral_error: float
    extras: dict = field(default_factory=dict)

    @property
    def integrals(self) -> tuple:
        return tuple(e.integral for e in self.entries)

    @property
    def verdicts(self) -> tuple:
        return tuple(e.verdict for e in self.entries)

    @property
    def quadrature_error(self) -> float:
        return max((e.error for e in self.entries), default=0.0)

    @property
    def first_variation_vanishes(self) -> bool:
        return abs(self.first_integral) <= 3.0 * self.first_integral_error

    @property
    def equivalence_holds(self) -> bool:
        return all(e.equivalent for e in self.entries)


def theorem_a_verdict(
    path: BlendPath,
    T: TorusImmersion,
    r_max: int = 4,
    grid_n: int = 32,
    stencil: DerivativeStencil = DEFAULT_STENCIL,
    extras: Optional[dict] = None,
) -> VariationReport:
    """Full report: hypothesis residuals, first-order identity and ``r = 2..r_max``.

    Hypotheses are measured, not enforced; the first-order identity is only
    evaluated when the torus is totally geodesic and flat.
    """
    if r_max < 2:
        raise ContractError(f"r_max must be >= 2, got {r_max}")
    residual = check_totally_geodesic_flat(path.g0, T, stencil)
    first = first_order_average(path, T, grid_n, stencil, require_hypothesis=False) if residual <= 1e-5 else None
    r1 = _integrate_with_error(
        lambda st: (lambda uv: t_derivative_analytic(path, T(uv), *T.frame(uv), 1, st)), grid_n, stencil
    )
    entries = tuple(r_order_average(path, T, r, grid_n, stencil) for r in range(2, r_max + 1))
    return VariationReport(
        tuple(range(2, r_max + 1)), entries, residual, first, r1.value, r1.error, dict(extras or {})
    )

"""Classical deformations of a metric and their connection formulas.

Conventions: for a foliation with vertical projector ``V`` the metric that
scales the vertical block by ``lam`` is ``G + (lam - 1) V^T G V``.  A group
action is described by its Killing fields ``K`` (rows, ``(k, n)``), structure
constants ``c[a, b, d]`` with ``[K_a, K_b] = sum_d c[a, b, d] K_d`` and a
bi-invariant inner product ``Q`` on the Lie algebra.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .blend import BlendPath, connection_diff, s_p_r
from .chart import (
    DEFAULT_STENCIL,
    DerivativeStencil,
    MetricField,
    christoffel_first_kind,
    directional_derivative,
    gradient,
    inner,
)
from .errors import ContractError, DegeneracyError, EvaluationError, InversionError
from .foliation import (
    FoliationStructure,
    horizontal_part,
    is_basic,
    leaf_shape,
    oneill_A_dual,
    vertical_part,
)

ScalarFn = Callable[[np.ndarray], np.ndarray]


def _mv(A, v):
    return np.einsum("...ij,...j->...i", A, np.asarray(v, dtype=float))


def _scalar(h: ScalarFn, pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    return np.broadcast_to(np.asarray(h(pts), dtype=float), pts.shape[:-1])


def _with_metric(F: FoliationStructure, g0: MetricField) -> FoliationStructure:
    if F.metric is g0:
        return F
    if g0.chart != F.chart:
        raise ContractError("metric and foliation live on different charts")
    return dataclasses.replace(F, metric=g0, check_samples=0)


def _vertical_rescale(F: FoliationStructure, g0: MetricField, lam: ScalarFn, label: str) -> MetricField:
    F = _with_metric(F, g0)

    def func(pts):
        G = g0(pts)
        V = F.vertical_projector(pts)
        factor = np.asarray(lam(pts), dtype=float)[..., None, None] - 1.0
        return G + factor * (np.swapaxes(V, -1, -2) @ G @ V)

    return MetricField(g0.chart, func, label)


# ---------------------------------------------------------------------------
# conformal change


def conformal_metric(g0: MetricField, h: ScalarFn) -> MetricField:
    return MetricField(g0.chart, lambda pts: np.exp(2.0 * _scalar(h, pts))[..., None, None] * g0(pts), f"e^2h {g0.label}")


def _orthonormal(G, X, Y, tol=1e-8):
    ok = (
        abs(inner(G, X, X) - 1.0) <= tol
        and abs(inner(G, Y, Y) - 1.0) <= tol
        and abs(inner(G, X, Y)) <= tol
    )
    if not ok:
        raise ContractError("X and Y must be g0-orthonormal")


def conformal_variation_integrand(
    g0: MetricField, h: ScalarFn, p, X, Y, stencil: DerivativeStencil = DEFAULT_STENCIL, check: bool = True
) -> float:
    """``g0(D_XX, D_YY) - |D_XY|^2`` for ``g1 = e^{2h} g0``.

    The closed form ``D(U, W) = dh(U) W + dh(W) U - g0(U, W) grad h`` reduces
    this to ``|grad h^perp|^2 - 2 |grad h^top|^2`` relative to span{X, Y}.
    With ``check`` the value is compared against the numerically
    differentiated connection difference.
    """
    p = g0.chart.point(p)
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    G = g0(p)
    _orthonormal(G, X, Y)
    grad = np.linalg.solve(G, gradient(lambda q: _scalar(h, q), p, stencil))
    top = inner(G, grad, X) * X + inner(G, grad, Y) * Y
    perp = grad - top
    value = float(inner(G, perp, perp) - 2.0 * inner(G, top, top))
    if check:
        D = connection_diff(BlendPath(g0, conformal_metric(g0, h)), p, stencil)
        Dxx, Dyy, Dxy = D(X, X), D(Y, Y), D(X, Y)
        direct = float(inner(G, Dxx, Dyy) - inner(G, Dxy, Dxy))
        if abs(direct - value) > 1e-6 * max(1.0, abs(value)):
            raise EvaluationError(f"conformal connection check failed: {direct} vs {value}")
    return value


# ---------------------------------------------------------------------------
# canonical variation and general vertical warping


def canonical_variation_metric(F: FoliationStructure, g0: MetricField, s: float) -> MetricField:
    """``g0`` on the horizontal block, ``e^{2s} g0`` on the vertical block."""
    if s == 0:
        return g0
    lam = math.exp(2.0 * s)
    return _vertical_rescale(F, g0, lambda pts: np.full(np.shape(pts)[:-1], lam), f"canon({s:g})")


def _split_samples(F, p, count, rng):
    """Random horizontal and vertical vectors at ``p``."""
    n = F.chart.dim
    raw = rng.normal(size=(count, n))
    hor = np.array([horizontal_part(F, v, p) for v in raw])
    ver = np.array([vertical_part(F, v, p) for v in raw])
    return hor, ver


def _norm0(G, v) -> float:
    return float(np.sqrt(max(inner(G, v, v), 0.0)))


def canonical_connection_check(
    F: FoliationStructure, g0: MetricField, s: float, p, stencil: DerivativeStencil = DEFAULT_STENCIL, samples: int = 3
) -> float:
    """Largest g0-norm residual of the four block identities for ``D = nabla^s - nabla^0``.

    The identities are ``D(H, H') = 0``, ``D(H, V) = D(V, H) = (1 - e^{2s}) A*_H V``
    and ``D(U, V) = (e^{2s} - 1) sigma(U, V)``.
    """
    F = _with_metric(F, g0)
    p = F.chart.point(p)
    G = g0(p)
    D = connection_diff(BlendPath(g0, canonical_variation_metric(F, g0, s)), p, stencil)
    rng = np.random.default_rng(1234)
    hor, ver = _split_samples(F, p, samples, rng)
    c = 1.0 - math.exp(2.0 * s)
    worst = 0.0
    for i in range(samples):
        H, H2 = hor[i], hor[(i + 1) % samples]
        U, V = ver[i], ver[(i + 1) % samples]
        dual = oneill_A_dual(F, p, H, V, stencil)
        worst = max(
            worst,
            _norm0(G, D(H, H2)),
            _norm0(G, D(H, V) - c * dual),
            _norm0(G, D(V, H) - c * dual),
            _norm0(G, D(U, V) + c * leaf_shape(F, p, U, V, stencil)),
        )
    return worst


def warped_metric(F: FoliationStructure, g0: MetricField, f: ScalarFn) -> MetricField:
    """``g0`` on the horizontal block, ``e^{2f} g0`` on the vertical block."""
    F = _with_metric(F, g0)
    if not is_basic(F, f):
        raise ContractError("warping function must be constant along the leaves")
    return _vertical_rescale(F, g0, lambda pts: np.exp(2.0 * _scalar(f, pts)), "warp")


def warping_connection_check(
    F: FoliationStructure, g0: MetricField, f: ScalarFn, p, stencil: DerivativeStencil = DEFAULT_STENCIL, samples: int = 3
) -> float:
    """Largest residual of the block formulas for ``D = nabla^f - nabla^0``.

    ``D(H, H') = 0``, ``D(H, V) = D(V, H) = (1 - e^{2f}) A*_H V + df(H) V`` and
    ``D(U, V) = (e^{2f} - 1) sigma(U, V) - e^{2f} g0(U, V) grad f``.
    """
    F = _with_metric(F, g0)
    p = F.chart.point(p)
    G = g0(p)
    D = connection_diff(BlendPath(g0, warped_metric(F, g0, f)), p, stencil)
    fs = lambda q: _scalar(f, q)
    e2f = math.exp(2.0 * float(fs(p)))
    df = gradient(fs, p, stencil)
    grad = np.linalg.solve(G, df)
    rng = np.random.default_rng(4321)
    hor, ver = _split_samples(F, p, samples, rng)
    worst = 0.0
    for i in range(samples):
        H, H2 = hor[i], hor[(i + 1) % samples]
        U, V = ver[i], ver[(i + 1) % samples]
        mixed = (1.0 - e2f) * oneill_A_dual(F, p, H, V, stencil) + float(df @ H) * V
        leaf = (e2f - 1.0) * leaf_shape(F, p, U, V, stencil) - e2f * inner(G, U, V) * grad
        worst = max(
            worst,
            _norm0(G, D(H, H2)),
            _norm0(G, D(H, V) - mixed),
            _norm0(G, D(V, H) - mixed),
            _norm0(G, D(U, V) - leaf),
        )
    return worst


def warping_variation_integrand(
    F: FoliationStructure,
    g0: MetricField,
    f: ScalarFn,
    p,
    X,
    Y,
    r: int,
    stencil: DerivativeStencil = DEFAULT_STENCIL,
    check: bool = True,
) -> float:
    """``e^{4f} (1 - e^{2f})^{r-2} df(X)^2`` for horizontal unit ``X``, vertical unit ``Y``.

    On frames with vanishing ``nabla^0`` derivatives this equals ``-S_r`` of
    the path ``g0 -> g_f`` whenever ``r > 2`` or ``A*_X Y = 0``; ``check``
    compares the two and raises on disagreement.
    """
    if r < 2:
        raise ContractError(f"r must be >= 2, got {r}")
    F = _with_metric(F, g0)
    p = F.chart.point(p)
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    G = g0(p)
    if abs(inner(G, X, X) - 1.0) > 1e-8 or abs(inner(G, Y, Y) - 1.0) > 1e-8:
        raise ContractError("X and Y must be g0-unit vectors")
    if _norm0(G, vertical_part(F, X, p)) > 1e-8:
        raise ContractError("X must be horizontal")
    if _norm0(G, horizontal_part(F, Y, p)) > 1e-8:
        raise ContractError("Y must be vertical")
    fs = lambda q: _scalar(f, q)
    fp = float(fs(p))
    dfX = float(directional_derivative(fs, p, X, stencil))
    value = math.exp(4.0 * fp) * (1.0 - math.exp(2.0 * fp)) ** (r - 2) * dfX**2
    if check:
        other = float(s_p_r(BlendPath(g0, warped_metric(F, g0, f)), p, X, Y, r, stencil))
        if abs(value + other) > 1e-5 * max(1.0, abs(value)):
            raise EvaluationError(f"warping integrand {value} disagrees with -S_r = {-other}")
    return value


# ---------------------------------------------------------------------------
# isometric group actions and Cheeger deformations


def _lie_derivative(g: MetricField, field: Callable, p, stencil) -> np.ndarray:
    """``(L_K g)_ij = K^m d_m g_ij + g_mj d_i K^m + g_im d_j K^m``."""
    G = g(p)
    dG = gradient(g, p, stencil)
    K = field(p)
    dK = gradient(field, p, stencil)  # dK[..., m, i] = d_i K^m
    term = np.einsum("...ijm,...m->...ij", dG, K)
    mixed = np.einsum("...mj,...mi->...ij", G, dK)
    return term + mixed + np.swapaxes(mixed, -1, -2)


@dataclass(frozen=True)
class GroupAction:
    """Killing fields of ``foliation.metric`` (the foliation's vertical frame)
    together with the structure constants of their Lie algebra and ``Q``."""

    foliation: FoliationStructure
    structure: np.ndarray
    Q: np.ndarray
    check_samples: int = 6

    def __post_init__(self):
        c = np.asarray(self.structure, dtype=float)
        Q = np.asarray(self.Q, dtype=float)
        object.__setattr__(self, "structure", c)
        object.__setattr__(self, "Q", Q)
        k = self.rank
        if c.shape != (k, k, k):
            raise ContractError(f"structure constants must have shape {(k, k, k)}, got {c.shape}")
        if Q.shape != (k, k) or not np.allclose(Q, Q.T, atol=1e-14):
            raise ContractError("Q must be a symmetric k x k matrix")
        if np.linalg.eigvalsh(Q).min() <= 0:
            raise DegeneracyError("Q is not positive-definite")
        # ad-invariance: Q([a, b], d) + Q(b, [a, d]) = 0
        ad = np.einsum("abe,ed->abd", c, Q) + np.einsum("ade,be->abd", c, Q)
        if np.abs(ad).max() > 1e-10 * max(1.0, np.abs(Q).max()):
            raise ContractError("Q is not ad-invariant for the given structure constants")
        if self.check_samples:
            pts = self.foliation.chart.sample(np.random.default_rng(5), self.check_samples, margin=0.05)
            self.check_killing(pts)
            self.check_brackets(pts)

    @property
    def rank(self) -> int:
        return self.foliation.rank

    @property
    def metric(self) -> MetricField:
        return self.foliation.metric

    def killing(self, pts) -> np.ndarray:
        return self.foliation.frame(pts)

    def _field(self, a: int) -> Callable:
        return lambda q: np.asarray(self.foliation.vertical_frame(q))[..., a, :]

    def check_killing(self, pts, tol: float = 1e-6, stencil: DerivativeStencil = DEFAULT_STENCIL) -> float:
        worst = 0.0
        for a in range(self.rank):
            L = _lie_derivative(self.metric, self._field(a), pts, stencil)
            worst = max(worst, float(np.abs(L).max()))
        if worst > tol:
            raise ContractError(f"vertical frame is not Killing (Lie derivative {worst:.2e})")
        return worst

    def check_brackets(self, pts, tol: float = 1e-6, stencil: DerivativeStencil = DEFAULT_STENCIL) -> float:
        K = self.killing(pts)
        worst = 0.0
        for a in range(self.rank):
            for b in range(a + 1, self.rank):
                fa, fb = self._field(a), self._field(b)
                br = directional_derivative(fb, pts, fa(pts), stencil) - directional_derivative(fa, pts, fb(pts), stencil)
                expect = np.einsum("d,...dn->...n", self.structure[a, b], K)
                worst = max(worst, float(np.abs(br - expect).max()))
        if worst > tol:
            raise ContractError(f"Killing brackets do not match the structure constants ({worst:.2e})")
        return worst

    def orbit_gram(self, pts) -> np.ndarray:
        """``G_V[a, b] = g0(K_a, K_b)``."""
        K = self.killing(pts)
        return K @ self.metric(pts) @ np.swapaxes(K, -1, -2)

    def coefficients(self, pts, X) -> np.ndarray:
        """Killing-frame coordinates of the vertical part of ``X``."""
        K = self.killing(pts)
        G = self.metric(pts)
        return np.linalg.solve(K @ G @ np.swapaxes(K, -1, -2), _mv(K @ G, X)[..., None])[..., 0]


@dataclass(frozen=True)
class OrbitTensor:
    base: np.ndarray
    matrix: np.ndarray


def orbit_tensor(action: GroupAction, p) -> OrbitTensor:
    """``O`` with ``Q(O u, v) = g0(u.K, v.K)``, i.e. ``O = Q^{-1} G_V``."""
    p = action.foliation.chart.point(p)
    return OrbitTensor(p, np.linalg.solve(action.Q, action.orbit_gram(p)))


def _check_action_metric(action: GroupAction, g0: MetricField) -> None:
    if g0 is not action.metric and g0.chart != action.metric.chart:
        raise ContractError("metric and action live on different charts")


def cheeger_metric(action: GroupAction, g0: MetricField, s: float) -> MetricField:
    """``g_s(X, Y) = g0(P_s X, Y)`` with ``P_s = 1`` on horizontal vectors and
    ``(1 + s O)^{-1}`` on vertical ones."""
    if s < 0:
        raise ContractError(f"Cheeger parameter must be >= 0, got {s}")
    _check_action_metric(action, g0)
    if s == 0:
        return g0
    Q = action.Q
    frame = action.foliation.vertical_frame

    def func(pts):
        G = g0(pts)
        K = np.asarray(frame(pts), dtype=float)
        KG = K @ G
        GV = KG @ np.swapaxes(K, -1, -2)
        C = np.linalg.solve(GV, KG)  # Killing coordinates of the vertical part
        H = np.eye(G.shape[-1]) - np.swapaxes(K, -1, -2) @ C
        # vertical block in Killing coordinates: Q (Q + s G_V)^{-1} G_V
        W = Q @ np.linalg.solve(Q + s * GV, GV)
        W = 0.5 * (W + np.swapaxes(W, -1, -2))
        return np.swapaxes(H, -1, -2) @ G @ H + np.swapaxes(C, -1, -2) @ W @ C

    return MetricField(g0.chart, func, f"cheeger({s:g})")


def _coeff_field(action: GroupAction, X, weighted: bool) -> Callable:
    """Killing coordinates of ``X^V`` (or of ``O X^V``) as a function of the point."""
    X = np.asarray(X, dtype=float)

    def coeffs(q):
        u = action.coefficients(q, np.broadcast_to(X, np.shape(q)))
        if weighted:
            u = _mv(np.linalg.solve(action.Q, action.orbit_gram(q)), u)
        return u

    return coeffs


def _vector(action: GroupAction, coeffs: Callable) -> Callable:
    return lambda q: np.einsum("...a,...an->...n", coeffs(q), action.killing(q))


def _q_koszul(action: GroupAction, p, x: Callable, y: Callable, stencil) -> np.ndarray:
    """``2 Q(nabla^Q_X Y, K_d)`` for every ``d``, fields given by Killing coordinates.

    ``Q`` is constant in the Killing frame, so ``Z(Q(X, Y))`` only sees the
    coefficient functions; brackets combine derivatives of the coefficients
    with the structure constants.
    """
    c = action.structure
    Q = action.Q
    xp, yp = x(p), y(p)
    Xp = _vector(action, x)(p)
    dy = directional_derivative(y, p, Xp, stencil)
    # Koszul with Z = K_d constant:  X Q(Y,Z) + Y Q(X,Z) - Z Q(X,Y)
    #   + Q([X,Y],Z) - Q([X,Z],Y) - Q([Y,Z],X)
    Yp = _vector(action, y)(p)
    dx = directional_derivative(x, p, Yp, stencil)
    k = action.rank
    out = np.zeros(k)
    for d in range(k):
        zd = np.zeros(k)
        zd[d] = 1.0
        Kd = action.killing(p)[d]
        dxy_z = directional_derivative(lambda q: np.einsum("...a,ab,...b->...", x(q), Q, y(q)), p, Kd, stencil)
        bracket_xy = dy - dx + np.einsum("a,b,abe->e", xp, yp, c)
        bracket_xz = -directional_derivative(x, p, Kd, stencil) + np.einsum("a,b,abe->e", xp, zd, c)
        bracket_yz = -directional_derivative(y, p, Kd, stencil) + np.einsum("a,b,abe->e", yp, zd, c)
        out[d] = (
            dy @ Q @ zd
            + dx @ Q @ zd
            - dxy_z
            + bracket_xy @ Q @ zd
            - bracket_xz @ Q @ yp
            - bracket_yz @ Q @ xp
        )
    return out


def q_connection(action: GroupAction, p, x: Callable, y: Callable, stencil: DerivativeStencil = DEFAULT_STENCIL) -> np.ndarray:
    """Killing coordinates of ``nabla^Q_X Y`` for fields with coordinates ``x``, ``y``."""
    p = action.foliation.chart.point(p)
    return np.linalg.solve(2.0 * action.Q, _q_koszul(action, p, x, y, stencil))


def _limit_integrand(action: GroupAction, p, nab, O) -> float:
    Q = action.Q
    a, b, c = nab
    return float(np.linalg.solve(O, a) @ Q @ b - np.linalg.solve(O, c) @ Q @ c)


def cheeger_limit_condition(action: GroupAction, g0: MetricField, p, X, Y, stencil: DerivativeStencil = DEFAULT_STENCIL) -> float:
    """``Q(O^{-1} nabla^Q_{OX}OX, nabla^Q_{OY}OY) - Q(O^{-1} nabla^Q_{OX}OY, nabla^Q_{OX}OY)``
    with ``X``, ``Y`` replaced by their vertical parts."""
    _check_action_metric(action, g0)
    p = action.foliation.chart.point(p)
    O = orbit_tensor(action, p).matrix
    if np.linalg.cond(O) > 1e12:
        raise InversionError("orbit tensor is singular")
    ox, oy = _coeff_field(action, X, True), _coeff_field(action, Y, True)
    nab = (
        q_connection(action, p, ox, ox, stencil),
        q_connection(action, p, oy, oy, stencil),
        q_connection(action, p, ox, oy, stencil),
    )
    return _limit_integrand(action, p, nab, O)


def _scaled_koszul(action: GroupAction, g0: MetricField, s: float, p, x: Callable, y: Callable, stencil) -> np.ndarray:
    """``2 s g_s(nabla^s_X Y, K_d)`` for every ``d``, from Christoffel symbols of ``g_s``."""
    gs = cheeger_metric(action, g0, s)
    low = christoffel_first_kind(gs, p, stencil)  # Gamma_{l, ij}
    X = _vector(action, x)(p)
    Yf = _vector(action, y)
    Y = Yf(p)
    dY = directional_derivative(Yf, p, X, stencil)
    K = action.killing(p)
    Gs = gs(p)
    cov = np.einsum("lij,i,j->l", low, X, Y) + Gs @ dY
    return 2.0 * s * (K @ cov)


def _extrapolated_connection(action: GroupAction, g0: MetricField, p, x, y, s_pair, stencil) -> np.ndarray:
    s1, s2 = s_pair
    b1 = _scaled_koszul(action, g0, s1, p, x, y, stencil)
    b2 = _scaled_koszul(action, g0, s2, p, x, y, stencil)
    limit = (s2 * b2 - s1 * b1) / (s2 - s1)
    return np.linalg.solve(2.0 * action.Q, limit)


def cheeger_limit_oracle(
    action: GroupAction,
    g0: MetricField,
    p,
    X,
    Y,
    s_pair: Sequence[float] = (1e3, 1e4),
    stencil: DerivativeStencil = DEFAULT_STENCIL,
) -> float:
    """Same integrand with ``nabla^Q`` replaced by the large-``s`` Koszul terms of
    the actual Cheeger metrics, extrapolated linearly in ``1/s``."""
    _check_action_metric(action, g0)
    p = action.foliation.chart.point(p)
    O = orbit_tensor(action, p).matrix
    ox, oy = _coeff_field(action, X, True), _coeff_field(action, Y, True)
    nab = (
        _extrapolated_connection(action, g0, p, ox, ox, s_pair, stencil),
        _extrapolated_connection(action, g0, p, oy, oy, s_pair, stencil),
        _extrapolated_connection(action, g0, p, ox, oy, s_pair, stencil),
    )
    return _limit_integrand(action, p, nab, O)


def cheeger_koszul_convergence(
    action: GroupAction,
    g0: MetricField,
    p,
    u,
    v,
    w,
    s_list: Sequence[float],
    stencil: DerivativeStencil = DEFAULT_STENCIL,
) -> np.ndarray:
    """``|2 g((1/s + O)^{-1} nabla^s_u v, w) - 2 Q(nabla^Q_u v, w)|`` for each ``s``.

    ``u``, ``v``, ``w`` are vertical vectors at ``p``; ``u`` and ``v`` are
    extended with constant Killing coordinates.
    """
    _check_action_metric(action, g0)
    s_list = [float(s) for s in s_list]
    if any(b <= a for a, b in zip(s_list, s_list[1:])) or s_list[0] <= 0:
        raise ContractError("s_list must be positive and increasing")
    p = action.foliation.chart.point(p)
    G = g0(p)
    for name, vec in (("u", u), ("v", v), ("w", w)):
        h = horizontal_part(action.foliation, vec, p)
        if _norm0(G, h) > 1e-8 * max(1.0, _norm0(G, vec)):
            raise ContractError(f"{name} must be vertical")
    cu = action.coefficients(p, u)
    cv = action.coefficients(p, v)
    cw = action.coefficients(p, w)
    x = lambda q: np.broadcast_to(cu, np.shape(q)[:-1] + cu.shape)
    y = lambda q: np.broadcast_to(cv, np.shape(q)[:-1] + cv.shape)
    limit = _q_koszul(action, p, x, y, stencil) @ cw
    return np.array([abs(_scaled_koszul(action, g0, s, p, x, y, stencil) @ cw - limit) for s in s_list])

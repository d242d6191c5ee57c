"""Command-line experiment runner.

Usage::

    blendcurv --geometry flat3torus --deformation warping --rmax 3 --out out.csv

Exit status: 0 when every consistency row passes, 1 when one fails and 2 for
invalid configurations.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .blend import BlendPath, blend_curvature, blend_curvature_oracle, t_derivative_analytic, t_derivative_oracle
from .catalog import CatalogEntry, catalog_get, catalog_list
from .chart import Chart, DerivativeStencil, MetricField, inner
from .deformations import (
    canonical_connection_check,
    canonical_variation_metric,
    cheeger_limit_condition,
    cheeger_limit_oracle,
    cheeger_metric,
    conformal_metric,
    warped_metric,
)
from .errors import GeometryError
from .expr import ExpressionError, parse_scalar
from .foliation import FoliationStructure
from .torus import TWO_PI, TorusImmersion, integrate_torus, rounding_floor, theorem_a_verdict

DEFORMATIONS = ("conformal", "canonical", "warping", "cheeger", "custom-g1")
OUTPUTS = ("report", "oracle_table", "integrand_samples")
DEFAULT_PARAMS = {
    "conformal": {"h": "0.2*cos(x1)"},
    "canonical": {"s": 0.5},
    "warping": {"f": "0.2*sin(x1)"},
    "cheeger": {"s": 1.0},
    "custom-g1": {"g1": "g0"},
}


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# results


@dataclass(frozen=True)
class Row:
    quantity: str
    value: float
    error: float
    verdict: str
    anchor: str


@dataclass
class ResultTable:
    rows: List[Row] = field(default_factory=list)

    def add(self, quantity: str, value: float, error: float = 0.0, verdict: str = "info", anchor: str = "") -> None:
        value, error = float(value), float(error)
        if not math.isfinite(value) or not math.isfinite(error) or error < 0:
            raise ValueError(f"row {quantity!r} needs a finite value and a non-negative error")
        self.rows.append(Row(quantity, value, error, verdict, anchor))

    def check(self, quantity: str, ok: bool, value: float, error: float, anchor: str) -> None:
        self.add(quantity, value, error, "pass" if ok else "fail", anchor)

    @property
    def failures(self) -> List[Row]:
        return [r for r in self.rows if r.verdict == "fail"]


HEADER = ("quantity", "value", "error", "verdict", "anchor")


def _num(x: float) -> str:
    return format(x, ".17g")


def _csv_field(s: str) -> str:
    if any(c in s for c in ',"\n'):
        return '"' + s.replace('"', '""') + '"'
    return s


def render(table: ResultTable, fmt: str) -> str:
    if fmt == "csv":
        lines = [",".join(HEADER)]
        for r in table.rows:
            lines.append(",".join([_csv_field(r.quantity), _num(r.value), _num(r.error), r.verdict, _csv_field(r.anchor)]))
        return "\n".join(lines) + "\n"
    if fmt == "json":
        items = []
        for r in table.rows:
            items.append(
                "  {"
                + ", ".join(
                    [
                        f'"quantity": {json.dumps(r.quantity)}',
                        f'"value": {_num(r.value)}',
                        f'"error": {_num(r.error)}',
                        f'"verdict": {json.dumps(r.verdict)}',
                        f'"anchor": {json.dumps(r.anchor)}',
                    ]
                )
                + "}"
            )
        body = ",\n".join(items)
        return "[\n" + body + "\n]\n" if items else "[]\n"
    raise UsageError(f"unknown format {fmt!r}")


def emit(table: ResultTable, fmt: str, path: Optional[str]) -> None:
    text = render(table, fmt)
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    geometry: object = "flat3torus"
    deformation: str = "custom-g1"
    params: dict = field(default_factory=dict)
    r_max: int = 4
    grid_n: int = 16
    seed: int = 0
    stencil: dict = field(default_factory=dict)
    t_grid: list = field(default_factory=lambda: [0.1, 0.3, 0.5, 0.7, 0.9])
    outputs: list = field(default_factory=lambda: ["report", "oracle_table"])
    oracle_points: int = 4
    out: Optional[str] = None
    format: str = "csv"

    def validate(self) -> None:
        if self.deformation not in DEFORMATIONS:
            raise UsageError(f"deformation must be one of {', '.join(DEFORMATIONS)}")
        if not isinstance(self.r_max, int) or not 2 <= self.r_max <= 8:
            raise UsageError("r_max must be an integer in [2, 8]")
        n = self.grid_n
        if not isinstance(n, int) or n < 16 or n > 256 or n & (n - 1):
            raise UsageError("grid_n must be a power of two in [16, 256]")
        if self.format not in ("csv", "json"):
            raise UsageError("format must be csv or json")
        bad = [o for o in self.outputs if o not in OUTPUTS]
        if bad:
            raise UsageError(f"unknown outputs {bad}")
        if not all(0.0 < float(t) < 1.0 for t in self.t_grid):
            raise UsageError("t_grid values must lie in (0, 1)")

    def stencil_obj(self) -> DerivativeStencil:
        try:
            return DerivativeStencil(**self.stencil)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"invalid stencil settings: {exc}") from exc

    def merged_params(self) -> dict:
        out = dict(DEFAULT_PARAMS[self.deformation])
        out.update(self.params)
        return out


_CONFIG_KEYS = {f for f in ExperimentConfig.__dataclass_fields__}


def load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError("config must be a JSON object")
    unknown = set(data) - _CONFIG_KEYS
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    return data


def inline_geometry(spec: dict) -> CatalogEntry:
    """Geometry from ``{"domain", "periodic", "metric", "torus", "vertical"?}``."""
    try:
        chart = Chart(tuple(tuple(d) for d in spec["domain"]), tuple(spec["periodic"]))
        n = chart.dim
        entries = [[parse_scalar(str(e), n) for e in row] for row in spec["metric"]]
        if len(entries) != n or any(len(row) != n for row in entries):
            raise UsageError(f"metric must be a {n}x{n} matrix of expressions")

        def func(p):
            p = np.asarray(p, dtype=float)
            return np.stack([np.stack([e(p) for e in row], axis=-1) for row in entries], axis=-2)

        g0 = MetricField(chart, func, "inline")
        tor = spec["torus"]
        base, du, dv = (np.asarray(tor[k], dtype=float) for k in ("base", "du", "dv"))
        T = TorusImmersion(chart, lambda uv: base + uv[..., :1] * du + uv[..., 1:] * dv, "inline torus")
        F = None
        if "vertical" in spec:
            rows = np.asarray(spec["vertical"], dtype=float)
            F = FoliationStructure(chart, lambda p: np.broadcast_to(rows, np.shape(p)[:-1] + rows.shape), g0)
    except (KeyError, TypeError, ValueError, ExpressionError, GeometryError) as exc:
        raise UsageError(f"invalid inline geometry: {exc}") from exc
    return CatalogEntry("inline", chart, g0, T, F, totally_geodesic_flat=False)


def resolve_geometry(geometry) -> CatalogEntry:
    if isinstance(geometry, dict):
        return inline_geometry(geometry)
    try:
        return catalog_get(str(geometry))
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from exc


def _custom_g1(entry: CatalogEntry, spec) -> MetricField:
    if spec == "g0":
        return entry.g0
    if spec == "catalog":
        if entry.g1 is None:
            raise UsageError(f"geometry {entry.name!r} has no paired metric g1")
        return entry.g1
    if isinstance(spec, str):
        raise UsageError("g1 must be 'g0', 'catalog' or a matrix of expressions")
    n = entry.chart.dim
    try:
        entries = [[parse_scalar(str(e), n) for e in row] for row in spec]
    except (TypeError, ExpressionError) as exc:
        raise UsageError(f"invalid g1 expression: {exc}") from exc
    if len(entries) != n or any(len(row) != n for row in entries):
        raise UsageError(f"g1 must be a {n}x{n} matrix of expressions")

    def func(p):
        p = np.asarray(p, dtype=float)
        return np.stack([np.stack([e(p) for e in row], axis=-1) for row in entries], axis=-2)

    return MetricField(entry.chart, func, "custom")


def build_target(entry: CatalogEntry, kind: str, params: dict) -> MetricField:
    n = entry.chart.dim
    try:
        if kind == "conformal":
            return conformal_metric(entry.g0, parse_scalar(str(params["h"]), n))
        if kind == "canonical":
            if entry.foliation is None:
                raise UsageError(f"geometry {entry.name!r} has no foliation")
            return canonical_variation_metric(entry.foliation, entry.g0, float(params["s"]))
        if kind == "warping":
            if entry.foliation is None:
                raise UsageError(f"geometry {entry.name!r} has no foliation")
            return warped_metric(entry.foliation, entry.g0, parse_scalar(str(params["f"]), n))
        if kind == "cheeger":
            if entry.action is None:
                raise UsageError(f"geometry {entry.name!r} has no group action")
            return cheeger_metric(entry.action, entry.g0, float(params["s"]))
        return _custom_g1(entry, params["g1"])
    except ExpressionError as exc:
        raise UsageError(str(exc)) from exc
    except GeometryError as exc:
        raise UsageError(f"cannot build {kind} deformation: {exc}") from exc


# ---------------------------------------------------------------------------
# experiment


def _report_rows(table: ResultTable, report, r_max: int) -> None:
    table.add("torus.geodesic_residual", report.geodesic_residual, 0.0, "info", "totally geodesic flat torus hypothesis")
    if report.first_order is not None:
        fo = report.first_order
        table.add("first_order.lhs", fo.lhs, fo.error, "info", "averaged first variation over the torus")
        table.add("first_order.rhs", fo.rhs, fo.error, "info", "tangential connection terms after Gauss-Bonnet")
        table.check(
            "first_order.identity", abs(fo.lhs - fo.rhs) <= 3.0 * fo.error, abs(fo.lhs - fo.rhs), 3.0 * fo.error,
            "first-order identity on a totally geodesic flat torus",
        )
    table.add(
        "first_variation.integral",
        report.first_integral,
        report.first_integral_error,
        "zero" if report.first_variation_vanishes else ("positive" if report.first_integral > 0 else "negative"),
        "vanishing first variation hypothesis",
    )
    for e in report.entries:
        table.add(f"variation.r{e.r}.integral", e.integral, e.error, e.verdict, "average r-order variation")
        table.add(f"variation.r{e.r}.S_integral", e.s_integral, e.s_error, e.s_verdict, "averaged S_r integrand")
        table.add(f"variation.r{e.r}.weighted", e.weighted, e.weighted_error, "info", "variation divided by |X^Y|_1^2")
        table.check(
            f"variation.r{e.r}.equivalence", e.equivalent, e.integral + e.s_integral * math.factorial(e.r),
            e.error + e.s_error * math.factorial(e.r), "opposite signs of the r-order variation and S_r",
        )


def _torus_samples(entry: CatalogEntry, seed: int, count: int):
    rng = np.random.default_rng(seed)
    uv = rng.random((count, 2)) * TWO_PI
    X, Y = entry.torus.frame(uv)
    return uv, entry.torus(uv), X, Y


def _oracle_rows(table, path, entry, cfg, stencil) -> None:
    uv, p, X, Y = _torus_samples(entry, cfg.seed, cfg.oracle_points)
    for t in cfg.t_grid:
        a = blend_curvature(path, float(t), p, X, Y, stencil)
        b = blend_curvature_oracle(path, float(t), p, X, Y, stencil)
        err = np.abs(a - b) / np.maximum(1.0, np.abs(b))
        table.check(f"oracle.blend.t{float(t):g}", bool(err.max() <= 1e-5), float(err.max()), 0.0, "closed-form blend curvature vs direct differentiation, relative tolerance 1e-5")
    # coefficients that vanish identically are compared against |X|^2 |Y|^2
    G = entry.g0(p)
    scale = inner(G, X, X) * inner(G, Y, Y)
    for r in range(1, min(cfg.r_max, 4) + 1):
        a = t_derivative_analytic(path, p, X, Y, r, stencil)
        b = t_derivative_oracle(path, p, X, Y, r)
        tol = 5e-3 if r == 4 else 1e-3
        err = np.abs(a - b) / np.maximum(np.abs(b), 1e-3 * scale)
        table.check(f"oracle.taylor.r{r}", bool(err.max() <= tol), float(err.max()), 0.0, f"Taylor coefficient in t vs finite differences, relative tolerance {tol:g}")


def _sample_rows(table, path, entry, cfg, stencil) -> None:
    uv, p, X, Y = _torus_samples(entry, cfg.seed + 1, cfg.oracle_points)
    for i in range(len(uv)):
        for r in range(2, cfg.r_max + 1):
            v = float(t_derivative_analytic(path, p[i], X[i], Y[i], r, stencil))
            table.add(f"sample.{i}.r{r}", v, 0.0, "info", f"integrand at (u, v) = ({uv[i, 0]:.6f}, {uv[i, 1]:.6f})")


def _deformation_rows(table, path, entry, cfg, params, stencil) -> None:
    kind = cfg.deformation
    if kind == "canonical" and entry.foliation is not None:
        p = entry.torus(np.array([0.3, 0.7]))
        res = canonical_connection_check(entry.foliation, entry.g0, float(params["s"]), p, stencil)
        table.check("canonical.connection_residual", res <= 1e-5, res, 0.0, "canonical variation connection identities, tolerance 1e-5")
    if kind == "warping":
        f = parse_scalar(str(params["f"]), entry.chart.dim)
        T = entry.torus

        def closed(r):
            def g(uv):
                p = T(uv)
                X, Y = T.frame(uv)
                fp = f(p)
                G = entry.g0(p)
                dfx = (f(p + 1e-6 * X) - f(p - 1e-6 * X)) / 2e-6
                nx = np.einsum("...i,...ij,...j->...", X, G, X)
                ny = np.einsum("...i,...ij,...j->...", Y, G, Y)
                return np.exp(4 * fp) * (1 - np.exp(2 * fp)) ** (r - 2) * dfx**2 * ny / nx

            return g

        report = theorem_a_verdict(path, T, cfg.r_max, cfg.grid_n, stencil)
        for e in report.entries:
            q = integrate_torus(closed(e.r), cfg.grid_n)
            scaled = math.factorial(e.r) * q.value
            err = e.error + math.factorial(e.r) * (q.error + rounding_floor(stencil))
            table.add(f"warping.closed_form.r{e.r}", q.value, q.error, "info", "integral of e^{4f}(1-e^{2f})^{r-2} df(X)^2")
            table.check(f"warping.identity.r{e.r}", abs(e.integral - scaled) <= 3 * err, abs(e.integral - scaled), 3 * err, "r-order variation equals r! times the closed form")
    if kind == "cheeger" and entry.action is not None:
        T = entry.torus
        action = entry.action

        def limit(uv):
            flat = uv.reshape(-1, 2)
            p = T(flat)
            X, Y = T.frame(flat)
            vals = [cheeger_limit_condition(action, entry.g0, p[i], X[i], Y[i], stencil) for i in range(len(flat))]
            return np.array(vals).reshape(uv.shape[:-1])

        q = integrate_torus(limit, 8)
        q = q._replace(error=q.error + rounding_floor(stencil))
        verdict = "zero" if abs(q.value) <= 3 * q.error else ("positive" if q.value > 0 else "negative")
        table.add("cheeger.limit_integral", q.value, q.error, verdict, "limit integrand of the Cheeger deformation")
        uv, p, X, Y = _torus_samples(entry, cfg.seed + 2, 1)
        a = cheeger_limit_condition(action, entry.g0, p[0], X[0], Y[0], stencil)
        b = cheeger_limit_oracle(action, entry.g0, p[0], X[0], Y[0], stencil=stencil)
        err = abs(a - b) / max(abs(b), 1e-6)
        ok = err <= 1e-3 or abs(a - b) <= 1e-8
        table.check("cheeger.limit_oracle", ok, err, 0.0, "limit integrand vs large-s extrapolation, relative tolerance 1e-3")


def run(cfg: ExperimentConfig) -> ResultTable:
    cfg.validate()
    stencil = cfg.stencil_obj()
    entry = resolve_geometry(cfg.geometry)
    params = cfg.merged_params()
    g1 = build_target(entry, cfg.deformation, params)
    try:
        path = BlendPath(entry.g0, g1)
    except GeometryError as exc:
        raise UsageError(f"invalid blend path: {exc}") from exc
    table = ResultTable()
    if "report" in cfg.outputs:
        report = theorem_a_verdict(path, entry.torus, cfg.r_max, cfg.grid_n, stencil)
        _report_rows(table, report, cfg.r_max)
        _deformation_rows(table, path, entry, cfg, params, stencil)
    if "oracle_table" in cfg.outputs:
        _oracle_rows(table, path, entry, cfg, stencil)
    if "integrand_samples" in cfg.outputs:
        _sample_rows(table, path, entry, cfg, stencil)
    return table


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="blendcurv", description="Curvature of convex combinations of metrics on flat tori.")
    ap.add_argument("--config", help="JSON experiment file; flags override its keys")
    ap.add_argument("--geometry", help=f"catalog entry ({', '.join(catalog_list())})")
    ap.add_argument("--deformation", choices=DEFORMATIONS)
    ap.add_argument("--rmax", type=int, dest="r_max")
    ap.add_argument("--grid", type=int, dest="grid_n")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out")
    ap.add_argument("--format", choices=("csv", "json"))
    return ap


def main(argv: Optional[list] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    try:
        data = load_config(args.config)
        for key in ("geometry", "deformation", "r_max", "grid_n", "seed", "out", "format"):
            val = getattr(args, key)
            if val is not None:
                data[key] = val
        cfg = ExperimentConfig(**data)
        table = run(cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    try:
        emit(table, cfg.format, cfg.out)
    except OSError as exc:
        print(f"cannot write output: {exc}", file=sys.stderr)
        return 2
    if table.failures:
        for row in table.failures:
            print(f"assertion failed: {row.quantity} = {row.value:.3e} ({row.anchor})", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

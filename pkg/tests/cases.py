"""Shared catalog blend paths for the test-suite."""

from __future__ import annotations

import functools

import numpy as np

from blendcurv.blend import BlendPath
from blendcurv.catalog import catalog_get
from blendcurv.cli import build_target

# (geometry, deformation, parameters); every deformation varies along the torus
# unless noted.
CASES = (
    ("flat3torus", "conformal", {"h": "0.2*sin(x1)"}),
    ("flat3torus", "canonical", {"s": 0.5}),
    ("flat3torus", "warping", {"f": "0.2*sin(x1)"}),
    ("warped3torus", "custom-g1", {"g1": "catalog"}),
    ("s2xs2", "conformal", {"h": "0.2*sin(x2)"}),
    ("s2xs2", "canonical", {"s": 0.5}),
    ("s2xs2", "warping", {"f": "0.3*sin(x2)"}),
    ("s2xs2", "cheeger", {"s": 1.0}),
    ("s3hopf", "conformal", {"h": "0.2*sin(x2)"}),
    ("s3hopf", "canonical", {"s": 0.5}),
    ("s3hopf", "warping", {"f": "0.2*cos(2*x1)"}),  # constant on the Clifford torus
    ("s3hopf", "cheeger", {"s": 1.0}),
    ("su2warp", "conformal", {"h": "0.2*sin(x2)"}),
    ("su2warp", "canonical", {"s": 0.5}),
    ("su2warp", "warping", {"f": "0.2*sin(x4)"}),  # constant on the slice torus
    ("su2warp", "cheeger", {"s": 1.0}),
)


def case_id(case) -> str:
    return f"{case[0]}-{case[1]}"


@functools.lru_cache(maxsize=None)
def _path(geometry: str, deformation: str, frozen: tuple):
    entry = catalog_get(geometry)
    return entry, BlendPath(entry.g0, build_target(entry, deformation, dict(frozen)))


def case_path(case):
    geometry, deformation, params = case
    return _path(geometry, deformation, tuple(sorted(params.items())))


def random_instances(entry, count: int, seed: int):
    """Random chart points (kept off the chart edges) and random vectors."""
    rng = np.random.default_rng(seed)
    p = entry.chart.sample(rng, count, margin=0.1)
    X = rng.normal(size=p.shape)
    Y = rng.normal(size=p.shape)
    return p, X, Y

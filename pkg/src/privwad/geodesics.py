"""Displacement interpolation along Wasserstein geodesics.

Interpolating measures are built by barycentric projection of the optimal
plan: support point ``i`` of the source moves to
``(1 - t) x_i + t * (1/a_i) sum_j P_ij y_j`` and keeps its weight. For a
permutation plan this is exact displacement interpolation; for fractional
plans it is the usual barycentric approximation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .measures import DiscreteMeasure, as_matrix
from .ot_core import DEFAULT_P, OTResult, solve_ot, wasserstein


@dataclass(frozen=True, eq=False)
class InterpolatingMeasure:
    measure: DiscreteMeasure
    t: float
    src_id: str = "src"
    dst_id: str = "dst"

    def __post_init__(self):
        if not 0.0 <= self.t <= 1.0:
            raise ValueError(f"t must lie in [0, 1], got {self.t}")

    @property
    def support(self) -> np.ndarray:
        return self.measure.support

    @property
    def weights(self) -> np.ndarray:
        return self.measure.weights

    @property
    def size(self) -> int:
        return self.measure.size

    @property
    def dim(self) -> int:
        return self.measure.dim


def _as_measure(m) -> DiscreteMeasure:
    return m.measure if isinstance(m, InterpolatingMeasure) else m


def barycentric_map(plan: OTResult | np.ndarray, src: DiscreteMeasure, dst: DiscreteMeasure) -> np.ndarray:
    P = plan.plan if isinstance(plan, OTResult) else np.asarray(plan)
    if P.shape != (src.size, dst.size):
        raise ValueError(f"plan shape {P.shape} does not match ({src.size}, {dst.size})")
    mass = src.weights
    if np.any(mass <= 0):
        bad = int(np.flatnonzero(mass <= 0)[0])
        raise ValueError(f"source point {bad} has zero weight; its image is undefined")
    return as_matrix((P @ dst.support) / mass[:, None])


def interpolate_with_plan(src, dst, t: float, p: float = DEFAULT_P, *, src_id="src", dst_id="dst"):
    """Like :func:`interpolate` but also hands back the plan it used."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    src, dst = _as_measure(src), _as_measure(dst)
    ot = solve_ot(src, dst, p=p)
    image = barycentric_map(ot, src, dst)
    support = (1.0 - t) * src.support + t * image
    im = InterpolatingMeasure(DiscreteMeasure(support, src.weights), t, src_id, dst_id)
    return im, ot


def interpolate(src, dst, t: float, p: float = DEFAULT_P, *, src_id="src", dst_id="dst") -> InterpolatingMeasure:
    return interpolate_with_plan(src, dst, t, p, src_id=src_id, dst_id=dst_id)[0]


def geodesic_gap(a, b, g, p: float = DEFAULT_P) -> float:
    """Slack in the triangle inequality, ``W(a,g) + W(g,b) - W(a,b)``."""
    a, b, g = _as_measure(a), _as_measure(b), _as_measure(g)
    return wasserstein(a, g, p) + wasserstein(g, b, p) - wasserstein(a, b, p)

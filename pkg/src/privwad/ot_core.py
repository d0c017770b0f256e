"""Exact discrete optimal transport with Euclidean ground cost."""

from __future__ import annotations

import contextlib
import contextvars
import itertools
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from . import _simplex
from .measures import DiscreteMeasure

DEFAULT_P = 2
BRUTE_FORCE_MAX = 8


class OTError(RuntimeError):
    """The solver failed to reach an optimal vertex."""


@dataclass(frozen=True, eq=False)
class OTResult:
    plan: np.ndarray
    dual_row: np.ndarray
    dual_col: np.ndarray
    cost: float
    p: float
    iterations: int = 0

    @property
    def distance(self) -> float:
        """W_p, i.e. ``cost ** (1/p)``."""
        return float(max(self.cost, 0.0) ** (1.0 / self.p))

    def dual_objective(self, a, b) -> float:
        return float(np.dot(a, self.dual_row) + np.dot(b, self.dual_col))

    def to_dict(self, include_plan: bool = True) -> dict:
        out = {
            "cost": self.cost,
            "distance": self.distance,
            "p": self.p,
            "dual_row": self.dual_row.tolist(),
            "dual_col": self.dual_col.tolist(),
            "iterations": self.iterations,
        }
        if include_plan:
            out["plan"] = self.plan.tolist()
        return out


# -- solve accounting --------------------------------------------------------

_solve_counter: contextvars.ContextVar[list | None] = contextvars.ContextVar(
    "_solve_counter", default=None
)


@contextlib.contextmanager
def count_solves():
    """Count ``solve_ot`` calls made in the current context.

    Yields a box whose ``value`` is the running count; nested counters all
    see the inner solves.
    """
    box = _Counter()
    outer = _solve_counter.get()
    token = _solve_counter.set([box] + (outer or []))
    try:
        yield box
    finally:
        _solve_counter.reset(token)


class _Counter:
    def __init__(self):
        self.value = 0


def _record_solve():
    boxes = _solve_counter.get()
    if boxes:
        for box in boxes:
            box.value += 1


# -- core operations ---------------------------------------------------------


def _check_p(p):
    if not p >= 1:
        raise ValueError(f"exponent p must be >= 1, got {p}")


def pairwise_cost(x: np.ndarray, y: np.ndarray, p: float = DEFAULT_P) -> np.ndarray:
    _check_p(p)
    if x.shape[1] != y.shape[1]:
        raise ValueError(f"dimension mismatch: {x.shape[1]} vs {y.shape[1]}")
    if p == 2:
        return cdist(x, y, "sqeuclidean")
    d = cdist(x, y, "euclidean")
    return d if p == 1 else d**p


def cost_matrix(src: DiscreteMeasure, dst: DiscreteMeasure, p: float = DEFAULT_P) -> np.ndarray:
    """Entry ``[i, j]`` is ``||x_i - x'_j||^p``."""
    return pairwise_cost(src.support, dst.support, p)


def solve_ot(
    src: DiscreteMeasure,
    dst: DiscreteMeasure,
    cost: np.ndarray | None = None,
    p: float = DEFAULT_P,
    max_iter: int | None = None,
) -> OTResult:
    """Exact optimal plan and dual potentials between two measures.

    The plan is a basic (vertex) solution with at most ``m + n - 1``
    nonzeros. Potentials satisfy ``f_i + g_j <= C_ij`` with equality where
    the plan is positive, and are normalized so that ``g_0 == 0``.
    """
    if cost is None:
        cost = cost_matrix(src, dst, p)
    cost = np.asarray(cost, dtype=np.float64)
    m, n = src.size, dst.size
    if cost.shape != (m, n):
        raise ValueError(f"cost matrix shape {cost.shape} does not match ({m}, {n})")
    if not np.all(np.isfinite(cost)) or np.any(cost < 0):
        raise ValueError("cost entries must be finite and non-negative")

    a = np.ascontiguousarray(src.weights)
    b = np.ascontiguousarray(dst.weights)
    # match total masses exactly so no residue sticks on the artificial arcs
    b = b * (a.sum() / b.sum())

    scale = float(cost.max())
    if scale <= 0.0:
        scale = 1.0
    if max_iter is None:
        max_iter = max(100_000, 50 * m * n)

    flow, f, g, iters, status = _simplex.network_simplex(
        a, b, np.ascontiguousarray(cost.ravel() / scale), max_iter
    )
    _record_solve()
    if status != _simplex.OPTIMAL:
        reason = {_simplex.MAX_ITER: "iteration cap reached", _simplex.INFEASIBLE: "infeasible"}
        raise OTError(
            f"network simplex failed ({reason.get(status, status)}) after {iters} "
            f"iterations on a {m}x{n} problem"
        )

    plan = np.clip(flow.reshape(m, n), 0.0, None)
    f = f * scale
    g = g * scale
    shift = g[0]
    f = f + shift
    g = g - shift
    for arr in (plan, f, g):
        arr.setflags(write=False)
    return OTResult(
        plan=plan,
        dual_row=f,
        dual_col=g,
        cost=float(np.sum(cost * plan)),
        p=p,
        iterations=int(iters),
    )


def wasserstein(src: DiscreteMeasure, dst: DiscreteMeasure, p: float = DEFAULT_P) -> float:
    return solve_ot(src, dst, p=p).distance


# -- test oracle -------------------------------------------------------------


def brute_force_ot(
    src: DiscreteMeasure, dst: DiscreteMeasure, cost: np.ndarray | None = None, p: float = DEFAULT_P
) -> OTResult:
    """Enumerate every permutation matching (uniform, equal sizes, m <= 8).

    Duals are recovered from the optimal matching with Bellman-Ford on the
    difference constraints ``g_j - g_{sigma(i)} <= C_ij - C_{i,sigma(i)}``, so
    nothing here shares code with the simplex path.
    """
    m, n = src.size, dst.size
    if m != n:
        raise ValueError("brute force needs equal support sizes")
    if m > BRUTE_FORCE_MAX:
        raise ValueError(f"brute force limited to {BRUTE_FORCE_MAX} points, got {m}")
    if not (src.is_uniform and dst.is_uniform):
        raise ValueError("brute force needs uniform weights")
    if cost is None:
        cost = cost_matrix(src, dst, p)
    cost = np.asarray(cost, dtype=np.float64)

    perms = np.array(list(itertools.permutations(range(m))), dtype=np.intp)
    totals = cost[np.arange(m), perms].sum(axis=1)
    best = int(np.argmin(totals))
    sigma = perms[best]

    plan = np.zeros((m, m))
    plan[np.arange(m), sigma] = 1.0 / m

    # g_j <= g_{sigma(i)} + C_ij - C_{i sigma(i)}
    g = np.zeros(m)
    for _ in range(m + 1):
        changed = False
        for i in range(m):
            base = g[sigma[i]] - cost[i, sigma[i]]
            for j in range(m):
                cand = base + cost[i, j]
                if cand < g[j] - 1e-15:
                    g[j] = cand
                    changed = True
        if not changed:
            break
    f = cost[np.arange(m), sigma] - g[sigma]
    f = f + g[0]
    g = g - g[0]
    return OTResult(plan=plan, dual_row=f, dual_col=g, cost=float(totals[best] / m), p=p)

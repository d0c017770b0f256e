"""Data valuation on top of OT duals.

Covers label-aware augmentation of labeled datasets, calibrated gradients
(per-datum sensitivity of the transport cost), noisy-point detection from
either side, client contribution scores and the retrieval matching rate
used to measure word leakage from shared measures.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .geodesics import InterpolatingMeasure
from .measures import DiscreteMeasure, LabeledDataset, as_matrix, uniform_measure
from .ot_core import DEFAULT_P, OTResult, solve_ot
from .trianglewad import DefenseData, TriangleConfig, local_interpolate, run_triangle_session

log = logging.getLogger(__name__)


# -- labeled data augmentation ----------------------------------------------


@dataclass(frozen=True, eq=False)
class ClassStats:
    mean: np.ndarray
    cov: np.ndarray
    cov_sqrt: np.ndarray
    count: int
    repaired: bool = False


@dataclass(frozen=True, eq=False)
class AugmentedDataset:
    matrix: np.ndarray
    feature_dim: int
    label_block_dim: int
    class_stats: dict[int, ClassStats]

    def measure(self) -> DiscreteMeasure:
        return uniform_measure(self.matrix)


def psd_sqrt(cov: np.ndarray) -> tuple[np.ndarray, bool]:
    """Symmetric PSD square root; negative eigenvalues are clamped to 0."""
    cov = 0.5 * (cov + cov.T)
    w, V = np.linalg.eigh(cov)
    tol = 1e-12 * max(1.0, float(np.abs(w).max(initial=0.0)))
    repaired = bool(np.any(w < -tol))
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)) @ V.T, repaired


def class_statistics(features: np.ndarray, labels: np.ndarray) -> dict[int, ClassStats]:
    stats = {}
    for y in np.unique(labels):
        x = features[labels == y]
        if x.shape[0] < 2:
            raise ValueError(f"class {int(y)} has a single member; covariance is undefined")
        mean = x.mean(axis=0)
        centered = x - mean
        cov = centered.T @ centered / x.shape[0]
        root, repaired = psd_sqrt(cov)
        if repaired:
            log.warning("class %d covariance was not PSD; clamped negative eigenvalues", int(y))
        stats[int(y)] = ClassStats(mean, cov, root, x.shape[0], repaired)
    return stats


def augment_labeled(ds: LabeledDataset) -> AugmentedDataset:
    """Stack each point with its class mean and covariance root.

    Row ``i`` becomes ``[x_i, m_y, vec(Sigma_y^{1/2})]`` with population
    (divide-by-n) class covariances.
    """
    x, y = ds.features, ds.labels
    d = x.shape[1]
    stats = class_statistics(x, y)
    label_block = np.empty((x.shape[0], d + d * d))
    for cls, st in stats.items():
        rows = y == cls
        label_block[rows, :d] = st.mean
        label_block[rows, d:] = st.cov_sqrt.reshape(-1)
    return AugmentedDataset(
        matrix=as_matrix(np.hstack([x, label_block])),
        feature_dim=d,
        label_block_dim=d + d * d,
        class_stats=stats,
    )


def label_distance(a: ClassStats, b: ClassStats) -> float:
    """``||m_a - m_b||^2 + ||Sigma_a - Sigma_b||_F^2``."""
    if a.mean.shape != b.mean.shape:
        raise ValueError("class statistics have different feature dimensions")
    return float(np.sum((a.mean - b.mean) ** 2) + np.sum((a.cov - b.cov) ** 2))


# -- calibrated gradients ----------------------------------------------------


@dataclass(frozen=True, eq=False)
class ValueScores:
    scores: np.ndarray
    side: str
    ranking: np.ndarray


def calibrated_gradients(ot: OTResult, side: str = "row") -> ValueScores:
    """Sensitivity of the OT cost to moving mass onto one datum.

    ``score_l = f_l - sum_{j != l} f_j / (m - 1)``, i.e. the directional
    derivative of the cost when datum ``l`` gains mass taken evenly from the
    rest. Invariant to the additive gauge of the potentials.
    """
    if side in ("row", "client"):
        f = ot.dual_row
    elif side in ("col", "server"):
        f = ot.dual_col
    else:
        raise ValueError(f"side must be 'row' or 'col', got {side!r}")
    m = f.shape[0]
    if m < 2:
        raise ValueError("calibrated gradients need at least two points on the chosen side")
    # differences against one reference dual come first: an exactly
    # representable shift of all potentials then leaves every later bit alone
    rel = f - f[0]
    scores = (rel - rel.mean()) * (m / (m - 1.0))
    return ValueScores(scores, "row" if side in ("row", "client") else "col",
                       np.argsort(scores, kind="stable"))


@dataclass(frozen=True, eq=False)
class Detection:
    row: np.ndarray
    col: np.ndarray
    row_scores: ValueScores
    col_scores: ValueScores


def _pick(scores: ValueScores, k, threshold) -> np.ndarray:
    s = scores.scores
    if k is not None:
        if k < 0:
            raise ValueError("k must be non-negative")
        if k == 0:
            return np.empty(0, dtype=np.intp)
        order = np.argsort(-s, kind="stable")
        return np.sort(order[: min(k, s.shape[0])])
    return np.flatnonzero(s > threshold)


def _per_side(value):
    if isinstance(value, (tuple, list)):
        return value[0], value[1]
    return value, value


def detect_noisy(mu_side, ref_side, p: float = DEFAULT_P, k=None, threshold=None) -> Detection:
    """Flag the points whose calibrated gradient is largest.

    Works on raw measures (when one party sees both datasets) or on the two
    interpolating measures of a private session. ``k`` (top-k) or
    ``threshold`` may be a scalar or a ``(row, col)`` pair.
    """
    if k is None and threshold is None:
        raise ValueError("give either k or threshold")
    mu = mu_side.measure if isinstance(mu_side, InterpolatingMeasure) else mu_side
    ref = ref_side.measure if isinstance(ref_side, InterpolatingMeasure) else ref_side
    ot = solve_ot(mu, ref, p=p)
    rs, cs = calibrated_gradients(ot, "row"), calibrated_gradients(ot, "col")
    k_row, k_col = _per_side(k)
    th_row, th_col = _per_side(threshold)
    return Detection(_pick(rs, k_row, th_row), _pick(cs, k_col, th_col), rs, cs)


def pullback_indices(plan: OTResult | np.ndarray, idx) -> np.ndarray:
    """Map interpolating-measure indices to the private records they came from."""
    P = plan.plan if isinstance(plan, OTResult) else np.asarray(plan)
    idx = np.asarray(idx, dtype=np.intp)
    if idx.size == 0:
        return idx
    return np.sort(np.argmax(P[idx], axis=1))


def detect_noisy_private(mu: DiscreteMeasure, nu: DiscreteMeasure, defense: DefenseData,
                         t: float = 0.5, p: float = DEFAULT_P, k: int | None = None,
                         threshold: float | None = None) -> np.ndarray:
    """Client-side view of a private detection run.

    Scores are computed on the interpolating measures only; the client then
    pulls the flagged indices back through its own defense-to-data plan.
    """
    eta_mu, plan_mu = local_interpolate(defense, mu, t, p, return_plan=True)
    eta_nu = local_interpolate(defense, nu, t, p)
    det = detect_noisy(eta_mu, eta_nu, p, k=(k, 0) if k is not None else None,
                       threshold=threshold)
    return pullback_indices(plan_mu, det.row)


# -- contribution scores -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Contributions:
    distances: np.ndarray
    scores: np.ndarray


def contribution_scores(clients: list[DiscreteMeasure], validation: DiscreteMeasure,
                        cfg: TriangleConfig | None = None, seed: int = 0) -> Contributions:
    """Min-max normalized closeness of each client to the validation set.

    The closest client scores 1, the farthest 0. When every distance is the
    same all clients score 1.
    """
    if not clients:
        raise ValueError("need at least one client")
    cfg = cfg or TriangleConfig()
    dist = np.array([run_triangle_session(c, validation, cfg, seed).estimate for c in clients])
    lo, hi = dist.min(), dist.max()
    if hi - lo <= 1e-12 * max(1.0, hi):
        scores = np.ones_like(dist)
    else:
        scores = (hi - dist) / (hi - lo)
    return Contributions(dist, scores)


# -- retrieval leakage -------------------------------------------------------


def retrieve_words(query, vocab: np.ndarray, vocab_words: list[str]) -> list[str]:
    support = query.support if hasattr(query, "support") else as_matrix(query)
    vocab = np.asarray(vocab, dtype=np.float64)
    if vocab.ndim != 2 or vocab.shape[0] == 0:
        raise ValueError("empty vocabulary")
    if vocab.shape[0] != len(vocab_words):
        raise ValueError(f"{vocab.shape[0]} vocab rows but {len(vocab_words)} words")
    if vocab.shape[1] != support.shape[1]:
        raise ValueError(f"query dim {support.shape[1]} does not match vocab dim {vocab.shape[1]}")
    nearest = np.argmin(cdist(support, vocab, "sqeuclidean"), axis=1)
    return [vocab_words[i] for i in nearest]


def matching_rate(query, vocab: np.ndarray, vocab_words: list[str], raw_words) -> float:
    """Fraction of query points whose nearest vocabulary word is in ``raw_words``."""
    retrieved = retrieve_words(query, vocab, vocab_words)
    raw = set(raw_words)
    return sum(w in raw for w in retrieved) / len(retrieved)


def load_words(path) -> list[str]:
    lines = Path(path).read_text(encoding="utf-8").split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines

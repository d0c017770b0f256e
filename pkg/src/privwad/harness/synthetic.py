"""Seeded synthetic datasets: Gaussian-mixture clouds with optional corruption."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .._rng import substream
from ..measures import DiscreteMeasure, LabeledDataset, uniform_measure


@dataclass
class SyntheticSpec:
    size: int = 100
    dim: int = 32
    components: int = 1
    spread: float = 4.0  # scale of the component means
    shift: float = 0.0  # added to every coordinate
    scale: float = 1.0
    labeled: bool = False
    flip_ratio: float = 0.0
    noise_ratio: float = 0.0
    noise_sigma: float = 10.0
    seed: int = 0
    name: str = "data"

    def __post_init__(self):
        if self.size < 1 or self.dim < 1 or self.components < 1:
            raise ValueError("size, dim and components must be positive")
        for r in ("flip_ratio", "noise_ratio"):
            v = getattr(self, r)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{r} must lie in [0, 1], got {v}")
        if self.flip_ratio > 0 and not self.labeled:
            raise ValueError("label flips need a labeled dataset")
        if self.flip_ratio > 0 and self.components < 2:
            raise ValueError("label flips need at least two classes")
        if self.scale < 0 or self.noise_sigma < 0:
            raise ValueError("scales must be non-negative")


@dataclass
class SyntheticData:
    spec: SyntheticSpec
    features: np.ndarray
    labels: np.ndarray | None
    corrupted: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.intp))
    flipped: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.intp))

    def measure(self) -> DiscreteMeasure:
        return uniform_measure(self.features)

    def dataset(self) -> LabeledDataset:
        if self.labels is None:
            raise ValueError("dataset was generated without labels")
        return LabeledDataset(self.features, self.labels, self.spec.components)


def _count(ratio: float, n: int) -> int:
    return int(round(ratio * n))


def gen_synthetic(spec: SyntheticSpec) -> SyntheticData:
    """Gaussian mixture; every random choice draws from a named substream.

    Component means come from the ``means`` stream, so datasets sharing a
    seed also share their mixture layout.
    """
    n, d, k = spec.size, spec.dim, spec.components
    means = spec.spread * substream(spec.seed, "synthetic.means").standard_normal((k, d)) if k > 1 \
        else np.zeros((1, d))
    rng = substream(spec.seed, f"synthetic.{spec.name}")
    labels = rng.integers(0, k, size=n) if k > 1 else np.zeros(n, dtype=np.int64)
    x = means[labels] + spec.scale * rng.standard_normal((n, d)) + spec.shift

    corrupted = np.empty(0, dtype=np.intp)
    if spec.noise_ratio > 0:
        corrupted = np.sort(rng.choice(n, _count(spec.noise_ratio, n), replace=False))
        x[corrupted] += spec.noise_sigma * rng.standard_normal((corrupted.size, d))

    flipped = np.empty(0, dtype=np.intp)
    if spec.flip_ratio > 0:
        flipped = np.sort(rng.choice(n, _count(spec.flip_ratio, n), replace=False))
        # shift to a different class
        labels = labels.copy()
        labels[flipped] = (labels[flipped] + rng.integers(1, k, size=flipped.size)) % k

    return SyntheticData(spec, x, labels if spec.labeled else None, corrupted, flipped)


@dataclass
class TextCorpus:
    vocab: np.ndarray
    words: list[str]
    client_words: list[str]
    server_words: list[str]

    def _embed(self, ws) -> DiscreteMeasure:
        index = {w: i for i, w in enumerate(self.words)}
        return uniform_measure(self.vocab[[index[w] for w in ws]])

    def client_measure(self) -> DiscreteMeasure:
        return self._embed(self.client_words)

    def server_measure(self) -> DiscreteMeasure:
        return self._embed(self.server_words)


def gen_text(vocab_size: int = 1000, dim: int = 16, words: int = 50, overlap: float = 0.8,
             seed: int = 0) -> TextCorpus:
    """Random word embeddings and two word lists sharing ``overlap`` of their words."""
    if not (0 < words and 2 * words <= vocab_size):
        raise ValueError("vocabulary too small for two word lists")
    if not 0.0 <= overlap <= 1.0:
        raise ValueError("overlap must lie in [0, 1]")
    rng = substream(seed, "synthetic.text")
    vocab = rng.standard_normal((vocab_size, dim))
    names = [f"w{i:05d}" for i in range(vocab_size)]
    perm = rng.permutation(vocab_size)
    k = int(round(overlap * words))
    client = perm[:words]
    server = np.concatenate([perm[:k], perm[words:2 * words - k]])
    return TextCorpus(vocab, names, [names[i] for i in client], [names[i] for i in server])

"""Top-Q nearest/furthest voting with decaying weights, Gaussian noising,
and per-category contrastive selection.

Each private sample votes only inside the same-label slice of the synthetic
dataset: its Q closest candidates receive weights 1, 1/2, ..., 2^{-(Q-1)} in
the nearest histogram and its Q most distant candidates the same weights in
the furthest histogram. Pools smaller than Q cast fewer votes (never
repeated indices), which keeps the per-sample mass below 2 per histogram.
All ties break toward the smaller global index so replays are exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import EmbeddedSet, SyntheticDataset, SyntheticSample, VoteHistograms
from .errors import PrivacyDisciplineError, VotingError


def pairwise_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Euclidean distance between two embedding vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise VotingError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def vote_weights(count: int) -> np.ndarray:
    """Decaying weights 1, 1/2, ..., 2^{-(count-1)}."""
    return 2.0 ** (-np.arange(count, dtype=np.float64))


def top_q_vote(private: EmbeddedSet, synthetic: EmbeddedSet, q: int) -> VoteHistograms:
    """Cast every private sample's Top-Q nearest and furthest votes.

    Returns the pre-noise histogram pair, length ``len(synthetic)``.
    """
    if q < 1:
        raise VotingError("Q must be >= 1")
    if len(private) == 0:
        raise VotingError("private set is empty")
    if private.dimension != synthetic.dimension:
        raise VotingError(
            f"dimension mismatch: private {private.dimension}, synthetic {synthetic.dimension}"
        )
    pools: dict[str, np.ndarray] = {}
    for label in set(private.labels):
        indices = np.flatnonzero(np.asarray(synthetic.labels, dtype=object) == label)
        if indices.size == 0:
            raise VotingError(f"no synthetic samples share the label {label!r}")
        pools[label] = indices

    nearest = np.zeros(len(synthetic), dtype=np.float64)
    furthest = np.zeros(len(synthetic), dtype=np.float64)
    for row, label in enumerate(private.labels):
        pool = pools[label]
        distances = np.linalg.norm(synthetic.vectors[pool] - private.vectors[row], axis=1)
        cast = min(q, pool.size)
        weights = vote_weights(cast)
        # lexsort: last key is primary; ties fall to the smaller global index
        near_order = np.lexsort((pool, distances))[:cast]
        far_order = np.lexsort((pool, -distances))[:cast]
        np.add.at(nearest, pool[near_order], weights)
        np.add.at(furthest, pool[far_order], weights)
    return VoteHistograms(nearest=nearest, furthest=furthest, noised=False)


def add_gaussian_noise(
    histograms: VoteHistograms, sigma: float, rng: np.random.Generator
) -> VoteHistograms:
    """Add independent N(0, sigma^2) noise to every entry of both histograms.

    sigma = 0 leaves values unchanged but still flags the result as noised,
    so the no-noise mode follows the same code path. Noising twice is a
    budget violation and raises.
    """
    if histograms.noised:
        raise PrivacyDisciplineError("histograms were already noised once")
    if sigma < 0:
        raise VotingError("sigma must be non-negative")
    size = len(histograms)
    nearest = histograms.nearest + rng.normal(0.0, sigma, size)
    furthest = histograms.furthest + rng.normal(0.0, sigma, size)
    return VoteHistograms(nearest=nearest, furthest=furthest, noised=True)


@dataclass(frozen=True)
class ContrastiveSelection:
    """Per-category lists of the top-voted near (good) and far (bad) samples."""

    near: Mapping[str, tuple[SyntheticSample, ...]]
    far: Mapping[str, tuple[SyntheticSample, ...]]
    size: int

    def near_indices(self) -> dict[str, list[int]]:
        return {c: [s.global_index for s in items] for c, items in self.near.items()}

    def far_indices(self) -> dict[str, list[int]]:
        return {c: [s.global_index for s in items] for c, items in self.far.items()}


def _top_by_votes(
    votes: np.ndarray, candidate_indices: np.ndarray, size: int
) -> np.ndarray:
    # rank by descending vote value, ties toward the smaller global index
    order = np.lexsort((candidate_indices, -votes[candidate_indices]))
    return candidate_indices[order[: min(size, candidate_indices.size)]]


def select_contrastive(
    dataset: SyntheticDataset, histograms: VoteHistograms, size: int
) -> ContrastiveSelection:
    """Per category, pick the ``size`` samples with the most nearest votes
    (near set) and the most furthest votes (far set).

    Noised entries may be negative; they are ranked as-is (post-processing
    adds no privacy cost). Categories smaller than ``size`` return whole.
    """
    if size < 1:
        raise VotingError("selection size must be >= 1")
    if not histograms.noised:
        raise PrivacyDisciplineError("selection must consume noised histograms only")
    if len(histograms) != len(dataset):
        raise VotingError(
            f"histogram length {len(histograms)} does not match dataset size {len(dataset)}"
        )
    by_label = dataset.indices_by_label()
    near: dict[str, tuple[SyntheticSample, ...]] = {}
    far: dict[str, tuple[SyntheticSample, ...]] = {}
    for category in dataset.task.categories:
        indices = np.asarray(by_label[category], dtype=np.intp)
        if indices.size == 0:
            raise VotingError(f"category {category!r} has no synthetic samples")
        near[category] = tuple(
            dataset[i] for i in _top_by_votes(histograms.nearest, indices, size)
        )
        far[category] = tuple(
            dataset[i] for i in _top_by_votes(histograms.furthest, indices, size)
        )
    return ContrastiveSelection(near=near, far=far, size=size)


def write_histograms(histograms: VoteHistograms, path) -> None:
    """Dump both histograms as numeric columns (index, nearest, furthest)."""
    data = np.column_stack(
        [np.arange(len(histograms)), histograms.nearest, histograms.furthest]
    )
    np.savetxt(
        path,
        data,
        fmt=("%d", "%.17g", "%.17g"),
        delimiter=",",
        header="index,nearest,furthest",
        comments="",
    )

"""Multi-party mode: Dirichlet partitioning of the private set, per-party
local DP voting, and simulated secure summation of the histograms.

Secure aggregation is simulated by in-process summation behind an opaque
envelope: a party's noised histograms are sealed at vote time and nothing
outside this module can read an individual contribution, only the sum.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import EmbeddedSet, VoteHistograms
from .errors import ConfigError, VotingError
from .voting import add_gaussian_noise, top_q_vote


@dataclass(frozen=True)
class Party:
    """One data party: its slice of the private set, with embeddings."""

    party_id: int
    sample_indices: tuple[int, ...]
    members: EmbeddedSet

    def __post_init__(self):
        if len(self.members) == 0:
            raise ConfigError(f"party {self.party_id} has no private samples")
        if len(self.sample_indices) != len(self.members):
            raise ConfigError("sample indices and member set must align")

    @property
    def size(self) -> int:
        return len(self.members)


def _quota_counts(total: int, proportions: np.ndarray) -> np.ndarray:
    """Largest-remainder apportionment of ``total`` by ``proportions``."""
    quotas = total * proportions
    counts = np.floor(quotas).astype(int)
    leftover = total - int(counts.sum())
    if leftover > 0:
        fractions = quotas - counts
        # biggest fractional parts win the leftovers, ties to the lower index
        order = np.lexsort((np.arange(len(proportions)), -fractions))
        counts[order[:leftover]] += 1
    return counts


def partition_dirichlet(
    labels: Sequence[str],
    parties: int,
    alpha: float,
    rng: np.random.Generator,
    max_retries: int = 1000,
) -> list[list[int]]:
    """Label-skewed partition: per category, Dirichlet(alpha) proportions
    allocate that category's samples across parties (largest-remainder
    apportionment, so small categories still follow the drawn proportions).

    Redrawn until every party is non-empty (bounded retries). Returns
    disjoint index lists covering the input exactly.
    """
    if parties < 1:
        raise ConfigError("party count must be >= 1")
    if alpha <= 0:
        raise ConfigError("alpha must be positive")
    if len(labels) < parties:
        raise ConfigError(f"cannot split {len(labels)} samples across {parties} parties")
    if parties == 1:
        return [list(range(len(labels)))]
    by_label: dict[str, list[int]] = {}
    for index, label in enumerate(labels):
        by_label.setdefault(label, []).append(index)
    for _ in range(max_retries):
        assignment: list[list[int]] = [[] for _ in range(parties)]
        for indices in by_label.values():
            shuffled = np.asarray(indices)[rng.permutation(len(indices))]
            proportions = rng.dirichlet(np.full(parties, alpha))
            counts = _quota_counts(len(shuffled), proportions)
            cursor = 0
            for party_index, count in enumerate(counts):
                assignment[party_index].extend(int(i) for i in shuffled[cursor : cursor + count])
                cursor += count
        if all(assignment):
            return [sorted(part) for part in assignment]
    raise ConfigError(
        f"could not give every one of {parties} parties a sample after "
        f"{max_retries} draws; use more private samples or a larger alpha"
    )


def build_parties(private: EmbeddedSet, partition: Sequence[Sequence[int]]) -> list[Party]:
    seen: set[int] = set()
    for part in partition:
        overlap = seen.intersection(part)
        if overlap:
            raise ConfigError(f"partition is not disjoint: indices {sorted(overlap)} repeat")
        seen.update(part)
    if seen != set(range(len(private))):
        raise ConfigError("partition must cover the private set exactly")
    parties = []
    for party_id, part in enumerate(partition):
        indices = tuple(int(i) for i in part)
        members = EmbeddedSet(
            labels=tuple(private.labels[i] for i in indices),
            vectors=private.vectors[list(indices)],
        )
        parties.append(Party(party_id=party_id, sample_indices=indices, members=members))
    return parties


class AggregationEnvelope:
    """Opaque carrier of one party's noised histograms.

    The public surface exposes only the histogram length and the noised
    flag; the orchestrator learns individual contributions only through
    their sum.
    """

    def __init__(self, histograms: VoteHistograms):
        if not histograms.noised:
            raise ConfigError("only noised histograms may leave a party")
        self.__histograms = histograms

    @property
    def length(self) -> int:
        return len(self.__histograms)

    @property
    def noised(self) -> bool:
        return True

    def _accumulate(self, nearest: np.ndarray, furthest: np.ndarray) -> None:
        nearest += self.__histograms.nearest
        furthest += self.__histograms.furthest


def party_vote(
    party: Party,
    synthetic: EmbeddedSet,
    q: int,
    sigma_local: float,
    rng: np.random.Generator,
) -> AggregationEnvelope:
    """One party's local Top-Q voting plus its share of the Gaussian noise,
    sealed for aggregation."""
    histograms = top_q_vote(party.members, synthetic, q)
    return AggregationEnvelope(add_gaussian_noise(histograms, sigma_local, rng))


def secure_sum(envelopes: Sequence[AggregationEnvelope]) -> VoteHistograms:
    """Element-wise sum of the parties' histograms; the only reveal path."""
    if not envelopes:
        raise VotingError("no envelopes to aggregate")
    length = envelopes[0].length
    for envelope in envelopes[1:]:
        if envelope.length != length:
            raise VotingError(
                f"envelope lengths differ: {envelope.length} vs {length}"
            )
    nearest = np.zeros(length, dtype=np.float64)
    furthest = np.zeros(length, dtype=np.float64)
    for envelope in envelopes:
        envelope._accumulate(nearest, furthest)
    return VoteHistograms(nearest=nearest, furthest=furthest, noised=True)


def write_partition_manifest(partition: Sequence[Sequence[int]], path: str | Path) -> None:
    payload = {
        "parties": len(partition),
        "assignment": {str(i): list(part) for i, part in enumerate(partition)},
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")

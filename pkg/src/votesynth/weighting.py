"""Generator importance weights from the noised nearest histogram, and the
integer per-iteration generation allocations they imply.

A generator's raw weight is its share of total nearest-vote mass divided by
its share of the dataset, so owning many mediocre samples is not rewarded.
Raw weights average 1 across generators; they are renormalized to sum 1
before allocation so every iteration still produces round(N/T) samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, DegenerateHistogramError


@dataclass
class GeneratorState:
    """Per-generator weight, allocation, and ownership bookkeeping."""

    generator_id: str
    weight: float
    allocation: int
    owned_count: int = 0
    raw_weight: float | None = None


def round_half_up(value: float) -> int:
    """Rounding with .5 going up, as in the allocation rule."""
    return int(math.floor(value + 0.5))


def score_generators(
    nearest: np.ndarray,
    ownership: Sequence[str],
    generator_ids: Sequence[str],
) -> dict[str, float]:
    """Raw importance weights: vote-mass share over sample share, per generator.

    ``ownership`` lists the owning generator per dataset position, aligned
    with the histogram. Raises :class:`DegenerateHistogramError` when the
    histogram sums to zero (caller falls back to uniform weights).
    """
    nearest = np.asarray(nearest, dtype=np.float64)
    if nearest.ndim != 1 or nearest.shape[0] != len(ownership):
        raise ConfigError("histogram and ownership map must align")
    unknown = set(ownership) - set(generator_ids)
    if unknown:
        raise ConfigError(f"samples owned by unregistered generators: {sorted(unknown)}")
    total_votes = float(nearest.sum())
    if total_votes == 0.0:
        raise DegenerateHistogramError("nearest histogram sums to zero")
    total = len(ownership)
    owners = np.asarray(ownership, dtype=object)
    scores = nearest / total_votes
    weights: dict[str, float] = {}
    for generator_id in generator_ids:
        mask = owners == generator_id
        owned = int(mask.sum())
        if owned == 0:
            raise ConfigError(f"generator {generator_id!r} owns no samples")
        weights[generator_id] = float(scores[mask].sum()) / (owned / total)
    return weights


def normalize_weights(
    raw: Mapping[str, float], floor: float | None = None
) -> dict[str, float]:
    """Clamp to a positive floor (default 0.01/K) and renormalize to sum 1."""
    if not raw:
        raise ConfigError("need at least one generator weight")
    if floor is None:
        floor = 0.01 / len(raw)
    if floor <= 0:
        raise ConfigError("weight floor must be positive")
    clamped = {k: max(float(w), floor) for k, w in raw.items()}
    total = sum(clamped.values())
    return {k: w / total for k, w in clamped.items()}


def allocate(normalized: Mapping[str, float], per_iteration: int) -> dict[str, int]:
    """Integer allocations summing exactly to ``per_iteration``.

    Round-half-up per generator, then hand out (or take back) the remainder
    one sample at a time in descending-weight order, ties by id.
    """
    ids = sorted(normalized, key=lambda k: (-normalized[k], k))
    counts = {k: round_half_up(per_iteration * normalized[k]) for k in ids}
    shortfall = per_iteration - sum(counts.values())
    cursor = 0
    while shortfall > 0:
        counts[ids[cursor % len(ids)]] += 1
        shortfall -= 1
        cursor += 1
    # over-allocation comes back from the lightest generators first
    takeback = list(reversed(ids))
    cursor = 0
    while shortfall < 0:
        candidate = takeback[cursor % len(takeback)]
        if counts[candidate] > 0:
            counts[candidate] -= 1
            shortfall += 1
        cursor += 1
    return counts


def normalize_and_allocate(
    raw: Mapping[str, float],
    total_samples: int,
    iterations: int,
    floor: float | None = None,
) -> tuple[dict[str, float], dict[str, int]]:
    """Full weighting step: clamp + renormalize, then allocate round(N/T)."""
    per_iteration = round_half_up(total_samples / iterations)
    if per_iteration < len(raw):
        raise ConfigError(
            f"per-iteration budget {per_iteration} is smaller than the "
            f"{len(raw)} generators; every generator needs a chance"
        )
    normalized = normalize_weights(raw, floor=floor)
    return normalized, allocate(normalized, per_iteration)


def uniform_weights(generator_ids: Sequence[str]) -> dict[str, float]:
    """The 1/K initialization used before any votes exist."""
    if not generator_ids:
        raise ConfigError("need at least one generator")
    share = 1.0 / len(generator_ids)
    return {generator_id: share for generator_id in generator_ids}

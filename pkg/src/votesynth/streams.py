"""Deterministic named RNG streams derived from the single run seed.

Every consumer (generator x iteration, party noise, partitioning, trims)
gets its own stream keyed by name, so concurrent execution and replay both
see identical randomness.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _tag_to_int(tag: str | int) -> int:
    if isinstance(tag, int):
        if tag < 0:
            raise ValueError("integer stream tags must be non-negative")
        return tag % (2**32)
    digest = hashlib.blake2b(tag.encode("utf-8"), digest_size=4).digest()
    return int.from_bytes(digest, "big")


def stream(root_seed: int, *tags: str | int) -> np.random.Generator:
    """Independent generator for (root_seed, tags); stable across runs."""
    key = tuple(_tag_to_int(tag) for tag in tags)
    return np.random.default_rng(np.random.SeedSequence(entropy=root_seed, spawn_key=key))


def stream_key(*tags: str | int) -> list[int]:
    """The spawn key used for these tags, for trace checkpoints."""
    return [_tag_to_int(tag) for tag in tags]

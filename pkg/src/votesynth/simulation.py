"""Controllable geometry for simulation runs: a per-category Gaussian world
that private samples are drawn from, and per-generator label means derived
relative to it (matched generators sit on the world means, poor ones are
pushed away by their quality offset).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .core import LabeledSample, TaskSpec
from .embedding import SimulationEmbedder
from .errors import ConfigError
from .generation import GeneratorBinding
from .streams import stream


@dataclass(frozen=True)
class SimulationWorld:
    """Ground-truth private distribution: one Gaussian per category."""

    task: TaskSpec
    dimension: int
    category_means: Mapping[str, np.ndarray]
    spread: float

    def mean_for(self, label: str) -> np.ndarray:
        if label not in self.category_means:
            raise ConfigError(f"world has no category {label!r}")
        return self.category_means[label]


def _unit_vector(rng: np.random.Generator, dimension: int) -> np.ndarray:
    vector = rng.standard_normal(dimension)
    norm = np.linalg.norm(vector)
    while norm < 1e-12:
        vector = rng.standard_normal(dimension)
        norm = np.linalg.norm(vector)
    return vector / norm


def build_world(
    task: TaskSpec,
    dimension: int,
    seed: int,
    separation: float = 4.0,
    spread: float = 0.25,
) -> SimulationWorld:
    """Category means at ``separation`` along seeded random unit directions."""
    if separation <= 0 or spread <= 0:
        raise ConfigError("separation and spread must be positive")
    rng = stream(seed, "world")
    means = {
        category: separation * _unit_vector(rng, dimension) for category in task.categories
    }
    return SimulationWorld(task=task, dimension=dimension, category_means=means, spread=spread)


def draw_private_samples(
    world: SimulationWorld,
    per_category: int,
    embedder: SimulationEmbedder,
    rng: np.random.Generator,
) -> list[LabeledSample]:
    """Vector-encoded private samples, ``per_category`` per category."""
    if per_category < 1:
        raise ConfigError("need at least one private sample per category")
    samples = []
    for category in world.task.categories:
        mean = world.mean_for(category)
        for _ in range(per_category):
            vector = mean + world.spread * rng.standard_normal(world.dimension)
            samples.append(LabeledSample(text=embedder.encode_vector(vector), label=category))
    return samples


def resolve_mock_means(
    world: SimulationWorld, binding: GeneratorBinding
) -> dict[str, np.ndarray]:
    """Label means for a mock generator: world means shifted by its quality
    offset along a direction fixed by the generator id."""
    if binding.label_means is not None:
        return {
            label: np.asarray(mean, dtype=np.float64)
            for label, mean in binding.label_means.items()
        }
    offset = np.zeros(world.dimension)
    if binding.quality_offset != 0.0:
        direction = _unit_vector(stream(0, "mock-offset", binding.id), world.dimension)
        offset = binding.quality_offset * direction
    return {
        category: world.mean_for(category) + offset for category in world.task.categories
    }

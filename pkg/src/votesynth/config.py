"""Run configuration: a human-editable YAML tree mapped onto the typed
bindings of every subsystem, with cross-field validation in one place.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .core import TaskSpec
from .embedding import SIMULATION_KIND, EmbedderBinding
from .errors import ConfigError
from .generation import MOCK_KIND, GeneratorBinding
from .privacy import PrivacyBudget


@dataclass(frozen=True)
class SimulatedPrivateData:
    """Draw the private set from a seeded per-category Gaussian world."""

    per_category: int
    separation: float = 4.0
    spread: float = 0.25


@dataclass(frozen=True)
class PrivateDataSpec:
    path: str | None = None
    simulate: SimulatedPrivateData | None = None

    def __post_init__(self):
        if (self.path is None) == (self.simulate is None):
            raise ConfigError("private_data needs exactly one of: path, simulate")


@dataclass(frozen=True)
class RunConfig:
    task: TaskSpec
    total_samples: int
    iterations: int
    votes_per_sample: int
    context_samples: int
    seed: int
    output_dir: Path
    privacy: PrivacyBudget
    embedder: EmbedderBinding
    generators: tuple[GeneratorBinding, ...]
    private_data: PrivateDataSpec
    parties: int = 1
    partition_alpha: float = 1.0
    weight_floor: float | None = None
    templates_path: Path | None = None

    def __post_init__(self):
        if self.total_samples < self.iterations:
            raise ConfigError("total samples must be >= iterations")
        if self.iterations < 2:
            raise ConfigError("need at least 2 iterations")
        if self.votes_per_sample < 1:
            raise ConfigError("votes per sample must be >= 1")
        if self.context_samples < 2:
            raise ConfigError("context sample count must be >= 2")
        if not self.generators:
            raise ConfigError("at least one generator is required")
        ids = [generator.id for generator in self.generators]
        if len(set(ids)) != len(ids):
            raise ConfigError("generator ids must be unique")
        if self.parties < 1:
            raise ConfigError("party count must be >= 1")
        if self.partition_alpha <= 0:
            raise ConfigError("partition alpha must be positive")
        if self.privacy.iterations != self.iterations:
            raise ConfigError("privacy budget iterations must match the run")
        if self.privacy.parties != self.parties:
            raise ConfigError("privacy budget party count must match the run")
        needs_simulation = self.private_data.simulate is not None or any(
            generator.kind == MOCK_KIND for generator in self.generators
        )
        if needs_simulation and self.embedder.kind != SIMULATION_KIND:
            raise ConfigError(
                "mock generators and simulated private data require the simulation embedder"
            )


def _require(mapping: Mapping[str, Any], key: str, where: str) -> Any:
    if key not in mapping:
        raise ConfigError(f"missing {where}.{key}")
    return mapping[key]


def build_run_config(tree: Mapping[str, Any], base_dir: Path | None = None) -> RunConfig:
    """Materialize a RunConfig from a parsed YAML tree."""
    base_dir = base_dir or Path.cwd()

    task_tree = _require(tree, "task", "config")
    task = TaskSpec(
        name=_require(task_tree, "name", "task"),
        categories=tuple(_require(task_tree, "categories", "task")),
        attributes=tuple(task_tree.get("attributes") or ()),
    )

    run_tree = _require(tree, "run", "config")
    federated_tree = tree.get("federated") or {}
    parties = int(federated_tree.get("parties", 1))

    privacy_tree = _require(tree, "privacy", "config")
    privacy = PrivacyBudget(
        epsilon=float(privacy_tree.get("epsilon", 0.0) or 0.0),
        delta=float(_require(privacy_tree, "delta", "privacy")),
        iterations=int(_require(run_tree, "iterations", "run")),
        parties=parties,
        level=privacy_tree.get("level", "sample"),
        max_party_size=privacy_tree.get("max_party_size"),
        infinite_epsilon=bool(privacy_tree.get("infinite_epsilon", False)),
    )

    embedder_tree = _require(tree, "embedder", "config")
    embedder = EmbedderBinding(
        kind=_require(embedder_tree, "kind", "embedder"),
        dimension=int(_require(embedder_tree, "dimension", "embedder")),
        model=embedder_tree.get("model"),
        endpoint=embedder_tree.get("endpoint"),
        cache_dir=embedder_tree.get("cache_dir"),
        seed=int(embedder_tree.get("seed", 0)),
        api_key_env=embedder_tree.get("api_key_env", "OPENAI_API_KEY"),
    )

    generators = []
    for generator_tree in _require(tree, "generators", "config"):
        label_means = generator_tree.get("label_means")
        generators.append(
            GeneratorBinding(
                id=_require(generator_tree, "id", "generator"),
                kind=_require(generator_tree, "kind", "generator"),
                covariance_scale=float(generator_tree.get("covariance_scale", 0.5)),
                responsiveness=float(generator_tree.get("responsiveness", 0.0)),
                repulsion=float(generator_tree.get("repulsion", 0.5)),
                quality_offset=float(generator_tree.get("quality_offset", 0.0)),
                label_means=(
                    {label: tuple(vec) for label, vec in label_means.items()}
                    if label_means
                    else None
                ),
                endpoint=generator_tree.get("endpoint"),
                model=generator_tree.get("model"),
                temperature=float(generator_tree.get("temperature", 1.0)),
                max_tokens=int(generator_tree.get("max_tokens", 256)),
                api_style=generator_tree.get("api_style", "chat"),
                api_key_env=generator_tree.get("api_key_env", "OPENAI_API_KEY"),
            )
        )

    private_tree = _require(tree, "private_data", "config")
    simulate_tree = private_tree.get("simulate")
    private_data = PrivateDataSpec(
        path=(
            str((base_dir / private_tree["path"]).resolve())
            if private_tree.get("path")
            else None
        ),
        simulate=(
            SimulatedPrivateData(
                per_category=int(_require(simulate_tree, "per_category", "simulate")),
                separation=float(simulate_tree.get("separation", 4.0)),
                spread=float(simulate_tree.get("spread", 0.25)),
            )
            if simulate_tree is not None
            else None
        ),
    )

    templates_tree = tree.get("templates") or {}
    templates_path = templates_tree.get("path")

    return RunConfig(
        task=task,
        total_samples=int(_require(run_tree, "total_samples", "run")),
        iterations=int(run_tree["iterations"]),
        votes_per_sample=int(_require(run_tree, "votes_per_sample", "run")),
        context_samples=int(_require(run_tree, "context_samples", "run")),
        seed=int(run_tree.get("seed", 0)),
        output_dir=(base_dir / run_tree.get("output_dir", "out")).resolve(),
        privacy=privacy,
        embedder=embedder,
        generators=tuple(generators),
        private_data=private_data,
        parties=parties,
        partition_alpha=float(federated_tree.get("alpha", 1.0)),
        weight_floor=(
            float(run_tree["weight_floor"]) if run_tree.get("weight_floor") is not None else None
        ),
        templates_path=(base_dir / templates_path).resolve() if templates_path else None,
    )


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8") as handle:
            tree = yaml.safe_load(handle)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}") from exc
    if not isinstance(tree, Mapping):
        raise ConfigError(f"config file {path} must hold a mapping")
    return build_run_config(tree, base_dir=path.parent)

"""The synthesis loop: generation, DP voting, contrastive selection, and
generator re-weighting, iterated T times over an append-only dataset.

Iteration 0 generates zero-shot under uniform weights. Every iteration
except the last ends with one noised histogram release that drives the next
round's in-context selection and weights; the last iteration only
generates, so a run spends exactly T-1 releases. All randomness flows from
the run seed through named streams, making runs byte-replayable.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import RunConfig
from .core import (
    EmbeddedSet,
    LabeledSample,
    SyntheticDataset,
    read_private_samples,
    write_dataset,
)
from .embedding import SimulationEmbedder, build_embedder
from .errors import BackendError, ConfigError, DegenerateHistogramError
from .evaluation import frechet_distance
from .federated import (
    build_parties,
    partition_dirichlet,
    party_vote,
    secure_sum,
    write_partition_manifest,
)
from .generation import (
    CONTRASTIVE,
    FEW_SHOT,
    MOCK_KIND,
    ZERO_SHOT,
    Generator,
    HttpGenerator,
    MockGenerator,
    load_template,
    weighted_generation,
)
from .privacy import ReleaseAccountant, calibrate_sigma
from .simulation import build_world, draw_private_samples, resolve_mock_means
from .streams import stream, stream_key
from .voting import add_gaussian_noise, select_contrastive, top_q_vote, write_histograms
from .weighting import allocate, normalize_weights, round_half_up, score_generators, uniform_weights

logger = logging.getLogger(__name__)

FULL_MODE = "full"
NO_CONTRAST = "no_contrast"
NO_WEIGHTING = "no_weighting"
Q_OVERRIDE = "q_override"
EPSILON_SWEEP = "epsilon_sweep"


@dataclass(frozen=True)
class IterationRecord:
    """One iteration of the replayable trace."""

    iteration: int
    dataset_size: int
    template_kind: str
    released: bool
    sigma: float | None
    frechet: float | None
    generators: dict[str, dict]
    prompt_digests: dict[str, str]
    near_selection: dict[str, list[int]] | None
    far_selection: dict[str, list[int]] | None
    rng_key: list[int]

    def to_json(self) -> dict:
        return {
            "iteration": self.iteration,
            "dataset_size": self.dataset_size,
            "template_kind": self.template_kind,
            "released": self.released,
            "sigma": self.sigma,
            "frechet": self.frechet,
            "generators": self.generators,
            "prompt_digests": self.prompt_digests,
            "near_selection": self.near_selection,
            "far_selection": self.far_selection,
            "rng_key": self.rng_key,
        }


@dataclass
class RunResult:
    dataset: SyntheticDataset
    trace: list[IterationRecord]
    output_dir: Path | None

    @property
    def final_frechet(self) -> float | None:
        return self.trace[-1].frechet if self.trace else None


def _prompt_digest(prompts) -> str:
    joined = "\x00".join(build.prompt for build in prompts)
    return hashlib.sha256(joined.encode("utf-8")).hexdigest()


def _load_private_samples(config: RunConfig, embedder) -> list[LabeledSample]:
    spec = config.private_data
    if spec.path is not None:
        samples = read_private_samples(spec.path, task=config.task)
        if not samples:
            raise ConfigError(f"private data file {spec.path} holds no samples")
        return samples
    world = build_world(
        config.task,
        config.embedder.dimension,
        config.seed,
        separation=spec.simulate.separation,
        spread=spec.simulate.spread,
    )
    return draw_private_samples(
        world, spec.simulate.per_category, embedder, stream(config.seed, "private")
    )


def _build_generators(config: RunConfig, embedder, transport=None) -> list[Generator]:
    world = None
    generators: list[Generator] = []
    for binding in config.generators:
        if binding.kind == MOCK_KIND:
            if not isinstance(embedder, SimulationEmbedder):
                raise ConfigError("mock generators require the simulation embedder")
            if binding.label_means is None:
                if world is None:
                    simulate = config.private_data.simulate
                    if simulate is None:
                        raise ConfigError(
                            f"mock generator {binding.id!r} needs explicit label_means "
                            "when private data is not simulated"
                        )
                    world = build_world(
                        config.task,
                        config.embedder.dimension,
                        config.seed,
                        separation=simulate.separation,
                        spread=simulate.spread,
                    )
                means = resolve_mock_means(world, binding)
            else:
                means = {
                    label: np.asarray(mean, dtype=np.float64)
                    for label, mean in binding.label_means.items()
                }
            generators.append(MockGenerator(binding, embedder, means))
        else:
            generators.append(HttpGenerator(binding, transport=transport))
    return generators


def run(
    config: RunConfig,
    mode: str = FULL_MODE,
    write_outputs: bool = True,
    output_dir: Path | None = None,
    embedder_transport=None,
    generator_transport=None,
    dump_histograms: bool = False,
) -> RunResult:
    """Execute one full synthesis run and (optionally) persist its outputs.

    ``mode`` selects the ablations: ``no_contrast`` swaps the contrastive
    prompt for the plain few-shot one (near examples only); ``no_weighting``
    pins uniform weights every iteration while still voting and selecting.
    On an abort, whatever trace exists is flushed before the error
    propagates.
    """
    if mode not in (FULL_MODE, NO_CONTRAST, NO_WEIGHTING):
        raise ConfigError(f"unknown run mode {mode!r}")
    contrastive_prompts = mode != NO_CONTRAST
    dynamic_weights = mode != NO_WEIGHTING

    task = config.task
    embedder = build_embedder(config.embedder, transport=embedder_transport)
    template = load_template(task, config.templates_path)
    generators = _build_generators(config, embedder, transport=generator_transport)
    generator_ids = [generator.id for generator in generators]

    private_samples = _load_private_samples(config, embedder)
    private = EmbeddedSet(
        labels=tuple(sample.label for sample in private_samples),
        vectors=embedder.embed_batch(private_samples),
    )

    partition = partition_dirichlet(
        list(private.labels),
        config.parties,
        config.partition_alpha,
        stream(config.seed, "partition"),
    )
    parties = build_parties(private, partition) if config.parties > 1 else None

    sigma = calibrate_sigma(config.privacy)
    accountant = ReleaseAccountant(config.privacy)
    per_iteration = round_half_up(config.total_samples / config.iterations)
    if per_iteration < len(generators):
        raise ConfigError(
            f"per-iteration budget {per_iteration} is smaller than the "
            f"{len(generators)} generators"
        )

    dataset = SyntheticDataset(task, generator_ids)
    synth_vectors = np.empty((0, embedder.dimension))
    weights = uniform_weights(generator_ids)
    previous_raw: dict[str, float] | None = None
    selection = None
    trace: list[IterationRecord] = []
    noised_rounds: list[tuple[int, object]] = []
    target_dir = Path(output_dir or config.output_dir)

    def flush(with_histograms: bool) -> Path:
        target_dir.mkdir(parents=True, exist_ok=True)
        write_dataset(dataset, target_dir / "dataset.jsonl")
        write_trace(trace, target_dir / "trace.jsonl")
        write_metrics_csv(trace, target_dir / "metrics.csv")
        if config.parties > 1:
            write_partition_manifest(partition, target_dir / "partition.json")
        if with_histograms:
            for round_index, noised in noised_rounds:
                write_histograms(noised, target_dir / f"histograms_{round_index:03d}.csv")
        return target_dir

    try:
        for t in range(config.iterations):
            weights_used = dict(weights)
            allocations = allocate(weights_used, per_iteration)
            outcomes = None
            new_samples = []
            new_vectors = None
            for attempt in range(2):
                try:
                    start = len(dataset)
                    outcomes = []
                    for generator in generators:
                        outcome = weighted_generation(
                            generator,
                            task,
                            template,
                            selection,
                            allocations[generator.id],
                            config.context_samples,
                            born_iteration=t,
                            start_index=start,
                            rng=stream(config.seed, "generate", generator.id, t),
                            contrastive=contrastive_prompts,
                        )
                        start += len(outcome.samples)
                        outcomes.append(outcome)
                    new_samples = [s for outcome in outcomes for s in outcome.samples]
                    new_vectors = (
                        embedder.embed_batch([record.sample for record in new_samples])
                        if new_samples
                        else np.empty((0, embedder.dimension))
                    )
                    break
                except BackendError as error:
                    if attempt == 0:
                        logger.warning("iteration %d failed (%s); retrying once", t, error)
                        continue
                    raise
            dataset = dataset.append_batch(new_samples)
            synth_vectors = np.vstack([synth_vectors, new_vectors])
            synthetic = EmbeddedSet(labels=tuple(dataset.labels()), vectors=synth_vectors)
            frechet = (
                frechet_distance(private.vectors, synth_vectors)
                if len(dataset) >= 2 and len(private) >= 2
                else None
            )

            template_kind = ZERO_SHOT if selection is None else (
                CONTRASTIVE if contrastive_prompts else FEW_SHOT
            )
            is_feedback_round = t <= config.iterations - 2
            near_digest = far_digest = None
            if is_feedback_round:
                if parties is None:
                    histograms = top_q_vote(private, synthetic, config.votes_per_sample)
                    noised = add_gaussian_noise(
                        histograms, sigma, stream(config.seed, "noise", t)
                    )
                else:
                    envelopes = [
                        party_vote(
                            party,
                            synthetic,
                            config.votes_per_sample,
                            sigma,
                            stream(config.seed, "party-noise", party.party_id, t),
                        )
                        for party in parties
                    ]
                    noised = secure_sum(envelopes)
                accountant.register_release(t)
                noised_rounds.append((t, noised))
                selection = select_contrastive(dataset, noised, config.context_samples)
                near_digest = selection.near_indices()
                far_digest = selection.far_indices()
                try:
                    raw = score_generators(noised.nearest, dataset.ownership(), generator_ids)
                except DegenerateHistogramError:
                    logger.warning(
                        "iteration %d: degenerate histogram, keeping uniform weights", t
                    )
                    raw = {generator_id: 1.0 for generator_id in generator_ids}
                if dynamic_weights:
                    weights = normalize_weights(raw, floor=config.weight_floor)
            else:
                raw = None

            owned = dataset.counts_by_generator()
            trace.append(
                IterationRecord(
                    iteration=t,
                    dataset_size=len(dataset),
                    template_kind=template_kind,
                    released=is_feedback_round,
                    sigma=sigma if is_feedback_round else None,
                    frechet=frechet,
                    generators={
                        generator_id: {
                            "raw_weight": previous_raw[generator_id] if previous_raw else None,
                            "weight": weights_used[generator_id],
                            "allocation": allocations[generator_id],
                            "owned": owned[generator_id],
                        }
                        for generator_id in generator_ids
                    },
                    prompt_digests={
                        generator.id: _prompt_digest(outcome.prompts)
                        for generator, outcome in zip(generators, outcomes)
                    },
                    near_selection=near_digest,
                    far_selection=far_digest,
                    rng_key=stream_key("generate", t),
                )
            )
            previous_raw = raw
            logger.info(
                "iteration %d: |D|=%d frechet=%s allocations=%s",
                t,
                len(dataset),
                f"{frechet:.4f}" if frechet is not None else "n/a",
                allocations,
            )
    except Exception:
        if write_outputs:
            # abort with the partial trace flushed for post-mortem
            flush(with_histograms=False)
        raise

    accountant.assert_complete()
    written_dir = flush(with_histograms=dump_histograms) if write_outputs else None
    return RunResult(dataset=dataset, trace=trace, output_dir=written_dir)


def write_trace(trace: Sequence[IterationRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as handle:
        for record in trace:
            handle.write(json.dumps(record.to_json(), sort_keys=True) + "\n")


def read_trace(path: str | Path) -> list[dict]:
    with Path(path).open("r", encoding="utf-8") as handle:
        return [json.loads(line) for line in handle if line.strip()]


def write_metrics_csv(trace: Sequence[IterationRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            [
                "iteration",
                "generator_id",
                "raw_weight",
                "weight",
                "allocation",
                "owned",
                "dataset_size",
                "frechet",
                "sigma",
            ]
        )
        for record in trace:
            for generator_id, stats in sorted(record.generators.items()):
                writer.writerow(
                    [
                        record.iteration,
                        generator_id,
                        "" if stats["raw_weight"] is None else repr(stats["raw_weight"]),
                        repr(stats["weight"]),
                        stats["allocation"],
                        stats["owned"],
                        record.dataset_size,
                        "" if record.frechet is None else repr(record.frechet),
                        "" if record.sigma is None else repr(record.sigma),
                    ]
                )


def run_ablation(
    config: RunConfig,
    mode: str,
    values: Sequence | None = None,
    write_outputs: bool = True,
) -> RunResult | list[RunResult]:
    """Ablation entry point.

    ``no_contrast`` and ``no_weighting`` return a single result; ``q_override``
    and ``epsilon_sweep`` run once per value (same seed) and return a list.
    """
    if mode in (NO_CONTRAST, NO_WEIGHTING):
        return run(
            config,
            mode=mode,
            write_outputs=write_outputs,
            output_dir=config.output_dir / mode if write_outputs else None,
        )
    if mode == Q_OVERRIDE:
        if not values:
            raise ConfigError("q_override needs a list of Q values")
        results = []
        for q in values:
            variant = replace(config, votes_per_sample=int(q))
            results.append(
                run(
                    variant,
                    write_outputs=write_outputs,
                    output_dir=config.output_dir / f"q{int(q)}" if write_outputs else None,
                )
            )
        return results
    if mode == EPSILON_SWEEP:
        if not values:
            raise ConfigError("epsilon_sweep needs a list of epsilon values")
        results = []
        for epsilon in values:
            infinite = epsilon in ("inf", float("inf"))
            budget = replace(
                config.privacy,
                epsilon=0.0 if infinite else float(epsilon),
                infinite_epsilon=infinite,
            )
            tag = "inf" if infinite else str(epsilon)
            variant = replace(config, privacy=budget)
            results.append(
                run(
                    variant,
                    write_outputs=write_outputs,
                    output_dir=config.output_dir / f"eps{tag}" if write_outputs else None,
                )
            )
        return results
    raise ConfigError(f"unknown ablation mode {mode!r}")

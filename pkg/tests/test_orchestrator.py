"""Loop semantics: replay determinism, growth, budget discipline, ablations."""

import json

import numpy as np
import pytest

from votesynth.config import build_run_config
from votesynth.core import read_dataset
from votesynth.errors import BackendError, ConfigError
from votesynth.generation import MockGenerator
from votesynth.orchestrator import (
    EPSILON_SWEEP,
    NO_CONTRAST,
    NO_WEIGHTING,
    Q_OVERRIDE,
    read_trace,
    run,
    run_ablation,
)


def config_tree(tmp_path=None, **overrides):
    tree = {
        "task": {"name": "imdb", "categories": ["negative", "positive"]},
        "run": {
            "total_samples": 60,
            "iterations": 3,
            "votes_per_sample": 2,
            "context_samples": 4,
            "seed": 11,
            "output_dir": str(tmp_path) if tmp_path else "out",
        },
        "privacy": {"epsilon": 4.0, "delta": 1e-5, "infinite_epsilon": True},
        "embedder": {"kind": "simulation", "dimension": 6},
        "private_data": {"simulate": {"per_category": 12, "separation": 4.0, "spread": 0.3}},
        "generators": [
            {"id": "alpha", "kind": "mock", "quality_offset": 0.0, "covariance_scale": 0.4},
            {"id": "beta", "kind": "mock", "quality_offset": 5.0, "covariance_scale": 0.4},
        ],
    }
    for key, value in overrides.items():
        section, _, field = key.partition(".")
        if field:
            tree[section][field] = value
        else:
            tree[section] = value
    return tree


def make_config(tmp_path=None, **overrides):
    return build_run_config(config_tree(tmp_path, **overrides))


def test_replay_determinism_byte_identical(tmp_path):
    first = run(make_config(tmp_path / "a"))
    second = run(make_config(tmp_path / "b"))
    for name in ("dataset.jsonl", "trace.jsonl", "metrics.csv"):
        a = (tmp_path / "a" / name).read_bytes()
        b = (tmp_path / "b" / name).read_bytes()
        assert a == b, f"{name} differs between identical runs"


def test_dataset_growth_per_iteration(tmp_path):
    result = run(make_config(tmp_path), write_outputs=False)
    sizes = [record.dataset_size for record in result.trace]
    assert sizes == [20, 40, 60]
    assert len(result.dataset) == 3 * 20


def test_growth_matches_worked_scale(tmp_path):
    config = make_config(
        tmp_path,
        **{"run.total_samples": 6000, "run.iterations": 5, "run.votes_per_sample": 8},
    )
    result = run(config, write_outputs=False)
    sizes = [record.dataset_size for record in result.trace]
    assert sizes == [1200, 2400, 3600, 4800, 6000]


def test_exactly_t_minus_one_releases(tmp_path):
    result = run(make_config(tmp_path), write_outputs=False)
    released = [record.released for record in result.trace]
    assert released == [True, True, False]
    assert result.trace[-1].sigma is None
    assert result.trace[-1].near_selection is None


def test_iteration_zero_uniform_allocations(tmp_path):
    config = make_config(
        tmp_path,
        generators=[
            {"id": f"g{i}", "kind": "mock", "quality_offset": 0.0} for i in range(6)
        ],
        **{"run.total_samples": 6000, "run.iterations": 5},
    )
    result = run(config, write_outputs=False)
    first = result.trace[0].generators
    assert all(stats["allocation"] == 200 for stats in first.values())
    assert all(stats["weight"] == pytest.approx(1 / 6) for stats in first.values())
    assert all(stats["raw_weight"] is None for stats in first.values())


def test_owned_counts_match_reloaded_dataset(tmp_path):
    out = tmp_path / "run"
    result = run(make_config(out))
    reloaded = read_dataset(out / "dataset.jsonl")
    counts = reloaded.counts_by_generator()
    final = result.trace[-1].generators
    for generator_id, stats in final.items():
        assert counts[generator_id] == stats["owned"]
    # per-iteration allocations sum to the owned totals
    for generator_id in counts:
        total = sum(record.generators[generator_id]["allocation"] for record in result.trace)
        assert total == counts[generator_id]


def test_allocation_conservation_every_iteration(tmp_path):
    result = run(make_config(tmp_path), write_outputs=False)
    for record in result.trace:
        assert sum(stats["allocation"] for stats in record.generators.values()) == 20


def test_matched_generator_dominates_weights(tmp_path):
    result = run(make_config(tmp_path), write_outputs=False)
    for record in result.trace[1:]:
        assert record.generators["alpha"]["weight"] > 0.5


def test_no_weighting_pins_uniform_allocations(tmp_path):
    config = make_config(tmp_path)
    result = run_ablation(config, NO_WEIGHTING, write_outputs=False)
    for record in result.trace:
        allocations = {stats["allocation"] for stats in record.generators.values()}
        assert allocations == {10}
        weights = {stats["weight"] for stats in record.generators.values()}
        assert weights == {0.5}
    # voting still happened: raw weights recorded from iteration 1 on
    assert result.trace[1].generators["alpha"]["raw_weight"] is not None


def test_no_contrast_swaps_template_only(tmp_path):
    config = make_config(tmp_path)
    full = run(config, write_outputs=False)
    ablated = run_ablation(config, NO_CONTRAST, write_outputs=False)
    assert [r.template_kind for r in full.trace] == ["zero_shot", "contrastive", "contrastive"]
    assert [r.template_kind for r in ablated.trace] == ["zero_shot", "few_shot", "few_shot"]
    # iteration 0 is identical (same seed, same zero-shot prompts)
    assert full.trace[0].prompt_digests == ablated.trace[0].prompt_digests
    assert full.trace[0].generators == ablated.trace[0].generators
    # later iterations differ in the prompts actually sent
    assert full.trace[1].prompt_digests != ablated.trace[1].prompt_digests


def test_q_override_traces(tmp_path):
    config = make_config(tmp_path)
    results = run_ablation(config, Q_OVERRIDE, values=[1, 2, 4], write_outputs=False)
    assert len(results) == 3
    # iteration-0 generation is Q-independent: identical prompts and sizes
    digests = [result.trace[0].prompt_digests for result in results]
    assert digests[0] == digests[1] == digests[2]
    sizes = [result.trace[0].dataset_size for result in results]
    assert sizes == [20, 20, 20]


def test_epsilon_sweep_sigma_monotone(tmp_path):
    config = make_config(tmp_path)
    results = run_ablation(
        config, EPSILON_SWEEP, values=["inf", 8.0, 4.0, 1.0], write_outputs=False
    )
    sigmas = [result.trace[0].sigma for result in results]
    assert sigmas[0] == 0.0
    assert sigmas[1] < sigmas[2] < sigmas[3]


def test_ablation_rejects_unknown_mode(tmp_path):
    with pytest.raises(ConfigError):
        run_ablation(make_config(tmp_path), "definitely_not_a_mode")
    with pytest.raises(ConfigError):
        run(make_config(tmp_path), mode="bogus")


def test_trace_round_trip(tmp_path):
    out = tmp_path / "run"
    result = run(make_config(out))
    records = read_trace(out / "trace.jsonl")
    assert len(records) == len(result.trace)
    assert records[0]["iteration"] == 0
    assert records[0]["template_kind"] == "zero_shot"
    assert set(records[0]["generators"]) == {"alpha", "beta"}


def test_frechet_improves_with_feedback(tmp_path):
    config = make_config(
        tmp_path,
        generators=[
            {
                "id": "alpha",
                "kind": "mock",
                "quality_offset": 0.0,
                "covariance_scale": 0.4,
                "responsiveness": 0.0,
            },
            {
                "id": "beta",
                "kind": "mock",
                "quality_offset": 5.0,
                "covariance_scale": 0.4,
                "responsiveness": 0.0,
            },
        ],
    )
    result = run(config, write_outputs=False)
    assert result.trace[-1].frechet < result.trace[0].frechet


def test_iteration_retry_after_transient_failure(tmp_path, monkeypatch):
    failures = {"remaining": 1}
    original = MockGenerator.generate

    def flaky(self, requests, rng):
        if failures["remaining"] > 0:
            failures["remaining"] -= 1
            raise BackendError("transient backend hiccup", retryable=True)
        return original(self, requests, rng)

    monkeypatch.setattr(MockGenerator, "generate", flaky)
    flaky_result = run(make_config(tmp_path / "flaky"))
    monkeypatch.setattr(MockGenerator, "generate", original)
    clean_result = run(make_config(tmp_path / "clean"))
    assert (tmp_path / "flaky" / "dataset.jsonl").read_bytes() == (
        tmp_path / "clean" / "dataset.jsonl"
    ).read_bytes()
    assert [r.dataset_size for r in flaky_result.trace] == [
        r.dataset_size for r in clean_result.trace
    ]


def test_persistent_failure_aborts(tmp_path, monkeypatch):
    def always_fails(self, requests, rng):
        raise BackendError("backend is down", retryable=True)

    monkeypatch.setattr(MockGenerator, "generate", always_fails)
    with pytest.raises(BackendError):
        run(make_config(tmp_path), write_outputs=False)


def test_abort_flushes_partial_trace(tmp_path, monkeypatch):
    calls = {"count": 0}
    original = MockGenerator.generate

    def fails_from_iteration_one(self, requests, rng):
        calls["count"] += 1
        if calls["count"] > 2:  # two generators succeed in iteration 0
            raise BackendError("backend died", retryable=True)
        return original(self, requests, rng)

    monkeypatch.setattr(MockGenerator, "generate", fails_from_iteration_one)
    out = tmp_path / "aborted"
    with pytest.raises(BackendError):
        run(make_config(out))
    records = read_trace(out / "trace.jsonl")
    assert [record["iteration"] for record in records] == [0]
    partial = read_dataset(out / "dataset.jsonl")
    assert len(partial) == 20  # iteration 0 only


def test_federated_run_writes_manifest(tmp_path):
    out = tmp_path / "fed"
    config = build_run_config(
        config_tree(
            out,
            federated={"parties": 3, "alpha": 1.0},
            privacy={"epsilon": 4.0, "delta": 1e-5},
        )
    )
    result = run(config)
    manifest = json.loads((out / "partition.json").read_text(encoding="utf-8"))
    assert manifest["parties"] == 3
    assigned = sorted(i for part in manifest["assignment"].values() for i in part)
    assert assigned == list(range(24))
    assert len(result.dataset) == 60


def test_histogram_dump(tmp_path):
    out = tmp_path / "dump"
    run(make_config(out), dump_histograms=True)
    dumped = sorted(p.name for p in out.glob("histograms_*.csv"))
    assert dumped == ["histograms_000.csv", "histograms_001.csv"]
    header = (out / "histograms_000.csv").read_text(encoding="utf-8").splitlines()[0]
    assert header == "index,nearest,furthest"

"""Data model: dataset indexing discipline and file round trips."""

import json

import numpy as np
import pytest

from _helpers import make_embedder, make_task
from votesynth.core import (
    LabeledSample,
    SyntheticDataset,
    SyntheticSample,
    TaskSpec,
    VoteHistograms,
    read_dataset,
    read_private_samples,
    write_dataset,
    write_private_samples,
)
from votesynth.errors import ConfigError, DatasetFormatError


def sample(text, label, index, generator="gen", born=0):
    return SyntheticSample(
        sample=LabeledSample(text=text, label=label),
        global_index=index,
        source_generator=generator,
        born_iteration=born,
    )


@pytest.fixture
def task():
    return make_task()


def test_task_requires_two_categories():
    with pytest.raises(ConfigError):
        TaskSpec(name="t", categories=("only",))


def test_labeled_sample_rejects_blank_text():
    with pytest.raises(ConfigError):
        LabeledSample(text="   \n\t", label="positive")


def test_append_to_empty(task):
    dataset = SyntheticDataset(task, ["gen"])
    batch = [sample(f"t{i}", "positive", i) for i in range(3)]
    grown = dataset.append_batch(batch)
    assert len(dataset) == 0  # snapshots are immutable
    assert len(grown) == 3
    assert [record.global_index for record in grown] == [0, 1, 2]


def test_append_requires_contiguous_continuation(task):
    dataset = SyntheticDataset(task, ["gen"]).append_batch([sample("a", "positive", 0)])
    with pytest.raises(ConfigError):
        dataset.append_batch([sample("b", "positive", 2)])


def test_append_rejects_duplicate_indices(task):
    dataset = SyntheticDataset(task, ["gen"])
    with pytest.raises(ConfigError):
        dataset.append_batch([sample("a", "positive", 0), sample("b", "negative", 0)])


def test_append_rejects_unregistered_generator(task):
    dataset = SyntheticDataset(task, ["gen"])
    with pytest.raises(ConfigError):
        dataset.append_batch([sample("a", "positive", 0, generator="ghost")])


def test_append_rejects_unknown_label(task):
    dataset = SyntheticDataset(task, ["gen"])
    with pytest.raises(ConfigError):
        dataset.append_batch(
            [SyntheticSample(LabeledSample("a", "neutral"), 0, "gen", 0)]
        )


def test_prior_records_stable_across_appends(task):
    dataset = SyntheticDataset(task, ["gen"])
    first = [sample(f"a{i}", "positive", i) for i in range(4)]
    grown = dataset.append_batch(first)
    bigger = grown.append_batch([sample(f"b{i}", "negative", 4 + i) for i in range(4)])
    for i in range(4):
        assert bigger[i] is grown[i]
    assert [record.global_index for record in bigger] == list(range(8))


def test_empty_dataset_round_trip(task, tmp_path):
    path = tmp_path / "empty.jsonl"
    write_dataset(SyntheticDataset(task, ["gen"]), path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 1  # header only
    loaded = read_dataset(path, task=task)
    assert len(loaded) == 0


def test_unicode_round_trip(task, tmp_path):
    text = "电影很好看 🎬✨ naïve café\n\ttab"
    dataset = SyntheticDataset(task, ["gen"]).append_batch([sample(text, "positive", 0)])
    path = tmp_path / "unicode.jsonl"
    write_dataset(dataset, path)
    loaded = read_dataset(path, task=task)
    assert loaded[0].sample.text == text
    assert loaded[0].sample.text.encode("utf-8") == text.encode("utf-8")


def test_full_field_round_trip(task, tmp_path):
    records = [
        SyntheticSample(
            sample=LabeledSample(f"text {i}", task.categories[i % 2], attribute=f"attr{i}"),
            global_index=i,
            source_generator="gen" if i % 2 else "other",
            born_iteration=i // 2,
        )
        for i in range(6)
    ]
    dataset = SyntheticDataset(task, ["gen", "other"]).append_batch(records)
    path = tmp_path / "full.jsonl"
    write_dataset(dataset, path)
    loaded = read_dataset(path, task=task)
    assert len(loaded) == len(dataset)
    for original, reread in zip(dataset, loaded):
        assert original == reread


def test_read_reports_bad_line_number(task, tmp_path):
    path = tmp_path / "broken.jsonl"
    dataset = SyntheticDataset(task, ["gen"]).append_batch([sample("ok", "positive", 0)])
    write_dataset(dataset, path)
    with path.open("a", encoding="utf-8") as handle:
        handle.write("{not json\n")
    with pytest.raises(DatasetFormatError) as excinfo:
        read_dataset(path, task=task)
    assert excinfo.value.line == 3


def test_read_rejects_category_mismatch(task, tmp_path):
    path = tmp_path / "other.jsonl"
    other_task = make_task(categories=("a", "b"), name="other")
    dataset = SyntheticDataset(other_task, ["gen"]).append_batch(
        [sample("x", "a", 0)]
    )
    write_dataset(dataset, path)
    with pytest.raises(ConfigError):
        read_dataset(path, task=task)


def test_private_samples_round_trip(tmp_path):
    task = make_task()
    samples = [
        LabeledSample("好 film 🎥", "positive", attribute="5"),
        LabeledSample("bad one", "negative"),
    ]
    path = tmp_path / "private.jsonl"
    write_private_samples(samples, path)
    loaded = read_private_samples(path, task=task)
    assert loaded == samples


def test_histograms_must_align():
    with pytest.raises(ConfigError):
        VoteHistograms(nearest=np.zeros(3), furthest=np.zeros(4))


def test_pre_noise_histograms_cannot_be_negative():
    with pytest.raises(ConfigError):
        VoteHistograms(nearest=np.array([-0.5]), furthest=np.array([0.0]))
    # noised histograms may be negative
    VoteHistograms(nearest=np.array([-0.5]), furthest=np.array([0.0]), noised=True)


def test_histogram_arrays_are_frozen():
    histograms = VoteHistograms(nearest=np.zeros(2), furthest=np.zeros(2))
    with pytest.raises(ValueError):
        histograms.nearest[0] = 1.0

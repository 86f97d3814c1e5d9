"""Shared data model: labeled samples, the accumulated synthetic dataset,
vote histograms, and the line-delimited dataset file format.

Dataset values are immutable snapshots: ``append_batch`` returns a new
dataset object, so a snapshot handed to concurrent workers never changes
underneath them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigError, DatasetFormatError

DATASET_KIND = "labeled-text-dataset"
DATASET_VERSION = 1


@dataclass(frozen=True)
class TaskSpec:
    """Task descriptor: name, category set, and optional attribute set.

    Categories are canonical strings; prompts interpolate them verbatim.
    """

    name: str
    categories: tuple[str, ...]
    attributes: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.name:
            raise ConfigError("task name must be non-empty")
        if len(self.categories) < 2:
            raise ConfigError("task needs at least 2 categories")
        if len(set(self.categories)) != len(self.categories):
            raise ConfigError("task categories must be unique")
        if any(not c for c in self.categories):
            raise ConfigError("task categories must be non-empty strings")

    def check_label(self, label: str) -> None:
        if label not in self.categories:
            raise ConfigError(
                f"label {label!r} is not one of the task categories {list(self.categories)}"
            )


@dataclass(frozen=True)
class LabeledSample:
    """One text record with its category label and optional attribute."""

    text: str
    label: str
    attribute: Optional[str] = None

    def __post_init__(self):
        if not self.text.strip():
            raise ConfigError("sample text is empty after whitespace trimming")


@dataclass(frozen=True)
class SyntheticSample:
    """A labeled sample inside the accumulated dataset, with provenance."""

    sample: LabeledSample
    global_index: int
    source_generator: str
    born_iteration: int

    def __post_init__(self):
        if self.global_index < 0:
            raise ConfigError("global_index must be non-negative")
        if self.born_iteration < 0:
            raise ConfigError("born_iteration must be non-negative")


@dataclass(frozen=True)
class VoteHistograms:
    """Nearest/furthest vote tallies aligned 1:1 with the accumulated dataset.

    ``noised`` records whether the Gaussian mechanism has already been
    applied; pre-noise tallies must be non-negative.
    """

    nearest: np.ndarray
    furthest: np.ndarray
    noised: bool = False

    def __post_init__(self):
        nearest = np.array(self.nearest, dtype=np.float64)
        furthest = np.array(self.furthest, dtype=np.float64)
        if nearest.ndim != 1 or furthest.ndim != 1:
            raise ConfigError("histograms must be 1-D")
        if nearest.shape != furthest.shape:
            raise ConfigError("nearest/furthest histograms must share length")
        if not (np.isfinite(nearest).all() and np.isfinite(furthest).all()):
            raise ConfigError("histogram entries must be finite")
        if not self.noised and ((nearest < 0).any() or (furthest < 0).any()):
            raise ConfigError("pre-noise histograms cannot be negative")
        nearest.setflags(write=False)
        furthest.setflags(write=False)
        object.__setattr__(self, "nearest", nearest)
        object.__setattr__(self, "furthest", furthest)

    def __len__(self) -> int:
        return int(self.nearest.shape[0])


@dataclass(frozen=True)
class EmbeddedSet:
    """Labels plus their embedding vectors, row-aligned."""

    labels: tuple[str, ...]
    vectors: np.ndarray

    def __post_init__(self):
        vectors = np.array(self.vectors, dtype=np.float64)
        if vectors.ndim != 2:
            raise ConfigError("embedding matrix must be 2-D (n, d)")
        if vectors.shape[0] != len(self.labels):
            raise ConfigError("labels and embedding rows must align")
        if not np.isfinite(vectors).all():
            raise ConfigError("embedding components must be finite")
        vectors.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "labels", tuple(self.labels))

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dimension(self) -> int:
        return int(self.vectors.shape[1])


class SyntheticDataset:
    """Append-only accumulated synthetic dataset with contiguous indices.

    Instances are immutable; ``append_batch`` returns a new dataset sharing
    the existing records.
    """

    def __init__(
        self,
        task: TaskSpec,
        generator_ids: Sequence[str],
        records: Sequence[SyntheticSample] = (),
    ):
        if len(set(generator_ids)) != len(generator_ids):
            raise ConfigError("generator ids must be unique")
        self._task = task
        self._generator_ids = tuple(generator_ids)
        self._records = tuple(records)
        self._validate()

    def _validate(self) -> None:
        known = set(self._generator_ids)
        for position, record in enumerate(self._records):
            if record.global_index != position:
                raise ConfigError(
                    f"global_index {record.global_index} at position {position}: "
                    "indices must be contiguous from 0"
                )
            if record.source_generator not in known:
                raise ConfigError(
                    f"sample {position} references unregistered generator "
                    f"{record.source_generator!r}"
                )
            self._task.check_label(record.sample.label)

    @property
    def task(self) -> TaskSpec:
        return self._task

    @property
    def generator_ids(self) -> tuple[str, ...]:
        return self._generator_ids

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[SyntheticSample]:
        return iter(self._records)

    def __getitem__(self, index: int) -> SyntheticSample:
        return self._records[index]

    def append_batch(self, batch: Sequence[SyntheticSample]) -> "SyntheticDataset":
        """Return a new dataset with ``batch`` appended.

        Batch indices must continue the contiguous range; prior records are
        untouched.
        """
        seen = set()
        for record in batch:
            if record.global_index in seen:
                raise ConfigError(f"duplicate global_index {record.global_index} in batch")
            seen.add(record.global_index)
        return SyntheticDataset(self._task, self._generator_ids, self._records + tuple(batch))

    def labels(self) -> list[str]:
        return [record.sample.label for record in self._records]

    def texts(self) -> list[str]:
        return [record.sample.text for record in self._records]

    def ownership(self) -> list[str]:
        """source_generator per dataset position, histogram-aligned."""
        return [record.source_generator for record in self._records]

    def counts_by_generator(self) -> dict[str, int]:
        counts = {generator_id: 0 for generator_id in self._generator_ids}
        for record in self._records:
            counts[record.source_generator] += 1
        return counts

    def indices_by_label(self) -> dict[str, list[int]]:
        by_label: dict[str, list[int]] = {label: [] for label in self._task.categories}
        for record in self._records:
            by_label[record.sample.label].append(record.global_index)
        return by_label


def _sample_to_json(record: SyntheticSample) -> dict:
    return {
        "global_index": record.global_index,
        "text": record.sample.text,
        "label": record.sample.label,
        "attribute": record.sample.attribute,
        "source_generator": record.source_generator,
        "born_iteration": record.born_iteration,
    }


def write_dataset(dataset: SyntheticDataset, path: str | Path) -> None:
    """Persist one record per line with a self-describing header line."""
    path = Path(path)
    header = {
        "kind": DATASET_KIND,
        "version": DATASET_VERSION,
        "task": dataset.task.name,
        "categories": list(dataset.task.categories),
        "attributes": list(dataset.task.attributes),
        "generators": list(dataset.generator_ids),
        "count": len(dataset),
    }
    with path.open("w", encoding="utf-8") as handle:
        handle.write(json.dumps(header, ensure_ascii=False, sort_keys=True) + "\n")
        for record in dataset:
            handle.write(json.dumps(_sample_to_json(record), ensure_ascii=False, sort_keys=True) + "\n")


def read_dataset(path: str | Path, task: TaskSpec | None = None) -> SyntheticDataset:
    """Load a dataset file; round trip of :func:`write_dataset` is lossless.

    When ``task`` is given, its categories must match the file header.
    """
    path = Path(path)
    with path.open("r", encoding="utf-8") as handle:
        lines = handle.read().splitlines()
    if not lines:
        raise DatasetFormatError("missing header line", line=1)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"bad header: {exc}", line=1) from exc
    if header.get("kind") != DATASET_KIND:
        raise DatasetFormatError(f"unexpected file kind {header.get('kind')!r}", line=1)
    file_task = TaskSpec(
        name=header.get("task", ""),
        categories=tuple(header.get("categories", ())),
        attributes=tuple(header.get("attributes", ())),
    )
    if task is not None and tuple(task.categories) != file_task.categories:
        raise ConfigError(
            f"dataset categories {list(file_task.categories)} do not match "
            f"configured categories {list(task.categories)}"
        )
    effective_task = task if task is not None else file_task
    records = []
    for line_number, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        try:
            payload = json.loads(raw)
            record = SyntheticSample(
                sample=LabeledSample(
                    text=payload["text"],
                    label=payload["label"],
                    attribute=payload.get("attribute"),
                ),
                global_index=payload["global_index"],
                source_generator=payload["source_generator"],
                born_iteration=payload["born_iteration"],
            )
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DatasetFormatError(f"malformed record: {exc}", line=line_number) from exc
        records.append(record)
    generator_ids = tuple(header.get("generators", ()))
    if not generator_ids:
        generator_ids = tuple(dict.fromkeys(r.source_generator for r in records))
    try:
        return SyntheticDataset(effective_task, generator_ids, records)
    except ConfigError as exc:
        raise DatasetFormatError(str(exc)) from exc


def write_private_samples(samples: Sequence[LabeledSample], path: str | Path) -> None:
    """Persist private samples (no provenance fields) one record per line."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as handle:
        handle.write(json.dumps({"kind": "labeled-samples", "version": 1}, sort_keys=True) + "\n")
        for sample in samples:
            payload = {"text": sample.text, "label": sample.label, "attribute": sample.attribute}
            handle.write(json.dumps(payload, ensure_ascii=False, sort_keys=True) + "\n")


def read_private_samples(path: str | Path, task: TaskSpec | None = None) -> list[LabeledSample]:
    path = Path(path)
    with path.open("r", encoding="utf-8") as handle:
        lines = handle.read().splitlines()
    if not lines:
        raise DatasetFormatError("missing header line", line=1)
    samples = []
    for line_number, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        try:
            payload = json.loads(raw)
            sample = LabeledSample(
                text=payload["text"], label=payload["label"], attribute=payload.get("attribute")
            )
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DatasetFormatError(f"malformed record: {exc}", line=line_number) from exc
        if task is not None:
            task.check_label(sample.label)
        samples.append(sample)
    return samples

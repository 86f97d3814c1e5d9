"""Prompt assembly and the generator abstraction (mock and HTTP backends).

Iteration 0 uses a zero-shot prompt per category. Later iterations build a
contrastive prompt: floor(S/2) bad examples drawn from the far selection,
then S - floor(S/2) good examples from the near selection, then the task
instruction. The non-contrastive few-shot variant (near examples only) is
kept for the ablation mode.

The mock backend samples embedding-space vectors from a per-label Gaussian,
optionally shifted toward the prompt's good examples and away from its bad
ones, and emits simulation-encoded texts so the full pipeline runs with
controllable geometry.
"""

from __future__ import annotations

import logging
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import httpx
import numpy as np
import yaml

from .core import LabeledSample, SyntheticSample, TaskSpec
from .embedding import SimulationEmbedder
from .errors import BackendError, ConfigError, TemplateError
from .voting import ContrastiveSelection

logger = logging.getLogger(__name__)

MOCK_KIND = "mock"
HTTP_KIND = "http"

ZERO_SHOT = "zero_shot"
CONTRASTIVE = "contrastive"
FEW_SHOT = "few_shot"

_SLOTS = ("{samples}", "{bad_samples}", "{good_samples}", "{label}", "{attribute}", "{text}")


@dataclass(frozen=True)
class PromptTemplate:
    """Per-task prompt strings; examples are interpolated line by line."""

    task: str
    zero_shot: str
    contrastive: str
    few_shot: str
    sample_line: str
    bad_sample_line: str
    good_sample_line: str

    def __post_init__(self):
        def require(text: str, slot: str, where: str) -> None:
            if slot not in text:
                raise TemplateError(f"{self.task}: {where} template is missing the {slot} slot")

        require(self.zero_shot, "{label}", ZERO_SHOT)
        require(self.few_shot, "{samples}", FEW_SHOT)
        require(self.few_shot, "{label}", FEW_SHOT)
        require(self.contrastive, "{bad_samples}", CONTRASTIVE)
        require(self.contrastive, "{good_samples}", CONTRASTIVE)
        require(self.contrastive, "{label}", CONTRASTIVE)
        if self.contrastive.index("{bad_samples}") > self.contrastive.index("{good_samples}"):
            raise TemplateError(
                f"{self.task}: contrastive template must place bad examples before good ones"
            )
        for line in (self.sample_line, self.bad_sample_line, self.good_sample_line):
            require(line, "{text}", "sample line")


def _fill(template: str, values: Mapping[str, str | None]) -> str:
    text = template
    for key, value in values.items():
        slot = "{" + key + "}"
        if slot in text:
            if value is None:
                raise TemplateError(f"template uses {slot} but no value is available")
            text = text.replace(slot, value)
    return text


@dataclass(frozen=True)
class PromptBuild:
    """A finished prompt plus the in-context example texts that went into it."""

    prompt: str
    kind: str
    label: str
    attribute: str | None
    good_texts: tuple[str, ...] = ()
    bad_texts: tuple[str, ...] = ()


def _draw(pool: Sequence[SyntheticSample], count: int, rng: np.random.Generator) -> list[str]:
    take = min(count, len(pool))
    chosen = rng.choice(len(pool), size=take, replace=False)
    return [pool[i].sample.text for i in chosen]


def build_prompt(
    template: PromptTemplate,
    label: str,
    attribute: str | None,
    selection: ContrastiveSelection | None,
    context_size: int,
    rng: np.random.Generator,
    contrastive: bool = True,
) -> PromptBuild:
    """Assemble the generation prompt for one category.

    Zero-shot when no selection exists yet; otherwise draws floor(S/2) bad
    and S - floor(S/2) good examples without replacement (whole list when a
    pool is smaller) and interpolates them bad-first into the contrastive
    template. ``contrastive=False`` gives the few-shot ablation prompt built
    from near examples only.
    """
    if selection is None:
        prompt = _fill(template.zero_shot, {"label": label, "attribute": attribute})
        return PromptBuild(prompt=prompt, kind=ZERO_SHOT, label=label, attribute=attribute)
    if context_size < 2:
        raise ConfigError("context sample count must be >= 2")
    near_pool = selection.near.get(label, ())
    far_pool = selection.far.get(label, ())
    if not near_pool or not far_pool:
        raise ConfigError(f"selection has no in-context samples for label {label!r}")
    n_bad = context_size // 2
    n_good = context_size - n_bad
    if contrastive:
        bad = _draw(far_pool, n_bad, rng)
        good = _draw(near_pool, n_good, rng)
        body = _fill(
            template.contrastive,
            {
                "bad_samples": "\n".join(
                    _fill(template.bad_sample_line, {"text": t}) for t in bad
                ),
                "good_samples": "\n".join(
                    _fill(template.good_sample_line, {"text": t}) for t in good
                ),
                "label": label,
                "attribute": attribute,
            },
        )
        return PromptBuild(
            prompt=body,
            kind=CONTRASTIVE,
            label=label,
            attribute=attribute,
            good_texts=tuple(good),
            bad_texts=tuple(bad),
        )
    good = _draw(near_pool, context_size, rng)
    body = _fill(
        template.few_shot,
        {
            "samples": "\n".join(_fill(template.sample_line, {"text": t}) for t in good),
            "label": label,
            "attribute": attribute,
        },
    )
    return PromptBuild(
        prompt=body,
        kind=FEW_SHOT,
        label=label,
        attribute=attribute,
        good_texts=tuple(good),
    )


@dataclass(frozen=True)
class GeneratorBinding:
    """Configuration for one generator backend."""

    id: str
    kind: str
    # mock backend
    covariance_scale: float = 0.5
    responsiveness: float = 0.0
    repulsion: float = 0.5
    quality_offset: float = 0.0
    label_means: Mapping[str, tuple[float, ...]] | None = None
    # http backend
    endpoint: str | None = None
    model: str | None = None
    temperature: float = 1.0
    max_tokens: int = 256
    api_style: str = "chat"
    api_key_env: str = "OPENAI_API_KEY"
    timeout: float = 60.0
    max_retries: int = 3

    def __post_init__(self):
        if not self.id:
            raise ConfigError("generator id must be non-empty")
        if self.kind not in (MOCK_KIND, HTTP_KIND):
            raise ConfigError(f"unknown generator kind {self.kind!r}")
        if self.kind == MOCK_KIND:
            if self.covariance_scale <= 0:
                raise ConfigError("mock covariance scale must be positive")
            if not 0.0 <= self.responsiveness <= 1.0:
                raise ConfigError("mock responsiveness must lie in [0, 1]")
        if self.kind == HTTP_KIND:
            if not self.endpoint or not self.model:
                raise ConfigError("http generator needs both endpoint and model")
            if self.api_style not in ("chat", "completions"):
                raise ConfigError(f"unknown api style {self.api_style!r}")
            if self.timeout <= 0 or self.max_retries < 1:
                raise ConfigError("http generator needs a finite timeout and retry budget")


class Generator:
    """Label-conditioned text generator; one sample per prompt."""

    def __init__(self, binding: GeneratorBinding):
        self.binding = binding

    @property
    def id(self) -> str:
        return self.binding.id

    def generate(
        self, requests: Sequence[PromptBuild], rng: np.random.Generator
    ) -> list[LabeledSample]:
        raise NotImplementedError


class MockGenerator(Generator):
    """Gaussian-in-embedding-space stand-in for a hosted text model.

    With responsiveness r and repulsion beta, the sampling mean moves to
    base + r*(centroid(good) - base) - r*beta*(centroid(bad) - base); r = 0
    ignores feedback entirely.
    """

    def __init__(
        self,
        binding: GeneratorBinding,
        embedder: SimulationEmbedder,
        label_means: Mapping[str, np.ndarray],
    ):
        super().__init__(binding)
        self._embedder = embedder
        self._means = {
            label: np.asarray(mean, dtype=np.float64) for label, mean in label_means.items()
        }
        for label, mean in self._means.items():
            if mean.shape != (embedder.dimension,):
                raise ConfigError(
                    f"mock generator {binding.id!r}: mean for label {label!r} has "
                    f"shape {mean.shape}, embedder dimension is {embedder.dimension}"
                )

    def _conditioned_mean(self, request: PromptBuild) -> np.ndarray:
        base = self._means.get(request.label)
        if base is None:
            raise ConfigError(
                f"mock generator {self.id!r} has no distribution for label {request.label!r}"
            )
        r = self.binding.responsiveness
        if r == 0.0 or (not request.good_texts and not request.bad_texts):
            return base
        mean = base.copy()
        if request.good_texts:
            good_centroid = self._embedder.embed_batch(list(request.good_texts)).mean(axis=0)
            mean = mean + r * (good_centroid - base)
        if request.bad_texts:
            bad_centroid = self._embedder.embed_batch(list(request.bad_texts)).mean(axis=0)
            mean = mean - r * self.binding.repulsion * (bad_centroid - base)
        return mean

    def generate(
        self, requests: Sequence[PromptBuild], rng: np.random.Generator
    ) -> list[LabeledSample]:
        samples = []
        for request in requests:
            mean = self._conditioned_mean(request)
            vector = mean + self.binding.covariance_scale * rng.standard_normal(mean.shape[0])
            samples.append(
                LabeledSample(
                    text=self._embedder.encode_vector(vector),
                    label=request.label,
                    attribute=request.attribute,
                )
            )
        return samples


def _strip_completion(text: str) -> str:
    text = text.strip()
    for opening, closing in (('"', '"'), ("'", "'"), ("“", "”")):
        if len(text) >= 2 and text.startswith(opening) and text.endswith(closing):
            text = text[1:-1].strip()
            break
    return text


class HttpGenerator(Generator):
    """OpenAI-compatible completion/chat client."""

    def __init__(self, binding: GeneratorBinding, transport: httpx.BaseTransport | None = None):
        super().__init__(binding)
        self._client = httpx.Client(
            base_url=binding.endpoint, timeout=binding.timeout, transport=transport
        )

    def _headers(self) -> dict[str, str]:
        api_key = os.environ.get(self.binding.api_key_env)
        return {"Authorization": f"Bearer {api_key}"} if api_key else {}

    def _complete_once(self, prompt: str) -> str:
        if self.binding.api_style == "chat":
            payload = {
                "model": self.binding.model,
                "messages": [{"role": "user", "content": prompt}],
                "temperature": self.binding.temperature,
                "max_tokens": self.binding.max_tokens,
            }
            response = self._client.post("/chat/completions", json=payload, headers=self._headers())
            response.raise_for_status()
            return response.json()["choices"][0]["message"]["content"]
        payload = {
            "model": self.binding.model,
            "prompt": prompt,
            "temperature": self.binding.temperature,
            "max_tokens": self.binding.max_tokens,
        }
        response = self._client.post("/completions", json=payload, headers=self._headers())
        response.raise_for_status()
        return response.json()["choices"][0]["text"]

    def _complete(self, prompt: str) -> str:
        last_error: Exception | None = None
        for attempt in range(self.binding.max_retries):
            try:
                text = _strip_completion(self._complete_once(prompt))
                if text:
                    return text
                last_error = BackendError("empty completion", retryable=True)
            except (httpx.HTTPError, KeyError, IndexError, TypeError) as exc:
                last_error = exc
            time.sleep(min(2**attempt * 0.1, 2.0))
        raise BackendError(
            f"generator {self.id!r} failed after {self.binding.max_retries} attempts: "
            f"{last_error}",
            retryable=True,
        )

    def generate(
        self, requests: Sequence[PromptBuild], rng: np.random.Generator
    ) -> list[LabeledSample]:
        return [
            LabeledSample(
                text=self._complete(request.prompt),
                label=request.label,
                attribute=request.attribute,
            )
            for request in requests
        ]


@dataclass(frozen=True)
class GenerationOutcome:
    """One generator's output for one iteration, plus the prompts used."""

    samples: tuple[SyntheticSample, ...]
    prompts: tuple[PromptBuild, ...]


def weighted_generation(
    generator: Generator,
    task: TaskSpec,
    template: PromptTemplate,
    selection: ContrastiveSelection | None,
    count: int,
    context_size: int,
    born_iteration: int,
    start_index: int,
    rng: np.random.Generator,
    contrastive: bool = True,
) -> GenerationOutcome:
    """Generate exactly ``count`` label-balanced samples for one generator.

    ceil(count/C) samples per category are produced from one prompt per
    category, then the surplus is trimmed by dropping one uniformly chosen
    sample from each of (C*ceil(count/C) - count) distinct categories, so
    per-category counts never differ by more than 1.
    """
    if count < 0:
        raise ConfigError("generation count must be non-negative")
    if count == 0:
        return GenerationOutcome(samples=(), prompts=())
    categories = task.categories
    per_category = math.ceil(count / len(categories))
    requests: list[PromptBuild] = []
    prompts: list[PromptBuild] = []
    for category in categories:
        attribute = (
            str(rng.choice(np.asarray(task.attributes, dtype=object)))
            if task.attributes
            else None
        )
        build = build_prompt(
            template, category, attribute, selection, context_size, rng, contrastive=contrastive
        )
        prompts.append(build)
        requests.extend([build] * per_category)
    generated = generator.generate(requests, rng)
    surplus = len(generated) - count
    if surplus > 0:
        doomed_categories = rng.choice(len(categories), size=surplus, replace=False)
        doomed = set()
        for category_index in sorted(int(i) for i in doomed_categories):
            within = int(rng.integers(per_category))
            doomed.add(category_index * per_category + within)
        generated = [s for i, s in enumerate(generated) if i not in doomed]
    samples = tuple(
        SyntheticSample(
            sample=labeled,
            global_index=start_index + offset,
            source_generator=generator.id,
            born_iteration=born_iteration,
        )
        for offset, labeled in enumerate(generated)
    )
    return GenerationOutcome(samples=samples, prompts=tuple(prompts))


_DEFAULTS_FILE = Path(__file__).parent / "templates" / "defaults.yaml"
GENERIC_TEMPLATE_KEY = "generic"


def _template_from_mapping(task_name: str, payload: Mapping) -> PromptTemplate:
    try:
        return PromptTemplate(
            task=task_name,
            zero_shot=payload["zero_shot"],
            contrastive=payload["contrastive"],
            few_shot=payload["few_shot"],
            sample_line=payload["sample_line"],
            bad_sample_line=payload["bad_sample_line"],
            good_sample_line=payload["good_sample_line"],
        )
    except KeyError as exc:
        raise TemplateError(f"{task_name}: template file is missing the {exc} field") from exc


def load_template(task: TaskSpec, path: str | Path | None = None) -> PromptTemplate:
    """Resolve the prompt template for a task.

    An explicit file wins; otherwise the packaged defaults are searched by
    task name, falling back to the generic wording.
    """
    if path is not None:
        with Path(path).open("r", encoding="utf-8") as handle:
            catalog = yaml.safe_load(handle) or {}
        if task.name in catalog:
            return _template_from_mapping(task.name, catalog[task.name])
        raise TemplateError(f"template file {path} has no entry for task {task.name!r}")
    with _DEFAULTS_FILE.open("r", encoding="utf-8") as handle:
        catalog = yaml.safe_load(handle)
    key = task.name if task.name in catalog else GENERIC_TEMPLATE_KEY
    return _template_from_mapping(task.name, catalog[key])

"""Embedder abstraction mapping sample text into fixed-dimension vectors.

Two backends: a deterministic simulation embedder whose "texts" can encode
exact vectors (so the whole pipeline runs with controllable geometry), and
an HTTP embedder for OpenAI-style ``/embeddings`` endpoints with a disk
cache keyed by (model, content hash) so replays are stable.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import httpx
import numpy as np

from .core import LabeledSample
from .errors import BackendError, ConfigError, UnsupportedOperationError

VECTOR_TEXT_PREFIX = "evec1:"

SIMULATION_KIND = "simulation"
HTTP_KIND = "http"


@dataclass(frozen=True)
class EmbedderBinding:
    """Configuration for one embedder backend; dimension is fixed per run."""

    kind: str
    dimension: int
    model: str | None = None
    endpoint: str | None = None
    cache_dir: str | None = None
    seed: int = 0
    api_key_env: str = "OPENAI_API_KEY"
    timeout: float = 30.0
    max_retries: int = 3

    def __post_init__(self):
        if self.kind not in (SIMULATION_KIND, HTTP_KIND):
            raise ConfigError(f"unknown embedder kind {self.kind!r}")
        if self.dimension < 1:
            raise ConfigError("embedder dimension must be >= 1")
        if self.kind == HTTP_KIND and (not self.model or not self.endpoint):
            raise ConfigError("http embedder needs both model and endpoint")


def _texts(samples: Sequence[LabeledSample | str]) -> list[str]:
    return [item.text if isinstance(item, LabeledSample) else item for item in samples]


class Embedder:
    """Order-preserving batch embedder; results are pure in (binding, text)."""

    def __init__(self, binding: EmbedderBinding):
        self.binding = binding

    @property
    def dimension(self) -> int:
        return self.binding.dimension

    def embed_batch(self, samples: Sequence[LabeledSample | str]) -> np.ndarray:
        """Embed a non-empty batch; returns an (n, dimension) float64 matrix."""
        texts = _texts(samples)
        if not texts:
            raise ConfigError("embed_batch requires a non-empty batch")
        matrix = self._embed_texts(texts)
        if matrix.shape != (len(texts), self.dimension):
            raise BackendError(
                f"embedder returned shape {matrix.shape}, expected "
                f"({len(texts)}, {self.dimension})"
            )
        return matrix

    def _embed_texts(self, texts: list[str]) -> np.ndarray:
        raise NotImplementedError

    def encode_vector(self, vector: np.ndarray) -> str:
        raise UnsupportedOperationError(
            "vector-encoded texts are only available under the simulation binding"
        )


class SimulationEmbedder(Embedder):
    """Pure function of (seed, text bytes); decodes vector-encoded texts exactly.

    Texts produced by :meth:`encode_vector` embed back to the encoded vector
    bit-for-bit; any other text maps to a seeded hash-derived unit-variance
    vector.
    """

    def _embed_texts(self, texts: list[str]) -> np.ndarray:
        rows = [self._embed_one(text) for text in texts]
        return np.vstack(rows)

    def _embed_one(self, text: str) -> np.ndarray:
        if text.startswith(VECTOR_TEXT_PREFIX):
            return self._decode_text(text)
        digest = hashlib.blake2b(
            text.encode("utf-8"),
            key=str(self.binding.seed).encode("ascii"),
            digest_size=16,
        ).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "big"))
        return rng.standard_normal(self.dimension)

    def encode_vector(self, vector: np.ndarray) -> str:
        """Printable text surrogate whose embedding is exactly ``vector``."""
        vector = np.asarray(vector, dtype=np.float64)
        if vector.ndim != 1 or vector.shape[0] != self.dimension:
            raise ConfigError(
                f"vector has shape {vector.shape}, embedder dimension is {self.dimension}"
            )
        if not np.isfinite(vector).all():
            raise ConfigError("vector components must be finite")
        payload = base64.b64encode(vector.astype("<f8").tobytes()).decode("ascii")
        return VECTOR_TEXT_PREFIX + payload

    def _decode_text(self, text: str) -> np.ndarray:
        payload = text[len(VECTOR_TEXT_PREFIX):]
        try:
            raw = base64.b64decode(payload.encode("ascii"), validate=True)
        except Exception as exc:
            raise ConfigError(f"malformed vector-encoded text: {exc}") from exc
        vector = np.frombuffer(raw, dtype="<f8").astype(np.float64)
        if vector.shape[0] != self.dimension:
            raise ConfigError(
                f"encoded vector has length {vector.shape[0]}, "
                f"embedder dimension is {self.dimension}"
            )
        return vector


class HttpEmbedder(Embedder):
    """OpenAI-compatible embeddings client with content-hash disk caching."""

    def __init__(self, binding: EmbedderBinding, transport: httpx.BaseTransport | None = None):
        super().__init__(binding)
        self._client = httpx.Client(
            base_url=binding.endpoint, timeout=binding.timeout, transport=transport
        )
        self._cache_dir = Path(binding.cache_dir) if binding.cache_dir else None
        if self._cache_dir is not None:
            self._cache_dir.mkdir(parents=True, exist_ok=True)

    def _cache_path(self, text: str) -> Path | None:
        if self._cache_dir is None:
            return None
        key = hashlib.sha256(
            self.binding.model.encode("utf-8") + b"\x00" + text.encode("utf-8")
        ).hexdigest()
        return self._cache_dir / f"{key}.npy"

    def _embed_texts(self, texts: list[str]) -> np.ndarray:
        rows: list[np.ndarray | None] = [None] * len(texts)
        missing: list[int] = []
        for position, text in enumerate(texts):
            path = self._cache_path(text)
            if path is not None and path.exists():
                rows[position] = np.load(path)
            else:
                missing.append(position)
        if missing:
            fetched = self._request([texts[i] for i in missing])
            for position, row in zip(missing, fetched):
                rows[position] = row
                path = self._cache_path(texts[position])
                if path is not None:
                    # np.save appends .npy unless present; keep it so replace works
                    tmp = path.with_suffix(f".tmp{os.getpid()}.npy")
                    np.save(tmp, row)
                    os.replace(tmp, path)
        return np.vstack(rows)

    def _request(self, texts: list[str]) -> list[np.ndarray]:
        headers = {}
        api_key = os.environ.get(self.binding.api_key_env)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        payload = {"model": self.binding.model, "input": texts}
        last_error: Exception | None = None
        for attempt in range(self.binding.max_retries):
            try:
                response = self._client.post("/embeddings", json=payload, headers=headers)
                if response.status_code in (429, 500, 502, 503, 504):
                    last_error = BackendError(
                        f"embeddings endpoint returned {response.status_code}", retryable=True
                    )
                    time.sleep(min(2**attempt * 0.1, 2.0))
                    continue
                response.raise_for_status()
                return self._parse(response.json(), len(texts))
            except httpx.TransportError as exc:
                last_error = exc
                time.sleep(min(2**attempt * 0.1, 2.0))
        raise BackendError(f"embeddings backend unreachable: {last_error}", retryable=True)

    def _parse(self, body: dict, expected: int) -> list[np.ndarray]:
        try:
            data = sorted(body["data"], key=lambda item: item["index"])
            vectors = [np.asarray(item["embedding"], dtype=np.float64) for item in data]
        except (KeyError, TypeError) as exc:
            raise BackendError(f"malformed embeddings response: {exc}") from exc
        if len(vectors) != expected:
            raise BackendError(
                f"embeddings response has {len(vectors)} vectors, expected {expected}"
            )
        for vector in vectors:
            if vector.shape != (self.dimension,):
                raise BackendError(
                    f"embedding dimension drifted: got {vector.shape[0]}, "
                    f"run is pinned to {self.dimension}"
                )
        return vectors


def build_embedder(
    binding: EmbedderBinding, transport: httpx.BaseTransport | None = None
) -> Embedder:
    if binding.kind == SIMULATION_KIND:
        return SimulationEmbedder(binding)
    return HttpEmbedder(binding, transport=transport)

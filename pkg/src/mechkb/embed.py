"""Embedding providers: map normalized surface forms to unit-norm vectors.

Two providers share one contract (name, dim, embed_batch): a deterministic
character-n-gram hashing fallback, and a client for a remote embedding
service. All vectors are L2-normalized so dot product equals cosine
similarity and scores stay bounded for early-terminating retrieval.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass

import httpx
import numpy as np

from ._fnv import fnv1a64
from .errors import (
    CorruptIndex,
    DimMismatch,
    EmptyText,
    ProviderProtocolError,
    ProviderUnavailable,
)

# Boundary markers for character n-grams. The start marker is U+02C6
# (modifier letter circumflex), not ASCII '^'.
GRAM_START = "ˆ"
GRAM_END = "$"
GRAM_SIZES = (3, 4, 5)

DEFAULT_DIM = 256

_MAX_GRAM_CACHE = 1 << 21


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    """A unit-norm d-dimensional vector for one normalized surface form."""

    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise DimMismatch("embedding must be a non-empty 1-D vector")
        if not np.all(np.isfinite(arr)):
            raise ValueError("embedding has non-finite entries")
        norm = float(np.linalg.norm(arr))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"embedding is not unit-norm: |v| = {norm}")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


def similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Dot product of unit-norm vectors, i.e. cosine similarity in [-1, 1]."""
    if a.dim != b.dim:
        raise DimMismatch(f"dim mismatch: {a.dim} vs {b.dim}")
    return float(np.dot(a.values, b.values))


def _char_ngrams(text: str) -> list[str]:
    marked = GRAM_START + text + GRAM_END
    if len(marked) < min(GRAM_SIZES):
        return [marked]
    grams: list[str] = []
    for n in GRAM_SIZES:
        for i in range(len(marked) - n + 1):
            grams.append(marked[i : i + n])
    return grams


class FallbackEmbedding:
    """Deterministic character-n-gram hashing embedder.

    Grams (n in {3,4,5}, boundary-marked) are FNV-1a hashed into d buckets;
    bucket counts are L2-normalized. Near-surface variants land close
    together, which is adequate for tests and offline use.
    """

    def __init__(self, dim: int = DEFAULT_DIM):
        if dim < 1:
            raise DimMismatch("dim must be positive")
        self.name = "fallback"
        self.dim = dim
        self._bucket_cache: dict[str, int] = {}
        self._vector_cache: dict[str, np.ndarray] = {}

    def _bucket(self, gram: str) -> int:
        b = self._bucket_cache.get(gram)
        if b is None:
            b = fnv1a64(gram.encode("utf-8")) % self.dim
            if len(self._bucket_cache) < _MAX_GRAM_CACHE:
                self._bucket_cache[gram] = b
        return b

    def embed(self, text: str) -> EmbeddingVector:
        if not text:
            raise EmptyText("cannot embed empty text")
        cached = self._vector_cache.get(text)
        if cached is None:
            counts = np.zeros(self.dim, dtype=np.float64)
            for gram in _char_ngrams(text):
                counts[self._bucket(gram)] += 1.0
            cached = counts / np.linalg.norm(counts)
            cached.flags.writeable = False
            if len(self._vector_cache) < _MAX_GRAM_CACHE:
                self._vector_cache[text] = cached
        return EmbeddingVector(cached)

    def embed_batch(self, texts: list[str]) -> list[EmbeddingVector]:
        return [self.embed(t) for t in texts]


def fallback_embed(text: str, d: int = DEFAULT_DIM) -> EmbeddingVector:
    """One-off n-gram embedding (see FallbackEmbedding)."""
    return _shared_fallback(d).embed(text)


_SHARED_FALLBACKS: dict[int, FallbackEmbedding] = {}
_SHARED_LOCK = threading.Lock()


def _shared_fallback(d: int) -> FallbackEmbedding:
    with _SHARED_LOCK:
        provider = _SHARED_FALLBACKS.get(d)
        if provider is None:
            provider = _SHARED_FALLBACKS[d] = FallbackEmbedding(d)
        return provider


class RemoteEmbedding:
    """Client for an external embedding service.

    Wire protocol: POST {endpoint}/embed with {"texts": [...]} returning
    {"vectors": [[...], ...], "dim": d}. Vectors are defensively
    renormalized. Transient transport failures are retried 3 times with
    exponential backoff; in-flight requests are bounded by a semaphore.
    """

    def __init__(
        self,
        endpoint: str,
        dim: int = DEFAULT_DIM,
        timeout: float = 10.0,
        max_in_flight: int = 4,
        attempts: int = 3,
        backoff: float = 0.25,
        transport: httpx.BaseTransport | None = None,
    ):
        if dim < 1:
            raise DimMismatch("dim must be positive")
        self.name = "remote"
        self.dim = dim
        self.endpoint = endpoint.rstrip("/")
        self._attempts = attempts
        self._backoff = backoff
        self._semaphore = threading.BoundedSemaphore(max_in_flight)
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def close(self) -> None:
        self._client.close()

    def embed_batch(self, texts: list[str]) -> list[EmbeddingVector]:
        if not texts:
            return []
        for text in texts:
            if not text:
                raise EmptyText("cannot embed empty text")
        payload = {"texts": list(texts)}
        url = self.endpoint + "/embed"
        last_error: Exception | None = None
        for attempt in range(self._attempts):
            if attempt:
                time.sleep(self._backoff * (2 ** (attempt - 1)))
            try:
                with self._semaphore:
                    response = self._client.post(url, json=payload)
            except httpx.TransportError as exc:
                last_error = exc
                continue
            if response.status_code >= 500:
                last_error = ProviderUnavailable(
                    f"server error {response.status_code} from {url}"
                )
                continue
            if response.status_code != 200:
                raise ProviderProtocolError(
                    f"unexpected status {response.status_code} from {url}"
                )
            return self._parse(response, len(texts))
        raise ProviderUnavailable(
            f"embedding service unreachable after {self._attempts} attempts: {last_error}"
        )

    def embed(self, text: str) -> EmbeddingVector:
        return self.embed_batch([text])[0]

    def _parse(self, response: httpx.Response, expected: int) -> list[EmbeddingVector]:
        try:
            data = response.json()
        except ValueError as exc:
            raise ProviderProtocolError(f"non-JSON embedding response: {exc}") from exc
        if not isinstance(data, dict) or "vectors" not in data or "dim" not in data:
            raise ProviderProtocolError("embedding response missing vectors/dim")
        if data["dim"] != self.dim:
            raise ProviderProtocolError(
                f"provider returned dim {data['dim']}, declared {self.dim}"
            )
        vectors = data["vectors"]
        if len(vectors) != expected:
            raise ProviderProtocolError(
                f"provider returned {len(vectors)} vectors for {expected} texts"
            )
        out: list[EmbeddingVector] = []
        for row in vectors:
            arr = np.asarray(row, dtype=np.float64)
            if arr.ndim != 1 or arr.shape[0] != self.dim:
                raise ProviderProtocolError("vector row has wrong dimension")
            if not np.all(np.isfinite(arr)):
                raise ProviderProtocolError("vector row has non-finite entries")
            norm = float(np.linalg.norm(arr))
            if norm <= 0.0:
                raise ProviderProtocolError("vector row has zero norm")
            out.append(EmbeddingVector(arr / norm))
        return out


def remote_embed_batch(
    texts: list[str], endpoint: str, dim: int = DEFAULT_DIM
) -> list[EmbeddingVector]:
    """One-off remote embedding call (see RemoteEmbedding)."""
    provider = RemoteEmbedding(endpoint, dim=dim)
    try:
        return provider.embed_batch(texts)
    finally:
        provider.close()


def save_vectors(path, matrix: np.ndarray, provider_name: str) -> None:
    """Write a vector matrix: one JSON header line {dim, count, provider},
    then count rows of dim little-endian float32 values."""
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    header = {
        "dim": int(matrix.shape[1]),
        "count": int(matrix.shape[0]),
        "provider": provider_name,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, separators=(",", ":")).encode("utf-8"))
        fh.write(b"\n")
        fh.write(matrix.tobytes())


def load_vectors(path) -> tuple[np.ndarray, str]:
    """Read a vector matrix written by save_vectors; returns (matrix, provider)."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        body = fh.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
        dim, count, provider = header["dim"], header["count"], header["provider"]
    except (ValueError, KeyError) as exc:
        raise CorruptIndex(f"bad vector file header in {path}: {exc}") from exc
    expected = dim * count * 4
    if len(body) != expected:
        raise CorruptIndex(
            f"vector file {path} has {len(body)} payload bytes, expected {expected}"
        )
    matrix = np.frombuffer(body, dtype="<f4").reshape(count, dim)
    return matrix, provider

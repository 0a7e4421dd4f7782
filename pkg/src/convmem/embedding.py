"""Embedding providers and vector helpers.

All embeddings inside the engine are unit-length float64 vectors. Raw
vectors are canonicalized on the way in: normalize, snap each component
to float32 precision, renormalize. The float32 snap collapses the
rounding noise left by any positive rescaling of the raw vector, so a
query embedding scaled by an arbitrary constant canonicalizes to the
same bits.
"""

from __future__ import annotations

import hashlib
import logging
import os
import re
from collections import Counter
from typing import Iterable, Protocol, Sequence

import numpy as np

from .errors import DimensionError, InvalidInput, ProviderRejected, ProviderUnavailable

logger = logging.getLogger(__name__)

DEFAULT_DIM = 384
_UNIT_NORM_TOL = 1e-9

_TOKEN_RE = re.compile(r"[a-z0-9]+")

# Fixed key so the hash embedder is reproducible across processes and
# platforms; Python's builtin hash() is salted per process.
_HASH_KEY = b"convmem-hash-embedder-v1"


class Embedding:
    """Immutable unit-length vector."""

    __slots__ = ("_values",)

    def __init__(self, values: Sequence[float] | np.ndarray) -> None:
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise InvalidInput("embedding must be a non-empty 1-d vector")
        norm = float(np.linalg.norm(arr))
        if abs(norm - 1.0) > _UNIT_NORM_TOL:
            raise InvalidInput(f"embedding is not unit length (norm={norm!r})")
        arr = arr.copy()
        arr.setflags(write=False)
        self._values = arr

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def dim(self) -> int:
        return int(self._values.shape[0])

    @classmethod
    def from_raw(cls, values: Sequence[float] | np.ndarray) -> "Embedding":
        """Canonicalize an arbitrary non-zero vector to a unit embedding."""
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise InvalidInput("raw vector must be a non-empty 1-d vector")
        if not np.all(np.isfinite(arr)):
            raise InvalidInput("raw vector contains non-finite values")
        norm = float(np.linalg.norm(arr))
        if norm == 0.0:
            raise InvalidInput("cannot normalize a zero vector")
        unit = arr / norm
        # Scale-invariance: snapping to float32 absorbs the ulp-level
        # differences introduced by rescaling the raw vector.
        unit = unit.astype(np.float32).astype(np.float64)
        unit /= np.linalg.norm(unit)
        return cls(unit)

    def to_list(self) -> list[float]:
        return [float(v) for v in self._values]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Embedding):
            return NotImplemented
        return self._values.shape == other._values.shape and bool(
            np.array_equal(self._values, other._values)
        )

    def __repr__(self) -> str:
        return f"Embedding(dim={self.dim})"


def cosine(a: Embedding, b: Embedding) -> float:
    """Cosine similarity of two unit vectors, clamped to [-1, 1]."""
    if a.dim != b.dim:
        raise DimensionError(f"dimension mismatch: {a.dim} vs {b.dim}")
    value = float(np.dot(a.values, b.values))
    if value > 1.0:
        return 1.0
    if value < -1.0:
        return -1.0
    return value


class Embedder(Protocol):
    """Anything that can turn text into a unit embedding."""

    @property
    def dim(self) -> int: ...

    def embed(self, text: str) -> Embedding: ...


def _tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


class HashEmbedder:
    """Deterministic bag-of-token feature-hashing embedder.

    Each token is hashed with a fixed keyed blake2b into a bucket index
    and a sign; token counts accumulate into the bucket and the result
    is L2-normalized. No I/O, no model weights, fully reproducible, so
    it serves as the offline and test-time embedding backend.
    """

    def __init__(self, dim: int = DEFAULT_DIM) -> None:
        if dim < 2:
            raise InvalidInput("hash embedder needs dim >= 2")
        self._dim = dim

    @property
    def dim(self) -> int:
        return self._dim

    def _bucket(self, token: str) -> tuple[int, float]:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=_HASH_KEY).digest()
        value = int.from_bytes(digest, "big")
        sign = 1.0 if value & 1 else -1.0
        return (value >> 1) % self._dim, sign

    def embed(self, text: str) -> Embedding:
        if not text or not text.strip():
            raise InvalidInput("cannot embed empty text")
        tokens = _tokenize(text)
        if not tokens:
            # Text with no word characters still deserves a stable vector.
            tokens = ["\x00raw:" + text]
        raw = np.zeros(self._dim, dtype=np.float64)
        for token, count in Counter(tokens).items():
            index, sign = self._bucket(token)
            raw[index] += sign * count
        if not np.any(raw):
            raise InvalidInput("text hashed to a zero vector")
        return Embedding.from_raw(raw)


class RemoteEmbedder:
    """Client for an OpenAI-compatible /embeddings endpoint."""

    def __init__(
        self,
        endpoint: str,
        *,
        model: str = "",
        api_key: str = "",
        dim: int = DEFAULT_DIM,
        timeout: float = 30.0,
    ) -> None:
        if not endpoint:
            raise InvalidInput("remote embedder needs an endpoint URL")
        self._endpoint = endpoint.rstrip("/")
        self._model = model
        self._api_key = api_key
        self._dim = dim
        self._timeout = timeout
        self._client = None

    @property
    def dim(self) -> int:
        return self._dim

    def _http(self):
        if self._client is None:
            import httpx

            headers = {}
            if self._api_key:
                headers["Authorization"] = f"Bearer {self._api_key}"
            self._client = httpx.Client(
                base_url=self._endpoint, headers=headers, timeout=self._timeout
            )
        return self._client

    def embed(self, text: str) -> Embedding:
        return self.embed_many([text])[0]

    def embed_many(self, texts: Iterable[str]) -> list[Embedding]:
        batch = list(texts)
        if not batch or any(not t or not t.strip() for t in batch):
            raise InvalidInput("cannot embed empty text")
        import httpx

        payload = {"input": batch, "model": self._model}
        try:
            response = self._http().post("/embeddings", json=payload)
        except httpx.HTTPError as exc:
            raise ProviderUnavailable(f"embedding endpoint unreachable: {exc}") from exc
        if response.status_code >= 500:
            raise ProviderUnavailable(f"embedding endpoint returned {response.status_code}")
        if response.status_code >= 400:
            raise ProviderRejected(
                f"embedding endpoint rejected request: {response.status_code} {response.text[:200]}"
            )
        try:
            rows = response.json()["data"]
            vectors = [row["embedding"] for row in rows]
        except (KeyError, TypeError, ValueError) as exc:
            raise ProviderRejected(f"malformed embedding response: {exc}") from exc
        if len(vectors) != len(batch):
            raise ProviderRejected("embedding response count does not match input count")
        out = []
        for vector in vectors:
            if len(vector) != self._dim:
                raise DimensionError(
                    f"embedding endpoint returned dim {len(vector)}, expected {self._dim}"
                )
            out.append(Embedding.from_raw(vector))
        return out


def embedder_from_env(env: dict[str, str] | None = None) -> Embedder:
    """Build an embedder from environment configuration.

    CONVMEM_EMBED_ENDPOINT selects the remote backend; without it the
    deterministic hash embedder is used. CONVMEM_EMBED_DIM overrides the
    dimensionality for either backend.
    """
    env = dict(os.environ if env is None else env)
    dim = int(env.get("CONVMEM_EMBED_DIM", DEFAULT_DIM))
    endpoint = env.get("CONVMEM_EMBED_ENDPOINT", "")
    if endpoint:
        return RemoteEmbedder(
            endpoint,
            model=env.get("CONVMEM_EMBED_MODEL", ""),
            api_key=env.get("CONVMEM_EMBED_API_KEY", ""),
            dim=dim,
        )
    return HashEmbedder(dim=dim)

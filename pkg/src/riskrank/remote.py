"""HTTP client for remote embedding APIs, with cache-first batching.

Wire format: ``POST {base_url}/embeddings`` with JSON body
``{"model": <model_id>, "input": [<texts>]}`` and header
``Authorization: Bearer <key>``; the response is
``{"data": [{"index": i, "embedding": [floats]}, ...]}``.

Texts already present in the vector cache are served locally; misses are
sent in batches of at most ``max_batch``, written to the cache, and merged
back in input order. Batches may be issued concurrently; ordering is
restored by position, never by arrival.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import requests

from .cache import EmbeddingRecord, VectorCache, text_digest
from .embedding import l2_normalize

__all__ = ["ProviderConfig", "RemoteEmbedError", "remote_embed", "RemoteEmbedder"]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ProviderConfig:
    """Connection and contract details for one embedding API."""

    provider_id: str
    model_id: str
    base_url: str
    api_key_env: str
    dim: int
    max_batch: int = 16
    timeout_ms: int = 30_000

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.max_batch < 1:
            raise ValueError(f"max_batch must be >= 1, got {self.max_batch}")


class RemoteEmbedError(RuntimeError):
    """Embedding API failure. ``retryable`` distinguishes transient HTTP/auth
    failures from contract violations (wrong dimension, partial response)."""

    def __init__(self, message: str, *, retryable: bool):
        super().__init__(message)
        self.retryable = retryable


def _api_key(config: ProviderConfig) -> str:
    key = os.environ.get(config.api_key_env, "")
    if not key:
        raise ValueError(
            f"provider {config.provider_id}: environment variable "
            f"{config.api_key_env} is not set"
        )
    return key


def _fetch_batch(config: ProviderConfig, key: str, batch: list[str]) -> list[np.ndarray]:
    url = config.base_url.rstrip("/") + "/embeddings"
    try:
        resp = requests.post(
            url,
            json={"model": config.model_id, "input": batch},
            headers={"Authorization": f"Bearer {key}"},
            timeout=config.timeout_ms / 1000.0,
        )
    except requests.RequestException as exc:
        raise RemoteEmbedError(
            f"provider {config.provider_id} ({config.model_id}): request failed: {exc}",
            retryable=True,
        ) from exc
    if resp.status_code != 200:
        raise RemoteEmbedError(
            f"provider {config.provider_id} ({config.model_id}): "
            f"HTTP {resp.status_code} from {url}",
            retryable=True,
        )
    try:
        data = resp.json()["data"]
        by_index = {int(entry["index"]): entry["embedding"] for entry in data}
    except (KeyError, TypeError, ValueError) as exc:
        raise RemoteEmbedError(
            f"provider {config.provider_id}: malformed response body: {exc}",
            retryable=False,
        ) from exc
    if sorted(by_index) != list(range(len(batch))):
        raise RemoteEmbedError(
            f"provider {config.provider_id}: partial response: got indices "
            f"{sorted(by_index)} for a batch of {len(batch)}",
            retryable=False,
        )
    vectors = []
    for i in range(len(batch)):
        vec = np.asarray(by_index[i], dtype=np.float32)
        if vec.ndim != 1 or vec.shape[0] != config.dim:
            raise RemoteEmbedError(
                f"provider {config.provider_id}: expected dim {config.dim}, "
                f"got {vec.shape}",
                retryable=False,
            )
        vectors.append(vec)
    return vectors


def remote_embed(
    config: ProviderConfig,
    texts: list[str],
    cache: VectorCache,
    *,
    jobs: int = 1,
    normalize: bool = True,
) -> np.ndarray:
    """Embed ``texts`` via the configured API, returning an ``(n, dim)`` matrix.

    Cache-first: cached digests never touch the network. Raw provider vectors
    are what gets cached; L2 normalization (on by default) is applied on the
    way out, so toggling ``normalize`` never invalidates the cache.
    """
    if not texts:
        raise ValueError("texts must be nonempty")
    digests = [text_digest(t) for t in texts]
    out: list[np.ndarray | None] = [None] * len(texts)
    misses: list[int] = []
    for i, digest in enumerate(digests):
        record = cache.get(digest, config.provider_id, config.model_id)
        if record is not None:
            if record.vector.shape[0] != config.dim:
                raise RemoteEmbedError(
                    f"cached vector for {digest[:12]} has dim "
                    f"{record.vector.shape[0]}, config says {config.dim}",
                    retryable=False,
                )
            out[i] = record.vector
        else:
            misses.append(i)

    if misses:
        key = _api_key(config)
        batches = [
            misses[start : start + config.max_batch]
            for start in range(0, len(misses), config.max_batch)
        ]
        logger.info(
            "remote_embed: %d/%d cache hits, %d batches to %s",
            len(texts) - len(misses), len(texts), len(batches), config.provider_id,
        )

        def run(batch_positions: list[int]) -> list[np.ndarray]:
            return _fetch_batch(config, key, [texts[i] for i in batch_positions])

        if jobs > 1 and len(batches) > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(run, batches))
        else:
            results = [run(batch) for batch in batches]
        for batch_positions, vectors in zip(batches, results):
            for i, vec in zip(batch_positions, vectors):
                cache.put(
                    EmbeddingRecord(
                        text_digest=digests[i],
                        provider_id=config.provider_id,
                        model_id=config.model_id,
                        vector=vec,
                    )
                )
                out[i] = vec

    matrix = np.stack([v for v in out])  # type: ignore[arg-type]
    if normalize:
        matrix = np.stack([l2_normalize(row) for row in matrix])
    return matrix


class RemoteEmbedder:
    """Callable wrapper over ``remote_embed`` with a fixed config and cache."""

    def __init__(
        self,
        config: ProviderConfig,
        cache: VectorCache | None = None,
        *,
        jobs: int = 1,
        normalize: bool = True,
    ):
        self.config = config
        self.cache = cache if cache is not None else VectorCache()
        self.jobs = jobs
        self.normalize = normalize

    @property
    def dim(self) -> int:
        return self.config.dim

    @property
    def provider_id(self) -> str:
        return self.config.provider_id

    @property
    def model_id(self) -> str:
        return self.config.model_id

    def embed(self, texts: list[str]) -> np.ndarray:
        return remote_embed(
            self.config, texts, self.cache, jobs=self.jobs, normalize=self.normalize
        )

    def __call__(self, text: str) -> np.ndarray:
        return self.embed([text])[0]

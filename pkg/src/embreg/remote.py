"""HTTP embedding-service client with an append-only local cache.

Wire protocol: POST to the endpoint with body ``{"model": "<id>", "texts":
[...]}``; the service answers ``{"embeddings": [[...], ...]}`` with one row per
input text. An auth token is read from the ``EMBED_API_KEY`` environment
variable when present. The cache is a line-delimited JSON file of
``{"key", "dim", "values"}`` records keyed by a SHA-256 of (endpoint, model,
text bytes), so distinct providers and models never share entries.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import requests

from .embedders import EmbeddingMatrix, config_hash

API_KEY_ENV = "EMBED_API_KEY"


class TransportError(RuntimeError):
    """Request still failing after all retry attempts."""


class EmbeddingServiceError(RuntimeError):
    """The service answered, but with an unusable payload."""


def cache_key(endpoint: str, model: str, text: str) -> str:
    payload = b"\x00".join(s.encode("utf-8") for s in (endpoint, model, text))
    return hashlib.sha256(payload).hexdigest()


class EmbeddingCache:
    """Append-only JSONL store; safe for concurrent writers in one process."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[str, np.ndarray] = {}
        if self.path.exists():
            with open(self.path, encoding="utf-8") as f:
                for line in f:
                    line = line.strip()
                    if not line:
                        continue
                    rec = json.loads(line)
                    self._entries[rec["key"]] = np.asarray(rec["values"], dtype=np.float64)

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, key: str) -> np.ndarray | None:
        return self._entries.get(key)

    def put(self, key: str, vector: np.ndarray) -> None:
        rec = {"key": key, "dim": int(vector.size), "values": [float(v) for v in vector]}
        line = json.dumps(rec, separators=(",", ":")) + "\n"
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(line)
            self._entries[key] = np.asarray(vector, dtype=np.float64)


class RemoteEmbedder:
    """Batching, caching, retrying client for an embedding HTTP service."""

    def __init__(
        self,
        endpoint: str,
        model: str,
        cache_path=None,
        batch_size: int = 32,
        max_attempts: int = 3,
        backoff: float = 0.5,
        max_inflight: int = 4,
        timeout: float = 30.0,
    ):
        if batch_size < 1 or max_attempts < 1 or max_inflight < 1:
            raise ValueError("batch_size, max_attempts and max_inflight must be >= 1")
        self.endpoint = endpoint
        self.model = model
        self.batch_size = batch_size
        self.max_attempts = max_attempts
        self.backoff = backoff
        self.max_inflight = max_inflight
        self.timeout = timeout
        self.cache = EmbeddingCache(cache_path) if cache_path else None
        self.request_count = 0
        self._count_lock = threading.Lock()
        self.provenance = "remote:" + config_hash({"endpoint": endpoint, "model": model})

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(API_KEY_ENV)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post_batch(self, batch: list[str]) -> list[np.ndarray]:
        last_error: Exception | None = None
        for attempt in range(1, self.max_attempts + 1):
            try:
                with self._count_lock:
                    self.request_count += 1
                resp = requests.post(
                    self.endpoint,
                    json={"model": self.model, "texts": batch},
                    headers=self._headers(),
                    timeout=self.timeout,
                )
                resp.raise_for_status()
                payload = resp.json()
                return self._validate(batch, payload)
            except (requests.RequestException, ValueError) as e:
                # EmbeddingServiceError subclasses RuntimeError and propagates.
                last_error = e
                if attempt < self.max_attempts:
                    time.sleep(self.backoff * 2 ** (attempt - 1))
        raise TransportError(
            f"embedding request failed after {self.max_attempts} attempts: {last_error}"
        )

    @staticmethod
    def _validate(batch: list[str], payload: dict) -> list[np.ndarray]:
        rows = payload.get("embeddings")
        if not isinstance(rows, list) or len(rows) != len(batch):
            raise EmbeddingServiceError(
                f"expected {len(batch)} embeddings, got {type(rows).__name__} "
                f"of length {len(rows) if isinstance(rows, list) else 'n/a'}"
            )
        vectors = [np.asarray(r, dtype=np.float64) for r in rows]
        dims = {v.shape for v in vectors}
        if len(dims) != 1 or vectors[0].ndim != 1:
            raise EmbeddingServiceError(f"inconsistent embedding shapes in response: {dims}")
        for v in vectors:
            if not np.all(np.isfinite(v)):
                raise EmbeddingServiceError("response contains non-finite values")
        return vectors

    def embed_texts(self, texts: list[str]) -> EmbeddingMatrix:
        """Embed texts in input order; cache hits never touch the network."""
        if not texts:
            raise ValueError("texts must be non-empty")
        resolved: dict[str, np.ndarray] = {}
        if self.cache is not None:
            for text in texts:
                hit = self.cache.get(cache_key(self.endpoint, self.model, text))
                if hit is not None:
                    resolved[text] = hit
        pending = [t for t in dict.fromkeys(texts) if t not in resolved]

        if pending:
            batches = [
                pending[i : i + self.batch_size] for i in range(0, len(pending), self.batch_size)
            ]
            with ThreadPoolExecutor(max_workers=self.max_inflight) as pool:
                results = list(pool.map(self._post_batch, batches))
            for batch, vectors in zip(batches, results):
                for text, vec in zip(batch, vectors):
                    resolved[text] = vec
                    if self.cache is not None:
                        self.cache.put(cache_key(self.endpoint, self.model, text), vec)

        dims = {resolved[t].size for t in texts}
        if len(dims) != 1:
            raise EmbeddingServiceError(f"mixed embedding dims across texts: {sorted(dims)}")
        values = np.stack([resolved[t] for t in texts])
        return EmbeddingMatrix(values=values, provenance=self.provenance)


def embed_remote(texts: list[str], endpoint: str, model: str, cache_path=None, **kwargs) -> EmbeddingMatrix:
    """One-shot convenience wrapper around :class:`RemoteEmbedder`."""
    return RemoteEmbedder(endpoint, model, cache_path=cache_path, **kwargs).embed_texts(texts)

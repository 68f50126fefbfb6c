"""Keyword vectors and exact cosine nearest-neighbor lookup.

Vectors are normally ingested from a file produced by a sentence encoder.
:func:`fallback_embed` gives a deterministic, dependency-free stand-in
built from hashed character trigrams.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_DIM = 64
# cosines this close to the maximum count as tied; exact ties between
# different vectors otherwise split on summation-order rounding
TIE_TOLERANCE = 1e-12


class EmbeddingError(ValueError):
    pass


def _trigrams(keyword: str) -> list[str]:
    padded = f"#{keyword}#"
    if len(padded) < 3:
        return [padded]
    return [padded[i:i + 3] for i in range(len(padded) - 2)]


def fallback_embed(keyword: str, dim: int = DEFAULT_DIM) -> np.ndarray:
    """Hash the character trigrams of ``keyword`` into ``dim`` buckets.

    Counts are non-negative, so any non-empty keyword yields a non-zero
    vector; the result is L2-normalized. Hashing uses blake2b, which is
    stable across processes (unlike ``hash``).
    """
    if dim < 1:
        raise EmbeddingError("dim must be positive")
    vec = np.zeros(dim)
    if not keyword:
        return vec
    for gram in _trigrams(keyword):
        digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
        vec[int.from_bytes(digest, "little") % dim] += 1.0
    return vec / np.linalg.norm(vec)


@dataclass(frozen=True)
class NeighborResult:
    keyword: str
    cosine: float


@dataclass
class EmbeddingStore:
    """Immutable-after-load map from keyword to a ``dim``-vector.

    Keywords missing from the store resolve through :func:`fallback_embed`.
    """

    dim: int = DEFAULT_DIM
    vectors: dict[str, np.ndarray] = field(default_factory=dict)
    duplicate_count: int = 0
    _unit_cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.dim < 1:
            raise EmbeddingError("dim must be positive")
        for kw, vec in self.vectors.items():
            vec = np.asarray(vec, dtype=float)
            if vec.shape != (self.dim,):
                raise EmbeddingError(f"{kw!r}: expected dimension {self.dim}, got {vec.shape}")
            if not np.all(np.isfinite(vec)):
                raise EmbeddingError(f"{kw!r}: non-finite component")
            self.vectors[kw] = vec

    def __len__(self):
        return len(self.vectors)

    def __contains__(self, keyword):
        return keyword in self.vectors

    def vector(self, keyword: str) -> np.ndarray:
        vec = self.vectors.get(keyword)
        return vec if vec is not None else fallback_embed(keyword, self.dim)

    def unit_matrix(self, vocab: Iterable[str]) -> tuple[list[str], np.ndarray]:
        """Lexicographically sorted vocab and its row-normalized vectors.

        Cached per vocabulary; zero vectors stay zero (cosine 0 to anything).
        """
        key = frozenset(vocab)
        hit = self._unit_cache.get(key)
        if hit is None:
            keys = sorted(key)
            mat = np.array([self.vector(k) for k in keys]).reshape(len(keys), self.dim)
            norms = np.linalg.norm(mat, axis=1, keepdims=True)
            mat = np.divide(mat, norms, out=np.zeros_like(mat), where=norms > 0)
            hit = self._unit_cache[key] = (keys, mat)
        return hit


def load_embeddings(path: str | Path) -> EmbeddingStore:
    """Read ``{"keyword": ..., "vector": [...]}`` lines; last duplicate wins."""
    vectors: dict[str, np.ndarray] = {}
    dim: Optional[int] = None
    duplicates = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                keyword, values = obj["keyword"], obj["vector"]
            except (json.JSONDecodeError, KeyError, TypeError):
                raise EmbeddingError(f"line {lineno}: expected {{keyword, vector}} object") from None
            vec = np.asarray(values, dtype=float)
            if vec.ndim != 1 or vec.size == 0:
                raise EmbeddingError(f"line {lineno}: vector must be a non-empty list")
            if dim is None:
                dim = vec.size
            elif vec.size != dim:
                raise EmbeddingError(f"line {lineno}: dimension mismatch ({vec.size} != {dim})")
            if not np.all(np.isfinite(vec)):
                raise EmbeddingError(f"line {lineno}: non-finite component")
            if keyword in vectors:
                duplicates += 1
            vectors[keyword] = vec
    if dim is None:
        raise EmbeddingError(f"{path}: no embeddings found")
    if duplicates:
        logger.warning("%s: %d duplicate keywords, last occurrence kept", path, duplicates)
    return EmbeddingStore(dim=dim, vectors=vectors, duplicate_count=duplicates)


def nearest_keyword(store: EmbeddingStore, query: str, vocab: Iterable[str]) -> NeighborResult:
    """Vocab keyword with maximum cosine to ``query``.

    Exact brute-force scan; ties (within ``TIE_TOLERANCE``) go to the
    lexicographically smallest keyword.
    """
    keys, mat = store.unit_matrix(vocab)
    if not keys:
        raise EmbeddingError("nearest_keyword needs a non-empty vocabulary")
    q = store.vector(query)
    norm = np.linalg.norm(q)
    if norm == 0:
        cosines = np.zeros(len(keys))
    else:
        cosines = mat @ (q / norm)
    # keys are sorted, so the first near-maximal entry is the smallest key
    best = int(np.flatnonzero(cosines >= cosines.max() - TIE_TOLERANCE)[0])
    return NeighborResult(keys[best], float(min(1.0, max(-1.0, cosines[best]))))


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = math.sqrt(float(np.dot(u, u))), math.sqrt(float(np.dot(v, v)))
    if nu == 0 or nv == 0:
        return 0.0
    return float(np.dot(u, v)) / (nu * nv)

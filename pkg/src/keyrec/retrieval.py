"""Training-free keyword-to-item candidate retrieval.

Items are scored by summing TF-IRF edge weights of the keywords a cold-start
user selected. For keyword ``w`` and item ``r``::

    tf  = f(r, w) / q(w)          # share of w's global uses falling on r
    irf = ln(|items| / f(w))      # f(w): number of items whose reviews use w
    a(r, w) = tf * irf

and ``score(r) = sum of a(r, w) over selected w``. Ranking is score
descending, then item id ascending.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .corpus import ItemProfile
from .embeddings import EmbeddingStore, nearest_keyword
from .keywords import normalize_keyword

INDEX_SCHEMA = "keyrec.index/v1"
DEFAULT_K = 20


class RetrievalError(ValueError):
    pass


@dataclass
class KeywordItemIndex:
    """Keyword x item weight matrix plus vocabulary maps.

    ``counts`` holds raw ``f(r, w)``; ``weights`` the TF-IRF values. Rows
    follow ``vocab`` (sorted), columns follow ``items`` (caller order).
    """

    vocab: list[str]
    items: list[str]
    counts: sp.csr_matrix
    weights: sp.csr_matrix
    irf: np.ndarray
    global_counts: np.ndarray
    _row: dict[str, int] = field(init=False, repr=False)
    _col: dict[str, int] = field(init=False, repr=False)
    _lex_rank: np.ndarray = field(init=False, repr=False)
    _by_item: Optional[tuple[sp.csc_matrix, sp.csc_matrix]] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self._row = {w: i for i, w in enumerate(self.vocab)}
        self._col = {r: j for j, r in enumerate(self.items)}
        self._lex_rank = np.empty(len(self.items), dtype=np.int64)
        self._lex_rank[np.argsort(np.array(self.items, dtype=object), kind="stable")] = \
            np.arange(len(self.items))

    @property
    def shape(self):
        return self.weights.shape

    def keyword_index(self, keyword: str) -> Optional[int]:
        return self._row.get(keyword)

    def item_index(self, item_id: str) -> Optional[int]:
        return self._col.get(item_id)

    def weight(self, keyword: str, item_id: str) -> float:
        i, j = self._row.get(keyword), self._col.get(item_id)
        if i is None or j is None:
            return 0.0
        return float(self.weights[i, j])

    def irf_of(self, keyword: str) -> float:
        i = self._row.get(keyword)
        return 0.0 if i is None else float(self.irf[i])

    def dense(self) -> np.ndarray:
        return self.weights.toarray()

    def item_keywords(self, item_id: str) -> list[tuple[str, float, int]]:
        """``(keyword, weight, count)`` for every keyword used on the item.

        Sorted by weight desc, then count desc, then keyword.
        """
        j = self._col.get(item_id)
        if j is None:
            return []
        if self._by_item is None:
            self._by_item = (self.counts.tocsc(), self.weights.tocsc())
        counts, weights = self._by_item
        start, stop = counts.indptr[j], counts.indptr[j + 1]
        rows = counts.indices[start:stop]
        cnt = counts.data[start:stop]
        # weights shares the sparsity pattern of counts
        w = np.asarray(weights[:, j].toarray()).ravel()[rows]
        out = [(self.vocab[r], float(x), int(c)) for r, x, c in zip(rows, w, cnt)]
        out.sort(key=lambda t: (-t[1], -t[2], t[0]))
        return out

    def item_keyword_sets(self) -> dict[str, set[str]]:
        csc = self.counts.tocsc()
        return {
            item: {self.vocab[r] for r in csc.indices[csc.indptr[j]:csc.indptr[j + 1]]}
            for j, item in enumerate(self.items)
        }

    def rank(self, scores: np.ndarray, k: int) -> "CandidateList":
        """Top-``k`` by score desc, item id asc; zero-score items pad the tail."""
        if k < 1:
            raise RetrievalError("k must be >= 1")
        order = np.lexsort((self._lex_rank, -scores))[:k]
        return CandidateList([(self.items[j], float(scores[j])) for j in order], k)


def _tfirf(counts: sp.csr_matrix, n_items: int) -> tuple[sp.csr_matrix, np.ndarray, np.ndarray]:
    counts = counts.tocsr()
    counts.sort_indices()
    global_counts = np.asarray(counts.sum(axis=1)).ravel()
    item_freq = np.diff(counts.indptr)  # explicit zeros are never stored
    irf = np.log(n_items / np.maximum(item_freq, 1))
    irf[item_freq == 0] = 0.0
    rows = np.repeat(np.arange(counts.shape[0]), item_freq)
    data = (counts.data / global_counts[rows]) * irf[rows]
    weights = sp.csr_matrix((data, counts.indices.copy(), counts.indptr.copy()),
                            shape=counts.shape)
    return weights, irf, global_counts


def build_index(item_profiles: Mapping[str, ItemProfile], items: Optional[Sequence[str]] = None) -> KeywordItemIndex:
    """Build the TF-IRF index.

    ``items`` fixes the column order (defaults to sorted profile keys);
    listed items without a profile get an empty column.
    """
    items = sorted(item_profiles) if items is None else list(items)
    if not items:
        raise RetrievalError("cannot build an index over an empty item set")
    if len(set(items)) != len(items):
        raise RetrievalError("duplicate item ids")
    vocab = sorted({w for r in items if r in item_profiles
                    for w, c in item_profiles[r].keyword_counts.items() if c > 0})
    row = {w: i for i, w in enumerate(vocab)}
    rows, cols, vals = [], [], []
    for j, r in enumerate(items):
        profile = item_profiles.get(r)
        if profile is None:
            continue
        for w, c in profile.keyword_counts.items():
            if c > 0:
                rows.append(row[w])
                cols.append(j)
                vals.append(c)
    counts = sp.csr_matrix((np.array(vals, dtype=np.int64), (rows, cols)),
                           shape=(len(vocab), len(items)))
    return _index_from_counts(vocab, items, counts)


def _index_from_counts(vocab, items, counts) -> KeywordItemIndex:
    counts = sp.csr_matrix(counts)
    counts.sum_duplicates()
    counts.eliminate_zeros()
    weights, irf, global_counts = _tfirf(counts, len(items))
    return KeywordItemIndex(list(vocab), list(items), counts, weights, irf, global_counts)


def save_index(index: KeywordItemIndex, path: str | Path) -> None:
    """Write the index as versioned JSON (raw counts; weights are rebuilt on load)."""
    coo = index.counts.tocoo()
    order = np.lexsort((coo.col, coo.row))
    payload = {
        "schema": INDEX_SCHEMA,
        "vocab": index.vocab,
        "items": index.items,
        "counts": {
            "row": coo.row[order].tolist(),
            "col": coo.col[order].tolist(),
            "data": coo.data[order].tolist(),
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_index(path: str | Path) -> KeywordItemIndex:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("schema") != INDEX_SCHEMA:
        raise RetrievalError(f"{path}: unsupported index schema {payload.get('schema')!r}")
    c = payload["counts"]
    counts = sp.csr_matrix(
        (np.array(c["data"], dtype=np.int64), (np.array(c["row"], dtype=np.int64), np.array(c["col"], dtype=np.int64))),
        shape=(len(payload["vocab"]), len(payload["items"])))
    return _index_from_counts(payload["vocab"], payload["items"], counts)


@dataclass(frozen=True)
class QueryVector:
    """Binary keyword selection of a cold-start user, after OOV substitution."""

    selected: frozenset[str]
    substitutions: dict[str, str] = field(default_factory=dict)


@dataclass
class CandidateList:
    entries: list[tuple[str, float]]
    k: int

    @property
    def item_ids(self) -> list[str]:
        return [item for item, _ in self.entries]

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def to_json(self) -> list[dict]:
        return [{"item_id": item, "score": score} for item, score in self.entries]


def score_items(index: KeywordItemIndex, query: QueryVector) -> np.ndarray:
    """Scores of all items: the binary selection row times the weight matrix.

    Rows are accumulated in vocabulary order, matching a dense row-by-row
    product exactly.
    """
    scores = np.zeros(len(index.items))
    rows = []
    for w in query.selected:
        i = index.keyword_index(w)
        if i is None:
            raise RetrievalError(f"keyword {w!r} is not in the index vocabulary")
        rows.append(i)
    w = index.weights
    for i in sorted(rows):
        start, stop = w.indptr[i], w.indptr[i + 1]
        scores[w.indices[start:stop]] += w.data[start:stop]
    return scores


def resolve_query(index: KeywordItemIndex, raw_keywords: Iterable[str],
                  store: Optional[EmbeddingStore] = None) -> QueryVector:
    """Map raw keywords onto the vocabulary, substituting OOV ones by nearest neighbor."""
    if not index.vocab:
        raise RetrievalError("index vocabulary is empty")
    selected, substitutions = set(), {}
    for raw in raw_keywords:
        kw = normalize_keyword(raw)
        if not kw:
            continue
        if index.keyword_index(kw) is not None:
            selected.add(kw)
            continue
        if kw not in substitutions:
            if store is None:
                store = EmbeddingStore()
            substitutions[kw] = nearest_keyword(store, kw, index.vocab).keyword
        selected.add(substitutions[kw])
    return QueryVector(frozenset(selected), substitutions)


def retrieve(index: KeywordItemIndex, raw_keywords: Iterable[str], k: int = DEFAULT_K,
             store: Optional[EmbeddingStore] = None) -> tuple[CandidateList, QueryVector]:
    """Top-``k`` candidates for a keyword query.

    Without a ``store``, OOV keywords are matched with the hashed-trigram
    fallback embedding.
    """
    if k < 1:
        raise RetrievalError("k must be >= 1")
    query = resolve_query(index, raw_keywords, store)
    return index.rank(score_items(index, query), k), query


def jaccard_scores(item_keys: Mapping[str, Iterable[str]], raw_keywords: Iterable[str]) -> dict[str, float]:
    q = {kw for kw in map(normalize_keyword, raw_keywords) if kw}
    out = {}
    for item, keys in item_keys.items():
        keys = set(keys)
        union = len(q | keys)
        out[item] = len(q & keys) / union if union else 0.0
    return out


def jaccard_retrieve(item_profiles: Mapping[str, ItemProfile | Iterable[str]],
                     raw_keywords: Iterable[str], k: int = DEFAULT_K) -> CandidateList:
    """Baseline: rank items by Jaccard overlap of query and item keyword sets."""
    if k < 1:
        raise RetrievalError("k must be >= 1")
    keys = {item: (p.keyword_counts.keys() if isinstance(p, ItemProfile) else p)
            for item, p in item_profiles.items()}
    scores = jaccard_scores(keys, raw_keywords)
    ranked = sorted(scores.items(), key=lambda t: (-t[1], t[0]))[:k]
    return CandidateList(ranked, k)

"""Review corpus, keyword profiles and cold-start splitting."""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .keywords import PretaggedKeywords, normalize_keyword

REVIEWS_SCHEMA = "keyrec.reviews/v1"


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class ReviewRecord:
    user_id: str
    item_id: str
    rating: Optional[float] = None
    text: str = ""
    keywords: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.user_id or not self.item_id:
            raise CorpusError("user_id and item_id must be non-empty")
        normalized = tuple(kw for kw in map(normalize_keyword, self.keywords) if kw)
        object.__setattr__(self, "keywords", normalized)

    def to_json(self) -> dict:
        obj = {"user_id": self.user_id, "item_id": self.item_id}
        if self.rating is not None:
            obj["rating"] = self.rating
        if self.text:
            obj["text"] = self.text
        obj["keywords"] = list(self.keywords)
        return obj


@dataclass(frozen=True)
class Corpus:
    reviews: tuple[ReviewRecord, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "reviews", tuple(self.reviews))

    @property
    def users(self) -> frozenset[str]:
        return frozenset(r.user_id for r in self.reviews)

    @property
    def items(self) -> frozenset[str]:
        return frozenset(r.item_id for r in self.reviews)

    def __len__(self):
        return len(self.reviews)

    def reviews_by_user(self) -> dict[str, list[ReviewRecord]]:
        out: dict[str, list[ReviewRecord]] = {}
        for review in self.reviews:
            out.setdefault(review.user_id, []).append(review)
        return out

    def with_keywords(self, tagged: PretaggedKeywords) -> "Corpus":
        """Return a copy whose reviews take their keywords from ``tagged``.

        Reviews are matched on ``(user_id, item_id, review_index)`` where the
        index counts repeated reviews of the same pair in corpus order.
        Unmatched reviews keep their current keywords.
        """
        seen: Counter = Counter()
        out = []
        for review in self.reviews:
            pair = (review.user_id, review.item_id)
            key = (*pair, seen[pair])
            seen[pair] += 1
            if key in tagged.keywords:
                review = replace(review, keywords=tuple(tagged.keywords[key]))
            out.append(review)
        return Corpus(tuple(out))


def _parse_record(obj, lineno: int) -> ReviewRecord:
    if not isinstance(obj, dict):
        raise CorpusError(f"line {lineno}: expected a JSON object")
    for name in ("user_id", "item_id"):
        if name not in obj:
            raise CorpusError(f"line {lineno}: missing field {name}")
        if not isinstance(obj[name], str) or not obj[name]:
            raise CorpusError(f"line {lineno}: field {name} must be a non-empty string")
    rating = obj.get("rating")
    if rating is not None:
        if isinstance(rating, bool) or not isinstance(rating, (int, float)):
            raise CorpusError(f"line {lineno}: field rating must be a number")
        if not 1 <= rating <= 5:
            raise CorpusError(f"line {lineno}: rating {rating} outside [1, 5]")
    keywords = obj.get("keywords", [])
    if not isinstance(keywords, list) or not all(isinstance(k, str) for k in keywords):
        raise CorpusError(f"line {lineno}: field keywords must be a list of strings")
    text = obj.get("text", "") or ""
    return ReviewRecord(obj["user_id"], obj["item_id"], rating, text, tuple(keywords))


def load_reviews(path: str | Path) -> Corpus:
    """Load a JSON Lines review file. Blank lines are ignored."""
    reviews = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {lineno}: invalid JSON ({exc.msg})") from None
            reviews.append(_parse_record(obj, lineno))
    return Corpus(tuple(reviews))


def save_reviews(corpus: Corpus, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for review in corpus.reviews:
            fh.write(json.dumps(review.to_json(), sort_keys=True) + "\n")


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.test_fraction < 1:
            raise CorpusError("test_fraction must lie in (0, 1)")


def cold_start_split(corpus: Corpus, spec: SplitSpec) -> tuple[Corpus, Corpus]:
    """Split by user so that no test user has a review in train.

    Sorted user ids are permuted with a seeded generator and the first
    ``round(test_fraction * n_users)`` (at least one) become test users.
    """
    users = sorted(corpus.users)
    if len(users) < 2:
        raise CorpusError("cold-start split needs at least 2 users")
    # round half up; Python's round() is banker's rounding
    n_test = max(1, math.floor(spec.test_fraction * len(users) + 0.5))
    if n_test >= len(users):
        raise CorpusError(
            f"test_fraction {spec.test_fraction} leaves no train users "
            f"({n_test} of {len(users)} selected)")
    rng = np.random.default_rng(spec.seed)
    order = rng.permutation(len(users))
    test_users = {users[i] for i in order[:n_test]}
    train = tuple(r for r in corpus.reviews if r.user_id not in test_users)
    test = tuple(r for r in corpus.reviews if r.user_id in test_users)
    return Corpus(train), Corpus(test)


@dataclass
class ItemProfile:
    item_id: str
    keyword_counts: Counter = field(default_factory=Counter)
    review_count: int = 0


@dataclass
class UserProfile:
    user_id: str
    keyword_counts: Counter = field(default_factory=Counter)
    rated_items: dict[str, Optional[float]] = field(default_factory=dict)

    def top_keywords(self, n: Optional[int] = None) -> list[str]:
        """Keywords by descending count, ties lexicographic."""
        ranked = sorted(self.keyword_counts, key=lambda w: (-self.keyword_counts[w], w))
        return ranked if n is None else ranked[:n]


def build_profiles(corpus: Corpus) -> tuple[dict[str, UserProfile], dict[str, ItemProfile]]:
    """Aggregate keyword counts per user and per item.

    When a user reviews the same item more than once, the last review's
    rating is kept in ``rated_items``.
    """
    users: dict[str, UserProfile] = {}
    items: dict[str, ItemProfile] = {}
    for review in corpus.reviews:
        user = users.setdefault(review.user_id, UserProfile(review.user_id))
        item = items.setdefault(review.item_id, ItemProfile(review.item_id))
        user.keyword_counts.update(review.keywords)
        item.keyword_counts.update(review.keywords)
        item.review_count += 1
        if review.rating is not None or review.item_id not in user.rated_items:
            user.rated_items[review.item_id] = review.rating
    return users, items


def profiles_to_json(users: dict[str, UserProfile], items: dict[str, ItemProfile]) -> str:
    """Canonical serialization, byte-stable for identical inputs."""
    payload = {
        "users": {
            u: {"keyword_counts": dict(p.keyword_counts), "rated_items": p.rated_items}
            for u, p in users.items()
        },
        "items": {
            i: {"keyword_counts": dict(p.keyword_counts), "review_count": p.review_count}
            for i, p in items.items()
        },
    }
    return json.dumps(payload, sort_keys=True)


def relevant_items(corpus: Corpus) -> dict[str, set[str]]:
    """Items each user reviewed; repeated reviews count once."""
    out: dict[str, set[str]] = {}
    for review in corpus.reviews:
        out.setdefault(review.user_id, set()).add(review.item_id)
    return out


def iter_keywords(corpus: Corpus) -> Iterable[str]:
    for review in corpus.reviews:
        yield from review.keywords

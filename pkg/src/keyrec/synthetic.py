"""Seeded synthetic review corpora for tests and demos.

Each item draws a handful of keywords from a shared vocabulary; each user
has a set of favourite keywords and reviews items that share them. Review
keywords mix the item's keywords with the user's favourites that the item
actually has, so keyword queries carry real signal about held-out items.
"""
from __future__ import annotations

import numpy as np

from .corpus import Corpus, ReviewRecord

_ADJ = ["cheap", "cozy", "spicy", "fresh", "quiet", "friendly", "crispy", "rooftop",
        "vegan", "late", "live", "sweet", "local", "grilled", "modern", "family",
        "authentic", "clean", "busy", "slow"]
_NOUN = ["pizza", "noodles", "music", "bar", "staff", "room", "breakfast", "curry",
         "coffee", "dessert", "view", "service", "seafood", "pool", "wine", "tacos",
         "brunch", "beer", "lobby", "ramen"]
_FILLER = ("we stopped by on a rainy evening and honestly the whole experience "
           "felt better than expected so we will probably come back soon").split()


def keyword_vocabulary(n: int, rng: np.random.Generator) -> list[str]:
    pairs = [f"{a} {b}" for a in _ADJ for b in _NOUN] + _NOUN + _ADJ
    if n > len(pairs):
        pairs += [f"term{i}" for i in range(n - len(pairs))]
    picked = rng.choice(len(pairs), size=n, replace=False)
    return sorted(pairs[i] for i in picked)


def make_corpus(n_users: int = 50, n_items: int = 30, n_keywords: int = 80,
                n_reviews: int = 400, item_keywords: int = 8, user_keywords: int = 6,
                seed: int = 0, with_text: bool = True, text_factor: int = 6) -> Corpus:
    """Generate a corpus where every user writes at least one review.

    ``text_factor`` controls how many filler words accompany each keyword in
    the review text, i.e. how much longer the text is than its keywords.
    """
    if n_reviews < n_users:
        raise ValueError("need at least one review per user")
    rng = np.random.default_rng(seed)
    vocab = keyword_vocabulary(n_keywords, rng)
    items = [f"item{j:03d}" for j in range(n_items)]
    users = [f"user{u:03d}" for u in range(n_users)]
    item_kw = [set(rng.choice(n_keywords, size=min(item_keywords, n_keywords), replace=False))
               for _ in items]
    user_kw = [set(rng.choice(n_keywords, size=min(user_keywords, n_keywords), replace=False))
               for _ in users]

    affinity = np.array([[len(uk & ik) for ik in item_kw] for uk in user_kw], dtype=float)
    weights = affinity + 0.2
    weights /= weights.sum(axis=1, keepdims=True)

    owners = list(range(n_users)) + list(rng.integers(0, n_users, size=n_reviews - n_users))
    reviews = []
    for u in owners:
        j = int(rng.choice(n_items, p=weights[u]))
        shared = sorted(user_kw[u] & item_kw[j])
        own = sorted(item_kw[j])
        n_own = int(rng.integers(1, 4))
        chosen = shared + [own[i] for i in rng.choice(len(own), size=n_own, replace=True)]
        keywords = [vocab[i] for i in chosen]
        rating = float(min(5, 2 + len(shared) + int(rng.integers(0, 2))))
        text = ""
        if with_text:
            words = []
            for kw in keywords:
                start = int(rng.integers(0, len(_FILLER)))
                words += [_FILLER[(start + i) % len(_FILLER)] for i in range(text_factor)]
                words.append(kw)
            text = " ".join(words).capitalize() + "."
        reviews.append(ReviewRecord(users[u], items[j], rating, text, tuple(keywords)))
    return Corpus(tuple(reviews))

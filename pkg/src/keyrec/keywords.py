"""Keyword extraction from part-of-speech tagged review text.

A keyword is a maximal run of consecutive tokens tagged ADJ, NOUN, PROPN or
VERB. Tagging happens upstream (e.g. spaCy); this module only consumes the
tags, so no NLP model is needed at runtime.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, Union

logger = logging.getLogger(__name__)

KEPT_POS = frozenset({"ADJ", "NOUN", "PROPN", "VERB"})
POS_TAGS = KEPT_POS | {"OTHER"}


def normalize_keyword(text: str) -> str:
    """Lowercase, trim and collapse internal whitespace to single spaces."""
    return " ".join(text.lower().split())


@dataclass(frozen=True)
class TaggedToken:
    surface: str
    pos: str = "OTHER"

    def __post_init__(self):
        if not self.surface:
            raise ValueError("token surface must be non-empty")
        if self.pos not in POS_TAGS:
            raise ValueError(f"unknown POS tag {self.pos!r}")


TokenLike = Union[TaggedToken, Sequence[str]]


def _as_pair(token: TokenLike) -> tuple[str, str]:
    if isinstance(token, TaggedToken):
        return token.surface, token.pos
    surface, pos = token
    return surface, pos


def extract_keywords(tokens: Iterable[TokenLike]) -> list[str]:
    """Return one normalized keyword per maximal run of kept-POS tokens.

    Tokens may be ``TaggedToken`` instances or ``(surface, pos)`` pairs.

    >>> extract_keywords([("great", "ADJ"), ("pizza", "NOUN"),
    ...                   ("was", "OTHER"), ("served", "VERB")])
    ['great pizza', 'served']
    """
    keywords = []
    run: list[str] = []
    for token in tokens:
        surface, pos = _as_pair(token)
        if pos in KEPT_POS:
            run.append(surface)
            continue
        if run:
            keywords.append(" ".join(run))
            run = []
    if run:
        keywords.append(" ".join(run))
    # a surface made only of whitespace normalizes to nothing
    return [kw for kw in map(normalize_keyword, keywords) if kw]


ReviewKey = tuple[str, str, int]


@dataclass
class PretaggedKeywords:
    """Keywords extracted from a pre-tagged file.

    ``keywords`` maps ``(user_id, item_id, review_index)`` to the keyword
    list of that review. ``review_index`` counts the reviews of one
    (user, item) pair in file order, starting at 0.
    """

    keywords: dict[ReviewKey, list[str]] = field(default_factory=dict)
    unknown_pos_count: int = 0

    def __len__(self):
        return len(self.keywords)


def load_pretagged(path: str | Path) -> PretaggedKeywords:
    """Read tagged-token JSONL and apply :func:`extract_keywords` per record.

    Unknown POS strings are treated as OTHER and counted in
    ``unknown_pos_count``.
    """
    result = PretaggedKeywords()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"line {lineno}: invalid JSON ({exc.msg})") from None
            for name in ("user_id", "item_id", "review_index", "tokens"):
                if name not in obj:
                    raise ValueError(f"line {lineno}: missing field {name}")
            pairs = []
            for tok in obj["tokens"]:
                pos = tok.get("pos", "OTHER")
                if pos not in POS_TAGS:
                    result.unknown_pos_count += 1
                    pos = "OTHER"
                pairs.append((tok["surface"], pos))
            key = (str(obj["user_id"]), str(obj["item_id"]), int(obj["review_index"]))
            result.keywords[key] = extract_keywords(pairs)
    if result.unknown_pos_count:
        logger.warning("%s: %d tokens with unknown POS mapped to OTHER",
                       path, result.unknown_pos_count)
    return result

"""Prompt construction for LLM re-ranking.

A prompt combines (1) the user's keywords, (2) the retrieved candidate set
and (3) each candidate's keywords ordered by TF-IRF weight, optionally
preceded by few-shot examples drawn from training users.
"""
from __future__ import annotations

import hashlib
import json
import string
import zlib
from dataclasses import asdict, dataclass, field
from importlib import resources
from typing import Mapping, Optional, Sequence

import numpy as np

from .corpus import UserProfile
from .keywords import normalize_keyword
from .retrieval import CandidateList, KeywordItemIndex, resolve_query, score_items

PLACEHOLDERS = ("task_preamble", "examples", "user_keywords", "candidates_block")
KEYWORD_ORDERS = ("tfirf_desc", "shuffled")
CANDIDATE_ORDERS = ("retrieval_order", "shuffled")

CANDIDATES_OPEN = "<candidates>"
CANDIDATES_CLOSE = "</candidates>"

DEFAULT_PREAMBLE = (
    "You are a recommender system helping a new user find items they will enjoy. "
    "The user described their preferences with a few keywords. Each candidate item "
    "is described by keywords taken from its reviews, most characteristic first. "
    "Re-rank the candidates so that the items best matching the user come first."
)


def default_template() -> str:
    return resources.files("keyrec").joinpath("templates/default_prompt.txt").read_text("utf-8")


class PromptConfigError(ValueError):
    pass


def _template_fields(template: str) -> list[str]:
    try:
        return [name for _, name, _, _ in string.Formatter().parse(template) if name is not None]
    except ValueError as exc:
        raise PromptConfigError(f"malformed template: {exc}") from None


@dataclass(frozen=True)
class PromptConfig:
    """Prompt layout and ordering policies.

    ``keyword_order`` is ``"tfirf_desc"`` or ``"shuffled"`` (seeded by
    ``keyword_seed``); ``candidate_order`` is ``"retrieval_order"`` or
    ``"shuffled"`` (seeded by ``candidate_seed``).
    """

    template: str = field(default_factory=default_template)
    task_preamble: str = DEFAULT_PREAMBLE
    shots: int = 0
    keywords_per_item: int = 10
    keyword_order: str = "tfirf_desc"
    keyword_seed: int = 0
    candidate_order: str = "retrieval_order"
    candidate_seed: int = 0
    max_user_keywords: int = 20
    example_candidates: int = 10

    def __post_init__(self):
        fields = _template_fields(self.template)
        for name in PLACEHOLDERS:
            n = fields.count(name)
            if n != 1:
                raise PromptConfigError(f"template must contain {{{name}}} exactly once (found {n})")
        extra = sorted(set(fields) - set(PLACEHOLDERS))
        if extra:
            raise PromptConfigError(f"unknown template placeholders: {extra}")
        if self.keyword_order not in KEYWORD_ORDERS:
            raise PromptConfigError(f"keyword_order must be one of {KEYWORD_ORDERS}")
        if self.candidate_order not in CANDIDATE_ORDERS:
            raise PromptConfigError(f"candidate_order must be one of {CANDIDATE_ORDERS}")
        if self.shots < 0:
            raise PromptConfigError("shots must be >= 0")
        for name in ("keywords_per_item", "max_user_keywords", "example_candidates"):
            if getattr(self, name) < 1:
                raise PromptConfigError(f"{name} must be positive")

    @classmethod
    def from_dict(cls, data: Mapping) -> "PromptConfig":
        data = dict(data)
        if "template_path" in data:
            with open(data.pop("template_path"), encoding="utf-8") as fh:
                data["template"] = fh.read()
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise PromptConfigError(f"unknown prompt options: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class FewShotExample:
    user_id: str
    example_keywords: tuple[str, ...]
    example_candidates: tuple[str, ...]
    example_ranking: tuple[str, ...]

    def __post_init__(self):
        if sorted(self.example_ranking) != sorted(self.example_candidates):
            raise ValueError("example_ranking must be a permutation of example_candidates")


@dataclass(frozen=True)
class PromptBundle:
    text: str
    candidate_ids: tuple[str, ...]
    config_fingerprint: str


def jaccard(a: set, b: set) -> float:
    union = len(a | b)
    return len(a & b) / union if union else 0.0


def _rating_key(rating: Optional[float]) -> float:
    return 0.0 if rating is None else float(rating)


def select_examples(train_user_profiles: Mapping[str, UserProfile], query_keywords: Sequence[str],
                    shots: int, index: KeywordItemIndex, n_candidates: int = 10) -> list[FewShotExample]:
    """Pick the ``shots`` training users whose keyword sets overlap the query most.

    Overlap is Jaccard similarity (ties by user id). Each example's
    candidates are the user's rated items (best first, capped at
    ``n_candidates``) topped up with items retrieved for the user's own
    keywords. Candidates are listed in retrieval-score order; the answer
    orders them by the user's rating, unrated filler last.
    """
    if shots < 0:
        raise ValueError("shots must be >= 0")
    if shots > len(train_user_profiles):
        raise ValueError(f"shots={shots} exceeds the {len(train_user_profiles)} training users")
    if shots == 0:
        return []
    query = {kw for kw in map(normalize_keyword, query_keywords) if kw}
    ranked = sorted(train_user_profiles.values(),
                    key=lambda p: (-jaccard(set(p.keyword_counts), query), p.user_id))
    examples = []
    for profile in ranked[:shots]:
        keywords = profile.top_keywords()
        rated = sorted(profile.rated_items,
                       key=lambda r: (-_rating_key(profile.rated_items[r]), r))[:n_candidates]
        scores = score_items(index, resolve_query(index, keywords)) if keywords and index.vocab \
            else np.zeros(len(index.items))
        candidates = list(rated)
        if len(candidates) < n_candidates:
            taken = set(candidates)
            for item in index.rank(scores, len(index.items)).item_ids:
                if len(candidates) >= n_candidates:
                    break
                if item not in taken:
                    candidates.append(item)
                    taken.add(item)
        rated_set = set(rated)
        ranking = sorted(candidates, key=lambda r: (
            r not in rated_set, -_rating_key(profile.rated_items.get(r)), r))

        def score_of(item):
            j = index.item_index(item)
            return 0.0 if j is None else scores[j]

        listed = sorted(candidates, key=lambda r: (-score_of(r), r))
        examples.append(FewShotExample(profile.user_id, tuple(keywords), tuple(listed), tuple(ranking)))
    return examples


def _item_seed(seed: int, item_id: str) -> list[int]:
    return [seed, zlib.crc32(item_id.encode("utf-8"))]


def candidate_keywords(index: KeywordItemIndex, item_id: str, config: PromptConfig) -> list[str]:
    """Top ``keywords_per_item`` keywords of an item, ordered per policy."""
    top = [kw for kw, _, _ in index.item_keywords(item_id)[:config.keywords_per_item]]
    if config.keyword_order == "shuffled" and len(top) > 1:
        perm = np.random.default_rng(_item_seed(config.keyword_seed, item_id)).permutation(len(top))
        top = [top[i] for i in perm]
    return top


def order_candidates(ids: Sequence[str], config: PromptConfig) -> list[str]:
    ids = list(ids)
    if config.candidate_order == "shuffled" and len(ids) > 1:
        perm = np.random.default_rng(config.candidate_seed).permutation(len(ids))
        ids = [ids[i] for i in perm]
    return ids


def _dedupe(keywords) -> list[str]:
    out, seen = [], set()
    for kw in map(normalize_keyword, keywords):
        if kw and kw not in seen:
            seen.add(kw)
            out.append(kw)
    return out


def _render_examples(examples: Sequence[FewShotExample], index: KeywordItemIndex,
                     config: PromptConfig) -> str:
    parts = []
    for n, ex in enumerate(examples, start=1):
        lines = [f"Example {n}:",
                 "User keywords: " + ", ".join(ex.example_keywords[:config.max_user_keywords]),
                 "Candidates:"]
        for item in ex.example_candidates:
            lines.append(f"- {item}: " + ", ".join(candidate_keywords(index, item, config)))
        lines.append("Answer: " + json.dumps(list(ex.example_ranking)))
        parts.append("\n".join(lines) + "\n\n")
    return "".join(parts)


def _render_candidates(ids: Sequence[str], describe) -> str:
    lines = ["Candidates:", CANDIDATES_OPEN]
    lines += [f"{item}: {describe(item)}" for item in ids]
    lines.append(CANDIDATES_CLOSE)
    return "\n".join(lines)


def _fingerprint(config: PromptConfig, text: str, ids: Sequence[str]) -> str:
    payload = json.dumps({"config": config.to_dict(), "candidates": list(ids), "text": text},
                         sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _finish(config: PromptConfig, examples: str, user_block: str, ids, describe) -> PromptBundle:
    text = config.template.format_map({
        "task_preamble": config.task_preamble,
        "examples": examples,
        "user_keywords": user_block,
        "candidates_block": _render_candidates(ids, describe),
    })
    return PromptBundle(text, tuple(ids), _fingerprint(config, text, ids))


def _candidate_ids(candidates) -> list[str]:
    ids = candidates.item_ids if isinstance(candidates, CandidateList) else list(candidates)
    if not ids:
        raise ValueError("cannot build a prompt without candidates")
    if len(set(ids)) != len(ids):
        raise ValueError("candidate ids must be distinct")
    return ids


def build_prompt(query_keywords: Sequence[str], candidates: CandidateList | Sequence[str],
                 index: KeywordItemIndex, examples: Sequence[FewShotExample] = (),
                 config: Optional[PromptConfig] = None) -> PromptBundle:
    """Render the keyword re-ranking prompt.

    Deterministic: identical inputs, config and seeds give identical text.
    """
    config = config or PromptConfig()
    ids = order_candidates(_candidate_ids(candidates), config)
    user_kws = _dedupe(query_keywords)[:config.max_user_keywords]
    return _finish(config, _render_examples(examples, index, config),
                   "User keywords: " + ", ".join(user_kws), ids,
                   lambda item: ", ".join(candidate_keywords(index, item, config)))


def build_review_prompt(user_reviews: Sequence[str], candidates: CandidateList | Sequence[str],
                        item_reviews: Mapping[str, Sequence[str]],
                        config: Optional[PromptConfig] = None) -> PromptBundle:
    """Same layout as :func:`build_prompt` but with full review texts.

    Used as the baseline when measuring how much prompt length keywords save.
    No few-shot examples are rendered.
    """
    config = config or PromptConfig()
    ids = order_candidates(_candidate_ids(candidates), config)
    user_block = "User reviews: " + " ".join(t.strip() for t in user_reviews if t.strip())
    return _finish(config, "", user_block, ids,
                   lambda item: " ".join(t.strip() for t in item_reviews.get(item, ()) if t.strip()))


def candidate_ids_in_prompt(text: str) -> list[str]:
    """Recover the candidate ids from the last candidates block of a prompt."""
    start = text.rfind(CANDIDATES_OPEN)
    stop = text.find(CANDIDATES_CLOSE, start)
    if start < 0 or stop < 0:
        return []
    ids = []
    for line in text[start + len(CANDIDATES_OPEN):stop].splitlines():
        if line.strip():
            ids.append(line.partition(": ")[0].strip())
    return ids

"""Ranking metrics with binary relevance."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence


class MetricsError(ValueError):
    pass


def metrics_at_k(ranked: Sequence[str], relevant: set, k: int) -> tuple[float, float, float]:
    """Precision, recall and NDCG of the top ``k`` of ``ranked``.

    Gain is 1 for relevant items with a ``1/log2(rank + 1)`` discount; the
    ideal ranking puts ``min(k, |relevant|)`` relevant items first.
    Precision divides by ``k`` even when fewer than ``k`` items are ranked.
    """
    if k < 1:
        raise MetricsError("k must be >= 1")
    if not relevant:
        raise MetricsError("relevant set is empty")
    top = list(ranked)[:k]
    if len(set(top)) != len(top):
        raise MetricsError("ranked list has duplicate items")
    hits = [pos for pos, item in enumerate(top) if item in relevant]
    dcg = sum(1.0 / math.log2(pos + 2) for pos in hits)
    idcg = sum(1.0 / math.log2(pos + 2) for pos in range(min(k, len(relevant))))
    return len(hits) / k, len(hits) / len(relevant), dcg / idcg


@dataclass
class MetricsReport:
    per_k: dict[int, dict[str, float]] = field(default_factory=dict)
    users_evaluated: int = 0
    users_skipped: int = 0

    def to_dict(self) -> dict:
        return {
            "per_k": {str(k): dict(v) for k, v in sorted(self.per_k.items())},
            "users_evaluated": self.users_evaluated,
            "users_skipped": self.users_skipped,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "MetricsReport":
        return cls({int(k): dict(v) for k, v in data["per_k"].items()},
                   data["users_evaluated"], data["users_skipped"])

    def __str__(self):
        lines = [f"users evaluated: {self.users_evaluated} (skipped {self.users_skipped})"]
        for k, m in sorted(self.per_k.items()):
            lines.append(f"  @{k:<3d} P={m['precision']:.4f} R={m['recall']:.4f} N={m['ndcg']:.4f}")
        return "\n".join(lines)


def evaluate_run(results: Mapping[str, Iterable[str]], truths: Mapping[str, Iterable[str]],
                 ks: Sequence[int]) -> MetricsReport:
    """Average per-user metrics over users with a non-empty relevance set.

    Users are visited in sorted order, so the result does not depend on
    mapping order.
    """
    missing = sorted(set(results) - set(truths))
    if missing:
        raise MetricsError(f"no ground truth for users: {missing[:5]}")
    ks = sorted(set(ks))
    sums = {k: [0.0, 0.0, 0.0] for k in ks}
    evaluated = skipped = 0
    for user in sorted(results):
        relevant = set(truths[user])
        if not relevant:
            skipped += 1
            continue
        ranked = list(results[user])
        evaluated += 1
        for k in ks:
            p, r, n = metrics_at_k(ranked, relevant, k)
            sums[k][0] += p
            sums[k][1] += r
            sums[k][2] += n
    per_k = {
        k: {name: (s / evaluated if evaluated else 0.0)
            for name, s in zip(("precision", "recall", "ndcg"), sums[k])}
        for k in ks
    }
    return MetricsReport(per_k, evaluated, skipped)

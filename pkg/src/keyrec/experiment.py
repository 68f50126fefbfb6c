"""End-to-end cold-start experiments.

split -> profiles -> index -> retrieve per test user -> optional LLM
re-rank -> metrics. A run is configured by one JSON document with the
sections ``data``, ``split``, ``retrieval``, ``rerank`` and ``eval``.
"""
from __future__ import annotations

import copy
import json
import logging
import platform
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

import numpy as np
import scipy

from . import __version__
from .corpus import Corpus, SplitSpec, build_profiles, cold_start_split, load_reviews, relevant_items
from .embeddings import DEFAULT_DIM, EmbeddingStore, load_embeddings
from .keywords import load_pretagged
from .llm import (AuditLog, LLMClient, RankedList, RerankError, RetryPolicy, audit_record,
                  make_client, rerank)
from .metrics import MetricsReport, evaluate_run
from .prompts import PromptConfig, build_prompt, build_review_prompt, select_examples
from .retrieval import build_index, jaccard_retrieve, retrieve
from .synthetic import make_corpus

logger = logging.getLogger(__name__)

REPORT_SCHEMA = "keyrec.report/v1"
MANIFEST_SCHEMA = "keyrec.manifest/v1"
RANKINGS_SCHEMA = "keyrec.rankings/v1"

DEFAULTS = {
    "seed": 0,
    "data": {"reviews": None, "tagged": None, "embeddings": None,
             "embedding_dim": DEFAULT_DIM, "synthetic": None},
    "split": {"test_fraction": 0.2, "seed": None},
    "retrieval": {"method": "mpg", "k": 20, "max_query_keywords": None},
    "rerank": {"enabled": False, "client": {"type": "identity"}, "prompt": {},
               "prompt_mode": "keywords", "max_in_flight": 1, "retries": 3,
               "backoff": 0.5, "on_failure": "raise"},
    "eval": {"ks": [1, 3, 20]},
}


class ExperimentError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


def resolve_config(config: Mapping, seed: Optional[int] = None) -> dict:
    """Merge ``config`` over the defaults and fill derived seeds.

    ``seed`` (e.g. from the command line) replaces the top-level seed; the
    split seed and prompt shuffle seeds default to the top-level seed.
    """
    unknown = set(config) - set(DEFAULTS) - {"output_dir"}
    if unknown:
        raise ExperimentError("config", f"unknown sections {sorted(unknown)}")
    out = copy.deepcopy(DEFAULTS)
    for section, value in config.items():
        if isinstance(out.get(section), dict):
            if not isinstance(value, Mapping):
                raise ExperimentError("config", f"section {section!r} must be an object")
            bad = set(value) - set(out[section])
            if bad:
                raise ExperimentError("config", f"unknown keys in {section}: {sorted(bad)}")
            out[section].update(copy.deepcopy(dict(value)))
        else:
            out[section] = value
    if seed is not None:
        out["seed"] = seed
    if out["split"]["seed"] is None:
        out["split"]["seed"] = out["seed"]
    prompt = out["rerank"]["prompt"]
    prompt.setdefault("keyword_seed", out["seed"])
    prompt.setdefault("candidate_seed", out["seed"])
    if out["retrieval"]["method"] not in ("mpg", "jaccard"):
        raise ExperimentError("config", "retrieval.method must be 'mpg' or 'jaccard'")
    if out["rerank"]["prompt_mode"] not in ("keywords", "reviews"):
        raise ExperimentError("config", "rerank.prompt_mode must be 'keywords' or 'reviews'")
    if out["rerank"]["on_failure"] not in ("raise", "retrieval"):
        raise ExperimentError("config", "rerank.on_failure must be 'raise' or 'retrieval'")
    return out


@dataclass
class UserRun:
    user_id: str
    query: list[str]
    substitutions: dict[str, str]
    candidates: list[tuple[str, float]]
    ranking: list[str]
    fingerprint: Optional[str] = None
    prompt_chars: Optional[int] = None
    repaired: int = 0
    audit: Optional[dict] = None
    error: Optional[str] = None

    def to_json(self) -> dict:
        return {
            "user_id": self.user_id,
            "query": self.query,
            "substitutions": self.substitutions,
            "candidates": [{"item_id": i, "score": s} for i, s in self.candidates],
            "ranking": self.ranking,
            "fingerprint": self.fingerprint,
            "prompt_chars": self.prompt_chars,
            "repaired": self.repaired,
            "error": self.error,
        }


@dataclass
class ExperimentResult:
    config: dict
    report: MetricsReport
    retrieval_report: MetricsReport
    runs: list[UserRun] = field(default_factory=list)
    outputs: dict[str, Path] = field(default_factory=dict)

    @property
    def fingerprints(self) -> list[Optional[str]]:
        return [r.fingerprint for r in self.runs]

    def report_json(self) -> dict:
        payload = {
            "schema": REPORT_SCHEMA,
            "stage": "rerank" if self.config["rerank"]["enabled"] else "retrieval",
            "metrics": self.report.to_dict(),
            "retrieval_metrics": self.retrieval_report.to_dict(),
        }
        chars = [r.prompt_chars for r in self.runs if r.prompt_chars is not None]
        if chars:
            payload["prompts"] = {
                "count": len(chars),
                "mean_chars": sum(chars) / len(chars),
                "repaired_items": sum(r.repaired for r in self.runs),
                "failures": sum(1 for r in self.runs if r.error),
            }
        return payload


def _path(base: Optional[Path], value) -> Optional[Path]:
    if value is None:
        return None
    p = Path(value)
    return p if p.is_absolute() or base is None else base / p


def _load_corpus(data: dict, base: Optional[Path]) -> Corpus:
    if data["synthetic"] is not None:
        return make_corpus(**data["synthetic"])
    if data["reviews"] is None:
        raise ExperimentError("data", "config names neither data.reviews nor data.synthetic")
    corpus = load_reviews(_path(base, data["reviews"]))
    if data["tagged"]:
        corpus = corpus.with_keywords(load_pretagged(_path(base, data["tagged"])))
    return corpus


@contextmanager
def _stage(name):
    """Re-raise failures labelled with the pipeline stage."""
    try:
        yield
    except ExperimentError:
        raise
    except Exception as exc:
        raise ExperimentError(name, str(exc)) from exc


def run_experiment(config: Mapping, *, seed: Optional[int] = None,
                   output_dir: Optional[str | Path] = None, base_dir: Optional[str | Path] = None,
                   client: Optional[LLMClient] = None) -> ExperimentResult:
    """Run one experiment and, if ``output_dir`` is given, write its artifacts.

    Artifacts: ``report.json``, ``manifest.json``, ``rankings.jsonl`` and,
    when re-ranking, ``audit.jsonl``. ``client`` overrides the configured
    LLM client (useful for in-process mocks).
    """
    cfg = resolve_config(config, seed)
    base = Path(base_dir) if base_dir is not None else None
    output_dir = output_dir if output_dir is not None else _path(base, cfg.get("output_dir"))

    with _stage("data"):
        corpus = _load_corpus(cfg["data"], base)
        emb_path = _path(base, cfg["data"]["embeddings"])
        store = load_embeddings(emb_path) if emb_path else EmbeddingStore(dim=cfg["data"]["embedding_dim"])
    with _stage("split"):
        train, test = cold_start_split(corpus, SplitSpec(cfg["split"]["test_fraction"], cfg["split"]["seed"]))
    with _stage("index"):
        train_users, train_items = build_profiles(train)
        index = build_index(train_items, sorted(train_items))
        test_users, _ = build_profiles(test)
        truths = relevant_items(test)

    rcfg = cfg["retrieval"]
    runs = []
    with _stage("retrieval"):
        for user_id in sorted(test_users):
            query = test_users[user_id].top_keywords(rcfg["max_query_keywords"])
            if rcfg["method"] == "mpg":
                cands, qv = retrieve(index, query, rcfg["k"], store)
                subs = dict(sorted(qv.substitutions.items()))
            else:
                cands, subs = jaccard_retrieve(train_items, query, rcfg["k"]), {}
            runs.append(UserRun(user_id, query, subs, cands.entries, cands.item_ids))
    retrieval_report = evaluate_run({r.user_id: r.ranking for r in runs}, truths, cfg["eval"]["ks"])

    rr = cfg["rerank"]
    if rr["enabled"]:
        with _stage("rerank"):
            prompt_cfg = PromptConfig.from_dict(rr["prompt"])
            llm = client or make_client(rr["client"])
            retry = RetryPolicy(attempts=rr["retries"], backoff=rr["backoff"])
            by_user = test.reviews_by_user()
            item_texts: dict[str, list[str]] = {}
            for review in train.reviews:
                item_texts.setdefault(review.item_id, []).append(review.text)

            def work(run: UserRun) -> UserRun:
                if not run.ranking:
                    return run
                if rr["prompt_mode"] == "reviews":
                    bundle = build_review_prompt([r.text for r in by_user[run.user_id]],
                                                 run.ranking, item_texts, prompt_cfg)
                else:
                    examples = select_examples(train_users, run.query, prompt_cfg.shots, index,
                                               prompt_cfg.example_candidates)
                    bundle = build_prompt(run.query, run.ranking, index, examples, prompt_cfg)
                run.fingerprint = bundle.config_fingerprint
                run.prompt_chars = len(bundle.text)
                try:
                    ranked = rerank(llm, bundle, retry)
                except RerankError as exc:
                    if rr["on_failure"] == "raise":
                        raise
                    run.error = str(exc)
                    ranked = RankedList(list(run.ranking), {i: "repaired" for i in run.ranking})
                run.ranking = ranked.item_ids
                run.repaired = ranked.repaired_count
                run.audit = audit_record(bundle, ranked)
                return run

            # map() yields in submission order, so completion order is irrelevant
            with ThreadPoolExecutor(max_workers=max(1, rr["max_in_flight"])) as pool:
                runs = list(pool.map(work, runs))

    with _stage("evaluate"):
        report = evaluate_run({r.user_id: r.ranking for r in runs}, truths, cfg["eval"]["ks"])
    result = ExperimentResult(cfg, report, retrieval_report, runs)
    if output_dir is not None:
        with _stage("output"):
            write_outputs(result, Path(output_dir))
    return result


def write_outputs(result: ExperimentResult, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "report": out / "report.json",
        "manifest": out / "manifest.json",
        "rankings": out / "rankings.jsonl",
    }
    paths["report"].write_text(json.dumps(result.report_json(), indent=2, sort_keys=True) + "\n")
    manifest = {
        "schema": MANIFEST_SCHEMA,
        "config": result.config,
        "seeds": {
            "seed": result.config["seed"],
            "split": result.config["split"]["seed"],
            "keyword_order": result.config["rerank"]["prompt"]["keyword_seed"],
            "candidate_order": result.config["rerank"]["prompt"]["candidate_seed"],
        },
        "versions": {
            "keyrec": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
    paths["manifest"].write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    with open(paths["rankings"], "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"schema": RANKINGS_SCHEMA}) + "\n")
        for run in result.runs:
            fh.write(json.dumps(run.to_json(), sort_keys=True, ensure_ascii=False) + "\n")
    if result.config["rerank"]["enabled"]:
        audit = AuditLog()
        for run in result.runs:
            if run.audit is not None:
                audit.append(run.audit)
        paths["audit"] = out / "audit.jsonl"
        audit.write(paths["audit"])
    result.outputs = paths


def load_config(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)

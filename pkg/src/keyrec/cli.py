"""Command-line entry point: ``keyrec <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from .corpus import (SplitSpec, build_profiles, cold_start_split, load_reviews, relevant_items,
                     save_reviews)
from .embeddings import EmbeddingStore, load_embeddings
from .experiment import ExperimentError, load_config, run_experiment
from .keywords import load_pretagged
from .llm import make_client, rerank
from .metrics import evaluate_run
from .prompts import PromptConfig, build_prompt, select_examples
from .retrieval import CandidateList, jaccard_retrieve, load_index, retrieve, save_index, build_index

ENV_EMBEDDINGS = "KEYREC_EMBEDDINGS"


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n")


def _keywords(text: str) -> list[str]:
    return [kw.strip() for kw in text.split(",") if kw.strip()]


def _store(args) -> Optional[EmbeddingStore]:
    path = args.embeddings or os.environ.get(ENV_EMBEDDINGS)
    return load_embeddings(path) if path else None


def cmd_ingest(args):
    corpus = load_reviews(args.reviews)
    if args.tagged:
        tagged = load_pretagged(args.tagged)
        corpus = corpus.with_keywords(tagged)
        print(f"merged keywords for {len(tagged)} reviews "
              f"({tagged.unknown_pos_count} unknown POS tags)", file=sys.stderr)
    save_reviews(corpus, args.out)
    print(f"wrote {len(corpus)} reviews to {args.out}", file=sys.stderr)


def cmd_split(args):
    train, test = cold_start_split(load_reviews(args.reviews), SplitSpec(args.test_fraction, args.seed))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_reviews(train, out / "train.jsonl")
    save_reviews(test, out / "test.jsonl")
    _emit({"train_users": len(train.users), "test_users": len(test.users),
           "train_reviews": len(train), "test_reviews": len(test)})


def cmd_build_index(args):
    _, items = build_profiles(load_reviews(args.reviews))
    index = build_index(items, sorted(items))
    save_index(index, args.out)
    print(f"index: {len(index.vocab)} keywords x {len(index.items)} items -> {args.out}",
          file=sys.stderr)


def _candidates(args, index) -> tuple[CandidateList, dict]:
    keywords = _keywords(args.keywords)
    if args.method == "jaccard":
        return jaccard_retrieve(index.item_keyword_sets(), keywords, args.k), {}
    cands, query = retrieve(index, keywords, args.k, _store(args))
    return cands, dict(sorted(query.substitutions.items()))


def cmd_retrieve(args):
    cands, subs = _candidates(args, load_index(args.index))
    _emit({"candidates": cands.to_json(), "substitutions": subs})


def _bundle(args):
    index = load_index(args.index)
    cands, subs = _candidates(args, index)
    options = {"shots": args.shots, "keyword_order": args.keyword_order,
               "candidate_order": args.candidate_order,
               "keyword_seed": args.seed, "candidate_seed": args.seed}
    if args.template:
        options["template_path"] = args.template
    config = PromptConfig.from_dict(options)
    examples = []
    if config.shots:
        if not args.train:
            raise ValueError("--shots needs --train for example users")
        users, _ = build_profiles(load_reviews(args.train))
        examples = select_examples(users, _keywords(args.keywords), config.shots, index,
                                   config.example_candidates)
    return build_prompt(_keywords(args.keywords), cands, index, examples, config), subs


def cmd_prompt(args):
    bundle, subs = _bundle(args)
    _emit({"text": bundle.text, "candidate_ids": list(bundle.candidate_ids),
           "fingerprint": bundle.config_fingerprint, "substitutions": subs})


def cmd_rerank(args):
    bundle, _ = _bundle(args)
    client = {"type": args.client}
    if args.client == "http" and args.endpoint:
        client["endpoint"] = args.endpoint
    ranked = rerank(make_client(client), bundle)
    _emit({"ranking": ranked.item_ids, "provenance": ranked.provenance,
           "fingerprint": bundle.config_fingerprint, "raw_response": ranked.raw_response})


def _read_rankings(path) -> dict[str, list[str]]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            if "schema" in obj and "user_id" not in obj:
                continue
            if "user_id" not in obj or "ranking" not in obj:
                raise ValueError(f"{path} line {lineno}: expected user_id and ranking")
            out[obj["user_id"]] = list(obj["ranking"])
    return out


def cmd_evaluate(args):
    ks = [int(k) for k in args.ks.split(",")]
    truths = relevant_items(load_reviews(args.truth))
    report = evaluate_run(_read_rankings(args.rankings), truths, ks)
    _emit(report.to_dict())


def cmd_run(args):
    config_path = Path(args.config)
    result = run_experiment(load_config(config_path), seed=args.seed, output_dir=args.out_dir,
                            base_dir=config_path.parent)
    payload = result.report_json()
    if result.outputs:
        payload["outputs"] = {k: str(v) for k, v in sorted(result.outputs.items())}
    _emit(payload)


def _query_flags(p, with_prompt=False):
    p.add_argument("--index", required=True, help="index file from build-index")
    p.add_argument("--keywords", required=True, help='comma-separated, e.g. "live music,cheap eats"')
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--method", choices=["mpg", "jaccard"], default="mpg")
    p.add_argument("--embeddings", help=f"keyword vectors JSONL (default ${ENV_EMBEDDINGS})")
    if with_prompt:
        p.add_argument("--train", help="training reviews, needed for --shots > 0")
        p.add_argument("--shots", type=int, default=0)
        p.add_argument("--template")
        p.add_argument("--keyword-order", choices=["tfirf_desc", "shuffled"], default="tfirf_desc")
        p.add_argument("--candidate-order", choices=["retrieval_order", "shuffled"],
                       default="retrieval_order")
        p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="keyrec", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, metavar="subcommand")

    p = sub.add_parser("ingest", help="normalize reviews, merging keywords from tagged tokens")
    p.add_argument("--reviews", required=True)
    p.add_argument("--tagged")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("split", help="cold-start split by user")
    p.add_argument("--reviews", required=True)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("build-index", help="build the keyword-item TF-IRF index")
    p.add_argument("--reviews", required=True, help="training reviews")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("retrieve", help="top-k candidates for a keyword query")
    _query_flags(p)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("prompt", help="render the re-ranking prompt")
    _query_flags(p, with_prompt=True)
    p.set_defaults(func=cmd_prompt)

    p = sub.add_parser("rerank", help="retrieve, prompt and re-rank with an LLM client")
    _query_flags(p, with_prompt=True)
    p.add_argument("--client", choices=["identity", "reverse", "http"], default="identity")
    p.add_argument("--endpoint")
    p.set_defaults(func=cmd_rerank)

    p = sub.add_parser("evaluate", help="P@K / R@K / NDCG@K of a rankings file")
    p.add_argument("--rankings", required=True, help="JSONL of {user_id, ranking}")
    p.add_argument("--truth", required=True, help="held-out test reviews")
    p.add_argument("--ks", default="1,3,20")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run", help="run an experiment from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_run)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.func(args)
    except ExperimentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # stage failure; keep it to one line
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"error: {args.command}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

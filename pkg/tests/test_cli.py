import json
import subprocess
import sys

import pytest

from keyrec.cli import main
from keyrec.corpus import Corpus, ReviewRecord, save_reviews
from keyrec.synthetic import make_corpus

from conftest import write_jsonl


@pytest.fixture
def workdir(tmp_path):
    corpus = Corpus((
        ReviewRecord("u1", "pub", 5.0, "Loud but fun", ("live music", "cheap eats", "beer")),
        ReviewRecord("u2", "pub", 4.0, "", ("live music", "beer")),
        ReviewRecord("u2", "cafe", 3.0, "", ("coffee", "cheap eats")),
        ReviewRecord("u3", "bistro", 5.0, "", ("wine", "quiet")),
    ))
    save_reviews(corpus, tmp_path / "reviews.jsonl")
    assert main(["build-index", "--reviews", str(tmp_path / "reviews.jsonl"),
                 "--out", str(tmp_path / "idx.bin")]) == 0
    return tmp_path


def run(capsys, *args):
    code = main(list(args))
    out, err = capsys.readouterr()
    return code, out, err


def test_retrieve(workdir, capsys):
    code, out, _ = run(capsys, "retrieve", "--index", str(workdir / "idx.bin"),
                       "--keywords", "live music,cheap eats", "--k", "20")
    assert code == 0
    payload = json.loads(out)
    assert [c["item_id"] for c in payload["candidates"]] == ["pub", "cafe", "bistro"]
    assert payload["substitutions"] == {}


def test_retrieve_is_idempotent(workdir, capsys):
    args = ("retrieve", "--index", str(workdir / "idx.bin"), "--keywords", "wine bar,beer")
    first = run(capsys, *args)[1]
    assert first == run(capsys, *args)[1]
    assert json.loads(first)["substitutions"] == {"wine bar": "wine"}


def test_retrieve_with_embeddings_env(workdir, capsys, monkeypatch):
    path = write_jsonl(workdir / "emb.jsonl", [
        {"keyword": "espresso", "vector": [1, 0]}, {"keyword": "coffee", "vector": [0.9, 0.1]},
        {"keyword": "beer", "vector": [0, 1]},
    ])
    monkeypatch.setenv("KEYREC_EMBEDDINGS", str(path))
    code, out, _ = run(capsys, "retrieve", "--index", str(workdir / "idx.bin"), "--keywords", "espresso")
    assert code == 0
    assert json.loads(out)["substitutions"] == {"espresso": "coffee"}


def test_jaccard(workdir, capsys):
    code, out, _ = run(capsys, "retrieve", "--index", str(workdir / "idx.bin"),
                       "--keywords", "wine,quiet", "--method", "jaccard", "--k", "1")
    assert code == 0
    assert json.loads(out)["candidates"] == [{"item_id": "bistro", "score": 1.0}]


def test_prompt_and_rerank(workdir, capsys):
    base = ("--index", str(workdir / "idx.bin"), "--keywords", "live music,coffee")
    code, out, _ = run(capsys, "prompt", *base, "--shots", "1", "--train", str(workdir / "reviews.jsonl"))
    assert code == 0
    prompt = json.loads(out)
    assert "Example 1:" in prompt["text"]
    code, out, _ = run(capsys, "rerank", *base, "--client", "reverse")
    assert code == 0
    ranked = json.loads(out)
    assert ranked["ranking"] == prompt["candidate_ids"][::-1]
    assert ranked["fingerprint"] != prompt["fingerprint"]  # shots differ


def test_prompt_shots_without_train(workdir, capsys):
    code, _, err = run(capsys, "prompt", "--index", str(workdir / "idx.bin"), "--keywords", "beer",
                       "--shots", "1")
    assert code == 1
    assert err.startswith("error: prompt:") and err.count("\n") == 1


def test_ingest_with_tagged(tmp_path, capsys):
    write_jsonl(tmp_path / "r.jsonl", [{"user_id": "u", "item_id": "i", "text": "great pizza"}])
    write_jsonl(tmp_path / "t.jsonl", [{"user_id": "u", "item_id": "i", "review_index": 0, "tokens": [
        {"surface": "great", "pos": "ADJ"}, {"surface": "pizza", "pos": "NOUN"}]}])
    code, _, _ = run(capsys, "ingest", "--reviews", str(tmp_path / "r.jsonl"),
                     "--tagged", str(tmp_path / "t.jsonl"), "--out", str(tmp_path / "out.jsonl"))
    assert code == 0
    assert json.loads((tmp_path / "out.jsonl").read_text())["keywords"] == ["great pizza"]


def test_split_and_evaluate(tmp_path, capsys):
    save_reviews(make_corpus(n_users=20, n_items=10, n_reviews=80, seed=1), tmp_path / "all.jsonl")
    code, out, _ = run(capsys, "split", "--reviews", str(tmp_path / "all.jsonl"),
                       "--test-fraction", "0.25", "--seed", "3", "--out-dir", str(tmp_path / "s"))
    assert code == 0 and json.loads(out)["test_users"] == 5
    test_users = {json.loads(line)["user_id"] for line in open(tmp_path / "s" / "test.jsonl")}
    rankings = write_jsonl(tmp_path / "rank.jsonl", [{"user_id": u, "ranking": ["item000", "item001"]}
                                                     for u in sorted(test_users)])
    code, out, _ = run(capsys, "evaluate", "--rankings", str(rankings),
                       "--truth", str(tmp_path / "s" / "test.jsonl"), "--ks", "1,2")
    assert code == 0
    assert json.loads(out)["users_evaluated"] == 5


def test_run(tmp_path, capsys):
    cfg = {"data": {"synthetic": {"n_users": 30, "n_items": 12, "n_reviews": 120, "seed": 2}},
           "rerank": {"enabled": True, "client": {"type": "identity"}},
           "output_dir": "out"}
    (tmp_path / "exp.json").write_text(json.dumps(cfg))
    code, out, _ = run(capsys, "run", "--config", str(tmp_path / "exp.json"))
    assert code == 0
    assert (tmp_path / "out" / "report.json").exists()
    assert json.loads(out)["stage"] == "rerank"


def test_run_stage_failure(tmp_path, capsys):
    (tmp_path / "exp.json").write_text(json.dumps({"data": {"reviews": "nope.jsonl"}}))
    code, _, err = run(capsys, "run", "--config", str(tmp_path / "exp.json"))
    assert code == 1 and err.startswith("error: data:")


def test_unknown_subcommand(capsys):
    code, _, err = run(capsys, "frobnicate")
    assert code == 2 and "usage" in err


def test_unknown_flag(capsys):
    code, _, err = run(capsys, "retrieve", "--bogus")
    assert code == 2 and "usage" in err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "keyrec", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "build-index" in proc.stdout

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest
from hypothesis import given, strategies as st

from keyrec.llm import (AuditLog, HttpClient, IdentityClient, RerankError, RetryPolicy,
                        ReverseClient, ScriptedClient, TransportError, make_client,
                        parse_response, rerank)
from keyrec.prompts import PromptBundle

IDS = ["r1", "r2", "r3"]


def bundle(ids=IDS):
    block = "\n".join(f"{i}: kw" for i in ids)
    return PromptBundle(f"Rank these.\nCandidates:\n<candidates>\n{block}\n</candidates>\n",
                        tuple(ids), "f" * 64)


def no_sleep(_):
    pass


def test_parse_clean_json():
    ranked = parse_response('["r2","r1"]', ["r1", "r2"])
    assert ranked.item_ids == ["r2", "r1"]
    assert ranked.provenance == {"r2": "llm", "r1": "llm"}


def test_parse_drop_dedupe_append():
    ranked = parse_response('["r2","r9","r2"]', IDS)
    assert ranked.item_ids == ["r2", "r1", "r3"]
    assert ranked.provenance == {"r2": "llm", "r1": "repaired", "r3": "repaired"}
    assert ranked.repaired_count == 2


def test_parse_unparseable():
    ranked = parse_response("I cannot help", IDS)
    assert ranked.item_ids == IDS
    assert set(ranked.provenance.values()) == {"repaired"}


@pytest.mark.parametrize("text", [
    "1. r3\n2. r1\n3. r2",
    "r3, r1, r2",
    "Sure! Here is the ranking:\n1) r3 - great view\n2) r1: cheap\n3) r2",
    "```json\n[\"r3\", \"r1\", \"r2\"]\n```",
    "- r3\n- r1\n- r2",
])
def test_parse_formats(text):
    ranked = parse_response(text, IDS)
    assert ranked.item_ids == ["r3", "r1", "r2"]
    assert ranked.repaired_count == 0


def test_parse_empty():
    assert parse_response("", IDS).item_ids == IDS


@given(st.text(max_size=200), st.lists(st.sampled_from(["a", "b", "c", "d", "e"]), unique=True, min_size=1))
def test_parse_always_permutation(text, ids):
    ranked = parse_response(text, ids)
    assert sorted(ranked.item_ids) == sorted(ids)
    assert set(ranked.provenance) == set(ids)


@given(st.lists(st.sampled_from(["a", "b", "c", "x", "y"]), max_size=10))
def test_parse_json_lists_close_over_candidates(answer):
    ids = ["a", "b", "c"]
    ranked = parse_response(json.dumps(answer), ids)
    assert sorted(ranked.item_ids) == ids
    llm_part = [i for i in ranked.item_ids if ranked.provenance[i] == "llm"]
    assert llm_part == list(dict.fromkeys(a for a in answer if a in ids))


def test_identity_mock():
    assert rerank(IdentityClient(), bundle()).item_ids == IDS


def test_reverse_mock():
    assert rerank(ReverseClient(), bundle()).item_ids == IDS[::-1]


def test_retry_then_success():
    client = ScriptedClient([TimeoutError("slow"), TransportError("down"), '["r3"]'])
    sleeps = []
    ranked = rerank(client, bundle(), RetryPolicy(attempts=3, backoff=0.5, sleep=sleeps.append))
    assert ranked.item_ids == ["r3", "r1", "r2"]
    assert sleeps == [0.5, 1.0]
    assert len(client.prompts) == 3


def test_retry_exhausted_carries_fingerprint():
    client = ScriptedClient([TimeoutError()] * 3)
    with pytest.raises(RerankError) as info:
        rerank(client, bundle(), RetryPolicy(attempts=3, sleep=no_sleep))
    assert info.value.fingerprint == "f" * 64


def test_non_transport_errors_are_not_retried():
    client = ScriptedClient([ValueError("bug"), '["r1"]'])
    with pytest.raises(ValueError):
        rerank(client, bundle(), RetryPolicy(sleep=no_sleep))
    assert len(client.prompts) == 1


def test_audit_log(tmp_path):
    audit = AuditLog()
    rerank(ScriptedClient(['["r2", "zz"]']), bundle(), audit=audit)
    audit.write(tmp_path / "audit.jsonl")
    rec = json.loads((tmp_path / "audit.jsonl").read_text())
    assert rec["fingerprint"] == "f" * 64
    assert rec["raw_response"] == '["r2", "zz"]'
    assert rec["parsed"] == ["r2", "r1", "r3"]
    assert rec["repaired_count"] == 2
    assert rec["prompt"].startswith("Rank these.")


def test_make_client():
    assert isinstance(make_client("identity"), IdentityClient)
    assert isinstance(make_client({"type": "reverse"}), ReverseClient)
    with pytest.raises(ValueError):
        make_client({"type": "psychic"})


class _Handler(BaseHTTPRequestHandler):
    calls = []
    fail_first = 0

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        type(self).calls.append((body, self.headers.get("Authorization")))
        if type(self).fail_first > 0:
            type(self).fail_first -= 1
            self.send_response(503)
            self.end_headers()
            return
        ids = [ln.split(": ")[0] for ln in body["prompt"].split("<candidates>\n")[1]
               .split("\n</candidates>")[0].splitlines()]
        out = json.dumps({"text": json.dumps(ids[::-1])}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(out)))
        self.end_headers()
        self.wfile.write(out)

    def log_message(self, *args):
        pass


@pytest.fixture
def server():
    _Handler.calls = []
    _Handler.fail_first = 0
    srv = HTTPServer(("127.0.0.1", 0), _Handler)
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{srv.server_port}/complete"
    srv.shutdown()
    srv.server_close()


def test_http_client_roundtrip(server, monkeypatch):
    monkeypatch.setenv("KEYREC_LLM_API_KEY", "secret")
    client = HttpClient(server, model="m1")
    ranked = rerank(client, bundle())
    assert ranked.item_ids == IDS[::-1]
    body, auth = _Handler.calls[0]
    assert body["model"] == "m1" and "<candidates>" in body["prompt"]
    assert auth == "Bearer secret"


def test_http_client_retries_server_errors(server):
    _Handler.fail_first = 2
    ranked = rerank(HttpClient(server), bundle(), RetryPolicy(attempts=3, sleep=no_sleep))
    assert ranked.item_ids == IDS[::-1]
    assert len(_Handler.calls) == 3


def test_http_client_env_endpoint(server, monkeypatch):
    monkeypatch.setenv("KEYREC_LLM_ENDPOINT", server)
    assert HttpClient().endpoint == server


def test_http_client_unreachable():
    client = HttpClient("http://127.0.0.1:9/none", timeout=1)
    with pytest.raises(RerankError):
        rerank(client, bundle(), RetryPolicy(attempts=2, sleep=no_sleep))


def test_http_client_requires_endpoint(monkeypatch):
    monkeypatch.delenv("KEYREC_LLM_ENDPOINT", raising=False)
    with pytest.raises(ValueError):
        HttpClient()

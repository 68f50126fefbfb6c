import json

import pytest

from keyrec.corpus import Corpus, ReviewRecord

_acceptance_results = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(name): exit criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        _acceptance_results.append((status, marker.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for status, name in _acceptance_results:
        terminalreporter.write_line(f"[{status}] {name}")


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write((row if isinstance(row, str) else json.dumps(row)) + "\n")
    return path


@pytest.fixture
def tiny_corpus():
    """Two items; w1 only on r1, w2 on both."""
    return Corpus((
        ReviewRecord("u1", "r1", 5.0, "", ("w1", "w2")),
        ReviewRecord("u2", "r1", 4.0, "", ("w1",)),
        ReviewRecord("u2", "r2", 3.0, "", ("w2",)),
    ))

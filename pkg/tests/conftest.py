from __future__ import annotations

import time
from pathlib import Path

import pytest

from crosslog import pipeline
from crosslog.config import RunConfig, default_document

FIXTURES = Path(__file__).parent / "fixtures"

# criterion id -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def record(criterion: str, passed: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE, key=lambda c: int(c[1:])):
        passed, detail = ACCEPTANCE[cid]
        terminalreporter.write_line(f"{cid} {'PASS' if passed else 'FAIL'}  {detail}")


def run_default(tmp: Path, **train_overrides):
    """Full synth -> parse -> sessionize -> embed -> train -> eval run with the default config."""
    doc = default_document(seed=0)
    doc["train"].update(train_overrides)
    cfg = RunConfig.from_document(doc, tmp)
    run = cfg.run_dir(tmp / "runs")
    start = time.perf_counter()
    m = pipeline.run_all(cfg, run)
    return m, run, time.perf_counter() - start


@pytest.fixture(scope="session")
def default_run(tmp_path_factory):
    return run_default(tmp_path_factory.mktemp("default"))


@pytest.fixture(scope="session")
def small_corpus():
    """A small two-system corpus parsed into one table, with a labeled target test split."""
    from crosslog.drain import TemplateTable
    from crosslog.embedding import build_embedding_table
    from crosslog.sessions import Domain, DomainPool, attach_labels, sessionize_by_key, split_sessions
    from crosslog.synth import KEY_PATTERN, builtin_profiles, generate_system

    alpha, beta = builtin_profiles()
    a = generate_system(alpha, 200, 0.1, 11)
    b = generate_system(beta, 200, 0.1, 12)
    table = TemplateTable()
    ia, ib = table.parse_lines(a.lines), table.parse_lines(b.lines)
    src = attach_labels(sessionize_by_key(zip(ia, a.lines), KEY_PATTERN, Domain.SOURCE), a.labels)
    tgt = sessionize_by_key(zip(ib, b.lines), KEY_PATTERN, Domain.TARGET)
    tgt_train, tgt_test = split_sessions(tgt, 0.5, 3)
    emb = build_embedding_table({i: t.tokens for i, t in table.templates.items()})
    return DomainPool(src, tgt_train), attach_labels(tgt_test, b.labels), emb

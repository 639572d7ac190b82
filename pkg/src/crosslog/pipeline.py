"""Pipeline stages. Each reads and writes files only, so stages compose across processes."""

from __future__ import annotations

import logging
from dataclasses import replace
from pathlib import Path

from .config import RunConfig
from .drain import TemplateTable, read_log, read_parsed, write_parsed
from .embedding import build_embedding_table, load_word_vectors, EventEmbeddingTable
from .errors import MissingInput
from .evaluation import Metrics, metrics, predict, write_report
from .meta import train, write_metrics_log
from .model import load_checkpoint, save_checkpoint
from .sessions import (
    Domain,
    DomainPool,
    attach_labels,
    read_labels,
    read_sessions,
    sessionize_by_key,
    sessionize_fixed_window,
    split_sessions,
    write_sessions,
)
from .synth import builtin_profiles, generate_system

log = logging.getLogger(__name__)

# file names inside a run directory
SOURCE_LOG, TARGET_LOG = "source.log", "target.log"
SOURCE_LABELS, TARGET_LABELS = "source.labels", "target.labels"
TEMPLATES = "templates.tsv"
SOURCE_PARSED, TARGET_PARSED = "source.parsed", "target.parsed"
SOURCE_SESSIONS = "source.sessions"
TARGET_TRAIN_SESSIONS, TARGET_TEST_SESSIONS = "target_train.sessions", "target_test.sessions"
EMBEDDINGS = "embeddings.tsv"
CHECKPOINT, METRICS_LOG = "checkpoint.json", "metrics.log"
REPORT = "report.tsv"


def _need(path: Path) -> Path:
    if not path.is_file():
        raise MissingInput(path)
    return path


def _input(cfg: RunConfig, run: Path, key: str, default: str) -> Path:
    """A configured data path if given, else the synth output inside the run directory."""
    explicit = cfg.resolve(cfg.doc["data"][key])
    return _need(explicit if explicit is not None else run / default)


def stage_synth(cfg: RunConfig, run: Path) -> dict[str, Path]:
    s = cfg.doc["synth"]
    alpha, beta = builtin_profiles()
    run.mkdir(parents=True, exist_ok=True)
    paths = {}
    for stem, profile, seed in (("source", alpha, s["source_seed"]), ("target", beta, s["target_seed"])):
        out = generate_system(profile, s["n_sessions"], float(s["anomaly_rate"]), seed)
        paths.update({f"{stem}_{k}": v for k, v in out.write(run, stem).items()})
    return paths


def stage_parse(cfg: RunConfig, run: Path) -> TemplateTable:
    """Both systems go through one template table so their ids share a namespace."""
    src = _input(cfg, run, "source_log", SOURCE_LOG)
    tgt = _input(cfg, run, "target_log", TARGET_LOG)
    table = TemplateTable(cfg.drain_config())
    write_parsed(run / SOURCE_PARSED, table.parse_lines(read_log(src)))
    write_parsed(run / TARGET_PARSED, table.parse_lines(read_log(tgt)))
    table.save(run / TEMPLATES)
    log.info("parsed %s and %s into %d templates", src, tgt, len(table))
    return table


def _sessionize(cfg: RunConfig, log_path: Path, parsed_path: Path, domain: Domain):
    ids = read_parsed(_need(parsed_path))
    s = cfg.doc["sessionize"]
    if s["window"] is not None:
        return sessionize_fixed_window(ids, s["window"], s["stride"] or s["window"], domain)
    lines = list(read_log(log_path))
    if len(lines) != len(ids):
        raise ValueError(f"{parsed_path} has {len(ids)} records but {log_path} has {len(lines)} lines")
    return sessionize_by_key(zip(ids, lines), s["key_pattern"], domain)


def stage_sessionize(cfg: RunConfig, run: Path) -> dict[str, int]:
    src = _sessionize(cfg, _input(cfg, run, "source_log", SOURCE_LOG), run / SOURCE_PARSED, Domain.SOURCE)
    tgt = _sessionize(cfg, _input(cfg, run, "target_log", TARGET_LOG), run / TARGET_PARSED, Domain.TARGET)
    s = cfg.doc["sessionize"]
    tgt_train, tgt_test = split_sessions(tgt, float(s["target_train_fraction"]), s["split_seed"])
    write_sessions(run / SOURCE_SESSIONS, src)
    write_sessions(run / TARGET_TRAIN_SESSIONS, tgt_train)
    write_sessions(run / TARGET_TEST_SESSIONS, tgt_test)
    return {"source": len(src), "target_train": len(tgt_train), "target_test": len(tgt_test)}


def stage_embed(cfg: RunConfig, run: Path) -> EventEmbeddingTable:
    table = TemplateTable.load(_need(run / TEMPLATES), cfg.drain_config())
    wv_path = cfg.resolve(cfg.doc["embed"]["word_vectors"])
    wv = load_word_vectors(_need(wv_path)) if wv_path is not None else None
    emb = build_embedding_table({i: t.tokens for i, t in table.templates.items()}, wv, cfg.doc["embed"]["dim"])
    emb.save(run / EMBEDDINGS)
    return emb


def stage_train(cfg: RunConfig, run: Path):
    emb = EventEmbeddingTable.load(_need(run / EMBEDDINGS))
    labels = read_labels(_input(cfg, run, "source_labels", SOURCE_LABELS))
    source = attach_labels(read_sessions(_need(run / SOURCE_SESSIONS), Domain.SOURCE), labels)
    # target training sessions never see a label
    target = read_sessions(_need(run / TARGET_TRAIN_SESSIONS), Domain.TARGET)
    tcfg = cfg.train_config()
    # the embedding file decides D (it may come from a word-vector file)
    tcfg = replace(tcfg, dims=replace(tcfg.dims, embed=emb.dim))
    params, history = train(DomainPool(source, target), emb, tcfg)
    save_checkpoint(run / CHECKPOINT, params, tcfg.hp, {"seed": tcfg.seed, "epochs": tcfg.epochs})
    write_metrics_log(run / METRICS_LOG, history)
    return params, history


def stage_eval(cfg: RunConfig, run: Path) -> Metrics:
    params, _, _ = load_checkpoint(_need(run / CHECKPOINT))
    emb = EventEmbeddingTable.load(_need(run / EMBEDDINGS))
    labels = read_labels(_input(cfg, run, "target_labels", TARGET_LABELS))
    test = attach_labels(read_sessions(_need(run / TARGET_TEST_SESSIONS), Domain.TARGET), labels)
    pred = predict(test, emb, params)
    m = metrics([int(p) for p in pred], [int(s.label) for s in test])
    write_report(run / REPORT, m)
    return m


STAGES = {
    "synth": stage_synth,
    "parse": stage_parse,
    "sessionize": stage_sessionize,
    "embed": stage_embed,
    "train": stage_train,
    "eval": stage_eval,
}


def run_all(cfg: RunConfig, run: Path, synth: bool = True) -> Metrics:
    order = ["synth", "parse", "sessionize", "embed", "train"] if synth else ["parse", "sessionize", "embed", "train"]
    for name in order:
        STAGES[name](cfg, run)
    return stage_eval(cfg, run)

"""Session-level scoring and precision / recall / F1 with anomalous as positive."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .embedding import EventEmbeddingTable
from .errors import EmptyInput, LengthMismatch
from .model import ModelParams, predict_rows, session_matrix
from .sessions import Label, Session


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float
    counts: ConfusionCounts
    # True when any ratio hit a zero denominator and was reported as 0
    degenerate: bool = False

    def report_line(self) -> str:
        c = self.counts
        return f"{self.precision:.4f}\t{self.recall:.4f}\t{self.f1:.4f}\t{c.tp}\t{c.fp}\t{c.tn}\t{c.fn}"


def confusion(pred: Sequence[int], gold: Sequence[int]) -> ConfusionCounts:
    p = np.asarray(pred, dtype=int)
    g = np.asarray(gold, dtype=int)
    if p.shape != g.shape:
        raise LengthMismatch(f"{p.size} predictions vs {g.size} gold labels")
    if p.size == 0:
        raise EmptyInput("no labels to score")
    return ConfusionCounts(
        tp=int(np.sum((p == 1) & (g == 1))),
        fp=int(np.sum((p == 1) & (g == 0))),
        tn=int(np.sum((p == 0) & (g == 0))),
        fn=int(np.sum((p == 0) & (g == 1))),
    )


def metrics(pred: Sequence[int], gold: Sequence[int]) -> Metrics:
    c = confusion(pred, gold)
    degenerate = False
    if c.tp + c.fp:
        precision = c.tp / (c.tp + c.fp)
    else:
        precision, degenerate = 0.0, True
    if c.tp + c.fn:
        recall = c.tp / (c.tp + c.fn)
    else:
        recall, degenerate = 0.0, True
    if precision + recall:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1, degenerate = 0.0, True
    return Metrics(precision, recall, f1, c, degenerate)


def predict(sessions: Sequence[Session], emb: EventEmbeddingTable, params: ModelParams) -> list[Label]:
    """Argmax of the anomaly head per session; ties go to Normal."""
    return [Label(int(v)) for v in predict_rows(session_matrix(sessions, emb), params)]


def write_report(path, m: Metrics) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(m.report_line() + "\n")

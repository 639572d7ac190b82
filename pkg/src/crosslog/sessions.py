"""Grouping parsed events into sessions, plus session/label file I/O."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InvalidPattern, InvalidWindow

log = logging.getLogger(__name__)


class Domain(IntEnum):
    SOURCE = 0
    TARGET = 1


class Label(IntEnum):
    NORMAL = 0
    ANOMALOUS = 1


@dataclass
class Session:
    events: list[int]
    domain: Domain = Domain.SOURCE
    label: Label | None = None
    key: str = ""

    def __post_init__(self):
        if not self.events:
            raise ValueError(f"session {self.key!r} has no events")
        self.domain = Domain(self.domain)
        if self.label is not None:
            self.label = Label(self.label)


@dataclass
class DomainPool:
    """Labeled source sessions and unlabeled target sessions used for training."""

    source_sessions: list[Session]
    target_sessions: list[Session]

    def __post_init__(self):
        for s in self.source_sessions:
            if s.domain != Domain.SOURCE or s.label is None:
                raise ValueError(f"source session {s.key!r} must be labeled and tagged SOURCE")
        for s in self.target_sessions:
            if s.domain != Domain.TARGET:
                raise ValueError(f"target session {s.key!r} is not tagged TARGET")
            if s.label is not None:
                raise ValueError(f"target training session {s.key!r} carries a label")


def _compile_key_pattern(key_pattern) -> re.Pattern:
    try:
        pattern = re.compile(key_pattern)
    except (re.error, TypeError) as exc:
        raise InvalidPattern(f"cannot compile key pattern {key_pattern!r}: {exc}") from exc
    if pattern.groups != 1:
        raise InvalidPattern(f"key pattern must have exactly one capture group, has {pattern.groups}")
    return pattern


def sessionize_by_key(
    records: Iterable[tuple[int, str]],
    key_pattern,
    domain: Domain = Domain.SOURCE,
) -> list[Session]:
    """One session per distinct key captured from the raw line, in first-seen order.

    Records whose line has no key are dropped; the number dropped is logged.
    """
    pattern = _compile_key_pattern(key_pattern)
    groups: dict[str, list[int]] = {}
    dropped = 0
    for tid, line in records:
        m = pattern.search(line)
        if m is None:
            dropped += 1
            continue
        groups.setdefault(m.group(1), []).append(tid)
    if dropped:
        log.warning("dropped %d records with no session key", dropped)
    return [Session(events, domain, None, key) for key, events in groups.items()]


def sessionize_fixed_window(
    records: Sequence[int],
    window: int,
    stride: int,
    domain: Domain = Domain.SOURCE,
) -> list[Session]:
    if window < 1 or stride < 1:
        raise InvalidWindow(f"window and stride must be >= 1, got window={window}, stride={stride}")
    records = list(records)
    return [
        Session(records[i : i + window], domain, None, str(n))
        for n, i in enumerate(range(0, len(records), stride))
    ]


def attach_labels(sessions: Iterable[Session], labels: Mapping[str, int]) -> list[Session]:
    """Copies of ``sessions`` with labels looked up by key (KeyError if absent)."""
    return [Session(list(s.events), s.domain, Label(labels[s.key]), s.key) for s in sessions]


def strip_labels(sessions: Iterable[Session]) -> list[Session]:
    return [Session(list(s.events), s.domain, None, s.key) for s in sessions]


def split_sessions(sessions: Sequence[Session], fraction: float, seed: int) -> tuple[list[Session], list[Session]]:
    """Seeded random split; the first part holds round(fraction * n) sessions."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"split fraction must lie in [0, 1], got {fraction}")
    order = np.random.default_rng(seed).permutation(len(sessions))
    cut = int(round(fraction * len(sessions)))
    first = sorted(order[:cut].tolist())
    second = sorted(order[cut:].tolist())
    return [sessions[i] for i in first], [sessions[i] for i in second]


def write_sessions(path, sessions: Iterable[Session]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in sessions:
            fh.write(f"{s.key}\t{','.join(map(str, s.events))}\n")


def read_sessions(path, domain: Domain = Domain.SOURCE) -> list[Session]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            if not raw.strip():
                continue
            try:
                key, ids = raw.rstrip("\n").split("\t")
                out.append(Session([int(x) for x in ids.split(",")], domain, None, key))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed session line") from exc
    return out


def write_labels(path, labels: Mapping[str, int]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key, lab in labels.items():
            fh.write(f"{key}\t{int(lab)}\n")


def read_labels(path) -> dict[str, int]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            if not raw.strip():
                continue
            key, _, value = raw.rstrip("\n").partition("\t")
            if value not in ("0", "1"):
                raise ValueError(f"{path}:{lineno}: label must be 0 or 1, got {value!r}")
            out[key] = int(value)
    return out

"""Seeded two-system synthetic log generator with a controlled domain shift.

Each built-in system has its own surface vocabulary. Anomalies in both
systems are expressed with the same small pool of shared semantic words
(``error``, ``timeout``, ...), wrapped in the system's own vocabulary, so a
detector can transfer only if it keys on those shared words.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embedding import tokenize_template
from .errors import InvalidRate

KEY_PATTERN = r"sid=(\S+)"

SHARED_SEMANTIC_WORDS = (
    "error", "failed", "exception", "timeout", "corrupt",
    "fatal", "refused", "denied", "abort", "unreachable",
)

_SLOT = re.compile(r"\{(\w+)\}")


@dataclass(frozen=True)
class SystemProfile:
    """Surface vocabulary, line templates, and session grammar of one system.

    ``normal_templates`` / ``anomaly_templates`` are line formats whose
    ``{slot}`` fields are filled with variable (digit-bearing) values.
    ``normal_patterns`` are workflows of normal-template indices; each entry of
    ``anomaly_patterns`` is a short sequence of anomaly-template indices that an
    anomalous session carries.
    """

    name: str
    key_prefix: str
    vocab_theme: frozenset[str]
    shared_semantic_words: frozenset[str]
    normal_templates: tuple[str, ...]
    anomaly_templates: tuple[str, ...]
    normal_patterns: tuple[tuple[int, ...], ...]
    anomaly_patterns: tuple[tuple[int, ...], ...]
    session_len_range: tuple[int, int] = (5, 20)
    noise_rate: float = 0.05

    def template_words(self, fmt: str) -> list[str]:
        return tokenize_template(_SLOT.sub(" ", fmt).split())

    def surface_words(self) -> set[str]:
        words: set[str] = set()
        for fmt in self.normal_templates + self.anomaly_templates:
            words.update(self.template_words(fmt))
        return words


# Anomalous sessions carry a burst of 3-5 anomaly lines; both systems share the shape.
_ANOMALY_BURSTS = (
    (0, 1, 2), (1, 2, 3, 0), (2, 3, 0, 1, 2), (3, 0, 1),
    (0, 0, 2, 2), (1, 3, 1, 3, 0), (2, 1, 0), (3, 3, 2, 1),
)


def _vocab(templates: tuple[str, ...]) -> frozenset[str]:
    words = {w for fmt in templates for w in tokenize_template(_SLOT.sub(" ", fmt).split())}
    return frozenset(words - set(SHARED_SEMANTIC_WORDS))


# Each system keeps a small surface vocabulary (about a dozen words). With D=50
# hashed word directions this leaves room in the embedding space for a
# subspace that carries the shared words and is orthogonal to both systems'
# normal templates, which is what makes zero-label transfer possible at all.
def _alpha() -> SystemProfile:
    normal = (
        "Receiving block {blk} src {ip}",
        "PacketResponder {num} terminating block {blk}",
        "Verification succeeded {blk}",
        "NameSystem allocateBlock {path} {blk}",
        "Served block {blk} dest {ip}",
        "Deleting block {blk} file {path}",
    )
    anomaly = (
        "Receiving {blk} failed timeout error",
        "PacketResponder {num} exception abort refused",
        "block {blk} corrupt fatal error",
        "Served {blk} unreachable timeout denied",
    )
    return SystemProfile(
        name="alpha",
        key_prefix="blk",
        vocab_theme=_vocab(normal + anomaly),
        shared_semantic_words=frozenset(SHARED_SEMANTIC_WORDS),
        normal_templates=normal,
        anomaly_templates=anomaly,
        normal_patterns=((3, 0, 1, 4, 2), (3, 0, 0, 1, 1, 2, 5), (4, 4, 2, 5), (3, 0, 1, 2, 4, 5)),
        anomaly_patterns=_ANOMALY_BURSTS,
    )


def _beta() -> SystemProfile:
    normal = (
        "ciod generated {num} core files",
        "kernel scheduler dispatched job {num}",
        "torus receiver link {num} initialized",
        "ddr memory scrub completed {node}",
        "idoproxy session opened {node}",
        "jobctl allocated partition {node}",
    )
    anomaly = (
        "kernel {num} abort fatal error",
        "torus {num} unreachable timeout failed",
        "ddr {node} corrupt error exception",
        "idoproxy {node} refused denied exception",
    )
    return SystemProfile(
        name="beta",
        key_prefix="job",
        vocab_theme=_vocab(normal + anomaly),
        shared_semantic_words=frozenset(SHARED_SEMANTIC_WORDS),
        normal_templates=normal,
        anomaly_templates=anomaly,
        normal_patterns=((5, 1, 4, 2, 3, 0), (5, 1, 1, 2, 2, 3), (4, 3, 0, 0), (5, 1, 4, 4, 2, 3, 3)),
        anomaly_patterns=_ANOMALY_BURSTS,
    )


def builtin_profiles() -> tuple[SystemProfile, SystemProfile]:
    """(alpha, beta): alpha plays the labeled source, beta the unlabeled target."""
    return _alpha(), _beta()


def _fill(fmt: str, rng: np.random.Generator) -> str:
    def value(m: re.Match) -> str:
        kind = m.group(1)
        if kind == "blk":
            return f"blk_{rng.integers(-2**62, 2**62)}"
        if kind == "ip":
            a, b, c = rng.integers(0, 256, size=3)
            return f"10.{a}.{b}.{c}:{rng.integers(1024, 65536)}"
        if kind == "path":
            return f"/user/root/part-{rng.integers(0, 100000):05d}"
        if kind == "node":
            return f"R{rng.integers(0, 64):02d}-M{rng.integers(0, 2)}-N{rng.integers(0, 16)}"
        return str(rng.integers(0, 100000))

    return _SLOT.sub(value, fmt)


@dataclass
class SynthOutput:
    lines: list[str]
    keys: list[str]
    labels: dict[str, int]
    # template-index sequence per session: normal indices >= 0, anomaly indices as -(i + 1)
    sessions: dict[str, list[int]]

    def write(self, out_dir, stem: str) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "log": out / f"{stem}.log",
            "keys": out / f"{stem}.keys",
            "labels": out / f"{stem}.labels",
        }
        paths["log"].write_text("".join(line + "\n" for line in self.lines), encoding="utf-8")
        paths["keys"].write_text("".join(k + "\n" for k in self.keys), encoding="utf-8")
        paths["labels"].write_text("".join(f"{k}\t{self.labels[k]}\n" for k in self.keys), encoding="utf-8")
        return paths


def _session_events(profile: SystemProfile, anomalous: bool, rng: np.random.Generator) -> list[int]:
    lo, hi = profile.session_len_range
    length = int(rng.integers(lo, hi + 1))
    pattern = profile.normal_patterns[rng.integers(len(profile.normal_patterns))]
    offset = int(rng.integers(len(pattern)))
    events = [pattern[(offset + i) % len(pattern)] for i in range(length)]
    n_normal = len(profile.normal_templates)
    for i in range(length):
        if rng.random() < profile.noise_rate:
            events[i] = int(rng.integers(n_normal))
    if anomalous:
        inject = profile.anomaly_patterns[rng.integers(len(profile.anomaly_patterns))]
        for a in inject:
            pos = int(rng.integers(len(events) + 1))
            if rng.random() < 0.5 and len(events) > lo:
                # substitution: the anomaly line replaces a normal one
                pos = min(pos, len(events) - 1)
                events[pos] = -(a + 1)
            else:
                events.insert(pos, -(a + 1))
    return events


def generate_system(profile: SystemProfile, n_sessions: int, anomaly_rate: float, seed: int) -> SynthOutput:
    """Generate ``n_sessions`` sessions of ``profile`` with exactly round(rate * n) anomalies.

    Lines of different sessions are interleaved; order within a session is kept.
    """
    if not 0.0 <= anomaly_rate <= 1.0:
        raise InvalidRate(f"anomaly_rate must lie in [0, 1], got {anomaly_rate}")
    if n_sessions < 1:
        raise ValueError(f"n_sessions must be >= 1, got {n_sessions}")
    rng = np.random.default_rng(seed)
    n_anom = int(round(anomaly_rate * n_sessions))
    is_anom = np.zeros(n_sessions, dtype=bool)
    is_anom[rng.choice(n_sessions, size=n_anom, replace=False)] = True

    keys = [f"{profile.key_prefix}_{i:06d}" for i in range(n_sessions)]
    sessions = {k: _session_events(profile, bool(a), rng) for k, a in zip(keys, is_anom)}
    labels = {k: int(a) for k, a in zip(keys, is_anom)}

    # up to 8 sessions are open at once; each emitted line comes from a random open one
    lines = []
    pending = iter(range(n_sessions))
    active: list[list[int]] = []  # [session index, cursor]
    for _ in range(8):
        nxt = next(pending, None)
        if nxt is not None:
            active.append([nxt, 0])
    while active:
        slot = int(rng.integers(len(active)))
        s, pos = active[slot]
        k = keys[s]
        idx = sessions[k][pos]
        fmt = profile.normal_templates[idx] if idx >= 0 else profile.anomaly_templates[-idx - 1]
        lines.append(f"{_fill(fmt, rng)} sid={k}")
        if pos + 1 < len(sessions[k]):
            active[slot][1] = pos + 1
        else:
            nxt = next(pending, None)
            if nxt is None:
                active.pop(slot)
            else:
                active[slot] = [nxt, 0]
    return SynthOutput(lines, keys, labels, sessions)

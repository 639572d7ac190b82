"""Fixed-depth Drain parse tree for online log template mining.

Lines are masked and tokenized, routed by token count and then by their
leading tokens, and finally matched against the templates stored at the leaf
by positional similarity.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .errors import EmptyLine, LengthMismatch

WILDCARD = "<*>"
_DIGIT = re.compile(r"\d")


@dataclass(frozen=True)
class DrainConfig:
    depth: int = 4
    sim_threshold: float = 0.4
    max_children: int = 100
    preprocess_rules: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if self.depth < 3:
            raise ValueError(f"depth must be >= 3, got {self.depth}")
        if not 0.0 < self.sim_threshold < 1.0:
            raise ValueError(f"sim_threshold must lie in (0, 1), got {self.sim_threshold}")
        if self.max_children < 1:
            raise ValueError(f"max_children must be >= 1, got {self.max_children}")
        rules = tuple((str(p), str(r)) for p, r in self.preprocess_rules)
        for pattern, _ in rules:
            re.compile(pattern)
        object.__setattr__(self, "preprocess_rules", rules)


@dataclass
class Template:
    id: int
    tokens: list[str]
    count: int = 1

    def render(self) -> str:
        return " ".join(self.tokens)


@dataclass
class _Node:
    children: dict[str, "_Node"] = field(default_factory=dict)
    templates: list[int] = field(default_factory=list)


def preprocess(line: str, rules=()) -> list[str]:
    """Apply masking rules, split on whitespace, and mask digit-bearing tokens."""
    if not line or not line.strip():
        raise EmptyLine("cannot parse an empty line")
    for pattern, repl in rules:
        line = re.sub(pattern, repl, line)
    tokens = [WILDCARD if _DIGIT.search(tok) else tok for tok in line.split()]
    if not tokens:
        raise EmptyLine("line is empty after preprocessing")
    return tokens


def similarity(tokens: list[str], template_tokens: list[str]) -> float:
    if len(tokens) != len(template_tokens):
        raise LengthMismatch(f"cannot compare {len(tokens)} tokens with {len(template_tokens)}")
    if not tokens:
        return 0.0
    same = sum(1 for a, b in zip(tokens, template_tokens) if a == b and a != WILDCARD)
    return same / len(tokens)


def merge_template(existing: list[str], incoming: list[str]) -> list[str]:
    if len(existing) != len(incoming):
        raise LengthMismatch(f"cannot merge {len(existing)} tokens with {len(incoming)}")
    return [a if a == b else WILDCARD for a, b in zip(existing, incoming)]


def _covers(template_tokens: list[str], tokens: list[str]) -> bool:
    return all(t == WILDCARD or t == tok for t, tok in zip(template_tokens, tokens))


class TemplateTable:
    """Templates discovered so far plus the parse tree that indexes them.

    Not safe for concurrent mutation. After :meth:`freeze`, only :meth:`match`
    is allowed, which never mutates and may be shared between threads.
    """

    def __init__(self, config: DrainConfig | None = None):
        self.config = config or DrainConfig()
        self.templates: dict[int, Template] = {}
        self.root = _Node()
        self.frozen = False

    def __len__(self) -> int:
        return len(self.templates)

    def freeze(self) -> "TemplateTable":
        self.frozen = True
        return self

    def _route(self, tokens: list[str], create: bool) -> _Node | None:
        node = self.root.children.get(str(len(tokens)))
        if node is None:
            if not create:
                return None
            node = self.root.children[str(len(tokens))] = _Node()
        max_children = self.config.max_children
        for tok in tokens[: self.config.depth - 2]:
            nxt = node.children.get(tok)
            if nxt is None:
                concrete = sum(1 for k in node.children if k != WILDCARD)
                key = tok if tok != WILDCARD and concrete < max_children else WILDCARD
                nxt = node.children.get(key)
                if nxt is None:
                    if not create:
                        return None
                    nxt = node.children[key] = _Node()
            node = nxt
        return node

    def _best(self, leaf: _Node, tokens: list[str], candidates=None):
        best_id, best_sim = None, -1.0
        for tid in sorted(leaf.templates if candidates is None else candidates):
            sim = similarity(tokens, self.templates[tid].tokens)
            if sim > best_sim:
                best_id, best_sim = tid, sim
        return best_id, best_sim

    def match(self, line: str) -> int | None:
        """Template id that would absorb ``line`` without creating anything, else None."""
        tokens = preprocess(line, self.config.preprocess_rules)
        leaf = self._route(tokens, create=False)
        if leaf is None or not leaf.templates:
            return None
        tid, sim = self._best(leaf, tokens)
        if sim >= self.config.sim_threshold:
            return tid
        covering = [t for t in leaf.templates if _covers(self.templates[t].tokens, tokens)]
        if covering:
            return self._best(leaf, tokens, covering)[0]
        return None

    def parse(self, line: str) -> int:
        if self.frozen:
            raise RuntimeError("template table is frozen")
        tokens = preprocess(line, self.config.preprocess_rules)
        leaf = self._route(tokens, create=True)
        tid = None
        if leaf.templates:
            best, sim = self._best(leaf, tokens)
            covering = [t for t in leaf.templates if _covers(self.templates[t].tokens, tokens)]
            if sim >= self.config.sim_threshold:
                tid = best
            elif covering:
                tid = self._best(leaf, tokens, covering)[0]
            elif len(leaf.templates) >= self.config.max_children:
                tid = best
        if tid is None:
            tid = len(self.templates)
            self.templates[tid] = Template(tid, tokens, 1)
            leaf.templates.append(tid)
            return tid
        tpl = self.templates[tid]
        tpl.tokens = merge_template(tpl.tokens, tokens)
        tpl.count += 1
        return tid

    def parse_lines(self, lines: Iterable[str]) -> list[int]:
        return [self.parse(line) for line in lines]

    def dump(self) -> str:
        return "".join(f"{t.id}\t{t.count}\t{t.render()}\n" for t in self.templates.values())

    def save(self, path) -> None:
        Path(path).write_text(self.dump(), encoding="utf-8")

    @classmethod
    def load(cls, path, config: DrainConfig | None = None) -> "TemplateTable":
        """Rebuild a table (templates and tree) from a dump written by :meth:`save`."""
        table = cls(config)
        for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not raw.strip():
                continue
            try:
                tid_s, count_s, text = raw.split("\t", 2)
                tpl = Template(int(tid_s), text.split(" "), int(count_s))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed template line") from exc
            table.templates[tpl.id] = tpl
            table._route(tpl.tokens, create=True).templates.append(tpl.id)
        return table


def parse_line(line: str, table: TemplateTable, cfg: DrainConfig | None = None) -> tuple[int, TemplateTable]:
    if cfg is not None and cfg != table.config:
        raise ValueError("table was built with a different DrainConfig")
    return table.parse(line), table


def read_log(path) -> Iterator[str]:
    """Yield non-empty lines of a UTF-8 log file (trailing newline stripped)."""
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if line.strip():
                yield line


def write_parsed(path, ids: Iterable[int]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for n, tid in enumerate(ids, 1):
            fh.write(f"{n}\t{tid}\n")


def read_parsed(path) -> list[int]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            if raw.strip():
                out.append(int(raw.split("\t")[1]))
    return out

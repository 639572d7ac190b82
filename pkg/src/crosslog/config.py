"""JSON run configuration: one section per pipeline stage, unknown keys rejected."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .drain import DrainConfig
from .errors import ConfigInvalid, MissingInput
from .meta import TrainConfig
from .model import Dims, HyperParams
from .synth import KEY_PATTERN

_REQUIRED = object()

# section -> key -> (accepted types, default); _REQUIRED marks mandatory keys
SCHEMA: dict[str, dict[str, tuple[tuple[type, ...], Any]]] = {
    "synth": {
        "n_sessions": ((int,), 2000),
        "anomaly_rate": ((int, float), 0.1),
        "source_seed": ((int,), 1),
        "target_seed": ((int,), 1001),
    },
    "data": {
        # None means "use the synth stage output in the run directory"
        "source_log": ((str, type(None)), None),
        "target_log": ((str, type(None)), None),
        "source_labels": ((str, type(None)), None),
        "target_labels": ((str, type(None)), None),
    },
    "drain": {
        "depth": ((int,), 4),
        "sim_threshold": ((int, float), 0.4),
        "max_children": ((int,), 100),
        "preprocess_rules": ((list,), []),
    },
    "sessionize": {
        "key_pattern": ((str, type(None)), KEY_PATTERN),
        "window": ((int, type(None)), None),
        "stride": ((int, type(None)), None),
        "target_train_fraction": ((int, float), 0.5),
        "split_seed": ((int,), 7),
    },
    "embed": {
        "dim": ((int,), 50),
        "word_vectors": ((str, type(None)), None),
    },
    "train": {
        "seed": ((int,), _REQUIRED),
        "delta": ((int, float), _REQUIRED),
        "alpha": ((int, float), _REQUIRED),
        "beta": ((int, float), _REQUIRED),
        "gamma": ((int, float), _REQUIRED),
        "inner_steps": ((int,), 1),
        "grl_lambda": ((int, float, str), "dann"),
        "hidden": ((int,), 64),
        "feature": ((int,), 32),
        "domain_hidden": ((int,), 32),
        "tasks_per_batch": ((int,), 4),
        "task_source_size": ((int,), 8),
        "task_target_size": ((int,), 8),
        "epochs": ((int,), 30),
        "optimizer": ((str,), "adam"),
        "batches_per_epoch": ((int, type(None)), None),
        "meta": ((bool,), True),
    },
}


def default_document(seed: int = 0) -> dict:
    """A complete config document with every default filled in."""
    doc = {
        section: {k: (None if d is _REQUIRED else copy.deepcopy(d)) for k, (_, d) in keys.items()}
        for section, keys in SCHEMA.items()
    }
    doc["train"].update(seed=seed, delta=0.05, alpha=1e-3, beta=1.0, gamma=1.0)
    return doc


def _check_type(key: str, value, types: tuple[type, ...]) -> None:
    # bool is an int subclass; only accept it where bool is listed
    if isinstance(value, bool) and bool not in types:
        raise ConfigInvalid(key, f"expected {'/'.join(t.__name__ for t in types)}, got bool")
    if not isinstance(value, types):
        raise ConfigInvalid(key, f"expected {'/'.join(t.__name__ for t in types)}, got {type(value).__name__}")


def normalize(doc: dict) -> dict:
    """Fill defaults, reject unknown sections/keys and missing mandatory keys."""
    if not isinstance(doc, dict):
        raise ConfigInvalid("<root>", "config must be a JSON object")
    for section in doc:
        if section not in SCHEMA:
            raise ConfigInvalid(section, "unknown section")
    out = {}
    for section, keys in SCHEMA.items():
        given = doc.get(section, {})
        if not isinstance(given, dict):
            raise ConfigInvalid(section, "section must be a JSON object")
        for k in given:
            if k not in keys:
                raise ConfigInvalid(f"{section}.{k}", "unknown key")
        resolved = {}
        for k, (types, default) in keys.items():
            path = f"{section}.{k}"
            if k in given:
                _check_type(path, given[k], types)
                resolved[k] = given[k]
            elif default is _REQUIRED:
                raise ConfigInvalid(path, "missing required key")
            else:
                resolved[k] = copy.deepcopy(default)
        out[section] = resolved
    return out


@dataclass
class RunConfig:
    doc: dict
    base_dir: Path

    @classmethod
    def load(cls, path, seed: int | None = None) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise MissingInput(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigInvalid("<root>", f"not valid JSON: {exc}") from exc
        return cls.from_document(raw, path.parent, seed)

    @classmethod
    def from_document(cls, raw: dict, base_dir=".", seed: int | None = None) -> "RunConfig":
        doc = normalize(raw)
        if seed is not None:
            doc["train"]["seed"] = seed
        cfg = cls(doc, Path(base_dir))
        # build every typed config once so bad values fail before any stage runs
        cfg.drain_config()
        cfg.train_config()
        cfg.validate_paths()
        return cfg

    def digest(self) -> str:
        canon = json.dumps(self.doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]

    def run_dir(self, out) -> Path:
        return Path(out) / f"run-{self.digest()}"

    def resolve(self, value: str | None) -> Path | None:
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    def validate_paths(self) -> None:
        for key in ("source_log", "target_log", "source_labels", "target_labels"):
            p = self.resolve(self.doc["data"][key])
            if p is not None and not p.is_file():
                raise MissingInput(p)
        wv = self.resolve(self.doc["embed"]["word_vectors"])
        if wv is not None and not wv.is_file():
            raise MissingInput(wv)

    def drain_config(self) -> DrainConfig:
        d = self.doc["drain"]
        try:
            rules = tuple(tuple(r) for r in d["preprocess_rules"])
            if any(len(r) != 2 for r in rules):
                raise ValueError("each rule is a [pattern, replacement] pair")
            return DrainConfig(d["depth"], float(d["sim_threshold"]), d["max_children"], rules)
        except Exception as exc:
            raise ConfigInvalid("drain", str(exc)) from exc

    def train_config(self) -> TrainConfig:
        t = self.doc["train"]
        for k in ("delta", "alpha", "beta", "gamma"):
            if t[k] < 0:
                raise ConfigInvalid(f"train.{k}", "must be >= 0")
        if t["inner_steps"] < 1:
            raise ConfigInvalid("train.inner_steps", "must be >= 1")
        lam = t["grl_lambda"]
        if (isinstance(lam, str) and lam != "dann") or (not isinstance(lam, str) and lam < 0):
            raise ConfigInvalid("train.grl_lambda", "must be 'dann' or a number >= 0")
        try:
            hp = HyperParams(
                delta=float(t["delta"]), alpha=float(t["alpha"]), beta=float(t["beta"]),
                gamma=float(t["gamma"]), inner_steps=t["inner_steps"],
                grl_lambda=t["grl_lambda"] if isinstance(t["grl_lambda"], str) else float(t["grl_lambda"]),
            )
        except ValueError as exc:
            raise ConfigInvalid("train", str(exc)) from exc
        for k in ("hidden", "feature", "domain_hidden"):
            if t[k] < 1:
                raise ConfigInvalid(f"train.{k}", "must be >= 1")
        if self.doc["embed"]["dim"] < 1:
            raise ConfigInvalid("embed.dim", "must be >= 1")
        dims = Dims(self.doc["embed"]["dim"], t["hidden"], t["feature"], t["domain_hidden"])
        return TrainConfig(
            hp=hp, dims=dims, tasks_per_batch=t["tasks_per_batch"],
            task_source_size=t["task_source_size"], task_target_size=t["task_target_size"],
            epochs=t["epochs"], seed=t["seed"], optimizer=t["optimizer"],
            batches_per_epoch=t["batches_per_epoch"], meta=t["meta"],
        )

"""Feature extractor, anomaly head, domain head, and the combined task loss."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .embedding import EventEmbeddingTable
from .errors import EmptyBatch, MissingDomain, ShapeMismatch
from .sessions import Domain, Label, Session

CHECKPOINT_VERSION = 1

ENCODER = ("W1", "b1", "W2", "b2")
ANOMALY_HEAD = ("Wa", "ba")
DOMAIN_HEAD = ("Wd1", "bd1", "Wd2", "bd2")


@dataclass
class HyperParams:
    delta: float = 0.05
    alpha: float = 1e-3
    beta: float = 1.0
    gamma: float = 1.0
    inner_steps: int = 1
    # a float means a constant GRL coefficient; "dann" selects the warm-up schedule
    grl_lambda: float | str = "dann"

    def __post_init__(self):
        if self.delta < 0 or self.alpha < 0:
            raise ValueError("delta and alpha must be nonnegative")
        if self.beta < 0 or self.gamma < 0:
            raise ValueError("beta and gamma must be nonnegative")
        if self.inner_steps < 1:
            raise ValueError("inner_steps must be >= 1")
        if isinstance(self.grl_lambda, str):
            if self.grl_lambda != "dann":
                raise ValueError(f"unknown GRL schedule {self.grl_lambda!r}")
        elif self.grl_lambda < 0:
            raise ValueError("grl_lambda must be nonnegative")

    def lam(self, progress: float) -> float:
        """GRL coefficient at training progress ``progress`` in [0, 1]."""
        if isinstance(self.grl_lambda, str):
            return 2.0 / (1.0 + np.exp(-10.0 * progress)) - 1.0
        return float(self.grl_lambda)


@dataclass(frozen=True)
class Dims:
    embed: int = 50
    hidden: int = 64
    feature: int = 32
    domain_hidden: int = 32

    def shapes(self) -> dict[str, tuple[int, ...]]:
        D, H, F, H2 = self.embed, self.hidden, self.feature, self.domain_hidden
        return {
            "W1": (D, H), "b1": (H,), "W2": (H, F), "b2": (F,),
            "Wa": (F, 2), "ba": (2,),
            "Wd1": (F, H2), "bd1": (H2,), "Wd2": (H2, 2), "bd2": (2,),
        }


@dataclass
class ModelParams:
    """All three parameter groups keyed by name; see ENCODER, ANOMALY_HEAD, DOMAIN_HEAD."""

    dims: Dims
    tensors: dict[str, Tensor] = field(default_factory=dict)

    def __post_init__(self):
        for name, shape in self.dims.shapes().items():
            if name not in self.tensors:
                raise ShapeMismatch(f"missing parameter {name}")
            if self.tensors[name].shape != shape:
                raise ShapeMismatch(f"{name}: expected shape {shape}, got {self.tensors[name].shape}")

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    @property
    def theta_e(self) -> dict[str, Tensor]:
        return {k: self.tensors[k] for k in ENCODER}

    @property
    def theta_omega(self) -> dict[str, Tensor]:
        return {k: self.tensors[k] for k in ANOMALY_HEAD}

    @property
    def theta_d(self) -> dict[str, Tensor]:
        return {k: self.tensors[k] for k in DOMAIN_HEAD}

    @classmethod
    def init(cls, dims: Dims, seed: int) -> "ModelParams":
        """Glorot-uniform weights, zero biases."""
        rng = np.random.default_rng(seed)
        tensors = {}
        for name, shape in dims.shapes().items():
            if len(shape) == 2:
                s = np.sqrt(6.0 / (shape[0] + shape[1]))
                tensors[name] = Tensor(rng.uniform(-s, s, size=shape), requires_grad=True)
            else:
                tensors[name] = Tensor(np.zeros(shape), requires_grad=True)
        return cls(dims, tensors)

    @classmethod
    def zeros(cls, dims: Dims) -> "ModelParams":
        return cls(dims, {n: Tensor(np.zeros(s), requires_grad=True) for n, s in dims.shapes().items()})

    def copy(self) -> "ModelParams":
        return ModelParams(self.dims, {n: Tensor(t.data.copy(), requires_grad=True) for n, t in self.tensors.items()})

    def with_encoder(self, theta_e: dict[str, Tensor]) -> "ModelParams":
        """Same heads (shared tensors), different encoder."""
        merged = dict(self.tensors)
        merged.update(theta_e)
        return ModelParams(self.dims, merged)

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.zero_grad()

    def arrays(self) -> dict[str, np.ndarray]:
        return {n: t.data for n, t in self.tensors.items()}


def session_matrix(sessions: Sequence[Session], emb: EventEmbeddingTable) -> np.ndarray:
    """Row i holds the mean event embedding of session i (raises MissingTemplate)."""
    if not sessions:
        return np.zeros((0, emb.dim))
    return np.stack([emb.session_mean(s.events) for s in sessions])


def encode_rows(x: np.ndarray | Tensor, theta_e: dict[str, Tensor]) -> Tensor:
    x = x if isinstance(x, Tensor) else Tensor(np.atleast_2d(x))
    if x.shape[1] != theta_e["W1"].shape[0]:
        raise ShapeMismatch(f"input width {x.shape[1]} does not match W1 {theta_e['W1'].shape}")
    h = ad.tanh(ad.add(ad.matmul(x, theta_e["W1"]), theta_e["b1"]))
    return ad.tanh(ad.add(ad.matmul(h, theta_e["W2"]), theta_e["b2"]))


def encode(session: Session, emb: EventEmbeddingTable, theta_e: dict[str, Tensor]) -> Tensor:
    """Mean-pool the session's event embeddings and pass them through the encoder."""
    return encode_rows(emb.session_mean(session.events)[None, :], theta_e)


def anomaly_logits(z: Tensor, theta_omega: dict[str, Tensor]) -> Tensor:
    z = z if isinstance(z, Tensor) else Tensor(np.atleast_2d(z))
    if z.shape[-1] != theta_omega["Wa"].shape[0]:
        raise ShapeMismatch(f"feature width {z.shape[-1]} does not match Wa {theta_omega['Wa'].shape}")
    return ad.add(ad.matmul(z, theta_omega["Wa"]), theta_omega["ba"])


def domain_logits(z: Tensor, theta_d: dict[str, Tensor], lam: float = 1.0, reverse: bool = True) -> Tensor:
    """Domain head on top of a gradient-reversal layer (``reverse=False`` drops the GRL)."""
    z = z if isinstance(z, Tensor) else Tensor(np.atleast_2d(z))
    if z.shape[-1] != theta_d["Wd1"].shape[0]:
        raise ShapeMismatch(f"feature width {z.shape[-1]} does not match Wd1 {theta_d['Wd1'].shape}")
    if reverse:
        z = ad.grad_reverse(z, lam)
    h = ad.tanh(ad.add(ad.matmul(z, theta_d["Wd1"]), theta_d["bd1"]))
    return ad.add(ad.matmul(h, theta_d["Wd2"]), theta_d["bd2"])


def argmax_labels(logits: np.ndarray) -> np.ndarray:
    """Class 1 only when its logit is strictly larger; ties resolve to class 0."""
    logits = np.atleast_2d(logits)
    return (logits[:, 1] > logits[:, 0]).astype(int)


@dataclass
class Batch:
    """Pooled session features with domain tags and (source-only) anomaly labels.

    ``labels`` uses -1 for rows without a label.
    """

    x: np.ndarray
    domains: np.ndarray
    labels: np.ndarray

    @classmethod
    def from_sessions(cls, sessions: Sequence[Session], emb: EventEmbeddingTable) -> "Batch":
        return cls(
            session_matrix(sessions, emb),
            np.array([int(s.domain) for s in sessions], dtype=int),
            np.array([-1 if s.label is None else int(s.label) for s in sessions], dtype=int),
        )

    def __len__(self) -> int:
        return self.x.shape[0]


@dataclass
class LossParts:
    total: Tensor
    classification: float
    adversarial: float
    domain_correct: int
    n: int


def task_loss_parts(batch: Batch, params: ModelParams, hp: HyperParams, lam: float = 1.0) -> LossParts:
    if len(batch) == 0:
        raise EmptyBatch("task loss needs at least one session")
    labeled = np.flatnonzero((batch.domains == Domain.SOURCE) & (batch.labels >= 0))
    if labeled.size == 0:
        raise MissingDomain("batch has no labeled source session")
    if not (batch.domains == Domain.SOURCE).any() or not (batch.domains == Domain.TARGET).any():
        raise MissingDomain("batch needs sessions from both domains")

    z = encode_rows(batch.x, params.theta_e)
    l_c = ad.softmax_cross_entropy(anomaly_logits(ad.take_rows(z, labeled), params.theta_omega), batch.labels[labeled])
    d_logits = domain_logits(z, params.theta_d, lam)
    l_ad = ad.softmax_cross_entropy(d_logits, batch.domains)
    total = ad.add_scalars(ad.scale(l_c, hp.gamma), ad.scale(l_ad, hp.beta))
    correct = int((argmax_labels(d_logits.data) == batch.domains).sum())
    return LossParts(total, l_c.item(), l_ad.item(), correct, len(batch))


def task_loss(batch: Batch, params: ModelParams, hp: HyperParams, lam: float = 1.0) -> Tensor:
    """gamma * source classification CE + beta * domain CE (through the GRL)."""
    return task_loss_parts(batch, params, hp, lam).total


def predict_rows(x: np.ndarray, params: ModelParams) -> np.ndarray:
    if x.shape[0] == 0:
        return np.zeros(0, dtype=int)
    z = encode_rows(x, params.theta_e)
    return argmax_labels(anomaly_logits(z, params.theta_omega).data)


def predict_domain_rows(x: np.ndarray, params: ModelParams) -> np.ndarray:
    z = encode_rows(x, params.theta_e)
    return argmax_labels(domain_logits(z, params.theta_d, reverse=False).data)


def save_checkpoint(path, params: ModelParams, hp: HyperParams | None = None, extra: dict | None = None) -> None:
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "dims": asdict(params.dims),
        "hyperparams": asdict(hp) if hp is not None else None,
        "extra": extra or {},
        "params": {
            name: {"shape": list(t.shape), "data": t.data.reshape(-1).tolist()}
            for name, t in sorted(params.tensors.items())
        },
    }
    # float repr round-trips exactly, so the text form is bit-exact
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def load_checkpoint(path) -> tuple[ModelParams, HyperParams | None, dict]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('format_version')!r}")
    dims = Dims(**doc["dims"])
    tensors = {
        name: Tensor(np.array(entry["data"], dtype=np.float64).reshape(entry["shape"]), requires_grad=True)
        for name, entry in doc["params"].items()
    }
    hp = HyperParams(**doc["hyperparams"]) if doc.get("hyperparams") else None
    return ModelParams(dims, tensors), hp, doc.get("extra", {})

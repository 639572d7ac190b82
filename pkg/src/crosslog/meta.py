"""Meta-task sampling and the first-order inner/outer meta-training loop."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .autodiff import Tensor, add_scalars
from .embedding import EventEmbeddingTable
from .errors import ConfigInvalid, PoolTooSmall
from .evaluation import metrics
from .model import (
    ENCODER,
    Batch,
    Dims,
    HyperParams,
    ModelParams,
    predict_rows,
    session_matrix,
    task_loss,
    task_loss_parts,
)
from .sessions import Domain, DomainPool

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    hp: HyperParams = field(default_factory=HyperParams)
    dims: Dims = field(default_factory=Dims)
    tasks_per_batch: int = 4
    task_source_size: int = 8
    task_target_size: int = 8
    epochs: int = 30
    seed: int = 0
    optimizer: str = "adam"
    # None: enough meta-batches per epoch to touch every source session about once
    batches_per_epoch: int | None = None
    # False replaces inner adaptation with plain joint training on support + query
    meta: bool = True

    def __post_init__(self):
        for name in ("tasks_per_batch", "task_source_size", "task_target_size"):
            if getattr(self, name) < 1:
                raise ConfigInvalid(f"train.{name}", "must be >= 1")
        if self.epochs < 0:
            raise ConfigInvalid("train.epochs", "must be >= 0")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigInvalid("train.optimizer", "must be 'sgd' or 'adam'")
        if self.batches_per_epoch is not None and self.batches_per_epoch < 1:
            raise ConfigInvalid("train.batches_per_epoch", "must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigInvalid("train.seed", "must be an unsigned 64-bit integer")


@dataclass
class PoolFeatures:
    """Pooled session features of a DomainPool, computed once before training."""

    xs: np.ndarray
    ys: np.ndarray
    xt: np.ndarray

    @classmethod
    def build(cls, pool: DomainPool, emb: EventEmbeddingTable) -> "PoolFeatures":
        return cls(
            session_matrix(pool.source_sessions, emb),
            np.array([int(s.label) for s in pool.source_sessions], dtype=int),
            session_matrix(pool.target_sessions, emb),
        )


@dataclass
class MetaTask:
    """Support/query split; every field holds indices into the pool's session lists."""

    support_source: np.ndarray
    support_target: np.ndarray
    query_source: np.ndarray
    query_target: np.ndarray

    def _batch(self, feats: PoolFeatures, src: np.ndarray, tgt: np.ndarray) -> Batch:
        return Batch(
            np.concatenate([feats.xs[src], feats.xt[tgt]]),
            np.concatenate([np.full(src.size, int(Domain.SOURCE)), np.full(tgt.size, int(Domain.TARGET))]),
            np.concatenate([feats.ys[src], np.full(tgt.size, -1)]),
        )

    def support(self, feats: PoolFeatures) -> Batch:
        return self._batch(feats, self.support_source, self.support_target)

    def query(self, feats: PoolFeatures) -> Batch:
        return self._batch(feats, self.query_source, self.query_target)


def _source_labels(pool) -> tuple[np.ndarray, int]:
    if isinstance(pool, PoolFeatures):
        return pool.ys, pool.xt.shape[0]
    return np.array([int(s.label) for s in pool.source_sessions], dtype=int), len(pool.target_sessions)


def sample_meta_task(pool: DomainPool | PoolFeatures, cfg: TrainConfig, rng: np.random.Generator) -> MetaTask:
    """Draw disjoint support and query sets without replacement.

    When the source pool holds at least two sessions of each class, both support
    and query get one normal and one anomalous session before the rest is filled
    uniformly at random.
    """
    labels, n_target = _source_labels(pool)
    s, t = cfg.task_source_size, cfg.task_target_size
    if labels.size < 2 * s or n_target < 2 * t:
        raise PoolTooSmall(
            f"need {2 * s} source and {2 * t} target sessions, pool has {labels.size} and {n_target}"
        )
    perm = rng.permutation(labels.size)
    normal = perm[labels[perm] == 0]
    anomalous = perm[labels[perm] == 1]
    if s >= 2 and normal.size >= 2 and anomalous.size >= 2:
        sup_fixed, que_fixed = [normal[0], anomalous[0]], [normal[1], anomalous[1]]
    else:
        sup_fixed, que_fixed = [], []
    taken = set(sup_fixed) | set(que_fixed)
    rest = [i for i in perm if i not in taken]
    n_sup = s - len(sup_fixed)
    sup = np.array(sup_fixed + rest[:n_sup], dtype=int)
    que = np.array(que_fixed + rest[n_sup : n_sup + s - len(que_fixed)], dtype=int)
    tperm = rng.permutation(n_target)
    return MetaTask(sup, tperm[:t].copy(), que, tperm[t : 2 * t].copy())


def _grads(tensors: dict[str, Tensor]) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(t.data) if t.grad is None else t.grad for k, t in tensors.items()}


def inner_adapt(params: ModelParams, support: Batch, hp: HyperParams, lam: float = 1.0) -> dict[str, Tensor]:
    """``inner_steps`` SGD steps of size ``delta`` on the encoder only; heads stay fixed."""
    theta = {k: Tensor(params[k].data.copy(), requires_grad=True) for k in ENCODER}
    for _ in range(hp.inner_steps):
        adapted = params.with_encoder(theta)
        task_loss(support, adapted, hp, lam).backward()
        grads = _grads(theta)
        theta = {k: Tensor(theta[k].data - hp.delta * grads[k], requires_grad=True) for k in ENCODER}
    # the loss also pushed gradients into the shared head tensors; drop them
    for k, t in params.tensors.items():
        if k not in ENCODER:
            t.zero_grad()
    return theta


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, arrays: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for k, g in grads.items():
            arrays[k] -= self.lr * g


class Adam:
    def __init__(self, lr: float, b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, arrays: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for k, g in grads.items():
            m = self.m.setdefault(k, np.zeros_like(g))
            v = self.v.setdefault(k, np.zeros_like(g))
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            arrays[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(name: str, lr: float):
    return Adam(lr) if name == "adam" else SGD(lr)


@dataclass
class StepStats:
    classification: float = 0.0
    adversarial: float = 0.0
    domain_correct: int = 0
    domain_total: int = 0
    tasks: int = 0

    def add(self, other: "StepStats") -> None:
        self.classification += other.classification
        self.adversarial += other.adversarial
        self.domain_correct += other.domain_correct
        self.domain_total += other.domain_total
        self.tasks += other.tasks


def outer_update(
    params: ModelParams,
    tasks: Sequence[MetaTask],
    feats: PoolFeatures,
    hp: HyperParams,
    optimizer,
    lam: float = 1.0,
    meta: bool = True,
) -> StepStats:
    """One first-order meta step over ``tasks``; updates ``params`` in place.

    Each task adapts the encoder on its support set, then the query loss is
    evaluated at the adapted encoder. Its encoder gradient is applied to the
    base encoder (first-order approximation); the heads use their own query
    gradients. Losses are summed over tasks and a single optimizer step taken.
    """
    if not tasks:
        raise ValueError("outer_update needs at least one task")
    total = {k: np.zeros_like(t.data) for k, t in params.tensors.items()}
    stats = StepStats()
    for task in tasks:
        params.zero_grad()
        if meta:
            theta_i = inner_adapt(params, task.support(feats), hp, lam)
            adapted = params.with_encoder(theta_i)
            parts = task_loss_parts(task.query(feats), adapted, hp, lam)
            parts.total.backward()
            enc_grads = _grads(theta_i)
        else:
            sup = task_loss_parts(task.support(feats), params, hp, lam)
            parts = task_loss_parts(task.query(feats), params, hp, lam)
            add_scalars(sup.total, parts.total).backward()
            enc_grads = _grads(params.theta_e)
        for k in ENCODER:
            total[k] += enc_grads[k]
        for k, g in _grads({k: params[k] for k in params.tensors if k not in ENCODER}).items():
            total[k] += g
        stats.add(StepStats(parts.classification, parts.adversarial, parts.domain_correct, parts.n, 1))
    params.zero_grad()
    optimizer.step(params.arrays(), total)
    return stats


@dataclass
class EpochMetrics:
    epoch: int
    classification: float
    adversarial: float
    domain_acc: float
    source_f1: float

    def line(self) -> str:
        return (
            f"{self.epoch}\t{self.classification!r}\t{self.adversarial!r}\t"
            f"{self.domain_acc!r}\t{self.source_f1!r}"
        )


def write_metrics_log(path, history: Sequence[EpochMetrics]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for m in history:
            fh.write(m.line() + "\n")


def batches_per_epoch(cfg: TrainConfig, n_source: int) -> int:
    if cfg.batches_per_epoch is not None:
        return cfg.batches_per_epoch
    return max(1, math.ceil(n_source / (cfg.tasks_per_batch * 2 * cfg.task_source_size)))


def train(
    pool: DomainPool,
    emb: EventEmbeddingTable,
    cfg: TrainConfig,
    on_epoch: Callable[[EpochMetrics], None] | None = None,
) -> tuple[ModelParams, list[EpochMetrics]]:
    """Meta-train from scratch; fully determined by ``cfg.seed`` and the inputs."""
    if not pool.source_sessions or not pool.target_sessions:
        raise ConfigInvalid("data", "both source and target pools must be nonempty")
    if emb.dim != cfg.dims.embed:
        raise ConfigInvalid("train.dims.embed", f"embedding table has dim {emb.dim}, config says {cfg.dims.embed}")
    init_seed, sample_seed = np.random.SeedSequence(cfg.seed).spawn(2)
    params = ModelParams.init(cfg.dims, int(init_seed.generate_state(1, np.uint64)[0]))
    rng = np.random.default_rng(sample_seed)
    feats = PoolFeatures.build(pool, emb)
    optimizer = make_optimizer(cfg.optimizer, cfg.hp.alpha)

    n_batches = batches_per_epoch(cfg, feats.xs.shape[0])
    total_steps = cfg.epochs * n_batches
    history: list[EpochMetrics] = []
    step = 0
    for epoch in range(cfg.epochs):
        stats = StepStats()
        for _ in range(n_batches):
            lam = cfg.hp.lam(step / total_steps)
            tasks = [sample_meta_task(feats, cfg, rng) for _ in range(cfg.tasks_per_batch)]
            stats.add(outer_update(params, tasks, feats, cfg.hp, optimizer, lam, meta=cfg.meta))
            step += 1
        src_f1 = metrics(predict_rows(feats.xs, params), feats.ys).f1
        m = EpochMetrics(
            epoch,
            stats.classification / stats.tasks,
            stats.adversarial / stats.tasks,
            stats.domain_correct / stats.domain_total,
            src_f1,
        )
        history.append(m)
        log.info("epoch %d  L_c=%.4f  L_ad=%.4f  dom_acc=%.3f  src_f1=%.3f", *m.__dict__.values())
        if on_epoch is not None:
            on_epoch(m)
    return params, history

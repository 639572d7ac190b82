"""Finite-difference sweep over every autodiff op and the full task loss."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .model import ENCODER, Batch, Dims, HyperParams, ModelParams, task_loss, task_loss_parts


def _leaf(rng: np.random.Generator, *shape) -> Tensor:
    return Tensor(rng.normal(size=shape), requires_grad=True)


def _relu_input(rng: np.random.Generator, *shape) -> Tensor:
    # keep entries away from the kink so central differences stay valid
    x = rng.normal(size=shape)
    x = np.where(np.abs(x) < 0.05, 0.05 * np.sign(x) + 0.05 * (x == 0), x)
    return Tensor(x, requires_grad=True)


def _cases(rng: np.random.Generator):
    """(name, loss_fn, params, reference) cases; each loss reduces to a scalar via cross-entropy.

    ``reference`` is None when the tape gradient should equal the derivative of
    ``loss_fn`` itself.
    """
    labels = rng.integers(0, 2, size=3)

    def ce(t: Tensor) -> Tensor:
        return ad.softmax_cross_entropy(t, labels)

    a, b = _leaf(rng, 3, 4), _leaf(rng, 4, 2)
    yield "matmul", lambda p: ce(ad.matmul(p[0], p[1])), [a, b], None
    a, bias = _leaf(rng, 3, 2), _leaf(rng, 2)
    yield "add", lambda p: ce(ad.add(p[0], p[1])), [a, bias], None
    a = _leaf(rng, 3, 2)
    yield "tanh", lambda p: ce(ad.tanh(p[0])), [a], None
    a = _relu_input(rng, 3, 2)
    yield "relu", lambda p: ce(ad.relu(p[0])), [a], None
    a, w = _leaf(rng, 5, 3), _leaf(rng, 3, 2)
    yield "mean_rows", lambda p: ad.softmax_cross_entropy(ad.matmul(ad.mean_rows(p[0]), p[1]), labels[:1]), [a, w], None
    a = _leaf(rng, 5, 2)
    yield "take_rows", lambda p: ce(ad.take_rows(p[0], [4, 0, 2])), [a], None
    a = _leaf(rng, 3, 2)
    c = float(rng.normal())
    yield "scale", lambda p: ad.scale(ce(p[0]), c), [a], None
    a, b2 = _leaf(rng, 3, 2), _leaf(rng, 3, 2)
    yield "add_scalars", lambda p: ad.add_scalars(ce(p[0]), ad.scale(ce(p[1]), 0.5)), [a, b2], None
    a = _leaf(rng, 3, 2)
    lam = float(rng.uniform(0, 2))
    # the tape should reproduce -lam times the derivative of the plain function
    yield "grad_reverse", lambda p: ce(ad.grad_reverse(p[0], lam)), [a], lambda p: -lam * ce(p[0]).item()

    dims = Dims(embed=5, hidden=4, feature=3, domain_hidden=3)
    params = ModelParams.init(dims, int(rng.integers(2**32)))
    for t in params.tensors.values():
        # nonzero biases so every path is exercised
        t.data += 0.1 * rng.normal(size=t.shape)
    batch = Batch(rng.normal(size=(4, 5)) * 0.5, np.array([0, 0, 1, 1]), np.array([0, 1, -1, -1]))
    hp = HyperParams(beta=float(rng.uniform(0.5, 1.5)), gamma=float(rng.uniform(0.5, 1.5)))
    names = sorted(params.tensors)

    def full(p):
        return task_loss(batch, ModelParams(dims, dict(zip(names, p))), hp, lam)

    def parts(p):
        parts = task_loss_parts(batch, ModelParams(dims, dict(zip(names, p))), hp, lam)
        return parts.classification, parts.adversarial

    def encoder_ref(p):
        # through the reversal the encoder sees gamma * L_c - lam * beta * L_ad
        l_c, l_ad = parts(p)
        return hp.gamma * l_c - lam * hp.beta * l_ad

    refs = [encoder_ref if n in ENCODER else full for n in names]
    yield "task_loss", full, [params.tensors[n] for n in names], refs


def run_gradcheck(trials: int = 100, seed: int = 0, eps: float = 1e-5) -> dict[str, float]:
    """Worst relative error per case over ``trials`` seeded draws."""
    worst: dict[str, float] = {}
    for seq in np.random.SeedSequence(seed).spawn(trials):
        rng = np.random.default_rng(seq)
        for name, fn, params, ref in _cases(rng):
            err = ad.finite_diff_check(fn, params, eps, reference=ref)
            worst[name] = max(worst.get(name, 0.0), float(err))
    return worst

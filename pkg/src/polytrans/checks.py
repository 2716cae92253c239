"""Central-difference gradient suite for the autodiff ops, the KL forms and the full loss."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import model as M
from . import ndtensor as nd
from .errors import NonDeterministicFunction
from .corpus import CorpusConfig, derive_seed, generate_corpus
from .gaussian import DiagGaussian, kl_between, kl_to_standard

OP_TOL = 1e-4
LOSS_TOL = 1e-3


@dataclass(frozen=True)
class GradRow:
    name: str
    error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.error < self.tolerance


def _weights(rng, shape):
    # random projection so every output element influences the scalar
    return rng.standard_normal(shape)


def op_cases(rng: np.random.Generator) -> dict[str, tuple[Callable, list[np.ndarray]]]:
    """One scalar-valued test function plus inputs per registered op."""
    r = lambda *s: rng.standard_normal(s)
    pos = lambda *s: rng.uniform(0.5, 2.0, s)
    w23, w2 = _weights(rng, (2, 3)), _weights(rng, (2,))
    w234 = _weights(rng, (2, 3, 4))
    ids = np.array([[0, 2], [1, 1]])
    pick_ids = np.array([2, 0])
    mask = np.array([[True, False, False], [False, True, False]])
    dot = lambda y, w: nd.sum_(y * w)
    return {
        "add": (lambda a, b: dot(nd.add(a, b), w23), [r(2, 3), r(3)]),
        "sub": (lambda a, b: dot(nd.sub(a, b), w23), [r(2, 3), r(2, 1)]),
        "mul": (lambda a, b: dot(nd.mul(a, b), w23), [r(2, 3), r(3)]),
        "div": (lambda a, b: dot(nd.div(a, b), w23), [r(2, 3), pos(2, 3)]),
        "neg": (lambda a: dot(nd.neg(a), w23), [r(2, 3)]),
        "pow": (lambda a: dot(nd.power(a, 3.0), w23), [r(2, 3)]),
        "square": (lambda a: dot(nd.square(a), w23), [r(2, 3)]),
        "matmul": (lambda a, b: dot(nd.matmul(a, b), w234), [r(2, 3, 5), r(5, 4)]),
        "exp": (lambda a: dot(nd.exp(a), w23), [r(2, 3)]),
        "log": (lambda a: dot(nd.log(a), w23), [pos(2, 3)]),
        "tanh": (lambda a: dot(nd.tanh(a), w23), [r(2, 3)]),
        "sigmoid": (lambda a: dot(nd.sigmoid(a), w23), [r(2, 3)]),
        "relu": (lambda a: dot(nd.relu(a), w23), [rng.uniform(0.1, 1, (2, 3)) * rng.choice([-1, 1], (2, 3))]),
        "clamp": (lambda a: dot(nd.clamp(a, -0.5, 0.5), w23),
                  [rng.uniform(0.6, 1, (2, 3)) * rng.choice([-1, 1], (2, 3)) * np.array([[1, 0.3, 1], [0.2, 1, 0.4]])]),
        "softmax": (lambda a: dot(nd.softmax(a, axis=-1), w23), [r(2, 3)]),
        "log_softmax": (lambda a: dot(nd.log_softmax(a, axis=-1), w23), [r(2, 3)]),
        "sum": (lambda a: dot(nd.sum_(a, axis=1), w2), [r(2, 3)]),
        "mean": (lambda a: dot(nd.mean(a, axis=1), w2), [r(2, 3)]),
        "concat": (lambda a, b: dot(nd.concat([a, b], axis=0), _weights(np.random.default_rng(1), (3, 3))),
                   [r(2, 3), r(1, 3)]),
        "stack": (lambda a, b: dot(nd.stack([a, b], axis=0), _weights(np.random.default_rng(2), (2, 2, 3))),
                  [r(2, 3), r(2, 3)]),
        "slice": (lambda a: dot(nd.slice_(a, (slice(None), slice(0, 2))), _weights(np.random.default_rng(3), (2, 2))),
                  [r(2, 3)]),
        "embedding": (lambda t: dot(nd.embedding(t, ids), _weights(np.random.default_rng(4), (2, 2, 3))), [r(4, 3)]),
        "pick": (lambda a: dot(nd.pick(a, pick_ids), w2), [r(2, 3)]),
        "masked_fill": (lambda a: dot(nd.masked_fill(a, mask, 0.0), w23), [r(2, 3)]),
        "reshape": (lambda a: dot(nd.reshape(a, (3, 2)), _weights(np.random.default_rng(5), (3, 2))), [r(2, 3)]),
        "transpose": (lambda a: dot(nd.transpose(a, (1, 0)), _weights(np.random.default_rng(6), (3, 2))), [r(2, 3)]),
        "swapaxes": (lambda a: dot(nd.swapaxes(a, 0, 1), _weights(np.random.default_rng(7), (3, 2))), [r(2, 3)]),
        "layer_norm": (lambda a, g, b: dot(nd.layer_norm(a, g, b), w23), [r(2, 3), r(3), r(3)]),
    }


def kl_cases(rng: np.random.Generator) -> dict[str, tuple[Callable, list[np.ndarray]]]:
    r = lambda *s: rng.standard_normal(s)
    return {
        "kl_to_standard": (lambda m, lv: nd.sum_(kl_to_standard(DiagGaussian.make(m, lv))), [r(2, 4), r(2, 4)]),
        "kl_between": (lambda m1, lv1, m2, lv2: nd.sum_(kl_between(DiagGaussian.make(m1, lv1),
                                                                   DiagGaussian.make(m2, lv2))),
                       [r(2, 4), r(2, 4), r(2, 4), r(2, 4)]),
    }


def micro_model(seed: int = 0, n_languages: int = 2, d_model: int = 8):
    """Tiny model and a two-sample fully parallel batch for exact loss checks."""
    from . import toylang

    langs = toylang.LANGUAGES[:n_languages]
    corpus = generate_corpus(CorpusConfig(languages=langs, n_samples=2, k=2, seed=seed, max_tokens=12))
    dims = M.ModelDims(vocab_size=len(corpus.vocab), d_model=d_model, n_heads=2, enc_layers=1, dec_layers=1,
                       d_ff=16, dec_d_ff=16, latent=4, k=2, proj_hidden=8, max_len=16)
    P = M.ModelParams.init(dims, list(langs), seed=derive_seed(seed, "micro"), vocab=corpus.vocab)
    return P, corpus


def loss_grad_check(P: M.ModelParams, loss_fn: Callable[[], nd.Tensor], seed: int = 0, per_array: int = 2,
                    epsilon: float = 1e-6) -> float:
    """Check reverse-mode gradients of ``loss_fn`` on sampled coordinates of every array."""
    rng = np.random.default_rng(seed)
    with nd.Tape():
        loss = loss_fn()
        grads = nd.backward(loss)
    worst = 0.0
    with nd.no_grad():
        if loss_fn().item() != loss.item():
            raise NonDeterministicFunction("loss is not deterministic")
        for name, t in P.arrays.items():
            analytic = grads.of(t)
            base = t.data.copy()
            for flat in rng.choice(t.size, size=min(per_array, t.size), replace=False):
                idx = np.unravel_index(flat, t.shape)
                vals = []
                for sign in (1.0, -1.0):
                    pert = base.copy()
                    pert[idx] += sign * epsilon
                    t.assign(pert)
                    vals.append(loss_fn().item())
                t.assign(base)
                numeric = (vals[0] - vals[1]) / (2 * epsilon)
                a = analytic[idx]
                worst = max(worst, abs(a - numeric) / max(1.0, abs(a)))
    return worst


def gradient_suite(seed: int = 0) -> list[GradRow]:
    from .train import flag_targets, loss_multi_parallel

    rng = np.random.default_rng(seed)
    rows = []
    for name, (f, xs) in op_cases(rng).items():
        rows.append(GradRow(f"op:{name}", nd.grad_check_many(f, xs, 1e-6), OP_TOL))
    for name, (f, xs) in kl_cases(rng).items():
        rows.append(GradRow(f"kl:{name}", nd.grad_check_many(f, xs, 1e-6), OP_TOL))
    P, corpus = micro_model(seed)
    # the reconstruction target carries no gradient, so hold it at its base value
    targets = flag_targets(P, corpus.samples)
    loss = lambda: loss_multi_parallel(P, corpus.samples, lam=1e-3, seed=seed, mse_targets=targets).tensor
    rows.append(GradRow("loss:multi_parallel", loss_grad_check(P, loss, seed), LOSS_TOL))
    return rows

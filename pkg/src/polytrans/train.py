"""Training objective, partially-missing-sample procedure, optimizer and loop.

Loss composition (float64, fixed order)::

    total = (1 + lam) * (sum CE + sum MSE) + (1 + lam) * sum KL_spec + KL_shared + lam * sum KL_shift

CE is the teacher-forced negative log-likelihood of a target sequence, summed
over tokens and averaged over the source languages it was decoded from.  MSE
compares a reconstructed flag block with the (detached) encoder flag block.
All components are averaged over the rows of the batch they came from.
"""
from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from . import model as M
from . import ndtensor as nd
from .corpus import MultiParallelSample, SemiParallelCorpus, derive_seed, encode_input
from .errors import AllPresent, ConfigError, EmptyPool, MissingInstance, ShapeMismatch
from .gaussian import DiagGaussian, kl_between, kl_to_standard, reparameterize

METRIC_FIELDS = ["epoch", "step", "total", "ce", "mse", "kl_specific", "kl_shared", "kl_shift", "val_bleu"]


@dataclass
class TrainConfig:
    lam: float = 1e-3
    lr: float = 1e-4
    weight_decay: float = 0.01
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    batch_size: int = 32
    micro_batch: int = 8
    epochs: int = 10
    seed: int = 0
    workers: int = 1
    clip_norm: float | None = 1.0
    mse_weight: float = 1.0
    strategy: str = "semi"          # "semi": pseudo-filled steps for partial samples; "parallel_only": skip them
    inner_loop: str = "present"     # "present" or "all" languages drive the inner reconstruction loop
    pseudo_selection: str = "uniform"
    kl_warmup_steps: int = 0

    def validate(self) -> None:
        if self.lam < 0:
            raise ConfigError("lam must be >= 0")
        if self.lr <= 0:
            raise ConfigError("lr must be > 0")
        if self.batch_size < 1 or self.micro_batch < 1 or self.epochs < 0 or self.workers < 1:
            raise ConfigError("batch_size, micro_batch, workers must be >= 1 and epochs >= 0")
        if self.strategy not in ("semi", "parallel_only"):
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        if self.inner_loop not in ("present", "all"):
            raise ConfigError(f"unknown inner_loop {self.inner_loop!r}")
        if self.pseudo_selection not in PSEUDO_SELECTORS:
            raise ConfigError(f"unknown pseudo_selection {self.pseudo_selection!r}")


# ---------------------------------------------------------------------------
# loss breakdown


@dataclass
class LossBreakdown:
    languages: list[str]
    ce: dict[str, float]
    mse: dict[str, float]
    kl_specific: dict[str, float]
    kl_shared: float
    kl_shift: dict[str, float]
    lam: float
    total: float
    ce_mask: dict[str, bool] = field(default_factory=dict)
    tensor: nd.Tensor | None = field(default=None, repr=False, compare=False)

    def recompose(self, lam: float | None = None) -> float:
        lam = self.lam if lam is None else lam
        return compose(lam, [self.ce[l] for l in self.languages], [self.mse[l] for l in self.languages],
                       [self.kl_specific[l] for l in self.languages], self.kl_shared,
                       [self.kl_shift[l] for l in self.languages])

    def slope(self) -> float:
        """d total / d lam at fixed components."""
        parts = [self.ce, self.mse, self.kl_specific, self.kl_shift]
        return sum(sum(p[l] for l in self.languages) for p in parts)

    def summary(self) -> dict[str, float]:
        L = self.languages
        return {"total": self.total, "ce": sum(self.ce[l] for l in L), "mse": sum(self.mse[l] for l in L),
                "kl_specific": sum(self.kl_specific[l] for l in L), "kl_shared": self.kl_shared,
                "kl_shift": sum(self.kl_shift[l] for l in L)}


def _fsum(xs):
    out = None
    for x in xs:
        out = x if out is None else out + x
    return 0.0 if out is None else out


def compose(lam, ce, mse, kl_specific, kl_shared, kl_shift):
    """Combine loss components; works on floats and on tensors alike."""
    recon = _fsum(list(ce) + list(mse))
    return recon * (1.0 + lam) + _fsum(kl_specific) * (1.0 + lam) + kl_shared + _fsum(kl_shift) * lam


class _Terms:
    """Per-language tensor accumulators for one batch."""

    def __init__(self, languages):
        self.languages = list(languages)
        zero = lambda: {l: None for l in self.languages}
        self.ce, self.mse, self.kl_spec, self.kl_shift = zero(), zero(), zero(), zero()
        self.kl_shared = None
        self.ce_mask = {l: False for l in self.languages}

    @staticmethod
    def _add(d, key, value):
        d[key] = value if d[key] is None else d[key] + value

    def add_ce(self, lang, v):
        self._add(self.ce, lang, v)
        self.ce_mask[lang] = True

    def add_mse(self, lang, v):
        self._add(self.mse, lang, v)

    def add_kl_spec(self, lang, v):
        self._add(self.kl_spec, lang, v)

    def add_kl_shift(self, lang, v):
        self._add(self.kl_shift, lang, v)

    def add_kl_shared(self, v):
        self.kl_shared = v if self.kl_shared is None else self.kl_shared + v

    def merge(self, other: "_Terms") -> None:
        for name in ("ce", "mse", "kl_spec", "kl_shift"):
            mine, theirs = getattr(self, name), getattr(other, name)
            for l in self.languages:
                if theirs[l] is not None:
                    self._add(mine, l, theirs[l])
        if other.kl_shared is not None:
            self.add_kl_shared(other.kl_shared)
        for l in self.languages:
            self.ce_mask[l] |= other.ce_mask[l]

    def breakdown(self, lam: float, scale: float, kl_scale: float = 1.0) -> LossBreakdown:
        zero = nd.tensor(0.0)

        def t(v):
            return (zero if v is None else v) * scale

        L = self.languages
        ce = {l: t(self.ce[l]) for l in L}
        mse = {l: t(self.mse[l]) for l in L}
        kls = {l: t(self.kl_spec[l]) * kl_scale for l in L}
        klsh = t(self.kl_shared) * kl_scale
        klt = {l: t(self.kl_shift[l]) * kl_scale for l in L}
        total = compose(lam, [ce[l] for l in L], [mse[l] for l in L], [kls[l] for l in L], klsh, [klt[l] for l in L])
        f = lambda d: {l: d[l].item() for l in L}
        return LossBreakdown(L, f(ce), f(mse), f(kls), klsh.item(), f(klt), lam, total.item(), dict(self.ce_mask),
                             tensor=total)


# ---------------------------------------------------------------------------
# batch preparation


@dataclass
class _Batch:
    """Token ids for a batch of samples in which every language has an instance."""

    inputs: dict[str, list[list[int]]]           # encoder sequences per language
    dec_in: dict[str, np.ndarray]                 # [BOS] t_1..t_n, padded
    dec_out: dict[str, np.ndarray]                # t_1..t_n [EOS], padded
    dec_mask: dict[str, np.ndarray]
    present: np.ndarray                           # (B, N) ground truth available


def _pad(rows: list[list[int]], pad: int) -> tuple[np.ndarray, np.ndarray]:
    t = max(len(r) for r in rows)
    arr = np.full((len(rows), t), pad, dtype=np.int64)
    mask = np.zeros((len(rows), t), dtype=bool)
    for i, r in enumerate(rows):
        arr[i, :len(r)] = r
        mask[i, :len(r)] = True
    return arr, mask


def _make_batch(P: M.ModelParams, token_rows: list[dict[str, list[str]]], present: np.ndarray) -> _Batch:
    v = P.vocab
    inputs, dec_in, dec_out, dec_mask = {}, {}, {}, {}
    for lang in P.languages:
        ids = [v.ids(row[lang]) for row in token_rows]
        inputs[lang] = [encode_input(v, row[lang], lang) for row in token_rows]
        dec_in[lang], _ = _pad([[v.bos_id] + x for x in ids], v.pad_id)
        dec_out[lang], dec_mask[lang] = _pad([x + [v.eos_id] for x in ids], v.pad_id)
    return _Batch(inputs, dec_in, dec_out, dec_mask, present)


def _encode_all(P: M.ModelParams, batch: _Batch) -> dict[str, M.EncodedInstance]:
    """One shared-encoder pass over every language's sequences."""
    langs = P.languages
    seqs = [s for lang in langs for s in batch.inputs[lang]]
    enc = M.encode(P, seqs)
    b = len(batch.inputs[langs[0]])
    out = {}
    for n, lang in enumerate(langs):
        rows = slice(n * b, (n + 1) * b)
        out[lang] = M.EncodedInstance(enc.flag[rows], enc.code[rows], enc.code_mask[rows], [lang] * b)
    return out


def _row_noise(rngs: list[np.random.Generator], shape: tuple[int, ...]) -> np.ndarray:
    return np.stack([r.standard_normal(shape) for r in rngs])


# ---------------------------------------------------------------------------
# the multi-parallel objective on a set of flag representations


def _seq_nll(logits: nd.Tensor, targets: np.ndarray, mask: np.ndarray) -> nd.Tensor:
    """Per-row negative log-likelihood summed over unmasked positions."""
    lp = nd.pick(nd.log_softmax(logits, axis=-1), targets)
    return nd.sum_(lp * mask.astype(np.float64), axis=-1) * -1.0


def _disentangle_and_translate(P, terms: _Terms, flags: Mapping[str, nd.Tensor], enc: Mapping[str, M.EncodedInstance],
                               batch: _Batch, rows: np.ndarray, mse_targets: Mapping[str, np.ndarray],
                               rngs: list, mse_weight: float) -> None:
    """Objective terms for ``rows`` given (possibly reconstructed) flag blocks.

    ``flags[lang]`` holds the flag blocks for exactly ``rows``.  CE/MSE are
    computed only where ``batch.present`` is set; a target is decoded from the
    code of every other present language (or from its own code if it is the
    only one present).
    """
    langs = P.languages
    present = batch.present[rows]
    latent = P.dims.latent
    q = {l: M.infer_specific(P, flags[l], l) for l in langs}
    qs = M.infer_shared(P, dict(flags))
    r = {l: M.infer_shift(P, flags[l], l) for l in langs}
    eps_spec = _row_noise(rngs, (len(langs), latent))
    eps_shared = _row_noise(rngs, (latent,))
    z_shared = reparameterize(qs, eps_shared)
    for n, l in enumerate(langs):
        terms.add_kl_spec(l, nd.sum_(kl_to_standard(q[l])))
        terms.add_kl_shift(l, nd.sum_(kl_between(qs, r[l])))
    terms.add_kl_shared(nd.sum_(kl_to_standard(qs)))
    k, d = P.dims.k, P.dims.d_model
    for n, tgt in enumerate(langs):
        has = present[:, n]
        if not has.any():
            continue
        x_hat = M.reconstruct_flag(P, reparameterize(q[tgt], eps_spec[:, n]), z_shared, tgt)
        diff = x_hat - mse_targets[tgt]
        per_row = nd.sum_(nd.reshape(nd.square(diff), (len(rows), k * d)), axis=-1) * (1.0 / (k * d))
        terms.add_mse(tgt, nd.sum_(per_row * has.astype(np.float64)) * mse_weight)
        # (local row, source language, weight) triples
        pairs = []
        for local in np.flatnonzero(has):
            srcs = [m for m in range(len(langs)) if m != n and present[local, m]] or [n]
            pairs += [(local, m, 1.0 / len(srcs)) for m in srcs]
        loc = np.array([p[0] for p in pairs])
        src = np.array([p[1] for p in pairs])
        w = np.array([p[2] for p in pairs])
        order = np.lexsort((loc, src))
        loc, src, w = loc[order], src[order], w[order]
        codes, masks = [], []
        for m in np.unique(src):
            sel = loc[src == m]
            e = enc[langs[m]]
            codes.append(nd.slice_(e.code, rows[sel]))
            masks.append(e.code_mask[rows[sel]])
        code = nd.concat(codes, axis=0) if len(codes) > 1 else codes[0]
        code_mask = np.concatenate(masks, axis=0)
        logits = M.decode_teacher(P, nd.slice_(x_hat, loc), code, code_mask, tgt, batch.dec_in[tgt][rows[loc]])
        nll = _seq_nll(logits, batch.dec_out[tgt][rows[loc]], batch.dec_mask[tgt][rows[loc]])
        terms.add_ce(tgt, nd.sum_(nll * w))


# ---------------------------------------------------------------------------
# public loss functions


def _rngs(seed: int, ids: Sequence[str], tag: str) -> list[np.random.Generator]:
    return [np.random.default_rng(derive_seed(seed, tag, sid)) for sid in ids]


def _full_batch(P, samples: Sequence[MultiParallelSample]) -> _Batch:
    langs = P.languages
    for s in samples:
        missing = [l for l in langs if l not in s.tokens]
        if missing:
            raise MissingInstance(f"sample {s.id} lacks {missing}")
    return _make_batch(P, [s.tokens for s in samples], np.ones((len(samples), len(langs)), dtype=bool))


def flag_targets(P: M.ModelParams, samples) -> dict[str, np.ndarray]:
    """Detached encoder flag blocks of fully parallel ``samples``, per language."""
    samples = [samples] if isinstance(samples, MultiParallelSample) else list(samples)
    with nd.no_grad():
        enc = _encode_all(P, _full_batch(P, samples))
    return {l: enc[l].flag.data.copy() for l in P.languages}


def _multi_terms(P, samples: Sequence[MultiParallelSample], seed: int, mse_weight: float,
                 mse_targets: Mapping[str, np.ndarray] | None = None) -> _Terms:
    langs = P.languages
    batch = _full_batch(P, samples)
    enc = _encode_all(P, batch)
    rows = np.arange(len(samples))
    terms = _Terms(langs)
    flags = {l: enc[l].flag for l in langs}
    targets = mse_targets if mse_targets is not None else {l: enc[l].flag.data for l in langs}
    _disentangle_and_translate(P, terms, flags, enc, batch, rows, targets,
                               _rngs(seed, [s.id for s in samples], "noise"), mse_weight)
    return terms


def loss_multi_parallel(P: M.ModelParams, samples, lam: float = 1e-3, seed: int = 0,
                        mse_weight: float = 1.0, mse_targets: Mapping[str, np.ndarray] | None = None) -> LossBreakdown:
    """Multi-parallel objective averaged over ``samples`` (one sample or a list).

    ``mse_targets`` pins the reconstruction targets (see ``flag_targets``);
    by default they are the current encoder flag blocks, detached.
    """
    samples = [samples] if isinstance(samples, MultiParallelSample) else list(samples)
    terms = _multi_terms(P, samples, seed, mse_weight, mse_targets)
    return terms.breakdown(lam, 1.0 / len(samples))


def _uniform_pick(rng: np.random.Generator, pool: Sequence[MultiParallelSample]) -> MultiParallelSample:
    return pool[int(rng.integers(len(pool)))]


PSEUDO_SELECTORS: dict[str, Callable] = {"uniform": _uniform_pick}


class PseudoPools:
    """Per-language candidate lists for pseudo instances."""

    def __init__(self, corpus: SemiParallelCorpus | Sequence[MultiParallelSample], languages: Sequence[str]):
        samples = corpus.samples if isinstance(corpus, SemiParallelCorpus) else list(corpus)
        self.pools = {l: [s for s in samples if l in s.tokens] for l in languages}

    def draw(self, lang: str, rng: np.random.Generator, selector: str = "uniform") -> list[str]:
        pool = self.pools.get(lang) or []
        if not pool:
            raise EmptyPool(f"no training instance of {lang} to use as a pseudo instance")
        return PSEUDO_SELECTORS[selector](rng, pool).tokens[lang]


def _partial_terms(P, samples: Sequence[MultiParallelSample], pools: PseudoPools, seed: int, mse_weight: float,
                   inner_loop: str = "present", selector: str = "uniform") -> _Terms:
    langs = P.languages
    rngs = _rngs(seed, [s.id for s in samples], "partial")
    rows_tokens, present = [], np.zeros((len(samples), len(langs)), dtype=bool)
    for b, (s, rng) in enumerate(zip(samples, rngs)):
        here = [l in s.tokens for l in langs]
        if all(here):
            raise AllPresent(f"sample {s.id} is multi-parallel")
        if not any(here):
            raise MissingInstance(f"sample {s.id} has no registered language")
        present[b] = here
        # (a) fill absent languages with pseudo instances
        rows_tokens.append({l: s.tokens[l] if l in s.tokens else pools.draw(l, rng, selector) for l in langs})
    batch = _make_batch(P, rows_tokens, present)
    # (b) encode the pseudo-filled sample
    enc = _encode_all(P, batch)
    latent = P.dims.latent
    terms = _Terms(langs)
    # (c) specific and shift-shared latents of the pseudo sample
    q = {l: M.infer_specific(P, enc[l].flag, l) for l in langs}
    r = {l: M.infer_shift(P, enc[l].flag, l) for l in langs}
    for l in langs:
        terms.add_kl_spec(l, nd.sum_(kl_to_standard(q[l])))
    eps_spec = _row_noise(rngs, (len(langs), latent))
    eps_shift = _row_noise(rngs, (len(langs), latent))
    z_spec = {l: reparameterize(q[l], eps_spec[:, n]) for n, l in enumerate(langs)}
    z_shift = {l: reparameterize(r[l], eps_shift[:, n]) for n, l in enumerate(langs)}
    targets = {l: enc[l].flag.data for l in langs}
    # (d) one reconstructed multi-parallel sample per ground-truth shift-shared latent
    for g_idx, g in enumerate(langs):
        rows = np.arange(len(samples)) if inner_loop == "all" else np.flatnonzero(present[:, g_idx])
        if len(rows) == 0:
            continue
        zs = nd.slice_(z_shift[g], rows)
        flags = {l: M.reconstruct_flag(P, nd.slice_(z_spec[l], rows), zs, l) for l in langs}
        sub_targets = {l: targets[l][rows] for l in langs}
        inner_rngs = [rngs[i] for i in rows]
        _disentangle_and_translate(P, terms, flags, enc, batch, rows, sub_targets, inner_rngs, mse_weight)
    return terms


def step_partially_missing(P: M.ModelParams, samples, pool, lam: float = 1e-3, seed: int = 0,
                           mse_weight: float = 1.0, inner_loop: str = "present",
                           selector: str = "uniform") -> LossBreakdown:
    """Partially-missing-sample objective (pseudo-fill, reconstruct, re-disentangle).

    ``pool`` is the training corpus (or a prepared :class:`PseudoPools`).
    Returns the breakdown averaged over ``samples``; ``.tensor`` carries the
    differentiable total for the single optimizer step that follows.
    """
    samples = [samples] if isinstance(samples, MultiParallelSample) else list(samples)
    pools = pool if isinstance(pool, PseudoPools) else PseudoPools(pool, P.languages)
    terms = _partial_terms(P, samples, pools, seed, mse_weight, inner_loop, selector)
    return terms.breakdown(lam, 1.0 / len(samples))


# ---------------------------------------------------------------------------
# AdamW


@dataclass
class OptState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    weight_decay: float = 0.0

    @classmethod
    def zeros_like(cls, P: M.ModelParams, weight_decay: float = 0.0) -> "OptState":
        return cls({n: np.zeros(t.shape) for n, t in P.arrays.items()},
                   {n: np.zeros(t.shape) for n, t in P.arrays.items()}, 0, weight_decay)


def lr_at(step: int, lr: float, total_steps: int | None) -> float:
    """Linear decay from ``lr`` at step 0 to 0 at ``total_steps``."""
    if not total_steps:
        return lr
    return lr * max(0.0, 1.0 - step / total_steps)


def optimizer_step(P: M.ModelParams, grads: Mapping[str, np.ndarray], state: OptState, lr: float = 1e-4,
                   betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
                   total_steps: int | None = None) -> OptState:
    """One AdamW update in place; returns the state for chaining."""
    b1, b2 = betas
    rate = lr_at(state.step, lr, total_steps)
    state.step += 1
    t = state.step
    for name, param in P.arrays.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros(param.shape)
        g = np.asarray(g, dtype=np.float64)
        if g.shape != param.shape:
            raise ShapeMismatch(f"grad {g.shape} for {name} {param.shape}")
        m = state.m[name] = b1 * state.m[name] + (1 - b1) * g
        v = state.v[name] = b2 * state.v[name] + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        new = param.data - rate * m_hat / (np.sqrt(v_hat) + eps)
        if state.weight_decay:
            new = new - rate * state.weight_decay * param.data
        param.assign(new)
    return state


# ---------------------------------------------------------------------------
# training loop


@dataclass
class EpochMetrics:
    epoch: int
    step: int
    total: float
    ce: float
    mse: float
    kl_specific: float
    kl_shared: float
    kl_shift: float
    val_bleu: float | None = None

    def row(self) -> list[str]:
        vals = [self.epoch, self.step] + [repr(float(getattr(self, f))) for f in METRIC_FIELDS[2:8]]
        return [str(x) for x in vals] + ["" if self.val_bleu is None else repr(float(self.val_bleu))]


@dataclass
class TrainResult:
    params: M.ModelParams
    metrics: list[EpochMetrics]
    state: OptState
    seconds: float

    def metrics_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(METRIC_FIELDS)
        for m in self.metrics:
            w.writerow(m.row())
        return buf.getvalue()


def _micro_loss(P, part: list[MultiParallelSample], pools, cfg: TrainConfig, step_seed: int) -> _Terms:
    langs = P.languages
    multi = [s for s in part if all(l in s.tokens for l in langs)]
    partial = [s for s in part if not all(l in s.tokens for l in langs)]
    terms = _Terms(langs)
    if multi:
        terms.merge(_multi_terms(P, multi, step_seed, cfg.mse_weight))
    if partial:
        terms.merge(_partial_terms(P, partial, pools, step_seed, cfg.mse_weight, cfg.inner_loop,
                                   cfg.pseudo_selection))
    return terms


def _micro_grads(P, part, pools, cfg, step_seed, batch_len, kl_scale):
    """Loss and gradients for one micro-batch (scaled as part of the full mini-batch)."""
    with nd.Tape():
        terms = _micro_loss(P, part, pools, cfg, step_seed)
        bd = terms.breakdown(cfg.lam, 1.0 / batch_len, kl_scale)
        g = nd.backward(bd.tensor)
    bd.tensor = None
    return bd, {n: g.of(t) for n, t in P.arrays.items()}


def _sum_breakdowns(parts: list[LossBreakdown]) -> dict[str, float]:
    out = {}
    for bd in parts:
        for k, v in bd.summary().items():
            out[k] = out.get(k, 0.0) + v
    return out


def train(corpus: SemiParallelCorpus, config: TrainConfig, params: M.ModelParams | None = None,
          dims: M.ModelDims | None = None, out_dir: str | Path | None = None,
          val_fn: Callable[[M.ModelParams], float] | None = None,
          log: Callable[[str], None] | None = None) -> TrainResult:
    """Seeded epoch loop over mini-batches of samples.

    Each mini-batch is cut into fixed micro-batches whose gradients are summed
    in micro-batch order, so results do not depend on ``config.workers``.
    """
    config.validate()
    if len(corpus) == 0:
        raise ConfigError("training corpus is empty")
    start = time.perf_counter()
    if params is None:
        dims = dims or M.ModelDims(vocab_size=len(corpus.vocab), k=corpus.vocab.k)
        params = M.ModelParams.init(dims, corpus.languages, seed=derive_seed(config.seed, "init"), vocab=corpus.vocab)
    P = params
    samples = list(corpus.samples)
    if config.strategy == "parallel_only":
        samples = [s for s in samples if all(l in s.tokens for l in P.languages)]
        if not samples:
            raise ConfigError("no multi-parallel samples to train on")
    pools = PseudoPools(corpus, P.languages)
    n_batches = math.ceil(len(samples) / config.batch_size)
    total_steps = n_batches * config.epochs
    state = OptState.zeros_like(P, config.weight_decay)
    metrics: list[EpochMetrics] = []
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.csv").write_text(",".join(METRIC_FIELDS) + "\n")
    pool_ex = ThreadPoolExecutor(config.workers) if config.workers > 1 else None
    try:
        for epoch in range(1, config.epochs + 1):
            order = np.random.default_rng(derive_seed(config.seed, "shuffle", epoch)).permutation(len(samples))
            sums: dict[str, float] = {}
            for b in range(n_batches):
                batch = [samples[i] for i in order[b * config.batch_size:(b + 1) * config.batch_size]]
                step_seed = derive_seed(config.seed, "step", state.step)
                kl_scale = min(1.0, (state.step + 1) / config.kl_warmup_steps) if config.kl_warmup_steps else 1.0
                parts = [batch[i:i + config.micro_batch] for i in range(0, len(batch), config.micro_batch)]
                job = lambda part: _micro_grads(P, part, pools, config, step_seed, len(batch), kl_scale)
                results = list(pool_ex.map(job, parts)) if pool_ex else [job(p) for p in parts]
                grads = {n: _fsum(r[1][n] for r in results) for n in P.arrays}
                if config.clip_norm:
                    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
                    if norm > config.clip_norm:
                        grads = {n: g * (config.clip_norm / norm) for n, g in grads.items()}
                optimizer_step(P, grads, state, config.lr, config.betas, config.eps, total_steps)
                for k, v in _sum_breakdowns([r[0] for r in results]).items():
                    sums[k] = sums.get(k, 0.0) + v * len(batch)
            mean = {k: v / len(samples) for k, v in sums.items()}
            val = val_fn(P) if val_fn is not None else None
            m = EpochMetrics(epoch, state.step, mean["total"], mean["ce"], mean["mse"], mean["kl_specific"],
                             mean["kl_shared"], mean["kl_shift"], val)
            metrics.append(m)
            if log:
                log(f"epoch {epoch} step {state.step} total {m.total:.4f} ce {m.ce:.4f}"
                    + ("" if val is None else f" val_bleu {val:.2f}"))
            if out is not None:
                with open(out / "metrics.csv", "a", newline="") as fh:
                    csv.writer(fh, lineterminator="\n").writerow(m.row())
                M.save_checkpoint(P, out / f"checkpoint_epoch{epoch}.npz",
                                  {"epoch": epoch, "step": state.step, "train_config": _jsonable(config)})
    finally:
        if pool_ex:
            pool_ex.shutdown()
    return TrainResult(P, metrics, state, time.perf_counter() - start)


def _jsonable(cfg: TrainConfig) -> dict:
    d = asdict(cfg)
    d["betas"] = list(d["betas"])
    return d

"""Shared encoder, latent projectors and per-language decoders.

Parameters live in one ordered name -> Tensor map.  Naming scheme::

    enc.*                 shared encoder (token + position embeddings, layers)
    dec.<lang>.*          decoder for one target language
    proj.q.<lang>.*       language-specific posterior q_i
    proj.r.<lang>.*       shift-shared posterior r_i
    proj.p.<lang>.*       flag reconstructor p_i
    proj.qs.*             shared posterior q_s (mean-pools flag blocks)

Decoders reuse the shared token/position embeddings as input table and as
tied output matrix; each owns its layers, a dense output transform and a
vocabulary bias.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import ndtensor as nd
from .corpus import CLS, SEP, Vocabulary
from .errors import (
    CheckpointFormatError,
    ConfigError,
    DimMismatch,
    MalformedSequence,
    TooFewLanguages,
    UnknownLanguage,
)
from .gaussian import DiagGaussian

NEG = -1e9
FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelDims:
    vocab_size: int
    d_model: int = 64
    n_heads: int = 4
    enc_layers: int = 2
    dec_layers: int = 2
    d_ff: int = 256
    dec_d_ff: int = 256
    latent: int = 32
    k: int = 4
    proj_hidden: int = 64
    max_len: int = 128

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ConfigError("d_model must be divisible by n_heads")
        for name in ("vocab_size", "d_model", "n_heads", "latent", "k", "proj_hidden", "max_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")

    @classmethod
    def full_size(cls, vocab_size: int = 50265, k: int = 16) -> "ModelDims":
        """Full-size layout: 12-layer 768-d encoder, 6-layer decoders, 12 heads."""
        return cls(vocab_size=vocab_size, d_model=768, n_heads=12, enc_layers=12, dec_layers=6,
                   d_ff=3072, dec_d_ff=2048, latent=32, k=k, proj_hidden=64, max_len=514)


# ---------------------------------------------------------------------------
# parameter layout


def _attn_shapes(prefix: str, d: int) -> list[tuple[str, tuple]]:
    return [(f"{prefix}.w{n}", (d, d)) for n in "qkvo"] + [(f"{prefix}.b{n}", (d,)) for n in "qkvo"]


def _ln_shapes(prefix: str, d: int) -> list[tuple[str, tuple]]:
    return [(f"{prefix}.g", (d,)), (f"{prefix}.b", (d,))]


def _ff_shapes(prefix: str, d: int, ff: int) -> list[tuple[str, tuple]]:
    return [(f"{prefix}.w1", (d, ff)), (f"{prefix}.b1", (ff,)), (f"{prefix}.w2", (ff, d)), (f"{prefix}.b2", (d,))]


def _mlp_shapes(prefix: str, n_in: int, hidden: int, n_out: int) -> list[tuple[str, tuple]]:
    return [(f"{prefix}.w1", (n_in, hidden)), (f"{prefix}.b1", (hidden,)),
            (f"{prefix}.w2", (hidden, n_out)), (f"{prefix}.b2", (n_out,))]


def encoder_shapes(dims: ModelDims) -> list[tuple[str, tuple]]:
    d = dims.d_model
    out = [("enc.tok_emb", (dims.vocab_size, d)), ("enc.pos_emb", (dims.max_len, d))]
    for layer in range(dims.enc_layers):
        p = f"enc.layer{layer}"
        out += _ln_shapes(f"{p}.ln1", d) + _attn_shapes(f"{p}.attn", d)
        out += _ln_shapes(f"{p}.ln2", d) + _ff_shapes(f"{p}.ff", d, dims.d_ff)
    out += _ln_shapes("enc.ln_f", d)
    return out


def decoder_shapes(dims: ModelDims, lang: str) -> list[tuple[str, tuple]]:
    d = dims.d_model
    out = []
    for layer in range(dims.dec_layers):
        p = f"dec.{lang}.layer{layer}"
        out += _ln_shapes(f"{p}.ln1", d) + _attn_shapes(f"{p}.self_attn", d)
        out += _ln_shapes(f"{p}.ln2", d) + _attn_shapes(f"{p}.cross_attn", d)
        out += _ln_shapes(f"{p}.ln3", d) + _ff_shapes(f"{p}.ff", d, dims.dec_d_ff)
    out += _ln_shapes(f"dec.{lang}.ln_f", d)
    out += [(f"dec.{lang}.out.w", (d, d)), (f"dec.{lang}.out.b", (d,)),
            (f"dec.{lang}.vocab_bias", (dims.vocab_size,))]
    return out


def projector_shapes(dims: ModelDims, languages: Sequence[str]) -> list[tuple[str, tuple]]:
    flat = dims.k * dims.d_model
    h, z = dims.proj_hidden, dims.latent
    out = []
    for lang in languages:
        out += _mlp_shapes(f"proj.q.{lang}", flat, h, 2 * z)
        out += _mlp_shapes(f"proj.r.{lang}", flat, h, 2 * z)
        out += _mlp_shapes(f"proj.p.{lang}", 2 * z, h, flat)
    out += _mlp_shapes("proj.qs", flat, h, 2 * z)
    return out


def model_shapes(dims: ModelDims, languages: Sequence[str]) -> list[tuple[str, tuple]]:
    """Name and shape of every trainable array, in allocation order."""
    shapes = encoder_shapes(dims)
    for lang in languages:
        shapes += decoder_shapes(dims, lang)
    return shapes + projector_shapes(dims, languages)


def _init_array(name: str, shape: tuple, rng: np.random.Generator | None) -> np.ndarray:
    if rng is None:
        return np.zeros(shape)
    leaf = name.rsplit(".", 1)[-1]
    if name.endswith("emb"):
        # tied with the output layer, so logits start at unit scale
        return rng.normal(0.0, 1.0 / math.sqrt(shape[1]), size=shape)
    if leaf == "g":
        return np.ones(shape)
    if len(shape) == 1:
        return np.zeros(shape)
    fan_in, fan_out = shape
    if name.startswith(("proj.q.", "proj.r.", "proj.qs")) and leaf == "w2":
        # start the posteriors near N(0, I)
        return rng.normal(0.0, 0.01, size=shape)
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class ModelParams:
    """All trainable arrays plus the metadata needed to rebuild the model."""

    def __init__(self, dims: ModelDims, languages: Sequence[str], arrays: Mapping[str, nd.Tensor],
                 vocab: Vocabulary | None = None):
        self.dims = dims
        self.languages = list(languages)
        self.arrays: dict[str, nd.Tensor] = dict(arrays)
        self.vocab = vocab

    @classmethod
    def init(cls, dims: ModelDims, languages: Sequence[str], seed: int | None = 0,
             vocab: Vocabulary | None = None, zeros: bool = False) -> "ModelParams":
        """Allocate every array; ``zeros=True`` skips random init."""
        if len(languages) < 1 or len(set(languages)) != len(languages):
            raise ConfigError("languages must be non-empty and distinct")
        rng = None if zeros else np.random.default_rng(seed)
        arrays = {name: nd.Tensor(_init_array(name, shape, rng), requires_grad=True)
                  for name, shape in model_shapes(dims, languages)}
        return cls(dims, languages, arrays, vocab)

    def __getitem__(self, name: str) -> nd.Tensor:
        return self.arrays[name]

    def names(self, prefix: str = "") -> list[str]:
        return [n for n in self.arrays if n.startswith(prefix)]

    def count(self, prefix: str = "") -> int:
        return sum(self.arrays[n].size for n in self.names(prefix))

    @property
    def n_encoder_sets(self) -> int:
        return len({n.split(".")[0] for n in self.arrays if n.startswith("enc.")})

    def check_language(self, lang: str) -> None:
        if lang not in self.languages:
            raise UnknownLanguage(lang)

    def snapshot(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self.arrays.items()}

    def load_arrays(self, arrays: Mapping[str, np.ndarray]) -> None:
        for n, v in arrays.items():
            self.arrays[n].assign(v)


# ---------------------------------------------------------------------------
# building blocks


def linear(x: nd.Tensor, w: nd.Tensor, b: nd.Tensor) -> nd.Tensor:
    return nd.matmul(x, w) + b


def mlp(P: ModelParams, prefix: str, x: nd.Tensor) -> nd.Tensor:
    h = nd.tanh(linear(x, P[f"{prefix}.w1"], P[f"{prefix}.b1"]))
    return linear(h, P[f"{prefix}.w2"], P[f"{prefix}.b2"])


def layer_norm(P: ModelParams, prefix: str, x: nd.Tensor) -> nd.Tensor:
    return nd.layer_norm(x, P[f"{prefix}.g"], P[f"{prefix}.b"])


def _split_heads(x: nd.Tensor, h: int) -> nd.Tensor:
    b, t, d = x.shape
    return nd.transpose(nd.reshape(x, (b, t, h, d // h)), (0, 2, 1, 3))


def _merge_heads(x: nd.Tensor) -> nd.Tensor:
    b, h, t, dh = x.shape
    return nd.reshape(nd.transpose(x, (0, 2, 1, 3)), (b, t, h * dh))


def attention(P: ModelParams, prefix: str, xq: nd.Tensor, xkv: nd.Tensor, bias: np.ndarray) -> nd.Tensor:
    """Multi-head attention; ``bias`` is an additive mask broadcastable to (B,H,Tq,Tk)."""
    h = P.dims.n_heads
    q = _split_heads(linear(xq, P[f"{prefix}.wq"], P[f"{prefix}.bq"]), h)
    k = _split_heads(linear(xkv, P[f"{prefix}.wk"], P[f"{prefix}.bk"]), h)
    v = _split_heads(linear(xkv, P[f"{prefix}.wv"], P[f"{prefix}.bv"]), h)
    scale = 1.0 / math.sqrt(q.shape[-1])
    scores = nd.matmul(q, nd.swapaxes(k, -1, -2)) * scale + bias
    ctx = nd.matmul(nd.softmax(scores, axis=-1), v)
    return linear(_merge_heads(ctx), P[f"{prefix}.wo"], P[f"{prefix}.bo"])


def feed_forward(P: ModelParams, prefix: str, x: nd.Tensor) -> nd.Tensor:
    return linear(nd.relu(linear(x, P[f"{prefix}.w1"], P[f"{prefix}.b1"])), P[f"{prefix}.w2"], P[f"{prefix}.b2"])


def _key_bias(mask: np.ndarray) -> np.ndarray:
    """(B, Tk) boolean keep-mask -> additive (B, 1, 1, Tk)."""
    return np.where(mask, 0.0, NEG)[:, None, None, :]


def _causal_bias(t: int) -> np.ndarray:
    return np.triu(np.full((t, t), NEG), k=1)


def _embed(P: ModelParams, ids: np.ndarray) -> nd.Tensor:
    t = ids.shape[1]
    if t > P.dims.max_len:
        raise MalformedSequence(f"sequence length {t} exceeds max_len {P.dims.max_len}")
    return nd.embedding(P["enc.tok_emb"], ids) + P["enc.pos_emb"][:t]


# ---------------------------------------------------------------------------
# encoder


@dataclass
class EncodedInstance:
    """Encoder output split by position: flag block and code block (batched)."""

    flag: nd.Tensor          # (B, k, d)
    code: nd.Tensor          # (B, c_max, d)
    code_mask: np.ndarray    # (B, c_max) True where a real code token sits
    langs: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return self.flag.shape[0]

    def rows(self, idx) -> "EncodedInstance":
        idx = np.asarray(idx, dtype=np.int64)
        return EncodedInstance(nd.slice_(self.flag, idx), nd.slice_(self.code, idx),
                               self.code_mask[idx], [self.langs[int(i)] for i in idx] if self.langs else [])


def _validate_sequence(P: ModelParams, seq: Sequence[int], vocab: Vocabulary) -> str:
    k = P.dims.k
    if len(seq) < k + 2 or seq[0] != vocab.stoi[CLS] or seq[-1] != vocab.stoi[SEP]:
        raise MalformedSequence("sequence must be [CLS] flags... code... [SEP]")
    flags = list(seq[1:k + 1])
    for lang in P.languages:
        if flags == vocab.flag_ids(lang):
            return lang
    raise MalformedSequence("flag block does not match any registered language")


def encode(P: ModelParams, sequences: Sequence[Sequence[int]], vocab: Vocabulary | None = None) -> EncodedInstance:
    """Run the shared encoder over a batch of input-format id sequences."""
    vocab = vocab or P.vocab
    if vocab is None:
        raise ConfigError("encode needs a vocabulary")
    if sequences and isinstance(sequences[0], (int, np.integer)):
        sequences = [sequences]
    langs = [_validate_sequence(P, s, vocab) for s in sequences]
    k = P.dims.k
    lengths = np.array([len(s) for s in sequences])
    t = int(lengths.max())
    ids = np.full((len(sequences), t), vocab.pad_id, dtype=np.int64)
    for row, s in enumerate(sequences):
        ids[row, :len(s)] = s
    keep = np.arange(t)[None, :] < lengths[:, None]
    x = _embed(P, ids)
    bias = _key_bias(keep)
    for layer in range(P.dims.enc_layers):
        p = f"enc.layer{layer}"
        h = layer_norm(P, f"{p}.ln1", x)
        x = x + attention(P, f"{p}.attn", h, h, bias)
        x = x + feed_forward(P, f"{p}.ff", layer_norm(P, f"{p}.ln2", x))
    x = layer_norm(P, "enc.ln_f", x)
    c_max = t - k - 2
    code_len = lengths - k - 2
    code_mask = np.arange(c_max)[None, :] < code_len[:, None]
    return EncodedInstance(x[:, 1:1 + k], x[:, 1 + k:1 + k + c_max], code_mask, langs)


# ---------------------------------------------------------------------------
# variational projectors


def _gaussian_head(out: nd.Tensor, latent: int) -> DiagGaussian:
    return DiagGaussian.make(out[..., :latent], out[..., latent:])


def _flatten_flag(P: ModelParams, flag: nd.Tensor) -> nd.Tensor:
    flag = nd.as_tensor(flag)
    k, d = P.dims.k, P.dims.d_model
    if flag.shape[-2:] != (k, d):
        raise DimMismatch(f"flag block {flag.shape} is not (..., {k}, {d})")
    return nd.reshape(flag, flag.shape[:-2] + (k * d,))


def infer_specific(P: ModelParams, flag: nd.Tensor, lang: str) -> DiagGaussian:
    """q_i(z^i | x^i)."""
    P.check_language(lang)
    return _gaussian_head(mlp(P, f"proj.q.{lang}", _flatten_flag(P, flag)), P.dims.latent)


def infer_shift(P: ModelParams, flag: nd.Tensor, lang: str) -> DiagGaussian:
    """r_i(z^s | x^i): shared-latent estimate from one language alone."""
    P.check_language(lang)
    return _gaussian_head(mlp(P, f"proj.r.{lang}", _flatten_flag(P, flag)), P.dims.latent)


def infer_shared(P: ModelParams, flags: Mapping[str, nd.Tensor]) -> DiagGaussian:
    """q_s(z^s | x^1..x^N) over the present languages.

    Flag blocks are mean-pooled in registry order, so the result does not
    depend on the order the caller lists them in.
    """
    if len(flags) < 2:
        raise TooFewLanguages("shared posterior needs at least two languages")
    for lang in flags:
        P.check_language(lang)
    ordered = [flags[lang] for lang in P.languages if lang in flags]
    pooled = ordered[0]
    for f in ordered[1:]:
        pooled = pooled + f
    pooled = pooled * (1.0 / len(ordered))
    return _gaussian_head(mlp(P, "proj.qs", _flatten_flag(P, pooled)), P.dims.latent)


def reconstruct_flag(P: ModelParams, z_specific, z_shared, lang: str) -> nd.Tensor:
    """p_i(x^i | z^i, z^s) mean: a (..., k, d) flag block."""
    P.check_language(lang)
    z_specific, z_shared = nd.as_tensor(z_specific), nd.as_tensor(z_shared)
    if z_specific.shape[-1] != P.dims.latent or z_shared.shape[-1] != P.dims.latent:
        raise DimMismatch(f"latents must have dim {P.dims.latent}")
    if z_specific.shape[:-1] != z_shared.shape[:-1]:
        raise DimMismatch("latent batch shapes differ")
    out = mlp(P, f"proj.p.{lang}", nd.concat([z_specific, z_shared], axis=-1))
    return nd.reshape(out, out.shape[:-1] + (P.dims.k, P.dims.d_model))


# ---------------------------------------------------------------------------
# decoders


def _memory(flag: nd.Tensor, code: nd.Tensor, code_mask: np.ndarray) -> tuple[nd.Tensor, np.ndarray]:
    mem = nd.concat([flag, code], axis=1)
    keep = np.concatenate([np.ones((code_mask.shape[0], flag.shape[1]), dtype=bool), code_mask], axis=1)
    return mem, keep


def _decoder_stack(P: ModelParams, lang: str, inp: np.ndarray, mem: nd.Tensor, mem_bias: np.ndarray) -> nd.Tensor:
    x = _embed(P, inp)
    self_bias = _causal_bias(inp.shape[1])
    for layer in range(P.dims.dec_layers):
        p = f"dec.{lang}.layer{layer}"
        h = layer_norm(P, f"{p}.ln1", x)
        x = x + attention(P, f"{p}.self_attn", h, h, self_bias)
        x = x + attention(P, f"{p}.cross_attn", layer_norm(P, f"{p}.ln2", x), mem, mem_bias)
        x = x + feed_forward(P, f"{p}.ff", layer_norm(P, f"{p}.ln3", x))
    x = layer_norm(P, f"dec.{lang}.ln_f", x)
    h = nd.tanh(linear(x, P[f"dec.{lang}.out.w"], P[f"dec.{lang}.out.b"]))
    return nd.matmul(h, nd.transpose(P["enc.tok_emb"], (1, 0))) + P[f"dec.{lang}.vocab_bias"]


def decode_teacher(P: ModelParams, target_flag: nd.Tensor, code: nd.Tensor, code_mask: np.ndarray,
                   lang: str, teacher_inputs: np.ndarray) -> nd.Tensor:
    """Per-position logits (B, T, V) for decoder inputs ``[BOS] t_1 .. t_{T-1}``."""
    P.check_language(lang)
    teacher_inputs = np.asarray(teacher_inputs, dtype=np.int64)
    if teacher_inputs.ndim == 1:
        teacher_inputs = teacher_inputs[None, :]
    mem, keep = _memory(nd.as_tensor(target_flag), nd.as_tensor(code), np.asarray(code_mask, dtype=bool))
    return _decoder_stack(P, lang, teacher_inputs, mem, _key_bias(keep))


@dataclass(frozen=True)
class Generation:
    ids: tuple[int, ...]
    truncated: bool  # hit max length without emitting EOS


def generate(P: ModelParams, target_flag: nd.Tensor, code: nd.Tensor, code_mask: np.ndarray, lang: str,
             max_len: int = 40, beam: int = 1, vocab: Vocabulary | None = None) -> list[Generation]:
    """Greedy (``beam=1``) or beam-search decoding for a batch of memories."""
    P.check_language(lang)
    vocab = vocab or P.vocab
    if vocab is None:
        raise ConfigError("generation needs a vocabulary")
    if max_len < 1:
        raise ConfigError("max_len must be >= 1")
    max_len = min(max_len, P.dims.max_len)  # positions available to the decoder, BOS included
    with nd.no_grad():
        mem, keep = _memory(nd.as_tensor(target_flag), nd.as_tensor(code), np.asarray(code_mask, dtype=bool))
        if beam <= 1:
            return _greedy(P, lang, mem, keep, max_len, vocab)
        return [_beam_one(P, lang, mem[b:b + 1], keep[b:b + 1], max_len, beam, vocab) for b in range(mem.shape[0])]


def _banned(vocab: Vocabulary) -> np.ndarray:
    """Token ids a decoder may never emit (PAD, BOS, CLS, SEP, flags)."""
    ban = np.zeros(len(vocab), dtype=bool)
    for i, t in enumerate(vocab.itos):
        if t.startswith("[") and t.endswith("]") and t not in ("[EOS]",) and len(t) > 1 and (
                t.startswith("[F:") or t in ("[PAD]", "[BOS]", "[CLS]", "[SEP]")):
            ban[i] = True
    return ban


def _greedy(P, lang, mem, keep, max_len, vocab) -> list[Generation]:
    b = mem.shape[0]
    bias = _key_bias(keep)
    ban = _banned(vocab)
    seqs = np.full((b, 1), vocab.bos_id, dtype=np.int64)
    done = np.zeros(b, dtype=bool)
    out: list[list[int]] = [[] for _ in range(b)]
    for _ in range(max_len):
        logits = _decoder_stack(P, lang, seqs, mem, bias).data[:, -1, :]
        logits = np.where(ban, -np.inf, logits)
        nxt = logits.argmax(axis=-1)
        for row in range(b):
            if not done[row]:
                if nxt[row] == vocab.eos_id:
                    done[row] = True
                else:
                    out[row].append(int(nxt[row]))
        if done.all():
            break
        seqs = np.concatenate([seqs, nxt[:, None]], axis=1)
    return [Generation(tuple(o), not d) for o, d in zip(out, done)]


def _beam_one(P, lang, mem, keep, max_len, width, vocab) -> Generation:
    ban = _banned(vocab)
    beams = [((vocab.bos_id,), 0.0)]
    finished: list[tuple[tuple[int, ...], float]] = []
    for _ in range(max_len):
        seqs = np.array([s for s, _ in beams], dtype=np.int64)
        n = len(beams)
        m = nd.concat([mem] * n, axis=0) if n > 1 else mem
        logits = _decoder_stack(P, lang, seqs, m, _key_bias(np.repeat(keep, n, axis=0))).data[:, -1, :]
        logits = np.where(ban, -np.inf, logits)
        logp = logits - logits.max(axis=-1, keepdims=True)
        logp = logp - np.log(np.exp(logp).sum(axis=-1, keepdims=True))
        cands = []
        for (s, score), row in zip(beams, logp):
            for tok in np.argsort(-row, kind="stable")[:width]:
                cands.append((s + (int(tok),), score + float(row[tok])))
        cands.sort(key=lambda c: -c[1])
        beams = []
        for s, score in cands:
            if s[-1] == vocab.eos_id:
                finished.append((s, score))
            else:
                beams.append((s, score))
            if len(beams) == width:
                break
        if len(finished) >= width or not beams:
            break
    if finished:
        best = max(finished, key=lambda c: c[1] / len(c[0]))
        return Generation(tuple(best[0][1:-1]), False)
    best = max(beams, key=lambda c: c[1])
    return Generation(tuple(best[0][1:]), True)


# ---------------------------------------------------------------------------
# checkpoints: npz of little-endian float64 arrays plus a JSON header


def save_checkpoint(P: ModelParams, path: str | Path, extra: Mapping | None = None) -> None:
    meta = {
        "format_version": FORMAT_VERSION,
        "dims": asdict(P.dims),
        "languages": P.languages,
        "vocab": P.vocab.to_dict() if P.vocab is not None else None,
        "extra": dict(extra or {}),
    }
    arrays = {f"param/{n}": t.data.astype("<f8") for n, t in P.arrays.items()}
    arrays["__meta__"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp.npz")
    np.savez(tmp, **arrays)
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> ModelParams:
    with np.load(path, allow_pickle=False) as z:
        if "__meta__" not in z:
            raise CheckpointFormatError("missing header")
        meta = json.loads(bytes(z["__meta__"]).decode("utf-8"))
        if meta.get("format_version") != FORMAT_VERSION:
            raise CheckpointFormatError(f"format_version {meta.get('format_version')} != {FORMAT_VERSION}")
        dims = ModelDims(**meta["dims"])
        vocab = Vocabulary.from_dict(meta["vocab"]) if meta.get("vocab") else None
        arrays = {k[len("param/"):]: nd.Tensor(z[k].astype(np.float64), requires_grad=True)
                  for k in z.files if k.startswith("param/")}
    P = ModelParams(dims, meta["languages"], arrays, vocab)
    expected = {n for n, _ in encoder_shapes(dims)}
    if not expected <= set(arrays):
        raise CheckpointFormatError("checkpoint is missing encoder arrays")
    return P

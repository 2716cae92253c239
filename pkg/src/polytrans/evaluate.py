"""Translation, corpus BLEU-4, per-direction evaluation and parameter accounting."""
from __future__ import annotations

import csv
import io
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import model as M
from . import ndtensor as nd
from .corpus import SemiParallelCorpus, derive_seed, encode_input
from .errors import ConfigError, EmptyCorpus, LengthMismatch, NoPairs, UnknownLanguage


# ---------------------------------------------------------------------------
# translation


@dataclass(frozen=True)
class DecodeConfig:
    beam: int = 1
    max_len: int = 40
    deterministic: bool = True  # prior mean for the target latent; otherwise a seeded draw
    seed: int = 0


@dataclass(frozen=True)
class TranslationRequest:
    tokens: tuple[str, ...]
    src: str
    tgt: str
    config: DecodeConfig = DecodeConfig()

    def __post_init__(self):
        if self.src == self.tgt:
            raise ConfigError("source and target language must differ")
        if self.config.max_len < 1:
            raise ConfigError("max_len must be >= 1")


def translate_batch(P: M.ModelParams, sources: Sequence[Sequence[str]], src: str, tgt: str,
                    config: DecodeConfig = DecodeConfig()) -> list[list[str]]:
    """Translate many source token sequences from ``src`` to ``tgt``.

    Shared latent: mean of the source's shift-shared projector.  Target
    latent: the prior mean (deterministic) or a draw seeded per position.
    """
    if src == tgt:
        raise ConfigError("source and target language must differ")
    for lang in (src, tgt):
        if lang not in P.languages:
            raise UnknownLanguage(lang)
    if not sources:
        return []
    v = P.vocab
    seqs = [encode_input(v, list(s), src) for s in sources]
    with nd.no_grad():
        enc = M.encode(P, seqs)
        z_shared = M.infer_shift(P, enc.flag, src).mean
        if config.deterministic:
            z_tgt = np.zeros(z_shared.shape)
        else:
            rng = np.random.default_rng(derive_seed(config.seed, "prior", src, tgt))
            z_tgt = rng.standard_normal(z_shared.shape)
        x_hat = M.reconstruct_flag(P, z_tgt, z_shared, tgt)
        gens = M.generate(P, x_hat, enc.code, enc.code_mask, tgt, config.max_len, config.beam)
    return [v.tokens(g.ids) for g in gens]


def translate(req: TranslationRequest, P: M.ModelParams) -> list[str]:
    return translate_batch(P, [req.tokens], req.src, req.tgt, req.config)[0]


# ---------------------------------------------------------------------------
# BLEU


@dataclass(frozen=True)
class BleuReport:
    bleu: float
    precisions: tuple[float, ...]
    brevity_penalty: float
    candidate_length: int
    reference_length: int
    matches: tuple[int, ...] = ()
    totals: tuple[int, ...] = ()


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu4(candidates: Sequence[Sequence[str]], references: Sequence[Sequence[str]], smooth: bool = True) -> BleuReport:
    """Corpus BLEU-4 in [0, 100].

    Clipped n-gram matches and totals are pooled over the corpus; a zero match
    count is replaced by add-one smoothing ``1 / (total + 1)`` when ``smooth``.
    """
    if len(candidates) != len(references):
        raise LengthMismatch(f"{len(candidates)} candidates vs {len(references)} references")
    if not candidates:
        raise EmptyCorpus("BLEU needs at least one sentence pair")
    matches, totals = [0] * 4, [0] * 4
    c_len = r_len = 0
    for cand, ref in zip(candidates, references):
        c_len += len(cand)
        r_len += len(ref)
        for n in range(1, 5):
            c, r = _ngrams(cand, n), _ngrams(ref, n)
            matches[n - 1] += sum(min(cnt, r[g]) for g, cnt in c.items())
            totals[n - 1] += max(len(cand) - n + 1, 0)
    precisions = []
    for m, t in zip(matches, totals):
        if m > 0:
            precisions.append(m / t)
        elif smooth:
            precisions.append(1.0 / (t + 1))
        else:
            precisions.append(0.0)
    if c_len == 0:
        bp = 0.0
    else:
        bp = min(1.0, math.exp(1.0 - r_len / c_len))
    if min(precisions) == 0.0 or bp == 0.0:
        score = 0.0
    else:
        score = 100.0 * bp * math.exp(sum(math.log(p) for p in precisions) / 4.0)
    return BleuReport(score, tuple(precisions), bp, c_len, r_len, tuple(matches), tuple(totals))


# ---------------------------------------------------------------------------
# evaluation matrix


@dataclass
class EvalMatrix:
    languages: list[str]
    bleu: dict[tuple[str, str], float] = field(default_factory=dict)
    naive: dict[tuple[str, str], float] = field(default_factory=dict)
    pairs: dict[tuple[str, str], int] = field(default_factory=dict)

    @staticmethod
    def _csv(languages, cells) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["src\\tgt"] + languages)
        for s in languages:
            w.writerow([s] + ["" if (s, t) not in cells else repr(float(cells[(s, t)])) for t in languages])
        return buf.getvalue()

    def bleu_csv(self) -> str:
        return self._csv(self.languages, self.bleu)

    def naive_csv(self) -> str:
        return self._csv(self.languages, self.naive)

    def mean_bleu(self) -> float:
        return float(np.mean(list(self.bleu.values()))) if self.bleu else 0.0


def direction_pairs(corpus: SemiParallelCorpus, src: str, tgt: str) -> list[tuple[list[str], list[str]]]:
    pairs = [(s.tokens[src], s.tokens[tgt]) for s in corpus.samples if src in s.tokens and tgt in s.tokens]
    if not pairs:
        raise NoPairs(f"no test pairs for {src}->{tgt}")
    return pairs


def evaluate_matrix(corpus: SemiParallelCorpus, P: M.ModelParams, config: DecodeConfig = DecodeConfig(),
                    directions: Sequence[tuple[str, str]] | None = None, workers: int = 1,
                    chunk: int = 50) -> EvalMatrix:
    """BLEU for every ordered language pair; absent pairs are left out (not zero)."""
    langs = list(P.languages)
    directions = directions or [(s, t) for s in langs for t in langs if s != t]
    out = EvalMatrix(langs)
    jobs = []
    for s, t in directions:
        try:
            pairs = direction_pairs(corpus, s, t)
        except NoPairs:
            continue
        out.pairs[(s, t)] = len(pairs)
        for i in range(0, len(pairs), chunk):
            jobs.append((s, t, [p[0] for p in pairs[i:i + chunk]]))
    run = lambda job: translate_batch(P, job[2], job[0], job[1], config)
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            hyps = list(ex.map(run, jobs))
    else:
        hyps = [run(j) for j in jobs]
    by_dir: dict[tuple[str, str], list] = {}
    for job, h in zip(jobs, hyps):
        by_dir.setdefault((job[0], job[1]), []).extend(h)
    for s, t in directions:
        if (s, t) not in by_dir:
            continue
        pairs = direction_pairs(corpus, s, t)
        refs = [p[1] for p in pairs]
        out.bleu[(s, t)] = bleu4(by_dir[(s, t)], refs).bleu
        out.naive[(s, t)] = bleu4([p[0] for p in pairs], refs).bleu
    return out


def naive_copy_bleu(corpus: SemiParallelCorpus, src: str, tgt: str) -> float:
    pairs = direction_pairs(corpus, src, tgt)
    return bleu4([p[0] for p in pairs], [p[1] for p in pairs]).bleu


# ---------------------------------------------------------------------------
# parameter accounting


@dataclass(frozen=True)
class ParamReport:
    N: int
    encoder: int
    decoder: int           # one language's decoder
    projectors: int        # all projector arrays for N languages
    pairwise_models: int   # N(N-1) directed encoder-decoder models
    pairwise_total: int
    unified_total: int
    unified_layout: int

    @property
    def ratio(self) -> float:
        return self.unified_total / self.pairwise_total

    def csv(self) -> str:
        return (f"N,paradigm,total_params\n{self.N},pairwise,{self.pairwise_total}\n"
                f"{self.N},unified,{self.unified_total}\n")


def _layout_size(shapes, prefix: str = "") -> int:
    return sum(math.prod(shape) for name, shape in shapes if name.startswith(prefix))


def count_params(dims: M.ModelDims, N: int) -> ParamReport:
    """Count the array layout of a unified model and of one pairwise model.

    Counting works on shapes only, so full-size layouts cost no memory.
    """
    if N < 2:
        raise ConfigError("parameter comparison needs N >= 2")
    langs = [f"lang{i}" for i in range(1, N + 1)]
    shapes = M.model_shapes(dims, langs)
    enc = _layout_size(shapes, "enc.")
    dec = _layout_size(shapes, f"dec.{langs[0]}.")
    proj = _layout_size(shapes, "proj.")
    decs = [_layout_size(shapes, f"dec.{l}.") for l in langs]
    if len(set(decs)) != 1:
        raise ConfigError("decoders differ in size")
    # one direction model of the pairwise paradigm: encoder + a single decoder
    pair = M.model_shapes(dims, ["src"])
    pair_size = _layout_size(pair, "enc.") + _layout_size(pair, "dec.src.")
    models = N * (N - 1)
    unified = enc + N * dec + proj
    return ParamReport(N, enc, dec, proj, models, models * pair_size, unified, _layout_size(shapes))


def params_csv(reports: Sequence[ParamReport]) -> str:
    lines = ["N,paradigm,total_params"]
    for r in reports:
        lines += [f"{r.N},pairwise,{r.pairwise_total}", f"{r.N},unified,{r.unified_total}"]
    return "\n".join(lines) + "\n"


def params_detail_csv(reports: Sequence[ParamReport]) -> str:
    """Per-N component counts, direction-model count and unified/pairwise ratio."""
    lines = ["N,pairwise_directions,encoder,decoder,projectors,pairwise_total,unified_total,ratio"]
    for r in reports:
        lines.append(f"{r.N},{r.pairwise_models},{r.encoder},{r.decoder},{r.projectors},{r.pairwise_total},"
                     f"{r.unified_total},{r.ratio!r}")
    return "\n".join(lines) + "\n"


def params_svg(reports: Sequence[ParamReport], width: int = 480, height: int = 320) -> str:
    """Line chart of total parameters against N for both paradigms."""
    pad = 50
    ns = [r.N for r in reports]
    ymax = max(r.pairwise_total for r in reports) or 1
    xmin, xmax = min(ns), max(ns)
    span = max(xmax - xmin, 1)

    def xy(n, v):
        x = pad + (n - xmin) / span * (width - 2 * pad)
        y = height - pad - v / ymax * (height - 2 * pad)
        return f"{x:.1f},{y:.1f}"

    series = [("pairwise", "#c0392b", [r.pairwise_total for r in reports]),
              ("unified", "#2471a3", [r.unified_total for r in reports])]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
             f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
             f'<text x="{width / 2}" y="{height - 12}" text-anchor="middle" font-size="12">N languages</text>',
             f'<text x="12" y="{pad - 15}" font-size="12">params (max {ymax:.3g})</text>']
    for n in ns:
        x = xy(n, 0).split(",")[0]
        parts.append(f'<text x="{x}" y="{height - pad + 15}" text-anchor="middle" font-size="10">{n}</text>')
    for i, (name, color, vals) in enumerate(series):
        pts = " ".join(xy(n, v) for n, v in zip(ns, vals))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>')
        parts.append(f'<text x="{width - pad - 80}" y="{pad + 15 * i}" fill="{color}" font-size="12">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"

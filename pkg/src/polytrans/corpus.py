"""Semi-parallel multilingual corpora: generation, vocabulary, file I/O, statistics."""
from __future__ import annotations

import base64
import csv
import hashlib
import io
from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import toylang
from .errors import ConfigError, DuplicateId, ParseError, UnknownLanguage, UnknownToken

PAD, BOS, EOS, CLS, SEP = "[PAD]", "[BOS]", "[EOS]", "[CLS]", "[SEP]"
SPECIALS = (PAD, BOS, EOS, CLS, SEP)


def derive_seed(seed: int, *names) -> int:
    """Stable 63-bit sub-seed for ``(seed, names...)``."""
    key = ":".join([str(seed)] + [str(n) for n in names]).encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little") >> 1


def flag_token(lang: str, j: int) -> str:
    return f"[F:{lang}:{j}]"


class Vocabulary:
    """Token <-> id map.  PAD is 0; ids are contiguous."""

    def __init__(self, languages: Sequence[str], k: int, tokens: Iterable[str]):
        if k < 1:
            raise ConfigError("flag length k must be >= 1")
        self.languages = list(languages)
        self.k = int(k)
        itos = list(SPECIALS)
        for lang in self.languages:
            itos += [flag_token(lang, j) for j in range(1, k + 1)]
        for tok in tokens:
            if tok not in itos:
                itos.append(tok)
        self.itos = itos
        self.stoi = {t: i for i, t in enumerate(itos)}
        if len(self.stoi) != len(itos):
            raise ConfigError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.itos)

    @property
    def pad_id(self) -> int:
        return self.stoi[PAD]

    @property
    def bos_id(self) -> int:
        return self.stoi[BOS]

    @property
    def eos_id(self) -> int:
        return self.stoi[EOS]

    def lang_id(self, lang: str) -> int:
        """1-based language id in the registry."""
        try:
            return self.languages.index(lang) + 1
        except ValueError:
            raise UnknownLanguage(lang) from None

    def flag_ids(self, lang: str) -> list[int]:
        self.lang_id(lang)
        return [self.stoi[flag_token(lang, j)] for j in range(1, self.k + 1)]

    def ids(self, tokens: Sequence[str]) -> list[int]:
        out = []
        for t in tokens:
            if t not in self.stoi or t in SPECIALS or t.startswith("[F:"):
                raise UnknownToken(t)
            out.append(self.stoi[t])
        return out

    def tokens(self, ids: Sequence[int]) -> list[str]:
        return [self.itos[i] for i in ids]

    def to_dict(self) -> dict:
        return {"languages": self.languages, "k": self.k, "itos": self.itos}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Vocabulary":
        v = cls(d["languages"], d["k"], [])
        v.itos = list(d["itos"])
        v.stoi = {t: i for i, t in enumerate(v.itos)}
        return v

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.to_dict() == other.to_dict()


def toy_vocabulary(languages: Sequence[str] = toylang.LANGUAGES, k: int = 4) -> Vocabulary:
    for lang in languages:
        if lang not in toylang.KEYWORDS:
            raise UnknownLanguage(lang)
    toks = list(toylang.SHARED_TOKENS)
    for lang in languages:
        toks += list(toylang.KEYWORDS[lang])
    return Vocabulary(languages, k, toks)


def encode_input(vocab: Vocabulary, tokens: Sequence[str], lang: str, k: int | None = None) -> list[int]:
    """``[CLS] flag_1..flag_k code_1..code_c [SEP]`` as ids."""
    if k is not None and k != vocab.k:
        raise ConfigError(f"vocabulary has k={vocab.k}, asked for {k}")
    flags = vocab.flag_ids(lang)
    return [vocab.stoi[CLS]] + flags + vocab.ids(tokens) + [vocab.stoi[SEP]]


# ---------------------------------------------------------------------------
# samples and corpora


@dataclass
class MultiParallelSample:
    id: str
    tokens: dict[str, list[str]]  # absent languages are simply not keys
    level: str = "program"
    task: str | None = None

    def __post_init__(self):
        if not self.tokens:
            raise ConfigError(f"sample {self.id} has no language present")

    def present(self, languages: Sequence[str]) -> list[str]:
        return [lang for lang in languages if lang in self.tokens]

    def is_multi_parallel(self, languages: Sequence[str]) -> bool:
        return all(lang in self.tokens for lang in languages)


@dataclass
class SemiParallelCorpus:
    samples: list[MultiParallelSample]
    vocab: Vocabulary
    split: str = "train"

    @property
    def languages(self) -> list[str]:
        return self.vocab.languages

    def __len__(self) -> int:
        return len(self.samples)

    def multi_parallel(self) -> list[MultiParallelSample]:
        return [s for s in self.samples if s.is_multi_parallel(self.languages)]

    def partially_missing(self) -> list[MultiParallelSample]:
        return [s for s in self.samples if not s.is_multi_parallel(self.languages)]

    def subset(self, samples: list[MultiParallelSample]) -> "SemiParallelCorpus":
        return SemiParallelCorpus(list(samples), self.vocab, self.split)

    def pool(self, lang: str) -> list[MultiParallelSample]:
        return [s for s in self.samples if lang in s.tokens]


@dataclass
class CorpusConfig:
    languages: tuple[str, ...] = toylang.LANGUAGES
    n_samples: int = 1000
    missing_rates: tuple[float, ...] | None = None
    shift_profiles: dict[str, dict[str, float]] = field(default_factory=dict)
    base_task_weights: dict[str, float] = field(default_factory=lambda: {"arith": 0.5, "loop": 0.5})
    k: int = 4
    max_tokens: int = 32
    seed: int = 0

    def validate(self) -> None:
        n = len(self.languages)
        if n < 2:
            raise ConfigError("need at least two languages")
        if len(set(self.languages)) != n:
            raise ConfigError("duplicate languages")
        for lang in self.languages:
            if lang not in toylang.KEYWORDS:
                raise ConfigError(f"no toy grammar for language {lang!r}")
        rates = self.rates()
        if len(rates) != n or any(not 0.0 <= r < 1.0 for r in rates):
            raise ConfigError("missing rates must be one per language, each in [0, 1)")
        if self.n_samples < 0:
            raise ConfigError("n_samples must be >= 0")
        if set(self.base_task_weights) - set(toylang.TASKS):
            raise ConfigError("unknown task in base weights")
        for lang, prof in self.shift_profiles.items():
            if lang not in self.languages:
                raise ConfigError(f"shift profile for unregistered language {lang!r}")
            if set(prof) - set(toylang.TASKS) or any(w < 0 for w in prof.values()) or sum(prof.values()) <= 0:
                raise ConfigError(f"bad shift profile for {lang!r}")

    def rates(self) -> tuple[float, ...]:
        if self.missing_rates is None:
            return tuple(0.0 for _ in self.languages)
        return tuple(float(r) for r in self.missing_rates)


def _keep_probabilities(cfg: CorpusConfig) -> dict[str, dict[str, float]]:
    """Per-language, per-task probability of keeping an instance.

    Without a shift profile this is ``1 - rate``.  With a profile w the keep
    probability is ``(1 - rate) * w(t) / base(t)`` (clipped at 1), so the task
    mix among present instances follows w while the overall presence rate stays
    at ``1 - rate`` whenever no clipping is needed.
    """
    base_total = sum(cfg.base_task_weights.values())
    base = {t: w / base_total for t, w in cfg.base_task_weights.items()}
    out = {}
    for lang, rate in zip(cfg.languages, cfg.rates()):
        prof = cfg.shift_profiles.get(lang)
        if prof is None:
            out[lang] = {t: 1.0 - rate for t in base}
            continue
        total = sum(prof.values())
        out[lang] = {
            t: min(1.0, (1.0 - rate) * (prof.get(t, 0.0) / total) / base[t]) if base[t] > 0 else 0.0
            for t in base
        }
    return out


def generate_corpus(cfg: CorpusConfig, split: str = "train") -> SemiParallelCorpus:
    """Render random programs in every language, then drop instances.

    Drops are independent per (sample, language) with the configured rates
    (modulated by task when a shift profile is set); a sample never loses its
    last remaining language.
    """
    cfg.validate()
    vocab = toy_vocabulary(cfg.languages, cfg.k)
    rng = np.random.default_rng(derive_seed(cfg.seed, "corpus", split))
    tasks = list(cfg.base_task_weights)
    weights = np.array([cfg.base_task_weights[t] for t in tasks], dtype=float)
    weights /= weights.sum()
    keep = _keep_probabilities(cfg)
    samples = []
    for n in range(cfg.n_samples):
        task = tasks[int(rng.choice(len(tasks), p=weights))]
        prog = toylang.random_program(rng, task, cfg.max_tokens)
        u = rng.random(len(cfg.languages))
        present = [lang for lang, ui in zip(cfg.languages, u) if ui < keep[lang][task]]
        if not present:
            # never drop the last remaining language: keep the one closest to surviving
            margins = [ui - keep[lang][task] for lang, ui in zip(cfg.languages, u)]
            present = [cfg.languages[int(np.argmin(margins))]]
        toks = {lang: toylang.render(prog, lang) for lang in present}
        samples.append(MultiParallelSample(f"{split}-{n:05d}", toks, "program", task))
    return SemiParallelCorpus(samples, vocab, split)


def generate_splits(cfg: CorpusConfig, n_train: int, n_test: int, n_val: int = 0) -> dict[str, SemiParallelCorpus]:
    """Train split with the configured drops; val/test splits fully parallel."""
    from dataclasses import replace

    out = {"train": generate_corpus(replace(cfg, n_samples=n_train), "train")}
    clean = replace(cfg, missing_rates=None, shift_profiles={})
    if n_val:
        out["val"] = generate_corpus(replace(clean, n_samples=n_val), "val")
    out["test"] = generate_corpus(replace(clean, n_samples=n_test), "test")
    return out


# ---------------------------------------------------------------------------
# statistics


@dataclass
class CorpusStats:
    languages: list[str]
    counts: dict[str, int]
    pairwise: np.ndarray  # symmetric, zero diagonal
    n_samples: int
    multi_parallel_fraction: float
    bilingual_parallel_fraction: float  # sum of pair counts / (samples * C(N, 2))

    def counts_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["lang", "count"])
        for lang in self.languages:
            w.writerow([lang, self.counts[lang]])
        return buf.getvalue()

    def pairs_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["lang_i", "lang_j", "pairs"])
        for a, b in combinations(range(len(self.languages)), 2):
            w.writerow([self.languages[a], self.languages[b], int(self.pairwise[a, b])])
        return buf.getvalue()


def stats(c: SemiParallelCorpus | Sequence[MultiParallelSample], languages: Sequence[str] | None = None,
          level: str | None = None) -> CorpusStats:
    samples = c.samples if isinstance(c, SemiParallelCorpus) else list(c)
    if languages is None:
        if not isinstance(c, SemiParallelCorpus):
            raise ConfigError("languages required for a bare sample list")
        languages = c.languages
    languages = list(languages)
    if level is not None:
        samples = [s for s in samples if s.level == level]
    n = len(languages)
    idx = {lang: i for i, lang in enumerate(languages)}
    counts = Counter()
    pairwise = np.zeros((n, n), dtype=np.int64)
    full = 0
    for s in samples:
        here = [idx[lang] for lang in s.tokens if lang in idx]
        for i in here:
            counts[languages[i]] += 1
        for a, b in combinations(sorted(here), 2):
            pairwise[a, b] += 1
            pairwise[b, a] += 1
        full += len(here) == n
    total = len(samples)
    n_pairs = n * (n - 1) // 2
    return CorpusStats(
        languages,
        {lang: counts[lang] for lang in languages},
        pairwise,
        total,
        full / total if total else 0.0,
        int(np.triu(pairwise, 1).sum()) / (total * n_pairs) if total and n_pairs else 0.0,
    )


# ---------------------------------------------------------------------------
# line format: id TAB level TAB lang=BASE64(source) [TAB lang=BASE64(source)]...


def format_record(s: MultiParallelSample) -> str:
    fields = [s.id, s.level]
    for lang, toks in s.tokens.items():
        src = " ".join(toks).encode("utf-8")
        fields.append(f"{lang}={base64.b64encode(src).decode('ascii')}")
    return "\t".join(fields)


def write_cost_format(samples: Iterable[MultiParallelSample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in samples:
            fh.write(format_record(s) + "\n")


def read_records(path: str | Path) -> list[MultiParallelSample]:
    samples: list[MultiParallelSample] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) < 3:
                raise ParseError("expected id, level and at least one language field", lineno)
            sid, level = parts[0], parts[1]
            if not sid:
                raise ParseError("empty id", lineno)
            if sid in seen:
                raise DuplicateId(f"line {lineno}: duplicate id {sid!r}")
            seen.add(sid)
            toks: dict[str, list[str]] = {}
            for f in parts[2:]:
                lang, eq, payload = f.partition("=")
                if not eq or not lang:
                    raise ParseError(f"malformed field {f[:30]!r}", lineno)
                if lang in toks:
                    raise ParseError(f"language {lang!r} repeated", lineno)
                try:
                    src = base64.b64decode(payload, validate=True).decode("utf-8")
                except (ValueError, UnicodeDecodeError) as exc:
                    raise ParseError(f"bad base64 for {lang!r}: {exc}", lineno) from None
                toks[lang] = src.split()
            samples.append(MultiParallelSample(sid, toks, level))
    return samples


def load_cost_format(path: str | Path, languages: Sequence[str] | None = None, k: int = 4,
                     split: str = "train") -> SemiParallelCorpus:
    """Load a corpus file; the vocabulary is built from the tokens it contains."""
    samples = read_records(path)
    if languages is None:
        languages = list(dict.fromkeys(lang for s in samples for lang in s.tokens))
    vocab_tokens = dict.fromkeys(t for s in samples for toks in s.tokens.values() for t in toks)
    if all(lang in toylang.KEYWORDS for lang in languages):
        vocab = toy_vocabulary(languages, k)
        unknown = [t for t in vocab_tokens if t not in vocab.stoi]
        if unknown:
            vocab = Vocabulary(languages, k, list(vocab.itos[len(SPECIALS) + k * len(languages):]) + unknown)
    else:
        vocab = Vocabulary(languages, k, vocab_tokens)
    return SemiParallelCorpus(samples, vocab, split)

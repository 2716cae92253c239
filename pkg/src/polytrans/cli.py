"""Command-line interface: ``polytrans <subcommand> ...``.

Exit codes: 0 success, 2 bad usage, 3 verification failure, 4 I/O error.
Errors are printed as one line: ``error: <Kind>: <message>``.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Sequence

from . import checks, infolab
from . import corpus as C
from . import evaluate as E
from . import model as M
from . import train as T
from .errors import CheckpointFormatError, DuplicateId, ParseError, PolytransError

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_IO = 0, 2, 3, 4


class UsageError(Exception):
    pass


class VerificationFailed(Exception):
    pass


# ---------------------------------------------------------------------------
# key=value run configuration


@dataclass
class RunConfig:
    languages: str = "toyA,toyB,toyC"
    n_train: int = 1000
    n_test: int = 100
    n_val: int = 0
    missing_rates: str = ""
    k: int = 4
    max_tokens: int = 32
    d_model: int = 64
    n_heads: int = 4
    enc_layers: int = 2
    dec_layers: int = 2
    d_ff: int = 256
    latent: int = 32
    proj_hidden: int = 64
    max_len: int = 128
    lam: float = 1e-3
    lr: float = 1e-4
    weight_decay: float = 0.01
    batch_size: int = 32
    micro_batch: int = 8
    epochs: int = 10
    clip_norm: float = 1.0
    strategy: str = "semi"
    inner_loop: str = "present"
    seed: int = 0
    workers: int = 1
    beam: int = 1
    decode_max_len: int = 40

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def update(self, pairs: dict[str, str]) -> "RunConfig":
        types = {f.name: f.type for f in fields(self)}
        for key, raw in pairs.items():
            if key not in types:
                raise UsageError(f"unknown config key {key!r}")
            kind = {"int": int, "float": float, "str": str}[types[key]]
            try:
                setattr(self, key, kind(raw))
            except ValueError:
                raise UsageError(f"config key {key!r}: cannot parse {raw!r} as {types[key]}") from None
        return self

    def dump(self) -> str:
        return "".join(f"{k}={getattr(self, k)}\n" for k in self.keys())

    def language_list(self) -> list[str]:
        return [x.strip() for x in self.languages.split(",") if x.strip()]

    def corpus_config(self) -> C.CorpusConfig:
        langs = tuple(self.language_list())
        rates = tuple(float(x) for x in self.missing_rates.split(",")) if self.missing_rates else None
        return C.CorpusConfig(languages=langs, n_samples=self.n_train, missing_rates=rates, k=self.k,
                              max_tokens=self.max_tokens, seed=self.seed)

    def dims(self, vocab_size: int) -> M.ModelDims:
        return M.ModelDims(vocab_size=vocab_size, d_model=self.d_model, n_heads=self.n_heads,
                           enc_layers=self.enc_layers, dec_layers=self.dec_layers, d_ff=self.d_ff,
                           dec_d_ff=self.d_ff, latent=self.latent, k=self.k, proj_hidden=self.proj_hidden,
                           max_len=self.max_len)

    def train_config(self) -> T.TrainConfig:
        return T.TrainConfig(lam=self.lam, lr=self.lr, weight_decay=self.weight_decay, batch_size=self.batch_size,
                             micro_batch=self.micro_batch, epochs=self.epochs, seed=self.seed,
                             workers=self.workers, clip_norm=self.clip_norm or None, strategy=self.strategy,
                             inner_loop=self.inner_loop)

    def decode_config(self) -> E.DecodeConfig:
        return E.DecodeConfig(beam=self.beam, max_len=self.decode_max_len, deterministic=True, seed=self.seed)


def parse_kv(text: str) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, value = line.partition("=")
        if not eq:
            raise UsageError(f"config line {lineno}: expected key=value")
        out[key.strip()] = value.strip()
    return out


def load_run_config(args) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        cfg.update(parse_kv(_read_text(args.config)))
    overrides = {}
    for item in getattr(args, "set", None) or []:
        key, eq, value = item.partition("=")
        if not eq:
            raise UsageError(f"--set expects key=value, got {item!r}")
        overrides[key] = value
    for key in ("seed", "workers", "epochs"):
        if getattr(args, key, None) is not None:
            overrides[key] = str(getattr(args, key))
    return cfg.update(overrides)


def _read_text(path) -> str:
    return Path(path).read_text()


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo_config(out: Path, cfg: RunConfig) -> None:
    (out / "config.txt").write_text(cfg.dump())


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_corpus(args) -> int:
    cfg = load_run_config(args)
    out = _out_dir(args)
    splits = C.generate_splits(cfg.corpus_config(), cfg.n_train, cfg.n_test, cfg.n_val)
    for name, corpus in splits.items():
        C.write_cost_format(corpus.samples, out / f"{name}.tsv")
    (out / "vocab.json").write_text(json.dumps(splits["train"].vocab.to_dict(), indent=1))
    _echo_config(out, cfg)
    st = C.stats(splits["train"])
    print(f"wrote {', '.join(f'{n}={len(c)}' for n, c in splits.items())} samples to {out}; "
          f"multi-parallel fraction {st.multi_parallel_fraction:.4f}")
    return EXIT_OK


def _load_corpus(path, languages: list[str] | None, k: int, split: str = "train",
                 vocab_path: str | None = None) -> C.SemiParallelCorpus:
    c = C.load_cost_format(path, languages, k, split)
    vp = Path(vocab_path) if vocab_path else Path(path).with_name("vocab.json")
    if vp.exists():
        c = C.SemiParallelCorpus(c.samples, C.Vocabulary.from_dict(json.loads(vp.read_text())), split)
    return c


def cmd_stats(args) -> int:
    out = _out_dir(args)
    langs = [x for x in args.languages.split(",") if x] if args.languages else None
    samples = C.read_records(args.corpus)
    if langs is None:
        langs = list(dict.fromkeys(l for s in samples for l in s.tokens))
    st = C.stats(samples, langs, level=args.level or None)
    (out / "counts.csv").write_text(st.counts_csv())
    (out / "pairs.csv").write_text(st.pairs_csv())
    print(st.counts_csv(), end="")
    print(f"samples={st.n_samples} multi_parallel_fraction={st.multi_parallel_fraction:.6f} "
          f"bilingual_parallel_fraction={st.bilingual_parallel_fraction:.6f}")
    return EXIT_OK


def cmd_verify(args) -> int:
    rows = infolab.run_suite(seed=args.seed, cases=args.cases, tol=args.tol)
    lines = [f"{'check':<34}{'worst':>14}{'tolerance':>12}  {'kind':<9} result"]
    for r in rows:
        lines.append(f"{r.check:<34}{r.worst:>14.3e}{r.tolerance:>12.1e}  {r.kind:<9} {'PASS' if r.passed else 'FAIL'}")
    table = "\n".join(lines) + "\n"
    print(table, end="")
    if args.out:
        (_out_dir(args) / "verify.txt").write_text(table)
    failed = [r.check for r in rows if not r.passed]
    if failed:
        raise VerificationFailed(f"{len(failed)} check(s) failed: {', '.join(failed)}")
    return EXIT_OK


def cmd_grad_check(args) -> int:
    rows = checks.gradient_suite(args.seed)
    lines = [f"{'check':<28}{'rel_err':>12}{'tolerance':>12} result"]
    lines += [f"{r.name:<28}{r.error:>12.3e}{r.tolerance:>12.1e} {'PASS' if r.passed else 'FAIL'}" for r in rows]
    table = "\n".join(lines) + "\n"
    print(table, end="")
    if args.out:
        (_out_dir(args) / "grad_check.txt").write_text(table)
    failed = [r.name for r in rows if not r.passed]
    if failed:
        raise VerificationFailed(f"gradient check failed: {', '.join(failed)}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_run_config(args)
    out = _out_dir(args)
    _echo_config(out, cfg)
    langs = cfg.language_list()
    if args.corpus:
        corpus = _load_corpus(args.corpus, langs, cfg.k)
    else:
        corpus = C.generate_splits(cfg.corpus_config(), cfg.n_train, cfg.n_test)["train"]
    dims = cfg.dims(len(corpus.vocab))
    log = None if args.quiet else (lambda msg: print(msg, flush=True))
    res = T.train(corpus, cfg.train_config(), dims=dims, out_dir=out, log=log)
    M.save_checkpoint(res.params, out / "checkpoint.npz", {"epochs": cfg.epochs})
    print(f"trained {cfg.epochs} epoch(s) in {res.seconds:.1f}s; checkpoint {out / 'checkpoint.npz'}")
    return EXIT_OK


def cmd_translate(args) -> int:
    P = M.load_checkpoint(args.checkpoint)
    cfg = E.DecodeConfig(beam=args.beam, max_len=args.max_len, deterministic=args.deterministic, seed=args.seed)
    lines = [line.split() for line in _read_text(args.input).splitlines()]
    hyps = E.translate_batch(P, [l for l in lines if l], args.src, args.tgt, cfg)
    it = iter(hyps)
    result = "".join((" ".join(next(it)) if l else "") + "\n" for l in lines)
    if args.output:
        Path(args.output).write_text(result)
    else:
        sys.stdout.write(result)
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = load_run_config(args)
    out = _out_dir(args)
    _echo_config(out, cfg)
    P = M.load_checkpoint(args.checkpoint)
    test = C.SemiParallelCorpus(C.read_records(args.corpus), P.vocab, "test")
    m = E.evaluate_matrix(test, P, cfg.decode_config(), workers=cfg.workers)
    (out / "bleu.csv").write_text(m.bleu_csv())
    (out / "naive_copy.csv").write_text(m.naive_csv())
    print(m.bleu_csv(), end="")
    print(f"mean BLEU {m.mean_bleu():.2f} over {len(m.bleu)} direction(s)")
    return EXIT_OK


def cmd_params(args) -> int:
    out = _out_dir(args)
    if args.full_dims:
        dims = M.ModelDims.full_size()
    else:
        cfg = load_run_config(args)
        dims = cfg.dims(args.vocab_size)
    reports = [E.count_params(dims, n) for n in range(2, args.N + 1)]
    (out / "params.csv").write_text(E.params_csv(reports))
    (out / "params_detail.csv").write_text(E.params_detail_csv(reports))
    (out / "params.svg").write_text(E.params_svg(reports))
    last = reports[-1]
    print(E.params_csv(reports), end="")
    print(f"N={last.N} pairwise_directions={last.pairwise_models} encoder={last.encoder} decoder={last.decoder} "
          f"projectors={last.projectors} ratio={last.ratio:.6f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="key=value run configuration file (default: none)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", default=None,
                   help="override one config key; repeatable (default: none)")
    p.add_argument("--seed", type=int, default=None, help="single seed for all randomness (default: config seed, 0)")


class _HelpFormatter(argparse.HelpFormatter):
    """Append the default to every flag whose help text does not state one."""

    def _get_help_string(self, action):
        text = action.help or ""
        if not action.option_strings or action.dest == "help" or "default" in text:
            return text
        if action.required:
            return text + " (required)"
        if action.default is None:
            return text + " (default: none)"
        return text + " (default: %(default)s)"


def build_parser() -> argparse.ArgumentParser:
    fmt = _HelpFormatter
    keys = ", ".join(f"{k}={getattr(RunConfig(), k)}" for k in RunConfig.keys())
    parser = argparse.ArgumentParser(prog="polytrans", formatter_class=fmt,
                                     description="Multilingual toy-code translation with disentangled latents.",
                                     epilog=f"config keys and defaults: {keys}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="generate a seeded synthetic corpus", formatter_class=fmt)
    _add_run_flags(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("stats", help="per-language and pairwise counts of a corpus file", formatter_class=fmt)
    p.add_argument("--corpus", required=True, help="corpus file in the tab-separated line format")
    p.add_argument("--languages", default="", help="comma-separated language order (default: order of appearance)")
    p.add_argument("--level", default="", help="only count samples of this level, e.g. program")
    p.add_argument("--out", default="stats", help="output directory")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("verify", help="information-theoretic identity and bound suite", formatter_class=fmt)
    p.add_argument("--seed", type=int, default=1, help="seed for the random factored models")
    p.add_argument("--cases", type=int, default=50, help="number of random models")
    p.add_argument("--tol", type=float, default=1e-10, help="residual tolerance")
    p.add_argument("--out", default=None, help="optional output directory for the table")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("grad-check", help="central-difference gradient suite", formatter_class=fmt)
    p.add_argument("--seed", type=int, default=0, help="seed for inputs and the micro-model")
    p.add_argument("--out", default=None, help="optional output directory for the table")
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("train", help="train a model; writes metrics.csv and checkpoints", formatter_class=fmt)
    _add_run_flags(p)
    p.add_argument("--corpus", default=None, help="training corpus file (default: generate from config)")
    p.add_argument("--workers", type=int, default=None, help="gradient workers (default: config workers, 1)")
    p.add_argument("--epochs", type=int, default=None, help="epochs (default: config epochs, 10)")
    p.add_argument("--quiet", action="store_true", help="suppress per-epoch log lines")
    p.add_argument("--out", required=True, help="run directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("translate", help="translate one program per input line", formatter_class=fmt)
    p.add_argument("--checkpoint", required=True, help="checkpoint .npz")
    p.add_argument("--src", required=True, help="source language")
    p.add_argument("--tgt", required=True, help="target language")
    p.add_argument("--in", dest="input", required=True, help="input file, whitespace-tokenised, one program per line")
    p.add_argument("--out", dest="output", default=None, help="output file (default: stdout)")
    p.add_argument("--deterministic", action="store_true", help="use the prior mean for the target latent")
    p.add_argument("--beam", type=int, default=1, help="beam width (1 = greedy)")
    p.add_argument("--max-len", type=int, default=40, help="maximum generated length")
    p.add_argument("--seed", type=int, default=0, help="seed for the sampled target latent")
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("eval", help="BLEU matrix and naive-copy baseline on a test file", formatter_class=fmt)
    _add_run_flags(p)
    p.add_argument("--checkpoint", required=True, help="checkpoint .npz")
    p.add_argument("--corpus", required=True, help="test corpus file")
    p.add_argument("--workers", type=int, default=None, help="evaluation workers (default: config workers, 1)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("params", help="parameter counts, pairwise vs unified; CSV and SVG", formatter_class=fmt)
    _add_run_flags(p)
    p.add_argument("--N", type=int, default=7, help="largest language count (counts for 2..N)")
    p.add_argument("--full-dims", "--paper-dims", dest="full_dims", action="store_true",
                   help="12-layer 768-d encoder, 6-layer decoders, k=16, vocab 50265")
    p.add_argument("--vocab-size", type=int, default=80, help="vocabulary size when not using --full-dims")
    p.add_argument("--out", default="params", help="output directory")
    p.set_defaults(func=cmd_params)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return args.func(args)
    except VerificationFailed as exc:
        print(f"error: VerificationFailed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except (ParseError, DuplicateId, CheckpointFormatError) as exc:
        print(f"error: IoError: {type(exc).__name__}: {exc}".replace("\n", " "), file=sys.stderr)
        return EXIT_IO
    except (UsageError, PolytransError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}".replace("\n", " "), file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: IoError: {exc}".replace("\n", " "), file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

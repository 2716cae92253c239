import subprocess
import sys

import pytest

from polytrans import cli, infolab


def run(args, capsys=None):
    code = cli.main([str(a) for a in args])
    out = capsys.readouterr() if capsys else None
    return code, out


SUBCOMMANDS = ["gen-corpus", "stats", "verify", "grad-check", "train", "translate", "eval", "params"]


@pytest.mark.parametrize("sub", SUBCOMMANDS)
def test_help_lists_every_flag_with_default(sub):
    parser = cli.build_parser()
    subparser = next(a for a in parser._subparsers._group_actions if a.dest == "command").choices[sub]
    text = " ".join(subparser.format_help().split())
    for action in subparser._actions:
        if action.dest == "help":
            continue
        assert action.option_strings[0] in text
        shown = " ".join(subparser._get_formatter()._get_help_string(action).split())
        assert "default" in shown or "(required)" in shown
        assert shown.replace("%(default)s", str(action.default)) in text


def test_top_level_help_lists_config_keys(capsys):
    code, out = run(["--help"], capsys)
    assert code == 0
    for key in cli.RunConfig.keys():
        assert key in out.out.replace("\n", " ")


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "polytrans.cli", "params", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "--paper-dims" in out.stdout


def test_bad_flag_is_usage_error(capsys):
    code, _ = run(["train", "--nonsense"], capsys)
    assert code == 2


def test_unknown_config_key_rejected(tmp_path, capsys):
    code, out = run(["gen-corpus", "--out", tmp_path, "--set", "colour=blue"], capsys)
    assert code == 2
    assert out.err.startswith("error: UsageError:")
    assert len(out.err.strip().splitlines()) == 1


def test_config_file_and_echo(tmp_path, capsys):
    conf = tmp_path / "run.conf"
    conf.write_text("# small run\nn_train = 12\nn_test=4\nmissing_rates=0,0.5,0.5\n")
    out_dir = tmp_path / "corpus"
    code, out = run(["gen-corpus", "--config", conf, "--seed", 5, "--out", out_dir], capsys)
    assert code == 0
    for name in ("train.tsv", "test.tsv", "vocab.json", "config.txt"):
        assert (out_dir / name).exists()
    echoed = (out_dir / "config.txt").read_text()
    assert "n_train=12\n" in echoed and "seed=5\n" in echoed
    assert len((out_dir / "train.tsv").read_text().splitlines()) == 12


def test_stats_outputs(tmp_path, capsys):
    run(["gen-corpus", "--out", tmp_path / "c", "--set", "n_train=30", "--set", "n_test=2"], capsys)
    code, out = run(["stats", "--corpus", tmp_path / "c" / "train.tsv", "--out", tmp_path / "s"], capsys)
    assert code == 0
    assert (tmp_path / "s" / "counts.csv").read_text().startswith("lang,count\n")
    assert (tmp_path / "s" / "pairs.csv").read_text().startswith("lang_i,lang_j,pairs\n")


def test_missing_file_is_io_error(tmp_path, capsys):
    code, out = run(["stats", "--corpus", tmp_path / "nope.tsv", "--out", tmp_path], capsys)
    assert code == 4
    assert out.err.startswith("error: IoError:")


def test_malformed_corpus_is_io_error(tmp_path, capsys):
    bad = tmp_path / "bad.tsv"
    bad.write_text("only-one-field\n")
    code, out = run(["stats", "--corpus", bad, "--out", tmp_path], capsys)
    assert code == 4


@pytest.mark.parametrize("seed,cases", [(1, 50), (2, 4)])
def test_verify_exit_code_tracks_table(seed, cases, tmp_path, capsys):
    rows = infolab.run_suite(seed, cases)
    code, out = run(["verify", "--seed", seed, "--cases", cases, "--out", tmp_path], capsys)
    assert code == (0 if all(r.passed for r in rows) else 3)
    for r in rows:
        assert r.check in out.out
    assert (tmp_path / "verify.txt").read_text() == out.out


def test_grad_check_passes(capsys):
    code, out = run(["grad-check"], capsys)
    assert code == 0
    assert "loss:multi_parallel" in out.out


def test_params_full_dims(tmp_path, capsys):
    code, out = run(["params", "--N", 7, "--paper-dims", "--out", tmp_path], capsys)
    assert code == 0
    assert "pairwise_directions=42" in out.out
    detail = (tmp_path / "params_detail.csv").read_text().splitlines()
    assert detail[-1].startswith("7,42,")
    assert float(detail[-1].split(",")[-1]) < 1 / 15
    assert (tmp_path / "params.csv").read_text().startswith("N,paradigm,total_params\n")
    assert (tmp_path / "params.svg").read_text().startswith("<svg")


def test_translate_deterministic_files(trained_toy, tmp_path, capsys):
    src = tmp_path / "in.txt"
    src.write_text("\n".join(" ".join(s.tokens["toyA"]) for s in trained_toy.test.samples[:5]) + "\n")
    outs = []
    for n in range(2):
        dest = tmp_path / f"out{n}.txt"
        code, _ = run(["translate", "--checkpoint", trained_toy.checkpoint, "--src", "toyA", "--tgt", "toyB",
                       "--in", src, "--out", dest, "--deterministic"], capsys)
        assert code == 0
        outs.append(dest.read_bytes())
    assert outs[0] == outs[1]
    assert len(outs[0].decode().splitlines()) == 5


def test_translate_unknown_language(trained_toy, tmp_path, capsys):
    src = tmp_path / "in.txt"
    src.write_text("x\n")
    code, out = run(["translate", "--checkpoint", trained_toy.checkpoint, "--src", "toyA", "--tgt", "rust",
                     "--in", src], capsys)
    assert code == 2
    assert "UnknownLanguage" in out.err


def test_eval_writes_matrices(trained_toy, tmp_path, capsys):
    code, out = run(["eval", "--checkpoint", trained_toy.checkpoint, "--corpus", trained_toy.test_file,
                     "--out", tmp_path, "--set", "decode_max_len=24"], capsys)
    assert code == 0
    assert (tmp_path / "bleu.csv").read_text().startswith("src\\tgt,toyA,toyB,toyC\n")
    assert (tmp_path / "naive_copy.csv").exists()
    assert (tmp_path / "config.txt").exists()


def test_train_then_eval_small(tmp_path, capsys):
    small = ["--set", "n_train=12", "--set", "n_test=3", "--set", "d_model=16", "--set", "d_ff=32",
             "--set", "latent=4", "--set", "proj_hidden=16", "--set", "k=2", "--set", "enc_layers=1",
             "--set", "dec_layers=1", "--set", "max_tokens=16", "--set", "batch_size=6", "--set", "micro_batch=3"]
    code, _ = run(["train", "--out", tmp_path / "run", "--epochs", 1, "--quiet"] + small, capsys)
    assert code == 0
    run_dir = tmp_path / "run"
    assert (run_dir / "metrics.csv").read_text().startswith("epoch,step,total,")
    assert (run_dir / "checkpoint.npz").exists() and (run_dir / "checkpoint_epoch1.npz").exists()
    assert "epochs=1\n" in (run_dir / "config.txt").read_text()

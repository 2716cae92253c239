from dataclasses import dataclass

import pytest

from polytrans import corpus as C
from polytrans import model as M
from polytrans import train as T


@dataclass
class Trained:
    params: M.ModelParams
    train: C.SemiParallelCorpus
    test: C.SemiParallelCorpus
    checkpoint: object  # path
    test_file: object   # path


@pytest.fixture(scope="session")
def trained_toy(tmp_path_factory):
    """A small three-language model trained for a few seconds."""
    cfg = C.CorpusConfig(languages=("toyA", "toyB", "toyC"), n_samples=200, k=2, max_tokens=16, seed=0)
    splits = C.generate_splits(cfg, 200, 20)
    dims = M.ModelDims(vocab_size=len(splits["train"].vocab), d_model=32, n_heads=2, enc_layers=1, dec_layers=1,
                       d_ff=64, dec_d_ff=64, latent=8, k=2, proj_hidden=32, max_len=24)
    res = T.train(splits["train"], T.TrainConfig(epochs=12, lr=3e-3, batch_size=16, micro_batch=16), dims=dims)
    root = tmp_path_factory.mktemp("trained")
    M.save_checkpoint(res.params, root / "checkpoint.npz")
    C.write_cost_format(splits["test"].samples, root / "test.tsv")
    return Trained(res.params, splits["train"], splits["test"], root / "checkpoint.npz", root / "test.tsv")


_REPORT_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance_report(request):
    """Collects one pass/fail line per acceptance criterion for the terminal summary."""
    lines = request.config.stash.setdefault(_REPORT_KEY, [])

    def record(number: int, passed: bool | None, detail: str) -> None:
        status = "SKIP" if passed is None else "PASS" if passed else "FAIL"
        line = f"criterion {number:>2} {status}: {detail}"
        lines.append((number, line))
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_REPORT_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)

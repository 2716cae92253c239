import math

import numpy as np
import pytest

from polytrans import checks
from polytrans import corpus as C
from polytrans import model as M
from polytrans import ndtensor as nd
from polytrans import train as T
from polytrans.errors import AllPresent, ConfigError, EmptyPool, MissingInstance, ShapeMismatch


@pytest.fixture(scope="module")
def micro():
    return checks.micro_model(0, n_languages=2, d_model=8)


def _zero_projector_outputs(P):
    for name in P.names("proj."):
        if name.split(".")[-1] in ("w2", "b2") and not name.startswith("proj.p."):
            P[name].assign(np.zeros(P[name].shape))


def test_recomposition_is_exact(micro):
    P, corpus = micro
    bd = T.loss_multi_parallel(P, corpus.samples, lam=1e-3, seed=0)
    L = bd.languages
    ce, mse = sum(bd.ce[l] for l in L), sum(bd.mse[l] for l in L)
    kls, klt = sum(bd.kl_specific[l] for l in L), sum(bd.kl_shift[l] for l in L)
    by_hand = (1 + 1e-3) * (ce + mse) + (1 + 1e-3) * kls + bd.kl_shared + 1e-3 * klt
    assert abs(bd.total - by_hand) < 1e-12
    assert bd.recompose() == bd.total


def test_components_nonnegative_and_finite(micro):
    P, corpus = micro
    bd = T.loss_multi_parallel(P, corpus.samples, seed=1)
    vals = [bd.kl_shared] + [d[l] for d in (bd.ce, bd.mse, bd.kl_specific, bd.kl_shift) for l in bd.languages]
    assert all(math.isfinite(v) and v >= 0 for v in vals)
    assert all(bd.ce_mask.values())


def test_lambda_zero_drops_shift_terms(micro):
    P, corpus = micro
    bd = T.loss_multi_parallel(P, corpus.samples, lam=0.0, seed=0)
    L = bd.languages
    expect = (sum(bd.ce[l] for l in L) + sum(bd.mse[l] for l in L)) + sum(bd.kl_specific[l] for l in L) + bd.kl_shared
    assert abs(bd.total - expect) < 1e-12
    assert bd.recompose(0.0) == bd.total


def test_lambda_slope_is_exact(micro):
    P, corpus = micro
    a = T.loss_multi_parallel(P, corpus.samples, lam=0.2, seed=3)
    b = T.loss_multi_parallel(P, corpus.samples, lam=0.7, seed=3)
    assert abs((b.total - a.total) - 0.5 * a.slope()) < 1e-12
    assert abs(a.recompose(0.7) - b.total) < 1e-12


def test_standard_normal_posteriors_have_zero_kl():
    P, corpus = checks.micro_model(1)
    _zero_projector_outputs(P)
    bd = T.loss_multi_parallel(P, corpus.samples, seed=0)
    assert bd.kl_shared == 0.0
    assert all(bd.kl_specific[l] == 0.0 and bd.kl_shift[l] == 0.0 for l in bd.languages)


def test_multi_parallel_rejects_missing(micro):
    P, corpus = micro
    s = corpus.samples[0]
    partial = C.MultiParallelSample("p", {"toyA": s.tokens["toyA"]})
    with pytest.raises(MissingInstance):
        T.loss_multi_parallel(P, partial)


def test_same_seed_same_noise(micro):
    P, corpus = micro
    a = T.loss_multi_parallel(P, corpus.samples, seed=5)
    b = T.loss_multi_parallel(P, corpus.samples, seed=5)
    c = T.loss_multi_parallel(P, corpus.samples, seed=6)
    assert a.total == b.total
    assert a.total != c.total


def test_total_loss_gradient_check(micro):
    P, corpus = micro
    targets = T.flag_targets(P, corpus.samples)
    f = lambda: T.loss_multi_parallel(P, corpus.samples, lam=0.5, seed=2, mse_targets=targets).tensor
    assert checks.loss_grad_check(P, f, seed=2, per_array=3) < 1e-3


# partially missing samples


def _partial_setup():
    P, corpus = checks.micro_model(2, n_languages=2)
    full = corpus.samples[0]
    sample = C.MultiParallelSample("half", {"toyA": full.tokens["toyA"]})
    return P, corpus, sample


def test_partial_computes_ce_only_for_present_language(monkeypatch):
    P, corpus, sample = _partial_setup()
    calls = []
    real = T._disentangle_and_translate

    def spy(P_, terms, flags, enc, batch, rows, *rest):
        calls.append(rows.copy())
        return real(P_, terms, flags, enc, batch, rows, *rest)

    monkeypatch.setattr(T, "_disentangle_and_translate", spy)
    bd = T.step_partially_missing(P, sample, corpus, seed=0)
    # one inner iteration: only toyA's shift-shared latent comes from ground truth
    assert len(calls) == 1
    assert bd.ce_mask == {"toyA": True, "toyB": False}
    assert bd.ce["toyB"] == 0.0 and bd.mse["toyB"] == 0.0
    assert bd.ce["toyA"] > 0.0
    assert abs(bd.recompose() - bd.total) < 1e-12


def test_partial_inner_loop_over_all_languages(monkeypatch):
    P, corpus, sample = _partial_setup()
    calls = []
    real = T._disentangle_and_translate
    monkeypatch.setattr(T, "_disentangle_and_translate",
                        lambda *a: calls.append(1) or real(*a))
    bd = T.step_partially_missing(P, sample, corpus, seed=0, inner_loop="all")
    assert len(calls) == 2
    assert bd.ce_mask["toyB"] is False


def test_partial_is_deterministic_per_seed():
    P, corpus, sample = _partial_setup()
    a = T.step_partially_missing(P, sample, corpus, seed=4)
    b = T.step_partially_missing(P, sample, corpus, seed=4)
    assert a == b


def test_partial_pseudo_draw_is_uniform_over_pool():
    pool = [C.MultiParallelSample(f"s{i}", {"toyB": [str(i)]}) for i in range(4)]
    pools = T.PseudoPools(pool, ["toyA", "toyB"])
    rng = np.random.default_rng(0)
    draws = [pools.draw("toyB", rng)[0] for _ in range(4000)]
    counts = np.array([draws.count(str(i)) for i in range(4)])
    assert np.all(np.abs(counts - 1000) < 4 * math.sqrt(4000 * 0.25 * 0.75))


def test_partial_guards():
    P, corpus, sample = _partial_setup()
    with pytest.raises(AllPresent):
        T.step_partially_missing(P, corpus.samples[0], corpus)
    only_a = [C.MultiParallelSample("x", {"toyA": ["x"]})]
    with pytest.raises(EmptyPool):
        T.step_partially_missing(P, sample, only_a)


def test_partial_gradients_reach_encoder_and_projectors():
    P, corpus, sample = _partial_setup()
    with nd.Tape():
        bd = T.step_partially_missing(P, sample, corpus, seed=0)
        g = nd.backward(bd.tensor)
    for prefix in ("enc.layer0", "proj.q.toyA", "proj.r.toyA", "proj.p.toyB", "dec.toyA"):
        assert any(np.abs(g.of(P[n])).max() > 0 for n in P.names(prefix)), prefix


# optimizer


def _scalar_params(value):
    dims = M.ModelDims(vocab_size=8, d_model=4, n_heads=1, enc_layers=0, dec_layers=0, d_ff=4, dec_d_ff=4,
                       latent=1, k=1, proj_hidden=1, max_len=4)
    P = M.ModelParams(dims, ["toyA"], {"p": nd.Tensor(np.array([value]), requires_grad=True)})
    return P


def test_adamw_zero_gradient_no_decay_is_noop():
    P = _scalar_params(1.0)
    st = T.OptState.zeros_like(P, weight_decay=0.0)
    T.optimizer_step(P, {"p": np.zeros(1)}, st, lr=0.1)
    assert P["p"].data[0] == 1.0


def test_adamw_first_step_hand_trace():
    P = _scalar_params(1.0)
    st = T.OptState.zeros_like(P, weight_decay=0.0)
    T.optimizer_step(P, {"p": np.ones(1)}, st, lr=0.1)
    # m = 0.1, v = 0.001; bias-corrected both give 1, step = 0.1 * 1 / (1 + 1e-8)
    assert abs(P["p"].data[0] - (1.0 - 0.1 / (1.0 + 1e-8))) < 1e-15


def test_adamw_second_step_hand_trace():
    P = _scalar_params(1.0)
    st = T.OptState.zeros_like(P, weight_decay=0.0)
    T.optimizer_step(P, {"p": np.ones(1)}, st, lr=0.1)
    T.optimizer_step(P, {"p": np.full(1, 3.0)}, st, lr=0.1)
    m = 0.9 * 0.1 + 0.1 * 3.0
    v = 0.999 * 0.001 + 0.001 * 9.0
    step2 = 0.1 * (m / (1 - 0.81)) / (math.sqrt(v / (1 - 0.999 ** 2)) + 1e-8)
    expect = (1.0 - 0.1 / (1.0 + 1e-8)) - step2
    assert abs(P["p"].data[0] - expect) < 1e-15


def test_adamw_decoupled_decay():
    P = _scalar_params(2.0)
    st = T.OptState.zeros_like(P, weight_decay=0.01)
    T.optimizer_step(P, {"p": np.zeros(1)}, st, lr=0.1)
    assert abs(P["p"].data[0] - 2.0 * (1 - 0.1 * 0.01)) < 1e-15


def test_linear_learning_rate_decay():
    assert T.lr_at(0, 1e-4, 100) == 1e-4
    assert abs(T.lr_at(50, 1e-4, 100) - 5e-5) < 1e-20
    assert T.lr_at(100, 1e-4, 100) == 0.0


def test_adamw_shape_mismatch():
    P = _scalar_params(1.0)
    with pytest.raises(ShapeMismatch):
        T.optimizer_step(P, {"p": np.zeros(2)}, T.OptState.zeros_like(P))


# training loop


def _tiny(seed, n=50, rates=(0.0, 0.3, 0.3)):
    cfg = C.CorpusConfig(languages=("toyA", "toyB", "toyC"), n_samples=n, missing_rates=rates, k=2,
                         max_tokens=16, seed=seed)
    corpus = C.generate_corpus(cfg)
    dims = M.ModelDims(vocab_size=len(corpus.vocab), d_model=16, n_heads=2, enc_layers=1, dec_layers=1, d_ff=32,
                       dec_d_ff=32, latent=4, k=2, proj_hidden=16, max_len=24)
    return corpus, dims


def test_training_is_bit_reproducible(tmp_path):
    corpus, dims = _tiny(0, n=20)
    cfg = T.TrainConfig(epochs=2, batch_size=8, micro_batch=4, lr=1e-3, seed=3)
    a = T.train(corpus, cfg, dims=dims, out_dir=tmp_path / "a")
    b = T.train(corpus, cfg, dims=dims, out_dir=tmp_path / "b")
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()
    assert a.metrics_csv() == (tmp_path / "a" / "metrics.csv").read_text()
    assert (tmp_path / "a" / "checkpoint_epoch2.npz").exists()
    for n in a.params.names():
        assert a.params[n].data.tobytes() == b.params[n].data.tobytes()


def test_worker_count_does_not_change_results():
    corpus, dims = _tiny(1, n=16)
    base = dict(epochs=1, batch_size=8, micro_batch=2, lr=1e-3, seed=0)
    a = T.train(corpus, T.TrainConfig(workers=1, **base), dims=dims)
    b = T.train(corpus, T.TrainConfig(workers=4, **base), dims=dims)
    assert a.metrics_csv() == b.metrics_csv()
    for n in a.params.names():
        assert a.params[n].data.tobytes() == b.params[n].data.tobytes()


def test_metrics_header():
    corpus, dims = _tiny(2, n=8)
    res = T.train(corpus, T.TrainConfig(epochs=1, batch_size=8), dims=dims)
    assert res.metrics_csv().splitlines()[0] == "epoch,step,total,ce,mse,kl_specific,kl_shared,kl_shift,val_bleu"


def test_empty_corpus_rejected():
    corpus, dims = _tiny(0, n=4)
    with pytest.raises(ConfigError):
        T.train(corpus.subset([]), T.TrainConfig(epochs=1), dims=dims)


def test_config_validation():
    with pytest.raises(ConfigError):
        T.TrainConfig(lam=-1.0).validate()
    with pytest.raises(ConfigError):
        T.TrainConfig(lr=0.0).validate()
    with pytest.raises(ConfigError):
        T.TrainConfig(strategy="other").validate()


@pytest.mark.slow
def test_training_loss_decreases_on_small_corpus():
    ok = 0
    for seed in range(10):
        corpus, dims = _tiny(seed)
        res = T.train(corpus, T.TrainConfig(epochs=10, batch_size=16, micro_batch=16, lr=1e-3, seed=seed),
                      dims=dims)
        totals = [m.total for m in res.metrics]
        ok += all(b <= a for a, b in zip(totals, totals[1:]))
    assert ok >= 9

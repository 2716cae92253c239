import math
from collections import Counter

import numpy as np
import pytest

from polytrans import corpus as C
from polytrans import evaluate as E
from polytrans import model as M
from polytrans import toylang as tl
from polytrans.errors import ConfigError, EmptyCorpus, LengthMismatch, NoPairs, UnknownLanguage, UnknownToken


# independent corpus BLEU written from the definition, loop by loop
def _ref_bleu(cands, refs):
    num, den = [0] * 4, [0] * 4
    for c, r in zip(cands, refs):
        for n in range(1, 5):
            cg = [tuple(c[i:i + n]) for i in range(len(c) - n + 1)]
            rg = [tuple(r[i:i + n]) for i in range(len(r) - n + 1)]
            used = Counter()
            for g in cg:
                if used[g] < rg.count(g):
                    used[g] += 1
                    num[n - 1] += 1
            den[n - 1] += len(cg)
    ps = [m / t if m else 1 / (t + 1) for m, t in zip(num, den)]
    c_len, r_len = sum(map(len, cands)), sum(map(len, refs))
    bp = 1.0 if c_len > r_len else math.exp(1 - r_len / c_len)
    return 100 * bp * math.exp(sum(map(math.log, ps)) / 4)


def test_perfect_match_is_100():
    c = ["a b c d e".split(), "x y z w".split()]
    assert abs(E.bleu4(c, c).bleu - 100.0) < 1e-12


def test_disjoint_without_smoothing_is_0():
    assert E.bleu4([["a", "b", "c", "d"]], [["w", "x", "y", "z"]], smooth=False).bleu == 0.0


def test_brevity_penalty_hand_value():
    r = E.bleu4([["a", "b", "c", "d"]], [["a", "b", "c", "d", "e"]])
    assert r.precisions == (1.0, 1.0, 1.0, 1.0)
    assert abs(r.brevity_penalty - math.exp(1 - 5 / 4)) < 1e-15
    assert abs(r.bleu - 77.88) < 0.005


def test_matches_reference_implementation():
    rng = np.random.default_rng(0)
    toks = list("abcdef")
    for _ in range(100):
        n = int(rng.integers(1, 6))
        cands = [list(rng.choice(toks, size=int(rng.integers(1, 9)))) for _ in range(n)]
        refs = [list(rng.choice(toks, size=int(rng.integers(1, 9)))) for _ in range(n)]
        assert abs(E.bleu4(cands, refs).bleu - _ref_bleu(cands, refs)) < 1e-9


def test_permutation_invariance():
    rng = np.random.default_rng(1)
    toks = list("abcd")
    cands = [list(rng.choice(toks, size=6)) for _ in range(8)]
    refs = [list(rng.choice(toks, size=7)) for _ in range(8)]
    perm = rng.permutation(8)
    a = E.bleu4(cands, refs).bleu
    b = E.bleu4([cands[i] for i in perm], [refs[i] for i in perm]).bleu
    assert a == b


def test_bleu_in_range_and_errors():
    assert 0 <= E.bleu4([["a"]], [["b", "c"]]).bleu <= 100
    with pytest.raises(LengthMismatch):
        E.bleu4([["a"]], [])
    with pytest.raises(EmptyCorpus):
        E.bleu4([], [])


def test_translation_request_validation():
    with pytest.raises(ConfigError):
        E.TranslationRequest(("x",), "toyA", "toyA")
    with pytest.raises(ConfigError):
        E.TranslationRequest(("x",), "toyA", "toyB", E.DecodeConfig(max_len=0))


def test_translate_deterministic_and_errors(trained_toy):
    P = trained_toy.params
    src = trained_toy.test.samples[0].tokens["toyA"]
    req = E.TranslationRequest(tuple(src), "toyA", "toyC")
    assert E.translate(req, P) == E.translate(req, P)
    with pytest.raises(UnknownLanguage):
        E.translate_batch(P, [src], "toyA", "toyQ")
    with pytest.raises(UnknownToken):
        E.translate_batch(P, [["while"]], "toyA", "toyB")


def test_sampled_prior_mode_is_seeded(trained_toy):
    P = trained_toy.params
    srcs = [s.tokens["toyB"] for s in trained_toy.test.samples[:5]]
    cfg = E.DecodeConfig(deterministic=False, seed=3)
    assert E.translate_batch(P, srcs, "toyB", "toyA", cfg) == E.translate_batch(P, srcs, "toyB", "toyA", cfg)


def test_trained_outputs_use_target_keywords_only(trained_toy):
    P = trained_toy.params
    for src in P.languages:
        for tgt in P.languages:
            if src == tgt:
                continue
            outs = E.translate_batch(P, [s.tokens[src] for s in trained_toy.test.samples], src, tgt)
            allowed = set(tl.KEYWORDS[tgt]) | set(tl.SHARED_TOKENS)
            assert all(set(o) <= allowed for o in outs), (src, tgt)


def test_matrix_layout_and_reproducibility(trained_toy):
    P = trained_toy.params
    a = E.evaluate_matrix(trained_toy.test, P)
    b = E.evaluate_matrix(trained_toy.test, P, workers=3, chunk=7)
    assert a.bleu_csv() == b.bleu_csv()
    assert len(a.bleu) == 6 and all((l, l) not in a.bleu for l in P.languages)
    rows = a.bleu_csv().splitlines()
    assert rows[0] == "src\\tgt,toyA,toyB,toyC"
    assert rows[1].split(",")[1] == ""
    for (s, t), v in a.naive.items():
        assert v == E.naive_copy_bleu(trained_toy.test, s, t)


def test_absent_direction_is_left_empty(trained_toy):
    P = trained_toy.params
    only_ab = [C.MultiParallelSample(s.id, {l: s.tokens[l] for l in ("toyA", "toyB")})
               for s in trained_toy.test.samples]
    m = E.evaluate_matrix(trained_toy.test.subset(only_ab), P)
    assert set(m.bleu) == {("toyA", "toyB"), ("toyB", "toyA")}
    with pytest.raises(NoPairs):
        E.direction_pairs(trained_toy.test.subset(only_ab), "toyA", "toyC")


def test_naive_copy_of_identical_renderings_is_100():
    samples = [C.MultiParallelSample(f"s{i}", {"toyA": "set x = 1 ;".split(), "toyB": "set x = 1 ;".split()})
               for i in range(3)]
    c = C.SemiParallelCorpus(samples, C.toy_vocabulary(("toyA", "toyB")), "test")
    assert abs(E.naive_copy_bleu(c, "toyA", "toyB") - 100.0) < 1e-12


def _desk_dims():
    return M.ModelDims(vocab_size=80)


def test_count_params_matches_instantiated_arrays():
    for n in (2, 3, 5):
        r = E.count_params(_desk_dims(), n)
        assert r.unified_total == r.unified_layout
        P = M.ModelParams.init(_desk_dims(), [f"l{i}" for i in range(n)], seed=n)
        assert r.unified_total == sum(a.data.size for a in P.arrays.values())
        assert r.pairwise_models == n * (n - 1)
        assert r.pairwise_total == r.pairwise_models * (r.encoder + r.decoder)


def test_unified_affine_and_pairwise_quadratic():
    reps = [E.count_params(_desk_dims(), n) for n in range(2, 8)]
    uni = np.array([r.unified_total for r in reps])
    pair = np.array([r.pairwise_total for r in reps])
    assert len(set(np.diff(uni))) == 1
    assert len(set(np.diff(pair, 2))) == 1


def test_two_languages_are_comparable_at_full_size():
    r = E.count_params(M.ModelDims.full_size(), 2)
    assert 0.3 < r.ratio < 1.2


def test_seven_languages_at_full_size():
    r = E.count_params(M.ModelDims.full_size(), 7)
    assert r.pairwise_models == 42
    assert r.ratio < 1 / 15


def test_count_params_needs_two_languages():
    with pytest.raises(ConfigError):
        E.count_params(_desk_dims(), 1)


def test_params_csv_and_svg():
    reps = [E.count_params(_desk_dims(), n) for n in (2, 3)]
    text = E.params_csv(reps)
    assert text.splitlines()[0] == "N,paradigm,total_params"
    assert len(text.splitlines()) == 5
    assert E.params_svg(reps).startswith("<svg")

import base64
from itertools import combinations

import numpy as np
import pytest

from polytrans import corpus as C
from polytrans import toylang as tl
from polytrans.errors import ConfigError, DuplicateId, ParseError, UnknownLanguage, UnknownToken


def cfg(**kw):
    base = dict(languages=("toyA", "toyB", "toyC"), n_samples=200, seed=0)
    base.update(kw)
    return C.CorpusConfig(**base)


def test_no_drops_means_all_multi_parallel():
    c = C.generate_corpus(cfg(missing_rates=(0.0, 0.0, 0.0)))
    assert len(c.multi_parallel()) == len(c) == 200


def test_multi_parallel_fraction_near_product_of_keep_rates():
    c = C.generate_corpus(cfg(n_samples=1000, missing_rates=(0.0, 0.4, 0.4), seed=7))
    frac = C.stats(c).multi_parallel_fraction
    # independent drops: 0.6 * 0.6, binomial stderr ~0.015
    assert abs(frac - 0.36) < 4 * np.sqrt(0.36 * 0.64 / 1000)
    # the exact value is a function of the seed
    again = C.generate_corpus(cfg(n_samples=1000, missing_rates=(0.0, 0.4, 0.4), seed=7))
    assert C.stats(again).multi_parallel_fraction == frac


def test_stats_match_counts_from_generation():
    c = C.generate_corpus(cfg(n_samples=500, missing_rates=(0.2, 0.5, 0.3), seed=3))
    st = C.stats(c)
    langs = list(c.languages)
    for lang in langs:
        assert st.counts[lang] == sum(lang in s.tokens for s in c.samples)
    for a, b in combinations(range(3), 2):
        expect = sum(langs[a] in s.tokens and langs[b] in s.tokens for s in c.samples)
        assert st.pairwise[a, b] == st.pairwise[b, a] == expect
    assert np.all(np.diag(st.pairwise) == 0)
    assert st.multi_parallel_fraction == len(c.multi_parallel()) / len(c)


def test_never_drops_last_language():
    c = C.generate_corpus(cfg(n_samples=300, missing_rates=(0.9, 0.9, 0.9), seed=1))
    assert all(len(s.tokens) >= 1 for s in c.samples)


def test_shift_profile_controls_task_mix():
    c = C.generate_corpus(cfg(n_samples=4000, missing_rates=(0.0, 0.0, 0.5),
                              shift_profiles={"toyC": {"loop": 0.9, "arith": 0.1}}, seed=2))
    present = [s for s in c.samples if "toyC" in s.tokens]
    frac = np.mean([s.task == "loop" for s in present])
    assert abs(frac - 0.9) < 4 * np.sqrt(0.09 / len(present))
    # presence rate unchanged when no clipping occurs
    assert abs(len(present) / len(c) - 0.5) < 4 * np.sqrt(0.25 / len(c))


def test_stats_deterministic_per_seed():
    a = C.stats(C.generate_corpus(cfg(missing_rates=(0.1, 0.3, 0.3), seed=11)))
    b = C.stats(C.generate_corpus(cfg(missing_rates=(0.1, 0.3, 0.3), seed=11)))
    assert a.counts_csv() == b.counts_csv() and a.pairs_csv() == b.pairs_csv()


def test_config_validation():
    with pytest.raises(ConfigError):
        C.generate_corpus(cfg(languages=("toyA",)))
    with pytest.raises(ConfigError):
        C.generate_corpus(cfg(missing_rates=(0.0, 1.0, 0.0)))
    with pytest.raises(ConfigError):
        C.generate_corpus(cfg(shift_profiles={"toyC": {"loop": -1.0}}))


def test_encode_input_layout():
    v = C.toy_vocabulary(("toyA", "toyB", "toyC"), k=2)
    ids = C.encode_input(v, ["a", "b"], "toyB")
    expect = [C.CLS, C.flag_token("toyB", 1), C.flag_token("toyB", 2), "a", "b", C.SEP]
    assert v.tokens(ids) == expect
    assert len(ids) == 2 + 2 + 2


def test_encode_input_empty_code():
    v = C.toy_vocabulary(("toyA", "toyB"), k=1)
    assert v.tokens(C.encode_input(v, [], "toyA")) == [C.CLS, C.flag_token("toyA", 1), C.SEP]


def test_encode_input_errors():
    v = C.toy_vocabulary(("toyA", "toyB"), k=2)
    with pytest.raises(UnknownToken):
        C.encode_input(v, ["while"], "toyA")
    with pytest.raises(UnknownLanguage):
        C.encode_input(v, ["a"], "toyC")


def test_vocabulary_invariants():
    v = C.toy_vocabulary(k=4)
    assert v.pad_id == 0
    assert sorted(v.stoi.values()) == list(range(len(v)))
    flags = [set(v.flag_ids(l)) for l in v.languages]
    for a, b in combinations(flags, 2):
        assert not a & b
    assert C.Vocabulary.from_dict(v.to_dict()) == v


def test_file_round_trip(tmp_path):
    c = C.generate_corpus(cfg(n_samples=50, missing_rates=(0.2, 0.4, 0.4), seed=4))
    path = tmp_path / "train.tsv"
    C.write_cost_format(c.samples, path)
    back = C.load_cost_format(path, list(c.languages), k=4)
    assert [s.id for s in back.samples] == [s.id for s in c.samples]
    assert [s.tokens for s in back.samples] == [s.tokens for s in c.samples]
    assert C.stats(back).pairs_csv() == C.stats(c).pairs_csv()


def test_line_format_is_base64_per_language(tmp_path):
    s = C.MultiParallelSample("s1", {"toyA": "set x = 1 ;".split()}, "program")
    line = C.format_record(s)
    sid, level, field = line.split("\t")
    lang, payload = field.split("=", 1)
    assert (sid, level, lang) == ("s1", "program", "toyA")
    assert base64.b64decode(payload).decode() == "set x = 1 ;"


def test_parse_error_reports_line(tmp_path):
    ok = C.format_record(C.MultiParallelSample("s1", {"toyA": ["x"]}))
    path = tmp_path / "bad.tsv"
    path.write_text(ok + "\n" + "s2\tprogram\ttoyA=@@notbase64\n")
    with pytest.raises(ParseError) as err:
        C.read_records(path)
    assert err.value.line == 2


def test_duplicate_id(tmp_path):
    ok = C.format_record(C.MultiParallelSample("s1", {"toyA": ["x"]}))
    path = tmp_path / "dup.tsv"
    path.write_text(ok + "\n" + ok + "\n")
    with pytest.raises(DuplicateId):
        C.read_records(path)


def test_stats_csv_headers():
    st = C.stats(C.generate_corpus(cfg(n_samples=20)))
    assert st.counts_csv().splitlines()[0] == "lang,count"
    assert st.pairs_csv().splitlines()[0] == "lang_i,lang_j,pairs"


def test_splits_held_out_are_fully_parallel():
    s = C.generate_splits(cfg(missing_rates=(0.0, 0.5, 0.5)), 100, 30, 10)
    assert len(s["test"].multi_parallel()) == 30
    assert len(s["val"].multi_parallel()) == 10
    assert len(s["train"].multi_parallel()) < 100


def test_samples_are_parallel_renderings():
    c = C.generate_corpus(cfg(n_samples=50))
    for s in c.samples:
        asts = {tl.parse(toks, lang) for lang, toks in s.tokens.items()}
        assert len(asts) == 1

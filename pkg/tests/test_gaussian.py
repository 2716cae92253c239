import math

import numpy as np
import pytest

from polytrans import ndtensor as nd
from polytrans.errors import ClampViolation, DimMismatch
from polytrans.gaussian import (
    DiagGaussian,
    kl_between,
    kl_to_standard,
    log_prob,
    mc_kl,
    reparameterize,
)


def G(mean, log_var):
    return DiagGaussian.make(np.atleast_1d(np.asarray(mean, float)), np.atleast_1d(np.asarray(log_var, float)))


def test_zero_noise_gives_mean():
    g = G([1.0, -2.0], [0.3, 1.0])
    np.testing.assert_array_equal(reparameterize(g, np.zeros(2)).data, [1.0, -2.0])


def test_standard_prior_returns_noise():
    eps = np.array([0.3, -1.1, 2.0])
    np.testing.assert_array_equal(reparameterize(DiagGaussian.standard(3), eps).data, eps)


def test_reparameterize_hand_value():
    np.testing.assert_allclose(reparameterize(G([1.0], [math.log(4.0)]), [0.5]).data, [2.0], atol=1e-15)


def test_reparameterize_dim_mismatch():
    with pytest.raises(DimMismatch):
        reparameterize(G([1.0, 2.0], [0.0, 0.0]), [0.5])


def test_reparameterize_empirical_moments():
    g = G([0.5, -1.0], [math.log(2.0), math.log(0.25)])
    n = 100_000
    z = reparameterize(g, np.random.default_rng(3).standard_normal((n, 2))).data
    var = np.array([2.0, 0.25])
    assert np.all(np.abs(z.mean(0) - [0.5, -1.0]) < 3 * np.sqrt(var / n))
    # stderr of a sample variance of a normal is var * sqrt(2 / (n - 1))
    assert np.all(np.abs(z.var(0, ddof=1) - var) < 3 * var * np.sqrt(2 / (n - 1)))


def test_kl_to_standard_values():
    assert kl_to_standard(DiagGaussian.standard(4)).item() == 0.0
    assert kl_to_standard(G([1.0], [0.0])).item() == 0.5
    # 0.5 * (4 - 1 - ln 4)
    assert abs(kl_to_standard(G([0.0], [math.log(4.0)])).item() - 0.5 * (3 - math.log(4))) < 1e-15
    assert abs(kl_to_standard(G([0.0], [math.log(4.0)])).item() - 0.806853) < 1e-6


def test_kl_between_values():
    q = G([0.3, -0.2], [0.1, 0.5])
    assert kl_between(q, q).item() == 0.0
    assert kl_between(G([1.0], [0.0]), G([0.0], [0.0])).item() == 0.5
    assert abs(kl_between(G([0.0], [math.log(2.0)]), G([0.0], [0.0])).item() - 0.153426) < 1e-6


def test_kl_between_dim_mismatch():
    with pytest.raises(DimMismatch):
        kl_between(G([0.0], [0.0]), G([0.0, 1.0], [0.0, 0.0]))


def test_kl_to_standard_equals_kl_between_standard():
    rng = np.random.default_rng(0)
    for _ in range(50):
        g = G(rng.standard_normal(5), rng.standard_normal(5))
        a = kl_to_standard(g).item()
        b = kl_between(g, DiagGaussian.standard(5)).item()
        assert abs(a - b) < 1e-12


def test_kl_nonnegative_on_random_pairs():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        d = int(rng.integers(1, 5))
        q = G(rng.standard_normal(d), 2 * rng.standard_normal(d))
        r = G(rng.standard_normal(d), 2 * rng.standard_normal(d))
        assert kl_between(q, r).item() > 0.0


def test_log_prob_at_mode():
    assert abs(log_prob(DiagGaussian.standard(3), np.zeros(3)) + 1.5 * math.log(2 * math.pi)) < 1e-14


def test_mc_kl_identical_is_zero_within_stderr():
    q = G([0.2, 0.4], [0.3, -0.3])
    est, se = mc_kl(q, q, 10_000, seed=1, return_stderr=True)
    assert abs(est) <= 3 * se + 1e-15


def test_mc_kl_matches_closed_form():
    est = mc_kl(G([1.0], [0.0]), G([0.0], [0.0]), 1_000_000, seed=5)
    assert abs(est - 0.5) < 0.01


def test_mc_kl_reproducible_per_seed():
    q, r = G([1.0], [0.3]), G([0.0], [0.0])
    assert mc_kl(q, r, 1000, seed=3) == mc_kl(q, r, 1000, seed=3)


def test_clamp_and_strict_mode():
    g = DiagGaussian.make(np.zeros(2), np.array([-30.0, 25.0]))
    np.testing.assert_array_equal(g.log_var.data, [-20.0, 20.0])
    with pytest.raises(ClampViolation):
        DiagGaussian.make(np.zeros(2), np.array([-30.0, 0.0]), strict=True)


def test_kl_gradients_match_central_differences():
    rng = np.random.default_rng(2)
    m, lv = rng.standard_normal(3), rng.standard_normal(3)
    f = lambda a, b: kl_to_standard(DiagGaussian.make(a, b))
    assert nd.grad_check_many(f, [m, lv], 1e-5) < 1e-4
    m2, lv2 = rng.standard_normal(3), rng.standard_normal(3)
    f2 = lambda a, b, c, d: kl_between(DiagGaussian.make(a, b), DiagGaussian.make(c, d))
    assert nd.grad_check_many(f2, [m, lv, m2, lv2], 1e-5) < 1e-4

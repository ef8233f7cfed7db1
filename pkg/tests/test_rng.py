"""Random kernels: seeding contract, distributional checks, special functions."""

import numpy as np
import pytest

from chorus.errors import ConfigError
from chorus.rng import (
    RngStream,
    log_beta_fn,
    log_sigmoid,
    logistic,
    logit,
    sample_bernoulli,
    sample_beta,
    sample_categorical_log,
    sample_dirichlet,
    sample_gamma,
    sample_normal,
)


class TestSeeding:
    def test_identical_stream_replays_identical_draws(self):
        a = RngStream(123, 7)
        b = RngStream(123, 7)
        assert np.array_equal(a.gen.random(1000), b.gen.random(1000))

    def test_distinct_stream_ids_differ(self):
        a = RngStream(123, 0)
        b = RngStream(123, 1)
        assert not np.array_equal(a.gen.random(100), b.gen.random(100))

    def test_tuple_stream_ids(self):
        a = RngStream(5, (2, 3))
        b = RngStream(5, (2, 3))
        c = RngStream(5, (3, 2))
        assert np.array_equal(a.gen.random(50), b.gen.random(50))
        assert not np.array_equal(a.gen.random(50), c.gen.random(50))

    def test_substream_is_deterministic(self):
        a = RngStream(5, 1).substream(4)
        b = RngStream(5, (1, 4))
        assert np.array_equal(a.gen.random(50), b.gen.random(50))


class TestBeta:
    def test_uniform_mean(self):
        rng = RngStream(1)
        draws = sample_beta(rng, np.ones(100_000), np.ones(100_000))
        assert abs(draws.mean() - 0.5) < 0.005

    def test_elicited_tpr_quantiles(self):
        # Beta(45, 5) has 95% equal-tailed interval (0.804, 0.966)
        rng = RngStream(2)
        draws = sample_beta(rng, np.full(100_000, 45.0), np.full(100_000, 5.0))
        lo, hi = np.quantile(draws, [0.025, 0.975])
        assert abs(lo - 0.804) < 0.005
        assert abs(hi - 0.966) < 0.005

    def test_sparse_occurrence_mean(self):
        rng = RngStream(3)
        draws = sample_beta(rng, np.full(100_000, 2.0), np.full(100_000, 98.0))
        assert abs(draws.mean() - 0.02) < 0.001

    def test_rejects_nonpositive_shape(self):
        rng = RngStream(0)
        with pytest.raises(ConfigError):
            sample_beta(rng, 0.0, 1.0)
        with pytest.raises(ConfigError):
            sample_beta(rng, 1.0, -2.0)


class TestOtherKernels:
    def test_gamma_shape_rate_mean(self):
        rng = RngStream(4)
        draws = sample_gamma(rng, np.full(100_000, 0.5), np.full(100_000, 0.5))
        assert abs(draws.mean() - 1.0) < 0.02

    def test_normal_logit_scale_quantiles(self):
        # sigmoid of N(logit(0.9), 0.48) spans (0.778, 0.959) at 95%
        rng = RngStream(5)
        draws = logistic(sample_normal(rng, np.full(100_000, logit(0.9)), 0.48))
        lo, hi = np.quantile(draws, [0.025, 0.975])
        assert abs(lo - 0.778) < 0.01
        assert abs(hi - 0.959) < 0.01

    def test_bernoulli_degenerate(self):
        rng = RngStream(6)
        assert sample_bernoulli(rng, 0.0) == 0
        assert sample_bernoulli(rng, 1.0) == 1
        assert np.all(sample_bernoulli(rng, np.zeros(100)) == 0)

    def test_dirichlet_sums_to_one(self):
        rng = RngStream(7)
        draw = sample_dirichlet(rng, [0.5, 1.0, 2.0])
        assert draw.shape == (3,)
        assert abs(draw.sum() - 1.0) < 1e-12


class TestCategoricalLog:
    def test_uniform_weights(self):
        rng = RngStream(8)
        counts = np.zeros(3)
        for _ in range(30_000):
            counts[sample_categorical_log(rng, [0.0, 0.0, 0.0])] += 1
        assert np.all(np.abs(counts / 30_000 - 1 / 3) < 0.01)

    def test_degenerate_minus_inf(self):
        rng = RngStream(9)
        for _ in range(50):
            assert sample_categorical_log(rng, [0.0, -np.inf]) == 0

    def test_normalization(self):
        rng = RngStream(10)
        hits = sum(
            sample_categorical_log(rng, [np.log(1.0), np.log(3.0)]) for _ in range(40_000)
        )
        assert abs(hits / 40_000 - 0.75) < 0.01

    def test_shift_invariance_chi2(self):
        # adding a constant to all log weights leaves frequencies unchanged
        from scipy.stats import chi2_contingency

        lw = np.log([0.2, 0.5, 0.3])
        rng_a, rng_b = RngStream(11, 0), RngStream(11, 1)
        counts = np.zeros((2, 3))
        for _ in range(20_000):
            counts[0, sample_categorical_log(rng_a, lw)] += 1
            counts[1, sample_categorical_log(rng_b, lw + 123.4)] += 1
        _, p, _, _ = chi2_contingency(counts)
        assert p > 0.01

    def test_all_minus_inf_rejected(self):
        with pytest.raises(ConfigError):
            sample_categorical_log(RngStream(0), [-np.inf, -np.inf])


class TestLogistic:
    def test_center(self):
        assert logistic(0.0) == 0.5

    def test_round_trip(self):
        assert abs(logistic(logit(0.81)) - 0.81) < 1e-12
        assert abs(logistic(logit(0.9)) - 0.9) < 1e-12

    def test_saturation_no_overflow(self):
        assert 0.0 < logistic(-40.0) < 1e-15
        assert 1.0 - logistic(40.0) < 1e-15
        assert np.isfinite(log_sigmoid(-700.0))

    def test_symmetry(self):
        x = np.linspace(-30, 30, 101)
        assert np.allclose(logistic(-x), 1.0 - logistic(x), atol=1e-12)


class TestLogBeta:
    def test_unit_case(self):
        assert log_beta_fn(1.0, 1.0) == pytest.approx(0.0, abs=1e-12)

    def test_factorial_identity(self):
        # B(2, 98) = 1/(98*99)
        assert log_beta_fn(2.0, 98.0) == pytest.approx(-np.log(98.0 * 99.0), rel=1e-12)

    def test_ratio(self):
        # B(3,1) = 1/3, B(2,1) = 1/2
        assert log_beta_fn(3.0, 1.0) - log_beta_fn(2.0, 1.0) == pytest.approx(
            np.log(2.0 / 3.0), rel=1e-12
        )

    def test_recurrence_randomized(self):
        # ln B(a+1, b) - ln B(a, b) = ln(a / (a + b))
        rng = np.random.default_rng(42)
        for _ in range(200):
            a = rng.uniform(0.05, 50.0)
            b = rng.uniform(0.05, 50.0)
            lhs = log_beta_fn(a + 1.0, b) - log_beta_fn(a, b)
            assert lhs == pytest.approx(np.log(a / (a + b)), abs=1e-10)

    def test_rejects_nonpositive(self):
        with pytest.raises(ConfigError):
            log_beta_fn(0.0, 1.0)

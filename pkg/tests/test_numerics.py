"""Tests for the shared numerical kernels."""

import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sadam.errors import ConfigError, InputDomainError
from sadam.numerics import (
    LOG2,
    as_vector,
    five_number_summary,
    loglog_slope,
    percentile_nearest_rank,
    softplus_stable,
)


def softplus_reference(x, beta, dps=50):
    """High-precision oracle: (1/beta) * log(1 + e^(beta*x))."""
    with mp.workdps(dps):
        return float(mp.log(1 + mp.e ** (mp.mpf(beta) * mp.mpf(repr(x)))) / mp.mpf(beta))


class TestSoftplus:
    def test_at_zero_is_log2_over_beta(self):
        """softplus(0) = log(2)/beta, forced by the formula."""
        assert softplus_stable(0.0, 50.0) == math.log(2.0) / 50.0

    def test_large_argument_saturates_to_x(self):
        """At beta*x = 500 the correction is ~1e-219: indistinguishable from x."""
        assert softplus_stable(10.0, 50.0) == 10.0

    @pytest.mark.parametrize(
        "x,beta",
        [(0.0316228, 50.0), (0.0316227766016838, 50.0), (0.5, 50.0),
         (1.0, 50.0), (2.0, 10.0), (0.1, 1e-4), (0.05, 1000.0), (29.9 / 50, 50.0)],
    )
    def test_matches_high_precision_oracle(self, x, beta):
        expected = softplus_reference(x, beta)
        assert softplus_stable(x, beta) == pytest.approx(expected, rel=5e-15)

    def test_spec_point_value(self):
        # frozen from softplus_reference(0.0316228, 50) = 0.035364676699843102...
        assert softplus_stable(0.0316228, 50.0) == pytest.approx(0.0353646766998431, rel=1e-13)

    def test_branches_agree_at_switch(self):
        """Both evaluation branches agree to < 1e-13 relative near beta*x = 30."""
        beta = 50.0
        for bx in (29.999999, 30.000001):
            x = bx / beta
            direct = math.log1p(math.exp(beta * x)) / beta
            shifted = x + math.log1p(math.exp(-beta * x)) / beta
            assert abs(direct - shifted) / direct < 1e-13
            assert softplus_stable(x, beta) == pytest.approx(direct, rel=1e-13)

    def test_vector_matches_scalar(self):
        xs = np.array([0.0, 1e-6, 0.03, 0.5, 0.7, 10.0, 400.0])
        out = softplus_stable(xs, 50.0)
        for xi, oi in zip(xs, out):
            assert oi == softplus_stable(float(xi), 50.0)

    @pytest.mark.parametrize("bad", [-1e-12, -1.0, math.nan, math.inf])
    def test_rejects_bad_arguments(self, bad):
        with pytest.raises(InputDomainError):
            softplus_stable(bad, 50.0)

    @pytest.mark.parametrize("bad_beta", [0.0, -1.0, math.nan, math.inf])
    def test_rejects_bad_beta(self, bad_beta):
        with pytest.raises(ConfigError):
            softplus_stable(1.0, bad_beta)

    @given(
        x=st.floats(min_value=0.0, max_value=1e6, allow_nan=False),
        beta=st.floats(min_value=1e-4, max_value=1e4, allow_nan=False),
    )
    def test_lower_envelope(self, x, beta):
        """softplus(x) >= max(x, log(2)/beta) for all x >= 0."""
        out = softplus_stable(x, beta)
        assert out >= x
        assert out >= math.log(2.0) / beta * (1.0 - 1e-15)

    @given(
        x=st.floats(min_value=0.0, max_value=100.0, allow_nan=False),
        dx=st.floats(min_value=1e-9, max_value=10.0, allow_nan=False),
        beta=st.floats(min_value=0.01, max_value=1000.0, allow_nan=False),
    )
    def test_monotone_increasing(self, x, dx, beta):
        assert softplus_stable(x + dx, beta) >= softplus_stable(x, beta)

    @given(
        x=st.floats(min_value=1e-8, max_value=1e8, allow_nan=False),
        factor=st.floats(min_value=40.0, max_value=500.0, allow_nan=False),
    )
    def test_gap_closes_beyond_forty(self, x, factor):
        """Once beta*x >= 40 the computed value collapses onto x exactly."""
        beta = factor / x
        assert abs(softplus_stable(x, beta) - x) < 1e-17

    def test_gap_monotone_in_beta_x(self):
        """softplus(x) - x shrinks monotonically as beta*x grows."""
        beta = 50.0
        xs = np.linspace(0.0, 1.0, 200)
        gaps = softplus_stable(xs, beta) - xs
        assert np.all(np.diff(gaps) <= 0.0)


class TestPercentile:
    def test_spec_examples(self):
        assert percentile_nearest_rank([1, 2, 3, 4, 5], 25) == 2
        assert percentile_nearest_rank([1, 2, 3, 4, 5], 50) == 3
        assert percentile_nearest_rank([5, 1], 100) == 5

    def test_q_zero_is_min(self):
        assert percentile_nearest_rank([3, 1, 2], 0) == 1

    def test_empty_rejected(self):
        with pytest.raises(InputDomainError):
            percentile_nearest_rank([], 50)

    @pytest.mark.parametrize("q", [-1, 101, math.nan])
    def test_bad_q_rejected(self, q):
        with pytest.raises(InputDomainError):
            percentile_nearest_rank([1.0], q)

    @given(
        values=st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40),
        q=st.floats(min_value=0, max_value=100),
        seed=st.integers(0, 2**16),
    )
    def test_permutation_invariant(self, values, q, seed):
        arr = np.array(values)
        shuffled = arr[np.random.default_rng(seed).permutation(arr.size)]
        assert percentile_nearest_rank(arr, q) == percentile_nearest_rank(shuffled, q)

    @given(
        values=st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40),
        q1=st.floats(min_value=0, max_value=100),
        q2=st.floats(min_value=0, max_value=100),
    )
    def test_monotone_in_q(self, values, q1, q2):
        lo, hi = sorted((q1, q2))
        assert percentile_nearest_rank(values, lo) <= percentile_nearest_rank(values, hi)

    def test_five_number_summary_consistent(self):
        rng = np.random.default_rng(4)
        v = rng.standard_normal(37)
        summary = five_number_summary(v)
        expected = tuple(percentile_nearest_rank(v, q) for q in (0, 25, 50, 75, 100))
        assert summary == expected


class TestLogLogSlope:
    def test_exact_inverse_sqrt_power_law(self):
        ts = [100.0, 1000.0, 10000.0]
        ys = [3.7 / math.sqrt(t) for t in ts]
        assert loglog_slope(ts, ys) == pytest.approx(-0.5, abs=1e-12)

    def test_constant_is_flat(self):
        assert loglog_slope([10.0, 100.0], [1.0, 1.0]) == pytest.approx(0.0, abs=1e-15)

    def test_identity_power_law(self):
        assert loglog_slope([1.0, 10.0, 100.0], [1.0, 10.0, 100.0]) == pytest.approx(1.0, rel=1e-12)

    def test_rejects_nonpositive_entries(self):
        with pytest.raises(InputDomainError):
            loglog_slope([1.0, 0.0], [1.0, 1.0])
        with pytest.raises(InputDomainError):
            loglog_slope([1.0, 2.0], [1.0, -1.0])

    def test_rejects_short_or_mismatched(self):
        with pytest.raises(InputDomainError):
            loglog_slope([1.0], [1.0])
        with pytest.raises(InputDomainError):
            loglog_slope([1.0, 2.0], [1.0, 2.0, 3.0])

    def test_rejects_degenerate_ts(self):
        with pytest.raises(InputDomainError):
            loglog_slope([5.0, 5.0], [1.0, 2.0])


class TestVectorHelpers:
    def test_as_vector_rejects_matrix(self):
        with pytest.raises(InputDomainError):
            as_vector(np.zeros((2, 2)))

    def test_as_vector_rejects_nonfinite(self):
        with pytest.raises(InputDomainError):
            as_vector([1.0, math.inf])

    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=16), st.integers(0, 2**16))
    def test_elementwise_ops_match_scalar_math(self, values, seed):
        """numpy's product/max/sqrt agree with scalar math coordinatewise."""
        a = np.array(values)
        b = np.random.default_rng(seed).uniform(0.5, 2.0, a.size)
        prod = a * b
        mx = np.maximum(a, b)
        root = np.sqrt(np.abs(a))
        for j in range(a.size):
            assert prod[j] == a[j] * b[j]
            assert mx[j] == max(a[j], b[j])
            assert root[j] == math.sqrt(abs(a[j]))

    def test_log2_constant(self):
        assert LOG2 == math.log(2.0)

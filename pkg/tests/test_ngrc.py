import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from hybridrc.ngrc import NgrcConfig, build_features, feature_dim, feature_matrix, monomial_labels, window_from_series

GOLDEN_LAYOUT_D3_K2 = [
    "1", "x", "y", "z", "x(t-1)", "y(t-1)", "z(t-1)",
    "x*x", "x*y", "x*z", "x*x(t-1)", "x*y(t-1)", "x*z(t-1)",
    "y*y", "y*z", "y*x(t-1)", "y*y(t-1)", "y*z(t-1)",
    "z*z", "z*x(t-1)", "z*y(t-1)", "z*z(t-1)",
    "x(t-1)*x(t-1)", "x(t-1)*y(t-1)", "x(t-1)*z(t-1)",
    "y(t-1)*y(t-1)", "y(t-1)*z(t-1)", "z(t-1)*z(t-1)",
]


def brute_force(window):
    lin = [float(v) for row in window for v in row]
    quad = [lin[i] * lin[j] for i in range(len(lin)) for j in range(i, len(lin))]
    return np.array([1.0] + lin + quad)


def count_monomials(n):
    return sum(1 for _ in itertools.combinations_with_replacement(range(n), 2))


class TestDimension:
    @pytest.mark.parametrize("d,k,expected", [(3, 2, 28), (1, 1, 3), (1, 10, 66)])
    def test_feature_dim(self, d, k, expected):
        assert feature_dim(NgrcConfig(k=k, d=d)) == expected
        assert 1 + d * k + count_monomials(d * k) == expected

    def test_warmup_steps(self):
        assert NgrcConfig(k=3, s=6, d=1).warmup_steps == 12

    def test_invalid(self):
        with pytest.raises(ValueError):
            NgrcConfig(k=0)


class TestBuildFeatures:
    def test_single_observation(self):
        np.testing.assert_array_equal(build_features([[2.0]], NgrcConfig(k=1, d=1)), [1, 2, 4])

    def test_two_scalars(self):
        np.testing.assert_array_equal(build_features([[3.0], [5.0]], NgrcConfig(k=2, d=1)), [1, 3, 5, 9, 15, 25])

    def test_zero_window(self):
        f = build_features(np.zeros((2, 3)), NgrcConfig())
        assert f[0] == 1 and not np.any(f[1:])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            build_features(np.zeros((3, 3)), NgrcConfig())

    @given(st.integers(1, 3), st.integers(1, 4), st.data())
    def test_brute_force_equivalence(self, d, k, data):
        w = data.draw(hnp.arrays(np.float64, (k, d), elements=st.floats(-10, 10)))
        np.testing.assert_array_equal(build_features(w, NgrcConfig(k=k, d=d)), brute_force(w))

    # products of tiny values go subnormal and lose the exact power-of-two scaling
    @given(hnp.arrays(np.float64, (2, 3), elements=st.floats(-10, 10).filter(lambda v: v == 0 or abs(v) > 1e-100)))
    def test_scaling(self, w):
        cfg = NgrcConfig()
        a, b = build_features(w, cfg), build_features(2 * w, cfg)
        np.testing.assert_array_equal(b[1:7], 2 * a[1:7])
        np.testing.assert_array_equal(b[7:], 4 * a[7:])

    def test_golden_layout(self):
        assert monomial_labels(NgrcConfig(), ["x", "y", "z"]) == GOLDEN_LAYOUT_D3_K2


class TestFeatureMatrix:
    @given(st.integers(1, 3), st.integers(1, 3), st.integers(1, 3))
    def test_rows_match_windows(self, d, k, s):
        cfg = NgrcConfig(k=k, s=s, d=d)
        x = np.random.default_rng(d * 100 + k * 10 + s).normal(size=(20, d))
        M = feature_matrix(x, cfg)
        assert M.shape == (20 - cfg.warmup_steps, cfg.feature_dim)
        for row, t in zip(M, range(cfg.warmup_steps, 20)):
            np.testing.assert_array_equal(row, build_features(window_from_series(x, t, cfg), cfg))

    def test_start_before_warmup(self):
        with pytest.raises(ValueError):
            feature_matrix(np.zeros((10, 1)), NgrcConfig(k=3, d=1), start=1)


class TestWindow:
    def test_k1(self):
        x = np.arange(12.0).reshape(4, 3)
        np.testing.assert_array_equal(window_from_series(x, 2, NgrcConfig(k=1)), x[[2]])

    def test_spacing(self):
        x = np.arange(10.0)[:, None]
        np.testing.assert_array_equal(window_from_series(x, 6, NgrcConfig(k=2, s=6, d=1)).ravel(), [6, 0])

    def test_splice_at_first_prediction(self):
        truth = np.arange(10.0)[:, None]
        pred = np.array([[100.0], [101.0]])
        w = window_from_series(truth, 10, NgrcConfig(k=2, s=1, d=1), boundary=9, predicted=pred)
        np.testing.assert_array_equal(w.ravel(), [100.0, 9.0])

    def test_underflow(self):
        with pytest.raises(IndexError):
            window_from_series(np.zeros((10, 1)), 0, NgrcConfig(k=2, d=1))

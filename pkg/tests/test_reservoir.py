import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from hybridrc import systems
from hybridrc.reservoir import (Reservoir, ReservoirParams, build_reservoir, drive, estimate_sync_time,
                                recommended_warmup, rescale_spectral_radius, spectral_radius, update, warmup)


def lorenz_inputs(n, seed=0):
    tr = systems.integrate_and_sample(systems.lorenz(), n=n, rng=np.random.default_rng(seed))
    return systems.normalize(tr, systems.compute_stats(tr)).samples


def tiny(A, B, c=0.0, alpha=1.0):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    p = ReservoirParams(N=A.shape[0], avg_degree=1, spectral_radius=0.5, leak=alpha, bias=c, n_warmup=0)
    return Reservoir(A=A, B=B, bias=np.full(A.shape[0], c), params=p)


class TestParams:
    @pytest.mark.parametrize("kw", [dict(N=0), dict(avg_degree=60), dict(leak=0.0), dict(leak=1.5),
                                    dict(input_scale=0.0), dict(spectral_radius=-1.0)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            ReservoirParams(**kw)


class TestSpectralRadius:
    @pytest.mark.parametrize("N", [10, 50, 200])
    def test_rescaled_radius_over_seeds(self, N):
        p = ReservoirParams(N=N, avg_degree=min(10, N))
        for seed in range(20):
            res = build_reservoir(p, 3, np.random.default_rng(seed))
            oracle = np.abs(np.linalg.eigvals(res.dense_A())).max()
            assert abs(oracle - p.spectral_radius) <= 1e-6 * p.spectral_radius

    def test_diagonal(self):
        np.testing.assert_allclose(rescale_spectral_radius(np.diag([2.0, 1.0]), 0.9), np.diag([0.9, 0.45]))

    def test_zero_target(self):
        res = build_reservoir(ReservoirParams(spectral_radius=0.0), 3, 0)
        assert not np.any(res.dense_A())

    def test_zero_spectrum_rescale_raises(self):
        with pytest.raises(ValueError):
            rescale_spectral_radius(np.array([[0.0, 1.0], [0.0, 0.0]]), 0.9)

    def test_signed_matrix(self):
        # rotation-like block: |eigenvalues| = 1 though no entry-wise power iteration finds it
        A = np.array([[0.0, -1.0], [1.0, 0.0]])
        assert spectral_radius(A) == pytest.approx(1.0)
        assert spectral_radius(sp.csr_array(np.kron(np.eye(10), A))) == pytest.approx(1.0)

    def test_nilpotent_patterns_are_redrawn(self):
        # at N=2, <k>=1 many draws are nilpotent; construction must still succeed
        for seed in range(30):
            res = build_reservoir(ReservoirParams(N=2, avg_degree=1), 1, seed)
            assert spectral_radius(res.dense_A()) == pytest.approx(0.9)


class TestBuild:
    def test_link_count(self):
        counts = [np.count_nonzero(build_reservoir(ReservoirParams(), 3, s).dense_A()) for s in range(10)]
        sd = math.sqrt(2500 * 0.2 * 0.8)
        for c in counts:
            assert abs(c - 500) <= 4 * sd

    def test_input_bounds(self):
        res = build_reservoir(ReservoirParams(input_scale=0.3), 4, 1)
        assert res.B.shape == (50, 4)
        assert np.all(np.abs(res.B) <= 0.3)

    def test_deterministic(self):
        a = build_reservoir(ReservoirParams(), 3, np.random.default_rng(9))
        b = build_reservoir(ReservoirParams(), 3, np.random.default_rng(9))
        np.testing.assert_array_equal(a.dense_A(), b.dense_A())
        np.testing.assert_array_equal(a.B, b.B)

    def test_dense_above_quarter_density(self):
        assert isinstance(build_reservoir(ReservoirParams(N=20, avg_degree=10), 1, 0).A, np.ndarray)
        assert sp.issparse(build_reservoir(ReservoirParams(N=200), 1, 0).A)

    def test_weights_uniform_before_scaling(self):
        res = build_reservoir(ReservoirParams(N=400, avg_degree=40), 1, 3)
        A = res.dense_A()
        w = A[A != 0]
        w = w / np.abs(w).max()
        # uniform on [-1, 1]: mean ~ 0, E|w| ~ 1/2
        assert abs(w.mean()) < 0.02 and abs(np.abs(w).mean() - 0.5) < 0.02


class TestUpdate:
    def test_zero_network(self):
        res = tiny([[0.0]], [[0.0]])
        assert update(res, np.array([0.7]), np.array([5.0]))[0] == 0.0

    def test_scalar_oracle(self):
        res = tiny([[0.5]], [[1.0]])
        assert update(res, np.array([0.2]), np.array([0.3]))[0] == pytest.approx(0.3799489622552249, abs=1e-15)

    def test_frozen_leak(self, backend):
        # alpha = 0 is outside the configurable range but the kernel honours it
        from hybridrc import kernels
        res = tiny([[0.5]], [[1.0]])
        states, final = kernels.reservoir_drive(*res.csr_arrays, res.B, 0.0, 0.0, np.array([0.2]),
                                                np.array([[0.3], [0.9]]), 0)
        np.testing.assert_array_equal(final, [0.2])

    @given(hnp.arrays(np.float64, 8, elements=st.floats(-1, 1)), st.floats(0.01, 1.0),
           hnp.arrays(np.float64, 2, elements=st.floats(-50, 50)))
    def test_bounded(self, r, alpha, u):
        res = build_reservoir(ReservoirParams(N=8, avg_degree=3, leak=alpha), 2, 0)
        assert np.max(np.abs(update(res, r, u))) <= 1.0

    def test_shape_errors(self):
        res = tiny([[0.5]], [[1.0]])
        with pytest.raises(ValueError):
            update(res, np.zeros(2), np.zeros(1))


@pytest.mark.usefixtures("backend")
class TestDrive:
    def test_matches_update_loop(self):
        res = build_reservoir(ReservoirParams(N=30, leak=0.7, bias=0.3), 3, 2)
        u = np.random.default_rng(0).normal(size=(40, 3))
        states, final = drive(res, u, record_from=5)
        r = np.zeros(30)
        ref = []
        for x in u:
            r = update(res, r, x)
            ref.append(r)
        np.testing.assert_allclose(states, ref[5:], atol=1e-13)
        np.testing.assert_allclose(final, ref[-1], atol=1e-13)

    def test_dense_and_sparse_agree(self):
        res = build_reservoir(ReservoirParams(N=40), 3, 4)
        dense = Reservoir(res.dense_A(), res.B, res.bias, res.params)
        u = np.random.default_rng(1).normal(size=(50, 3))
        np.testing.assert_array_equal(drive(res, u)[0], drive(dense, u)[0])

    def test_warmup(self):
        res = build_reservoir(ReservoirParams(), 3, 0)
        np.testing.assert_array_equal(warmup(res, np.zeros((0, 3))), np.zeros(50))
        u = lorenz_inputs(1001)
        s = warmup(res, u[:1000])
        np.testing.assert_array_equal(s, drive(res, u)[0][999])

    def test_echo_state_convergence(self):
        res = build_reservoir(ReservoirParams(), 3, 0)
        u = lorenz_inputs(1000, 1)
        g = np.random.default_rng(3)
        a = drive(res, u, g.uniform(-1, 1, 50))[1]
        b = drive(res, u, g.uniform(-1, 1, 50))[1]
        assert np.linalg.norm(a - b) < 1e-3


class TestSync:
    def test_table_defaults_warmup_window(self):
        u = lorenz_inputs(1000, 2)
        tau = 0.06
        ratios = []
        for seed in range(10):
            res = build_reservoir(ReservoirParams(), 3, seed)
            g = np.random.default_rng(seed)
            t_sync = estimate_sync_time(res, u, g.uniform(-1, 1, 50), g.uniform(-1, 1, 50), tau)
            ratios.append(recommended_warmup(t_sync, 10000 * tau) / tau)
        assert all(10 <= r <= 30 for r in ratios)  # 20 tau, +-50%

    def test_memoryless(self):
        res = tiny(np.zeros((3, 3)), np.ones((3, 1)))
        t = estimate_sync_time(res, np.ones((10, 1)), np.ones(3), -np.ones(3), 0.06)
        assert 0 < t <= 0.06

    def test_non_contracting(self):
        # r -> tanh(2r) pushes copies started either side of 0 apart
        res = tiny(np.eye(2) * 2.0, np.zeros((2, 1)))
        with pytest.raises(ValueError):
            estimate_sync_time(res, np.zeros((300, 1)), np.full(2, 1e-3), np.full(2, -1e-3))

    def test_equal_states(self):
        with pytest.raises(ValueError):
            estimate_sync_time(tiny([[0.5]], [[1.0]]), np.ones((5, 1)), np.ones(1), np.ones(1))

    def test_recommendation(self):
        assert recommended_warmup(0.1, 100.0) == 1.0
        assert recommended_warmup(10.0, 100.0) == 25.0

    def test_negative_slope(self):
        res = build_reservoir(ReservoirParams(), 3, 5)
        g = np.random.default_rng(0)
        assert estimate_sync_time(res, lorenz_inputs(500), g.uniform(-1, 1, 50), g.uniform(-1, 1, 50)) > 0

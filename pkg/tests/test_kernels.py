"""Compiled and numpy kernels must agree to rounding on small inputs."""
import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from hybridrc import kernels, systems
from hybridrc.reservoir import ReservoirParams, build_reservoir

pytestmark = pytest.mark.skipif(not kernels.HAVE_EXTENSION, reason="compiled extension not built")

PY = kernels.get_backend("python")
CY = kernels.get_backend("cython") if kernels.HAVE_EXTENSION else None


def test_backend_selection():
    assert kernels.BACKEND in ("cython", "python")
    assert PY.BACKEND == "python"
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


@pytest.mark.parametrize("sid,spec,y0", [(0, systems.lorenz(), (1.0, 1.0, 20.0)),
                                         (1, systems.rossler(), (1.0, 1.0, 0.0)),
                                         (2, systems.double_scroll(), (0.1, -0.1, 0.2))])
def test_ode_sample(sid, spec, y0):
    y0 = np.array(y0)
    a = CY.ode_sample(sid, spec.param_vector, y0, 1e-3, 100, 20, 50)
    b = PY.ode_sample(sid, spec.param_vector, y0, 1e-3, 100, 20, 50)
    np.testing.assert_allclose(a, b, rtol=1e-11, atol=1e-11)


@given(hnp.arrays(np.float64, (5, 3), elements=st.floats(-10, 10)))
def test_ode_propagate(states):
    p = systems.lorenz().param_vector
    np.testing.assert_allclose(CY.ode_propagate(0, p, states, 1e-3, 30),
                               PY.ode_propagate(0, p, states, 1e-3, 30), rtol=1e-11, atol=1e-11)


def test_dde_sample():
    p = systems.mackey_glass().param_vector
    hist = np.linspace(0.5, 1.5, 2001)
    for a, b in zip(CY.dde_sample(p, hist, 1e-3, 500, 60, 40), PY.dde_sample(p, hist, 1e-3, 500, 60, 40)):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("alpha,start", [(1.0, 0), (0.3, 7)])
def test_reservoir_drive(alpha, start):
    g = np.random.default_rng(0)
    res = build_reservoir(ReservoirParams(N=40), 3, g)
    u = g.normal(size=(60, 3))
    r0 = g.uniform(-1, 1, 40)
    a = CY.reservoir_drive(*res.csr_arrays, res.B, 0.2, alpha, r0, u, start)
    b = PY.reservoir_drive(*res.csr_arrays, res.B, 0.2, alpha, r0, u, start)
    np.testing.assert_allclose(a[0], b[0], atol=1e-13)
    np.testing.assert_allclose(a[1], b[1], atol=1e-13)


@pytest.mark.parametrize("use_res,use_ngrc", [(True, False), (False, True), (True, True)])
def test_closed_loop(use_res, use_ngrc):
    g = np.random.default_rng(1)
    d, N, k, s = 2, 12, 2, 2
    res = build_reservoir(ReservoirParams(N=N, avg_degree=4), d, g)
    width = (N if use_res else 0) + ((1 + d * k + d * k * (d * k + 1) // 2) if use_ngrc else 0)
    W = g.normal(scale=0.05, size=(d, width))
    window = g.normal(size=((k - 1) * s + 1, d))
    r0 = g.uniform(-1, 1, N)
    args = (*res.csr_arrays, res.B, 0.1, 0.8, r0, use_res, W, use_ngrc, k, s, window, 40, 1e6)
    (a, na), (b, nb) = CY.closed_loop(*args), PY.closed_loop(*args)
    assert na == nb
    np.testing.assert_allclose(a[:na], b[:nb], atol=1e-12)


def test_closed_loop_divergence_step():
    W = np.array([[0.0, 10.0, 0.0]])  # features are (1, x, x*x)
    window = np.array([[1.0]])
    empty = (np.zeros(1, np.intc), np.zeros(0, np.intc), np.zeros(0), np.zeros((0, 1)))
    for mod in (CY, PY):
        ip, ix, dv, B = empty
        _, n = mod.closed_loop(ip, ix, dv, B, 0.0, 1.0, np.zeros(0), False, W, True, 1, 1, window, 20, 1e6)
        assert n == 6  # 10**6 is not > threshold, 10**7 is

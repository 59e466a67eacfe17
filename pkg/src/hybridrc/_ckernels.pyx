# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops.

Mirrors ``_pykernels`` function for function; ``hybridrc.kernels`` picks
whichever backend is importable.
"""
import numpy as np

from libc.math cimport tanh, sinh, fabs, pow, isfinite

from hybridrc.errors import DivergenceError

BACKEND = "cython"

cdef enum:
    LORENZ = 0
    ROSSLER = 1
    DOUBLE_SCROLL = 2


cdef inline void _flow(int system, const double* p, const double* y,
                       double* out) noexcept nogil:
    cdef double dv, g
    if system == LORENZ:
        out[0] = p[0] * (y[1] - y[0])
        out[1] = y[0] * (p[1] - y[2]) - y[1]
        out[2] = y[0] * y[1] - p[2] * y[2]
    elif system == ROSSLER:
        out[0] = -y[1] - y[2]
        out[1] = y[0] + p[0] * y[1]
        out[2] = p[1] + y[2] * (y[0] - p[2])
    else:
        dv = y[0] - y[1]
        g = 2.0 * p[3] * sinh(p[4] * dv)
        out[0] = y[0] / p[0] - dv / p[1] - g
        out[1] = dv / p[1] + g - y[2]
        out[2] = y[1] - p[2] * y[2]


cdef Py_ssize_t _rk4(int system, const double* p, double* y, double h,
                     Py_ssize_t n, bint check) noexcept nogil:
    # Advances y in place by n steps; returns the failing step or -1.
    cdef double k1[3]
    cdef double k2[3]
    cdef double k3[3]
    cdef double k4[3]
    cdef double tmp[3]
    cdef Py_ssize_t step
    cdef int i
    cdef double h2 = 0.5 * h
    cdef double h6 = h / 6.0
    for step in range(n):
        _flow(system, p, y, k1)
        for i in range(3):
            tmp[i] = y[i] + h2 * k1[i]
        _flow(system, p, tmp, k2)
        for i in range(3):
            tmp[i] = y[i] + h2 * k2[i]
        _flow(system, p, tmp, k3)
        for i in range(3):
            tmp[i] = y[i] + h * k3[i]
        _flow(system, p, tmp, k4)
        for i in range(3):
            y[i] = y[i] + h6 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        if check and not (isfinite(y[0]) and isfinite(y[1]) and isfinite(y[2])):
            return step
    return -1


def ode_sample(int system, const double[::1] params, const double[::1] y0,
               double dt, Py_ssize_t settle_steps, Py_ssize_t steps_per_sample,
               Py_ssize_t n_samples):
    """Integrate, discard ``settle_steps``, then record every
    ``steps_per_sample`` steps. Returns an (n_samples, 3) array."""
    out_arr = np.empty((n_samples, 3))
    cdef double[:, ::1] out = out_arr
    cdef double y[3]
    cdef Py_ssize_t j, bad
    cdef int i
    for i in range(3):
        y[i] = y0[i]
    with nogil:
        bad = _rk4(system, &params[0], y, dt, settle_steps, True)
    if bad >= 0:
        raise DivergenceError("integration diverged during settling", bad)
    for i in range(3):
        out[0, i] = y[i]
    for j in range(1, n_samples):
        with nogil:
            bad = _rk4(system, &params[0], y, dt, steps_per_sample, True)
        if bad >= 0:
            raise DivergenceError("integration diverged", settle_steps + (j - 1) * steps_per_sample + bad)
        for i in range(3):
            out[j, i] = y[i]
    return out_arr


def ode_propagate(int system, const double[::1] params, const double[:, ::1] states,
                  double dt, Py_ssize_t n_steps):
    """Advance every row of ``states`` by ``n_steps`` RK4 steps.

    Rows that blow up are left non-finite rather than raising."""
    cdef Py_ssize_t n = states.shape[0]
    out_arr = np.array(states, dtype=np.float64, copy=True)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t j
    with nogil:
        for j in range(n):
            _rk4(system, &params[0], &out[j, 0], dt, n_steps, False)
    return out_arr


def dde_sample(const double[::1] params, const double[::1] history, double dt,
               Py_ssize_t settle_steps, Py_ssize_t steps_per_sample,
               Py_ssize_t n_samples):
    """Mackey-Glass integration on a ring buffer.

    ``history`` holds m + 1 values spaced ``dt`` (oldest first) where
    m * dt is the delay. Returns (samples, final history)."""
    cdef Py_ssize_t L = history.shape[0]
    cdef Py_ssize_t m = L - 1
    if m < 1:
        raise ValueError("history must span at least one step")
    buf_arr = np.array(history, dtype=np.float64, copy=True)
    cdef double[::1] buf = buf_arr
    out_arr = np.empty(n_samples)
    cdef double[::1] out = out_arr
    cdef double a = params[0], b = params[1], c = params[2]
    cdef Py_ssize_t head = L - 1
    cdef Py_ssize_t j, total, step, done = 0
    cdef double x, d0, d1, dm, k1, k2, k3, k4, xn
    cdef double h = dt, h2 = 0.5 * dt
    cdef Py_ssize_t bad = -1
    total = settle_steps + (n_samples - 1) * steps_per_sample if n_samples > 0 else settle_steps
    with nogil:
        for step in range(total + 1):
            if step >= settle_steps and (step - settle_steps) % steps_per_sample == 0:
                out[done] = buf[head]
                done += 1
                if done == n_samples:
                    break
            x = buf[head]
            d0 = buf[(head + 1) % L]
            d1 = buf[(head + 2) % L]
            dm = 0.5 * (d0 + d1)
            k1 = a * d0 / (1.0 + pow(d0, c)) - b * x
            k2 = a * dm / (1.0 + pow(dm, c)) - b * (x + h2 * k1)
            k3 = a * dm / (1.0 + pow(dm, c)) - b * (x + h2 * k2)
            k4 = a * d1 / (1.0 + pow(d1, c)) - b * (x + h * k3)
            xn = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not isfinite(xn):
                bad = step
                break
            head = (head + 1) % L
            buf[head] = xn
    if bad >= 0:
        raise DivergenceError("delay integration diverged", bad)
    ordered = np.roll(buf_arr, -((head + 1) % L))
    return out_arr, ordered


cdef inline void _reservoir_step(Py_ssize_t N, Py_ssize_t d,
                                 const int* indptr, const int* indices,
                                 const double* data, const double* B,
                                 double bias, double alpha,
                                 const double* r, const double* u,
                                 double* out) noexcept nogil:
    cdef Py_ssize_t i, jj, q
    cdef double acc
    for i in range(N):
        acc = bias
        for jj in range(indptr[i], indptr[i + 1]):
            acc += data[jj] * r[indices[jj]]
        for q in range(d):
            acc += B[i * d + q] * u[q]
        out[i] = (1.0 - alpha) * r[i] + alpha * tanh(acc)


def reservoir_drive(const int[::1] indptr, const int[::1] indices,
                    const double[::1] data, const double[:, ::1] B,
                    double bias, double alpha, const double[::1] r0,
                    const double[:, ::1] inputs, Py_ssize_t record_from):
    """Feed ``inputs`` through the reservoir starting at ``r0``.

    Returns (states recorded after each update with index >= record_from,
    final state)."""
    cdef Py_ssize_t N = B.shape[0]
    cdef Py_ssize_t d = B.shape[1]
    cdef Py_ssize_t n = inputs.shape[0]
    cdef Py_ssize_t start = min(max(record_from, 0), n)
    states_arr = np.empty((n - start, N))
    cdef double[:, ::1] states = states_arr
    r_arr = np.array(r0, dtype=np.float64, copy=True)
    nxt_arr = np.empty(N)
    cdef double[::1] r_mv = r_arr
    cdef double[::1] nxt_mv = nxt_arr
    cdef double* r
    cdef double* nxt
    cdef double* swap
    cdef Py_ssize_t t, i
    if N == 0:
        return states_arr, r_arr
    cdef const int* ip = &indptr[0]
    cdef const int* ix = &indices[0] if indices.shape[0] > 0 else NULL
    cdef const double* dp = &data[0] if data.shape[0] > 0 else NULL
    r = &r_mv[0]
    nxt = &nxt_mv[0]
    with nogil:
        for t in range(n):
            _reservoir_step(N, d, ip, ix, dp, &B[0, 0], bias, alpha,
                            r, &inputs[t, 0], nxt)
            swap = r
            r = nxt
            nxt = swap
            if t >= start:
                for i in range(N):
                    states[t - start, i] = r[i]
    final = np.empty(N)
    for i in range(N):
        final[i] = r[i]
    return states_arr, final


def closed_loop(const int[::1] indptr, const int[::1] indices,
                const double[::1] data, const double[:, ::1] B,
                double bias, double alpha, const double[::1] r0,
                bint use_reservoir, const double[:, ::1] W, bint use_ngrc,
                Py_ssize_t k, Py_ssize_t s, const double[:, ::1] window,
                Py_ssize_t n_steps, double threshold):
    """Autonomous prediction loop shared by the RC, NGRC and hybrid models.

    ``window`` holds the last s*(k-1)+1 observations, oldest first.
    Returns (predictions, number of finite leading steps)."""
    cdef Py_ssize_t d = W.shape[0]
    cdef Py_ssize_t m = W.shape[1]
    cdef Py_ssize_t N = B.shape[0] if use_reservoir else 0
    cdef Py_ssize_t L = window.shape[0]
    cdef Py_ssize_t dk = d * k
    out_arr = np.empty((n_steps, d))
    cdef double[:, ::1] out = out_arr
    r_arr = np.array(r0, dtype=np.float64, copy=True) if use_reservoir else np.zeros(1)
    nxt_arr = np.empty_like(r_arr)
    cdef double[::1] r_mv = r_arr
    cdef double[::1] nxt_mv = nxt_arr
    cdef double* r = &r_mv[0]
    cdef double* nxt = &nxt_mv[0]
    cdef double* swap
    ring_arr = np.array(window, dtype=np.float64, copy=True) if use_ngrc else np.zeros((1, d))
    cdef double[:, ::1] ring = ring_arr
    H_arr = np.zeros(m)
    cdef double[::1] H = H_arr
    v_arr = np.zeros(d)
    cdef double[::1] v = v_arr
    cdef Py_ssize_t head = L - 1
    cdef Py_ssize_t step, i, j, q, a, b2, off, pos, row
    cdef double acc
    cdef Py_ssize_t n_valid = n_steps
    cdef bint bad
    cdef const int* ip = NULL
    cdef const int* ix = NULL
    cdef const double* dp = NULL
    if use_reservoir and N > 0:
        ip = &indptr[0]
        if indices.shape[0] > 0:
            ix = &indices[0]
            dp = &data[0]
    with nogil:
        for step in range(n_steps):
            off = 0
            if use_reservoir:
                for i in range(N):
                    H[i] = r[i]
                off = N
            if use_ngrc:
                H[off] = 1.0
                off += 1
                for j in range(k):
                    row = (head - j * s) % L
                    if row < 0:
                        row += L
                    for q in range(d):
                        H[off + j * d + q] = ring[row, q]
                pos = off + dk
                for a in range(dk):
                    for b2 in range(a, dk):
                        H[pos] = H[off + a] * H[off + b2]
                        pos += 1
            bad = False
            for q in range(d):
                acc = 0.0
                for i in range(m):
                    acc += W[q, i] * H[i]
                v[q] = acc
                if not isfinite(acc) or fabs(acc) > threshold:
                    bad = True
            if bad:
                n_valid = step
                break
            for q in range(d):
                out[step, q] = v[q]
            if use_reservoir:
                _reservoir_step(N, d, ip, ix, dp, &B[0, 0], bias, alpha,
                                r, &v[0], nxt)
                swap = r
                r = nxt
                nxt = swap
            if use_ngrc:
                head = (head + 1) % L
                for q in range(d):
                    ring[head, q] = v[q]
    return out_arr, n_valid

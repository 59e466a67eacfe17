"""Pure-Python/numpy implementations of the compiled kernels.

Same signatures and semantics as ``_ckernels``; used when the extension is
not built or when ``HYBRIDRC_PURE_PYTHON`` is set.
"""
import math

import numpy as np

from ._flows import ODE_FLOWS
from .errors import DivergenceError

BACKEND = "python"


def _rk4_scalar(f, p, y, h, n, check):
    h2 = 0.5 * h
    h6 = h / 6.0
    y0, y1, y2 = y
    for step in range(n):
        a0, a1, a2 = f((y0, y1, y2), p)
        b0, b1, b2 = f((y0 + h2 * a0, y1 + h2 * a1, y2 + h2 * a2), p)
        c0, c1, c2 = f((y0 + h2 * b0, y1 + h2 * b1, y2 + h2 * b2), p)
        d0, d1, d2 = f((y0 + h * c0, y1 + h * c1, y2 + h * c2), p)
        y0 = y0 + h6 * (a0 + 2.0 * b0 + 2.0 * c0 + d0)
        y1 = y1 + h6 * (a1 + 2.0 * b1 + 2.0 * c1 + d1)
        y2 = y2 + h6 * (a2 + 2.0 * b2 + 2.0 * c2 + d2)
        if check and not (math.isfinite(y0) and math.isfinite(y1) and math.isfinite(y2)):
            return (y0, y1, y2), step
    return (y0, y1, y2), -1


def ode_sample(system, params, y0, dt, settle_steps, steps_per_sample, n_samples):
    f = ODE_FLOWS[int(system)]
    p = tuple(float(v) for v in params)
    out = np.empty((n_samples, 3))
    try:
        y, bad = _rk4_scalar(f, p, tuple(float(v) for v in y0), dt, settle_steps, True)
    except OverflowError:
        y, bad = None, 0
    if bad >= 0:
        raise DivergenceError("integration diverged during settling", bad)
    out[0] = y
    for j in range(1, n_samples):
        try:
            y, bad = _rk4_scalar(f, p, y, dt, steps_per_sample, True)
        except OverflowError:
            bad = 0
        if bad >= 0:
            raise DivergenceError("integration diverged",
                                  settle_steps + (j - 1) * steps_per_sample + bad)
        out[j] = y
    return out


def ode_propagate(system, params, states, dt, n_steps):
    f = ODE_FLOWS[int(system)]
    p = tuple(float(v) for v in params)
    out = np.array(states, dtype=np.float64, copy=True)
    for j in range(out.shape[0]):
        try:
            y, _ = _rk4_scalar(f, p, tuple(out[j]), dt, n_steps, False)
        except OverflowError:
            y = (math.inf, math.inf, math.inf)
        out[j] = y
    return out


def dde_sample(params, history, dt, settle_steps, steps_per_sample, n_samples):
    buf = [float(v) for v in history]
    L = len(buf)
    if L < 2:
        raise ValueError("history must span at least one step")
    a, b, c = (float(v) for v in params)
    h = dt
    h2 = 0.5 * dt

    def g(xd):
        return a * xd / (1.0 + xd ** c)

    out = np.empty(n_samples)
    head = L - 1
    done = 0
    total = settle_steps + (n_samples - 1) * steps_per_sample
    for step in range(total + 1):
        if step >= settle_steps and (step - settle_steps) % steps_per_sample == 0:
            out[done] = buf[head]
            done += 1
            if done == n_samples:
                break
        x = buf[head]
        d0 = buf[(head + 1) % L]
        d1 = buf[(head + 2) % L]
        gm = g(0.5 * (d0 + d1))
        k1 = g(d0) - b * x
        k2 = gm - b * (x + h2 * k1)
        k3 = gm - b * (x + h2 * k2)
        k4 = g(d1) - b * (x + h * k3)
        xn = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not math.isfinite(xn):
            raise DivergenceError("delay integration diverged", step)
        head = (head + 1) % L
        buf[head] = xn
    ordered = np.roll(np.asarray(buf), -((head + 1) % L))
    return out, ordered


def _csr_matvec(indptr, indices, data, r):
    # row sums of data * r[indices]; matches the compiled loop's ordering
    prod = data * r[indices]
    out = np.add.reduceat(prod, indptr[:-1]) if prod.size else np.zeros(len(indptr) - 1)
    empty = indptr[1:] == indptr[:-1]
    if prod.size and empty.any():
        out[empty] = 0.0
    return out


def reservoir_drive(indptr, indices, data, B, bias, alpha, r0, inputs, record_from):
    indptr = np.asarray(indptr)
    indices = np.asarray(indices)
    data = np.asarray(data)
    B = np.asarray(B)
    inputs = np.asarray(inputs)
    N = B.shape[0]
    n = inputs.shape[0]
    start = min(max(record_from, 0), n)
    states = np.empty((n - start, N))
    r = np.array(r0, dtype=np.float64, copy=True)
    drive = inputs @ B.T + bias
    for t in range(n):
        r = (1.0 - alpha) * r + alpha * np.tanh(_csr_matvec(indptr, indices, data, r) + drive[t])
        if t >= start:
            states[t - start] = r
    return states, r


def closed_loop(indptr, indices, data, B, bias, alpha, r0, use_reservoir, W,
                use_ngrc, k, s, window, n_steps, threshold):
    W = np.asarray(W)
    d = W.shape[0]
    out = np.empty((n_steps, d))
    indptr = np.asarray(indptr)
    indices = np.asarray(indices)
    data = np.asarray(data)
    B = np.asarray(B)
    r = np.array(r0, dtype=np.float64, copy=True) if use_reservoir else None
    ring = [np.array(row, dtype=np.float64) for row in np.asarray(window)] if use_ngrc else None
    L = len(ring) if use_ngrc else 0
    dk = d * k
    iu = np.triu_indices(dk)
    n_valid = n_steps
    for step in range(n_steps):
        parts = []
        if use_reservoir:
            parts.append(r)
        if use_ngrc:
            lin = np.concatenate([ring[L - 1 - j * s] for j in range(k)])
            parts.append(np.ones(1))
            parts.append(lin)
            parts.append(np.outer(lin, lin)[iu])
        H = np.concatenate(parts)
        v = W @ H
        if not np.all(np.isfinite(v)) or np.any(np.abs(v) > threshold):
            n_valid = step
            break
        out[step] = v
        if use_reservoir:
            pre = _csr_matvec(indptr, indices, data, r) + B @ v + bias
            r = (1.0 - alpha) * r + alpha * np.tanh(pre)
        if use_ngrc:
            ring.pop(0)
            ring.append(v.copy())
    return out, n_valid

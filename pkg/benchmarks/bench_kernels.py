"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 3] [--json out.json]

Each case runs the same inputs through both backends and reports the
best-of-``repeat`` wall time, the speedup, and the largest output
difference over the first 100 rows (later rows of chaotic runs amplify
last-bit rounding differences).
"""
import argparse
import json
import sys
import time

import numpy as np

from hybridrc import kernels, systems
from hybridrc.forecaster import ForecastModel, TrainingConfig, Variant, train
from hybridrc.ngrc import NgrcConfig
from hybridrc.reservoir import ReservoirParams, build_reservoir


def _best(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases():
    spec = systems.lorenz()
    p = spec.param_vector
    y0 = np.array([1.0, 1.0, 20.0])
    yield "ode_sample lorenz 20k rk4 steps", lambda k: k.ode_sample(0, p, y0, 1e-3, 0, 60, 334)

    states = np.random.default_rng(0).normal(0, 5, (200, 3)) + [0, 0, 25]
    yield "ode_propagate 200 states x 60 steps", lambda k: k.ode_propagate(0, p, states, 1e-3, 60)

    mg = systems.mackey_glass()
    hist = np.full(2001, 1.2)
    yield "dde_sample mackey-glass 20k steps", lambda k: k.dde_sample(
        mg.param_vector, hist, 1e-3, 0, 60, 334)

    rng = np.random.default_rng(1)
    res = build_reservoir(ReservoirParams(N=200), 3, rng)
    inputs = rng.normal(size=(5000, 3))
    ip, ix, dv = res.csr_arrays
    yield "reservoir_drive N=200, 5000 steps", lambda k: k.reservoir_drive(
        ip, ix, dv, res.B, 0.5, 1.0, np.zeros(200), inputs, 0)

    traj = systems.integrate_and_sample(spec, n=3000, rng=np.random.default_rng(2))
    u = systems.normalize(traj, systems.compute_stats(traj, 3000)).samples
    res50 = build_reservoir(ReservoirParams(), 3, np.random.default_rng(3))
    m = train(ForecastModel(Variant.HYBRID, res50, NgrcConfig()), u,
              TrainingConfig(n_train=3000, n_warmup=300), rng=np.random.default_rng(4))
    ip, ix, dv = res50.csr_arrays
    window = np.ascontiguousarray(u[-2:])
    yield "closed_loop hybrid N=50, 2000 steps", lambda k: k.closed_loop(
        ip, ix, dv, res50.B, 0.5, 1.0, m.final_state, True, m.W, True, 2, 1, window, 2000, 1e6)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json")
    args = ap.parse_args(argv)
    if not kernels.HAVE_EXTENSION:
        print("compiled extension not available; build it with `pip install -e .`", file=sys.stderr)
        return 1
    cy, py = kernels.get_backend("cython"), kernels.get_backend("python")
    rows = []
    print(f"{'case':40s} {'cython s':>10s} {'python s':>10s} {'speedup':>8s}")
    for name, fn in cases():
        tc, oc = _best(lambda: fn(cy), args.repeat)
        tp, op = _best(lambda: fn(py), args.repeat)
        a = (oc[0] if isinstance(oc, tuple) else oc)[:100]
        b = (op[0] if isinstance(op, tuple) else op)[:100]
        err = float(np.max(np.abs(np.asarray(a) - np.asarray(b)))) if np.size(a) else 0.0
        rows.append({"case": name, "cython_s": tc, "python_s": tp, "speedup": tp / tc, "max_abs_diff": err})
        print(f"{name:40s} {tc:10.4f} {tp:10.4f} {tp / tc:8.1f}   (max diff {err:.1e})")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=1)
    return 0


if __name__ == "__main__":
    sys.exit(main())

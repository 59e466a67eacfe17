"""Benchmark dynamical systems, their integration, and trajectory handling."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np

from . import _flows, kernels
from .errors import DivergenceError

TAU_INT = 0.001


@dataclass(frozen=True)
class SystemSpec:
    """A benchmark system and the defaults used to sample it.

    ``lyapunov_exponent`` is the reference maximal exponent used to express
    valid prediction times in Lyapunov times; the shipped values were
    measured with :func:`estimate_max_lyapunov`.
    """

    name: str
    dimension: int
    delay: float
    parameters: Mapping[str, float]
    lyapunov_exponent: float
    ic_low: tuple
    ic_high: tuple
    settle_time: float = 20.0

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if self.name not in _SYSTEM_IDS:
            raise ValueError(f"unknown system {self.name!r}")
        if (self.delay > 0) != (self.name == "MackeyGlass"):
            raise ValueError("only MackeyGlass carries a delay")
        expected = 1 if self.name == "MackeyGlass" else 3
        if self.dimension != expected:
            raise ValueError(f"{self.name} has dimension {expected}")
        object.__setattr__(self, "parameters", MappingProxyType(dict(self.parameters)))

    @property
    def lyapunov_time(self) -> float:
        return 1.0 / self.lyapunov_exponent

    @property
    def param_vector(self) -> np.ndarray:
        return np.array([self.parameters[k] for k in _PARAM_ORDER[self.name]], dtype=np.float64)

    def with_parameters(self, **params) -> "SystemSpec":
        merged = dict(self.parameters)
        merged.update(params)
        return replace(self, parameters=merged)


_SYSTEM_IDS = {
    "Lorenz": _flows.LORENZ,
    "Rossler": _flows.ROSSLER,
    "DoubleScroll": _flows.DOUBLE_SCROLL,
    "MackeyGlass": -1,
}

_PARAM_ORDER = {
    "Lorenz": ("sigma", "rho", "beta"),
    "Rossler": ("a", "b", "c"),
    "DoubleScroll": ("R1", "R2", "R4", "Ir", "beta"),
    "MackeyGlass": ("a", "b", "c"),
}


def lorenz() -> SystemSpec:
    return SystemSpec(
        name="Lorenz", dimension=3, delay=0.0,
        parameters={"sigma": 10.0, "rho": 28.0, "beta": 8.0 / 3.0},
        lyapunov_exponent=0.9056,
        ic_low=(-20.0, -20.0, 0.0), ic_high=(20.0, 20.0, 50.0),
    )


def rossler() -> SystemSpec:
    return SystemSpec(
        name="Rossler", dimension=3, delay=0.0,
        parameters={"a": 0.2, "b": 0.2, "c": 5.7},
        lyapunov_exponent=0.0714,
        ic_low=(-10.0, -10.0, 0.0), ic_high=(10.0, 10.0, 0.5),
        settle_time=100.0,
    )


def double_scroll() -> SystemSpec:
    # circuit with a pair of anti-parallel diodes; currents in mA, time in ms
    return SystemSpec(
        name="DoubleScroll", dimension=3, delay=0.0,
        parameters={"R1": 1.2, "R2": 3.44, "R4": 0.193, "Ir": 2.25e-5, "beta": 11.6},
        lyapunov_exponent=0.0915,
        ic_low=(-0.5, -0.5, -0.5), ic_high=(0.5, 0.5, 0.5),
        settle_time=100.0,
    )


def mackey_glass() -> SystemSpec:
    return SystemSpec(
        name="MackeyGlass", dimension=1, delay=2.0,
        parameters={"a": 2.0, "b": 1.0, "c": 10.0},
        lyapunov_exponent=0.0754,
        ic_low=(0.5,), ic_high=(1.5,),
        settle_time=100.0,
    )


_FACTORIES = {
    "Lorenz": lorenz,
    "Rossler": rossler,
    "DoubleScroll": double_scroll,
    "MackeyGlass": mackey_glass,
}


def get_system(name: str) -> SystemSpec:
    key = {k.lower(): k for k in _FACTORIES}.get(name.lower().replace("-", "").replace("_", ""))
    if key is None:
        raise ValueError(f"unknown system {name!r}; choose from {sorted(_FACTORIES)}")
    return _FACTORIES[key]()


@dataclass(frozen=True)
class Trajectory:
    samples: np.ndarray
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim == 1:
            s = s[:, None]
        if s.ndim != 2:
            raise ValueError("samples must be an n x d array")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not np.all(np.isfinite(s)):
            raise ValueError("samples must be finite")
        object.__setattr__(self, "samples", s)

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def d(self) -> int:
        return self.samples.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n)

    def __len__(self):
        return self.n

    def segment(self, start: int, stop: Optional[int] = None) -> "Trajectory":
        stop = self.n if stop is None else stop
        return Trajectory(self.samples[start:stop], self.dt, self.t0 + start * self.dt)

    def components(self, idx: Sequence[int]) -> "Trajectory":
        return Trajectory(self.samples[:, list(idx)], self.dt, self.t0)

    def to_csv(self, path) -> None:
        header = ["t"] + [f"u{i}" for i in range(self.d)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for t, row in zip(self.times, self.samples):
                w.writerow([f"{t:.17g}"] + [f"{x:.17g}" for x in row])

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        t = data[:, 0]
        dt = float(t[1] - t[0]) if len(t) > 1 else 1.0
        return cls(data[:, 1:], dt, float(t[0]))


@dataclass(frozen=True)
class NormalizationStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        std = np.asarray(self.std, dtype=np.float64)
        if np.any(~(std > 0)):
            raise ValueError("standard deviation must be strictly positive in every component")
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64))
        object.__setattr__(self, "std", std)


@dataclass
class DdeHistory:
    """Past states of a delay system on the integration grid, oldest first.

    Spans ``delay`` exactly: ``values`` has ``round(delay / dt) + 1`` entries.
    """

    values: np.ndarray
    dt: float

    @classmethod
    def constant(cls, value: float, delay: float, dt: float) -> "DdeHistory":
        return cls(np.full(_delay_steps(delay, dt) + 1, float(value)), dt)

    @property
    def span(self) -> float:
        return (len(self.values) - 1) * self.dt


def _delay_steps(delay: float, dt: float) -> int:
    m = int(round(delay / dt))
    if m < 1 or abs(m * dt - delay) > 1e-9 * max(delay, 1.0):
        raise ValueError("delay must be a positive integer multiple of the integration step")
    return m


def _steps_per(tau: float, tau_int: float) -> int:
    ratio = tau / tau_int
    m = int(round(ratio))
    if m < 1 or abs(ratio - m) > 1e-9 * max(ratio, 1.0):
        raise ValueError(f"tau={tau} is not an integer multiple of tau_int={tau_int}")
    return m


def flow(spec: SystemSpec, state, delayed_state=None) -> np.ndarray:
    """Time derivative of ``state`` under the system's equations."""
    y = np.asarray(state, dtype=np.float64).reshape(-1)
    p = spec.param_vector
    if spec.delay > 0:
        if delayed_state is None:
            raise ValueError(f"{spec.name} needs the delayed state")
        xd = np.asarray(delayed_state, dtype=np.float64).reshape(-1)
        return np.array([_flows.mackey_glass(y[0], xd[0], p)])
    if delayed_state is not None:
        raise ValueError(f"{spec.name} has no delay term")
    return np.array(_flows.ODE_FLOWS[_SYSTEM_IDS[spec.name]](tuple(y), p))


def rk4_step(f: Callable[[np.ndarray], np.ndarray], state, dt: float) -> np.ndarray:
    """One classical Runge-Kutta step of ``dy/dt = f(y)``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    y = np.asarray(state, dtype=np.float64)
    k1 = np.asarray(f(y))
    k2 = np.asarray(f(y + 0.5 * dt * k1))
    k3 = np.asarray(f(y + 0.5 * dt * k2))
    k4 = np.asarray(f(y + dt * k3))
    for k in (k1, k2, k3, k4):
        if not np.all(np.isfinite(k)):
            raise DivergenceError("non-finite Runge-Kutta stage")
    return y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def random_initial_state(spec: SystemSpec, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(np.asarray(spec.ic_low), np.asarray(spec.ic_high))


def integrate_and_sample(
    spec: SystemSpec,
    initial: Union[None, np.ndarray, DdeHistory] = None,
    tau_int: float = TAU_INT,
    tau: float = 0.06,
    n: int = 1,
    settle_time: Optional[float] = None,
    rng: Optional[np.random.Generator] = None,
) -> Trajectory:
    """Integrate ``spec`` with RK4 at ``tau_int`` and sample every ``tau``.

    A transient of ``settle_time`` (default: the system's own) is discarded
    first; the first returned sample is the post-settle state. When
    ``initial`` is None a random state is drawn from ``rng`` in the system's
    initial-condition box (a constant history for delay systems).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    every = _steps_per(tau, tau_int)
    settle_time = spec.settle_time if settle_time is None else settle_time
    settle_steps = int(round(settle_time / tau_int))
    if initial is None:
        if rng is None:
            raise ValueError("either an initial state or an rng is required")
        initial = random_initial_state(spec, rng)
    if spec.delay > 0:
        if not isinstance(initial, DdeHistory):
            initial = DdeHistory.constant(float(np.asarray(initial).reshape(-1)[0]), spec.delay, tau_int)
        if abs(initial.dt - tau_int) > 1e-15 or initial.span + 1e-12 < spec.delay:
            raise ValueError("history must be on the integration grid and cover the delay")
        values = np.ascontiguousarray(initial.values[-(_delay_steps(spec.delay, tau_int) + 1):])
        samples, _ = kernels.dde_sample(spec.param_vector, values, tau_int, settle_steps, every, n)
        samples = samples[:, None]
    else:
        y0 = np.ascontiguousarray(np.asarray(initial, dtype=np.float64).reshape(-1))
        if y0.shape[0] != spec.dimension:
            raise ValueError("initial state has the wrong dimension")
        samples = kernels.ode_sample(_SYSTEM_IDS[spec.name], spec.param_vector, y0,
                                     tau_int, settle_steps, every, n)
    if not np.all(np.isfinite(samples)):
        raise DivergenceError("non-finite samples")
    return Trajectory(samples, tau, settle_time)


def propagate(spec: SystemSpec, states: np.ndarray, duration: float, tau_int: float = TAU_INT) -> np.ndarray:
    """Flow each row of ``states`` forward by ``duration`` (ODE systems only)."""
    if spec.delay > 0:
        raise ValueError("propagation from a single state is undefined for delay systems")
    steps = _steps_per(duration, tau_int)
    arr = np.ascontiguousarray(np.atleast_2d(np.asarray(states, dtype=np.float64)))
    return kernels.ode_propagate(_SYSTEM_IDS[spec.name], spec.param_vector, arr, tau_int, steps)


def compute_stats(traj: Trajectory, n_train: Optional[int] = None) -> NormalizationStats:
    """Per-component mean and population std of the first ``n_train`` samples."""
    n_train = traj.n if n_train is None else n_train
    if not 1 <= n_train <= traj.n:
        raise ValueError("n_train must lie in [1, len(traj)]")
    seg = traj.samples[:n_train]
    return NormalizationStats(seg.mean(axis=0), seg.std(axis=0))


def normalize(traj: Trajectory, stats: NormalizationStats) -> Trajectory:
    return Trajectory((traj.samples - stats.mean) / stats.std, traj.dt, traj.t0)


def denormalize(traj: Trajectory, stats: NormalizationStats) -> Trajectory:
    return Trajectory(traj.samples * stats.std + stats.mean, traj.dt, traj.t0)


def estimate_max_lyapunov(
    spec: Union[SystemSpec, Callable],
    duration: float,
    renorm_interval: float,
    rng: np.random.Generator,
    *,
    initial=None,
    tau_int: float = TAU_INT,
    perturbation: float = 1e-8,
    transient_intervals: int = 10,
) -> float:
    """Maximal Lyapunov exponent by Benettin's two-trajectory method.

    A reference and a perturbed copy are evolved together; every
    ``renorm_interval`` the separation is logged and rescaled back to
    ``perturbation``. ``spec`` may also be a plain vector field ``f(y)``,
    in which case ``initial`` is required and integration uses
    :func:`rk4_step`. For delay systems the whole history buffer is
    perturbed and its Euclidean norm is tracked.
    """
    n_intervals = int(round(duration / renorm_interval))
    if n_intervals < 100:
        raise ValueError("duration must cover at least 100 renormalization intervals")
    steps = _steps_per(renorm_interval, tau_int)

    if callable(spec) and not isinstance(spec, SystemSpec):
        if initial is None:
            raise ValueError("a plain vector field needs an initial state")
        f = spec
        x = np.asarray(initial, dtype=np.float64).reshape(-1)

        def advance(y):
            for _ in range(steps):
                y = rk4_step(f, y, tau_int)
            return y

        transient_intervals = 0
    elif spec.delay > 0:
        m = _delay_steps(spec.delay, tau_int)
        p = spec.param_vector
        if initial is None:
            initial = random_initial_state(spec, rng)
        hist = initial if isinstance(initial, DdeHistory) else DdeHistory.constant(
            float(np.asarray(initial).reshape(-1)[0]), spec.delay, tau_int)
        _, x = kernels.dde_sample(p, hist.values[-(m + 1):], tau_int,
                                  int(round(spec.settle_time / tau_int)), 1, 1)

        def advance(y):
            return kernels.dde_sample(p, y, tau_int, steps, 1, 1)[1]
    else:
        sid = _SYSTEM_IDS[spec.name]
        p = spec.param_vector
        if initial is None:
            initial = random_initial_state(spec, rng)
        x = kernels.ode_sample(sid, p, np.ascontiguousarray(initial, dtype=np.float64),
                               tau_int, int(round(spec.settle_time / tau_int)), 1, 1)[0]

        def advance(y):
            return kernels.ode_propagate(sid, p, np.ascontiguousarray(y[None, :]), tau_int, steps)[0]

    direction = rng.standard_normal(x.shape)
    y = x + perturbation * direction / np.linalg.norm(direction)
    total = 0.0
    counted = 0
    for i in range(n_intervals):
        x = advance(x)
        y = advance(y)
        sep = np.linalg.norm(y - x)
        if not (np.isfinite(sep) and sep > 0):
            raise DivergenceError("separation became degenerate", i)
        if i >= transient_intervals:
            total += math.log(sep / perturbation)
            counted += 1
        y = x + (y - x) * (perturbation / sep)
    estimate = total / (counted * renorm_interval)
    if isinstance(spec, SystemSpec) and estimate <= 0:
        raise ValueError("non-positive exponent for a chaotic system; increase duration")
    return estimate

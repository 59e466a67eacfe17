"""Forecast quality measures: valid prediction time, map error, power spectra."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .systems import NormalizationStats, SystemSpec, Trajectory, TAU_INT, propagate

WELCH_SEGMENT = 4096


@dataclass(frozen=True)
class VptConfig:
    lyapunov_time: float
    kappa: float = 0.9

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if not self.lyapunov_time > 0:
            raise ValueError("lyapunov_time must be positive")


@dataclass(frozen=True)
class MapErrorConfig:
    E_map_bar: float
    tau_int: float = TAU_INT
    n_predict: int | None = None

    def __post_init__(self):
        if not self.E_map_bar > 0:
            raise ValueError("persistence normalizer must be positive")


@dataclass(frozen=True)
class PsdEstimate:
    frequencies: np.ndarray
    power: np.ndarray

    @property
    def total_power(self) -> float:
        df = self.frequencies[1] - self.frequencies[0] if len(self.frequencies) > 1 else 0.0
        return float(np.sum(self.power) * df)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["frequency", "power"])
            for f, p in zip(self.frequencies, self.power):
                w.writerow([f"{f:.17g}", f"{p:.17g}"])


def _arr(x):
    return x.samples if isinstance(x, Trajectory) else np.atleast_2d(np.asarray(x, dtype=np.float64).T).T


def normalized_errors(v, u) -> np.ndarray:
    """Per-step ||v - u|| / sqrt(<||u||^2>), the average taken over ``u``."""
    v, u = _arr(v), _arr(u)
    scale = np.sqrt(np.mean(np.sum(u * u, axis=1)))
    n = min(len(v), len(u))
    return np.linalg.norm(v[:n] - u[:n], axis=1) / scale


def valid_prediction_time(v, u, cfg: VptConfig, dt: float | None = None) -> float:
    """Time until the normalized error first exceeds kappa, in Lyapunov times.

    Step i of the prediction sits at time i * dt after the start. ``v`` may
    be shorter than ``u`` (a diverged forecast): steps beyond its end count
    as exceeding the threshold. A forecast that never exceeds it scores the
    whole window.
    """
    if dt is None:
        dt = v.dt if isinstance(v, Trajectory) else u.dt
    if isinstance(v, Trajectory) and isinstance(u, Trajectory) and abs(v.dt - u.dt) > 1e-12:
        raise ValueError("prediction and truth are on different time grids")
    va, ua = _arr(v), _arr(u)
    if len(va) > len(ua):
        raise ValueError("prediction is longer than the truth window")
    if va.shape[1] != ua.shape[1]:
        raise ValueError("prediction and truth dimensions differ")
    err = normalized_errors(va, ua)
    over = np.nonzero(err > cfg.kappa)[0]
    steps = over[0] if over.size else len(va)
    return steps * dt / cfg.lyapunov_time


def persistence_normalizer(train) -> float:
    """Mean ||u(t+tau) - u(t)|| over the training series."""
    x = _arr(train)
    if len(x) < 2:
        raise ValueError("need at least two samples")
    return float(np.mean(np.linalg.norm(np.diff(x, axis=0), axis=1)))


def normalized_map_error(v, spec: SystemSpec, cfg: MapErrorConfig, stats: NormalizationStats,
                         previous=None) -> np.ndarray:
    """Per-step distance between each forecast step and one true-flow step
    from the preceding forecast point, divided by the persistence error.

    Works in normalized units. ``previous`` (the last state before ``v``)
    adds an error for the first forecast step; otherwise the sequence starts
    at the second step.
    """
    if spec.delay > 0:
        raise ValueError("map error needs a full state; undefined for delay systems")
    x = _arr(v)
    dt = v.dt if isinstance(v, Trajectory) else None
    if dt is None:
        raise ValueError("v must be a Trajectory carrying its time step")
    if previous is not None:
        x = np.vstack([np.asarray(previous, dtype=np.float64).reshape(1, -1), x])
    if cfg.n_predict is not None:
        x = x[:cfg.n_predict + (1 if previous is not None else 0)]
    if len(x) < 2:
        return np.zeros(0)
    start = x[:-1] * stats.std + stats.mean
    stepped = propagate(spec, start, dt, cfg.tau_int)
    ref = (stepped - stats.mean) / stats.std
    with np.errstate(over="ignore", invalid="ignore"):
        err = np.linalg.norm(x[1:] - ref, axis=1) / cfg.E_map_bar
    return np.where(np.isfinite(err), err, np.inf)


def welch_psd(series, dt: float, segment: int = WELCH_SEGMENT) -> PsdEstimate:
    """One-sided Welch power spectral density with a Hann taper and 50% overlap.

    The zero-frequency bin is dropped, so frequencies are strictly positive.
    """
    x = np.asarray(series, dtype=np.float64).reshape(-1)
    if len(x) < segment:
        raise ValueError(f"series of length {len(x)} is shorter than one segment ({segment})")
    f, p = signal.welch(x, fs=1.0 / dt, window="hann", nperseg=segment,
                        noverlap=segment // 2, detrend="constant", scaling="density")
    return PsdEstimate(f[1:], p[1:])


def psd_distance(estimate: PsdEstimate, reference: PsdEstimate) -> float:
    """Relative L2 distance ||P - P_ref|| / ||P_ref||."""
    if estimate.power.shape != reference.power.shape:
        raise ValueError("spectra are on different frequency grids")
    return float(np.linalg.norm(estimate.power - reference.power) / np.linalg.norm(reference.power))

"""Readout training and autonomous prediction for RC, NGRC and hybrid models."""
from __future__ import annotations

import enum
import json
import warnings
from dataclasses import asdict, dataclass, replace
from typing import Optional

import numpy as np
import scipy.linalg as sla

from . import kernels
from .ngrc import NgrcConfig, feature_matrix
from .reservoir import Reservoir, drive
from .systems import Trajectory

DIVERGENCE_THRESHOLD = 1e6


class Variant(str, enum.Enum):
    RC = "RC"
    NGRC = "NGRC"
    HYBRID = "Hybrid"

    @classmethod
    def parse(cls, value) -> "Variant":
        if isinstance(value, cls):
            return value
        for v in cls:
            if v.value.lower() == str(value).lower():
                return v
        raise ValueError(f"unknown model variant {value!r}")

    @property
    def uses_reservoir(self) -> bool:
        return self is not Variant.NGRC

    @property
    def uses_ngrc(self) -> bool:
        return self is not Variant.RC


@dataclass(frozen=True)
class TrainingConfig:
    beta: float = 1e-8
    noise_std: float = 1e-3
    n_train: int = 10_000
    n_warmup: int = 1000

    def __post_init__(self):
        if self.beta < 0 or self.noise_std < 0:
            raise ValueError("beta and noise_std must be nonnegative")
        if not 0 <= self.n_warmup < self.n_train:
            raise ValueError("need 0 <= n_warmup < n_train")


@dataclass(frozen=True, eq=False)
class ForecastModel:
    variant: Variant
    reservoir: Optional[Reservoir] = None
    ngrc: Optional[NgrcConfig] = None
    W: Optional[np.ndarray] = None
    final_state: Optional[np.ndarray] = None

    def __post_init__(self):
        v = Variant.parse(self.variant)
        object.__setattr__(self, "variant", v)
        if v.uses_reservoir and self.reservoir is None:
            raise ValueError(f"{v.value} model needs a reservoir")
        if v.uses_ngrc and self.ngrc is None:
            raise ValueError(f"{v.value} model needs an NGRC config")
        if self.W is not None and self.W.shape[1] != self.state_dim:
            raise ValueError("readout width does not match the model state dimension")

    @property
    def state_dim(self) -> int:
        m = 0
        if self.variant.uses_reservoir:
            m += self.reservoir.N
        if self.variant.uses_ngrc:
            m += self.ngrc.feature_dim
        return m

    @property
    def warmup_steps(self) -> int:
        w = 0
        if self.variant.uses_ngrc:
            w = self.ngrc.warmup_steps
        return w

    @property
    def trained(self) -> bool:
        return self.W is not None


@dataclass(frozen=True, eq=False)
class DesignMatrices:
    S: np.ndarray  # m x n_fit
    Y: np.ndarray  # d x n_fit
    final_state: Optional[np.ndarray] = None


@dataclass(frozen=True)
class Prediction(Trajectory):
    """Autonomous forecast; ``diverged_at`` is the first rejected step, if any."""

    diverged_at: Optional[int] = None

    @property
    def diverged(self) -> bool:
        return self.diverged_at is not None


def ridge_fit(S, Y, beta: float) -> np.ndarray:
    """Tikhonov-regularized least squares readout ``W = Y S^T (S S^T + beta I)^-1``.

    Solves the m x m normal system by Cholesky; with ``beta == 0`` a
    singular or numerically singular normal matrix raises.
    """
    S = np.asarray(S, dtype=np.float64)
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if S.ndim != 2 or S.shape[1] != Y.shape[1] or S.shape[1] < 1:
        raise ValueError("S (m x n) and Y (d x n) must share n >= 1 columns")
    G = S @ S.T
    G[np.diag_indices_from(G)] += beta
    rhs = S @ Y.T
    with warnings.catch_warnings():
        warnings.simplefilter("error", sla.LinAlgWarning)
        try:
            Wt = sla.solve(G, rhs, assume_a="pos")
        except (np.linalg.LinAlgError, sla.LinAlgWarning) as exc:
            if beta == 0:
                raise np.linalg.LinAlgError(
                    "normal matrix is singular; use a positive regularization beta") from exc
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            Wt = sla.solve(G, rhs, assume_a="sym")
    return np.ascontiguousarray(Wt.T)


def ridge_loss(W, S, Y, beta: float) -> float:
    R = W @ S - Y
    return float(np.sum(R * R) + beta * np.sum(W * W))


def add_input_noise(traj, gamma: float, rng: np.random.Generator):
    """Add i.i.d. N(0, gamma^2) to every element; gamma = 0 returns the input."""
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    if gamma == 0:
        return traj
    if isinstance(traj, Trajectory):
        return Trajectory(traj.samples + rng.normal(0.0, gamma, traj.samples.shape), traj.dt, traj.t0)
    arr = np.asarray(traj, dtype=np.float64)
    return arr + rng.normal(0.0, gamma, arr.shape)


def _as_array(x) -> np.ndarray:
    a = x.samples if isinstance(x, Trajectory) else np.asarray(x, dtype=np.float64)
    return a.reshape(a.shape[0], -1)


def first_fit_index(model: ForecastModel, cfg: TrainingConfig) -> int:
    start = 0
    if model.variant.uses_reservoir:
        start = cfg.n_warmup
    if model.variant.uses_ngrc:
        start = max(start, model.ngrc.warmup_steps)
    return start


def collect_states(model: ForecastModel, noisy, clean, cfg: TrainingConfig) -> DesignMatrices:
    """Design matrices over the first ``cfg.n_train`` samples.

    Column j holds the state (reservoir, features, or both stacked) after
    consuming noisy input j, paired with the clean target j + 1, for j from
    the warm-up index to n_train - 2.
    """
    noisy = _as_array(noisy)[:cfg.n_train]
    clean = _as_array(clean)[:cfg.n_train]
    if noisy.shape[0] < cfg.n_train or clean.shape[0] < cfg.n_train:
        raise ValueError("trajectory shorter than n_train")
    start = first_fit_index(model, cfg)
    stop = cfg.n_train - 1
    if stop - start < 1:
        raise ValueError("no training columns remain after the warm-up")
    blocks = []
    final_state = None
    if model.variant.uses_reservoir:
        states, final_state = drive(model.reservoir, noisy, record_from=start)
        blocks.append(states[:-1])
    if model.variant.uses_ngrc:
        blocks.append(feature_matrix(noisy, model.ngrc, start, stop))
    X = blocks[0] if len(blocks) == 1 else np.hstack(blocks)
    return DesignMatrices(S=X.T, Y=clean[start + 1:stop + 1].T, final_state=final_state)


def train(model: ForecastModel, traj, cfg: TrainingConfig, rng: Optional[np.random.Generator] = None,
          noisy=None) -> ForecastModel:
    """Fit the readout on normalized data.

    Noise is drawn from ``rng`` unless a pre-drawn ``noisy`` copy is given
    (so several models can share one noisy realization).
    """
    clean = _as_array(traj)[:cfg.n_train]
    if noisy is None:
        if cfg.noise_std > 0 and rng is None:
            raise ValueError("an rng is required when noise_std > 0")
        noisy = add_input_noise(clean, cfg.noise_std, rng) if cfg.noise_std > 0 else clean
    design = collect_states(model, noisy, clean, cfg)
    W = ridge_fit(design.S, design.Y, cfg.beta)
    return replace(model, W=W, final_state=design.final_state)


def predict_autonomous(model: ForecastModel, warmstart, n_steps: int,
                       initial_state: Optional[np.ndarray] = None,
                       threshold: float = DIVERGENCE_THRESHOLD) -> Prediction:
    """Closed-loop forecast of ``n_steps`` samples following ``warmstart``.

    The reservoir starts from ``initial_state``, else the state stored at
    the end of training, else the state reached by driving it from zero
    over ``warmstart``. The delay window is the tail of ``warmstart``.
    Outputs beyond ``threshold`` or non-finite stop the run and mark the
    prediction as diverged.
    """
    if not model.trained:
        raise ValueError("model has not been trained")
    ws = _as_array(warmstart)
    d = model.W.shape[0]
    dt = warmstart.dt if isinstance(warmstart, Trajectory) else 1.0
    t0 = warmstart.t0 + ws.shape[0] * dt if isinstance(warmstart, Trajectory) else 0.0
    res = model.reservoir
    if model.variant.uses_reservoir:
        r0 = initial_state if initial_state is not None else model.final_state
        if r0 is None:
            r0 = drive(res, ws, record_from=ws.shape[0])[1]
        indptr, indices, data = res.csr_arrays
        B, bias, alpha = res.B, float(res.params.bias), float(res.params.leak)
    else:
        r0 = np.zeros(1)
        indptr, indices, data = np.zeros(1, np.intc), np.zeros(0, np.intc), np.zeros(0)
        B, bias, alpha = np.zeros((1, d)), 0.0, 1.0
    if model.variant.uses_ngrc:
        L = model.ngrc.warmup_steps + 1
        if ws.shape[0] < L:
            raise ValueError(f"warm-start needs at least {L} samples")
        window = np.ascontiguousarray(ws[-L:])
        k, s = model.ngrc.k, model.ngrc.s
    else:
        window = np.zeros((1, d))
        k, s = 1, 1
    out, n_valid = kernels.closed_loop(
        indptr, indices, data, B, bias, alpha, np.ascontiguousarray(r0, dtype=np.float64),
        model.variant.uses_reservoir, np.ascontiguousarray(model.W),
        model.variant.uses_ngrc, k, s, window, int(n_steps), float(threshold))
    diverged_at = None if n_valid == n_steps else int(n_valid)
    return Prediction(out[:n_valid], dt, t0, diverged_at=diverged_at)


def dump_model(model: ForecastModel, path, seed=None, extra=None) -> None:
    """Write variant, hyperparameters, seed and readout to a JSON text file."""
    doc = {
        "variant": model.variant.value,
        "seed": seed,
        "reservoir": asdict(model.reservoir.params) if model.reservoir is not None else None,
        "ngrc": asdict(model.ngrc) if model.ngrc is not None else None,
        "W_shape": list(model.W.shape),
        # json writes the shortest round-tripping repr of each double
        "W": model.W.reshape(-1).tolist(),
    }
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_readout(path) -> np.ndarray:
    with open(path) as fh:
        doc = json.load(fh)
    return np.array(doc["W"], dtype=np.float64).reshape(doc["W_shape"])

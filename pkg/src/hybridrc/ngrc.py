"""Nonlinear vector-autoregression features: constant, stacked delays, quadratics."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class NgrcConfig:
    k: int = 2
    s: int = 1
    d: int = 3

    def __post_init__(self):
        if self.k < 1 or self.s < 1 or self.d < 1:
            raise ValueError("k, s and d must all be >= 1")

    @property
    def linear_dim(self) -> int:
        return self.d * self.k

    @property
    def feature_dim(self) -> int:
        dk = self.linear_dim
        return 1 + dk + dk * (dk + 1) // 2

    @property
    def warmup_steps(self) -> int:
        return self.s * (self.k - 1)


def feature_dim(config: NgrcConfig) -> int:
    return config.feature_dim


def _quad_index(dk: int):
    return np.triu_indices(dk)


def build_features(window, config: NgrcConfig) -> np.ndarray:
    """Feature vector ``1 ++ lin ++ quad`` for one observation window.

    ``window`` is (k, d), newest observation first. Quadratic monomials
    x_i * x_j (i <= j) follow row-major upper-triangular order over the
    stacked linear block.
    """
    w = np.asarray(window, dtype=np.float64)
    if w.shape != (config.k, config.d):
        raise ValueError(f"window must have shape ({config.k}, {config.d}), got {w.shape}")
    lin = w.reshape(-1)
    iu = _quad_index(lin.size)
    return np.concatenate([[1.0], lin, np.outer(lin, lin)[iu]])


def feature_matrix(series, config: NgrcConfig, start: Optional[int] = None,
                   stop: Optional[int] = None) -> np.ndarray:
    """Features for every time index in [start, stop) of ``series``, one row each."""
    x = np.asarray(series, dtype=np.float64).reshape(len(series), -1)
    if x.shape[1] != config.d:
        raise ValueError("series dimension does not match config")
    start = config.warmup_steps if start is None else start
    stop = x.shape[0] if stop is None else stop
    if start < config.warmup_steps:
        raise ValueError("start index precedes the delay warm-up")
    n = max(stop - start, 0)
    lin = np.empty((n, config.linear_dim))
    for j in range(config.k):
        lag = j * config.s
        lin[:, j * config.d:(j + 1) * config.d] = x[start - lag:stop - lag]
    iu = _quad_index(config.linear_dim)
    quad = lin[:, iu[0]] * lin[:, iu[1]]
    return np.hstack([np.ones((n, 1)), lin, quad])


def window_from_series(series, t: int, config: NgrcConfig, boundary: Optional[int] = None,
                       predicted=None) -> np.ndarray:
    """Observations at t, t-s, ..., t-(k-1)s from a spliced series.

    Indices up to ``boundary`` (inclusive) read ``series``; later indices
    read ``predicted``, whose row 0 is index ``boundary + 1``. Without a
    boundary the whole of ``series`` is used.
    """
    if t < config.warmup_steps:
        raise IndexError(f"index {t} precedes the delay warm-up of {config.warmup_steps} steps")
    truth = np.asarray(series, dtype=np.float64).reshape(len(series), -1)
    rows = []
    for j in range(config.k):
        i = t - j * config.s
        if boundary is None or i <= boundary:
            rows.append(truth[i])
        else:
            rows.append(np.asarray(predicted, dtype=np.float64).reshape(-1, config.d)[i - boundary - 1])
    return np.vstack(rows)


def monomial_labels(config: NgrcConfig, names: Optional[Sequence[str]] = None) -> list:
    """Human-readable label of every feature, in layout order."""
    names = list(names) if names is not None else [f"u{i}" for i in range(config.d)]
    lin = []
    for j in range(config.k):
        suffix = "" if j == 0 else f"(t-{j * config.s})"
        lin.extend(f"{n}{suffix}" for n in names)
    iu = _quad_index(len(lin))
    return ["1"] + lin + [f"{lin[a]}*{lin[b]}" for a, b in zip(*iu)]

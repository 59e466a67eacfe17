"""Random recurrent reservoirs: construction, state updates, synchronization."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, eigs

from . import kernels

MAX_REBUILDS = 100
SYNC_NOISE_FLOOR = 1e-12
SYNC_MAX_STEPS = 500


@dataclass(frozen=True)
class ReservoirParams:
    N: int = 50
    avg_degree: float = 10.0
    spectral_radius: float = 0.9
    leak: float = 1.0
    bias: float = 0.5
    input_scale: float = 1.0
    n_warmup: int = 1000

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if not 0 < self.avg_degree <= self.N:
            raise ValueError("average degree must lie in (0, N]")
        if not 0 < self.leak <= 1:
            raise ValueError("leak rate must lie in (0, 1]")
        if self.spectral_radius < 0:
            raise ValueError("spectral radius must be nonnegative")
        if not self.input_scale > 0:
            raise ValueError("input scale must be positive")
        if self.n_warmup < 0:
            raise ValueError("n_warmup must be nonnegative")


@dataclass(frozen=True, eq=False)
class Reservoir:
    """Fixed reservoir weights.

    ``A`` is a CSR matrix when the link density is below 0.25 and a dense
    array otherwise; the kernels always see the CSR form.
    """

    A: Union[np.ndarray, sp.csr_array]
    B: np.ndarray
    bias: np.ndarray
    params: ReservoirParams

    def __post_init__(self):
        csr = sp.csr_array(self.A)
        csr.sort_indices()
        object.__setattr__(self, "_indptr", np.ascontiguousarray(csr.indptr, dtype=np.intc))
        object.__setattr__(self, "_indices", np.ascontiguousarray(csr.indices, dtype=np.intc))
        object.__setattr__(self, "_data", np.ascontiguousarray(csr.data, dtype=np.float64))
        object.__setattr__(self, "B", np.ascontiguousarray(self.B, dtype=np.float64))

    @property
    def N(self) -> int:
        return self.B.shape[0]

    @property
    def d(self) -> int:
        return self.B.shape[1]

    @property
    def csr_arrays(self):
        return self._indptr, self._indices, self._data

    def dense_A(self) -> np.ndarray:
        return self.A.toarray() if sp.issparse(self.A) else np.asarray(self.A)


def spectral_radius(A) -> float:
    """Largest eigenvalue modulus of a (possibly sparse) square matrix.

    Uses implicitly restarted Arnoldi (ARPACK) with a fixed start vector so
    the result is deterministic; small matrices and non-converged runs fall
    back to a dense eigenvalue solve.
    """
    n = A.shape[0]
    if n == 0:
        return 0.0
    if sp.issparse(A) and A.nnz == 0 or not sp.issparse(A) and not np.any(A):
        return 0.0
    if n >= 16:
        try:
            vals = eigs(sp.csr_array(A) if sp.issparse(A) else np.asarray(A), k=1, which="LM",
                        v0=np.ones(n), ncv=min(n - 1, 40), tol=0.0, maxiter=20 * n,
                        return_eigenvectors=False)
            return float(np.abs(vals).max())
        except (ArpackNoConvergence, ArpackError):
            pass
    dense = A.toarray() if sp.issparse(A) else np.asarray(A)
    return float(np.abs(np.linalg.eigvals(dense)).max())


def rescale_spectral_radius(A, rho: float):
    """Scale ``A`` so its spectral radius is ``rho``; zero-spectrum input raises."""
    if rho == 0:
        return A * 0.0
    current = spectral_radius(A)
    if current < 1e-12:
        raise ValueError("matrix has zero spectral radius and cannot be rescaled")
    return A * (rho / current)


def _spawn(rng, n):
    if isinstance(rng, np.random.SeedSequence):
        return [np.random.default_rng(s) for s in rng.spawn(n)]
    if isinstance(rng, (int, np.integer)):
        return [np.random.default_rng(s) for s in np.random.SeedSequence(int(rng)).spawn(n)]
    return rng.spawn(n)


def build_reservoir(params: ReservoirParams, d: int, rng) -> Reservoir:
    """Random directed Erdos-Renyi reservoir with Poisson in-degree.

    Each ordered pair (self-loops included) is linked with probability
    <k>/N; link weights are uniform on [-1, 1] and the matrix is rescaled
    to the requested spectral radius. Input weights are uniform on
    [-sigma, sigma]. ``rng`` may be a Generator, SeedSequence or int; the
    graph, link weights and input matrix use independent child streams.
    """
    N = params.N
    graph_rng, weight_rng, input_rng = _spawn(rng, 3)
    p = params.avg_degree / N
    for _ in range(MAX_REBUILDS):
        mask = graph_rng.random((N, N)) < p
        rows, cols = np.nonzero(mask)
        weights = weight_rng.uniform(-1.0, 1.0, size=rows.size)
        A = sp.csr_array((weights, (rows, cols)), shape=(N, N))
        if params.spectral_radius == 0:
            A = sp.csr_array((N, N))
            break
        if spectral_radius(A) > 1e-12:
            A = rescale_spectral_radius(A, params.spectral_radius)
            break
    else:
        raise ValueError(f"no reservoir with nonzero spectrum after {MAX_REBUILDS} draws")
    if p >= 0.25:
        A = A.toarray()
    B = input_rng.uniform(-params.input_scale, params.input_scale, size=(N, d))
    return Reservoir(A=A, B=B, bias=np.full(N, float(params.bias)), params=params)


def update(res: Reservoir, state: np.ndarray, u: np.ndarray) -> np.ndarray:
    """One leaky-tanh reservoir update driven by input ``u``."""
    r = np.asarray(state, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if r.shape != (res.N,) or u.shape != (res.d,):
        raise ValueError("state or input has the wrong shape")
    a = res.params.leak
    return (1.0 - a) * r + a * np.tanh(res.A @ r + res.B @ u + res.bias)


def drive(res: Reservoir, inputs: np.ndarray, r0: Optional[np.ndarray] = None, record_from: int = 0):
    """Run the reservoir over ``inputs``; returns (recorded states, final state).

    Row j of the recorded block is the state after consuming
    ``inputs[record_from + j]``.
    """
    inputs = np.ascontiguousarray(np.asarray(inputs, dtype=np.float64).reshape(-1, res.d))
    r0 = np.zeros(res.N) if r0 is None else np.ascontiguousarray(r0, dtype=np.float64)
    indptr, indices, data = res.csr_arrays
    return kernels.reservoir_drive(indptr, indices, data, res.B, float(res.params.bias),
                                   float(res.params.leak), r0, inputs, int(record_from))


def warmup(res: Reservoir, inputs) -> np.ndarray:
    """Synchronize from the zero state; returns the state after the last input."""
    inputs = np.asarray(inputs, dtype=np.float64).reshape(-1, res.d)
    if inputs.shape[0] == 0:
        return np.zeros(res.N)
    return drive(res, inputs, record_from=inputs.shape[0])[1]


def sync_gaps(res: Reservoir, inputs, r1_init, r2_init) -> np.ndarray:
    """Euclidean distance between two copies at step 0, 1, ..., n."""
    s1, _ = drive(res, inputs, r1_init)
    s2, _ = drive(res, inputs, r2_init)
    first = np.linalg.norm(np.asarray(r1_init) - np.asarray(r2_init))
    return np.concatenate([[first], np.linalg.norm(s1 - s2, axis=1)])


def estimate_sync_time(res: Reservoir, inputs, r1_init, r2_init, dt: float = 1.0) -> float:
    """Characteristic synchronization time of two reservoir copies.

    Fits log-gap against time over the steps where the gap is above
    numerical noise (at most the first 500); returns minus the inverse
    slope, in the units of ``dt``. When the gap collapses within a single
    step, the bound implied by dropping to the noise floor is returned.
    """
    if np.array_equal(np.asarray(r1_init), np.asarray(r2_init)):
        raise ValueError("initial states must differ")
    inputs = np.asarray(inputs, dtype=np.float64).reshape(-1, res.d)[:SYNC_MAX_STEPS]
    if inputs.shape[0] < 1:
        raise ValueError("need at least one input step")
    gaps = sync_gaps(res, inputs, r1_init, r2_init)
    above = gaps > SYNC_NOISE_FLOOR
    # stop at the first step that hits the floor
    stop = int(np.argmin(above)) if not above.all() else len(gaps)
    if stop < 2:
        return dt / math.log(gaps[0] / SYNC_NOISE_FLOOR)
    t = dt * np.arange(stop)
    slope = np.polyfit(t, np.log(gaps[:stop]), 1)[0]
    if not slope < 0:
        raise ValueError("reservoir copies do not synchronize (non-negative log-gap slope)")
    return -1.0 / slope


def recommended_warmup(t_sync: float, t_train: float) -> float:
    """Warm-up time of ten synchronization times, capped at a quarter of training."""
    return min(10.0 * t_sync, t_train / 4.0)

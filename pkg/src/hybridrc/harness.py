"""Seeded trial execution, parameter sweeps, aggregation and result files."""
from __future__ import annotations

import csv
import dataclasses
import itertools
import json
import math
import os
import subprocess
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Any, List, Optional, Sequence

import numpy as np

from . import metrics, systems
from .errors import ConfigError, DivergenceError
from .forecaster import ForecastModel, TrainingConfig, Variant, add_input_noise, predict_autonomous, train
from .ngrc import NgrcConfig
from .reservoir import ReservoirParams, build_reservoir, estimate_sync_time, recommended_warmup

DEFAULT_BETA_TILDE = 1e-12


@dataclass(frozen=True)
class TrajectorySettings:
    tau: float = 0.06
    tau_int: float = systems.TAU_INT
    n_train: int = 10_000
    n_predict: int = 2000
    settle_time: Optional[float] = None


@dataclass(frozen=True)
class NgrcSettings:
    k: int = 2
    s: int = 1


@dataclass(frozen=True)
class TrainingSettings:
    beta: float = 1e-8
    noise_std: float = 1e-3
    # "fixed" uses reservoir.n_warmup; "sync" estimates it per trial
    warmup_rule: str = "fixed"
    beta_tilde: Optional[float] = None


@dataclass(frozen=True)
class OutputSettings:
    vpt: bool = True
    map_error: bool = False
    psd: bool = False
    psd_n_predict: int = 2 ** 15
    psd_component: Optional[int] = None


@dataclass(frozen=True)
class SweepAxis:
    param: str
    values: tuple

    def __post_init__(self):
        if not self.values:
            raise ConfigError(f"sweep over {self.param!r} has no values")
        object.__setattr__(self, "values", tuple(self.values))


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "custom"
    system: str = "Lorenz"
    trajectory: TrajectorySettings = TrajectorySettings()
    reservoir: ReservoirParams = ReservoirParams()
    ngrc: NgrcSettings = NgrcSettings()
    training: TrainingSettings = TrainingSettings()
    models: tuple = ("RC", "NGRC", "Hybrid")
    trials: int = 64
    base_seed: int = 0
    sweep: tuple = ()
    sweep_mode: str = "grid"
    outputs: OutputSettings = OutputSettings()
    partial_state: Optional[tuple] = None

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.sweep_mode not in ("grid", "separate"):
            raise ConfigError("sweep_mode must be 'grid' or 'separate'")
        if self.training.warmup_rule not in ("fixed", "sync"):
            raise ConfigError("warmup_rule must be 'fixed' or 'sync'")
        try:
            models = tuple(Variant.parse(m).value for m in self.models)
            spec = systems.get_system(self.system)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not models:
            raise ConfigError("at least one model is required")
        object.__setattr__(self, "models", models)
        object.__setattr__(self, "sweep", tuple(
            a if isinstance(a, SweepAxis) else SweepAxis(a["param"], a["values"]) for a in self.sweep))
        if self.partial_state is not None:
            idx = tuple(int(i) for i in self.partial_state)
            if not idx or any(not 0 <= i < spec.dimension for i in idx):
                raise ConfigError("partial_state indices out of range")
            object.__setattr__(self, "partial_state", idx)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_SECTIONS = {
    "trajectory": TrajectorySettings,
    "reservoir": ReservoirParams,
    "ngrc": NgrcSettings,
    "training": TrainingSettings,
    "outputs": OutputSettings,
}


def config_from_dict(doc: dict, base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    """Overlay a (JSON) document on ``base``; unknown keys are errors."""
    base = base or ExperimentConfig()
    top = {f.name for f in dataclasses.fields(ExperimentConfig)}
    changes = {}
    try:
        for key, value in doc.items():
            if key not in top:
                raise ConfigError(f"unknown configuration key {key!r}")
            if key in _SECTIONS:
                section = getattr(base, key)
                allowed = {f.name for f in dataclasses.fields(section)}
                bad = set(value) - allowed
                if bad:
                    raise ConfigError(f"unknown keys in {key!r}: {sorted(bad)}")
                changes[key] = dataclasses.replace(section, **value)
            elif key == "sweep":
                axes = [value] if isinstance(value, dict) else list(value)
                changes[key] = tuple(SweepAxis(a["param"], tuple(a["values"])) for a in axes)
            elif key in ("models", "partial_state") and value is not None:
                changes[key] = tuple(value)
            else:
                changes[key] = value
        return dataclasses.replace(base, **changes)
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(doc, base)


def override(config: ExperimentConfig, path: str, value) -> ExperimentConfig:
    """Return ``config`` with the dotted ``path`` set to ``value``."""
    parts = path.split(".")
    try:
        if len(parts) == 1:
            if parts[0] not in ("system", "trials", "base_seed"):
                raise ConfigError(f"cannot sweep {path!r}")
            return dataclasses.replace(config, **{parts[0]: value})
        if len(parts) == 2 and parts[0] in _SECTIONS:
            section = getattr(config, parts[0])
            if parts[1] not in {f.name for f in dataclasses.fields(section)}:
                raise ConfigError(f"unknown parameter path {path!r}")
            current = getattr(section, parts[1])
            if isinstance(current, int) and not isinstance(current, bool) and float(value).is_integer():
                value = int(value)
            return dataclasses.replace(config, **{parts[0]: dataclasses.replace(section, **{parts[1]: value})})
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid value {value!r} for {path!r}: {exc}") from exc
    raise ConfigError(f"unknown parameter path {path!r}")


@dataclass
class TrialResult:
    trial: int
    seed: int
    model: str
    vpt_lyap: float
    mean_map_error: Optional[float] = None
    diverged: bool = False
    failed: bool = False
    runtime: float = 0.0
    psd_distance: Optional[float] = None
    n_warmup: Optional[int] = None

    def __post_init__(self):
        if self.vpt_lyap < 0:
            raise ValueError("vpt must be nonnegative")


@dataclass
class SweepSummary:
    sweep_param: str
    sweep_value: Any
    model: str
    n_trials: int
    vpt_mean: float
    vpt_stderr: float
    vpt_median: float
    vpt_q1: float
    vpt_q3: float
    map_err_mean: Optional[float]
    map_err_stderr: Optional[float]
    diverged_frac: float
    failed_frac: float = 0.0
    psd_distance_median: Optional[float] = None


def trial_seed(base_seed: int, trial_index: int) -> int:
    """64-bit seed that depends only on (base_seed, trial_index)."""
    state = np.random.SeedSequence([int(base_seed) & 0xFFFFFFFFFFFFFFFF, int(trial_index)]).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def trial_streams(seed: int) -> dict:
    ic, res, noise, sync = np.random.SeedSequence(seed).spawn(4)
    return {
        "initial_condition": np.random.default_rng(ic),
        "reservoir": res,  # build_reservoir splits it into graph/weights/input
        "noise": np.random.default_rng(noise),
        "sync": np.random.default_rng(sync),
    }


def _ngrc_config(config: ExperimentConfig, d: int) -> NgrcConfig:
    return NgrcConfig(k=config.ngrc.k, s=config.ngrc.s, d=d)


def _sync_warmup(res, inputs, tau, n_train, rng) -> int:
    r1 = rng.uniform(-1.0, 1.0, res.N)
    r2 = rng.uniform(-1.0, 1.0, res.N)
    t_sync = estimate_sync_time(res, inputs, r1, r2, tau)
    t_warm = recommended_warmup(t_sync, n_train * tau)
    return min(max(int(math.ceil(t_warm / tau - 1e-9)), 1), n_train - 2)


def run_trial(config: ExperimentConfig, trial_index: int) -> List[TrialResult]:
    """One trajectory, one reservoir realization, every requested model."""
    seed = trial_seed(config.base_seed, trial_index)
    streams = trial_streams(seed)
    spec = systems.get_system(config.system)
    tcfg = config.trajectory
    n_train = tcfg.n_train
    n_eval = tcfg.n_predict
    n_total = max(n_eval, tcfg.n_predict if not config.outputs.psd else config.outputs.psd_n_predict)

    def failed_all():
        return [TrialResult(trial_index, seed, m, 0.0, diverged=False, failed=True) for m in config.models]

    try:
        traj = systems.integrate_and_sample(spec, None, tcfg.tau_int, tcfg.tau, n_train + n_total,
                                            tcfg.settle_time, streams["initial_condition"])
    except DivergenceError:
        return failed_all()
    stats = systems.compute_stats(traj, n_train)
    u = systems.normalize(traj, stats)
    if config.partial_state is not None:
        u = u.components(config.partial_state)
    d = u.d
    train_seg = u.segment(0, n_train)
    test_seg = u.segment(n_train)
    clean = train_seg.samples

    needs_res = any(Variant.parse(m).uses_reservoir for m in config.models)
    res = build_reservoir(config.reservoir, d, streams["reservoir"]) if needs_res else None
    n_warmup = config.reservoir.n_warmup
    if needs_res and config.training.warmup_rule == "sync":
        try:
            n_warmup = _sync_warmup(res, clean, tcfg.tau, n_train, streams["sync"])
        except ValueError:
            n_warmup = n_train // 4
    beta = config.training.beta
    if config.training.beta_tilde is not None:
        beta = n_train * config.training.beta_tilde
    try:
        cfg = TrainingConfig(beta=beta, noise_std=config.training.noise_std, n_train=n_train,
                             n_warmup=min(n_warmup, n_train - 2))
    except ValueError:
        return failed_all()
    noisy = add_input_noise(clean, cfg.noise_std, streams["noise"])
    ngrc_cfg = _ngrc_config(config, d)
    lyap_time = spec.lyapunov_time
    vcfg = metrics.VptConfig(lyapunov_time=lyap_time)

    want_map = (config.outputs.map_error and spec.delay == 0 and config.partial_state is None)
    if want_map:
        mcfg = metrics.MapErrorConfig(E_map_bar=metrics.persistence_normalizer(clean),
                                      tau_int=tcfg.tau_int, n_predict=n_eval)
    comp = config.outputs.psd_component
    if comp is None:
        comp = d - 1
    truth_psd = None
    if config.outputs.psd:
        truth_psd = metrics.welch_psd(test_seg.samples[:n_total, comp], tcfg.tau)

    results = []
    for name in config.models:
        variant = Variant.parse(name)
        t0 = time.perf_counter()
        model = ForecastModel(variant, reservoir=res if variant.uses_reservoir else None,
                              ngrc=ngrc_cfg if variant.uses_ngrc else None)
        try:
            model = train(model, clean, cfg, noisy=noisy)
        except (np.linalg.LinAlgError, ValueError):
            results.append(TrialResult(trial_index, seed, variant.value, 0.0, failed=True,
                                       runtime=time.perf_counter() - t0, n_warmup=cfg.n_warmup))
            continue
        pred = predict_autonomous(model, train_seg, n_total)
        vpt = metrics.valid_prediction_time(pred.samples[:n_eval], test_seg.samples[:n_eval], vcfg, tcfg.tau)
        map_err = None
        flow_blowup = False
        if want_map:
            errs = metrics.normalized_map_error(pred.segment(0, min(n_eval, pred.n)), spec, mcfg, stats,
                                                previous=clean[-1])
            # a state the true flow cannot integrate ends the usable prefix
            bad = np.nonzero(~np.isfinite(errs))[0]
            if bad.size:
                flow_blowup = True
                errs = errs[:bad[0]]
            map_err = float(np.mean(errs)) if errs.size else math.inf
        psd_dist = None
        if truth_psd is not None:
            if pred.n >= n_total:
                psd_dist = metrics.psd_distance(metrics.welch_psd(pred.samples[:, comp], tcfg.tau), truth_psd)
            else:
                psd_dist = math.inf
        results.append(TrialResult(
            trial=trial_index, seed=seed, model=variant.value, vpt_lyap=float(vpt),
            mean_map_error=map_err, diverged=pred.diverged or pred.n < n_eval or flow_blowup,
            runtime=time.perf_counter() - t0, psd_distance=psd_dist,
            n_warmup=cfg.n_warmup if variant.uses_reservoir else ngrc_cfg.warmup_steps))
    return results


def run_trials(config: ExperimentConfig, workers: int = 1, trial_indices: Optional[Sequence[int]] = None
               ) -> List[TrialResult]:
    """All trials of one configuration, in trial-index order."""
    idx = list(range(config.trials)) if trial_indices is None else list(trial_indices)
    job = partial(run_trial, config)
    if workers <= 1 or len(idx) <= 1:
        batches = [job(i) for i in idx]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            batches = list(pool.map(job, idx, chunksize=max(1, len(idx) // (4 * workers))))
    return [r for batch in batches for r in batch]


def sweep_points(config: ExperimentConfig):
    """Yield (param label, value label, overridden config) for every sweep point."""
    if not config.sweep:
        yield "", "", config
        return
    axes = config.sweep
    if config.sweep_mode == "separate":
        combos = [((a,), (v,)) for a in axes for v in a.values]
    else:
        combos = [(axes, vals) for vals in itertools.product(*(a.values for a in axes))]
    for ax, vals in combos:
        cfg = config
        for a, v in zip(ax, vals):
            cfg = override(cfg, a.param, v)
            if a.param == "trajectory.n_train":
                cfg = dataclasses.replace(cfg, training=dataclasses.replace(
                    cfg.training, warmup_rule="sync",
                    beta_tilde=cfg.training.beta_tilde or DEFAULT_BETA_TILDE))
        label = "|".join(a.param for a in ax)
        value = vals[0] if len(vals) == 1 else "|".join(str(v) for v in vals)
        yield label, value, cfg


def _stderr(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.size < 2:
        return 0.0
    return float(np.std(x, ddof=1) / math.sqrt(x.size))


def aggregate(results: Sequence[TrialResult], sweep_param: str = "", sweep_value: Any = "",
              models: Optional[Sequence[str]] = None) -> List[SweepSummary]:
    """Per-model statistics; failed trials count toward n_trials only."""
    if not results:
        raise ValueError("nothing to aggregate")
    if models is None:
        models = list(dict.fromkeys(r.model for r in results))
    out = []
    for m in models:
        rows = [r for r in results if r.model == m]
        if not rows:
            continue
        ok = [r for r in rows if not r.failed]
        vpts = np.array([r.vpt_lyap for r in ok], dtype=np.float64)
        maps = [r.mean_map_error for r in ok if r.mean_map_error is not None]
        psds = [r.psd_distance for r in ok if r.psd_distance is not None]
        has = vpts.size > 0
        with np.errstate(invalid="ignore"):
            out.append(SweepSummary(
                sweep_param=sweep_param, sweep_value=sweep_value, model=m, n_trials=len(rows),
                vpt_mean=float(vpts.mean()) if has else math.nan,
                vpt_stderr=_stderr(vpts) if has else math.nan,
                vpt_median=float(np.median(vpts)) if has else math.nan,
                vpt_q1=float(np.percentile(vpts, 25)) if has else math.nan,
                vpt_q3=float(np.percentile(vpts, 75)) if has else math.nan,
                map_err_mean=float(np.mean(maps)) if maps else None,
                map_err_stderr=_stderr(maps) if maps else None,
                diverged_frac=sum(r.diverged for r in rows) / len(rows),
                failed_frac=sum(r.failed for r in rows) / len(rows),
                psd_distance_median=float(np.median(psds)) if psds else None,
            ))
    return out


def run_sweep(config: ExperimentConfig, workers: int = 1):
    """Run every sweep point; returns (summaries, per-trial results by point)."""
    summaries, per_point = [], []
    for label, value, cfg in sweep_points(config):
        res = run_trials(cfg, workers)
        per_point.append((label, value, res))
        summaries.extend(aggregate(res, label, value, cfg.models))
    return summaries, per_point


SUMMARY_FIELDS = ["sweep_param", "sweep_value", "model", "n_trials", "vpt_mean", "vpt_stderr",
                  "vpt_median", "vpt_q1", "vpt_q3", "map_err_mean", "map_err_stderr", "diverged_frac"]
TRIAL_FIELDS = ["trial", "seed", "model", "vpt_lyap", "map_err_mean", "diverged"]


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, float):
        return repr(x)  # shortest string that round-trips
    return str(x)


def emit_csv(summaries: Sequence[SweepSummary], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_FIELDS)
        for s in summaries:
            w.writerow([_fmt(getattr(s, f)) for f in SUMMARY_FIELDS])


def emit_trials_csv(results: Sequence[TrialResult], path, sweep=None) -> None:
    """Distribution rows; with ``sweep`` = [(param, value, results)] the point
    is prefixed to each row."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if sweep is None:
            w.writerow(TRIAL_FIELDS)
            for r in results:
                w.writerow([_fmt(x) for x in (r.trial, r.seed, r.model, r.vpt_lyap, r.mean_map_error, r.diverged)])
        else:
            w.writerow(["sweep_param", "sweep_value"] + TRIAL_FIELDS)
            for label, value, rs in sweep:
                for r in rs:
                    w.writerow([label, _fmt(value)] + [_fmt(x) for x in (
                        r.trial, r.seed, r.model, r.vpt_lyap, r.mean_map_error, r.diverged)])


def git_describe() -> str:
    try:
        here = os.path.dirname(os.path.abspath(__file__))
        out = subprocess.run(["git", "describe", "--always", "--dirty"], cwd=here,
                             capture_output=True, text=True, timeout=5)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def emit_json(summaries: Sequence[SweepSummary], path, config: Optional[ExperimentConfig] = None,
              wall_clock: Optional[float] = None, results: Optional[Sequence[TrialResult]] = None) -> None:
    doc = {
        "config": config.to_dict() if config is not None else None,
        "build": git_describe(),
        "wall_clock_seconds": wall_clock,
        "summaries": [dataclasses.asdict(s) for s in summaries],
    }
    if results is not None:
        doc["trials"] = [dataclasses.asdict(r) for r in results]
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, default=str)


# Sweep grids below are read off figure axes and are approximate.
N_GRID = (25, 50, 100, 200, 500, 1000)
TAU_GRID = (0.01, 0.02, 0.03, 0.06, 0.09, 0.12)
N_TRAIN_GRID = tuple(int(round(x)) for x in np.logspace(2, 4, 9))


def _base(name, **kw) -> ExperimentConfig:
    return dataclasses.replace(ExperimentConfig(name=name), **kw)


def _size_and_step(name, system, taus, N=50, tau=0.06, ngrc=NgrcSettings()):
    return _base(name, system=system, ngrc=ngrc, trials=64, sweep_mode="separate",
                 reservoir=ReservoirParams(N=N), trajectory=TrajectorySettings(tau=tau),
                 sweep=(SweepAxis("reservoir.N", N_GRID), SweepAxis("trajectory.tau", taus)))


def _n_train_sweep(name, tau, N):
    return _base(name, trials=64, reservoir=ReservoirParams(N=N), trajectory=TrajectorySettings(tau=tau),
                 training=TrainingSettings(warmup_rule="sync", beta_tilde=DEFAULT_BETA_TILDE),
                 sweep=(SweepAxis("trajectory.n_train", N_TRAIN_GRID),))


_SCENARIOS = {
    "fig2": lambda: _base("fig2", trials=100),
    "fig3": lambda: _base("fig3", trials=10, outputs=OutputSettings(psd=True)),
    "fig4a": lambda: _base("fig4a", sweep=(SweepAxis("reservoir.N", N_GRID),)),
    "fig4b": lambda: _base("fig4b", sweep=(SweepAxis("trajectory.tau", TAU_GRID),)),
    "fig5-sigma": lambda: _base("fig5-sigma", sweep=(
        SweepAxis("reservoir.input_scale", (0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0)),)),
    "fig6a": lambda: _n_train_sweep("fig6a", 0.06, 100),
    "fig6b": lambda: _n_train_sweep("fig6b", 0.01, 500),
    "fig7-rossler": lambda: _size_and_step("fig7-rossler", "Rossler", (0.03, 0.06, 0.12, 0.24, 0.36, 0.48)),
    "fig7-doublescroll": lambda: _size_and_step("fig7-doublescroll", "DoubleScroll",
                                                (0.01, 0.03, 0.06, 0.12, 0.24, 0.36)),
    "fig7-mackeyglass": lambda: _size_and_step("fig7-mackeyglass", "MackeyGlass",
                                               (0.06, 0.12, 0.24, 0.36, 0.48), tau=0.36,
                                               ngrc=NgrcSettings(k=2, s=6)),
    "table2": lambda: _base("table2", outputs=OutputSettings(map_error=True),
                            sweep=(SweepAxis("system", ("Lorenz", "Rossler", "DoubleScroll")),)),
    "supp-noise": lambda: _base("supp-noise", training=TrainingSettings(noise_std=0.0),
                                sweep=(SweepAxis("trajectory.tau", TAU_GRID),)),
    "supp-heatmap": lambda: _base("supp-heatmap", trials=256, sweep=(
        SweepAxis("training.noise_std", (0.0, 1e-4, 1e-3, 1e-2, 1e-1)),
        SweepAxis("training.beta", (1e-10, 1e-8, 1e-6, 1e-4)))),
    "supp-rho": lambda: _base("supp-rho", sweep=(
        SweepAxis("reservoir.spectral_radius", (0.05, 0.1, 0.3, 0.5, 0.7, 0.9, 1.1)),)),
    "supp-partial": lambda: _base("supp-partial", trials=100, partial_state=(0,), ngrc=NgrcSettings(k=10)),
    "supp-c": lambda: _base("supp-c", sweep=(SweepAxis("reservoir.bias", (0.0, 0.25, 0.5, 1.0, 1.5, 2.0)),)),
    "supp-k": lambda: _base("supp-k", sweep=(SweepAxis("reservoir.avg_degree", (1, 2, 5, 10, 20, 40)),)),
    "supp-beta": lambda: _base("supp-beta", sweep=(
        SweepAxis("training.beta", (1e-12, 1e-10, 1e-8, 1e-6, 1e-4)),)),
}

SCENARIO_NAMES = tuple(_SCENARIOS)


def scenario(name: str) -> ExperimentConfig:
    """Preset configuration for one named figure or table."""
    try:
        return _SCENARIOS[name]()
    except KeyError:
        raise ConfigError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIO_NAMES)}") from None

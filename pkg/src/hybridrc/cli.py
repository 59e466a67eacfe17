"""Command line entry point: ``hybridrc run | list-scenarios | psd``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
import time

import numpy as np

from . import harness, metrics, systems
from .errors import ConfigError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TRIALS_FAILED = 3

log = logging.getLogger("hybridrc")


def _resolve_config(args) -> harness.ExperimentConfig:
    if args.scenario is None and args.config is None:
        raise ConfigError("give --config and/or --scenario")
    cfg = harness.scenario(args.scenario) if args.scenario else harness.ExperimentConfig()
    if args.config:
        cfg = harness.load_config(args.config, cfg)
    changes = {}
    if getattr(args, "trials", None) is not None:
        changes["trials"] = args.trials
    if getattr(args, "seed", None) is not None:
        changes["base_seed"] = args.seed
    return dataclasses.replace(cfg, **changes) if changes else cfg


def cmd_run(args) -> int:
    cfg = _resolve_config(args)
    out = args.out or os.path.join("results", cfg.name)
    os.makedirs(out, exist_ok=True)
    t0 = time.perf_counter()
    summaries, points = [], []
    for label, value, point_cfg in harness.sweep_points(cfg):
        log.info("running %s %s=%s (%d trials)", cfg.name, label or "-", value, point_cfg.trials)
        res = harness.run_trials(point_cfg, args.workers)
        points.append((label, value, res))
        summaries.extend(harness.aggregate(res, label, value, point_cfg.models))
    wall = time.perf_counter() - t0
    results = [r for _, _, rs in points for r in rs]
    harness.emit_csv(summaries, os.path.join(out, "summary.csv"))
    harness.emit_trials_csv(results, os.path.join(out, "trials.csv"), sweep=points if cfg.sweep else None)
    harness.emit_json(summaries, os.path.join(out, "summary.json"), cfg, wall, results)
    for s in summaries:
        print(f"{s.sweep_param or '-'}={s.sweep_value!s:>8} {s.model:>6}  "
              f"vpt median {s.vpt_median:.3f}  mean {s.vpt_mean:.3f} +/- {s.vpt_stderr:.3f}"
              + (f"  map_err {s.map_err_mean:.3g}" if s.map_err_mean is not None else ""))
    print(f"wrote {out} in {wall:.1f}s")
    failed = sum(r.failed for r in results)
    if results and failed > 0.5 * len(results):
        log.error("%d of %d model runs failed", failed, len(results))
        return EXIT_TRIALS_FAILED
    return EXIT_OK


def cmd_list(args) -> int:
    for name in harness.SCENARIO_NAMES:
        cfg = harness.scenario(name)
        axes = ", ".join(a.param for a in cfg.sweep) or "no sweep"
        print(f"{name:20s} {cfg.system:12s} {cfg.trials:4d} trials  {axes}")
    return EXIT_OK


def cmd_psd(args) -> int:
    """Welch spectra of the true continuation and every model's long forecast
    for the first trial of the configuration."""
    cfg = _resolve_config(args)
    cfg = dataclasses.replace(cfg, trials=1, sweep=(), outputs=dataclasses.replace(cfg.outputs, psd=True))
    spec = systems.get_system(cfg.system)
    from .forecaster import ForecastModel, TrainingConfig, Variant, add_input_noise, predict_autonomous, train
    from .ngrc import NgrcConfig
    from .reservoir import build_reservoir

    seed = harness.trial_seed(cfg.base_seed, 0)
    st = harness.trial_streams(seed)
    tc = cfg.trajectory
    n = cfg.outputs.psd_n_predict
    traj = systems.integrate_and_sample(spec, None, tc.tau_int, tc.tau, tc.n_train + n, tc.settle_time,
                                        st["initial_condition"])
    u = systems.normalize(traj, systems.compute_stats(traj, tc.n_train))
    if cfg.partial_state is not None:
        u = u.components(cfg.partial_state)
    comp = cfg.outputs.psd_component if cfg.outputs.psd_component is not None else u.d - 1
    train_seg, test = u.segment(0, tc.n_train), u.segment(tc.n_train)
    res = build_reservoir(cfg.reservoir, u.d, st["reservoir"])
    tcfg = TrainingConfig(cfg.training.beta, cfg.training.noise_std, tc.n_train, cfg.reservoir.n_warmup)
    noisy = add_input_noise(train_seg.samples, tcfg.noise_std, st["noise"])
    columns = {"truth": metrics.welch_psd(test.samples[:n, comp], tc.tau)}
    for name in cfg.models:
        v = Variant.parse(name)
        m = ForecastModel(v, res if v.uses_reservoir else None,
                          NgrcConfig(cfg.ngrc.k, cfg.ngrc.s, u.d) if v.uses_ngrc else None)
        m = train(m, train_seg, tcfg, noisy=noisy)
        pred = predict_autonomous(m, train_seg, n)
        if pred.n < n:
            log.warning("%s forecast diverged at step %d; spectrum omitted", v.value, pred.n)
            continue
        columns[v.value] = metrics.welch_psd(pred.samples[:, comp], tc.tau)
    freqs = columns["truth"].frequencies
    header = ["frequency"] + list(columns)
    table = np.column_stack([freqs] + [c.power for c in columns.values()])
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    np.savetxt(args.out, table, delimiter=",", header=",".join(header), comments="", fmt="%.17g")
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hybridrc", description="Hybrid reservoir forecasting experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a configuration or scenario")
    run.add_argument("--config")
    run.add_argument("--scenario")
    run.add_argument("--trials", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--out")
    run.set_defaults(func=cmd_run)

    ls = sub.add_parser("list-scenarios", help="list the preset scenarios")
    ls.set_defaults(func=cmd_list)

    psd = sub.add_parser("psd", help="write forecast and truth spectra as CSV")
    psd.add_argument("--config")
    psd.add_argument("--scenario")
    psd.add_argument("--seed", type=int)
    psd.add_argument("--out", required=True)
    psd.set_defaults(func=cmd_psd)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

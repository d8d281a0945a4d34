"""Command line: simulate, check, verify, forgetting, gronwall, report.

Exit codes: 0 when every check passes, 1 when any check fails, 2 on a
configuration problem.  All file output is deterministic for a fixed
(config, seed): CSV cells use 17 significant digits and JSON is emitted
with sorted keys, so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from .. import bounds
from ..dynamics import make_path_bundle, simulate_coupled, FilterState
from ..errors import ConfigError
from .config import ExperimentConfig, load_config
from .estimators import (
    estimate_chi2_laplace,
    estimate_ekf_laplace,
    estimate_event_probability,
    estimate_forgetting_rate,
    estimate_moments,
    gronwall_test_process,
    run_ensemble,
    verify_trace_bound,
)

_GRONWALL_DEFAULTS = {"a": 1.0, "w": 0.5, "u": 0.0, "v": 0.0, "y0": 1.0, "n_paths": 10000}


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _write_csv(path: str, fieldnames: list, rows: list) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fieldnames)
        for row in rows:
            writer.writerow([_fmt(row.get(name, "")) for name in fieldnames])


def _summary(scenario: str, details: list) -> dict:
    passes = [bool(d["pass"]) for d in details if "pass" in d]
    refs = sorted({d["paper_ref"] for d in details if "paper_ref" in d})
    return {
        "scenario": scenario,
        "pass": all(passes) if passes else True,
        "details": details,
        "paper_refs": refs,
    }


def _emit(summary: dict, out: str | None, stem: str) -> int:
    text = json.dumps(summary, indent=2, sort_keys=True) + "\n"
    if out is not None:
        with open(os.path.join(out, f"{stem}.json"), "w", encoding="utf-8") as fh:
            fh.write(text)
    n = len(summary["details"])
    n_pass = sum(1 for d in summary["details"] if d.get("pass", True))
    verdict = "PASS" if summary["pass"] else "FAIL"
    print(f"{summary['scenario']}: {verdict} ({n_pass}/{n} checks)")
    return 0 if summary["pass"] else 1


_EVENT_COLUMNS = [
    "t", "delta", "frequency", "ci_low", "ci_high", "threshold", "pass",
    "radius", "n_diverged", "paper_ref",
]
_MOMENT_COLUMNS = [
    "t", "n", "kind", "estimate", "ci_low", "ci_high", "bound", "pass",
    "n_diverged", "paper_ref",
]
_LAPLACE_COLUMNS = [
    "mode", "t", "eps", "coefficient", "estimate", "ci_low", "ci_high",
    "bound", "n_overflow", "pass", "paper_ref",
]
_TRACE_COLUMNS = [
    "n_trials", "dt", "max_violation", "threshold", "pass", "n_diverged", "paper_ref",
]
_GRONWALL_COLUMNS = [
    "t", "n", "kind", "estimate", "ci_low", "ci_high", "oracle", "bound",
    "oracle_pass", "pass", "paper_ref",
]


def _ensemble(cfg: ExperimentConfig, with_records: bool = False):
    return run_ensemble(
        cfg.model,
        cfg.obs,
        cfg.x0,
        cfg.filters,
        cfg.dt,
        cfg.steps,
        cfg.n_trials,
        cfg.seed,
        cfg.checkpoint_steps(),
        record_steps=cfg.record_steps() if with_records else None,
    )


def _init_sq(cfg: ExperimentConfig) -> float:
    e = cfg.x0 - cfg.filters[0][0]
    return float(e @ e)


def _cmd_check(cfg: ExperimentConfig, out: str | None) -> int:
    c = bounds.problem_constants(cfg.model, cfg.obs, cfg.filters[0][1])
    report = bounds.bounds_report(
        c, cfg.checkpoints, cfg.delta_grid, alpha=cfg.alpha, init_sq=_init_sq(cfg)
    )
    text = report.to_json() + "\n"
    sys.stdout.write(text)
    if out is not None:
        with open(os.path.join(out, "bounds.json"), "w", encoding="utf-8") as fh:
            fh.write(text)
    return 0


def _cmd_simulate(cfg: ExperimentConfig, out: str | None) -> int:
    result = _ensemble(cfg)
    rows = []
    for i, t in enumerate(result.checkpoint_times):
        rows.append(
            {
                "t": float(t),
                "mean_signal_err_sq": float(result.signal_err_sq[:, i].mean()),
                "mean_filter_err_sq": float(result.filter_err_sq[:, i].mean()),
                "mean_dev_sq": float(result.mean_dev_sq[:, i].mean()),
                "n_diverged": int(result.diverged.sum()),
            }
        )
    if out is not None:
        _write_csv(
            os.path.join(out, "ensemble.csv"),
            ["t", "mean_signal_err_sq", "mean_filter_err_sq", "mean_dev_sq", "n_diverged"],
            rows,
        )
        _write_trajectory(cfg, os.path.join(out, "trajectory.csv"))
    summary = _summary("simulate", [dict(r, **{"pass": True, "paper_ref": "ensemble-summary"}) for r in rows])
    return _emit(summary, out, "simulate")


def _write_trajectory(cfg: ExperimentConfig, path: str) -> None:
    """One fully recorded trial (index 0) for plotting."""
    bundle = make_path_bundle(cfg.seed, 0, cfg.steps, cfg.dt, cfg.model.dim, cfg.obs.obs_dim)
    states = [FilterState(mean=m, cov=P) for m, P in cfg.filters]
    rec = simulate_coupled(cfg.model, cfg.obs, cfg.x0, states, bundle, cfg.record_every)
    c = bounds.problem_constants(cfg.model, cfg.obs, cfg.filters[0][1])
    tau = np.asarray(bounds.tau_t(c, rec.times))
    d = cfg.model.dim
    cols = (
        ["t"]
        + [f"x_{i}" for i in range(d)]
        + [f"xhat_{i}" for i in range(d)]
        + ["trace_P", "trace_envelope"]
    )
    full_pos = [int(round(t / cfg.dt)) for t in rec.times]
    rows = []
    for i, t in enumerate(rec.times):
        row = {"t": float(t)}
        for k in range(d):
            row[f"x_{k}"] = float(rec.signal[i, k])
            row[f"xhat_{k}"] = float(rec.means[0, i, k])
        row["trace_P"] = float(rec.traces[0, full_pos[i]])
        row["trace_envelope"] = float(tau[i])
        rows.append(row)
    _write_csv(path, cols, rows)


def _cmd_verify(cfg: ExperimentConfig, out: str | None, scenario: str | None) -> int:
    scenario = scenario or cfg.scenario
    if scenario in ("signal-vs-flow", "ekf-vs-signal"):
        result = _ensemble(cfg)
        kind = "signal" if scenario == "signal-vs-flow" else "ekf"
        details = estimate_event_probability(result, cfg.delta_grid, kind, init_sq=_init_sq(cfg))
        moment_rows = estimate_moments(result, cfg.n_orders)
        if out is not None:
            _write_csv(os.path.join(out, "events.csv"), _EVENT_COLUMNS, details)
            _write_csv(os.path.join(out, "moments.csv"), _MOMENT_COLUMNS, moment_rows)
        details = details + moment_rows
        if scenario == "ekf-vs-signal":
            lap = dict(estimate_ekf_laplace(result, cfg.eps), mode="ekf")
            if out is not None:
                _write_csv(os.path.join(out, "laplace.csv"), _LAPLACE_COLUMNS, [lap])
            details.append(lap)
        return _emit(_summary(scenario, details), out, "verify")
    if scenario == "trace-bound":
        result = _ensemble(cfg)
        row = verify_trace_bound(result)
        if out is not None:
            _write_csv(os.path.join(out, "trace.csv"), _TRACE_COLUMNS, [dict(row, dt=cfg.dt)])
        return _emit(_summary(scenario, [row]), out, "verify")
    if scenario == "chi2-laplace":
        row = dict(estimate_chi2_laplace(cfg.filters[0][1], cfg.n_trials, cfg.seed), mode="chi2")
        if out is not None:
            _write_csv(os.path.join(out, "laplace.csv"), _LAPLACE_COLUMNS, [row])
        return _emit(_summary(scenario, [row]), out, "verify")
    raise ConfigError(
        f"scenario {scenario!r} has its own subcommand; verify handles "
        "signal-vs-flow, ekf-vs-signal, trace-bound, chi2-laplace"
    )


def _cmd_forgetting(cfg: ExperimentConfig, out: str | None) -> int:
    if len(cfg.filters) < 2:
        raise ConfigError("forgetting needs init.filters with at least two entries")
    result = _ensemble(cfg, with_records=True)
    report = estimate_forgetting_rate(result, cfg.eps)
    if out is not None and result.delta_sq is not None:
        alive = ~result.diverged
        dsq = result.delta_sq[alive] if alive.any() else result.delta_sq
        exponent = report.get("exponent")
        curve_rows = []
        for i, t in enumerate(result.record_times):
            row = {
                "t": float(t),
                "mean_delta_n1": float((dsq[:, i] ** 1).mean()),
                "mean_delta_n2": float((dsq[:, i] ** 2).mean()),
            }
            if exponent is not None:
                row["mean_delta_pow"] = float((dsq[:, i] ** (exponent / 2.0)).mean())
            curve_rows.append(row)
        _write_csv(
            os.path.join(out, "forgetting.csv"),
            ["t", "mean_delta_pow", "mean_delta_n1", "mean_delta_n2"],
            curve_rows,
        )
    return _emit(_summary("coupled-forgetting", [report]), out, "forgetting")


def _cmd_gronwall(cfg: ExperimentConfig, out: str | None) -> int:
    g = cfg.gronwall or dict(_GRONWALL_DEFAULTS)
    rows = gronwall_test_process(
        a=g["a"],
        w=g["w"],
        dt=cfg.dt,
        T=cfg.T,
        n_paths=g["n_paths"],
        seed=cfg.seed,
        orders=cfg.n_orders,
        y0=g["y0"],
        u=g["u"],
        v=g["v"],
    )
    if out is not None:
        _write_csv(os.path.join(out, "gronwall.csv"), _GRONWALL_COLUMNS, rows)
    return _emit(_summary("gronwall-test", rows), out, "gronwall")


def _cmd_report(cfg: ExperimentConfig, out: str | None) -> int:
    """Full battery: envelopes, events, moments, trace, Laplace, and extras."""
    _cmd_check(cfg, out)
    details = []
    result = _ensemble(cfg, with_records=len(cfg.filters) >= 2)
    details += estimate_event_probability(result, cfg.delta_grid, "signal", init_sq=_init_sq(cfg))
    details += estimate_event_probability(result, cfg.delta_grid, "ekf", init_sq=_init_sq(cfg))
    details += estimate_moments(result, cfg.n_orders)
    details.append(verify_trace_bound(result))
    details.append(dict(estimate_chi2_laplace(cfg.filters[0][1], cfg.n_trials, cfg.seed), mode="chi2"))
    details.append(dict(estimate_ekf_laplace(result, cfg.eps), mode="ekf"))
    if len(cfg.filters) >= 2:
        details.append(estimate_forgetting_rate(result, cfg.eps))
    if cfg.gronwall is not None:
        g = cfg.gronwall
        details += gronwall_test_process(
            a=g["a"], w=g["w"], dt=cfg.dt, T=cfg.T, n_paths=g["n_paths"],
            seed=cfg.seed, orders=cfg.n_orders, y0=g["y0"], u=g["u"], v=g["v"],
        )
    if out is not None:
        _write_csv(os.path.join(out, "events.csv"), _EVENT_COLUMNS,
                   [d for d in details if d.get("paper_ref", "").startswith("event-radius")])
        _write_csv(os.path.join(out, "moments.csv"), _MOMENT_COLUMNS,
                   [d for d in details if d.get("paper_ref", "").startswith("moment-envelope")])
    return _emit(_summary("report", details), out, "report")


def run_cli(argv) -> int:
    parser = argparse.ArgumentParser(
        prog="ekbf",
        description="Simulate extended Kalman-Bucy filters and verify their error envelopes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("simulate", "run an ensemble and write trajectory and summary CSV"),
        ("check", "print the closed-form envelope report as JSON"),
        ("verify", "estimate event frequencies and moments against the envelopes"),
        ("forgetting", "fit the coupled-filter forgetting rate"),
        ("gronwall", "run the synthetic moment-envelope test process"),
        ("report", "run the whole battery and write a combined summary"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="path to the JSON experiment config")
        p.add_argument("--out", default=None, help="directory for CSV/JSON output")
        if name == "verify":
            p.add_argument("--scenario", default=None, help="override test.scenario")

    try:
        args = parser.parse_args(argv)
        cfg = load_config(args.config)
        if args.out is not None:
            os.makedirs(args.out, exist_ok=True)
        if args.command == "check":
            return _cmd_check(cfg, args.out)
        if args.command == "simulate":
            return _cmd_simulate(cfg, args.out)
        if args.command == "verify":
            return _cmd_verify(cfg, args.out, args.scenario)
        if args.command == "forgetting":
            return _cmd_forgetting(cfg, args.out)
        if args.command == "gronwall":
            return _cmd_gronwall(cfg, args.out)
        return _cmd_report(cfg, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()

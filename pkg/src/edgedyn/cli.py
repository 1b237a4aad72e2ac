"""Configuration-driven command line.

Subcommands mirror the task names: moments, stationary, transient,
simulate, diffusion, ldp, reproduce-paper.  Every run writes its outputs
atomically into the output directory (delimited CSV/JSON plus rendered
PNG figures) and finishes with an index.json listing each file with its
SHA-256 checksum.  Failures print a machine-readable error JSON on stderr
and exit nonzero.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import plots
from .config import ExperimentConfig, load_config, parse_config
from .diffusion import (
    build_diffusion_spec,
    fluctuation_variance,
    lattice_ks_distance,
    simulate_ou,
)
from .errors import ConfigInvalid, EdgedynError, TaskFailed
from .ldp import (
    PathFunction,
    local_rate_regime,
    local_rate_resample,
    minimize_over_profiles,
)
from .regime import stationary_joint, transient_trajectory
from .report import regime_report, resample_report, scaled_resample_report
from .resample import kernel_stationary
from .simulate import (
    build_ensemble,
    default_regime_burn_in,
    default_resample_burn_in,
    ensemble_stats,
    resample_ensemble,
    simulate_regime_aggregate,
    simulate_resample_continuous,
    stationary_sample_regime,
    stationary_sample_resample_ct,
)

#: constants printed in the source experiments; situation A is flagged as
#: unreconciled with the recomputed values (see README)
PRINTED_CONSTANTS = {"A": (0.762, 0.182), "B": (0.625, 0.308)}

SITUATION_CONFIGS = {
    "A": {
        "schema": 1,
        "model": {
            "kind": "regime",
            "Q": [[-2.0, 2.0], [3.0, -3.0]],
            "up_rates": [0.3, 0.5],
            "down_rates": [1.0, 0.1],
        },
        "task": {"name": "reproduce-paper", "situation": "A"},
        "run": {"n_edges": [45], "delta": 1.0, "scaled": True},
    },
    "B": {
        "schema": 1,
        "model": {
            "kind": "resample-ct",
            "rates": {"up": {"uniform": [0.0, 5.0]}, "down": {"uniform": [0.0, 3.0]}},
        },
        "task": {"name": "reproduce-paper", "situation": "B"},
        "run": {"n_edges": [45], "delta": 1.0},
    },
}


class OutputWriter:
    """Atomic file writes (temp + rename) with a checksum index."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.entries = []

    def _commit(self, name: str, tmp: Path) -> Path:
        final = self.out_dir / name
        os.replace(tmp, final)
        data = final.read_bytes()
        self.entries.append(
            {"path": name, "sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)}
        )
        return final

    def write_text(self, name: str, text: str) -> Path:
        tmp = self.out_dir / f".{name}.tmp"
        tmp.write_text(text, encoding="utf-8")
        return self._commit(name, tmp)

    def write_json(self, name: str, obj) -> Path:
        return self.write_text(name, json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def write_csv(self, name: str, header: str, rows) -> Path:
        lines = [header]
        lines.extend(",".join(_fmt(v) for v in row) for row in rows)
        return self.write_text(name, "\n".join(lines) + "\n")

    def write_figure(self, name: str, draw) -> Path:
        tmp = self.out_dir / f".{name}.tmp"
        draw(tmp)
        return self._commit(name, tmp)

    def write_index(self) -> Path:
        index = {"schema": 1, "files": sorted(self.entries, key=lambda e: e["path"])}
        tmp = self.out_dir / ".index.json.tmp"
        tmp.write_text(json.dumps(index, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        os.replace(tmp, self.out_dir / "index.json")
        return self.out_dir / "index.json"


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float) and value.is_integer() and abs(value) < 1e15:
        return str(value)
    return repr(float(value)) if isinstance(value, (float, np.floating)) else str(value)


# -- task runners -------------------------------------------------------------------


def task_moments(config: ExperimentConfig, writer: OutputWriter) -> str:
    run = config.run
    if config.model_kind == "regime":
        report = regime_report(config.regime_model(), scaled=run.scaled)
    elif config.model_kind == "resample":
        report = resample_report(config.resample_model())
    else:
        report = scaled_resample_report(config.scaled_law(), n_edges=run.n_edges[0])
    writer.write_json("moments.json", report.to_dict())
    bits = [f"{k}={v:.6g}" for k, v in (
        ("mean", report.mean_exact), ("var", report.var_exact),
        ("rhoBar", report.rho_bar), ("v", report.v)) if v is not None]
    return f"moments[{config.model_kind}]: " + " ".join(bits)


def task_stationary(config: ExperimentConfig, writer: OutputWriter) -> str:
    if config.model_kind == "regime":
        model = config.regime_model()
        method = config.task.get("method", "generator-solve")
        joint = stationary_joint(model, method, scaled=config.run.scaled)
        rows = [
            (m, i, joint.p[m, i])
            for m in range(model.n_edges + 1)
            for i in range(model.d)
        ]
        writer.write_csv("stationary.csv", "m,regime,prob", rows)
        marginal = joint.edge_marginal()
        mean, var = joint.mean(), joint.variance()
    else:
        model = (config.resample_model() if config.model_kind == "resample"
                 else _embedded_from_ct(config))
        marginal = kernel_stationary(model)
        writer.write_csv("stationary.csv", "m,prob", list(enumerate(marginal)))
        grid = np.arange(marginal.size)
        mean = float(grid @ marginal)
        var = float((grid - mean) ** 2 @ marginal)
    writer.write_figure("stationary.png", lambda p: plots.stationary_figure(
        marginal, p, title="stationary edge-count distribution"))
    return f"stationary[{config.model_kind}]: mean={mean:.6g} var={var:.6g}"


def _embedded_from_ct(config: ExperimentConfig):
    from .resample import ResampleModel, embed_continuous

    spec = config.continuous_spec()
    return ResampleModel(law=embed_continuous(spec), n_edges=config.run.n_edges[0])


def task_transient(config: ExperimentConfig, writer: OutputWriter) -> str:
    if config.model_kind != "regime":
        raise ConfigInvalid("transient task needs a regime model", field="model.kind")
    model = config.regime_model()
    horizon = config.run.horizon or 10.0 / model.starred()[2]
    times = np.array(config.task.get("times", np.linspace(0.0, horizon, 25).tolist()))
    y0 = int(config.task.get("y0", 0))
    x0 = config.task.get("x0", model.pi().tolist())
    traj = transient_trajectory(model, y0, x0, times, scaled=config.run.scaled)
    rows = [
        (t, m, i, traj[j, m, i])
        for j, t in enumerate(times)
        for m in range(model.n_edges + 1)
        for i in range(model.d)
    ]
    writer.write_csv("transient.csv", "t,m,regime,prob", rows)
    grid = np.arange(model.n_edges + 1)
    marginals = traj.sum(axis=2)
    means = marginals @ grid
    sds = np.sqrt(np.maximum((marginals * (grid[None, :] - means[:, None]) ** 2).sum(axis=1), 0))
    writer.write_figure("transient.png", lambda p: plots.transient_figure(
        times, means, sds, p, title="transient mean and spread"))
    return f"transient[regime]: t_max={times[-1]:.6g} mean_end={means[-1]:.6g}"


def task_simulate(config: ExperimentConfig, writer: OutputWriter) -> str:
    run = config.run
    y0 = int(config.task.get("y0", 0))
    if config.model_kind == "regime":
        model = config.regime_model()
        horizon = run.horizon or 1.5 * default_regime_burn_in(model)
        ens = build_ensemble(run.replications, run.seed, lambda key: simulate_regime_aggregate(
            model, horizon, y0=y0, seed=key, scaled=run.scaled))
        times = np.array(config.task.get("times", np.linspace(0.0, horizon, 13).tolist()))
    elif config.model_kind == "resample":
        model = config.resample_model()
        slots = run.slots or int(1.5 * default_resample_burn_in(model))
        ens = resample_ensemble(model, slots, run.replications, run.seed, y0=y0)
        times = np.array(config.task.get(
            "times", np.unique(np.linspace(0, slots, 13).astype(int)).tolist()))
    else:
        spec = config.continuous_spec()
        n = run.n_edges[0]
        embedded = _embedded_from_ct(config)
        horizon = run.horizon or 1.5 * default_resample_burn_in(embedded) * spec.period
        ens = build_ensemble(run.replications, run.seed, lambda key: simulate_resample_continuous(
            spec, n, horizon, y0=y0, seed=key))
        times = np.array(config.task.get("times", np.linspace(0.0, horizon, 13).tolist()))

    stats = ensemble_stats(ens, times, bins=run.bins)
    first = ens.paths[0]
    writer.write_csv("path.csv", "time,regime,Y",
                     zip(first.times, first.modulators, first.counts))
    writer.write_csv("stats.csv", "t,mean,var,cov1",
                     zip(stats.times, stats.mean, stats.var, stats.cov1))
    counts, edges = stats.histograms[-1]
    writer.write_csv("hist.csv", "bin_lo,bin_hi,count",
                     zip(edges[:-1], edges[1:], counts))
    writer.write_figure("path.png", lambda p: plots.path_figure(
        first.times, first.counts, p, title="sample path"))
    writer.write_figure("hist.png", lambda p: plots.histogram_figure(
        counts, edges, p, title=f"edge count at t={times[-1]:.4g}",
        xlabel="edges present"))
    return (f"simulate[{config.model_kind}]: reps={ens.replications} "
            f"mean_end={stats.mean[-1]:.6g} var_end={stats.var[-1]:.6g}")


def task_diffusion(config: ExperimentConfig, writer: OutputWriter) -> str:
    if config.model_kind == "regime":
        spec = build_diffusion_spec(config.regime_model())
    elif config.model_kind == "resample-ct":
        spec = build_diffusion_spec(config.scaled_law())
    else:
        raise ConfigInvalid("diffusion task needs a regime or resample-ct model",
                            field="model.kind")
    horizon = config.run.horizon or 8.0 / spec.rate
    times = np.array(config.task.get("times", np.linspace(0.0, horizon, 33).tolist()))
    rho = np.array([spec.rho(t) for t in times])
    gprime = np.array([spec.g_prime(t) for t in times])
    hprime = np.array([spec.h_prime(t) for t in times])
    sigma2 = np.array([fluctuation_variance(spec, t) for t in times])
    writer.write_csv("diffusion.csv", "t,rho,gprime,hprime,sigma2",
                     zip(times, rho, gprime, hprime, sigma2))
    dt = config.task.get("dt", 0.01 / spec.rate)
    ou_times, ou_values = simulate_ou(spec, horizon, dt, seed=config.run.seed)
    writer.write_csv("ou_path.csv", "time,regime,Y",
                     ((t, -1, v) for t, v in zip(ou_times, ou_values)))
    writer.write_figure("diffusion.png", lambda p: plots.diffusion_figure(
        times, rho, gprime, hprime, sigma2, p, title="diffusion-limit ingredients"))
    return (f"diffusion[{spec.kind}]: rate={spec.rate:.6g} "
            f"stationary_var={spec.stationary_variance():.6g}")


def task_ldp(config: ExperimentConfig, writer: OutputWriter) -> str:
    x_steps = int(config.task.get("x_steps", 41))
    y_steps = int(config.task.get("y_steps", 41))
    x_grid = np.linspace(0.0, 1.0, x_steps)
    if config.model_kind == "regime":
        model = config.regime_model()
        g = np.array(config.task.get("profile", model.pi().tolist()), dtype=float)
        up_max = float(g @ model.up_rates)
        down_max = float(g @ model.down_rates)
        y_lo, y_hi = config.task.get("y_range", [-1.5 * down_max, 1.5 * up_max])
        y_grid = np.linspace(y_lo, y_hi, y_steps)
        rates = np.array([[local_rate_regime(x, g, y, model) for y in y_grid]
                          for x in x_grid])
        label = "regime"
    elif config.model_kind == "resample-ct":
        law = config.scaled_law()
        inc = law.increments
        y_lo, y_hi = config.task.get(
            "y_range", [-1.5 * inc.mean_down(), 1.5 * inc.mean_up()])
        y_grid = np.linspace(y_lo, y_hi, y_steps)
        rates = np.array([[local_rate_resample(x, y, law) for y in y_grid]
                          for x in x_grid])
        label = "resample"
    else:
        raise ConfigInvalid("ldp task needs a regime or resample-ct model",
                            field="model.kind")
    rows = [(x, y, rates[i, j]) for i, x in enumerate(x_grid) for j, y in enumerate(y_grid)]
    writer.write_csv("rate_surface.csv", "x,y,rate", rows)
    writer.write_figure("rate_surface.png", lambda p: plots.rate_surface_figure(
        x_grid, y_grid, rates, p, title=f"local rate function ({label})"))

    summary = f"ldp[{label}]: grid {x_steps}x{y_steps}"
    path_doc = config.task.get("path")
    if path_doc is not None and config.model_kind == "regime":
        f = PathFunction(np.array(path_doc["values"], dtype=float),
                         float(path_doc["horizon"]))
        cost, profile = minimize_over_profiles(f, model)
        times = f.grid
        slopes = f.node_slopes()
        g_cols = profile.values
        integrand = [
            local_rate_regime(f.values[j], g_cols[j], slopes[j], model)
            for j in range(times.size)
        ]
        d = g_cols.shape[1]
        header = "s," + ",".join(f"g{i + 1}" for i in range(d)) + ",integrand"
        rows = [(times[j], *g_cols[j], integrand[j]) for j in range(times.size)]
        writer.write_csv("profile.csv", header, rows)
        summary += f" path_cost={cost:.6g}"
    return summary


def task_reproduce(config: ExperimentConfig, writer: OutputWriter) -> str:
    situation = config.task.get("situation")
    if situation not in PRINTED_CONSTANTS:
        raise ConfigInvalid("reproduce-paper needs situation 'A' or 'B'",
                            field="task.situation")
    run = config.run
    n = run.n_edges[0]
    reps = run.replications

    if situation == "A":
        model = config.regime_model(n)
        report = regime_report(model, scaled=True)
        spec = build_diffusion_spec(model)
        samples = stationary_sample_regime(model, reps, run.seed, scaled=True)
        path = simulate_regime_aggregate(model, 8.0 / spec.rate, y0=0,
                                         seed=(run.seed, 0), scaled=True)
    else:
        ct_spec = config.continuous_spec(n)
        report = scaled_resample_report(config.scaled_law(), n_edges=n)
        spec = build_diffusion_spec(config.scaled_law())
        samples = stationary_sample_resample_ct(ct_spec, n, reps, run.seed)
        path = simulate_resample_continuous(ct_spec, n, 8.0 / spec.rate, y0=0,
                                            seed=(run.seed, 0))

    mean_exact, var_exact = report.mean_exact, report.var_exact
    sd_exact = math.sqrt(var_exact)
    ybar = (samples - mean_exact) / sd_exact
    sim_mean, sim_var = float(samples.mean()), float(samples.var(ddof=1))
    se_mean = sd_exact / math.sqrt(reps)
    m4 = float(((samples - sim_mean) ** 4).mean())
    se_var = math.sqrt(max(m4 - sim_var**2, 0.0) / reps)
    ks_raw, ks_corrected = lattice_ks_distance(samples, mean_exact, sd_exact)

    printed_mean, printed_var = PRINTED_CONSTANTS[situation]
    recomputed_mean = report.mean_coefficient
    recomputed_var = report.var_coefficient
    comparison = {
        "situation": situation,
        "printed": {"meanCoefficient": printed_mean, "varCoefficient": printed_var},
        "recomputed": {
            "meanCoefficient": recomputed_mean,
            "varCoefficient": recomputed_var,
            "meanExactAtN": mean_exact,
            "varExactAtN": var_exact,
        },
        "printedMatchesRecomputed": {
            "mean": abs(recomputed_mean - printed_mean) < 1e-3,
            "var": abs(recomputed_var - printed_var) < 1e-3,
        },
        "simulation": {
            "replications": reps,
            "mean": sim_mean,
            "var": sim_var,
            "meanWithin3Sigma": abs(sim_mean - mean_exact) < 3.0 * se_mean,
            "varWithin3Sigma": abs(sim_var - var_exact) < 3.0 * se_var,
        },
        "normalityKS": {
            "raw": ks_raw,
            "latticeCorrected": ks_corrected,
            "note": "raw KS of integer-valued samples is floored near "
                    "pmf_max/2 by lattice granularity; the corrected value "
                    "measures shape deviation alone",
        },
    }
    writer.write_json("report.json", {"analytic": report.to_dict(),
                                      "comparison": comparison})

    bins = run.bins if isinstance(run.bins, int) else "fd"
    counts, edges = np.histogram(ybar, bins=bins)
    writer.write_csv("histogram.csv", "bin_lo,bin_hi,count",
                     zip(edges[:-1], edges[1:], counts))
    writer.write_figure("histogram.png", lambda p: plots.histogram_figure(
        counts, edges, p, overlay_normal=True,
        title=f"situation {situation}: normalized stationary edge count (N={n})",
        xlabel="normalized edge count"))

    writer.write_csv("path.csv", "time,regime,Y",
                     zip(path.times, path.modulators, path.counts))
    mean_curve = (lambda t: n * spec.rho(t))
    writer.write_figure("path.png", lambda p: plots.path_figure(
        path.times, path.counts, p, mean_curve=mean_curve,
        title=f"situation {situation}: sample path (N={n})"))

    flag = "" if comparison["printedMatchesRecomputed"]["var"] else " [printed constants unreconciled]"
    return (f"reproduce-paper[{situation}]: N={n} meanCoeff={recomputed_mean:.4f} "
            f"varCoeff={recomputed_var:.4f} ksRaw={ks_raw:.4f} "
            f"ksCorrected={ks_corrected:.4f}{flag}")


TASKS = {
    "moments": task_moments,
    "stationary": task_stationary,
    "transient": task_transient,
    "simulate": task_simulate,
    "diffusion": task_diffusion,
    "ldp": task_ldp,
    "reproduce-paper": task_reproduce,
}


# -- argument handling ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edgedyn",
        description="Analytics, simulation and rare-event numerics for "
                    "randomly evolving graph edge counts.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in TASKS:
        p = sub.add_parser(name, help=f"run the {name} task")
        p.add_argument("--config", type=str, default=None,
                       help="experiment config JSON (see README)")
        p.add_argument("--seed", type=int, default=None, help="root seed override")
        p.add_argument("--reps", type=int, default=None,
                       help="replication count override")
        p.add_argument("--out", type=str, default=None,
                       help="output directory override")
        p.add_argument("--bins", type=int, default=None,
                       help="histogram bin-count override (default Freedman-Diaconis)")
        if name == "reproduce-paper":
            p.add_argument("--situation", choices=("A", "B"), default=None,
                           help="which published experiment to rerun")
            p.add_argument("--n", type=int, default=None,
                           help="number of potential edges (default 45)")
    return parser


def resolve_config(args) -> ExperimentConfig:
    if args.config is not None:
        config = load_config(args.config)
    elif args.command == "reproduce-paper":
        situation = args.situation or "B"
        config = parse_config(SITUATION_CONFIGS[situation])
    else:
        raise ConfigInvalid("--config is required for this task", field=None)
    config.task_name = args.command
    if args.command == "reproduce-paper":
        if getattr(args, "situation", None):
            config.task["situation"] = args.situation
        if getattr(args, "n", None):
            config.run.n_edges = [args.n]
    if args.seed is not None:
        config.run.seed = args.seed
    if args.reps is not None:
        config.run.replications = args.reps
    if args.out is not None:
        config.run.out_dir = args.out
    if args.bins is not None:
        config.run.bins = args.bins
    return config


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = resolve_config(args)
        writer = OutputWriter(Path(config.run.out_dir))
        try:
            summary = TASKS[config.task_name](config, writer)
        except ConfigInvalid:
            raise
        except EdgedynError as exc:
            raise TaskFailed(f"{config.task_name} failed: {exc}", inner=exc) from exc
        writer.write_index()
        print(summary)
        return 0
    except ConfigInvalid as exc:
        _emit_error("ConfigInvalid", str(exc), field=exc.field)
        return 2
    except TaskFailed as exc:
        inner = type(exc.inner).__name__ if exc.inner is not None else None
        _emit_error("TaskFailed", str(exc), inner=inner)
        return 1


def _emit_error(kind: str, message: str, **extra):
    payload = {"error": {"type": kind, "message": message, **extra}}
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())

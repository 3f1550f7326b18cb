"""Command-line interface: experiment runs, sweeps, inspection, plot export.

Exit codes: 0 success, 1 a trial diverged (without --allow-divergence),
2 configuration error.  Parallelism across trials follows the
SPIKEOBS_PARALLEL environment variable (default: available cores).
"""

from __future__ import annotations

import re
import sys
from pathlib import Path

import click
import numpy as np

from . import reporting
from .analysis import window_phenotype
from .config import (
    BuiltExperiment,
    build_experiment,
    load_experiment_dict,
    sweep_experiments,
)
from .errors import ConfigurationError
from .model import THETA_LABELS
from .runner import (
    LOG_COLUMNS,
    integrate_trial,
    ramp_eval,
    run_experiment,
    trial_config_for,
)

EXIT_OK = 0
EXIT_DIVERGED = 1
EXIT_CONFIG = 2


def _config_options(f):
    f = click.option("--config", "config_path", type=click.Path(), default=None,
                     help="Experiment YAML; built-in defaults when omitted.")(f)
    f = click.option("--override", "overrides", multiple=True, metavar="KEY=VALUE",
                     help="Dotted-path assignment applied after the file parses; "
                          "repeatable.")(f)
    f = click.option("--seed", type=int, default=None, help="Experiment seed.")(f)
    f = click.option("--trials", type=int, default=None, help="Trials per configuration.")(f)
    f = click.option("--dt", type=float, default=None, help="Base step (ms).")(f)
    return f


def _run_options(f):
    f = click.option("--out", "out_dir", type=click.Path(), default=None,
                     help="Output directory (default: the config's output.dir).")(f)
    f = click.option("--allow-divergence", is_flag=True,
                     help="Exit 0 even when trials diverge (they stay flagged).")(f)
    f = click.option("--verbose", is_flag=True, help="Progress lines on stderr.")(f)
    return f


def _flag_overrides(seed, trials, dt) -> list[str]:
    out = []
    if seed is not None:
        out.append(f"run.seed={seed}")
    if trials is not None:
        out.append(f"run.trials={trials}")
    if dt is not None:
        out.append(f"scenario.dt={dt}")
    return out


def _fail_config(exc: ConfigurationError):
    click.echo(f"configuration error:\n{exc}", err=True)
    sys.exit(EXIT_CONFIG)


def _safe_name(name: str) -> str:
    return re.sub(r"[^\w.-]+", "_", name).strip("_") or "entry"


def _context_lines(built: BuiltExperiment, overrides) -> list[str]:
    exp = built.experiment
    lines = [
        f"seed {exp.seed}; {exp.n_trials} trials per configuration; "
        f"input {exp.input_mode}",
    ]
    if overrides:
        lines.append("overrides: " + "; ".join(overrides))
    return lines


def _execute(built: BuiltExperiment, out_dir: Path, overrides, verbose: bool):
    """Run one configuration and write its per-trial outputs."""
    if verbose:
        click.echo(f"running {built.label}: {built.experiment.n_trials} trials", err=True)
    summary = run_experiment(built.model, built.experiment)
    for i, result in enumerate(summary.results):
        reporting.write_trial_outputs(out_dir, i, result, built.label,
                                      trajectories=built.output.trajectories)
    if verbose:
        click.echo(f"{built.label}: mean rms {summary.mean_rms!r} mV, "
                   f"{summary.n_diverged} diverged", err=True)
    return summary


def _finish(labeled, out_dir: Path, context, effective, overrides,
            allow_divergence: bool) -> int:
    reporting.write_summary_csv(out_dir / "summary.csv", labeled)
    reporting.write_trials_csv(out_dir / "trials.csv", labeled)
    table = reporting.summary_table(labeled, context)
    reporting.write_text(out_dir / "table.txt", table)
    reporting.write_config_echo(out_dir / "config_echo.yaml", effective, overrides)
    click.echo(table, nl=False)
    n_div = sum(s.n_diverged for _, s in labeled)
    if n_div and not allow_divergence:
        click.echo(f"{n_div} trial(s) diverged; failing (use --allow-divergence "
                   "to accept)", err=True)
        return EXIT_DIVERGED
    return EXIT_OK


@click.group()
@click.version_option(package_name="spikeobs")
def main():
    """Bursting-neuron simulation with online conductance estimators."""


@main.command()
@_config_options
@_run_options
def run(config_path, overrides, seed, trials, dt, out_dir, allow_divergence, verbose):
    """Run one experiment (the config's base observer) and write results."""
    overrides = list(overrides) + _flag_overrides(seed, trials, dt)
    try:
        merged, base_dir = load_experiment_dict(config_path, overrides)
        built = build_experiment(merged, base_dir)
    except ConfigurationError as exc:
        _fail_config(exc)
    out = Path(out_dir if out_dir is not None else built.output.dir)
    summary = _execute(built, out, overrides, verbose)
    code = _finish([(built.label, summary)], out, _context_lines(built, overrides),
                   built.effective, overrides, allow_divergence)
    sys.exit(code)


@main.command()
@_config_options
@_run_options
def sweep(config_path, overrides, seed, trials, dt, out_dir, allow_divergence, verbose):
    """Run every sweep entry and write a combined robustness table."""
    overrides = list(overrides) + _flag_overrides(seed, trials, dt)
    try:
        merged, base_dir = load_experiment_dict(config_path, overrides)
        builts = sweep_experiments(merged, base_dir)
    except ConfigurationError as exc:
        _fail_config(exc)
    out = Path(out_dir if out_dir is not None else builts[0].output.dir)
    labeled = []
    for built in builts:
        summary = _execute(built, out / _safe_name(built.label), overrides, verbose)
        labeled.append((built.label, summary))
    code = _finish(labeled, out, _context_lines(builts[0], overrides),
                   merged, overrides, allow_divergence)
    sys.exit(code)


@main.command()
@_config_options
@click.option("--trial", "trial_index", type=int, default=0, show_default=True,
              help="Which trial of the experiment to run.")
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Also write the trial's trajectory and metadata here.")
@click.option("--allow-divergence", is_flag=True,
              help="Exit 0 even when the trial diverges.")
def inspect(config_path, overrides, seed, trials, dt, trial_index, out_dir,
            allow_divergence):
    """Run a single trial and print estimates and firing phenotype."""
    overrides = list(overrides) + _flag_overrides(seed, trials, dt)
    try:
        merged, base_dir = load_experiment_dict(config_path, overrides)
        built = build_experiment(merged, base_dir)
        cfg = trial_config_for(built.experiment, trial_index)
    except ConfigurationError as exc:
        _fail_config(exc)
    result = integrate_trial(built.model, cfg, allow_divergence=True)

    scen = cfg.scenario
    settle = 500.0
    t_ramp_on = min((r.t_start for r in scen.ramps), default=scen.duration)
    t_ramp_off = max((r.t_stop for r in scen.ramps), default=0.0)
    t = result.trajectories[:, LOG_COLUMNS.index("t")]
    v = result.trajectories[:, LOG_COLUMNS.index("v")]

    click.echo(f"configuration: {built.label}")
    if overrides:
        click.echo("overrides: " + "; ".join(overrides))
    click.echo(f"trial {trial_index}: trial_seed {cfg.trial_seed}, "
               f"input_seed {cfg.input_seed}")
    click.echo(f"rms voltage error: {result.rms_voltage_error!r} mV "
               f"over {result.n_error_samples} samples")
    if result.diverged:
        click.echo(f"diverged: {result.divergence_reason} "
                   f"at t={result.divergence_time!r} ms")
    for t0, t1, tag in ((settle, t_ramp_on, "pre-ramp"),
                        (t_ramp_off + settle, scen.duration, "post-ramp")):
        if t1 <= t0 or t[-1] < t1:
            continue
        ph = window_phenotype(t, v, t0, t1)
        click.echo(f"{tag} [{t0:g}, {t1:g}] ms: {ph.label}, {ph.n_spikes} spikes "
                   f"({ph.rate_hz:.1f} Hz), {ph.n_pauses} pauses")
    theta_end = ramp_eval(scen, np.asarray(built.model.maximal_conductances), t[-1])
    if cfg.observer_kind == "redundant":
        # Each of the N copies per block estimates its share of the
        # conductance, so the block mean is compared against true/N.
        theta_end = theta_end / cfg.redundancy.N
        click.echo(f"final estimates (block mean / true per copy, N={cfg.redundancy.N}):")
    else:
        click.echo("final estimates (estimate / true):")
    for name, est, true in zip(THETA_LABELS, result.final_estimates, theta_end):
        click.echo(f"  {name:4s} {float(est)!r} / {float(true)!r}")
    if cfg.observer_kind == "redundant":
        click.echo(f"max consensus residual: "
                   f"{float(result.max_consensus_residual.max())!r}")
    if out_dir is not None:
        written = reporting.write_trial_outputs(Path(out_dir), trial_index, result,
                                                built.label,
                                                trajectories=True)
        for path in written:
            click.echo(f"wrote {path}")
    sys.exit(EXIT_DIVERGED if result.diverged and not allow_divergence else EXIT_OK)


@main.command("export-plot-data")
@click.argument("trial_path", type=click.Path())
@click.option("--figure", required=True, type=click.Choice(reporting.FIGURES),
              help="Which result figure's panels to emit.")
@click.option("--out", "out_dir", type=click.Path(), default=".", show_default=True,
              help="Directory for the panel CSV files.")
def export_plot_data(trial_path, figure, out_dir):
    """Emit plot-ready panel CSVs from a trial CSV or its meta JSON."""
    try:
        written = reporting.export_figure(trial_path, figure, out_dir)
    except ConfigurationError as exc:
        _fail_config(exc)
    for path in written:
        click.echo(f"wrote {path}")
    sys.exit(EXIT_OK)


@main.command("validate-config")
@click.option("--config", "config_path", type=click.Path(), required=True,
              help="Experiment YAML to validate.")
@click.option("--override", "overrides", multiple=True, metavar="KEY=VALUE",
              help="Overrides applied before validating; repeatable.")
def validate_config(config_path, overrides):
    """Validate a config file, reporting every violation at once."""
    try:
        merged, base_dir = load_experiment_dict(config_path, list(overrides))
        build_experiment(merged, base_dir)
        if merged.get("sweep"):
            sweep_experiments(merged, base_dir)
    except ConfigurationError as exc:
        _fail_config(exc)
    click.echo(f"OK: {config_path}")
    sys.exit(EXIT_OK)


if __name__ == "__main__":
    main()

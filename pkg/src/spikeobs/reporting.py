"""Result serialization: trajectory CSV, trial metadata, summaries, plot data.

Every float is written with repr round-trip formatting and every file
with fixed LF newlines, so equal results serialize to equal bytes and
re-running a command overwrites outputs with identical content.  Wall
times never reach any file.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigurationError
from .model import THETA_LABELS
from .runner import LOG_COLUMNS, ExperimentSummary, TrialResult

FIGURES = ("fig1", "fig2", "fig3", "fig4")

_COL = {name: i for i, name in enumerate(LOG_COLUMNS)}
_EST_COLS = tuple(f"est_{name}" for name in THETA_LABELS)


def fmt(x) -> str:
    """Locale-free text that parses back to the same value."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(x) for x in row) + "\n")
    return path


def write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


def trajectory_filename(index: int) -> str:
    return f"trial_{index:03d}.csv"


def meta_filename(index: int) -> str:
    return f"trial_{index:03d}.json"


def trial_meta(result: TrialResult, index: int, label: str,
               trajectories_file: str | None) -> dict:
    cfg = result.config_echo
    sample = result.mismatch_echo
    n_red = cfg.redundancy.N if cfg.observer_kind == "redundant" else None
    return {
        "trial": index,
        "configuration": label,
        "rms_voltage_error": result.rms_voltage_error,
        "n_error_samples": result.n_error_samples,
        "diverged": result.diverged,
        "divergence_reason": result.divergence_reason,
        "divergence_time": result.divergence_time,
        "final_estimates": dict(zip(THETA_LABELS, result.final_estimates.tolist())),
        "final_particles": result.final_particles.tolist(),
        "max_consensus_residual": result.max_consensus_residual.tolist(),
        "mismatch": None if sample is None else {
            "labels": list(sample.labels),
            "p": sample.p.tolist(),
            "q": sample.q.tolist(),
        },
        "seeds": {"trial_seed": cfg.trial_seed, "input_seed": cfg.input_seed},
        "observer": {
            "kind": cfg.observer_kind,
            "N": n_red,
            "substeps": cfg.substeps,
            "method": cfg.method,
            "p_scale": cfg.init.p_scale,
            "theta_init": cfg.init.theta if isinstance(cfg.init.theta, str)
                          else list(np.asarray(cfg.init.theta, dtype=float)),
        },
        "trajectories_file": trajectories_file,
    }


def write_trial_outputs(out_dir, index: int, result: TrialResult, label: str,
                        trajectories: bool = True) -> list[Path]:
    """trial_XXX.json (+ trial_XXX.csv when trajectories) under out_dir/trials."""
    trial_dir = Path(out_dir) / "trials"
    written = []
    traj_name = trajectory_filename(index) if trajectories else None
    if trajectories:
        written.append(write_csv(trial_dir / traj_name, LOG_COLUMNS,
                                 result.trajectories))
    meta = trial_meta(result, index, label, traj_name)
    written.append(write_text(trial_dir / meta_filename(index),
                              json.dumps(meta, indent=2, sort_keys=True) + "\n"))
    return written


# --------------------------------------------------------------------------
# Summaries

SUMMARY_HEADER = ("configuration", "mean_rms_mV", "std_rms_mV", "trials", "diverged")
TRIALS_HEADER = ("configuration", "trial", "rms_mV", "diverged",
                 "divergence_reason", "divergence_time_ms", "trial_seed", "input_seed")


def summary_rows(labeled: list[tuple[str, ExperimentSummary]]) -> list[tuple]:
    return [
        (label, s.mean_rms, s.std_rms, s.n_trials, s.n_diverged)
        for label, s in labeled
    ]


def write_summary_csv(path, labeled) -> Path:
    return write_csv(path, SUMMARY_HEADER, summary_rows(labeled))


def trials_rows(labeled: list[tuple[str, ExperimentSummary]]) -> list[tuple]:
    rows = []
    for label, s in labeled:
        if s.results is None:
            raise ConfigurationError("per-trial listing needs kept results")
        for i, r in enumerate(s.results):
            rows.append((
                label, i, r.rms_voltage_error, r.diverged,
                r.divergence_reason or "",
                "" if r.divergence_time is None else r.divergence_time,
                r.config_echo.trial_seed, r.config_echo.input_seed,
            ))
    return rows


def write_trials_csv(path, labeled) -> Path:
    return write_csv(path, TRIALS_HEADER, trials_rows(labeled))


def summary_table(labeled, context_lines=()) -> str:
    """Human-readable robustness table: one row per configuration."""
    cells = [("configuration", "mean rms (mV)", "std rms (mV)", "trials", "diverged")]
    for row in summary_rows(labeled):
        cells.append(tuple(fmt(x) for x in row))
    widths = [max(len(row[i]) for row in cells) for i in range(len(cells[0]))]
    lines = list(context_lines)
    if lines:
        lines.append("")
    for row in cells:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    flagged = [(label, s) for label, s in labeled if s.n_diverged]
    if flagged:
        lines.append("")
        for label, s in flagged:
            lines.append(f"warning: {label}: {s.n_diverged} of {s.n_trials} "
                         "trials diverged and are excluded from the statistics")
    degenerate = [label for label, s in labeled if s.degenerate_std]
    for label in degenerate:
        lines.append(f"note: {label}: fewer than two usable trials, std is degenerate")
    return "\n".join(lines) + "\n"


def write_config_echo(path, effective: dict, applied_overrides=()) -> Path:
    doc = {"applied_overrides": list(applied_overrides), "effective": effective}
    return write_text(path, yaml.safe_dump(doc, sort_keys=True))


# --------------------------------------------------------------------------
# Plot data export

def load_trajectory_csv(path) -> np.ndarray:
    """Trajectory rows from a trial CSV written by this package."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"trial file not found: {path}")
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigurationError(f"{path}: empty trial file") from None
        if tuple(header) != LOG_COLUMNS:
            raise ConfigurationError(
                f"{path}: header {header!r} is not a trial trajectory header")
        try:
            rows = [[float(x) for x in row] for row in reader]
        except ValueError as exc:
            raise ConfigurationError(f"{path}: non-numeric cell ({exc})") from exc
    if not rows:
        raise ConfigurationError(f"{path}: trial file has a header but no rows")
    return np.asarray(rows, dtype=float)


def _load_trial_source(path) -> tuple[np.ndarray, dict | None]:
    """(trajectory array, meta dict or None) from a CSV or meta-JSON path."""
    path = Path(path)
    if path.suffix != ".json":
        return load_trajectory_csv(path), None
    if not path.exists():
        raise ConfigurationError(f"trial file not found: {path}")
    text = path.read_text(encoding="utf-8")
    if not text.strip():
        raise ConfigurationError(f"{path}: empty trial file")
    try:
        meta = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: not valid JSON ({exc})") from exc
    traj_name = meta.get("trajectories_file")
    if not traj_name:
        raise ConfigurationError(f"{path}: trial meta lists no trajectories file")
    return load_trajectory_csv(path.parent / traj_name), meta


def _panel(data: np.ndarray, columns) -> tuple[tuple, np.ndarray]:
    idx = [_COL[c] for c in columns]
    return tuple(columns), data[:, idx]


def export_figure(source_path, figure: str, out_dir) -> list[Path]:
    """Panel CSVs for one result figure, one file per panel."""
    if figure not in FIGURES:
        raise ConfigurationError(f"figure must be one of {FIGURES}, got {figure!r}")
    data, meta = _load_trial_source(source_path)
    out_dir = Path(out_dir)

    panels: list[tuple[str, tuple, np.ndarray]] = []
    if figure == "fig1":
        panels.append(("voltage", *_panel(data, ("t", "v"))))
        panels.append(("input", *_panel(data, ("t", "u"))))
        panels.append(("conductances", *_panel(data, ("t", "mu_CaL", "mu_KCa"))))
    else:
        panels.append(("voltage", *_panel(data, ("t", "v", "v_hat"))))
        panels.append(("abs_error", *_panel(data, ("t", "abs_err"))))
        panels.append(("estimates",
                       *_panel(data, ("t",) + _EST_COLS + ("mu_CaL", "mu_KCa"))))
    if figure == "fig4":
        if meta is None or meta.get("observer", {}).get("N") is None:
            raise ConfigurationError(
                "fig4 needs the trial's meta JSON of a redundant-observer run "
                "(the ensemble size sets the scaled true parameter)")
        n_red = int(meta["observer"]["N"])
        header = ("t", "mu_CaL_over_N", "mu_KCa_over_N")
        scaled = np.column_stack([
            data[:, _COL["t"]],
            data[:, _COL["mu_CaL"]] / n_red,
            data[:, _COL["mu_KCa"]] / n_red,
        ])
        panels.append(("scaled_true", header, scaled))

    return [
        write_csv(out_dir / f"{figure}_{name}.csv", header, rows)
        for name, header, rows in panels
    ]

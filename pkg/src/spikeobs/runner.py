"""Trial and experiment execution.

A *scenario* fixes the deterministic part of a trial: duration, step
size, initial voltage, the fluctuating input current and the conductance
ramps.  A *trial* pairs one scenario with one observer and one mismatch
draw.  An *experiment* repeats trials with fresh mismatch draws and
aggregates the rms voltage errors.

Seeding: every random quantity derives from the experiment seed through
named SeedSequence spawns, so adding trials or observers never shifts
existing draws, and the same seed reproduces every output byte for byte.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import backend as B
from . import observers as obs
from .errors import ConfigurationError, TrialDiverged
from .mismatch import MismatchConfig, MismatchSample
from .model import N_THETA, THETA_LABELS, NeuronModel, initial_state
from .observers import CentralizedGains, DistributedGains, RedundancyGains

# "bias" is a test hook: v_hat tracks v minus a constant offset, so the
# reported rms must equal that offset exactly (metric self-check).
OBSERVER_KINDS = ("none", "bias", "centralized", "distributed", "redundant")
INPUT_MODES = ("fixed", "per_trial")
METHODS = {"euler": B.METHOD_EULER, "rk4": B.METHOD_RK4}

# SeedSequence spawn keys: one fixed lane per random quantity.
_INPUT_LANE = 1
_MISMATCH_LANE = 2


@dataclass(frozen=True)
class OUInput:
    """Ornstein-Uhlenbeck drive, exactly discretized; the underlying path is
    affinely recalibrated to zero sample mean and unit sample std, then scaled
    by a mean/std envelope.  With no post values the envelope is constant and
    each realization has the configured mean and std exactly.  Setting
    post_mean/post_std changes the drive statistics across [blend_start,
    blend_stop] (linear blend), which mirrors scenarios where the input
    fluctuations differ between early and late phases."""

    mean: float = 160.0
    std: float = 2.0
    tau: float = 50.0
    post_mean: float | None = None
    post_std: float | None = None
    blend_start: float | None = None
    blend_stop: float | None = None

    def __post_init__(self):
        problems = []
        if self.std < 0.0:
            problems.append(f"input std must be >= 0 (got {self.std})")
        if self.tau <= 0.0:
            problems.append(f"input tau must be > 0 (got {self.tau})")
        if self.post_std is not None and self.post_std < 0.0:
            problems.append(f"input post_std must be >= 0 (got {self.post_std})")
        has_post = self.post_mean is not None or self.post_std is not None
        has_window = self.blend_start is not None and self.blend_stop is not None
        if has_post and not has_window:
            problems.append("input with post_mean/post_std needs blend_start and blend_stop")
        if has_window and not self.blend_stop > self.blend_start:
            problems.append(
                f"input blend needs blend_stop > blend_start "
                f"(got {self.blend_start}..{self.blend_stop})"
            )
        if problems:
            raise ConfigurationError(problems)

    @property
    def effective_post_mean(self) -> float:
        return self.mean if self.post_mean is None else self.post_mean

    @property
    def effective_post_std(self) -> float:
        return self.std if self.post_std is None else self.post_std


@dataclass(frozen=True)
class Ramp:
    """Linear change of one conductance over [t_start, t_stop]; the value
    holds at value_to afterwards."""

    param: str
    t_start: float
    t_stop: float
    value_from: float
    value_to: float

    def __post_init__(self):
        problems = []
        if self.param not in THETA_LABELS:
            problems.append(f"ramp parameter must be one of {THETA_LABELS}, got {self.param!r}")
        if not self.t_stop > self.t_start:
            problems.append(f"ramp needs t_stop > t_start (got {self.t_start}..{self.t_stop})")
        if self.value_from <= 0.0 or self.value_to <= 0.0:
            problems.append("ramp values must stay > 0 (conductances)")
        if problems:
            raise ConfigurationError(problems)

    @property
    def param_index(self) -> int:
        return THETA_LABELS.index(self.param)


@dataclass(frozen=True)
class Scenario:
    duration: float = 10000.0
    dt: float = 0.1
    v0: float = -65.0
    input: OUInput = field(default_factory=OUInput)
    ramps: tuple[Ramp, ...] = ()

    def __post_init__(self):
        problems = []
        if self.duration <= 0.0:
            problems.append(f"duration must be > 0 (got {self.duration})")
        if self.dt <= 0.0:
            problems.append(f"dt must be > 0 (got {self.dt})")
        elif self.duration / self.dt > 5e7:
            problems.append("more than 5e7 base steps; refusing")
        object.__setattr__(self, "ramps", tuple(self.ramps))
        by_param: dict[str, list[Ramp]] = {}
        for r in self.ramps:
            by_param.setdefault(r.param, []).append(r)
        for param, ramps in by_param.items():
            ramps = sorted(ramps, key=lambda r: r.t_start)
            for a, b in zip(ramps, ramps[1:]):
                if b.t_start < a.t_stop:
                    problems.append(
                        f"ramps on {param} overlap: "
                        f"[{a.t_start}, {a.t_stop}] and [{b.t_start}, {b.t_stop}]"
                    )
        if problems:
            raise ConfigurationError(problems)

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    def ramp_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """(param indices, [t0 t1 v0 v1] rows) sorted by start time."""
        ramps = sorted(self.ramps, key=lambda r: (r.t_start, r.param_index))
        idx = np.array([r.param_index for r in ramps], dtype=np.int32)
        f = np.array([[r.t_start, r.t_stop, r.value_from, r.value_to] for r in ramps])
        return idx, f.reshape(len(ramps), 4)


def default_scenario() -> Scenario:
    """Spike-to-burst transition scenario.

    CaL and KCa ramp up over the middle of the trial while the drive drops
    from strong (tonic spiking, KCa sensor saturated) to weak, handing
    control to the cell's intrinsic burst mechanism: deep interburst
    pauses near -75 mV, CaT rebound ignition, CaL plateaus.  Each ramp
    covers nearly its whole range quickly and finishes with a much slower
    tail segment: once the cell bursts, parameter updates can only happen
    during bursts, so the slow tail keeps the tracking lag accumulated over
    one interburst pause negligible by the time the ramp ends.  Both outer
    phases hold the conductances constant, so estimator convergence can be
    judged in each phase separately.
    """
    return Scenario(
        duration=10000.0,
        input=OUInput(mean=300.0, std=15.0, post_mean=10.0, post_std=4.0,
                      blend_start=3000.0, blend_stop=5500.0),
        ramps=(Ramp("CaL", 3000.0, 5500.0, 0.6, 2.988),
               Ramp("CaL", 5500.0, 7000.0, 2.988, 3.0),
               Ramp("KCa", 3000.0, 5500.0, 5.0, 24.9),
               Ramp("KCa", 5500.0, 7000.0, 24.9, 25.0)),
    )


def ramp_eval(scenario: Scenario, base: np.ndarray, t: float) -> np.ndarray:
    """True conductance vector at time t (same arithmetic as the kernels)."""
    out = np.asarray(base, dtype=float).copy()
    idx, f = scenario.ramp_arrays()
    for r in range(idx.size):
        t0 = f[r, 0]
        t1 = f[r, 1]
        if t >= t1:
            out[idx[r]] = f[r, 3]
        elif t >= t0:
            frac = (t - t0) / (t1 - t0)
            out[idx[r]] = f[r, 2] + (f[r, 3] - f[r, 2]) * frac
    return out


def _input_envelopes(scenario: Scenario) -> tuple[np.ndarray, np.ndarray]:
    """Per-step mean and std envelopes (piecewise linear across the blend)."""
    spec = scenario.input
    n = scenario.n_steps
    t = np.arange(n) * scenario.dt
    if spec.blend_start is None:
        return np.full(n, spec.mean), np.full(n, spec.std)
    knots = np.array([spec.blend_start, spec.blend_stop])
    mean = np.interp(t, knots, [spec.mean, spec.effective_post_mean])
    std = np.interp(t, knots, [spec.std, spec.effective_post_std])
    return mean, std


def generate_input(scenario: Scenario, seed) -> np.ndarray:
    """One input value per base step.

    Exact OU discretization (decay exp(-dt/tau), stationary innovation
    variance); the path is affinely recalibrated to zero sample mean and
    unit sample std, then shaped by the mean/std envelopes.  All-zero std
    yields the deterministic envelope mean.
    """
    spec = scenario.input
    n = scenario.n_steps
    if n < 1:
        raise ConfigurationError("scenario has no steps")
    mean_env, std_env = _input_envelopes(scenario)
    if not np.any(std_env):
        return mean_env
    rng = np.random.Generator(np.random.PCG64(seed))
    a = math.exp(-scenario.dt / spec.tau)
    innov = math.sqrt(1.0 - a * a)
    xi = rng.standard_normal(n)
    x = np.empty(n)
    x[0] = xi[0]
    for k in range(1, n):
        x[k] = a * x[k - 1] + innov * xi[k]
    sd = x.std()
    if sd == 0.0:
        return mean_env
    return mean_env + std_env * ((x - x.mean()) / sd)


@dataclass(frozen=True)
class ObserverInit:
    """Overridable initial conditions; defaults are the neutral start."""

    theta: object = "zeros"  # "zeros" | "true" | sequence of 6
    p_scale: float = 1.0
    v_hat: object = "measured"  # "measured" | number

    def __post_init__(self):
        problems = []
        if isinstance(self.theta, str):
            if self.theta not in ("zeros", "true"):
                problems.append(f"init theta must be 'zeros', 'true' or 6 numbers, got {self.theta!r}")
        else:
            arr = np.asarray(self.theta, dtype=float)
            if arr.shape != (N_THETA,):
                problems.append(f"init theta needs {N_THETA} entries, got shape {arr.shape}")
        if self.p_scale <= 0.0:
            problems.append(f"init p_scale must be > 0 (got {self.p_scale})")
        if isinstance(self.v_hat, str) and self.v_hat != "measured":
            problems.append(f"init v_hat must be 'measured' or a number, got {self.v_hat!r}")
        if problems:
            raise ConfigurationError(problems)


@dataclass(frozen=True)
class TrialConfig:
    scenario: Scenario
    observer_kind: str = "centralized"
    centralized: CentralizedGains = field(default_factory=CentralizedGains)
    distributed: DistributedGains = field(default_factory=DistributedGains)
    redundancy: RedundancyGains = field(default_factory=RedundancyGains)
    mismatch: MismatchConfig = field(default_factory=MismatchConfig)
    init: ObserverInit = field(default_factory=ObserverInit)
    trial_seed: int = 0          # mismatch stream seed
    input_seed: int = 0          # input stream seed
    log_decimation: int = 10
    method: str = "euler"
    substeps: int = 1
    check_interval: int = 1000
    gate_slack: float = 1e-9
    v_limit: float = 200.0
    dump: bool = False

    def __post_init__(self):
        problems = []
        if self.observer_kind not in OBSERVER_KINDS:
            problems.append(f"observer_kind must be one of {OBSERVER_KINDS}, got {self.observer_kind!r}")
        if self.method not in METHODS:
            problems.append(f"method must be one of {tuple(METHODS)}, got {self.method!r}")
        if self.substeps < 1:
            problems.append(f"substeps must be >= 1 (got {self.substeps})")
        if self.log_decimation < 1:
            problems.append(f"log_decimation must be >= 1 (got {self.log_decimation})")
        if self.gate_slack < 0.0:
            problems.append(f"gate_slack must be >= 0 (got {self.gate_slack})")
        if self.v_limit <= 0.0:
            problems.append(f"v_limit must be > 0 (got {self.v_limit})")
        if problems:
            raise ConfigurationError(problems)


LOG_COLUMNS = (
    "t", "v", "v_hat", "abs_err", "u",
    "est_Na", "est_K", "est_CaT", "est_CaL", "est_KCa", "est_leak",
    "mu_CaL", "mu_KCa",
)
DUMP_COLUMNS = ("t", "v", "v_hat")


@dataclass
class TrialResult:
    rms_voltage_error: float
    n_error_samples: int
    trajectories: np.ndarray          # LOG_COLUMNS layout
    mismatch_echo: MismatchSample | None
    config_echo: TrialConfig
    diverged: bool
    divergence_reason: str | None
    divergence_time: float | None
    final_estimates: np.ndarray       # per-block means, length 6
    final_particles: np.ndarray       # per-slot estimates (blocked kinds)
    max_consensus_residual: np.ndarray
    final_state: np.ndarray           # raw integrator state at the last step
    wall_time: float                  # in-memory only, never serialized
    dump: np.ndarray | None = None


def _stability_check(model: NeuronModel, cfg: TrialConfig) -> None:
    h = cfg.scenario.dt / cfg.substeps
    tau_min = min(k.time_constant.base for k in model.gate_kinetics)
    limit = (1.0 - cfg.mismatch.r) * tau_min
    if h > limit:
        raise ConfigurationError(
            f"step {h:g} ms exceeds the gate-boundedness limit {limit:g} ms "
            f"(fastest time-constant base {tau_min:g} ms, mismatch r={cfg.mismatch.r}); "
            "reduce dt or increase substeps"
        )


def _observer_pieces(model: NeuronModel, cfg: TrialConfig, theta_true0: np.ndarray):
    """(obs_kind code, y0 observer tail, slot arrays, p/q, sensor shifts,
    gains arrays, mismatch echo) for the kernel call."""
    kind = cfg.observer_kind
    init = cfg.init
    v0 = cfg.scenario.v0
    v_hat0 = v0 if init.v_hat == "measured" else float(init.v_hat)
    if isinstance(init.theta, str):
        theta0 = None if init.theta == "zeros" else theta_true0
    else:
        theta0 = np.asarray(init.theta, dtype=float)
    mcfg = replace(cfg.mismatch, seed=cfg.trial_seed)
    empty_slots = (B.EMPTY_I, np.zeros(1, np.int32), B.EMPTY_I, B.EMPTY_I,
                   np.zeros(7, np.int32))
    gb = np.asarray(cfg.distributed.gamma, dtype=float)
    ab = np.asarray(cfg.distributed.alpha, dtype=float)
    qgb = np.asarray(cfg.distributed.quad_gain, dtype=float)

    if kind == "none":
        return (B.OBS_NONE, np.zeros(0), empty_slots, B.EMPTY_F, B.EMPTY_F,
                B.EMPTY_F, gb, ab, qgb, None)
    if kind == "bias":
        return (B.OBS_BIAS, np.array([v_hat0]), empty_slots, B.EMPTY_F, B.EMPTY_F,
                B.EMPTY_F, gb, ab, qgb, None)
    if kind == "centralized":
        sample = obs.centralized_mismatch(mcfg)
        st = obs.init_centralized(model, sample, v0, theta0=theta0, p0=init.p_scale)
        tail = np.concatenate([[v_hat0], st.w_hat, st.theta_hat, st.psi, st.P.ravel()])
        shift = obs.sensor_shifts(mcfg, [obs.CENTRAL_SENSOR_COORD])[0]
        return (B.OBS_CENTRALIZED, tail, empty_slots, sample.p.copy(), sample.q.copy(),
                np.array([shift]), gb, ab, qgb, sample)
    n_red = cfg.redundancy.N if kind == "redundant" else 1
    lay = obs.build_layout(n_red)
    sample = obs.blocked_mismatch(mcfg, lay)
    st = obs.init_blocked(model, lay, sample, v0, theta0=theta0, p0=init.p_scale)
    tail = np.concatenate([[v_hat0], st.gates, st.ca, st.theta_hat, st.psi, st.P])
    shifts = obs.sensor_shifts(mcfg, lay.sensor_coords)
    slots = (lay.slot_block, lay.slot_gate_start, lay.gate_kind, lay.slot_ca,
             lay.block_slot_start)
    return (B.OBS_BLOCKED, tail, slots, sample.p.copy(), sample.q.copy(),
            shifts, gb, ab, qgb, sample)


def integrate_trial(model: NeuronModel, cfg: TrialConfig, backend: str = "auto",
                    allow_divergence: bool = False) -> TrialResult:
    """Step the true neuron and the configured observer through one trial."""
    _stability_check(model, cfg)
    scenario = cfg.scenario
    t_start = time.perf_counter()

    u = generate_input(scenario, cfg.input_seed)
    ramp_param, ramp_f = scenario.ramp_arrays()
    theta_base = np.asarray(model.maximal_conductances, dtype=float).copy()
    theta_true0 = ramp_eval(scenario, theta_base, 0.0)

    (obs_code, obs_tail, slots, p_gate, q_gate, sensor_b,
     gb, ab, qgb, sample) = _observer_pieces(model, cfg, theta_true0)

    mp = B.pack_model_scalars(model, gate_slack=cfg.gate_slack, v_limit=cfg.v_limit)
    mp[B._pure.MP_GAMMA] = cfg.centralized.gamma
    mp[B._pure.MP_ALPHA] = cfg.centralized.alpha
    mp[B._pure.MP_QUADG] = cfg.centralized.quad_gain
    mp[B._pure.MP_GAMMA0] = cfg.distributed.gamma0
    mp[B._pure.MP_BETA] = cfg.redundancy.beta if cfg.observer_kind == "redundant" else 0.0
    if obs_code == B.OBS_BIAS:
        v_hat0 = scenario.v0 if cfg.init.v_hat == "measured" else float(cfg.init.v_hat)
        mp[B._pure.MP_BIAS] = scenario.v0 - v_hat0
    if obs_code == B.OBS_CENTRALIZED:
        mp[B._pure.MP_SENSOR_C] = sensor_b[0]
        sensor_b = B.EMPTY_F
    gk = B.pack_kinetics(model)
    erev = np.asarray(model.reversals, dtype=float).copy()

    tstate = initial_state(model, scenario.v0)
    y0 = np.concatenate([[tstate.v], tstate.w, obs_tail])

    n_base = scenario.n_steps
    n_logs = n_base // cfg.log_decimation + 1
    logs = np.zeros((n_logs, B.N_LOG_COLS))
    dump = np.zeros((n_base * cfg.substeps + 1, 3)) if cfg.dump else np.zeros((0, 3))
    maxcons = np.zeros(6)
    final = np.zeros(y0.size)

    km = B.kernel_module(backend)
    status, fail_step, rms_sum, n_rms = km.run_trial(
        y0, mp, gk, erev, theta_base, ramp_param, ramp_f, u, scenario.dt,
        *slots, p_gate, q_gate, sensor_b, gb, ab, qgb,
        cfg.substeps, METHODS[cfg.method], obs_code, cfg.log_decimation,
        cfg.check_interval, logs, dump, maxcons, final)

    wall = time.perf_counter() - t_start
    diverged = status != 0
    reason = B.DIVERGENCE_REASONS.get(status) if diverged else None
    t_fail = fail_step * scenario.dt if diverged else None
    rms = math.sqrt(rms_sum / n_rms) if n_rms > 0 else 0.0

    if diverged:
        kept = fail_step // cfg.log_decimation + 1
        logs = logs[:kept]
        detail = f"{reason} at t={t_fail:g} ms (step {fail_step})"
        if not allow_divergence:
            raise TrialDiverged(t_fail, fail_step, detail, last_state=final)

    if obs_code == B.OBS_BLOCKED:
        lay_slots = slots[4]
        oth = 9 + slots[2].size + sensor_b.size
        particles = final[oth:oth + slots[0].size].copy()
        means = np.empty(N_THETA)
        for b in range(N_THETA):
            means[b] = obs.empirical_mean(particles[lay_slots[b]:lay_slots[b + 1]])
    elif obs_code == B.OBS_CENTRALIZED:
        particles = final[16:22].copy()
        means = particles.copy()
    else:
        particles = np.zeros(0)
        means = np.zeros(N_THETA)

    return TrialResult(
        rms_voltage_error=rms,
        n_error_samples=n_rms,
        trajectories=logs,
        mismatch_echo=sample,
        config_echo=cfg,
        diverged=diverged,
        divergence_reason=reason,
        divergence_time=t_fail,
        final_estimates=means,
        final_particles=particles,
        max_consensus_residual=maxcons,
        final_state=final,
        wall_time=wall,
        dump=dump if cfg.dump else None,
    )


# --------------------------------------------------------------------------
# Experiments


@dataclass(frozen=True)
class ExperimentConfig:
    base: TrialConfig
    n_trials: int = 20
    seed: int = 2024
    input_mode: str = "fixed"

    def __post_init__(self):
        problems = []
        if self.n_trials < 1:
            problems.append(f"n_trials must be >= 1 (got {self.n_trials})")
        if self.input_mode not in INPUT_MODES:
            problems.append(f"input_mode must be one of {INPUT_MODES}, got {self.input_mode!r}")
        if not 0 <= int(self.seed) < 2 ** 64:
            problems.append(f"seed must fit in 64 bits (got {self.seed})")
        if problems:
            raise ConfigurationError(problems)


def _lane_seed(seed: int, lane: int, index: int = 0) -> int:
    """A stable 64-bit stream seed for one named lane of an experiment."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(lane, index))
    return int(ss.generate_state(1, np.uint64)[0])


def trial_config_for(exp: ExperimentConfig, trial_index: int) -> TrialConfig:
    """The fully seeded TrialConfig of one trial of the experiment."""
    if not 0 <= trial_index < exp.n_trials:
        raise ConfigurationError(f"trial index {trial_index} outside 0..{exp.n_trials - 1}")
    input_index = trial_index if exp.input_mode == "per_trial" else 0
    return replace(
        exp.base,
        trial_seed=_lane_seed(exp.seed, _MISMATCH_LANE, trial_index),
        input_seed=_lane_seed(exp.seed, _INPUT_LANE, input_index),
    )


@dataclass
class ExperimentSummary:
    mean_rms: float
    std_rms: float
    n_trials: int
    n_diverged: int
    degenerate_std: bool              # fewer than two usable trials
    rms_values: np.ndarray            # per trial, nan where diverged
    results: list[TrialResult] | None


def _run_one(args):
    model, cfg, backend = args
    return integrate_trial(model, cfg, backend=backend, allow_divergence=True)


def parallel_workers() -> int:
    raw = os.environ.get("SPIKEOBS_PARALLEL", "")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError as exc:
            raise ConfigurationError(f"SPIKEOBS_PARALLEL must be an integer, got {raw!r}") from exc
    return os.cpu_count() or 1


def run_experiment(model: NeuronModel, exp: ExperimentConfig, backend: str = "auto",
                   keep_results: bool = True, workers: int | None = None) -> ExperimentSummary:
    """Run all trials and aggregate rms statistics.

    Diverged trials are kept in the per-trial listing (flagged, rms nan)
    but excluded from the mean/std.  Trials are independent; with more
    than one worker they run in separate processes, keyed by index so the
    aggregate does not depend on completion order.
    """
    configs = [trial_config_for(exp, i) for i in range(exp.n_trials)]
    if workers is None:
        workers = parallel_workers()
    workers = min(workers, exp.n_trials)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, [(model, c, backend) for c in configs]))
    else:
        results = [_run_one((model, c, backend)) for c in configs]

    rms = np.array([math.nan if r.diverged else r.rms_voltage_error for r in results])
    good = rms[~np.isnan(rms)]
    n_div = int(np.isnan(rms).sum())
    degenerate = good.size < 2
    mean = float(good.mean()) if good.size else math.nan
    std = float(good.std(ddof=1)) if good.size >= 2 else 0.0
    return ExperimentSummary(
        mean_rms=mean,
        std_rms=std,
        n_trials=exp.n_trials,
        n_diverged=n_div,
        degenerate_std=degenerate,
        rms_values=rms,
        results=results if keep_results else None,
    )

"""Online conductance estimators: centralized, distributed, redundant.

All three estimate the maximal-conductance vector from measured voltage
and input current.  They share the same building blocks: a copy of the
internal dynamics driven by the *measured* voltage (output injection), a
low-pass filtered regressor, and a forgetting-factor covariance flow that
scales the parameter updates.

centralized  -- one full covariance matrix over all six conductances:
    dv_hat/dt    = phi . theta_hat + a + gamma (1 + psi' P psi)(v - v_hat)
    dtheta_hat/dt = gamma P psi (v - v_hat)
    dpsi/dt      = -gamma psi + phi
    dP/dt        = alpha P - gamma (P psi)(P psi)'

distributed  -- one scalar filter pair per conductance block, each block
    with private internal-state copies:
    dv_hat/dt     = sum_j phi_j theta_j + a + (gamma0 + sum_j gamma_j psi_j^2 P_j)(v - v_hat)
    dtheta_j/dt   = gamma_j P_j psi_j (v - v_hat)
    dpsi_j/dt     = -gamma_j psi_j + phi_j
    dP_j/dt       = alpha_j P_j - alpha_j P_j^2 psi_j^2

redundant    -- the distributed observer with each membrane-current block
    expanded to N particles (independent kinetics draws per particle) and
    a consensus term pulling each particle estimate to its block mean:
    dtheta_j^i/dt = gamma_j P_j^i psi_j^i (v - v_hat) - beta (theta_j^i - mean_i theta_j^i)
    The leak block stays a single particle.

The functions here are the readable reference implementations used by the
tests; full-trial integration runs in the kernel backends, which follow
the same operation order (see backend module).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ContractViolation
from .mismatch import MismatchConfig, MismatchSample, draw_pair, sample_mismatch
from .model import (
    CA_INDEX,
    GATE_NAMES,
    N_GATES,
    N_INTERNAL,
    N_THETA,
    THETA_LABELS,
    NeuronModel,
    calcium_equilibrium,
    calcium_rhs,
    kca_activation,
    sigmoid_eval,
    tau_eval,
)

# Gate kinds (indices into GATE_NAMES) owned by each conductance block.
# The KCa block carries private copies of the calcium-feeding gates so its
# calcium pool is self-contained; the leak block has no internal state.
BLOCK_GATE_KINDS = ((0, 1), (2,), (3, 4), (5,), (3, 4, 5), ())
BLOCK_HAS_CA = (False, False, False, False, True, False)
LEAK_BLOCK = 5

# Mismatch-stream coordinates of the six centralized gate equations:
# (block, particle, within-block index).  Blocks 0..3 at particle 0, which
# is exactly where the distributed observer draws the same equations.
CENTRAL_GATE_COORDS = ((0, 0, 0), (0, 0, 1), (1, 0, 0), (2, 0, 0), (2, 0, 1), (3, 0, 0))
# Within a block's draw stream the sensor shift sits after the gates.
SENSOR_COORD_OFFSET = {4: len(BLOCK_GATE_KINDS[4])}
CENTRAL_SENSOR_COORD = (4, 0, SENSOR_COORD_OFFSET[4])


def _as_block_vector(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(N_THETA, float(arr))
    if arr.shape != (N_THETA,):
        raise ConfigurationError(f"{name} must be a scalar or length-{N_THETA} vector")
    if not np.all(arr > 0.0):
        raise ConfigurationError(f"{name} entries must be > 0")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class CentralizedGains:
    """Output-injection gain and forgetting factor of the full-matrix law."""

    gamma: float = 8.0
    alpha: float = 0.005
    # Gain multiplying the quadratic covariance term; "gamma" is the
    # centralized law as published, "alpha" matches the per-block law.
    p_quad_gain: str = "gamma"

    def __post_init__(self):
        problems = []
        if self.gamma <= 0.0:
            problems.append(f"gamma must be > 0 (got {self.gamma})")
        if not 0.0 < self.alpha < self.gamma:
            problems.append(f"alpha must satisfy 0 < alpha < gamma (got {self.alpha})")
        if self.p_quad_gain not in ("gamma", "alpha"):
            problems.append(f"p_quad_gain must be 'gamma' or 'alpha' (got {self.p_quad_gain!r})")
        if problems:
            raise ConfigurationError(problems)

    @property
    def quad_gain(self) -> float:
        return self.gamma if self.p_quad_gain == "gamma" else self.alpha


@dataclass(frozen=True)
class DistributedGains:
    """Per-block gains; scalars broadcast to all six blocks."""

    gamma0: float = 8.0
    gamma: object = 8.0
    alpha: object = 2e-4
    p_quad_gain: str = "alpha"

    def __post_init__(self):
        if self.gamma0 <= 0.0:
            raise ConfigurationError(f"gamma0 must be > 0 (got {self.gamma0})")
        if self.p_quad_gain not in ("gamma", "alpha"):
            raise ConfigurationError(f"p_quad_gain must be 'gamma' or 'alpha' (got {self.p_quad_gain!r})")
        object.__setattr__(self, "gamma", _as_block_vector(self.gamma, "gamma"))
        object.__setattr__(self, "alpha", _as_block_vector(self.alpha, "alpha"))

    @property
    def quad_gain(self) -> np.ndarray:
        return self.gamma if self.p_quad_gain == "gamma" else self.alpha


@dataclass(frozen=True)
class RedundancyGains:
    """Ensemble size per membrane current and consensus strength."""

    N: int = 3
    beta: float = 5e-5

    def __post_init__(self):
        problems = []
        if self.N < 1:
            problems.append(f"N must be >= 1 (got {self.N})")
        if self.beta < 0.0:
            problems.append(f"beta must be >= 0 (got {self.beta})")
        if problems:
            raise ConfigurationError(problems)


@dataclass(frozen=True)
class ObserverLayout:
    """Flat slot tables for a block-structured observer.

    One *slot* is one (block, particle) estimator: it owns a scalar
    estimate/filter triple and a private run of gate copies (plus a
    calcium pool for KCa slots).  Slots are ordered block-major with
    particles contiguous, which fixes every summation order.
    """

    n_per_block: tuple[int, ...]
    slot_block: np.ndarray        # block id per slot
    block_slot_start: np.ndarray  # CSR over slots, length 7
    slot_gate_start: np.ndarray   # CSR into the gate arrays, length S+1
    gate_kind: np.ndarray         # GATE_NAMES index per gate copy
    slot_ca: np.ndarray           # index into the calcium array, -1 if none
    gate_coords: tuple[tuple[int, int, int], ...]
    gate_labels: tuple[str, ...]
    sensor_coords: tuple[tuple[int, int, int], ...]  # one per calcium pool

    @property
    def n_slots(self) -> int:
        return self.slot_block.size

    @property
    def n_gate_slots(self) -> int:
        return self.gate_kind.size

    @property
    def n_ca(self) -> int:
        return len(self.sensor_coords)

    def block_particles(self, block: int) -> slice:
        return slice(int(self.block_slot_start[block]), int(self.block_slot_start[block + 1]))


def build_layout(n_redundant: int = 1) -> ObserverLayout:
    """Slot tables for the distributed (N=1) or redundant (N>1) observer."""
    if n_redundant < 1:
        raise ConfigurationError(f"particle count must be >= 1 (got {n_redundant})")
    n_per_block = tuple(1 if b == LEAK_BLOCK else n_redundant for b in range(N_THETA))
    slot_block = []
    slot_gate_start = [0]
    gate_kind = []
    slot_ca = []
    gate_coords = []
    gate_labels = []
    sensor_coords = []
    block_slot_start = [0]
    n_ca = 0
    for b in range(N_THETA):
        for i in range(n_per_block[b]):
            slot_block.append(b)
            kinds = BLOCK_GATE_KINDS[b]
            for k, kind in enumerate(kinds):
                gate_kind.append(kind)
                gate_coords.append((b, i, k))
                gate_labels.append(f"{THETA_LABELS[b]}[{i}].{GATE_NAMES[kind]}")
            slot_gate_start.append(len(gate_kind))
            if BLOCK_HAS_CA[b]:
                slot_ca.append(n_ca)
                sensor_coords.append((b, i, SENSOR_COORD_OFFSET[b]))
                n_ca += 1
            else:
                slot_ca.append(-1)
        block_slot_start.append(len(slot_block))
    return ObserverLayout(
        n_per_block=n_per_block,
        slot_block=np.asarray(slot_block, dtype=np.int32),
        block_slot_start=np.asarray(block_slot_start, dtype=np.int32),
        slot_gate_start=np.asarray(slot_gate_start, dtype=np.int32),
        gate_kind=np.asarray(gate_kind, dtype=np.int32),
        slot_ca=np.asarray(slot_ca, dtype=np.int32),
        gate_coords=tuple(gate_coords),
        gate_labels=tuple(gate_labels),
        sensor_coords=tuple(sensor_coords),
    )


@dataclass
class CentralizedObserverState:
    """Voltage/internal estimates plus the RLS filter pair."""

    v_hat: float
    w_hat: np.ndarray    # six gates then [Ca]
    theta_hat: np.ndarray
    psi: np.ndarray
    P: np.ndarray        # symmetric positive definite

    def __post_init__(self):
        self.w_hat = np.asarray(self.w_hat, dtype=float)
        self.theta_hat = np.asarray(self.theta_hat, dtype=float)
        self.psi = np.asarray(self.psi, dtype=float)
        self.P = np.asarray(self.P, dtype=float)
        bad = []
        if self.w_hat.shape != (N_INTERNAL,):
            bad.append(f"w_hat shape {self.w_hat.shape}")
        if self.theta_hat.shape != (N_THETA,):
            bad.append(f"theta_hat shape {self.theta_hat.shape}")
        if self.psi.shape != (N_THETA,):
            bad.append(f"psi shape {self.psi.shape}")
        if self.P.shape != (N_THETA, N_THETA):
            bad.append(f"P shape {self.P.shape}")
        if bad:
            raise ConfigurationError([f"centralized state dimension mismatch: {b}" for b in bad])

    def copy(self) -> "CentralizedObserverState":
        return CentralizedObserverState(
            self.v_hat, self.w_hat.copy(), self.theta_hat.copy(), self.psi.copy(), self.P.copy()
        )


@dataclass
class BlockedObserverState:
    """Flat state of a block-structured observer (see ObserverLayout)."""

    layout: ObserverLayout
    v_hat: float
    gates: np.ndarray
    ca: np.ndarray
    theta_hat: np.ndarray
    psi: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        lay = self.layout
        self.gates = np.asarray(self.gates, dtype=float)
        self.ca = np.asarray(self.ca, dtype=float)
        self.theta_hat = np.asarray(self.theta_hat, dtype=float)
        self.psi = np.asarray(self.psi, dtype=float)
        self.P = np.asarray(self.P, dtype=float)
        bad = []
        if self.gates.shape != (lay.n_gate_slots,):
            bad.append(f"gates shape {self.gates.shape}")
        if self.ca.shape != (lay.n_ca,):
            bad.append(f"ca shape {self.ca.shape}")
        for name in ("theta_hat", "psi", "P"):
            if getattr(self, name).shape != (lay.n_slots,):
                bad.append(f"{name} shape {getattr(self, name).shape}")
        if bad:
            raise ConfigurationError([f"blocked state dimension mismatch: {b}" for b in bad])

    def copy(self) -> "BlockedObserverState":
        return type(self)(
            self.layout, self.v_hat, self.gates.copy(), self.ca.copy(),
            self.theta_hat.copy(), self.psi.copy(), self.P.copy(),
        )

    def block_theta(self, block: int) -> np.ndarray:
        """Particle estimates of one conductance block."""
        return self.theta_hat[self.layout.block_particles(block)]

    def block_means(self) -> np.ndarray:
        """Empirical mean estimate per block (the plotted quantity)."""
        return np.array([empirical_mean(self.block_theta(b)) for b in range(N_THETA)])


class DistributedObserverState(BlockedObserverState):
    """One particle per block (layout built with n_redundant=1)."""


class RedundantObserverState(BlockedObserverState):
    """N particles per membrane-current block, one for leak."""


def empirical_mean(theta_block: np.ndarray) -> float:
    """Arithmetic mean of one block's particle estimates."""
    theta_block = np.asarray(theta_block, dtype=float)
    if theta_block.size < 1:
        raise ContractViolation("empirical_mean of an empty block")
    total = 0.0
    for value in theta_block:
        total += float(value)
    return total / theta_block.size


# --------------------------------------------------------------------------
# Mismatch wiring


def centralized_mismatch(config: MismatchConfig) -> MismatchSample:
    """Draws for the six centralized gate equations.

    Uses the same stream coordinates as the distributed observer's first
    particles, so shared equations perturb identically at equal seeds.
    """
    return sample_mismatch(config, N_GATES, coords=list(CENTRAL_GATE_COORDS), labels=GATE_NAMES)


def blocked_mismatch(config: MismatchConfig, layout: ObserverLayout) -> MismatchSample:
    """Independent draws for every gate copy of a blocked observer."""
    return sample_mismatch(
        config, layout.n_gate_slots, coords=list(layout.gate_coords), labels=layout.gate_labels
    )


def sensor_shifts(config: MismatchConfig, coords) -> np.ndarray:
    """Optional calcium-sensor shifts (zero unless opted in)."""
    out = np.zeros(len(coords))
    if config.perturb_kca_sensor:
        for n, (b, i, k) in enumerate(coords):
            out[n] = draw_pair(config, b, i, k)[1]
    return out


# --------------------------------------------------------------------------
# Initialization


def init_centralized(model: NeuronModel, sample: MismatchSample, v0: float,
                     theta0: np.ndarray | None = None, p0: float = 1.0) -> CentralizedObserverState:
    """Neutral start: internal copies rested at v0 under the observer's own
    (perturbed) kinetics, estimates at zero, unit covariance."""
    kin = model.gate_kinetics
    w = np.empty(N_INTERNAL)
    for k in range(N_GATES):
        w[k] = sigmoid_eval(kin[k].activation, v0 - sample.q[k])
    w[CA_INDEX] = calcium_equilibrium(model, v0, w[3], w[4], w[5])
    theta = np.zeros(N_THETA) if theta0 is None else np.asarray(theta0, dtype=float).copy()
    return CentralizedObserverState(
        v_hat=v0, w_hat=w, theta_hat=theta, psi=np.zeros(N_THETA), P=np.eye(N_THETA) * p0
    )


def init_blocked(model: NeuronModel, layout: ObserverLayout, sample: MismatchSample,
                 v0: float, theta0: np.ndarray | None = None, p0: float = 1.0,
                 cls=None) -> BlockedObserverState:
    """Same neutral start for the block-structured observers.

    ``theta0`` is a per-block vector; particles of a block split it
    evenly so the block sum matches (zeros by default).
    """
    kin = model.gate_kinetics
    lay = layout
    gates = np.empty(lay.n_gate_slots)
    for g in range(lay.n_gate_slots):
        gates[g] = sigmoid_eval(kin[lay.gate_kind[g]].activation, v0 - sample.q[g])
    ca = np.zeros(lay.n_ca)
    for s in range(lay.n_slots):
        ci = lay.slot_ca[s]
        if ci >= 0:
            g0 = lay.slot_gate_start[s]
            ca[ci] = calcium_equilibrium(model, v0, gates[g0], gates[g0 + 1], gates[g0 + 2])
    theta = np.zeros(lay.n_slots)
    if theta0 is not None:
        theta0 = np.asarray(theta0, dtype=float)
        for s in range(lay.n_slots):
            b = lay.slot_block[s]
            theta[s] = theta0[b] / lay.n_per_block[b]
    if cls is None:
        cls = DistributedObserverState if max(lay.n_per_block) == 1 else RedundantObserverState
    return cls(
        layout=lay, v_hat=v0, gates=gates, ca=ca, theta_hat=theta,
        psi=np.zeros(lay.n_slots), P=np.full(lay.n_slots, p0),
    )


# --------------------------------------------------------------------------
# Vector fields


def centralized_rhs(model: NeuronModel, mismatch: MismatchSample,
                    state: CentralizedObserverState, gains: CentralizedGains,
                    v: float, u: float, sensor_shift: float = 0.0,
                    regressor_voltage: float | None = None) -> CentralizedObserverState:
    """Derivative of the centralized observer state.

    The regressor, linear part and internal dynamics all consume the
    measured voltage; ``regressor_voltage`` exists only so tests can
    demonstrate that substituting the estimate changes the trajectory.
    """
    if mismatch.p.size != N_GATES:
        raise ConfigurationError(
            f"centralized observer needs {N_GATES} mismatch entries, got {mismatch.p.size}"
        )
    if not np.array_equal(state.P, state.P.T):
        raise ContractViolation("centralized covariance must be symmetric")
    vr = v if regressor_voltage is None else regressor_voltage
    kin = model.gate_kinetics
    w = state.w_hat
    wdot = np.empty(N_INTERNAL)
    for k in range(N_GATES):
        num = sigmoid_eval(kin[k].activation, vr - mismatch.q[k]) - w[k]
        wdot[k] = num / (mismatch.p[k] * tau_eval(kin[k].time_constant, vr))
    wdot[CA_INDEX] = calcium_rhs(model, vr, w[3], w[4], w[5], w[CA_INDEX])

    c = model.capacitance
    e_rev = model.reversals
    phi = np.empty(N_THETA)
    phi[0] = -w[0] * w[1] * (vr - e_rev[0]) / c
    phi[1] = -w[2] * (vr - e_rev[1]) / c
    phi[2] = -w[3] * w[4] * (vr - e_rev[2]) / c
    phi[3] = -w[5] * (vr - e_rev[3]) / c
    phi[4] = -kca_activation(model.kca_sensor, w[CA_INDEX] - sensor_shift) * (vr - e_rev[4]) / c
    phi[5] = -(vr - e_rev[5]) / c

    P = state.P
    psi = state.psi
    p_psi = np.empty(N_THETA)
    for j in range(N_THETA):
        acc = 0.0
        for k in range(N_THETA):
            acc += P[j, k] * psi[k]
        p_psi[j] = acc
    quad = 0.0
    for j in range(N_THETA):
        quad += psi[j] * p_psi[j]

    err = v - state.v_hat
    acc_pt = 0.0
    for j in range(N_THETA):
        acc_pt += phi[j] * state.theta_hat[j]
    v_hat_dot = acc_pt + u / c + gains.gamma * (1.0 + quad) * err

    theta_dot = np.empty(N_THETA)
    psi_dot = np.empty(N_THETA)
    for j in range(N_THETA):
        theta_dot[j] = gains.gamma * p_psi[j] * err
        psi_dot[j] = phi[j] - gains.gamma * psi[j]
    qg = gains.quad_gain
    P_dot = np.empty((N_THETA, N_THETA))
    # Mirroring the upper triangle keeps P exactly symmetric under any
    # fixed-step update (the two rounding orders can differ by one ulp).
    for j in range(N_THETA):
        for k in range(j, N_THETA):
            val = gains.alpha * P[j, k] - qg * p_psi[j] * p_psi[k]
            P_dot[j, k] = val
            P_dot[k, j] = val

    return CentralizedObserverState(v_hat_dot, wdot, theta_dot, psi_dot, P_dot)


def _blocked_rhs(model: NeuronModel, mismatch: MismatchSample, state: BlockedObserverState,
                 gains: DistributedGains, beta: float, v: float, u: float,
                 sensor_shift: np.ndarray | None = None,
                 regressor_voltage: float | None = None) -> BlockedObserverState:
    lay = state.layout
    if mismatch.p.size != lay.n_gate_slots:
        raise ConfigurationError(
            f"observer layout has {lay.n_gate_slots} gate equations, "
            f"mismatch sample has {mismatch.p.size}"
        )
    if not np.all(state.P > 0.0):
        raise ContractViolation("blocked observer covariance scalars must stay > 0")
    vr = v if regressor_voltage is None else regressor_voltage
    kin = model.gate_kinetics
    c = model.capacitance
    e_rev = model.reversals
    gates = state.gates
    gates_dot = np.empty(lay.n_gate_slots)
    for g in range(lay.n_gate_slots):
        kind = lay.gate_kind[g]
        num = sigmoid_eval(kin[kind].activation, vr - mismatch.q[g]) - gates[g]
        gates_dot[g] = num / (mismatch.p[g] * tau_eval(kin[kind].time_constant, vr))

    ca_dot = np.empty(lay.n_ca)
    phi = np.empty(lay.n_slots)
    for s in range(lay.n_slots):
        b = lay.slot_block[s]
        g0 = lay.slot_gate_start[s]
        if b == 0 or b == 2:
            gating = gates[g0] * gates[g0 + 1]
        elif b == 1 or b == 3:
            gating = gates[g0]
        elif b == 4:
            ci = lay.slot_ca[s]
            ca_dot[ci] = calcium_rhs(model, vr, gates[g0], gates[g0 + 1], gates[g0 + 2],
                                     state.ca[ci])
            shift = 0.0 if sensor_shift is None else sensor_shift[ci]
            gating = kca_activation(model.kca_sensor, state.ca[ci] - shift)
        else:
            gating = 1.0
        phi[s] = -gating * (vr - e_rev[b]) / c

    err = v - state.v_hat
    acc_pt = 0.0
    for s in range(lay.n_slots):
        acc_pt += phi[s] * state.theta_hat[s]
    gain_acc = 0.0
    for s in range(lay.n_slots):
        gb = gains.gamma[lay.slot_block[s]]
        gain_acc += gb * state.psi[s] * state.psi[s] * state.P[s]
    v_hat_dot = acc_pt + u / c + (gains.gamma0 + gain_acc) * err

    block_mean = None
    if beta != 0.0:
        block_mean = np.empty(N_THETA)
        for b in range(N_THETA):
            block_mean[b] = empirical_mean(state.theta_hat[lay.block_particles(b)])

    theta_dot = np.empty(lay.n_slots)
    psi_dot = np.empty(lay.n_slots)
    p_dot = np.empty(lay.n_slots)
    qg = gains.quad_gain
    for s in range(lay.n_slots):
        b = lay.slot_block[s]
        gb = gains.gamma[b]
        d = gb * state.P[s] * state.psi[s] * err
        if beta != 0.0:
            d -= beta * (state.theta_hat[s] - block_mean[b])
        theta_dot[s] = d
        psi_dot[s] = phi[s] - gb * state.psi[s]
        p_dot[s] = gains.alpha[b] * state.P[s] - qg[b] * state.P[s] * state.psi[s] * state.psi[s] * state.P[s]

    return type(state)(lay, v_hat_dot, gates_dot, ca_dot, theta_dot, psi_dot, p_dot)


def distributed_rhs(model: NeuronModel, mismatch: MismatchSample,
                    state: DistributedObserverState, gains: DistributedGains,
                    v: float, u: float, sensor_shift: np.ndarray | None = None,
                    regressor_voltage: float | None = None) -> BlockedObserverState:
    """Derivative of the distributed observer (single particle per block)."""
    if max(state.layout.n_per_block) != 1:
        raise ConfigurationError("distributed observer layout must have one particle per block")
    return _blocked_rhs(model, mismatch, state, gains, 0.0, v, u, sensor_shift, regressor_voltage)


def redundant_rhs(model: NeuronModel, mismatch: MismatchSample,
                  state: RedundantObserverState, gains: DistributedGains,
                  redundancy: RedundancyGains, v: float, u: float,
                  sensor_shift: np.ndarray | None = None,
                  regressor_voltage: float | None = None) -> BlockedObserverState:
    """Derivative of the redundant observer (consensus-coupled particles)."""
    expected = tuple(1 if b == LEAK_BLOCK else redundancy.N for b in range(N_THETA))
    if state.layout.n_per_block != expected:
        raise ConfigurationError(
            f"layout particle counts {state.layout.n_per_block} do not match N={redundancy.N}"
        )
    return _blocked_rhs(model, mismatch, state, gains, redundancy.beta, v, u,
                        sensor_shift, regressor_voltage)


def consensus_contributions(state: BlockedObserverState, beta: float) -> np.ndarray:
    """Per-block sums of the consensus term (zero up to rounding)."""
    lay = state.layout
    out = np.empty(N_THETA)
    for b in range(N_THETA):
        theta = state.theta_hat[lay.block_particles(b)]
        mean = empirical_mean(theta)
        acc = 0.0
        for value in theta:
            acc += -beta * (value - mean)
        out[b] = acc
    return out

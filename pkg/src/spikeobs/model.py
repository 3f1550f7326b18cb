"""Conductance-based bursting neuron: five ionic currents, leak, and a
calcium pool.

The circuit is fixed: transient sodium (Na, gates m*h), delayed-rectifier
potassium (K, gate m), T-type calcium (CaT, gates m*h), L-type calcium
(CaL, gate m) and calcium-activated potassium (KCa, conductance factor
sigma([Ca]) with no voltage gate), plus an ohmic leak.  Voltage-gated
variables follow first-order kinetics

    tau(v) * dx/dt = -x + sigma(v)

with logistic steady states and Gaussian-bell time constants, and the
calcium pool integrates the (unit-conductance) calcium currents:

    tau_ca * d[Ca]/dt = -0.03 m_CaT h_CaT (v - E_Ca) - 0.3 m_CaL (v - E_Ca) - [Ca]

Units are mV and ms; conductances and capacitance share one arbitrary but
mutually consistent scale (see data/neuron_default.yaml).

The membrane equation is linear in the maximal conductances, which is what
the online estimators exploit:

    dv/dt = phi(v, w, u) . theta + a(v, w, u)

with one regressor entry per current (leak included) and a = u / c.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

# Fixed orderings: conductance vector indices are stable under these.
CURRENT_NAMES = ("Na", "K", "CaT", "CaL", "KCa")
THETA_LABELS = ("Na", "K", "CaT", "CaL", "KCa", "leak")
GATE_NAMES = ("m_Na", "h_Na", "m_K", "m_CaT", "h_CaT", "m_CaL")

# Gate index -> owning current index (Na, Na, K, CaT, CaT, CaL).
GATE_CURRENT = (0, 0, 1, 2, 2, 3)

N_GATES = len(GATE_NAMES)
N_THETA = len(THETA_LABELS)
# Internal state w = (6 gates, [Ca]); calcium sits last.
N_INTERNAL = N_GATES + 1
CA_INDEX = N_GATES

ACTIVATION = "activation"
INACTIVATION = "inactivation"


@dataclass(frozen=True)
class SigmoidParams:
    """Logistic steady-state curve for one gating variable."""

    v_half: float
    slope: float
    direction: str = ACTIVATION

    def __post_init__(self):
        if self.slope <= 0.0:
            raise ConfigurationError(
                f"sigmoid slope must be > 0 (got {self.slope}); "
                "use direction to select activation vs inactivation"
            )
        if self.direction not in (ACTIVATION, INACTIVATION):
            raise ConfigurationError(f"unknown sigmoid direction {self.direction!r}")

    @property
    def sign(self) -> float:
        return 1.0 if self.direction == ACTIVATION else -1.0


@dataclass(frozen=True)
class TimeConstantParams:
    """Gaussian-bell voltage dependence, bounded in [base, base + amplitude]."""

    base: float
    amplitude: float
    center: float
    width: float

    def __post_init__(self):
        problems = []
        if self.base <= 0.0:
            problems.append(f"tau base must be > 0 (got {self.base})")
        if self.amplitude < 0.0:
            problems.append(f"tau amplitude must be >= 0 (got {self.amplitude})")
        if self.width <= 0.0:
            problems.append(f"tau width must be > 0 (got {self.width})")
        if problems:
            raise ConfigurationError(problems)


@dataclass(frozen=True)
class GatingKinetics:
    """Steady-state curve plus time constant for one gating variable."""

    activation: SigmoidParams
    time_constant: TimeConstantParams
    exponent: int = 1

    def __post_init__(self):
        # Unit exponents only; the field exists so configs stay explicit.
        if self.exponent != 1:
            raise ConfigurationError(
                f"gating exponent must be 1 (got {self.exponent})"
            )


@dataclass(frozen=True)
class CalciumSensor:
    """Logistic conductance factor sigma([Ca]) in (0, 1) for KCa."""

    half: float
    slope: float

    def __post_init__(self):
        if self.slope <= 0.0:
            raise ConfigurationError(f"calcium sensor slope must be > 0 (got {self.slope})")


@dataclass(frozen=True)
class IonicCurrentSpec:
    """One ionic current: reversal plus its gating structure."""

    name: str
    reversal: float
    m_kinetics: GatingKinetics | None = None
    h_kinetics: GatingKinetics | None = None
    calcium_gated: bool = False
    calcium_sensor: CalciumSensor | None = None

    def __post_init__(self):
        if self.name not in CURRENT_NAMES:
            raise ConfigurationError(f"unknown current name {self.name!r}")
        if self.calcium_gated:
            if self.m_kinetics is not None or self.h_kinetics is not None:
                raise ConfigurationError(f"{self.name}: calcium-gated current carries no voltage gates")
            if self.calcium_sensor is None:
                raise ConfigurationError(f"{self.name}: calcium-gated current needs a calcium_sensor")


# Required gating structure per current (has_m, has_h, calcium_gated).
_STRUCTURE = {
    "Na": (True, True, False),
    "K": (True, False, False),
    "CaT": (True, True, False),
    "CaL": (True, False, False),
    "KCa": (False, False, True),
}


@dataclass(frozen=True)
class NeuronModel:
    """Full parameter set for the bursting neuron.

    ``maximal_conductances`` is ordered per THETA_LABELS (five ionic
    currents then leak); downstream estimate vectors use the same indices.
    """

    capacitance: float
    currents: tuple[IonicCurrentSpec, ...]
    maximal_conductances: np.ndarray
    leak_reversal: float
    tau_ca: float
    ca_cat_coeff: float = 0.03
    ca_cal_coeff: float = 0.3

    def __post_init__(self):
        problems = []
        if self.capacitance <= 0.0:
            problems.append(f"capacitance must be > 0 (got {self.capacitance})")
        if self.tau_ca <= 0.0:
            problems.append(f"tau_ca must be > 0 (got {self.tau_ca})")
        names = tuple(c.name for c in self.currents)
        if names != CURRENT_NAMES:
            problems.append(f"currents must be ordered {CURRENT_NAMES}, got {names}")
        else:
            for cur in self.currents:
                want_m, want_h, want_ca = _STRUCTURE[cur.name]
                if (cur.m_kinetics is not None) != want_m:
                    problems.append(f"{cur.name}: m kinetics {'missing' if want_m else 'unexpected'}")
                if (cur.h_kinetics is not None) != want_h:
                    problems.append(f"{cur.name}: h kinetics {'missing' if want_h else 'unexpected'}")
                if cur.calcium_gated != want_ca:
                    problems.append(f"{cur.name}: calcium_gated must be {want_ca}")
        theta = np.asarray(self.maximal_conductances, dtype=float)
        if theta.shape != (N_THETA,):
            problems.append(
                f"maximal_conductances must have length {N_THETA} "
                f"(five currents plus leak), got shape {theta.shape}"
            )
        elif not np.all(theta > 0.0):
            problems.append("all maximal conductances must be > 0")
        if problems:
            raise ConfigurationError(problems)
        theta.flags.writeable = False
        object.__setattr__(self, "maximal_conductances", theta)

    @property
    def gate_kinetics(self) -> tuple[GatingKinetics, ...]:
        """The six voltage-gated kinetics in GATE_NAMES order."""
        na, k, cat, cal, _ = self.currents
        return (
            na.m_kinetics,
            na.h_kinetics,
            k.m_kinetics,
            cat.m_kinetics,
            cat.h_kinetics,
            cal.m_kinetics,
        )

    @property
    def kca_sensor(self) -> CalciumSensor:
        return self.currents[4].calcium_sensor

    @property
    def reversals(self) -> np.ndarray:
        """Reversal potential per theta entry (KCa shares E_K; leak last)."""
        out = np.array([c.reversal for c in self.currents] + [self.leak_reversal])
        out.flags.writeable = False
        return out

    @property
    def e_ca(self) -> float:
        return self.currents[2].reversal


@dataclass
class FullState:
    """Membrane voltage plus internal vector (six gates then [Ca])."""

    v: float
    w: np.ndarray

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        if self.w.shape != (N_INTERNAL,):
            raise ConfigurationError(
                f"internal state must have length {N_INTERNAL} (6 gates + [Ca]), got {self.w.shape}"
            )

    def copy(self) -> "FullState":
        return FullState(self.v, self.w.copy())


def _logistic(z: float) -> float:
    # IEEE saturation at the tails is fine: exp overflows to inf, 1/inf = 0.
    return 1.0 / (1.0 + math.exp(-z))


def sigmoid_eval(params: SigmoidParams, v: float) -> float:
    """Logistic steady-state value in (0, 1); monotone per direction."""
    return _logistic(params.sign * (v - params.v_half) / params.slope)


def tau_eval(params: TimeConstantParams, v: float) -> float:
    """Bell-shaped time constant, always within [base, base + amplitude]."""
    d = (v - params.center) / params.width
    return params.base + params.amplitude * math.exp(-d * d)


def kca_activation(sensor: CalciumSensor, ca: float) -> float:
    """KCa conductance factor sigma([Ca]) in (0, 1)."""
    return _logistic((ca - sensor.half) / sensor.slope)


def gating_rhs(kinetics: GatingKinetics, v: float, x: float) -> float:
    """dx/dt for one voltage-gated variable at membrane voltage v."""
    return (sigmoid_eval(kinetics.activation, v) - x) / tau_eval(kinetics.time_constant, v)


def calcium_rhs(model: NeuronModel, v: float, m_cat: float, h_cat: float,
                m_cal: float, ca: float) -> float:
    """d[Ca]/dt from the unit-conductance calcium currents and linear decay."""
    drive = v - model.e_ca
    influx = -model.ca_cat_coeff * m_cat * h_cat * drive - model.ca_cal_coeff * m_cal * drive
    return (influx - ca) / model.tau_ca


def regressor_decompose(model: NeuronModel, v: float, w: np.ndarray, u: float):
    """Split dv/dt into (phi, a) with dv/dt = phi . theta + a.

    phi[j] = -(gating product)_j (v - E_j) / c for each current, leak last;
    a = u / c.
    """
    w = np.asarray(w, dtype=float)
    if w.shape != (N_INTERNAL,):
        raise ConfigurationError(f"internal state must have length {N_INTERNAL}, got {w.shape}")
    c = model.capacitance
    e = model.reversals
    phi = np.empty(N_THETA)
    phi[0] = -w[0] * w[1] * (v - e[0]) / c
    phi[1] = -w[2] * (v - e[1]) / c
    phi[2] = -w[3] * w[4] * (v - e[2]) / c
    phi[3] = -w[5] * (v - e[3]) / c
    phi[4] = -kca_activation(model.kca_sensor, w[CA_INDEX]) * (v - e[4]) / c
    phi[5] = -(v - e[5]) / c
    return phi, u / c


def neuron_rhs(model: NeuronModel, state: FullState, u: float,
               theta: np.ndarray | None = None) -> FullState:
    """Vector field of the true neuron; optionally at overridden conductances.

    The voltage component is assembled through the regressor so that
    phi . theta + a and this function agree identically.
    """
    th = model.maximal_conductances if theta is None else np.asarray(theta, dtype=float)
    if th.shape != (N_THETA,):
        raise ConfigurationError(f"theta must have length {N_THETA}, got {th.shape}")
    v, w = state.v, state.w
    phi, a = regressor_decompose(model, v, w, u)
    vdot = 0.0
    for j in range(N_THETA):
        vdot += phi[j] * th[j]
    vdot += a
    wdot = np.empty(N_INTERNAL)
    kin = model.gate_kinetics
    for k in range(N_GATES):
        wdot[k] = gating_rhs(kin[k], v, w[k])
    wdot[CA_INDEX] = calcium_rhs(model, v, w[3], w[4], w[5], w[CA_INDEX])
    return FullState(vdot, wdot)


def gating_steady_state(model: NeuronModel, v: float) -> np.ndarray:
    """Steady-state values of the six voltage gates at fixed v."""
    kin = model.gate_kinetics
    return np.array([sigmoid_eval(k.activation, v) for k in kin])


def calcium_equilibrium(model: NeuronModel, v: float, m_cat: float, h_cat: float,
                        m_cal: float) -> float:
    """[Ca] at which influx balances decay for fixed v and gate values."""
    drive = v - model.e_ca
    return -model.ca_cat_coeff * m_cat * h_cat * drive - model.ca_cal_coeff * m_cal * drive


def calcium_steady_state(model: NeuronModel, v: float, gates: np.ndarray) -> float:
    """Equilibrium [Ca] for a full gate vector."""
    return calcium_equilibrium(model, v, gates[3], gates[4], gates[5])


def initial_state(model: NeuronModel, v0: float) -> FullState:
    """Rest the internal variables at their v0 steady states."""
    gates = gating_steady_state(model, v0)
    ca = calcium_steady_state(model, v0, gates)
    w = np.empty(N_INTERNAL)
    w[:N_GATES] = gates
    w[CA_INDEX] = ca
    return FullState(v0, w)

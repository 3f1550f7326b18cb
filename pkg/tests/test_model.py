import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spikeobs.errors import ConfigurationError
from spikeobs.model import (
    CA_INDEX,
    GATE_NAMES,
    N_INTERNAL,
    N_THETA,
    CalciumSensor,
    FullState,
    GatingKinetics,
    SigmoidParams,
    TimeConstantParams,
    calcium_equilibrium,
    calcium_rhs,
    gating_rhs,
    initial_state,
    kca_activation,
    neuron_rhs,
    regressor_decompose,
    sigmoid_eval,
    tau_eval,
)

voltages = st.floats(min_value=-120.0, max_value=60.0)


# Expected values below are hand-computed from the closed forms
# (logistic and Gaussian bell) at the default parameter set.


def test_sigmoid_frozen_values(model):
    kin = model.gate_kinetics
    # m_Na at -65 mV: logistic((-65 + 30) / 3.5) = logistic(-10)
    assert math.isclose(sigmoid_eval(kin[0].activation, -65.0),
                        4.5397868702434395e-05, rel_tol=1e-14)
    # h_Na (inactivating) at -50 mV: logistic(-(-50 + 43) / 5) = logistic(1.4)
    assert math.isclose(sigmoid_eval(kin[1].activation, -50.0),
                        0.8021838885585817, rel_tol=1e-14)
    # exact half point
    assert sigmoid_eval(kin[0].activation, kin[0].activation.v_half) == 0.5


def test_tau_frozen_values(model):
    tc = model.gate_kinetics[0].time_constant
    assert tau_eval(tc, tc.center) == tc.base + tc.amplitude
    # one width away from center: base + amplitude * exp(-1)
    assert math.isclose(tau_eval(tc, tc.center + tc.width),
                        tc.base + tc.amplitude * math.exp(-1.0), rel_tol=1e-15)
    assert math.isclose(tau_eval(tc, -40.0), 0.5178794411714424, rel_tol=1e-14)


def test_kca_frozen_values(model):
    sensor = model.kca_sensor
    assert kca_activation(sensor, sensor.half) == 0.5
    # (6 - 4.5) / 0.6 = 2.5 above half
    assert math.isclose(kca_activation(sensor, 6.0),
                        0.9241418199787566, rel_tol=1e-14)


@given(v=voltages)
def test_sigmoid_bounded(v, model):
    for kin in model.gate_kinetics:
        assert 0.0 < sigmoid_eval(kin.activation, v) < 1.0


@given(v1=voltages, v2=voltages)
def test_sigmoid_monotone_per_direction(v1, v2, model):
    if v1 > v2:
        v1, v2 = v2, v1
    act = model.gate_kinetics[0].activation     # activation gate
    inact = model.gate_kinetics[1].activation   # inactivation gate
    assert sigmoid_eval(act, v1) <= sigmoid_eval(act, v2)
    assert sigmoid_eval(inact, v1) >= sigmoid_eval(inact, v2)


@given(v=voltages)
def test_tau_within_bounds(v, model):
    for kin in model.gate_kinetics:
        tc = kin.time_constant
        # the bell underflows to exactly base far from center
        assert tc.base <= tau_eval(tc, v) <= tc.base + tc.amplitude


@given(ca=st.floats(min_value=0.0, max_value=100.0))
def test_kca_bounded(ca, model):
    # saturates to exactly 1.0 at high calcium
    assert 0.0 < kca_activation(model.kca_sensor, ca) <= 1.0


def test_initial_state_is_internal_equilibrium(model):
    state = initial_state(model, -65.0)
    d = neuron_rhs(model, state, u=0.0)
    # gates and calcium rest exactly; only the voltage moves
    assert np.all(d.w == 0.0)


def test_initial_state_frozen_values(model):
    state = initial_state(model, -65.0)
    assert math.isclose(state.w[0], 4.5397868702434395e-05, rel_tol=1e-14)
    assert math.isclose(state.w[CA_INDEX], 0.6315958344072161, rel_tol=1e-12)


def test_calcium_equilibrium_zeroes_rhs(model):
    ca = calcium_equilibrium(model, -50.0, 0.3, 0.6, 0.1)
    assert calcium_rhs(model, -50.0, 0.3, 0.6, 0.1, ca) == 0.0


def test_gating_rhs_signs(model):
    kin = model.gate_kinetics[3]
    target = sigmoid_eval(kin.activation, -50.0)
    assert gating_rhs(kin, -50.0, target - 0.1) > 0.0
    assert gating_rhs(kin, -50.0, target + 0.1) < 0.0
    assert gating_rhs(kin, -50.0, target) == 0.0


def test_regressor_matches_voltage_field(model):
    rng = np.random.default_rng(42)
    for _ in range(200):
        v = rng.uniform(-90.0, 40.0)
        w = np.empty(N_INTERNAL)
        w[:6] = rng.uniform(0.0, 1.0, 6)
        w[CA_INDEX] = rng.uniform(0.0, 40.0)
        u = rng.uniform(-100.0, 500.0)
        theta = rng.uniform(0.1, 150.0, N_THETA)
        phi, a = regressor_decompose(model, v, w, u)
        vdot = neuron_rhs(model, FullState(v, w), u, theta=theta).v
        lin = 0.0
        for j in range(N_THETA):
            lin += phi[j] * theta[j]
        lin += a
        assert abs(lin - vdot) <= 1e-12 * max(abs(vdot), 1.0)


def test_voltage_field_linear_in_conductances(model):
    state = initial_state(model, -58.0)
    theta = np.asarray(model.maximal_conductances)
    u = 120.0
    a = u / model.capacitance
    v1 = neuron_rhs(model, state, u, theta=theta).v
    v2 = neuron_rhs(model, state, u, theta=2.0 * theta).v
    assert math.isclose(v2 - a, 2.0 * (v1 - a), rel_tol=1e-12)


def test_regressor_shape_guard(model):
    with pytest.raises(ConfigurationError):
        regressor_decompose(model, -65.0, np.zeros(3), 0.0)
    with pytest.raises(ConfigurationError):
        neuron_rhs(model, initial_state(model, -65.0), 0.0, theta=np.ones(4))


def test_default_parameter_set(model):
    assert model.capacitance == 50.0
    assert model.tau_ca == 800.0
    assert model.leak_reversal == -66.0
    assert tuple(model.reversals) == (50.0, -85.0, 120.0, 120.0, -85.0, -66.0)
    assert [k.activation.v_half for k in model.gate_kinetics] == [
        -30.0, -43.0, -20.0, -58.0, -70.0, -45.0]
    assert model.gate_kinetics[1].activation.direction == "inactivation"
    assert model.gate_kinetics[4].activation.direction == "inactivation"
    assert (model.ca_cat_coeff, model.ca_cal_coeff) == (0.03, 0.3)
    assert len(GATE_NAMES) == 6 and N_THETA == 6


def test_parameter_validation():
    with pytest.raises(ConfigurationError):
        SigmoidParams(v_half=-30.0, slope=0.0)
    with pytest.raises(ConfigurationError):
        SigmoidParams(v_half=-30.0, slope=4.0, direction="sideways")
    with pytest.raises(ConfigurationError):
        TimeConstantParams(base=0.0, amplitude=1.0, center=-60.0, width=20.0)
    with pytest.raises(ConfigurationError):
        TimeConstantParams(base=1.0, amplitude=-1.0, center=-60.0, width=20.0)
    with pytest.raises(ConfigurationError):
        CalciumSensor(half=4.5, slope=0.0)
    good = SigmoidParams(v_half=-30.0, slope=4.0)
    tc = TimeConstantParams(base=1.0, amplitude=1.0, center=-60.0, width=20.0)
    with pytest.raises(ConfigurationError):
        GatingKinetics(activation=good, time_constant=tc, exponent=2)


def test_validation_collects_all_problems():
    try:
        TimeConstantParams(base=-1.0, amplitude=-1.0, center=0.0, width=0.0)
    except ConfigurationError as exc:
        assert len(exc.violations) == 3
    else:
        pytest.fail("expected a ConfigurationError")

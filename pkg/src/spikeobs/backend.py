"""Kernel backend selection and parameter packing.

Two interchangeable trial integrators exist: a compiled extension and a
pure-Python twin.  They implement identical arithmetic, so results are
bit-identical; the compiled one is simply faster.  Selection order:

  1. explicit ``backend=`` argument ("compiled" / "pure"),
  2. the SPIKEOBS_PURE_PYTHON environment variable (forces "pure"),
  3. the compiled extension when importable, else pure Python.
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_py as _pure
from .errors import ConfigurationError
from .model import N_GATES, NeuronModel

try:
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

HAVE_COMPILED = _compiled is not None

# Codes shared by both kernels (the pure module is the reference).
OBS_NONE = _pure.OBS_NONE
OBS_CENTRALIZED = _pure.OBS_CENTRALIZED
OBS_BLOCKED = _pure.OBS_BLOCKED
OBS_BIAS = _pure.OBS_BIAS
METHOD_EULER = _pure.METHOD_EULER
METHOD_RK4 = _pure.METHOD_RK4
MP_N_SCALARS = _pure.MP_N_SCALARS
N_LOG_COLS = _pure.N_LOG_COLS

DIVERGENCE_REASONS = {
    _pure.DIVERGED_V: "membrane voltage left the admissible range",
    _pure.DIVERGED_VHAT: "voltage estimate left the admissible range",
    _pure.DIVERGED_GATE: "a gating variable left [0, 1]",
    _pure.DIVERGED_CA: "a calcium concentration went negative",
    _pure.DIVERGED_COV: "a covariance lost positive definiteness",
}

EMPTY_F = np.zeros(0)
EMPTY_I = np.zeros(0, dtype=np.int32)
EMPTY_2D = np.zeros((0, 3))


def default_backend() -> str:
    if os.environ.get("SPIKEOBS_PURE_PYTHON", "").lower() in ("1", "true", "yes"):
        return "pure"
    return "compiled" if HAVE_COMPILED else "pure"


def kernel_module(backend: str = "auto"):
    """The kernel module implementing run_trial for the requested backend."""
    if backend == "auto":
        backend = default_backend()
    if backend == "pure":
        return _pure
    if backend == "compiled":
        if not HAVE_COMPILED:
            raise ConfigurationError(
                "compiled backend requested but the extension is not built; "
                "reinstall the package or use backend=pure"
            )
        return _compiled
    raise ConfigurationError(f"unknown backend {backend!r} (use auto, compiled or pure)")


def pack_kinetics(model: NeuronModel) -> np.ndarray:
    """Per-gate kinetics table consumed by the kernels (one row per gate)."""
    out = np.empty((N_GATES, 7))
    for k, kin in enumerate(model.gate_kinetics):
        act = kin.activation
        tc = kin.time_constant
        out[k, _pure.GK_VHALF] = act.v_half
        out[k, _pure.GK_SLOPE] = act.slope
        out[k, _pure.GK_SIGN] = act.sign
        out[k, _pure.GK_TBASE] = tc.base
        out[k, _pure.GK_TAMP] = tc.amplitude
        out[k, _pure.GK_TCENTER] = tc.center
        out[k, _pure.GK_TWIDTH] = tc.width
    return out


def pack_model_scalars(model: NeuronModel, gate_slack: float = 1e-9,
                       v_limit: float = 200.0) -> np.ndarray:
    """mp[] vector with the model slots filled; gain slots default to 0."""
    mp = np.zeros(MP_N_SCALARS)
    mp[_pure.MP_C] = model.capacitance
    mp[_pure.MP_TAU_CA] = model.tau_ca
    mp[_pure.MP_CAT_C] = model.ca_cat_coeff
    mp[_pure.MP_CAL_C] = model.ca_cal_coeff
    mp[_pure.MP_KCA_HALF] = model.kca_sensor.half
    mp[_pure.MP_KCA_SLOPE] = model.kca_sensor.slope
    mp[_pure.MP_E_CA] = model.e_ca
    mp[_pure.MP_GATE_SLACK] = gate_slack
    mp[_pure.MP_V_LIMIT] = v_limit
    return mp

"""Randomized kinetics perturbations that create observer/model error.

Each voltage-gated equation owned by an observer copy gets a pair of
samples: a time-constant scale drawn from U(1-r, 1+r) and an activation
shift drawn from U(-s, s), turning

    tau(v) dx/dt = -x + sigma(v)      into
    p tau(v) dx/dt = -x + sigma(v - q).

Draws come from a splittable counter-style stream: the sample for a given
(block, particle, gate) coordinate is a pure function of the seed and that
coordinate, so enlarging an ensemble never disturbs existing draws and
observer variants stay comparable at equal seeds.  The true neuron is
never perturbed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .model import GatingKinetics, sigmoid_eval, tau_eval


@dataclass(frozen=True)
class MismatchConfig:
    """Half-ranges of the kinetics perturbations plus the stream seed."""

    r: float = 0.04
    s: float = 4.0
    seed: int = 0
    # Opt-in: also shift the KCa calcium sensor argument (off keeps the
    # perturbations on the voltage-gated equations only).
    perturb_kca_sensor: bool = False

    def __post_init__(self):
        problems = []
        if self.r < 0.0:
            problems.append(f"mismatch r must be >= 0 (got {self.r})")
        if self.r >= 1.0:
            problems.append(f"mismatch r must be < 1 so scales stay positive (got {self.r})")
        if self.s < 0.0:
            problems.append(f"mismatch s must be >= 0 (got {self.s})")
        if problems:
            raise ConfigurationError(problems)


@dataclass(frozen=True)
class MismatchSample:
    """Realized per-gate-equation draws.

    ``p`` are time-constant scales in [1-r, 1+r], ``q`` activation shifts
    in [-s, s] (mV), one entry per gating equation in the owning layout's
    documented order.  ``labels`` names each coordinate for audit output.
    """

    p: np.ndarray
    q: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        q = np.asarray(self.q, dtype=float)
        if p.shape != q.shape or p.ndim != 1:
            raise ConfigurationError(f"p and q must be equal-length vectors, got {p.shape} and {q.shape}")
        if len(self.labels) != p.size:
            raise ConfigurationError("labels must match the sample length")
        p.flags.writeable = False
        q.flags.writeable = False
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    def __len__(self) -> int:
        return self.p.size

    def as_records(self) -> list[dict]:
        """Audit form, echoed into trial outputs."""
        return [
            {"gate": lab, "tau_scale": float(pv), "act_shift_mV": float(qv)}
            for lab, pv, qv in zip(self.labels, self.p, self.q)
        ]


def draw_pair(config: MismatchConfig, block: int, particle: int, gate: int) -> tuple[float, float]:
    """The (scale, shift) pair for one gate-equation coordinate.

    Pure in (seed, block, particle, gate); r = 0 or s = 0 give exactly
    1 and 0.
    """
    ss = np.random.SeedSequence(entropy=config.seed, spawn_key=(block, particle, gate))
    rng = np.random.default_rng(ss)
    p = rng.uniform(1.0 - config.r, 1.0 + config.r)
    q = rng.uniform(-config.s, config.s)
    return float(p), float(q)


def sample_mismatch(config: MismatchConfig, count: int,
                    coords: list[tuple[int, int, int]] | None = None,
                    labels: tuple[str, ...] | None = None) -> MismatchSample:
    """Draw ``count`` (scale, shift) pairs from the seeded stream.

    Without explicit coordinates the draws sit at (block=0, particle=0,
    gate=0..count-1); observer layouts pass their own coordinate lists so
    shared gate equations match across observer kinds at equal seeds.
    """
    if count < 1:
        raise ConfigurationError(f"mismatch sample count must be >= 1 (got {count})")
    if coords is None:
        coords = [(0, 0, k) for k in range(count)]
    if len(coords) != count:
        raise ConfigurationError("coordinate list must match count")
    if labels is None:
        labels = tuple(f"gate[{b},{i},{k}]" for b, i, k in coords)
    p = np.empty(count)
    q = np.empty(count)
    for n, (b, i, k) in enumerate(coords):
        p[n], q[n] = draw_pair(config, b, i, k)
    return MismatchSample(p=p, q=q, labels=tuple(labels))


def identity_sample(count: int, labels: tuple[str, ...] | None = None) -> MismatchSample:
    """The zero-perturbation sample (scales 1, shifts 0)."""
    if labels is None:
        labels = tuple(f"gate[{k}]" for k in range(count))
    return MismatchSample(p=np.ones(count), q=np.zeros(count), labels=labels)


def perturbed_gating_rhs(kinetics: GatingKinetics, scale: float, shift: float,
                         v: float, x: float) -> float:
    """dx/dt solving  scale * tau(v) * dx/dt = -x + sigma(v - shift)."""
    if scale <= 0.0:
        raise ConfigurationError(f"time-constant scale must be > 0 (got {scale})")
    num = sigmoid_eval(kinetics.activation, v - shift) - x
    return num / (scale * tau_eval(kinetics.time_constant, v))

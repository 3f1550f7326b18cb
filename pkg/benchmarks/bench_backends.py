"""Timing comparison of the compiled and pure-Python trial kernels.

Runs the same short trials through both backends, checks that every
output is bit-identical (the two kernels implement the same arithmetic
in the same order), and reports wall times plus the speedup.

Usage: python benchmarks/bench_backends.py [--duration MS] [--repeats N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from spikeobs.backend import HAVE_COMPILED
from spikeobs.config import load_model
from spikeobs.runner import (
    ObserverInit,
    RedundancyGains,
    Scenario,
    TrialConfig,
    default_scenario,
    integrate_trial,
)


def case_configs(duration: float) -> list[tuple[str, TrialConfig]]:
    base = default_scenario()
    scenario = Scenario(duration=duration, dt=base.dt, v0=base.v0,
                        input=base.input, ramps=())
    init = ObserverInit(theta="true", p_scale=1.0)
    common = dict(scenario=scenario, init=init, trial_seed=7, input_seed=11)
    return [
        ("centralized", TrialConfig(observer_kind="centralized", substeps=4, **common)),
        ("distributed", TrialConfig(observer_kind="distributed", substeps=8, **common)),
        ("redundant N=3", TrialConfig(observer_kind="redundant", substeps=8,
                                      redundancy=RedundancyGains(N=3), **common)),
    ]


def run_case(model, cfg: TrialConfig, backend: str, repeats: int):
    best = float("inf")
    result = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = integrate_trial(model, cfg, backend=backend, allow_divergence=True)
        best = min(best, time.perf_counter() - t0)
    return best, result


def identical(a, b) -> bool:
    return (
        a.rms_voltage_error == b.rms_voltage_error
        and a.n_error_samples == b.n_error_samples
        and np.array_equal(a.trajectories, b.trajectories)
        and np.array_equal(a.final_state, b.final_state)
    )


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--duration", type=float, default=500.0,
                        help="trial length in ms (default 500)")
    parser.add_argument("--repeats", type=int, default=3,
                        help="repeats per case, best time kept (default 3)")
    args = parser.parse_args()

    if not HAVE_COMPILED:
        raise SystemExit("compiled extension not built; nothing to compare")

    model = load_model()
    print(f"trial length {args.duration:g} ms, best of {args.repeats}")
    print(f"{'case':<16}{'compiled':>12}{'pure':>12}{'speedup':>10}  bit-identical")
    for name, cfg in case_configs(args.duration):
        t_c, r_c = run_case(model, cfg, "compiled", args.repeats)
        t_p, r_p = run_case(model, cfg, "pure", args.repeats)
        same = identical(r_c, r_p)
        print(f"{name:<16}{t_c * 1e3:>10.1f} ms{t_p * 1e3:>10.1f} ms"
              f"{t_p / t_c:>9.1f}x  {same}")
        if not same:
            raise SystemExit(f"backend outputs differ for {name}")


if __name__ == "__main__":
    main()

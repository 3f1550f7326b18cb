"""Shared builders for the test suite."""

from spikeobs.runner import OUInput, Scenario


def quiet_scenario(duration=200.0, mean=300.0, std=6.0, dt=0.1, v0=-65.0):
    """Short ramp-free scenario with a fluctuating drive."""
    return Scenario(duration=duration, dt=dt, v0=v0,
                    input=OUInput(mean=mean, std=std, tau=50.0))


def constant_scenario(duration=200.0, mean=300.0, dt=0.1, v0=-65.0):
    """Deterministic drive (std 0), usable across step sizes."""
    return Scenario(duration=duration, dt=dt, v0=v0,
                    input=OUInput(mean=mean, std=0.0))

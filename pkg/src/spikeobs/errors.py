"""Exception types shared across the package."""


class ConfigurationError(Exception):
    """Invalid model or experiment configuration.

    Carries a list of human-readable violations so callers can report
    every problem at once instead of failing on the first.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class ContractViolation(Exception):
    """A runtime precondition of an operation was broken by the caller."""


class TrialDiverged(Exception):
    """Integration produced a non-finite or unbounded state.

    Instability is a documented possible outcome for redundant estimators
    without consensus; the exception carries enough context to report it.
    """

    def __init__(self, time_ms, step, detail, last_state=None):
        self.time_ms = time_ms
        self.step = step
        self.detail = detail
        self.last_state = last_state
        super().__init__(f"trial diverged at t={time_ms:.3f} ms (step {step}): {detail}")

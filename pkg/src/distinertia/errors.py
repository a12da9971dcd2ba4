"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid system, schedule, partition or scenario configuration."""


class NumericalDivergenceError(ArithmeticError):
    """A simulated or estimated quantity became non-finite.

    ``machine`` / ``area`` / ``channel`` name the offending entity (1-based)
    and ``step`` the step index when known.
    """

    def __init__(self, message, machine=None, area=None, channel=None, step=None):
        super().__init__(message)
        self.machine = machine
        self.area = area
        self.channel = channel
        self.step = step


class FrequencyBandError(RuntimeError):
    """Machine frequencies left the configured band during a run."""

"""Exception types shared across the package."""


class ElConsensusError(Exception):
    """Base class for all package errors."""


class DimensionError(ElConsensusError, ValueError):
    """Array shapes do not agree."""


class ScheduleExhaustedError(ElConsensusError):
    """A non-repeating switching schedule was evaluated past its end."""


class CapabilityError(ElConsensusError):
    """A plant does not support the requested operation."""


class ConfigError(ElConsensusError):
    """Invalid or unparsable scenario configuration."""


class DivergenceError(ElConsensusError):
    """The simulated state became non-finite."""

    def __init__(self, t: float, component: str):
        super().__init__(f"state diverged at t={t:.6g} s in component {component!r}")
        self.t = t
        self.component = component

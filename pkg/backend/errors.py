"""
Exception hierarchy shared by the simulator modules.
"""

from typing import Optional


class SimulationError(Exception):
    """Base class for every error raised by the simulator"""


class ConfigurationError(SimulationError, ValueError):
    """Invalid scenario parameter.

    key names the offending field (dotted scenario key when known),
    line is the 1-based scenario file line when the value came from a file.
    """

    def __init__(self, key: str, message: str, line: Optional[int] = None):
        self.key = key
        self.line = line
        self.message = message
        super().__init__(str(self))

    def __str__(self):
        where = f"line {self.line}: " if self.line is not None else ""
        return f"{where}{self.key}: {self.message}"

    def __reduce__(self):
        return (ConfigurationError, (self.key, self.message, self.line))

    def located(self, key: str, line: Optional[int]) -> "ConfigurationError":
        return ConfigurationError(key, self.message, line)


class DomainError(SimulationError, ValueError):
    """Argument outside the domain of an operation"""


class ProtocolError(SimulationError, RuntimeError):
    """A state-chart or message protocol rule was broken - a simulation bug"""


class ReplicationError(SimulationError):
    """One replication of a batch failed"""

    def __init__(self, replication: int, seed: int, cause: BaseException):
        self.replication = replication
        self.seed = seed
        self.cause = cause
        super().__init__(f"replication {replication} (seed {seed}) failed: {cause}")

    def __reduce__(self):
        return (ReplicationError, (self.replication, self.seed, self.cause))

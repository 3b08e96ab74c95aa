"""Exception types shared across the simulator."""


class SimError(Exception):
    """Base class for simulator errors."""


class ConfigError(SimError):
    """Inconsistent or invalid configuration."""


class TimingViolation(SimError):
    """A command was scheduled before the bank could accept it."""


class OutOfRange(SimError):
    """Address or offset outside the modeled capacity."""


class EmptyResult(SimError):
    """A measurement pipeline produced nothing usable."""


class NotReproducible(SimError):
    """A previously observed flip no longer triggers under its base pattern."""


class NeverFlips(SimError):
    """Threshold search failed: the cell did not flip even at full duty."""


class AlwaysFlips(SimError):
    """Threshold search failed: the cell flipped at the lowest probed duty."""


class OutOfMemory(SimError):
    """Arena exhausted."""


class DoubleFree(SimError):
    """free() on an offset that is not live."""


class Infeasible(SimError):
    """No allocation plan can reach the requested placement."""


class DirectionMismatch(SimError):
    """Requested flip direction does not match the stored bit."""

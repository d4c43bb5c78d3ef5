"""Exception hierarchy shared by every gridlight module."""


class GridlightError(Exception):
    """Base class for all library errors."""


class DomainError(GridlightError, ValueError):
    """An argument lies outside the physical domain of an operation."""


class TopologyError(GridlightError, ValueError):
    """A lattice or optical graph failed validation."""


class NotReadyError(GridlightError, RuntimeError):
    """Probabilities were requested before the field finished propagating."""


class StateError(GridlightError, RuntimeError):
    """An entity was used in a lifecycle state that forbids the operation."""


class ResourceError(GridlightError, RuntimeError):
    """A brute-force enumeration would exceed its configured bound."""


class ConfigError(GridlightError, ValueError):
    """A scenario configuration is malformed or inconsistent."""


class OutputError(GridlightError, OSError):
    """Writing run outputs failed; the message names the path."""

"""Exception types raised across the package."""


class TPDError(Exception):
    """Base class for all package errors."""


class MaskedActionError(TPDError, ValueError):
    """An action was used in a state where it is masked out."""


class TerminalStateError(TPDError, ValueError):
    """A transition was requested from an absorbing terminal state."""


class DistributionError(TPDError, ValueError):
    """A probability row is negative or does not sum to one."""


class ConfigError(TPDError, ValueError):
    """Invalid configuration or hyperparameters."""


class ShapeError(TPDError, ValueError):
    """Arrays that must line up do not."""


class ClassificationError(TPDError, ValueError):
    """A transition is not part of the environment's support."""


class TaxonomyError(TPDError, KeyError):
    """An event is missing from a reward map."""


class ArtifactFormatError(TPDError):
    """A persisted table or sidecar could not be parsed."""

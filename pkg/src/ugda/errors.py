"""Exception types shared across the package."""


class UgdaError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(UgdaError, ValueError):
    """An operation was called with arguments violating its preconditions."""


class EmptyMaskError(UgdaError):
    """A nonempty segmentation mask was required but an empty one was given."""


class CheckpointError(UgdaError):
    """A checkpoint file is corrupt, incompatible, or version-mismatched."""


class ContractViolationError(UgdaError):
    """A training-contract rule was broken (e.g. adversarial loss on source items)."""

"""Exception types shared across the package.

The CLI maps these onto exit codes: ValidationError (and subclasses) -> 1,
NumericError and other runtime failures -> 2.
"""


class ValidationError(ValueError):
    """Invalid user-supplied input: bad levels, malformed vectors, bad config."""


class ConfigurationError(ValidationError):
    """A structurally invalid spec or configuration (wiring, resolutions, pairs)."""


class CapacityError(ValidationError):
    """The synthetic renderer cannot satisfy the requested layout at this resolution."""


class DataError(ValidationError):
    """Malformed manifest or dataset contents; message carries file/line context."""


class NumericError(RuntimeError):
    """Non-finite values where finite ones are required (inputs, losses, covariances)."""


class UsageError(RuntimeError):
    """An API called outside its contract (e.g. reconstruction loss without decoders)."""

"""Exception types shared across the library."""


class DbnMixError(Exception):
    """Base class for all library errors."""


class ShapeError(DbnMixError):
    """Operands have incompatible dimensions."""


class ContractError(DbnMixError):
    """An operation was called outside its contract (e.g. backward on a non-scalar)."""


class NumericError(DbnMixError):
    """A computation produced NaN or Inf; surfaced instead of propagated."""


class SpecError(DbnMixError):
    """A dataset specification is invalid (e.g. a class count rounds to zero)."""


class CapacityError(DbnMixError):
    """A requested subset exceeds the samples available in some class."""


class ParseError(DbnMixError):
    """A dataset file is malformed; message carries the offending line number."""


class ConfigError(DbnMixError):
    """A configuration value is out of range or an option combination is invalid."""


class DatasetError(DbnMixError):
    """A dataset violates a sampler precondition (e.g. an empty class)."""

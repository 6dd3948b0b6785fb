"""Exception hierarchy shared across the package."""


class CapsnewsError(Exception):
    """Base class for package errors."""


class DimensionError(CapsnewsError):
    """Tensor shapes do not conform; the message names the offending axes."""


class SequenceTooShortError(CapsnewsError):
    """Input sequence shorter than the first filter width."""


class ConfigError(CapsnewsError):
    """Invalid or inconsistent configuration value."""


class FormatError(CapsnewsError):
    """Malformed input file (dataset, embedding matrix, store, checkpoint)."""


class UnknownIdError(CapsnewsError):
    """Example id missing from a precomputed embedding store."""


class ContractViolation(CapsnewsError):
    """A runtime value broke a documented numeric contract."""


class HashMismatchError(CapsnewsError):
    """Recorded resource hashes disagree with the resources in use."""


class TrainingDiverged(CapsnewsError):
    """Loss became non-finite; message carries epoch/batch diagnostics."""

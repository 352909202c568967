"""Exception hierarchy shared across the package."""


class SynthcastError(Exception):
    """Base class for all package errors."""


class DomainError(SynthcastError, ValueError):
    """An argument is outside the valid domain of an operation."""


class StructuralError(SynthcastError):
    """A netlist or graph violates a structural requirement (cycle, multi-driver, ...)."""


class ConsistencyError(SynthcastError):
    """Two artifacts that must agree (graph/report, pre/post pair) do not."""


class LibraryError(SynthcastError):
    """A cell kind or library file is missing or malformed."""


class CheckpointError(SynthcastError):
    """A model checkpoint is malformed or does not match its normalization stats."""


class PipelineError(SynthcastError):
    """Pipeline stage inputs do not line up (fingerprint mismatch, missing artifact)."""


class NumericError(SynthcastError):
    """A numeric failure during training or evaluation (non-finite loss, ...)."""

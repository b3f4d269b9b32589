"""Exception taxonomy shared across the engine.

Every error carries a short machine-parsable ``category`` so the CLI can
emit one-line diagnostics and a stable exit code.
"""


class EngineError(Exception):
    category = "internal"


class InvalidArgumentError(EngineError):
    category = "invalid-argument"


class InvalidStateError(EngineError):
    category = "invalid-state"


class FormatError(EngineError):
    """Corrupt or incompatible on-disk artifact (magic, version, CRC, shape)."""

    category = "format"


class CapacityError(EngineError):
    """A sampler request exceeds what the dataset split can provide."""

    category = "capacity"


class DeterminismError(EngineError):
    category = "determinism"


class NonFiniteError(EngineError):
    """NaN or Inf appeared in tensor values or gradients."""

    category = "non-finite"


class ConfigError(EngineError):
    category = "config"

"""Exception types shared across the package."""


class SentinelError(Exception):
    """Base class for all package errors."""


class SchemaError(SentinelError):
    """Document structure is wrong: missing field, unknown field, bad type."""


class ValidationError(SentinelError):
    """Structurally valid input violates a domain invariant."""


class EndOfScenario(SentinelError):
    """Attempted to step past the scenario duration."""


class OutOfGrid(SentinelError):
    """World point falls outside the grid extent."""


class TickMismatch(SentinelError):
    """Grid tick and ego-motion span disagree."""


class EmptyInput(SentinelError):
    """Operation requires at least one element."""


class SpecMismatch(SentinelError):
    """Grids with different specs cannot be combined."""


class MalformedMessage(SentinelError):
    """Wire buffer is truncated or has a bad magic/length."""


class UnsupportedVersion(SentinelError):
    """Wire schema version is not one this build understands."""


class MissingPerception(SentinelError):
    """Input bundle requires a perception product."""


class EmptyQuery(SentinelError):
    """Active query text must be non-empty."""


class LlmTimeout(SentinelError):
    """LLM client did not answer within the configured timeout."""


class ParseError(SentinelError):
    """LLM response does not follow the step/final protocol."""


class TransportError(SentinelError):
    """LLM client could not reach its endpoint."""


class NoGroundTruth(SentinelError):
    """Metric asked to score a class with no ground-truth instances."""


class LengthMismatch(SentinelError):
    """Paired label sequences differ in length."""


class ConfigError(SentinelError):
    """Run configuration is invalid."""


class IoError(SentinelError):
    """A required input file is missing or unreadable."""

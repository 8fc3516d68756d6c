"""Exception hierarchy.

Every error carries a stable ``code`` so the command line can map it to a
machine-readable payload that does not change between versions.
"""


class BRWError(Exception):
    code = "brw_error"


# jump laws
class JumpLawError(BRWError, ValueError):
    code = "invalid_jump_law"


class AsymmetryError(JumpLawError):
    code = "asymmetry"


class NormalizationError(JumpLawError):
    code = "normalization"


class NegativeWeightError(JumpLawError):
    code = "negative_weight"


class ReducibilityError(JumpLawError):
    code = "reducible"


# numerics
class ResolutionError(BRWError, ValueError):
    code = "resolution"


class ToleranceNotReached(BRWError, ArithmeticError):
    code = "tolerance_not_reached"


class OverflowGuard(BRWError, OverflowError):
    code = "overflow_guard"


class StepFailure(BRWError, ArithmeticError):
    code = "step_failure"


class BoxTooSmall(BRWError, ValueError):
    code = "box_too_small"


class InsufficientSamples(BRWError, ValueError):
    code = "insufficient_samples"


# simulation / statistics
class ParticleCapExceeded(BRWError, RuntimeError):
    code = "particle_cap_exceeded"

    def __init__(self, message, labels=()):
        super().__init__(message)
        self.labels = tuple(labels)


class EmptyConditioningSet(BRWError, ValueError):
    code = "empty_conditioning_set"


class TooFewSurvivors(BRWError, ValueError):
    code = "too_few_survivors"


class CellLargerThanWindow(BRWError, ValueError):
    code = "cell_larger_than_window"


# configuration / cli
class ParseError(BRWError, ValueError):
    code = "parse_error"

    def __init__(self, message, line=None, field=None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line
        self.field = field


class ValidationError(BRWError, ValueError):
    """Config failed semantic validation; ``kind`` names the delegated check."""

    code = "validation_error"

    def __init__(self, message, kind=None, line=None, field=None):
        super().__init__(message)
        self.kind = kind
        self.line = line
        self.field = field


class UnknownSubcommand(BRWError, ValueError):
    code = "unknown_subcommand"

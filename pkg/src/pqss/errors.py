"""Exception hierarchy.

Every error carries the pipeline ``stage`` that raised it and, where one
applies, the ``condition`` of the construction that failed (for example
``"(2.3)"``).  ``exit_code`` is what the CLI returns for the error class.
"""


class PqssError(Exception):
    exit_code = 1
    kind = "error"

    def __init__(self, message, *, stage=None, condition=None, **details):
        super().__init__(message)
        self.stage = stage
        self.condition = condition
        self.details = details

    def __str__(self):
        msg = super().__str__()
        prefix = []
        if self.stage:
            prefix.append(f"[{self.stage}]")
        if self.condition:
            prefix.append(f"condition {self.condition} failed:")
        return " ".join(prefix + [msg])

    def with_stage(self, stage):
        if self.stage is None:
            self.stage = stage
        return self


# usage / configuration class (exit 1)

class ConfigError(PqssError):
    kind = "config"


class InvalidResolutionError(PqssError, ValueError):
    kind = "invalid-resolution"


class InvalidStripError(PqssError, ValueError):
    kind = "invalid-strip"


class MeshMismatchError(PqssError, ValueError):
    kind = "mesh-mismatch"


class BoundaryConditionError(PqssError, ValueError):
    kind = "boundary-condition"


class NonlinearityDomainError(PqssError, ValueError):
    kind = "domain"


class UnboundedNonlinearityError(PqssError, ValueError):
    kind = "unbounded-nonlinearity"


class DegenerateEigenfunctionError(PqssError, ValueError):
    kind = "degenerate-eigenfunction"


class UncertifiedPairError(PqssError, ValueError):
    kind = "uncertified-pair"


# hypothesis class (exit 2)

class HypothesisError(PqssError):
    exit_code = 2
    kind = "hypothesis"


class FlatnessViolationError(HypothesisError):
    kind = "flatness-violation"


class SpectralGapError(HypothesisError):
    kind = "spectral-gap"


# lambda class (exit 3)

class LambdaTooSmallError(PqssError):
    exit_code = 3
    kind = "lambda-too-small"

    def __init__(self, message, *, margin=None, **kw):
        super().__init__(message, **kw)
        self.margin = margin


class ThresholdUnreachableError(LambdaTooSmallError):
    kind = "threshold-unreachable"


# nonconvergence class (exit 4)

class NonconvergenceError(PqssError):
    exit_code = 4
    kind = "nonconvergence"

    def __init__(self, message, *, last=None, **kw):
        super().__init__(message, **kw)
        self.last = last


class MonotonicityBreakdownError(NonconvergenceError):
    kind = "monotonicity-breakdown"

    def __init__(self, message, *, iteration=None, **kw):
        super().__init__(message, **kw)
        self.iteration = iteration


class StripFailureError(NonconvergenceError):
    kind = "strip-failure"


class SupersolutionSearchError(NonconvergenceError):
    kind = "supersolution-search-failure"


class NoncomparabilityError(NonconvergenceError):
    kind = "noncomparability-failure"


# domain-too-large class (exit 5)

class DomainTooLargeError(PqssError):
    exit_code = 5
    kind = "domain-too-large"

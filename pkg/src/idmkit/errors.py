"""Exception hierarchy for idmkit.

Every error raised by the library derives from IdmError, so callers can
catch the whole family with one clause.  The CLI maps IdmError subclasses
to exit code 1 (domain failure) or 2 (usage / IO).
"""


class IdmError(Exception):
    """Base class for all idmkit errors."""


class InvalidArgument(IdmError, ValueError):
    """An argument violates a precondition (non-finite, wrong shape, ...)."""


class OutOfRange(IdmError, ValueError):
    """Requested value lies outside the reachable range of a function."""


class ModelViolation(IdmError):
    """A delay-model invariant does not hold (e.g. channel not strictly causal)."""


class NoCriticalTrain(ModelViolation):
    """The pulse recurrence has no fixed point below the minimum delay.

    Reported, not fatal: the narrow-bound constraint (c1) may simply fail
    for the given parameters.
    """


class BoundViolation(IdmError):
    """An adversarial delay offset falls outside the allowed envelope."""


class Infeasible(IdmError):
    """No parameter choice satisfies the requested sizing inequality."""


class FitFailed(IdmError):
    """Least-squares fit did not produce a usable delay function."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class CharacterizationFailed(IdmError):
    """The pulse-width search on an analog oracle did not converge."""


class Diverged(IdmError):
    """Event count exceeded the configured cap.  Carries the partial trace."""

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


class CausalityError(IdmError):
    """A computed output transition would have to retract an already
    released event.  Indicates the configuration leaves the engine's
    safe envelope (see README notes on negative delays)."""

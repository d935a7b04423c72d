"""Exception hierarchy.

Domain errors (bad arguments, unsupported configurations) derive from
:class:`DomainError`; numerical failures derive from :class:`NumericalFailure`.
The CLI maps the two families to distinct exit codes.
"""


class ArnoldError(Exception):
    """Base class for every error raised by this package."""


class DomainError(ArnoldError, ValueError):
    """An argument lies outside the domain of the operation."""


class UnsupportedPerturbation(DomainError):
    """A closed form was requested for a perturbation it does not cover."""


class NumericalFailure(ArnoldError, ArithmeticError):
    """A numerical procedure failed to reach its tolerance."""

    def __init__(self, message, *, stage=None, best=None):
        super().__init__(message)
        self.stage = stage
        self.best = best


class NonFinite(NumericalFailure):
    """The integrated state left the representable range."""


class NonConvergence(NumericalFailure):
    """A truncated integral did not meet its tail tolerance."""


class NewtonDivergence(NumericalFailure):
    """Newton refinement failed from every seed."""


class ShootingFailure(NumericalFailure):
    """A shooting problem did not hit its target."""


class NoCriticalPoint(NumericalFailure):
    """A splitting function has no usable critical point."""


class ChainBroken(NumericalFailure):
    """A transition chain could not be completed."""

    def __init__(self, index, message=None, **kw):
        super().__init__(message or f"link {index} failed", **kw)
        self.index = index


class MinimizationFailure(NumericalFailure):
    """A minimization stalled above its tolerance."""


class EscapedBox(NumericalFailure):
    """An iterate left the open box (-1, 1)^2 of junction variables."""


class JunctionDefect(NumericalFailure):
    """Velocity jump at a junction exceeds tolerance."""

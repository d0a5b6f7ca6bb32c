"""Exception hierarchy.

The command line maps :class:`InputError` to exit code 2,
:class:`PreconditionError` to 3 and :class:`ToleranceError` to 4.
"""


class MetcurError(Exception):
    exit_code = 1


class InputError(MetcurError, ValueError):
    """Malformed input: shapes, files, out-of-range parameters."""

    exit_code = 2


class PreconditionError(MetcurError):
    """A mathematical precondition of an operation does not hold."""

    exit_code = 3


class ToleranceError(MetcurError):
    """A computed certificate misses its requested tolerance."""

    exit_code = 4


class CarrierMeasureMismatch(PreconditionError):
    """A carrier puts mass on a point where the reference measure vanishes."""


class NotLipschitz(PreconditionError):
    pass


class DependentDerivations(PreconditionError):
    """Raised when a Gram-Schmidt step leaves a derivation vanishing on positive measure."""

    def __init__(self, msg, mask=None):
        super().__init__(msg)
        self.mask = mask


class PseudodualError(PreconditionError):
    pass


class ZeroCurrent(PreconditionError):
    pass


class CoverageGap(ToleranceError):
    def __init__(self, msg, uncovered=None):
        super().__init__(msg)
        self.uncovered = uncovered


class DirectionLost(PreconditionError):
    """Filling a gap of a fragment leaves the prescribed cone."""

    def __init__(self, msg, gap=None):
        super().__init__(msg)
        self.gap = gap


class NotNormalType(PreconditionError):
    """The derivation of a representation is not a density times a normal derivation."""


class DirectionFailure(ToleranceError):
    """Edges whose derivative is not a positive multiple of the vector field."""

    def __init__(self, msg, edges=None, fail_mass=0.0, tests=None):
        super().__init__(msg)
        self.edges = edges or []
        self.fail_mass = fail_mass
        self.tests = tests or []

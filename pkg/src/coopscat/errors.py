"""Exception hierarchy shared across the package."""


class CoopScatError(Exception):
    """Base class for all package errors."""


class ContractViolation(CoopScatError, ValueError):
    """An input violates a documented precondition."""


class ThresholdDegeneracy(CoopScatError):
    """A diffraction order sits on its threshold (kappa_m -> 0)."""

    def __init__(self, msg, order=None):
        super().__init__(msg)
        self.order = order


class ConvergenceFailure(CoopScatError):
    """A lattice sum or extrapolation did not reach the requested tolerance."""

    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}


class ConsistencyFailure(CoopScatError):
    """Two independent evaluations of the same quantity disagree."""


class SingularResponse(CoopScatError):
    """The effective-polarizability bracket is not invertible."""


class WrongRegime(CoopScatError):
    """Operation requires the single-order regime (or vice versa)."""

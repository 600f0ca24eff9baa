"""Coupled-dipole scattering engine for square arrays of point emitters.

Units: lengths in resonance wavelengths (lambda_a = 1), rates in single-emitter
radiative widths (gamma = 1), fields in incident peak amplitude.
"""

from .errors import (
    CoopScatError,
    ContractViolation,
    ThresholdDegeneracy,
    ConvergenceFailure,
    ConsistencyFailure,
    SingularResponse,
    WrongRegime,
)

__version__ = "0.1.0"

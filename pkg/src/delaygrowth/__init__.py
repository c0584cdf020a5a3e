"""Growth rate of a linear stochastic delay equation with multiplicative delayed noise.

Discretized dX(t) = X(t - 1) dW(t) on segments over [-1, 0]: renormalized
propagation, growth-rate estimators, a coupling diagnostic and the empirical
invariant measure of the projected process.
"""
__version__ = "0.1.0"

from .segment import (
    Segment, UnitSegment, SegmentError, ResolutionMismatchError, ZeroStateError,
    sup_norm, l2_norm, m2_norm, project, functional_f, functional_g, functional_psi, axpy,
)
from .integrator import (
    ExtinctStateError, NoiseStream, NoiseBlock, PathState, draw_noise, advance_unit,
    advance_unit_renormalized, advance_coupled_unit,
)
from .initial import InitialConditionError, make_eta

__all__ = [
    "Segment", "UnitSegment", "SegmentError", "ResolutionMismatchError", "ZeroStateError",
    "sup_norm", "l2_norm", "m2_norm", "project", "functional_f", "functional_g",
    "functional_psi", "axpy", "ExtinctStateError", "NoiseStream", "NoiseBlock", "PathState",
    "draw_noise", "advance_unit", "advance_unit_renormalized", "advance_coupled_unit",
    "InitialConditionError", "make_eta",
]

"""Finite metric currents, Weaver-style derivations and Alberti representations."""
from .errors import (InputError, MetcurError, PreconditionError, ToleranceError)
from .space import FnDict, MetricSpace
from .fragments import Fragment
from .derivations import Derivation, pseudodual_basis
from .currents import FlowCurrent, FragmentCurrent, PointCurrent, Precurrent, is_normal, mass_estimate
from .exterior import KVector, represent_current
from .alberti import AlbertiRep, current_to_alberti
from .approx import approximate_by_normal
from .renorm import GeneratingSet, renorm_distance

__version__ = "0.1.0"

__all__ = [
    "MetcurError", "InputError", "PreconditionError", "ToleranceError",
    "MetricSpace", "FnDict", "Fragment", "Derivation", "pseudodual_basis",
    "PointCurrent", "FlowCurrent", "FragmentCurrent", "Precurrent", "mass_estimate", "is_normal",
    "KVector", "represent_current", "AlbertiRep", "current_to_alberti", "approximate_by_normal",
    "GeneratingSet", "renorm_distance",
]

"""Relaxation patterns, inverse subordinators and semi-Markov chains.

Subpackages are imported lazily by name; the most used entry points are
re-exported here.
"""

from .bernstein import (
    Custom,
    DistributedOrder,
    LevyTriplet,
    Linear,
    Stable,
    Tempered,
    TemperedKilled,
    cm_probe,
    conjugate,
    make_family,
    tail,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    DomainError,
    ExtensionNeeded,
    InversionError,
    ParameterError,
    RelaxkitError,
)
from .laplace import InversionConfig, invert_checked, stehfest_invert, talbot_invert
from .mittag_leffler import mittag_leffler, ml_two_param
from .relaxation import (
    RelaxationCurve,
    apply_Df,
    asymptotic_ratio,
    relax_transform,
    solve_adjoint_cq,
    solve_backward_cq,
)

__version__ = "0.1.0"

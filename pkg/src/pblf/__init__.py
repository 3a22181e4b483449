"""Progressive barrier Lyapunov function (p-BLF) backstepping control.

Submodules: :mod:`barrier`, :mod:`plant`, :mod:`controller`, :mod:`sim`,
:mod:`verify`, :mod:`experiment` and the :mod:`cli` entry point.
"""

from .barrier import BarrierKind, BarrierParams
from .controller import Controller, ControllerConfig, Coupling, Design
from .errors import (
    ConfigError,
    ConstraintBreach,
    DomainError,
    InadmissibleInitialCondition,
    NonFiniteError,
    NonFiniteState,
    PBLFError,
)
from .plant import ReferenceSignal, StrictFeedbackModel, paper_plant, paper_reference
from .sim import IntegratorConfig, TrajectoryRecord, metrics, simulate_x_space, simulate_z_space

__version__ = "0.1.0"

__all__ = [
    "BarrierKind", "BarrierParams", "Controller", "ControllerConfig", "Coupling", "Design",
    "ConfigError", "ConstraintBreach", "DomainError", "InadmissibleInitialCondition",
    "NonFiniteError", "NonFiniteState", "PBLFError", "ReferenceSignal", "StrictFeedbackModel",
    "paper_plant", "paper_reference", "IntegratorConfig", "TrajectoryRecord", "metrics",
    "simulate_x_space", "simulate_z_space",
]

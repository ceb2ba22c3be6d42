"""Safety filters for control-affine systems and the undesired equilibria they create."""
from .barriers import (CassiniBarrier, HalfPlaneBarrier, PiecewiseBarrier, PolarBarrier, QuadFormBarrier,
                       SphereBarrier, UnionCirclesBarrier, safe_set_topology)
from .equilibria import EquilibriumRecord, ScanConfig, find_undesired_equilibria
from .errors import ConfigError, DegenerateConstraintError, NumericalError
from .model import ClassKInf, ControllerDef, ProblemInstance, SystemDef, WeightSpec
from .safety import closed_loop_field, filter_input
from .sim import IntegratorCfg, integrate, integrate_batch

__version__ = "0.1.0"

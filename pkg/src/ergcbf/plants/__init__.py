from .acc import acc_plant, headway_input_coefficients, relative_degree
from .double_integrator import (
    DoubleIntegrator,
    DoubleIntegratorGains,
    DoubleIntegratorState,
    UnstableGainsError,
    di_controller,
)
from .hocbf import hocbf_controller
from .integrate import NumericalFailure, rk4_step
from .quadrotor import (
    ControllerError,
    Quadrotor,
    QuadrotorParams,
    QuadrotorState,
    quad_geometric_controller,
)

__all__ = [
    "ControllerError", "DoubleIntegrator", "DoubleIntegratorGains", "DoubleIntegratorState",
    "NumericalFailure", "Quadrotor", "QuadrotorParams", "QuadrotorState", "UnstableGainsError",
    "acc_plant", "di_controller", "headway_input_coefficients", "hocbf_controller",
    "quad_geometric_controller", "relative_degree", "rk4_step",
]

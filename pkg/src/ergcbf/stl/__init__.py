from .barrier import (
    BarrierCompilationError,
    FormulaBarrier,
    TimeVaryingBarrier,
    compile_barrier,
    smooth_min,
)
from .formula import (
    HALFSPACE,
    REACH,
    STAY,
    Always,
    And,
    Atom,
    Eventually,
    FormulaError,
    Predicate,
    TrueFormula,
    Until,
    horizon,
    to_text,
)
from .monitor import InsufficientDataError, Signal, completion_time, robustness
from .parser import StlSyntaxError, parse_stl

__all__ = [
    "Always", "And", "Atom", "BarrierCompilationError", "Eventually", "FormulaBarrier",
    "FormulaError", "HALFSPACE", "InsufficientDataError", "Predicate", "REACH", "STAY",
    "Signal", "StlSyntaxError", "TimeVaryingBarrier", "TrueFormula", "Until",
    "compile_barrier", "completion_time", "horizon", "parse_stl", "robustness",
    "smooth_min", "to_text",
]

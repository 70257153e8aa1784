"""Causal evolution equations (delay, neutral, integro-differential) solved by
Picard iteration in exponentially weighted spaces, with certified error bounds."""

from .contraction import (
    FixedPointTrace,
    a_posteriori_bound,
    a_priori_bound,
    fixed_point,
    lifted_fixed_point,
    perturbation_bound,
)
from .errors import (
    DDEFixError,
    DimensionError,
    DivergenceError,
    InvalidInputError,
    NonCausalError,
    NotContractionError,
    NotEventuallyContractingError,
    SpecError,
)
from .grid import (
    Grid,
    GridFunction,
    Weight,
    derivative,
    quadrature_tolerance,
    resample,
    sobolev_constant,
    weighted_norm,
)
from .operators import (
    AntiDeriv,
    CoeffMul,
    Compose,
    Forcing,
    HistoryMap,
    KernelConv,
    NormBound,
    OperatorExpr,
    Pointwise,
    Scale,
    Shift,
    Sum,
    Table,
    antiderivative,
    apply,
    empirical_operator_norm,
    forcing_antiderivative,
    lipschitz_bound,
)
from .solver import (
    Problem,
    SolveReport,
    check_causality,
    compare_nu,
    select_nu,
    solve,
    solve_ivp,
)
from .specfile import ProblemSpec, load_spec

__version__ = "0.1.0"

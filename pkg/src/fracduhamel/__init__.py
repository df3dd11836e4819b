"""Time-fractional Cauchy problems on periodic grids via the fractional Duhamel principle."""
from .fractime import (
    FracCalcError,
    FractionalOrder,
    Monomial,
    Polynomial,
    TimeGrid,
    TimeSeries,
    caputo,
    check_shift_relation,
    frac_integral,
    riemann_liouville,
)
from .mittag_leffler import MittagLefflerError, gamma_fn, ml, ml_array, ml_map, rgamma
from .solver import (
    CauchyProblem,
    QuadratureError,
    ResidualReport,
    Solution,
    SolverError,
    SourceTerm,
    classic_duhamel_check,
    duhamel_solution,
    full_solve,
    homogeneous_solution,
    neumann_series_solution,
    residual_norm,
    stage_solution,
    voc_oracle,
)
from .spectral import Field, SpaceGrid, SpectralError, SymbolSpec

__version__ = "0.1.0"

__all__ = [
    "FracCalcError",
    "FractionalOrder",
    "Monomial",
    "Polynomial",
    "TimeGrid",
    "TimeSeries",
    "caputo",
    "check_shift_relation",
    "frac_integral",
    "riemann_liouville",
    "CauchyProblem",
    "QuadratureError",
    "ResidualReport",
    "Solution",
    "SolverError",
    "SourceTerm",
    "classic_duhamel_check",
    "duhamel_solution",
    "full_solve",
    "homogeneous_solution",
    "neumann_series_solution",
    "residual_norm",
    "stage_solution",
    "voc_oracle",
    "MittagLefflerError",
    "gamma_fn",
    "ml",
    "ml_array",
    "ml_map",
    "rgamma",
    "Field",
    "SpaceGrid",
    "SpectralError",
    "SymbolSpec",
]

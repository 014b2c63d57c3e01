"""Numerics for radial solutions of Delta^{2m} u = e^u and Delta^2 u = -u^{-p}."""

from .errors import (
    BadRadius,
    BracketFailure,
    ConfigError,
    IndeterminateShot,
    InvalidSpec,
    NonfiniteState,
    NonpositiveU,
    NotSeparatrix,
    NotSurvived,
    OutOfRange,
    PolylabError,
    TailNotIntegrable,
)
from .radial_system import (
    Exp,
    NegPower,
    OperatorPolynomial,
    ProblemSpec,
    StateVector,
    closed_form_n4,
    emden_fowler_polynomial,
    radial_rhs,
    taylor_start,
)
from .integrator import (
    IntegrationControls,
    Termination,
    TerminationKind,
    Trajectory,
    evaluate,
    integrate,
    quadrature_weighted,
)
from .shooting import (
    Classification,
    ClassificationKind,
    SeparatrixResult,
    classify,
    find_separatrix,
    scan_n2,
    sign_crossing_check,
)
from .asymptotics import (
    ExpansionReport,
    check_supersolution,
    expansion_coefficients,
    integral_representation_check,
    log_limit_check,
)
from .negpower import (
    ExtinctionRecord,
    comparison_limit_check,
    extinction_scan,
    growth_bounds_check,
    lemma_implication_check,
)

__version__ = "0.1.0"

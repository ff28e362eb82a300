"""Stratified nilpotent lifting of the model hypersurfaces and the
Cauchy-Szego commutator laboratory built on top of it."""

__version__ = "0.1.0"

from .lie_core import (
    AlgebraElement,
    AntisymmetryViolation,
    DimensionMismatch,
    GradingViolation,
    JacobiViolation,
    LieAlgebraSpec,
    NonpositiveLambda,
    new_from_structure_constants,
)
from .lift import (
    SecondKindChart,
    bch_product,
    bracket_center_coefficient,
    build_chart,
    general_lift_derivative,
    lifted_fields,
)
from .vfield import (
    ClosureOverflow,
    KTooSmall,
    PolyVectorField,
    evaluate,
    generate_algebra,
    generators,
    pvf_bracket,
)

__all__ = [
    "AlgebraElement",
    "AntisymmetryViolation",
    "ClosureOverflow",
    "DimensionMismatch",
    "GradingViolation",
    "JacobiViolation",
    "KTooSmall",
    "LieAlgebraSpec",
    "NonpositiveLambda",
    "PolyVectorField",
    "SecondKindChart",
    "bch_product",
    "bracket_center_coefficient",
    "build_chart",
    "evaluate",
    "general_lift_derivative",
    "generate_algebra",
    "generators",
    "lifted_fields",
    "new_from_structure_constants",
    "pvf_bracket",
]

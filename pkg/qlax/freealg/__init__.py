from qlax.freealg.backlund import (
    BacklundReport,
    Branch,
    Classification,
    MismatchReport,
    backlund_report,
    darboux_space_equations,
    darboux_time_equations,
    derive_bti,
    derive_casimir,
    golden_texts,
)
from qlax.freealg.expr import Equation, EquationSet, GenSymbol, NCExpr, Species, format_expr
from qlax.freealg.rewrite import normal_order, numeric_crosscheck

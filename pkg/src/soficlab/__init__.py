"""Executable microstate counting for sofic entropy of shift systems."""

__version__ = "0.1.0"

from .groups import (  # noqa: E402
    FiniteAbelian,
    FreeGroup,
    IntegerLattice,
    Integers,
    SoficApprox,
    cyclic_approx,
    fix_defect,
    hom_defect,
    random_free_approx,
    torus_approx,
)
from .systems import EmpiricalLaw, Observable, Refinement, ShiftSystem, join, law, translate  # noqa: E402
from .microstates import (  # noqa: E402
    APQuery,
    ap_count_exact,
    ap_member,
    ap_sample_estimate,
    empirical_F_law,
    rel_ap_count,
    rel_ap_sup,
)
from .entropy import cond_shannon, shannon, stirling_curve, xi_count  # noqa: E402

__all__ = [
    "__version__",
    "FiniteAbelian", "FreeGroup", "IntegerLattice", "Integers", "SoficApprox",
    "cyclic_approx", "fix_defect", "hom_defect", "random_free_approx", "torus_approx",
    "EmpiricalLaw", "Observable", "Refinement", "ShiftSystem", "join", "law", "translate",
    "APQuery", "ap_count_exact", "ap_member", "ap_sample_estimate", "empirical_F_law",
    "rel_ap_count", "rel_ap_sup",
    "cond_shannon", "shannon", "stirling_curve", "xi_count",
]

"""Networked hydrogen-electrical microgrid planning compiled into the compact trilevel form."""

from .cases import golden_cases, small_case, synthetic_33bus, toy_case
from .compiler import Layout, build_compact_instance, compile_case, polygonal_quadratic_cut_set
from .metrics import (
    check_integrity,
    compute_die_value,
    compute_metrics,
    die_value,
    evaluate_plan,
    run_die_sensitivity,
    solution_from_result,
)
from .types import (
    CaseError,
    ComponentCatalog,
    DduCoefficients,
    DistributionNetwork,
    NestingWarning,
    NhempCase,
    PlanningMetrics,
    PlanningSolution,
    ScenarioSet,
    ZonePartition,
)

__all__ = [
    "CaseError", "ComponentCatalog", "DduCoefficients", "DistributionNetwork", "Layout", "NestingWarning",
    "NhempCase", "PlanningMetrics", "PlanningSolution", "ScenarioSet", "ZonePartition",
    "build_compact_instance", "check_integrity", "compile_case", "compute_die_value", "compute_metrics",
    "die_value", "evaluate_plan", "golden_cases", "polygonal_quadratic_cut_set", "run_die_sensitivity",
    "small_case", "solution_from_result", "synthetic_33bus", "toy_case",
]

from .bounds import TheoremBounds, lower_tau, theorem2_rhs, upper_tau
from .diagnostics import (
    DriftReport,
    MartingaleReport,
    drift_test,
    harvest_states,
    lemma1_check,
    lemma2_check,
    modified_share_path,
    survival_report,
)
from .separation import FofA, compute_f

__all__ = [
    "DriftReport", "FofA", "MartingaleReport", "TheoremBounds", "compute_f", "drift_test",
    "harvest_states", "lemma1_check", "lemma2_check", "lower_tau", "modified_share_path",
    "survival_report", "theorem2_rhs", "upper_tau",
]

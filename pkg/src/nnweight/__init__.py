"""Nearest-neighbor importance weighting.

Estimates moments of a target population from samples of a different,
biased population by weighting each sample with the fraction of target
draws it is nearest to.  Includes estimators for missing-at-random data
functionals and covariate-shift risk, a diagnostics suite, a config-driven
experiment runner exposed over HTTP, and a thin CLI client.
"""

from .covariate_shift import (
    Loss,
    Predictor,
    RiskEstimate,
    SplitSpec,
    constant_predictor,
    cross_validated_error,
    empirical_risk,
    estimate_test_error,
    fit_ridge,
    one_nn_empirical_risk,
    ridge_factory,
    select_hypothesis,
)
from .diagnostics import (
    BinnedCellStats,
    CheckResult,
    DiagnosticsReport,
    HolderConjugates,
    VarianceBoundResult,
    assumption_check,
    binned_cell_statistics,
    nn_discrepancy_moment,
    variance_bound_estimate,
    voronoi_limit_check,
)
from .distributions import (
    Beta,
    DistributionPair,
    FatCantorUniform,
    Gaussian,
    IntervalSet,
    Product,
    QuadratureError,
    QuadratureSpec,
    Uniform,
    density_at,
    density_ratio_at,
    fat_cantor_build,
    fat_cantor_contains,
    ratio_defined_at,
    ratio_power_integral,
    renyi_divergence,
    sample_points,
)
from .missing_data import (
    FunctionalEstimate,
    MARTable,
    Query,
    complete_case_functional,
    ingest_table,
    nn_weighted_functional,
    preprocess,
    synthetic_mar_table,
)
from .nn_index import NNIndex, PointSet, build_index
from .nn_measure import (
    CellProfile,
    MomentEstimate,
    MomentFunction,
    VoronoiWeights,
    cell_measure_profile,
    estimate_moment,
    make_moment_function,
    voronoi_weights,
)

__version__ = "0.1.0"

__all__ = [
    "Beta",
    "BinnedCellStats",
    "CellProfile",
    "CheckResult",
    "DiagnosticsReport",
    "DistributionPair",
    "FatCantorUniform",
    "FunctionalEstimate",
    "Gaussian",
    "HolderConjugates",
    "IntervalSet",
    "Loss",
    "MARTable",
    "MomentEstimate",
    "MomentFunction",
    "NNIndex",
    "PointSet",
    "Predictor",
    "Product",
    "QuadratureError",
    "QuadratureSpec",
    "Query",
    "RiskEstimate",
    "SplitSpec",
    "Uniform",
    "VarianceBoundResult",
    "VoronoiWeights",
    "assumption_check",
    "binned_cell_statistics",
    "build_index",
    "cell_measure_profile",
    "complete_case_functional",
    "constant_predictor",
    "cross_validated_error",
    "density_at",
    "density_ratio_at",
    "empirical_risk",
    "estimate_moment",
    "estimate_test_error",
    "fat_cantor_build",
    "fat_cantor_contains",
    "fit_ridge",
    "ingest_table",
    "make_moment_function",
    "nn_discrepancy_moment",
    "nn_weighted_functional",
    "one_nn_empirical_risk",
    "preprocess",
    "ratio_defined_at",
    "ratio_power_integral",
    "renyi_divergence",
    "ridge_factory",
    "sample_points",
    "select_hypothesis",
    "synthetic_mar_table",
    "variance_bound_estimate",
    "voronoi_limit_check",
    "voronoi_weights",
]

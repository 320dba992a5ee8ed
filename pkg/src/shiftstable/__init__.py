"""Shift-stable prediction on causal graphs with unstable edges.

The package decides which predictive distributions stay invariant when
marked mechanisms shift arbitrarily across environments, constructs the
stable choices available at each level of the conditioning / intervention /
counterfactual hierarchy, and quantifies what stability costs on linear
Gaussian structural causal models via exact covariance algebra and Monte
Carlo environment sampling.
"""

from .errors import (
    CapacityError,
    FitError,
    GraphError,
    ModelError,
    NoStableSolutionError,
    ParseError,
    QueryError,
    SpecError,
    UnsupportedError,
)
from .graphs import (
    BIDIRECTED,
    DIRECTED,
    CausalGraph,
    Edge,
    Path,
    SelectionDiagram,
    SeparationQuery,
    StabilityVerdict,
    Witness,
    active_unstable_paths,
    bidirected,
    d_separated,
    delete_edges,
    directed,
    edges_into,
    is_stable_conditional,
    mutilate_do,
    selection_stable,
    to_selection_diagram,
)
from .hierarchy import (
    HierarchyReport,
    PathDiff,
    PredictorSpec,
    RetainedPath,
    compare_retained_paths,
    convert_level2_to_level3,
    embed_level1_as_level2,
    enumerate_level1,
    enumerate_level2,
    hierarchy_report,
    level1,
    level2,
    level3,
    optimal_stable,
    retained_stable_paths,
    stable_for_spec,
)
from .scm import (
    AVDefinition,
    CovarianceMatrix,
    DataTable,
    FeatureBasis,
    FittedSpec,
    LinearGaussianSCM,
    LinearPredictor,
    counterfactual_covariance,
    counterfactual_functionals,
    covariance,
    extend_with_avs,
    fit_predictor,
    fit_scm_from_data,
    linear_scm,
    mse,
    oracle_predictor,
    predictor_for_spec,
    sample,
    stable_feature_basis,
)
from .robustness import (
    CoefficientPrior,
    EnvironmentDraw,
    EnvironmentPrior,
    EvalReport,
    LambdaSweepResult,
    StepwiseResult,
    TradeoffResult,
    coefficient_sweep,
    evaluate,
    stepwise_reincorporation,
    tradeoff_sweep,
)
from . import presets

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]

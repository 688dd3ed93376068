"""RSS-based blind indoor localization toolkit."""
from .channel import (
    CovarianceMatrix,
    PlmParams,
    build_covariance,
    distance,
    load_iq,
    mean_rss,
    rss_from_iq,
    sample_shadowing,
    simulate_rss,
)
from .dataset import (
    Dataset,
    NormStats,
    Sample,
    SplitSpec,
    apply_norm,
    compute_norm_stats,
    generate_synthetic,
    load_csv,
    save_csv,
    split,
)
from .estimators import (
    DnnEstimator,
    GridSpec,
    MleConfig,
    MleEstimator,
    MleGrid,
    ProximityEstimator,
    dnn_estimate,
    mle_estimate,
    mle_objective,
    proximity_estimate,
)
from .evaluation import EvalReport, evaluate, localization_error
from .mlp import MlpArch, MlpModel, TrainConfig, init_xavier, train
from .plm_fit import FitInput, FitResult, fit_ls, pool_fit_input
from .scenario import Point3, Scenario, Track, load_scenario, make_corridor_scenario, make_track, save_scenario

__version__ = "0.1.0"

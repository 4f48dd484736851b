"""Closed-loop cybersickness prediction and mitigation for VR telemetry.

Head-tracking streams are windowed into kinematic features, a from-scratch
random forest maps features to a 0..100 discomfort score, and a rule-based
controller trades foveated-rendering strength against field of view to keep
both the score and the framerate inside their budgets.
"""

from .controller import (
    Action,
    AdaptiveController,
    ComfortParams,
    ControllerConfig,
    Decision,
    DecisionRecord,
    apply_action,
    decide,
)
from .dataset import (
    FeatureScaler,
    LabeledDataset,
    align,
    read_labeled_csv,
    split,
    standardize,
    synth_dataset,
    write_labeled_csv,
)
from .errors import InsufficientDataError, ModelFormatError
from .forest import (
    DEFAULT_GRID,
    CybersicknessForest,
    GridSearchResult,
    Metrics,
    grid_search,
    kfold_indices,
    load_model,
    regression_metrics,
    save_model,
)
from .kinematics import (
    FEATURE_NAMES,
    FEATURE_SET_VERSION,
    N_FEATURES,
    features,
    window_features,
)
from .service import PROTOCOL_VERSION, ServiceConfig, TelemetryService
from .simulator import (
    FramerateModel,
    MotionProfile,
    Scenario,
    SessionLog,
    SicknessModel,
    compare_sessions,
    generate_motion,
    simulate_session,
)
from .telemetry import (
    FrameTiming,
    HeadSample,
    TelemetryStream,
    TelemetryWindow,
    iter_windows,
    resample,
    window_from_samples,
)
from .vrsq import VrsqScore, score as vrsq_score

__version__ = "0.1.0"

__all__ = [
    "Action", "AdaptiveController", "ComfortParams", "ControllerConfig",
    "Decision", "DecisionRecord", "apply_action", "decide",
    "FeatureScaler", "LabeledDataset", "align", "read_labeled_csv", "split",
    "standardize", "synth_dataset", "write_labeled_csv",
    "InsufficientDataError", "ModelFormatError",
    "DEFAULT_GRID", "CybersicknessForest", "GridSearchResult", "Metrics",
    "grid_search", "kfold_indices", "load_model", "regression_metrics",
    "save_model",
    "FEATURE_NAMES", "FEATURE_SET_VERSION", "N_FEATURES", "features",
    "window_features",
    "PROTOCOL_VERSION", "ServiceConfig", "TelemetryService",
    "FramerateModel", "MotionProfile", "Scenario", "SessionLog",
    "SicknessModel", "compare_sessions", "generate_motion", "simulate_session",
    "FrameTiming", "HeadSample", "TelemetryStream", "TelemetryWindow",
    "iter_windows", "resample", "window_from_samples",
    "VrsqScore", "vrsq_score",
    "__version__",
]

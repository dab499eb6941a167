"""Post-backbone classification and OOD detection toolkit.

Pipeline: clip penultimate activations at a percentile cutoff, score the
resulting logits with log-sum-exp energy, accept as in-distribution above
a retention-calibrated threshold; with EMA-smoothed training, SAR-style
augmentation, test-time augmentation, and mean-logit ensembling around it.
"""

from .augment import (
    AugmentSpec,
    GridPoolFeaturizer,
    TtaConfig,
    augment,
    cutout,
    flip,
    jitter,
    random_crop_resize,
    read_pgm,
    rotate,
    tta_predict,
    validate_image,
    write_pgm,
)
from .engine import (
    ID,
    OOD,
    Calibration,
    Decision,
    ReactConfig,
    calibrate_tau,
    decide,
    energy_score,
    ensemble_logits,
    fit_react_threshold,
    load_calibration,
    msp_score,
    react_clip,
    rectified_forward,
    retention_threshold,
    save_calibration,
)
from .errors import (
    CalibrationError,
    DataError,
    DomainError,
    FormatError,
    OodkitError,
    ShapeError,
    TruncationError,
)
from .metrics import EvalReport, accuracy, auroc, confusion_matrix, evaluate, fpr_at_tpr, save_report
from .tensorio import (
    LinearHead,
    read_fvec,
    read_labels_csv,
    read_matrix_csv,
    write_fvec,
    write_labels_csv,
    write_matrix_csv,
)
from .training import (
    EmaState,
    EpochStats,
    SyntheticSpec,
    TrainConfig,
    TrainResult,
    ema_update,
    generate_ood,
    generate_synthetic,
    heldout_mean,
    pack_head,
    softmax_xent_grad,
    train_head,
    unpack_head,
)

__version__ = "0.1.0"

__all__ = [
    "AugmentSpec",
    "Calibration",
    "CalibrationError",
    "DataError",
    "Decision",
    "DomainError",
    "EmaState",
    "EpochStats",
    "EvalReport",
    "FormatError",
    "GridPoolFeaturizer",
    "ID",
    "LinearHead",
    "OOD",
    "OodkitError",
    "ReactConfig",
    "ShapeError",
    "SyntheticSpec",
    "TrainConfig",
    "TrainResult",
    "TruncationError",
    "TtaConfig",
    "accuracy",
    "augment",
    "auroc",
    "calibrate_tau",
    "confusion_matrix",
    "cutout",
    "decide",
    "ema_update",
    "energy_score",
    "ensemble_logits",
    "evaluate",
    "fit_react_threshold",
    "flip",
    "fpr_at_tpr",
    "generate_ood",
    "generate_synthetic",
    "heldout_mean",
    "jitter",
    "load_calibration",
    "msp_score",
    "pack_head",
    "random_crop_resize",
    "react_clip",
    "read_fvec",
    "read_labels_csv",
    "read_matrix_csv",
    "read_pgm",
    "rectified_forward",
    "retention_threshold",
    "rotate",
    "save_calibration",
    "save_report",
    "softmax_xent_grad",
    "tta_predict",
    "train_head",
    "unpack_head",
    "validate_image",
    "write_fvec",
    "write_labels_csv",
    "write_matrix_csv",
    "write_pgm",
]

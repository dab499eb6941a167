"""Activation clipping, energy scoring, threshold calibration and fusion.

The detector works on penultimate features h and a linear head (W, b):
features are clipped element-wise at a cutoff c fitted as a percentile of
in-distribution activations, logits are W^T h + b on the clipped features,
and the score is the log-sum-exp of the logits (larger = more
in-distribution).  A sample is accepted as ID when its score strictly
exceeds tau, with tau picked so a target fraction of calibration samples
is retained.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import CalibrationError, DomainError, ShapeError
from .tensorio import LinearHead, atomic_write_text, validate_logits, validate_matrix

ID = "ID"
OOD = "OOD"

DEFAULT_PERCENTILE = 90.0
DEFAULT_RETENTION = 0.99


@dataclass(frozen=True)
class ReactConfig:
    """Clipping percentile plus the fitted cutoff (None until fitted)."""

    percentile_p: float = DEFAULT_PERCENTILE
    cutoff_c: float | None = None

    def __post_init__(self):
        if not (0.0 < self.percentile_p <= 100.0):
            raise DomainError(f"percentile must be in (0, 100], got {self.percentile_p}")
        if self.cutoff_c is not None and math.isnan(self.cutoff_c):
            raise DomainError("cutoff must not be NaN")


@dataclass(frozen=True)
class Calibration:
    """Score threshold tau and how well it met the retention target."""

    tau: float
    target_retention: float
    achieved_retention: float
    n_calibration: int

    @property
    def retention_warning(self) -> bool:
        return self.achieved_retention < self.target_retention - 0.005


@dataclass(frozen=True)
class Decision:
    """Per-sample verdict; predicted_class is meaningful only for ID verdicts."""

    verdict: str
    score: float
    predicted_class: int


def validate_scores(scores, name: str = "scores") -> np.ndarray:
    arr = np.asarray(scores, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite entries")
    return arr


def _check_cutoff(c: float) -> float:
    c = float(c)
    if math.isnan(c):
        raise DomainError("cutoff must not be NaN")
    if c == -math.inf:
        raise DomainError("cutoff must be a real number or +inf")
    return c


def react_clip(features, c: float) -> np.ndarray:
    """Truncate every activation above ``c``: out[i][j] = min(features[i][j], c)."""
    arr = validate_matrix(features, name="features")
    c = _check_cutoff(c)
    return np.minimum(arr, c)


def nearest_rank_index(n: int, p: float) -> int:
    """0-based index of the p-th percentile in an ascending sort of n values.

    Nearest-rank rule: ceil((p/100) * n) - 1, evaluated exactly so float
    noise can never shift the index.
    """
    if n <= 0:
        raise DomainError("nearest rank needs at least one value")
    if not (0.0 < p <= 100.0):
        raise DomainError(f"percentile must be in (0, 100], got {p}")
    k = math.ceil(Fraction(p) * n / 100)
    return k - 1


def fit_react_threshold(id_features, p: float = DEFAULT_PERCENTILE) -> float:
    """Nearest-rank p-th percentile over all entries of the ID feature matrix."""
    arr = validate_matrix(id_features, name="id_features")
    flat = arr.ravel()
    if flat.size == 0:
        raise CalibrationError("cannot fit a clipping cutoff on an empty feature matrix")
    idx = nearest_rank_index(flat.size, p)
    return float(np.sort(flat)[idx])


def rectified_forward(features, head: LinearHead, c: float = math.inf) -> np.ndarray:
    """Logits of the head on clipped features; c=+inf reproduces the plain forward."""
    arr = validate_matrix(features, name="features")
    if arr.shape[1] != head.feature_dim:
        raise ShapeError(
            f"feature dim {arr.shape[1]} does not match head dim {head.feature_dim}"
        )
    clipped = react_clip(arr, c)
    return clipped @ head.weights + head.bias


def energy_score(logits) -> np.ndarray:
    """Row-wise log-sum-exp of the logits, max-shifted so large logits cannot overflow.

    Larger score means more in-distribution.
    """
    arr = validate_matrix(logits, name="logits", min_cols=1)
    if arr.shape[0] == 0:
        return np.zeros(0, dtype=np.float64)
    shift = arr.max(axis=1)
    return shift + np.log(np.exp(arr - shift[:, None]).sum(axis=1))


def msp_score(logits) -> np.ndarray:
    """Maximum softmax probability per row (baseline score, larger = more ID)."""
    arr = validate_logits(logits)
    if arr.shape[0] == 0:
        return np.zeros(0, dtype=np.float64)
    shifted = arr - arr.max(axis=1, keepdims=True)
    probs = np.exp(shifted)
    probs /= probs.sum(axis=1, keepdims=True)
    return probs.max(axis=1)


def retention_threshold(scores, retention_q: float) -> float:
    """Largest threshold keeping a fraction ``retention_q`` of scores strictly above.

    Nearest-rank rule shared by tau calibration and the FPR-at-TPR metric:
    the k-th smallest score with k = floor(n * (1 - q)) computed exactly,
    or -inf when k = 0.
    """
    arr = validate_scores(scores)
    if arr.size == 0:
        raise CalibrationError("cannot pick a threshold from an empty score set")
    if not (0.0 < retention_q <= 1.0):
        raise DomainError(f"retention must be in (0, 1], got {retention_q}")
    k = math.floor(arr.size * (1 - Fraction(retention_q)))
    if k == 0:
        return -math.inf
    return float(np.sort(arr)[k - 1])


def calibrate_tau(train_scores, retention_q: float = DEFAULT_RETENTION) -> Calibration:
    """Pick tau so that a fraction ``retention_q`` of calibration scores stays ID.

    Retention counts scores strictly greater than tau; a degenerate sample
    (heavy ties) can therefore land below target, which raises a warning
    instead of failing.
    """
    scores = validate_scores(train_scores, name="train_scores")
    tau = retention_threshold(scores, retention_q)
    achieved = float(np.mean(scores > tau))
    cal = Calibration(
        tau=tau,
        target_retention=float(retention_q),
        achieved_retention=achieved,
        n_calibration=int(scores.size),
    )
    if cal.retention_warning:
        warnings.warn(
            f"calibration retained {achieved:.4f} < target {retention_q:.4f} "
            f"(ties at tau={tau!r} are rejected)",
            stacklevel=2,
        )
    return cal


def decide(scores, logits, tau: float) -> list[Decision]:
    """Per-sample verdicts: ID iff score > tau, OOD otherwise (ties are OOD).

    The predicted class is the argmax of the logit row, ties broken toward
    the lowest class index.
    """
    s = validate_scores(scores)
    l = validate_logits(logits)
    if s.shape[0] != l.shape[0]:
        raise ShapeError(f"{s.shape[0]} scores vs {l.shape[0]} logit rows")
    tau = float(tau)
    if math.isnan(tau):
        raise DomainError("tau must not be NaN")
    classes = np.argmax(l, axis=1)
    return [
        Decision(
            verdict=ID if s[i] > tau else OOD,
            score=float(s[i]),
            predicted_class=int(classes[i]),
        )
        for i in range(s.shape[0])
    ]


def ensemble_logits(per_model_logits) -> np.ndarray:
    """Element-wise arithmetic mean of the member logit matrices."""
    mats = [validate_logits(m, name=f"member {i}") for i, m in enumerate(per_model_logits)]
    if not mats:
        raise DomainError("ensemble needs at least one logit matrix")
    shape = mats[0].shape
    for i, m in enumerate(mats[1:], start=1):
        if m.shape != shape:
            raise ShapeError(f"member {i} shape {m.shape} != member 0 shape {shape}")
    return np.mean(np.stack(mats, axis=0), axis=0)


def save_calibration(path, react: ReactConfig, calibration: Calibration) -> None:
    """Persist the fitted cutoff and threshold as a plain-text key=value file."""
    if react.cutoff_c is None:
        raise CalibrationError("cannot persist an unfitted clipping cutoff")
    lines = [
        f"tau={calibration.tau!r}",
        f"cutoff_c={react.cutoff_c!r}",
        f"percentile_p={react.percentile_p!r}",
        f"target_retention={calibration.target_retention!r}",
        f"achieved_retention={calibration.achieved_retention!r}",
        f"n_calibration={calibration.n_calibration}",
    ]
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_calibration(path) -> tuple[ReactConfig, Calibration]:
    """Read back a calibration file written by :func:`save_calibration`."""
    values: dict[str, str] = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise CalibrationError(f"{path}: malformed line {line!r}")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    required = (
        "tau",
        "cutoff_c",
        "percentile_p",
        "target_retention",
        "achieved_retention",
        "n_calibration",
    )
    missing = [k for k in required if k not in values]
    if missing:
        raise CalibrationError(f"{path}: missing keys {missing}")
    try:
        react = ReactConfig(
            percentile_p=float(values["percentile_p"]),
            cutoff_c=float(values["cutoff_c"]),
        )
        calibration = Calibration(
            tau=float(values["tau"]),
            target_retention=float(values["target_retention"]),
            achieved_retention=float(values["achieved_retention"]),
            n_calibration=int(values["n_calibration"]),
        )
    except ValueError as exc:
        raise CalibrationError(f"{path}: {exc}") from exc
    return react, calibration

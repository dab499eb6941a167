"""EMA parameter smoothing plus a toy softmax-regression trainer.

The trainer exists to exercise the smoothing and scheduling machinery end
to end on synthetic features: full-batch gradient descent on a linear
head, one EMA update per epoch, and a halve-on-plateau learning-rate
schedule.  The head weights start at a tiny seeded Gaussian (bias at
zero), so runs are bit-reproducible for a fixed config.

Parameter vectors are flat float64 arrays laid out as the head weight
matrix in row-major order followed by the bias.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .engine import energy_score
from .errors import DomainError, ShapeError
from .tensorio import LinearHead, atomic_write_text, validate_labels, validate_matrix

# A loss drop below this counts as "no decrease" for the plateau schedule.
IMPROVEMENT_EPS = 1e-12


@dataclass(frozen=True)
class EmaState:
    """Exponentially smoothed shadow of a flat parameter vector."""

    decay_beta: float
    shadow: np.ndarray
    step_count: int = 0

    def __post_init__(self):
        if not (0.0 <= self.decay_beta <= 1.0):
            raise DomainError(f"decay must be in [0, 1], got {self.decay_beta}")
        shadow = np.asarray(self.shadow, dtype=np.float64)
        if shadow.ndim != 1:
            raise ShapeError("shadow must be a flat vector")
        if not np.all(np.isfinite(shadow)):
            raise DomainError("shadow contains non-finite entries")
        object.__setattr__(self, "shadow", shadow)


def ema_update(state: EmaState, current_model) -> EmaState:
    """Blend the shadow toward the current weights: beta*shadow + (1-beta)*current."""
    current = np.asarray(current_model, dtype=np.float64)
    if current.shape != state.shadow.shape:
        raise ShapeError(
            f"parameter length {current.shape} does not match shadow {state.shadow.shape}"
        )
    beta = state.decay_beta
    shadow = beta * state.shadow + (1.0 - beta) * current
    return EmaState(decay_beta=beta, shadow=shadow, step_count=state.step_count + 1)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 50
    lr_halving_patience: int = 3
    ema_decay: float = 0.99
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise DomainError("learning rate must be positive")
        if self.epochs < 0:
            raise DomainError("epochs must be non-negative")
        if self.lr_halving_patience < 1:
            raise DomainError("patience must be a positive number of epochs")
        if not (0.0 <= self.ema_decay <= 1.0):
            raise DomainError("EMA decay must be in [0, 1]")


class EpochStats(NamedTuple):
    epoch: int
    loss: float
    lr: float


@dataclass(frozen=True)
class TrainResult:
    final_params: np.ndarray
    ema_params: np.ndarray
    history: list[EpochStats]
    feature_dim: int
    n_classes: int

    def final_head(self) -> LinearHead:
        return unpack_head(self.final_params, self.feature_dim, self.n_classes)

    def ema_head(self) -> LinearHead:
        return unpack_head(self.ema_params, self.feature_dim, self.n_classes)


def pack_head(head: LinearHead) -> np.ndarray:
    """Flatten a head into the canonical parameter layout (weights then bias)."""
    return np.concatenate([head.weights.ravel(), head.bias])


def unpack_head(params, feature_dim: int, n_classes: int) -> LinearHead:
    vec = np.asarray(params, dtype=np.float64)
    expected = feature_dim * n_classes + n_classes
    if vec.ndim != 1 or vec.shape[0] != expected:
        raise ShapeError(f"expected {expected} parameters, got {vec.shape}")
    weights = vec[: feature_dim * n_classes].reshape(feature_dim, n_classes)
    bias = vec[feature_dim * n_classes :]
    return LinearHead(weights=weights, bias=bias)


def softmax_xent_grad(logits, labels) -> tuple[np.ndarray, float]:
    """Gradient of the per-row cross-entropy wrt logits, and the mean loss.

    grad[i] = softmax(logits[i]) - onehot(labels[i]); the mean loss is
    computed as logsumexp(row) - row[label], which stays finite for
    saturated logits.
    """
    arr = validate_matrix(logits, name="logits", min_cols=2)
    y = validate_labels(labels, n_classes=arr.shape[1], n_rows=arr.shape[0])
    lse = energy_score(arr)
    probs = np.exp(arr - lse[:, None])
    grad = probs.copy()
    grad[np.arange(arr.shape[0]), y] -= 1.0
    loss = float(np.mean(lse - arr[np.arange(arr.shape[0]), y]))
    return grad, loss


def train_head(features, labels, cfg: TrainConfig) -> TrainResult:
    """Full-batch gradient descent on a linear softmax head with per-epoch EMA.

    The learning rate halves when the best loss seen so far (anchored at
    the pre-training loss) has not improved for ``lr_halving_patience``
    consecutive epochs.  History records the loss after each epoch's
    update together with the learning rate used by that epoch.
    """
    X = validate_matrix(features, name="features")
    n, m = X.shape
    if n == 0:
        raise DomainError("training needs at least one sample")
    y = validate_labels(labels, n_rows=n)
    n_classes = int(y.max()) + 1
    if n_classes < 2:
        raise DomainError("training needs at least two classes")
    counts = np.bincount(y, minlength=n_classes)
    if np.any(counts == 0):
        raise DomainError(f"class {int(np.argmin(counts))} has no samples")

    rng = np.random.default_rng(cfg.seed)
    weights = 0.01 * rng.standard_normal((m, n_classes))
    bias = np.zeros(n_classes)

    def mean_loss() -> float:
        _, loss = softmax_xent_grad(X @ weights + bias, y)
        return loss

    params = np.concatenate([weights.ravel(), bias])
    ema = EmaState(decay_beta=cfg.ema_decay, shadow=params.copy())
    lr = cfg.learning_rate
    best = mean_loss()
    stall = 0
    history: list[EpochStats] = []

    for epoch in range(1, cfg.epochs + 1):
        grad_logits, _ = softmax_xent_grad(X @ weights + bias, y)
        weights = weights - lr * (X.T @ grad_logits) / n
        bias = bias - lr * grad_logits.sum(axis=0) / n
        params = np.concatenate([weights.ravel(), bias])
        ema = ema_update(ema, params)
        loss = mean_loss()
        history.append(EpochStats(epoch=epoch, loss=loss, lr=lr))
        if loss < best - IMPROVEMENT_EPS:
            best = loss
            stall = 0
        else:
            stall += 1
            if stall >= cfg.lr_halving_patience:
                lr *= 0.5
                stall = 0

    return TrainResult(
        final_params=params,
        ema_params=ema.shadow,
        history=history,
        feature_dim=m,
        n_classes=n_classes,
    )


def write_history_csv(history, path) -> None:
    """Persist per-epoch training stats as ``epoch,loss,lr`` CSV."""
    lines = ["epoch,loss,lr"]
    lines.extend(f"{h.epoch},{h.loss!r},{h.lr!r}" for h in history)
    atomic_write_text(path, "\n".join(lines) + "\n")


@dataclass(frozen=True)
class SyntheticSpec:
    """Gaussian class blobs: one isotropic cloud per class around its mean."""

    n_classes: int
    feature_dim: int
    means: np.ndarray  # (n_classes, feature_dim)
    std: float
    per_class: int
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 2:
            raise DomainError("need at least two classes")
        if self.per_class < 1:
            raise DomainError("need at least one sample per class")
        if self.std <= 0:
            raise DomainError("std must be positive")
        means = validate_matrix(self.means, name="means")
        if means.shape != (self.n_classes, self.feature_dim):
            raise ShapeError(
                f"means shape {means.shape} != ({self.n_classes}, {self.feature_dim})"
            )
        for i in range(self.n_classes):
            for j in range(i + 1, self.n_classes):
                if np.array_equal(means[i], means[j]):
                    raise DomainError(f"class means {i} and {j} coincide")
        object.__setattr__(self, "means", means)

    @classmethod
    def well_separated(
        cls,
        n_classes: int,
        feature_dim: int,
        separation: float = 6.0,
        std: float = 1.0,
        per_class: int = 100,
        seed: int = 0,
    ) -> "SyntheticSpec":
        """Axis-aligned means: class i sits at separation * e_i."""
        if feature_dim < n_classes:
            raise DomainError("axis-aligned means need feature_dim >= n_classes")
        means = separation * np.eye(n_classes, feature_dim)
        return cls(
            n_classes=n_classes,
            feature_dim=feature_dim,
            means=means,
            std=std,
            per_class=per_class,
            seed=seed,
        )


def generate_synthetic(spec: SyntheticSpec) -> tuple[np.ndarray, np.ndarray]:
    """Draw per-class Gaussian samples, class-blocked, deterministic in the seed."""
    rng = np.random.default_rng(spec.seed)
    blocks = []
    for i in range(spec.n_classes):
        noise = rng.standard_normal((spec.per_class, spec.feature_dim))
        blocks.append(spec.means[i] + spec.std * noise)
    features = np.concatenate(blocks, axis=0)
    labels = np.repeat(np.arange(spec.n_classes), spec.per_class)
    return features, labels


def heldout_mean(spec: SyntheticSpec, shift_sigmas: float = 6.0) -> np.ndarray:
    """A mean displaced by at least ``shift_sigmas * std`` from every class mean.

    With a = shift*std and u = -ones/sqrt(m), the squared distance from a*u
    to a class mean is a^2 - 2a*<u, mean_i> + |mean_i|^2 >= a^2 whenever the
    class means are non-negative (true for the axis-aligned constructor).
    """
    if shift_sigmas <= 0:
        raise DomainError("shift must be positive")
    a = shift_sigmas * spec.std
    direction = -np.ones(spec.feature_dim) / math.sqrt(spec.feature_dim)
    return a * direction


def generate_ood(
    spec: SyntheticSpec,
    n_samples: int,
    shift_sigmas: float = 6.0,
    seed: int | None = None,
) -> np.ndarray:
    """Draw OOD samples around the held-out mean (seed defaults to spec.seed + 1)."""
    if n_samples < 1:
        raise DomainError("need at least one OOD sample")
    mean = heldout_mean(spec, shift_sigmas=shift_sigmas)
    rng = np.random.default_rng(spec.seed + 1 if seed is None else seed)
    return mean + spec.std * rng.standard_normal((n_samples, spec.feature_dim))

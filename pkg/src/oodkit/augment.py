"""SAR-style single-channel image augmentation and test-time augmentation.

Images are 2-D float64 arrays with values in [0, 1]; every operation
preserves the (H, W) shape and re-clamps to that range.  Randomized ops
take a ``numpy.random.Generator`` so a seeded generator makes the whole
pipeline reproducible.  ``tta_predict`` fuses the rectified logits of K
augmented views of one image through a pluggable featurizer, which stands
in for a real backbone at desk scale.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .engine import rectified_forward
from .errors import DomainError, FormatError, ShapeError
from .tensorio import LinearHead, atomic_write_bytes, validate_matrix


def validate_image(img) -> np.ndarray:
    """Return ``img`` as a 2-D float64 array with all pixels in [0, 1]."""
    arr = validate_matrix(img, name="image")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError("image needs at least one pixel per side")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise DomainError("pixel values must lie in [0, 1]")
    return arr


def flip(img, axis: str) -> np.ndarray:
    """Mirror the image: ``horizontal`` swaps columns, ``vertical`` swaps rows."""
    arr = validate_image(img)
    if axis == "horizontal":
        return arr[:, ::-1].copy()
    if axis == "vertical":
        return arr[::-1, :].copy()
    raise DomainError(f"axis must be 'horizontal' or 'vertical', got {axis!r}")


def rotate(img, angle: float) -> np.ndarray:
    """Rotate clockwise by ``angle`` degrees about the image center.

    Multiples of 90 use an exact index permutation; other angles use
    nearest-neighbor resampling with zero padding.  Output dims equal
    input dims.
    """
    arr = validate_image(img)
    angle = float(angle)
    if not math.isfinite(angle):
        raise DomainError("rotation angle must be finite")
    if angle % 90.0 == 0.0:
        quarter_turns = int(round(angle / 90.0)) % 4
        return np.rot90(arr, -quarter_turns).copy()

    h, w = arr.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    theta = math.radians(angle)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    rr, cc = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    dy = rr - cy
    dx = cc - cx
    src_r = np.floor(cos_t * dy - sin_t * dx + cy + 0.5).astype(np.int64)
    src_c = np.floor(sin_t * dy + cos_t * dx + cx + 0.5).astype(np.int64)
    inside = (src_r >= 0) & (src_r < h) & (src_c >= 0) & (src_c < w)
    out = np.zeros_like(arr)
    out[inside] = arr[src_r[inside], src_c[inside]]
    return out


def jitter(img, brightness_factor: float, contrast_factor: float) -> np.ndarray:
    """Scale contrast about the image mean, then brightness, clamping to [0, 1]."""
    arr = validate_image(img)
    if not (brightness_factor > 0 and math.isfinite(brightness_factor)):
        raise DomainError(f"brightness factor must be positive, got {brightness_factor}")
    if not (contrast_factor > 0 and math.isfinite(contrast_factor)):
        raise DomainError(f"contrast factor must be positive, got {contrast_factor}")
    mean = arr.mean()
    out = np.clip(arr * contrast_factor + mean * (1.0 - contrast_factor), 0.0, 1.0)
    return np.clip(out * brightness_factor, 0.0, 1.0)


def _bilinear_resize(src: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    sh, sw = src.shape
    ys = np.arange(out_h) * (sh - 1) / (out_h - 1) if out_h > 1 else np.zeros(out_h)
    xs = np.arange(out_w) * (sw - 1) / (out_w - 1) if out_w > 1 else np.zeros(out_w)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, sh - 1)
    x1 = np.minimum(x0 + 1, sw - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = src[np.ix_(y0, x0)] * (1 - fx) + src[np.ix_(y0, x1)] * fx
    bottom = src[np.ix_(y1, x0)] * (1 - fx) + src[np.ix_(y1, x1)] * fx
    return top * (1 - fy) + bottom * fy


def random_crop_resize(img, side_fraction: float, rng) -> np.ndarray:
    """Crop a window of floor(fraction * side) per axis at a random offset,
    then resize back to the original shape with bilinear interpolation."""
    arr = validate_image(img)
    if not (0.0 < side_fraction <= 1.0):
        raise DomainError(f"crop fraction must be in (0, 1], got {side_fraction}")
    h, w = arr.shape
    ch = math.floor(side_fraction * h)
    cw = math.floor(side_fraction * w)
    if ch < 1 or cw < 1:
        raise DomainError(f"crop window {ch}x{cw} is smaller than one pixel")
    r0 = int(rng.integers(0, h - ch + 1))
    c0 = int(rng.integers(0, w - cw + 1))
    window = arr[r0 : r0 + ch, c0 : c0 + cw]
    return np.clip(_bilinear_resize(window, h, w), 0.0, 1.0)


def cutout(img, hole_fraction: float, rng) -> np.ndarray:
    """Zero one square hole of side floor(fraction * min(H, W)), fully inside."""
    arr = validate_image(img)
    if not (0.0 < hole_fraction <= 1.0):
        raise DomainError(f"hole fraction must be in (0, 1], got {hole_fraction}")
    h, w = arr.shape
    side = math.floor(hole_fraction * min(h, w))
    if side < 1:
        raise DomainError(f"cutout hole of side {side} is smaller than one pixel")
    r0 = int(rng.integers(0, h - side + 1))
    c0 = int(rng.integers(0, w - side + 1))
    out = arr.copy()
    out[r0 : r0 + side, c0 : c0 + side] = 0.0
    return out


@dataclass(frozen=True)
class AugmentSpec:
    """Which augmentations run and the ranges their parameters are drawn from."""

    rotation: bool = True
    rotation_max_deg: float = 180.0
    flip_horizontal: bool = True
    flip_vertical: bool = True
    color_jitter: bool = True
    brightness_range: tuple[float, float] = (0.8, 1.2)
    contrast_range: tuple[float, float] = (0.8, 1.2)
    crop: bool = True
    crop_fraction: float = 0.875
    cutout: bool = True
    cutout_fraction: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.rotation_max_deg) and self.rotation_max_deg >= 0):
            raise DomainError("rotation_max_deg must be finite and non-negative")
        for name in ("brightness_range", "contrast_range"):
            lo, hi = getattr(self, name)
            if not (0 < lo <= hi) or not math.isfinite(hi):
                raise DomainError(f"{name} must satisfy 0 < lo <= hi, got ({lo}, {hi})")
        for name in ("crop_fraction", "cutout_fraction"):
            value = getattr(self, name)
            if not (0.0 < value <= 1.0):
                raise DomainError(f"{name} must be in (0, 1], got {value}")

    @classmethod
    def disabled(cls, seed: int = 0) -> "AugmentSpec":
        return cls(
            rotation=False,
            flip_horizontal=False,
            flip_vertical=False,
            color_jitter=False,
            crop=False,
            cutout=False,
            seed=seed,
        )


def augment(img, spec: AugmentSpec, rng) -> np.ndarray:
    """Apply the enabled ops in the fixed order rotate, flip, jitter, crop, cutout.

    Each parameter is drawn from ``rng``, so output is a pure function of
    (img, spec, rng state).  Enabled flips fire with probability 1/2 each.
    """
    out = validate_image(img)
    if spec.rotation:
        angle = float(rng.uniform(-spec.rotation_max_deg, spec.rotation_max_deg))
        out = rotate(out, angle)
    if spec.flip_horizontal and rng.random() < 0.5:
        out = flip(out, "horizontal")
    if spec.flip_vertical and rng.random() < 0.5:
        out = flip(out, "vertical")
    if spec.color_jitter:
        brightness = float(rng.uniform(*spec.brightness_range))
        contrast = float(rng.uniform(*spec.contrast_range))
        out = jitter(out, brightness, contrast)
    if spec.crop:
        out = random_crop_resize(out, spec.crop_fraction, rng)
    if spec.cutout:
        out = cutout(out, spec.cutout_fraction, rng)
    return out


class GridPoolFeaturizer:
    """Mean-pools the image over a grid x grid partition; feature dim = grid**2.

    A stand-in backbone: deterministic, shape-agnostic (any image at least
    grid pixels per side), and sensitive to every augmentation above.
    """

    def __init__(self, grid: int = 4):
        if grid < 1:
            raise DomainError("grid must be at least 1")
        self.grid = grid

    @property
    def feature_dim(self) -> int:
        return self.grid * self.grid

    def __call__(self, img) -> np.ndarray:
        arr = validate_image(img)
        if arr.shape[0] < self.grid or arr.shape[1] < self.grid:
            raise ShapeError(
                f"image {arr.shape} too small for a {self.grid}x{self.grid} grid"
            )
        cells = [
            cell.mean()
            for band in np.array_split(arr, self.grid, axis=0)
            for cell in np.array_split(band, self.grid, axis=1)
        ]
        return np.asarray(cells, dtype=np.float64)


@dataclass(frozen=True)
class TtaConfig:
    """How many augmented views to fuse and whether view 1 is the raw image."""

    iterations: int = 32
    include_identity: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise DomainError("TTA needs at least one iteration")


def tta_predict(
    img,
    featurizer,
    head: LinearHead,
    react_c: float = math.inf,
    cfg: TtaConfig = TtaConfig(),
    spec: AugmentSpec = AugmentSpec(),
) -> np.ndarray:
    """Mean of the rectified logits over K views of one image (1 x K_classes).

    Views are generated from a generator seeded with ``cfg.seed``; when
    ``include_identity`` is set the first view is the unaugmented image.
    """
    arr = validate_image(img)
    rng = np.random.default_rng(cfg.seed)
    views = []
    remaining = cfg.iterations
    if cfg.include_identity:
        views.append(arr)
        remaining -= 1
    for _ in range(remaining):
        views.append(augment(arr, spec, rng))
    rows = [rectified_forward(featurizer(view)[None, :], head, react_c) for view in views]
    return np.mean(np.concatenate(rows, axis=0), axis=0, keepdims=True)


_PGM_TOKEN = re.compile(rb"^(?:\s|#[^\n]*\n)*(\S+)")


def write_pgm(img, path) -> None:
    """Save as binary PGM (P5, 8-bit): pixel byte = floor(value * 255 + 0.5)."""
    arr = validate_image(img)
    h, w = arr.shape
    payload = np.floor(arr * 255.0 + 0.5).astype(np.uint8)
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    atomic_write_bytes(path, header + payload.tobytes())


def read_pgm(path) -> np.ndarray:
    """Load a binary PGM (P5, maxval <= 255), normalizing pixels to [0, 1]."""
    with open(path, "rb") as fh:
        blob = fh.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        match = _PGM_TOKEN.match(blob[pos:])
        if match is None:
            raise FormatError(f"{path}: truncated PGM header")
        tokens.append(match.group(1))
        pos += match.end()
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: expected binary PGM magic P5, got {tokens[0]!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise FormatError(f"{path}: non-numeric PGM header field") from exc
    if width < 1 or height < 1:
        raise FormatError(f"{path}: bad dimensions {width}x{height}")
    if not (0 < maxval <= 255):
        raise FormatError(f"{path}: only 8-bit PGM supported, maxval={maxval}")
    pos += 1  # single whitespace byte after maxval
    expected = width * height
    payload = blob[pos : pos + expected]
    if len(payload) != expected:
        raise FormatError(f"{path}: expected {expected} pixel bytes, found {len(payload)}")
    pixels = np.frombuffer(payload, dtype=np.uint8).astype(np.float64) / maxval
    return pixels.reshape(height, width)

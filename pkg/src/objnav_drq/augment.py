"""Image augmentations over semantic-map state tensors.

Functions work on a single (C, M, M) array or a batch (N, C, M, M) and
return the transformed array plus the :class:`TransformParam` drawn for
each sample, so a draw can be replayed with :func:`apply_transform`.
The sklearn transformers at the bottom wrap the same functions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils import check_random_state

SHIFT_PAD = 4
MAX_ROTATION_DEG = 5.0
LUMA = np.array([0.299, 0.587, 0.114])

# obstacle, explored, then one colour per category (chair, couch, potted plant, bed, toilet, tv)
PALETTE = {
    "obstacle": (0.40, 0.40, 0.40),
    "explored": (0.90, 0.90, 0.90),
    "categories": [
        (0.94, 0.35, 0.20),
        (0.20, 0.55, 0.90),
        (0.20, 0.75, 0.30),
        (0.85, 0.20, 0.75),
        (0.95, 0.80, 0.15),
        (0.35, 0.85, 0.85),
    ],
}
KINDS = ("identity", "shift", "flip", "rotate", "grayscale")


@dataclass(frozen=True)
class TransformParam:
    kind: str = "identity"
    dx: int = 0
    dy: int = 0
    axis: int | None = None  # -1 horizontal (columns), -2 vertical (rows)
    angle: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown transform kind {self.kind!r}")
        if not (-SHIFT_PAD <= self.dx <= SHIFT_PAD and -SHIFT_PAD <= self.dy <= SHIFT_PAD):
            raise ValueError(f"shift offsets must lie in [-{SHIFT_PAD}, {SHIFT_PAD}], got ({self.dx}, {self.dy})")
        if abs(self.angle) > MAX_ROTATION_DEG:
            raise ValueError(f"rotation must lie in [-5, 5] degrees, got {self.angle}")


IDENTITY = TransformParam()


def _shift(s: np.ndarray, dx: int, dy: int) -> np.ndarray:
    if dx == 0 and dy == 0:
        return s.copy()
    m = s.shape[-1]
    pad = [(0, 0)] * (s.ndim - 2) + [(SHIFT_PAD, SHIFT_PAD)] * 2
    padded = np.pad(s, pad, mode="edge")
    r0, c0 = SHIFT_PAD - dy, SHIFT_PAD - dx
    return padded[..., r0:r0 + m, c0:c0 + m].copy()


def _rotate(s: np.ndarray, angle: float) -> np.ndarray:
    if angle == 0.0:
        return s.copy()
    m = s.shape[-1]
    centre = m // 2
    rad = np.deg2rad(angle)
    rows, cols = np.mgrid[0:m, 0:m]
    yr, xr = rows - centre, cols - centre
    c, sn = np.cos(rad), np.sin(rad)
    # inverse map: output cell pulls from the source rotated by -angle
    src_c = np.rint(c * xr + sn * yr).astype(int) + centre
    src_r = np.rint(-sn * xr + c * yr).astype(int) + centre
    valid = (src_r >= 0) & (src_r < m) & (src_c >= 0) & (src_c < m)
    out = np.zeros_like(s)
    out[..., valid] = s[..., src_r[valid], src_c[valid]]
    return out


def category_luminance(n_categories: int) -> np.ndarray:
    cols = np.array([PALETTE["categories"][i % len(PALETTE["categories"])] for i in range(n_categories)])
    return cols @ LUMA


def render_rgb(state: np.ndarray) -> np.ndarray:
    """Colour-code a (C+4, M, M) state as a (3, M, M) image in [0, 1]."""
    state = np.asarray(state, dtype=np.float64)
    n_cat = state.shape[0] - 4
    if n_cat < 1:
        raise ValueError(f"state needs at least 5 channels, got {state.shape[0]}")
    rgb = np.zeros((3,) + state.shape[1:])
    for key, ch in (("explored", 1), ("obstacle", 0)):
        mask = state[ch] > 0
        rgb[:, mask] = np.array(PALETTE[key])[:, None]
    for c in range(n_cat):
        mask = state[4 + c] > 0
        colour = PALETTE["categories"][c % len(PALETTE["categories"])]
        rgb[:, mask] = np.array(colour)[:, None]
    return rgb


def grayscale(rgb: np.ndarray) -> np.ndarray:
    """Luminance 0.299R + 0.587G + 0.114B replicated to three channels."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim < 3 or rgb.shape[-3] != 3:
        raise ValueError(f"grayscale expects a rendered (3, H, W) image, got shape {rgb.shape}")
    lum = np.tensordot(LUMA, rgb, axes=([0], [-3]))
    return np.repeat(np.expand_dims(lum, -3), 3, axis=-3)


def grayscale_state(s: np.ndarray) -> np.ndarray:
    """Drop colour identity from the category channels of a state.

    Every category channel is replaced by the luminance of the rendered
    category layer, so categories stay visible but are only separable by
    intensity.
    """
    n_cat = s.shape[-3] - 4
    lum = np.tensordot(category_luminance(n_cat), s[..., 4:, :, :], axes=([0], [-3]))
    out = s.copy()
    out[..., 4:, :, :] = np.clip(lum, 0.0, 1.0)[..., None, :, :]
    return out


def apply_transform(s: np.ndarray, p: TransformParam) -> np.ndarray:
    if p.kind == "shift":
        return _shift(s, p.dx, p.dy)
    if p.kind == "flip":
        return np.flip(s, axis=p.axis).copy() if p.axis is not None else s.copy()
    if p.kind == "rotate":
        return _rotate(s, p.angle)
    if p.kind == "grayscale":
        return grayscale_state(s)
    return s.copy()


def draw_param(kind: str, rng: np.random.Generator, flip_prob: float = 0.1) -> TransformParam:
    """Draw one transform; rng consumption is fixed per kind."""
    if kind == "shift":
        dx, dy = rng.integers(-SHIFT_PAD, SHIFT_PAD + 1, size=2)
        return TransformParam("shift", dx=int(dx), dy=int(dy))
    if kind == "flip":
        u = rng.random()
        axis = (-1, -2)[int(rng.integers(2))]
        return TransformParam("flip", axis=axis if u < flip_prob else None)
    if kind == "rotate":
        return TransformParam("rotate", angle=float(rng.uniform(-MAX_ROTATION_DEG, MAX_ROTATION_DEG)))
    if kind == "grayscale":
        return TransformParam("grayscale")
    if kind == "identity":
        return IDENTITY
    raise ValueError(f"unknown augmentation kind {kind!r}")


def random_shift(s, rng):
    p = draw_param("shift", rng)
    return apply_transform(s, p), p


def flip(s, rng, prob: float = 0.1):
    p = draw_param("flip", rng, prob)
    return apply_transform(s, p), p


def rotate(s, rng):
    p = draw_param("rotate", rng)
    return apply_transform(s, p), p


def augment_batch(batch: np.ndarray, kind: str, rng: np.random.Generator,
                  flip_prob: float = 0.1) -> tuple[np.ndarray, list[TransformParam]]:
    """One independent draw per sample of an (N, C, M, M) batch."""
    if kind == "identity":
        return batch, [IDENTITY] * len(batch)
    out = np.empty_like(batch)
    params = []
    for i, s in enumerate(batch):
        p = draw_param(kind, rng, flip_prob)
        out[i] = apply_transform(s, p)
        params.append(p)
    return out, params


class _Augmenter(TransformerMixin, BaseEstimator):
    kind = "identity"

    def fit(self, X, y=None):
        return self

    def _draw(self, rng):
        return draw_param(self.kind, rng)

    def transform(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim not in (3, 4) or X.shape[-1] != X.shape[-2]:
            raise ValueError(f"expected (C, M, M) or (N, C, M, M) states, got shape {X.shape}")
        rng = check_random_state(self.random_state)
        gen = np.random.default_rng(rng.randint(2**31))
        single = X.ndim == 3
        batch = X[None] if single else X
        out = np.stack([apply_transform(s, self._draw(gen)) for s in batch])
        return out[0] if single else out


class RandomShift(_Augmenter):
    """Pad by 4 with edge replication and crop a random M x M window."""

    kind = "shift"

    def __init__(self, random_state=None):
        self.random_state = random_state


class RandomFlip(_Augmenter):
    kind = "flip"

    def __init__(self, flip_prob: float = 0.1, random_state=None):
        self.flip_prob = flip_prob
        self.random_state = random_state

    def _draw(self, rng):
        return draw_param("flip", rng, self.flip_prob)


class RandomRotate(_Augmenter):
    kind = "rotate"

    def __init__(self, random_state=None):
        self.random_state = random_state


class Grayscale(_Augmenter):
    kind = "grayscale"

    def __init__(self, random_state=None):
        self.random_state = random_state

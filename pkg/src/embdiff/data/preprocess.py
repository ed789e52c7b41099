"""Deterministic image preprocessing and light augmentation.

Pipeline order: intensity rescale to uint8, constant-border strip, centered
square crop, bilinear resize. Augmentation draws shear/translate/scale/sharpen
parameters from a seeded generator and is bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage
from PIL import ImageEnhance

from ..errors import ContractError

MIN_INPUT_SIDE = 8


def rescale_intensity(raw: np.ndarray, bit_depth: int | None = None) -> np.ndarray:
    """Min-max rescale an 8- or 16-bit grayscale image to uint8, 3 channels.

    Rounds half-to-even. Constant images map to all zeros. Pixel values must
    fit the declared bit depth (inferred from dtype when not given).
    """
    raw = np.asarray(raw)
    if raw.ndim != 2:
        raise ContractError(f"raw image must be 2-D, got shape {raw.shape}")
    if bit_depth is None:
        if raw.dtype == np.uint8:
            bit_depth = 8
        elif raw.dtype == np.uint16:
            bit_depth = 16
        else:
            raise ContractError(f"unsupported raw dtype {raw.dtype}")
    if bit_depth not in (8, 16):
        raise ContractError(f"unsupported bit depth {bit_depth}")
    if raw.size and int(raw.max()) >= (1 << bit_depth):
        raise ContractError(f"pixel values exceed {bit_depth}-bit range")

    lo = float(raw.min())
    hi = float(raw.max())
    if hi == lo:
        out = np.zeros(raw.shape, dtype=np.uint8)
    else:
        scaled = (raw.astype(np.float64) - lo) * (255.0 / (hi - lo))
        out = np.rint(scaled).astype(np.uint8)  # np.rint rounds half to even
    return np.repeat(out[:, :, None], 3, axis=2)


def _strip_constant_borders(gray: np.ndarray) -> tuple[int, int, int, int]:
    """Return (top, bottom, left, right) bounds after removing padding.

    A border row/column counts as padding when its variance is zero and its
    value equals the global minimum of the image.
    """
    h, w = gray.shape
    gmin = gray.min()

    def is_pad_row(i):
        row = gray[i]
        return row.min() == row.max() == gmin

    def is_pad_col(j):
        col = gray[:, j]
        return col.min() == col.max() == gmin

    top, bottom, left, right = 0, h, 0, w
    while top < bottom - 1 and is_pad_row(top):
        top += 1
    while bottom - 1 > top and is_pad_row(bottom - 1):
        bottom -= 1
    while left < right - 1 and is_pad_col(left):
        left += 1
    while right - 1 > left and is_pad_col(right - 1):
        right -= 1
    return top, bottom, left, right


def center_crop_resize(img: np.ndarray, target_side: int) -> np.ndarray:
    """Strip constant padding, crop the centered largest square, resize.

    Output is target_side x target_side x 3 uint8, bilinear resampling.
    """
    if target_side < MIN_INPUT_SIDE:
        raise ContractError(f"target_side must be >= {MIN_INPUT_SIDE}")
    img = np.asarray(img)
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ContractError(f"expected HxW or HxWx3 image, got {img.shape}")
    if img.shape[0] < MIN_INPUT_SIDE or img.shape[1] < MIN_INPUT_SIDE:
        raise ContractError(f"image smaller than {MIN_INPUT_SIDE}px: {img.shape[:2]}")

    top, bottom, left, right = _strip_constant_borders(img[:, :, 0])
    img = img[top:bottom, left:right]

    h, w = img.shape[:2]
    side = min(h, w)
    r0 = (h - side) // 2
    c0 = (w - side) // 2
    img = img[r0 : r0 + side, c0 : c0 + side]

    if side == target_side:
        return img.astype(np.uint8, copy=True)
    pil = PILImage.fromarray(img.astype(np.uint8))
    pil = pil.resize((target_side, target_side), PILImage.BILINEAR)
    return np.asarray(pil)


@dataclass(frozen=True)
class AugmentParams:
    """Concrete draw of one augmentation; identity() leaves images unchanged."""

    shear: float = 0.0  # fraction of side, +/-0.05
    tx: float = 0.0  # fraction of side, +/-0.05
    ty: float = 0.0
    scale: float = 1.0  # 0.90 .. 1.40
    sharpen: bool = False
    sharpen_factor: float = 1.0

    @classmethod
    def identity(cls) -> "AugmentParams":
        return cls()

    @classmethod
    def draw(cls, rng: np.random.Generator) -> "AugmentParams":
        return cls(
            shear=float(rng.uniform(-0.05, 0.05)),
            tx=float(rng.uniform(-0.05, 0.05)),
            ty=float(rng.uniform(-0.05, 0.05)),
            scale=float(rng.uniform(0.90, 1.40)),
            sharpen=bool(rng.random() < 0.5),
            sharpen_factor=float(rng.uniform(1.0, 2.0)),
        )


def apply_augment(img: np.ndarray, params: AugmentParams) -> np.ndarray:
    """Apply a fixed augmentation draw; identity params return the input bit-exact."""
    img = np.asarray(img, dtype=np.uint8)
    h, w = img.shape[:2]
    out = img

    if (params.shear, params.tx, params.ty, params.scale) != (0.0, 0.0, 0.0, 1.0):
        # PIL's AFFINE takes the inverse map (output -> input), centered on the image.
        cx = (w - 1) / 2.0
        cy = (h - 1) / 2.0
        s = 1.0 / params.scale
        a, b = s, -params.shear * s
        d, e = 0.0, s
        tx = params.tx * w
        ty = params.ty * h
        c = cx - a * (cx + tx) - b * (cy + ty)
        f = cy - d * (cx + tx) - e * (cy + ty)
        pil = PILImage.fromarray(out)
        pil = pil.transform(
            pil.size, PILImage.AFFINE, (a, b, c, d, e, f), resample=PILImage.BILINEAR
        )
        out = np.asarray(pil)

    if params.sharpen:
        pil = PILImage.fromarray(out)
        pil = ImageEnhance.Sharpness(pil).enhance(params.sharpen_factor)
        out = np.asarray(pil)
    return out.copy()


def augment(img: np.ndarray, seed: int) -> np.ndarray:
    """Random sharpening plus affine jitter (5% shear/translate, 90-140% scale)."""
    rng = np.random.default_rng(seed)
    return apply_augment(img, AugmentParams.draw(rng))

"""Procedural phantom radiographs with labels and ground-truth lung masks.

Each phantom is a bright torso with two dark elliptical lungs separated by a
mediastinal band. Seven lesion kinds, one per label, draw independently with
configured probabilities; each has a distinct geometric signature so small
classifiers can learn them from few examples. Everything is a pure function
of (spec, seed, index).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError
from .records import DEFAULT_LABELSET, Provenance, SampleRecord


@dataclass(frozen=True)
class PhantomSpec:
    """Generator settings: seed, per-label lesion probabilities, geometry ranges."""

    seed: int = 0
    side: int = 64
    lesion_probs: tuple[float, ...] = (0.30,) * 7
    lung_width: tuple[float, float] = (0.14, 0.20)  # semi-axis, fraction of side
    lung_height: tuple[float, float] = (0.24, 0.32)
    noise_amp: float = 5.0
    labelset: tuple[str, ...] = DEFAULT_LABELSET

    def __post_init__(self):
        if len(self.lesion_probs) != len(self.labelset):
            raise ContractError("lesion_probs length must match labelset")
        if any(not 0.0 <= p <= 1.0 for p in self.lesion_probs):
            raise ContractError("lesion probabilities must lie in [0, 1]")
        for lo, hi in (self.lung_width, self.lung_height):
            if not lo < hi:
                raise ContractError("geometry ranges must be non-degenerate (lo < hi)")
        if self.side < 16:
            raise ContractError("phantom side must be >= 16")


def _ellipse_mask(side, cx, cy, ax, ay):
    yy, xx = np.mgrid[0:side, 0:side]
    return ((xx - cx) / ax) ** 2 + ((yy - cy) / ay) ** 2 <= 1.0


def _blob(side, cx, cy, sigma, amplitude):
    yy, xx = np.mgrid[0:side, 0:side]
    return amplitude * np.exp(-(((xx - cx) ** 2 + (yy - cy) ** 2) / (2.0 * sigma**2)))


def _render(spec: PhantomSpec, rng: np.random.Generator):
    s = spec.side
    img = np.full((s, s), 30.0)

    # torso
    torso = _ellipse_mask(s, s / 2, s / 2, 0.46 * s, 0.50 * s)
    img[torso] = 170.0 + rng.uniform(-8, 8)

    # lungs, mirrored about the mediastinal band
    ax = rng.uniform(*spec.lung_width) * s
    ay = rng.uniform(*spec.lung_height) * s
    cy = s * rng.uniform(0.44, 0.50)
    gap = s * rng.uniform(0.055, 0.075)  # half-width of the mediastinum
    lx = s / 2 - gap - ax
    rx = s / 2 + gap + ax
    left = _ellipse_mask(s, lx, cy, ax, ay)
    right = _ellipse_mask(s, rx, cy, ax, ay)
    lung_level = 70.0 + rng.uniform(-6, 6)
    img[left] = lung_level
    img[right] = lung_level

    # mediastinum stays bright between the lungs
    med = _ellipse_mask(s, s / 2, cy + 0.04 * s, gap * 1.1, ay * 1.05)
    img[med] = 200.0

    labels = np.zeros(len(spec.labelset), dtype=np.int8)
    lungs = (left, lx), (right, rx)

    def pick_lung():
        return lungs[int(rng.integers(0, 2))]

    # One geometric signature per label; drawing it sets the label bit.
    if rng.random() < spec.lesion_probs[0]:  # atelectasis: bright band across a lung
        (mask, cx) = pick_lung()
        band_y = cy + rng.uniform(-0.4, 0.4) * ay
        band = np.zeros_like(img, dtype=bool)
        half = max(1, int(0.05 * s))
        y0 = int(np.clip(band_y - half, 0, s - 1))
        y1 = int(np.clip(band_y + half, 1, s))
        band[y0:y1, :] = True
        img[band & mask] = 150.0
        labels[0] = 1
    if rng.random() < spec.lesion_probs[1]:  # cardiomegaly: enlarged heart shadow
        heart = _ellipse_mask(s, s / 2 + 0.04 * s, cy + 0.22 * s, gap * 2.6, 0.18 * s)
        img[heart] = 210.0
        labels[1] = 1
    if rng.random() < spec.lesion_probs[2]:  # consolidation: dense blob, lower lung
        (mask, cx) = pick_lung()
        bump = _blob(s, cx + rng.uniform(-0.3, 0.3) * ax, cy + 0.5 * ay, 0.06 * s, 110.0)
        img += bump * mask
        labels[2] = 1
    if rng.random() < spec.lesion_probs[3]:  # edema: diffuse haze over both lungs
        img[left] += 45.0
        img[right] += 45.0
        labels[3] = 1
    if rng.random() < spec.lesion_probs[4]:  # pleural effusion: bright base wedge
        (mask, cx) = pick_lung()
        yy, _ = np.mgrid[0:s, 0:s]
        wedge = mask & (yy >= cy + 0.35 * ay)
        img[wedge] = 185.0
        labels[4] = 1
    if rng.random() < spec.lesion_probs[5]:  # pneumonia: patchy mid-lung blob
        (mask, cx) = pick_lung()
        patch = _blob(s, cx + rng.uniform(-0.4, 0.4) * ax, cy - 0.2 * ay, 0.045 * s, 90.0)
        img += patch * mask
        labels[5] = 1
    if rng.random() < spec.lesion_probs[6]:  # pneumothorax: dark apical cap
        (mask, cx) = pick_lung()
        cap = mask & _ellipse_mask(s, cx, cy - 0.75 * ay, ax * 1.1, 0.45 * ay)
        img[cap] = 35.0
        labels[6] = 1

    img += rng.normal(0.0, spec.noise_amp, size=img.shape)
    img = np.clip(img, 0, 255).astype(np.uint8)
    return img, labels, {"lung_left": left, "lung_right": right}


def generate_phantom(spec: PhantomSpec, n: int) -> list[SampleRecord]:
    """Generate n phantom records, deterministic per (spec, seed, index)."""
    if n < 1:
        raise ContractError("n must be >= 1")
    records = []
    for index in range(n):
        rng = np.random.default_rng([spec.seed, index])
        img, labels, masks = _render(spec, rng)
        records.append(
            SampleRecord(
                id=f"ph-{spec.seed}-{index:06d}",
                image=np.repeat(img[:, :, None], 3, axis=2),
                labels=labels,
                masks=masks,
                provenance=Provenance(kind="real"),
            )
        )
    return records

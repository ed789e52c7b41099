"""Noise schedules and the closed-form forward noising step."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ContractError


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step beta/alpha arrays; alpha_bar is the running product of alphas."""

    betas: np.ndarray
    kind: str = "linear"

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        object.__setattr__(self, "betas", betas)
        if betas.ndim != 1 or len(betas) < 2:
            raise ContractError("schedule needs at least 2 steps")
        if not ((betas > 0) & (betas < 1)).all():
            raise ContractError("betas must lie strictly inside (0, 1)")

    @property
    def T(self) -> int:
        return len(self.betas)

    @property
    def alphas(self) -> np.ndarray:
        return 1.0 - self.betas

    @property
    def alpha_bars(self) -> np.ndarray:
        return np.cumprod(self.alphas)


def build_schedule(T: int, kind: str = "linear") -> NoiseSchedule:
    """Linear (1e-4..0.02, scaled to T=1000 reference) or squared-cosine betas."""
    if T < 2:
        raise ConfigError("T must be >= 2")
    if kind == "linear":
        # The 1e-4..0.02 endpoints assume 1000 steps; scale so that total
        # noise injected is comparable for other T.
        scale = 1000.0 / T
        betas = np.linspace(scale * 1e-4, scale * 0.02, T)
    elif kind == "cosine":
        steps = np.arange(T + 1, dtype=np.float64) / T
        abar = np.cos((steps + 0.008) / 1.008 * math.pi / 2) ** 2
        betas = 1.0 - abar[1:] / abar[:-1]
    else:
        raise ConfigError(f"unknown schedule kind {kind!r}")
    betas = np.clip(betas, 1e-8, 0.999)
    return NoiseSchedule(betas=betas, kind=kind)


def q_sample(z0, t, eps, schedule: NoiseSchedule):
    """Noise z0 to step t: sqrt(abar_t) * z0 + sqrt(1 - abar_t) * eps.

    Accepts numpy arrays or torch tensors; t is an int for a single latent or
    a length-B integer vector for batched leading-dimension inputs.
    """
    if getattr(z0, "shape", None) != getattr(eps, "shape", None):
        raise ContractError(f"z0 shape {z0.shape} != eps shape {eps.shape}")
    abar = schedule.alpha_bars
    t_arr = np.asarray(t)
    if (t_arr < 0).any() or (t_arr >= schedule.T).any():
        raise ContractError(f"t must lie in [0, {schedule.T})")
    if t_arr.ndim == 0:
        a = math.sqrt(abar[int(t_arr)])
        b = math.sqrt(1.0 - abar[int(t_arr)])
        return a * z0 + b * eps
    a = np.sqrt(abar[t_arr]).reshape((-1,) + (1,) * (z0.ndim - 1))
    b = np.sqrt(1.0 - abar[t_arr]).reshape(a.shape)
    import torch

    if torch.is_tensor(z0):
        a = torch.as_tensor(a, dtype=z0.dtype, device=z0.device)
        b = torch.as_tensor(b, dtype=z0.dtype, device=z0.device)
    return a * z0 + b * eps

"""Ancestral sampling over a strided subset of schedule timesteps.

Each step forms the posterior mean from the predicted noise and adds
posterior-variance noise, except at the last step. Everything is driven by a
seeded generator, so (condition, seed) fully determines the output.
"""

from __future__ import annotations

import numpy as np
import torch

from ..errors import ContractError
from .schedule import NoiseSchedule


def strided_timesteps(T: int, n_steps: int) -> np.ndarray:
    """Descending subset of {0..T-1} with n_steps entries (fewer if T < n_steps)."""
    if n_steps < 1:
        raise ContractError("n_steps must be >= 1")
    n_steps = min(n_steps, T)
    ts = np.unique(np.round(np.linspace(T - 1, 0, n_steps)).astype(int))
    return ts[::-1].copy()


@torch.no_grad()
def sample_latents(
    denoise_fn,
    cond: torch.Tensor | np.ndarray,
    shape: tuple[int, int, int],
    schedule: NoiseSchedule,
    n_steps: int,
    seed: int,
    batch: int | None = None,
) -> np.ndarray:
    """Draw len(cond) latents; returns (B, h, w, k) float32.

    denoise_fn(z_t, t, cond) predicts the noise for a batch; cond is
    (B, S_g, N). Striding uses alpha_bar ratios between consecutive selected
    steps, which reduces to plain DDPM when n_steps == T.
    """
    cond_t = torch.as_tensor(np.asarray(cond, dtype=np.float32))
    if cond_t.ndim == 2:
        cond_t = cond_t[None]
    n = cond_t.shape[0]
    h, w, k = shape
    abar = schedule.alpha_bars
    ts = strided_timesteps(schedule.T, n_steps)

    gen = torch.Generator().manual_seed(seed)
    out = np.empty((n, h, w, k), dtype=np.float32)
    batch = batch or n
    for start in range(0, n, batch):
        c = cond_t[start : start + batch]
        b = c.shape[0]
        z = torch.randn((b, k, h, w), generator=gen)
        for i, t in enumerate(ts):
            abar_t = abar[t]
            abar_prev = abar[ts[i + 1]] if i + 1 < len(ts) else 1.0
            alpha_eff = abar_t / abar_prev
            beta_eff = 1.0 - alpha_eff

            t_vec = torch.full((b,), int(t), dtype=torch.long)
            eps_hat = denoise_fn(z, t_vec, c)
            mean = (z - beta_eff / np.sqrt(1.0 - abar_t) * eps_hat) / np.sqrt(alpha_eff)
            if i + 1 < len(ts):
                var = beta_eff * (1.0 - abar_prev) / (1.0 - abar_t)
                noise = torch.randn(z.shape, generator=gen)
                z = mean + np.sqrt(var) * noise
            else:
                z = mean
        out[start : start + b] = z.permute(0, 2, 3, 1).numpy()
    return out


@torch.no_grad()
def sample_latents_per_seed(
    denoise_fn,
    cond,
    shape: tuple[int, int, int],
    schedule: NoiseSchedule,
    n_steps: int,
    seeds: list[int],
    batch: int = 32,
) -> np.ndarray:
    """Like sample_latents, but sample i's noise comes entirely from seeds[i].

    Results are independent of how samples are batched, so a synthetic record
    is reproducible from (condition, seed) alone.
    """
    cond_t = torch.as_tensor(np.asarray(cond, dtype=np.float32))
    if cond_t.shape[0] != len(seeds):
        raise ContractError("need one seed per condition")
    h, w, k = shape
    abar = schedule.alpha_bars
    ts = strided_timesteps(schedule.T, n_steps)

    out = np.empty((len(seeds), h, w, k), dtype=np.float32)
    for start in range(0, len(seeds), batch):
        c = cond_t[start : start + batch]
        gens = [torch.Generator().manual_seed(int(s)) for s in seeds[start : start + batch]]
        b = c.shape[0]
        z = torch.stack([torch.randn((k, h, w), generator=g) for g in gens])
        for i, t in enumerate(ts):
            abar_t = abar[t]
            abar_prev = abar[ts[i + 1]] if i + 1 < len(ts) else 1.0
            alpha_eff = abar_t / abar_prev
            beta_eff = 1.0 - alpha_eff

            t_vec = torch.full((b,), int(t), dtype=torch.long)
            eps_hat = denoise_fn(z, t_vec, c)
            mean = (z - beta_eff / np.sqrt(1.0 - abar_t) * eps_hat) / np.sqrt(alpha_eff)
            if i + 1 < len(ts):
                var = beta_eff * (1.0 - abar_prev) / (1.0 - abar_t)
                noise = torch.stack([torch.randn((k, h, w), generator=g) for g in gens])
                z = mean + np.sqrt(var) * noise
            else:
                z = mean
        out[start : start + b] = z.permute(0, 2, 3, 1).numpy()
    return out


def sample(
    cond,
    n_steps: int,
    seed: int,
    model,
    schedule: NoiseSchedule,
) -> np.ndarray:
    """One latent (h, w, k) for one condition from a CondUNet."""
    tokens = cond.tokens if hasattr(cond, "tokens") else np.asarray(cond)
    cfg = model.cfg
    latents = sample_latents(
        model,
        tokens[None],
        (cfg.latent_side, cfg.latent_side, cfg.latent_channels),
        schedule,
        n_steps,
        seed,
    )
    return latents[0]

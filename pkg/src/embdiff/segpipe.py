"""Glue from trained artifacts to segmentations: capture, aggregate, merge.

A segmenter closes over the frozen VAE, encoder and one or more diffusion
checkpoints, caching aggregated attention per (record, checkpoint, timestep)
so the parameter sweep only pays for captures once.
"""

from __future__ import annotations

import zlib

import numpy as np
import torch

from .data.records import SampleRecord
from .diffusion.sampling import strided_timesteps  # noqa: F401  (re-export convenience)
from .diffusion.schedule import q_sample
from .diffusion.training import load_checkpoint
from .diffusion.unet import capture_attention
from .encoder import embed_global_batch
from .errors import ConfigError
from .seg import SegParams, SegmentSet, aggregate, iterative_merge, masks_to_image


def _record_seed(record_id: str, base_seed: int) -> int:
    return (zlib.crc32(record_id.encode()) + base_seed) % (2**31)


class CheckpointSegmenter:
    """segment(record, params) -> image-resolution SegmentSet."""

    def __init__(self, checkpoints: dict[str, str], vae, encoder, noise_seed: int = 0):
        if not checkpoints:
            raise ConfigError("need at least one checkpoint")
        self.checkpoint_paths = dict(checkpoints)
        self.vae = vae
        self.encoder = encoder
        self.noise_seed = noise_seed
        self._models: dict[str, tuple] = {}
        self._agg_cache: dict[tuple, np.ndarray] = {}

    def _model(self, ckpt_id: str):
        if ckpt_id not in self._models:
            if ckpt_id not in self.checkpoint_paths:
                raise ConfigError(f"unknown checkpoint id {ckpt_id!r}")
            model, schedule, _ = load_checkpoint(self.checkpoint_paths[ckpt_id])
            self._models[ckpt_id] = (model, schedule)
        return self._models[ckpt_id]

    def aggregated(self, record: SampleRecord, ckpt_id: str, timestep: int):
        key = (record.id, ckpt_id, timestep)
        if key not in self._agg_cache:
            model, schedule = self._model(ckpt_id)
            z0 = self.vae.encode(record.image) * self.vae.latent_scale
            gen = torch.Generator().manual_seed(_record_seed(record.id, self.noise_seed))
            eps = torch.randn(z0.shape, generator=gen).numpy()
            z_t = q_sample(z0, timestep, eps, schedule)
            cond = embed_global_batch(record.image[None], self.encoder)[0]
            stack = capture_attention(model, z_t.astype(np.float32), timestep, cond)
            self._agg_cache[key] = aggregate(stack, model.cfg.latent_side)
        return self._agg_cache[key]

    def __call__(self, record: SampleRecord, params: SegParams) -> SegmentSet:
        ckpt_id = params.checkpoint or next(iter(self.checkpoint_paths))
        agg = self.aggregated(record, ckpt_id, params.timestep)
        segments = iterative_merge(agg, params)
        return masks_to_image(segments, record.side)

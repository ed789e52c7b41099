"""Shared orchestration helpers wiring the frozen pieces together."""

from __future__ import annotations

import numpy as np

from .data.records import SampleRecord
from .diffusion.training import load_checkpoint
from .encoder import VitImageEncoder, embed_global_batch
from .harness.classifier import (
    ClassifierConfig,
    ClassifierFeatureExtractor,
    train_classifier,
)
from .synthesis import Synthesizer
from .vae import Vae


def prepare_latents(records: list[SampleRecord], vae: Vae) -> np.ndarray:
    """Diffusion-ready latents: posterior means scaled to roughly unit std."""
    images = np.stack([rec.image for rec in records])
    return vae.encode_batch(images) * vae.latent_scale


def prepare_conditions(records: list[SampleRecord], encoder: VitImageEncoder) -> np.ndarray:
    images = np.stack([rec.image for rec in records])
    return embed_global_batch(images, encoder)


def build_synthesizer(
    checkpoint_path: str, vae: Vae, encoder: VitImageEncoder, n_steps: int = 25
) -> Synthesizer:
    model, schedule, _ = load_checkpoint(checkpoint_path)
    return Synthesizer(
        model=model,
        schedule=schedule,
        vae=vae,
        encoder=encoder,
        n_steps=n_steps,
        checkpoint_path=str(checkpoint_path),
    )


def reconstruction_generate_fn(
    vae: Vae,
    encoder: VitImageEncoder,
    source_records: list[SampleRecord],
    n_images: int,
    n_steps: int,
    seed: int,
):
    """generate_fn for checkpoint selection: recon samples from real sources."""
    sources = source_records[:n_images]
    conds = prepare_conditions(sources, encoder)
    seeds = [int(s) for s in np.random.SeedSequence([seed, 0xF1D]).generate_state(len(sources))]

    def generate(checkpoint_path) -> np.ndarray:
        synthesizer = build_synthesizer(str(checkpoint_path), vae, encoder, n_steps)
        return synthesizer.generate(conds, seeds)

    return generate


def fit_feature_extractor(
    train_records: list[SampleRecord],
    val_records: list[SampleRecord],
    cfg: ClassifierConfig,
) -> ClassifierFeatureExtractor:
    """Train the small domain classifier whose pooled features back FID."""
    model, _ = train_classifier(train_records, val_records, cfg)
    return ClassifierFeatureExtractor(model=model, identity=f"smallconvnet-seed{cfg.seed}")

"""Shared fixtures; the session-scoped desk run backs the end-to-end criteria.

The desk run executes the full seeded pipeline once per session: phantom
data, feature-extractor classifier, VAE, conditioned diffusion training,
checkpoint selection, reconstruction synthesis, and the cross-validated
augmentation experiments. Heavy, so everything downstream shares it.
"""

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pytest

from embdiff.data.phantom import PhantomSpec, generate_phantom
from embdiff.data.records import DEFAULT_LABELSET, SampleRecord
from embdiff.data.shards import load_records
from embdiff.diffusion import DenoiserConfig, TrainConfig, build_schedule, train_diffusion
from embdiff.encoder import EncoderConfig, VitImageEncoder
from embdiff.harness.classifier import ClassifierConfig, ClassifierFeatureExtractor, train_classifier
from embdiff.harness.experiment import ExperimentPlan, attach_significance, run_experiment, select_checkpoint
from embdiff.harness.subsets import nest_regimes
from embdiff.pipeline import (
    build_synthesizer,
    prepare_conditions,
    prepare_latents,
    reconstruction_generate_fn,
)
from embdiff.synthesis import SynthesisPlan, build_synthetic_dataset
from embdiff.vae import VaeConfig, train_vae

N_TRAIN = 5000
N_TEST = 1000
DM_STEPS = 1500
DM_EVAL_INTERVAL = 500
SYNTH_RATIO = 5
REGIME_SIZES = (500, 100, 50)

DESK_CLASSIFIER = ClassifierConfig(
    max_epochs=60, early_stop=15, plateau_patience=6, lr=1e-3, seed=100
)


@dataclass
class DeskRun:
    root: Path
    train_records: list
    test_records: list
    vae: object
    encoder: object
    extractor: object
    extractor_model: object
    schedule: object
    checkpoints: list[str]
    best_checkpoint: str
    fid_curve: list[dict]
    regime: object
    subset50: list[SampleRecord]
    synth_dir: Path
    rows: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)


@pytest.fixture(scope="session")
def desk_run(tmp_path_factory) -> DeskRun:
    root = tmp_path_factory.mktemp("desk")
    timings = {}

    def timed(name, fn):
        t0 = time.monotonic()
        out = fn()
        timings[name] = time.monotonic() - t0
        return out

    train_records = timed("data_train", lambda: generate_phantom(PhantomSpec(seed=11), N_TRAIN))
    test_records = timed("data_test", lambda: generate_phantom(PhantomSpec(seed=77), N_TEST))

    ext_cfg = ClassifierConfig(max_epochs=10, early_stop=6, plateau_patience=3, lr=1e-3, seed=5)
    ext_model, _ = timed(
        "extractor",
        lambda: train_classifier(train_records[:2000], train_records[2000:2300], ext_cfg),
    )
    extractor = ClassifierFeatureExtractor(model=ext_model, identity="desk-smallconvnet")

    vae = timed(
        "vae",
        lambda: train_vae(
            np.stack([r.image for r in train_records]),
            VaeConfig(side=64, down_factor=4, channels=4, epochs=4, lr=1e-3, seed=3),
        ),
    )
    vae.save(root / "vae.npz")

    encoder = VitImageEncoder(EncoderConfig(variant="v1", seed=0))
    latents = timed("latents", lambda: prepare_latents(train_records, vae))
    conds = timed("conds", lambda: prepare_conditions(train_records, encoder))

    schedule = build_schedule(1000, "linear")
    # smaller instantiation of the spec's desk UNet structure (3 levels,
    # self+cross attention at the two finest) to fit the CPU budget
    dcfg = DenoiserConfig(
        latent_side=16, latent_channels=4, base_channels=32, channel_mults=(1, 2, 4),
        attention_levels=(0, 1), heads=4, cond_dim=128, cond_len=2, num_res_blocks=1, seed=0,
    )
    tcfg = TrainConfig(
        steps=DM_STEPS, batch_size=32, lr=2e-4, warmup=200,
        eval_interval=DM_EVAL_INTERVAL, seed=0,
    )
    result = timed(
        "dm_train", lambda: train_diffusion(latents, conds, dcfg, tcfg, schedule, root / "dm")
    )

    generate = reconstruction_generate_fn(vae, encoder, test_records[:96], 96, 20, seed=123)
    real_ref = np.stack([r.image for r in test_records[:256]])
    best_ckpt, curve = timed(
        "select", lambda: select_checkpoint(result.checkpoints, real_ref, extractor, generate)
    )

    regime = timed(
        "regime", lambda: nest_regimes(train_records, list(REGIME_SIZES), DEFAULT_LABELSET, seed=0)
    )
    by_id = {r.id: r for r in train_records}
    subset50 = [by_id[i] for i in regime.subsets[50]]

    synthesizer = build_synthesizer(best_ckpt, vae, encoder, n_steps=25)
    synth_dir = root / "synth-recon-1to5"
    timed(
        "synthesis",
        lambda: build_synthetic_dataset(
            subset50,
            SynthesisPlan(strategy="reconstruction", ratio=SYNTH_RATIO, seed=7),
            synthesizer,
            synth_dir,
            labelset=DEFAULT_LABELSET,
        ),
    )
    synth_records = load_records(synth_dir)

    rows = {}
    rows["real_only"] = timed(
        "exp_real",
        lambda: run_experiment(
            ExperimentPlan(mode="real_only", regime_size=50, seed=0, classifier=DESK_CLASSIFIER),
            subset50,
            test_records,
        ),
    )
    rows["augmentation"] = timed(
        "exp_aug",
        lambda: run_experiment(
            ExperimentPlan(
                mode="augmentation", regime_size=50, ratio=SYNTH_RATIO,
                strategy="reconstruction", seed=0, classifier=DESK_CLASSIFIER,
            ),
            subset50,
            test_records,
            synthetic_records=synth_records,
        ),
    )
    rows["copy_null"] = timed(
        "exp_copy",
        lambda: run_experiment(
            ExperimentPlan(
                mode="augmentation", regime_size=50, ratio=1, strategy="copy",
                seed=0, classifier=DESK_CLASSIFIER,
            ),
            subset50,
            test_records,
        ),
    )
    attach_significance(list(rows.values()))

    return DeskRun(
        root=root,
        train_records=train_records,
        test_records=test_records,
        vae=vae,
        encoder=encoder,
        extractor=extractor,
        extractor_model=ext_model,
        schedule=schedule,
        checkpoints=list(result.checkpoints),
        best_checkpoint=best_ckpt,
        fid_curve=curve,
        regime=regime,
        subset50=subset50,
        synth_dir=synth_dir,
        rows=rows,
        timings=timings,
    )

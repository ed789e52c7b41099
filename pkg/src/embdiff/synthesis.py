"""Synthetic data generation over the embedding manifold.

Two strategies: "reconstruction" re-samples a source image from its own
global tokens under fresh noise seeds; "interpolation" samples from the
linear mix of two sources' tokens, labelling the result by whichever source
the interpolation fraction is closest to. Dataset construction is ratio
driven (1:k real to synthetic) and fully reproducible from its manifest.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .artifacts import file_sha256
from .data.records import Provenance, SampleRecord
from .data.shards import write_shards
from .diffusion.sampling import sample_latents_per_seed
from .encoder import embed_global_batch, lerp_condition, GlobalCondition
from .errors import ConfigError, ContractError, DataError

STRATEGIES = ("reconstruction", "interpolation")


@dataclass(frozen=True)
class SynthesisPlan:
    strategy: str
    ratio: int  # denominator k of the 1:k real-to-synthetic ratio
    seed: int
    source_subset: str = "all"
    n_steps: int = 25

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}")
        if self.ratio < 1:
            raise ConfigError("ratio denominator must be >= 1")


@dataclass
class PairAssignment:
    pairs: list[tuple[str, str, float]]  # (id1, id2, r)


@dataclass
class Synthesizer:
    """Bundles the frozen pieces needed to turn conditions into images."""

    model: object  # CondUNet
    schedule: object  # NoiseSchedule
    vae: object  # Vae
    encoder: object  # VitImageEncoder
    n_steps: int = 25
    checkpoint_path: str | None = None

    def condition_for(self, record: SampleRecord) -> np.ndarray:
        return embed_global_batch(record.image[None], self.encoder)[0]

    def generate(self, conds: np.ndarray, seeds: list[int], batch: int = 32) -> np.ndarray:
        cfg = self.model.cfg
        latents = sample_latents_per_seed(
            self.model,
            conds,
            (cfg.latent_side, cfg.latent_side, cfg.latent_channels),
            self.schedule,
            self.n_steps,
            seeds,
            batch=batch,
        )
        latents = latents / self.vae.latent_scale
        return self.vae.decode_batch(latents)

    def checkpoint_hash(self) -> str:
        if self.checkpoint_path and Path(self.checkpoint_path).exists():
            return file_sha256(self.checkpoint_path)
        return "unknown"


def reconstruct(
    record: SampleRecord, n_variants: int, seeds: list[int], synthesizer: Synthesizer
) -> list[SampleRecord]:
    """Semantic variations of one record: same condition, fresh noise seeds."""
    if len(seeds) != n_variants:
        raise ContractError("need one seed per variant")
    cond = synthesizer.condition_for(record)
    conds = np.repeat(cond[None], n_variants, axis=0)
    images = synthesizer.generate(conds, seeds)
    out = []
    for img, seed in zip(images, seeds):
        out.append(
            SampleRecord(
                id=f"{record.id}-v{seed}",
                image=img,
                labels=record.labels.copy(),
                provenance=Provenance(
                    kind="synthetic", strategy="reconstruction", source_ids=(record.id,)
                ),
            )
        )
    return out


def interpolate_pair(
    rec1: SampleRecord,
    rec2: SampleRecord,
    r: float,
    synthesizer: Synthesizer,
    seed: int,
    sample_id: str | None = None,
) -> SampleRecord:
    """One synthetic record from the r-mix of two sources' global tokens."""
    if not (rec1.labels & rec2.labels).any():
        raise ContractError(f"records {rec1.id} and {rec2.id} share no label")
    enc_id = synthesizer.encoder.cfg.encoder_id
    c1 = GlobalCondition(tokens=synthesizer.condition_for(rec1), encoder_id=enc_id)
    c2 = GlobalCondition(tokens=synthesizer.condition_for(rec2), encoder_id=enc_id)
    mixed = lerp_condition(c1, c2, r)
    image = synthesizer.generate(mixed.tokens[None], [seed])[0]
    closest = rec1 if r <= 0.5 else rec2  # tie at 0.5 keeps the first record's labels
    return SampleRecord(
        id=sample_id or f"{rec1.id}-x-{rec2.id}-v{seed}",
        image=image,
        labels=closest.labels.copy(),
        provenance=Provenance(
            kind="synthetic",
            strategy="interpolation",
            source_ids=(rec1.id, rec2.id),
            r=float(r),
        ),
    )


def build_pairs(subset: list[SampleRecord], n_needed: int, seed: int) -> PairAssignment:
    """Uniform valid pairs (>=1 shared label), repeating with fresh r only
    once the unique pool is exhausted."""
    rng = np.random.default_rng(seed)
    valid = []
    for i in range(len(subset)):
        for j in range(i + 1, len(subset)):
            if (subset[i].labels & subset[j].labels).any():
                valid.append((subset[i].id, subset[j].id))
    if not valid:
        raise DataError("no pair of records shares a label")

    pairs: list[tuple[str, str, float]] = []
    seen_r: dict[tuple[str, str], set[float]] = {}
    while len(pairs) < n_needed:
        order = rng.permutation(len(valid))
        for idx in order:
            if len(pairs) >= n_needed:
                break
            id1, id2 = valid[idx]
            r = float(rng.uniform(0.0, 1.0))
            used = seen_r.setdefault((id1, id2), set())
            while r in used:  # repeated pairings must carry a distinct r
                r = float(rng.uniform(0.0, 1.0))
            used.add(r)
            pairs.append((id1, id2, r))
    return PairAssignment(pairs=pairs)


def build_synthetic_dataset(
    subset: list[SampleRecord],
    plan: SynthesisPlan,
    synthesizer: Synthesizer,
    out_dir: str | Path,
    labelset: tuple[str, ...] | None = None,
) -> dict:
    """Generate |subset| * ratio synthetic records into a shard directory."""
    if not subset:
        raise DataError("source subset is empty")
    n_total = len(subset) * plan.ratio
    records: list[SampleRecord] = []
    seed_base = np.random.SeedSequence([plan.seed, 0xD1F])
    sample_seeds = [int(s) for s in seed_base.generate_state(n_total)]

    pairs_meta = None
    if plan.strategy == "reconstruction":
        conds = np.stack([synthesizer.condition_for(rec) for rec in subset])
        rep_conds = np.repeat(conds, plan.ratio, axis=0)
        images = synthesizer.generate(rep_conds, sample_seeds)
        k = 0
        for rec in subset:
            for _ in range(plan.ratio):
                records.append(
                    SampleRecord(
                        id=f"{rec.id}-s{k:06d}",
                        image=images[k],
                        labels=rec.labels.copy(),
                        provenance=Provenance(
                            kind="synthetic",
                            strategy="reconstruction",
                            source_ids=(rec.id,),
                        ),
                    )
                )
                k += 1
    else:
        by_id = {rec.id: rec for rec in subset}
        assignment = build_pairs(subset, n_total, plan.seed)
        pairs_meta = [[a, b, r] for a, b, r in assignment.pairs]
        enc_id = synthesizer.encoder.cfg.encoder_id
        conds = {rec.id: synthesizer.condition_for(rec) for rec in subset}
        mixed = []
        for id1, id2, r in assignment.pairs:
            c1 = GlobalCondition(tokens=conds[id1], encoder_id=enc_id)
            c2 = GlobalCondition(tokens=conds[id2], encoder_id=enc_id)
            mixed.append(lerp_condition(c1, c2, r).tokens)
        images = synthesizer.generate(np.stack(mixed), sample_seeds)
        for k, (id1, id2, r) in enumerate(assignment.pairs):
            closest = by_id[id1] if r <= 0.5 else by_id[id2]
            records.append(
                SampleRecord(
                    id=f"mix-{plan.seed}-{k:06d}",
                    image=images[k],
                    labels=closest.labels.copy(),
                    provenance=Provenance(
                        kind="synthetic",
                        strategy="interpolation",
                        source_ids=(id1, id2),
                        r=float(r),
                    ),
                )
            )

    manifest = write_shards(
        records,
        out_dir,
        labelset=labelset,
        extra_manifest={
            "synthesis": {
                "strategy": plan.strategy,
                "ratio": plan.ratio,
                "seed": plan.seed,
                "source_subset": plan.source_subset,
                "n_steps": plan.n_steps,
                "checkpoint_hash": synthesizer.checkpoint_hash(),
                "encoder_id": synthesizer.encoder.cfg.encoder_id,
                "sample_seeds": sample_seeds,
                "pairs": pairs_meta,
            }
        },
    )
    return manifest


def normalized_cross_correlation(a: np.ndarray, b: np.ndarray) -> float:
    """Zero-lag NCC (Pearson correlation of pixel values); 1.0 iff affinely identical."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ContractError("images must share a shape")
    a = a - a.mean()
    b = b - b.mean()
    denom = np.sqrt((a * a).sum() * (b * b).sum())
    if denom == 0.0:
        return 1.0 if np.allclose(a, b) else 0.0
    return float((a * b).sum() / denom)

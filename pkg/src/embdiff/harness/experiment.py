"""Experiment designs: data-regime trainings, cross-validation, checkpoint
selection by generation quality.

Every run enforces the leakage rules: test ids never enter training or
synthesis sources, and full-synthetic trainings contain zero real records.
Synthetic data is filtered per fold so that only records whose sources all
lie in that fold's training split are used.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..data.records import Provenance, SampleRecord
from ..errors import ConfigError, ContractError, DataError, EmbdiffError
from ..metrics import auc_multilabel, fid, significance
from .classifier import ClassifierConfig, predict_scores, train_classifier
from .subsets import kfold

log = logging.getLogger(__name__)

MODES = ("real_only", "augmentation", "full_synthetic")


@dataclass(frozen=True)
class ExperimentPlan:
    mode: str
    regime_size: int
    ratio: int = 1
    strategy: str = "reconstruction"  # reconstruction | interpolation | copy (null control)
    folds: int = 5
    seed: int = 0
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.mode != "real_only" and self.ratio < 1:
            raise ConfigError("ratio denominator must be >= 1")

    @property
    def tag(self) -> str:
        if self.mode == "real_only":
            return f"real_only.N{self.regime_size}"
        return f"{self.mode}.{self.strategy}.1to{self.ratio}.N{self.regime_size}"


@dataclass
class ExperimentRow:
    plan: ExperimentPlan
    fold_aucs: list[float]
    mean: float
    sd: float
    p_vs_baseline: float | None = None

    def to_dict(self) -> dict:
        return {
            "tag": self.plan.tag,
            "mode": self.plan.mode,
            "strategy": self.plan.strategy if self.plan.mode != "real_only" else None,
            "ratio": self.plan.ratio if self.plan.mode != "real_only" else 0,
            "n": self.plan.regime_size,
            "fold_aucs": self.fold_aucs,
            "mean": self.mean,
            "sd": self.sd,
            "p_vs_baseline": self.p_vs_baseline,
        }


def _copy_synthetic(records: list[SampleRecord], ratio: int) -> list[SampleRecord]:
    """Null-control synthetic data: exact copies of the real records."""
    out = []
    for rec in records:
        for k in range(ratio):
            out.append(
                SampleRecord(
                    id=f"{rec.id}-copy{k}",
                    image=rec.image.copy(),
                    labels=rec.labels.copy(),
                    provenance=Provenance(
                        kind="synthetic", strategy="copy", source_ids=(rec.id,)
                    ),
                )
            )
    return out


def _check_leakage(train_records, test_ids: set[str]) -> None:
    for rec in train_records:
        if rec.id in test_ids:
            raise EmbdiffError(f"leakage: test id {rec.id} found in training set")
        for src in rec.provenance.source_ids:
            if src in test_ids:
                raise EmbdiffError(f"leakage: synthetic record {rec.id} sources test id {src}")


def run_experiment(
    plan: ExperimentPlan,
    subset_records: list[SampleRecord],
    test_records: list[SampleRecord],
    synthetic_records: list[SampleRecord] | None = None,
) -> ExperimentRow:
    """Cross-validated test AUC for one plan.

    subset_records is the data-regime subset; synthetic_records is the full
    synthetic pool for this plan (ignored for real_only, built on the fly for
    the copy control).
    """
    if len(subset_records) != plan.regime_size:
        raise ContractError(
            f"subset has {len(subset_records)} records, plan says {plan.regime_size}"
        )
    test_ids = {rec.id for rec in test_records}
    subset_ids = [rec.id for rec in subset_records]
    if test_ids & set(subset_ids):
        raise EmbdiffError("leakage: regime subset overlaps the test set")

    needs_synth = plan.mode != "real_only"
    if needs_synth and plan.strategy != "copy" and synthetic_records is None:
        raise DataError(f"plan {plan.tag} needs a synthetic dataset")

    by_id = {rec.id: rec for rec in subset_records}
    folds = kfold(subset_ids, plan.folds, plan.seed)
    test_images = np.stack([rec.image for rec in test_records])
    test_labels = np.stack([rec.labels for rec in test_records])

    fold_aucs = []
    for fold_idx, val_ids in enumerate(folds):
        val_set = set(val_ids)
        train_ids = [i for i in subset_ids if i not in val_set]
        train_real = [by_id[i] for i in train_ids]
        val_records = [by_id[i] for i in val_ids]

        if needs_synth:
            if plan.strategy == "copy":
                synth = _copy_synthetic(train_real, plan.ratio)
            else:
                train_set = set(train_ids)
                synth = [
                    s
                    for s in synthetic_records
                    if all(src in train_set for src in s.provenance.source_ids)
                ]
            if not synth:
                raise DataError(f"no usable synthetic records for fold {fold_idx}")
        else:
            synth = []

        if plan.mode == "real_only":
            train = train_real
        elif plan.mode == "augmentation":
            train = train_real + synth
        else:  # full_synthetic
            train = synth
            n_real = sum(1 for rec in train if rec.provenance.kind == "real")
            if n_real:
                raise EmbdiffError(
                    f"full_synthetic fold {fold_idx} contains {n_real} real records"
                )

        _check_leakage(train, test_ids)
        cfg = plan.classifier
        fold_cfg = ClassifierConfig(**{**cfg.__dict__, "seed": cfg.seed + fold_idx})
        model, _ = train_classifier(train, val_records, fold_cfg)
        scores = predict_scores(model, test_images)
        fold_aucs.append(auc_multilabel(scores, test_labels))

    return ExperimentRow(
        plan=plan,
        fold_aucs=fold_aucs,
        mean=float(np.mean(fold_aucs)),
        sd=float(np.std(fold_aucs, ddof=1)),
    )


def attach_significance(rows: list[ExperimentRow]) -> list[ExperimentRow]:
    """Welch p-value of every row against the real-only row of its regime."""
    baselines = {
        row.plan.regime_size: row for row in rows if row.plan.mode == "real_only"
    }
    for row in rows:
        base = baselines.get(row.plan.regime_size)
        if base is None or row is base:
            continue
        row.p_vs_baseline = significance(base.fold_aucs, row.fold_aucs)
    return rows


def select_checkpoint(
    checkpoints: list[str],
    real_images: np.ndarray,
    extractor,
    generate_fn,
) -> tuple[str, list[dict]]:
    """Pick the checkpoint whose generations minimize the Fréchet distance.

    generate_fn(checkpoint_path) -> synthetic image stack. Returns the best
    path and the full (checkpoint, fid) curve for reporting.
    """
    if not checkpoints:
        raise ContractError("need at least one checkpoint")
    identity = getattr(extractor, "identity", type(extractor).__name__)
    curve = []
    for path in checkpoints:
        synth = generate_fn(path)
        value = fid(real_images, synth, extractor)
        curve.append({"checkpoint": str(path), "fid": float(value), "extractor": identity})
        log.info("checkpoint %s: fid=%.4f", path, value)
    best = min(curve, key=lambda row: row["fid"])
    return best["checkpoint"], curve

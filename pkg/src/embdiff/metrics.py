"""Generation and classification metrics: Fréchet distance, Dice, macro AUC,
and a fold-level significance test.

The Fréchet distance uses a pluggable feature extractor; with Gaussian fits
(mu, Sigma) it is ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa Sb)^(1/2)). The
matrix square root is taken by symmetric eigendecomposition of
Sa^(1/2) Sb Sa^(1/2) with negative eigenvalues clipped at zero.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import ContractError, MetricError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FeatureStats:
    """Gaussian fit of a feature cloud: mean, unbiased covariance, count."""

    mean: np.ndarray
    cov: np.ndarray
    count: int


def feature_stats(features: np.ndarray) -> FeatureStats:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 2:
        raise ContractError(f"need an (n>=2, F) feature matrix, got {features.shape}")
    if not np.isfinite(features).all():
        raise ContractError("features contain non-finite values")
    mean = features.mean(axis=0)
    cov = np.cov(features, rowvar=False, ddof=1)
    cov = np.atleast_2d(cov)
    cov = (cov + cov.T) / 2.0
    return FeatureStats(mean=mean, cov=cov, count=features.shape[0])


def _sqrtm_psd(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh((mat + mat.T) / 2.0)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(a: FeatureStats, b: FeatureStats) -> float:
    if a.mean.shape != b.mean.shape:
        raise ContractError("feature dimensions differ")
    for s in (a, b):
        if not (np.isfinite(s.mean).all() and np.isfinite(s.cov).all()):
            raise ContractError("non-finite feature statistics")
    diff = a.mean - b.mean
    sqrt_a = _sqrtm_psd(a.cov)
    inner = sqrt_a @ b.cov @ sqrt_a
    vals = np.linalg.eigvalsh((inner + inner.T) / 2.0)
    tr_sqrt = np.sqrt(np.clip(vals, 0.0, None)).sum()
    value = float(diff @ diff + np.trace(a.cov) + np.trace(b.cov) - 2.0 * tr_sqrt)
    return max(0.0, value)


def fid(real_images, synth_images, extractor) -> float:
    """Fréchet distance between extractor features of two image sets."""
    feats_real = extractor(real_images)
    feats_synth = extractor(synth_images)
    return frechet_distance(feature_stats(feats_real), feature_stats(feats_synth))


def dice(mask_a: np.ndarray, mask_b: np.ndarray) -> float:
    """2|A n B| / (|A| + |B|); two empty masks compare equal (1.0)."""
    mask_a = np.asarray(mask_a, dtype=bool)
    mask_b = np.asarray(mask_b, dtype=bool)
    if mask_a.shape != mask_b.shape:
        raise ContractError(f"mask shapes differ: {mask_a.shape} vs {mask_b.shape}")
    total = int(mask_a.sum()) + int(mask_b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int((mask_a & mask_b).sum()) / total


def _auc_binary(scores: np.ndarray, labels: np.ndarray) -> float:
    """ROC AUC by the rank statistic; ties get midranks."""
    ranks = stats.rankdata(scores)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    pos_rank_sum = ranks[labels == 1].sum()
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def auc_multilabel(scores: np.ndarray, labels: np.ndarray) -> float:
    """Macro-average of per-label ROC AUCs; degenerate columns are skipped."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 2:
        raise ContractError(f"scores {scores.shape} and labels {labels.shape} must be (n, L)")
    aucs = []
    for col in range(scores.shape[1]):
        y = labels[:, col]
        n_pos = int(y.sum())
        if n_pos == 0 or n_pos == len(y):
            log.debug("label column %d has a single class; skipped in macro AUC", col)
            continue
        aucs.append(_auc_binary(scores[:, col], y))
    if not aucs:
        raise MetricError("every label column is degenerate; macro AUC undefined")
    return float(np.mean(aucs))


def significance(baseline_folds, treatment_folds) -> float:
    """Two-sided Welch t-test on per-fold scores."""
    a = np.asarray(baseline_folds, dtype=np.float64)
    b = np.asarray(treatment_folds, dtype=np.float64)
    if len(a) < 2 or len(b) < 2:
        raise ContractError("need at least 2 folds per group")
    if a.var(ddof=1) == 0.0 and b.var(ddof=1) == 0.0:
        return 1.0 if a.mean() == b.mean() else 0.0
    return float(stats.ttest_ind(a, b, equal_var=False).pvalue)

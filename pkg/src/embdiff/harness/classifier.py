"""Small multi-label classifier and its training recipe.

Training mirrors the downstream-evaluation recipe: AdamW, LR reduction on
validation-AUC plateau, early stopping after a fixed number of epochs without
improvement, best-validation weights restored at the end. The penultimate
pooled features double as the domain feature extractor for FID.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..encoder import images_to_tensor
from ..errors import ContractError, MetricError
from ..metrics import auc_multilabel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClassifierConfig:
    n_labels: int = 7
    channels: tuple[int, ...] = (16, 32, 64)
    max_epochs: int = 150
    batch_size: int = 64
    lr: float = 1e-4
    weight_decay: float = 1e-5
    plateau_patience: int = 10
    early_stop: int = 25  # epochs without val-AUC improvement
    seed: int = 0

    def __post_init__(self):
        for name in ("max_epochs", "batch_size", "plateau_patience", "early_stop"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be positive")


class SmallConvNet(nn.Module):
    def __init__(self, cfg: ClassifierConfig):
        super().__init__()
        torch.manual_seed(cfg.seed)
        layers = []
        ch_in = 3
        for ch in cfg.channels:
            layers += [
                nn.Conv2d(ch_in, ch, 3, stride=2, padding=1),
                nn.GroupNorm(min(8, ch), ch),
                nn.SiLU(),
            ]
            ch_in = ch
        self.body = nn.Sequential(*layers)
        self.head = nn.Linear(ch_in, cfg.n_labels)
        self.feature_dim = ch_in

    def features(self, x: torch.Tensor) -> torch.Tensor:
        return self.body(x).mean(dim=(2, 3))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.features(x))


@dataclass
class TrainTrace:
    val_auc: list[float] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1
    stopped_early: bool = False


def _val_auc(model, images, labels) -> float:
    model.eval()
    scores = predict_scores(model, images)
    model.train()
    try:
        return auc_multilabel(scores, labels)
    except MetricError:
        log.warning("validation AUC undefined (all labels degenerate); using 0.5")
        return 0.5


def train_classifier(train_records, val_records, cfg: ClassifierConfig):
    """Train on records, early-stopping on validation macro AUC.

    Returns (model, trace); the model carries the best-validation weights.
    """
    train_images = np.stack([r.image for r in train_records])
    train_labels = np.stack([r.labels for r in train_records]).astype(np.float32)
    val_images = np.stack([r.image for r in val_records])
    val_labels = np.stack([r.labels for r in val_records])
    if not ((train_labels.sum(axis=0) > 0) & (train_labels.sum(axis=0) < len(train_labels))).any():
        raise ContractError("training set needs both classes for at least one label")

    torch.manual_seed(cfg.seed)
    model = SmallConvNet(cfg)
    opt = torch.optim.AdamW(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    plateau = torch.optim.lr_scheduler.ReduceLROnPlateau(
        opt, mode="max", factor=0.5, patience=cfg.plateau_patience
    )
    order_rng = np.random.default_rng(cfg.seed)

    trace = TrainTrace()
    best_auc = -np.inf
    best_state = None
    since_best = 0

    model.train()
    for epoch in range(cfg.max_epochs):
        order = order_rng.permutation(len(train_images))
        losses = []
        for i in range(0, len(order), cfg.batch_size):
            idx = order[i : i + cfg.batch_size]
            x = images_to_tensor(train_images[idx])
            y = torch.from_numpy(train_labels[idx])
            logits = model(x)
            loss = F.binary_cross_entropy_with_logits(logits, y)
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(float(loss.detach()))
        trace.train_loss.append(float(np.mean(losses)))

        auc = _val_auc(model, val_images, val_labels)
        trace.val_auc.append(auc)
        plateau.step(auc)
        if auc > best_auc:
            best_auc = auc
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
            trace.best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.early_stop:
                trace.stopped_early = True
                break

    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    return model, trace


@torch.no_grad()
def predict_scores(model, images: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Per-label sigmoid scores, (n, L)."""
    outs = []
    for i in range(0, len(images), batch_size):
        logits = model(images_to_tensor(np.asarray(images[i : i + batch_size])))
        outs.append(torch.sigmoid(logits).numpy())
    return np.concatenate(outs, axis=0)


@torch.no_grad()
def extract_features(model, images: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Penultimate pooled features, (n, F); the desk FID feature space."""
    outs = []
    for i in range(0, len(images), batch_size):
        outs.append(model.features(images_to_tensor(np.asarray(images[i : i + batch_size]))).numpy())
    return np.concatenate(outs, axis=0)


@dataclass
class ClassifierFeatureExtractor:
    """Callable image -> feature map with a stable identity string."""

    model: SmallConvNet
    identity: str = "smallconvnet-penultimate"

    def __call__(self, images) -> np.ndarray:
        return extract_features(self.model, np.asarray(images))


def save_classifier(model: SmallConvNet, cfg: ClassifierConfig, path) -> None:
    from ..artifacts import save_weights

    arrays = {k: v.detach().numpy() for k, v in model.state_dict().items()}
    meta = dict(cfg.__dict__)
    meta["channels"] = list(cfg.channels)
    save_weights(path, arrays, meta={"classifier": meta})


def load_classifier(path) -> tuple[SmallConvNet, ClassifierConfig]:
    from ..artifacts import load_weights

    arrays, meta = load_weights(path)
    d = dict(meta["classifier"])
    d["channels"] = tuple(d["channels"])
    cfg = ClassifierConfig(**d)
    model = SmallConvNet(cfg)
    model.load_state_dict({k: torch.from_numpy(v) for k, v in arrays.items()})
    model.eval()
    return model, cfg

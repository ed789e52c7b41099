"""Diffusion training: noise-prediction MSE steps, warmup, checkpoints.

The trained target is the injected noise; loss is mean squared error between
predicted and actual noise with t drawn uniformly per sample. A non-finite
loss aborts the run, keeping the last written checkpoint.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from ..artifacts import load_weights, save_weights
from ..errors import ContractError, TrainingError
from .schedule import NoiseSchedule, q_sample
from .unet import CondUNet, DenoiserConfig


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 2000
    batch_size: int = 32
    lr: float = 1e-4
    warmup: int = 1000  # linear ramp, then constant
    eval_interval: int = 500  # checkpoint cadence
    seed: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def noise_mse(eps_hat: torch.Tensor, eps: torch.Tensor) -> torch.Tensor:
    """Per-element mean squared error between predicted and actual noise."""
    if eps_hat.shape != eps.shape:
        raise ContractError(f"eps_hat shape {tuple(eps_hat.shape)} != eps {tuple(eps.shape)}")
    return F.mse_loss(eps_hat, eps)


def training_step(
    model: CondUNet,
    opt: torch.optim.Optimizer,
    z0: torch.Tensor,
    cond: torch.Tensor,
    schedule: NoiseSchedule,
    generator: torch.Generator,
    t: torch.Tensor | None = None,
    eps: torch.Tensor | None = None,
) -> float:
    """One optimizer step; returns the loss. t and eps are drawn unless given."""
    b = z0.shape[0]
    if t is None:
        t = torch.randint(0, schedule.T, (b,), generator=generator)
    if eps is None:
        eps = torch.randn(z0.shape, generator=generator)
    z_t = q_sample(z0, t.numpy(), eps, schedule)
    eps_hat = model(z_t, t, cond)
    loss = noise_mse(eps_hat, eps)
    if not torch.isfinite(loss):
        raise TrainingError(f"diffusion loss became non-finite ({float(loss.detach())})")
    opt.zero_grad()
    loss.backward()
    opt.step()
    return float(loss.detach())


def save_checkpoint(
    path: str | Path,
    model: CondUNet,
    schedule: NoiseSchedule,
    step: int,
    extra_meta: dict | None = None,
) -> None:
    arrays = {f"param/{k}": v.detach().numpy() for k, v in model.state_dict().items()}
    arrays["schedule/betas"] = schedule.betas
    meta = {
        "denoiser": model.cfg.to_dict(),
        "schedule_kind": schedule.kind,
        "step": step,
    }
    if extra_meta:
        meta.update(extra_meta)
    save_weights(path, arrays, meta)


def load_checkpoint(path: str | Path) -> tuple[CondUNet, NoiseSchedule, dict]:
    arrays, meta = load_weights(path)
    cfg = DenoiserConfig.from_dict(meta["denoiser"])
    model = CondUNet(cfg)
    state = {
        k[len("param/") :]: torch.from_numpy(v)
        for k, v in arrays.items()
        if k.startswith("param/")
    }
    model.load_state_dict(state)
    model.eval()
    schedule = NoiseSchedule(betas=arrays["schedule/betas"], kind=meta.get("schedule_kind", "linear"))
    return model, schedule, meta


@dataclass
class TrainResult:
    losses: list[float]
    checkpoints: list[str]
    final_checkpoint: str
    aborted: bool = False
    history_path: str | None = None


def train_diffusion(
    latents: np.ndarray,
    conds: np.ndarray,
    denoiser_cfg: DenoiserConfig,
    train_cfg: TrainConfig,
    schedule: NoiseSchedule,
    out_dir: str | Path,
) -> TrainResult:
    """Train a CondUNet on (latent, condition) pairs, checkpointing as it goes.

    latents: (B, h, w, k) float32, already scaled for diffusion.
    conds: (B, S_g, N) float32.
    """
    if len(latents) != len(conds):
        raise ContractError("latents and conds must align")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    z_all = torch.from_numpy(np.asarray(latents, dtype=np.float32)).permute(0, 3, 1, 2)
    c_all = torch.from_numpy(np.asarray(conds, dtype=np.float32))

    model = CondUNet(denoiser_cfg)
    model.train()
    opt = torch.optim.Adam(model.parameters(), lr=train_cfg.lr)
    sched = torch.optim.lr_scheduler.LambdaLR(
        opt, lambda step: min(1.0, (step + 1) / max(1, train_cfg.warmup))
    )
    gen = torch.Generator().manual_seed(train_cfg.seed)
    idx_rng = np.random.default_rng(train_cfg.seed)

    losses: list[float] = []
    checkpoints: list[str] = []

    def write_ckpt(step):
        path = out_dir / f"step-{step:06d}.npz"
        model.eval()
        save_checkpoint(path, model, schedule, step, {"train": train_cfg.to_dict()})
        model.train()
        checkpoints.append(str(path))

    aborted = False
    for step in range(1, train_cfg.steps + 1):
        batch_idx = idx_rng.integers(0, len(z_all), size=train_cfg.batch_size)
        try:
            loss = training_step(
                model, opt, z_all[batch_idx], c_all[batch_idx], schedule, gen
            )
        except TrainingError:
            aborted = True  # keep the last good checkpoint
            break
        sched.step()
        losses.append(loss)
        if step % train_cfg.eval_interval == 0:
            write_ckpt(step)

    if not checkpoints:
        write_ckpt(len(losses))
    final = checkpoints[-1]
    history_path = out_dir / "training_history.json"
    history_path.write_text(json.dumps({"losses": losses, "aborted": aborted}))
    return TrainResult(
        losses=losses,
        checkpoints=checkpoints,
        final_checkpoint=final,
        aborted=aborted,
        history_path=str(history_path),
    )

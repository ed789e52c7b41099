"""Latent compression: a small convolutional VAE plus a pixel pass-through mode.

Encoding is deterministic (posterior mean); stochastic sampling happens only
inside VAE training. After training the weights are frozen for all diffusion
work. Pass-through mode (down_factor=1, channels=3) maps pixels to [-1, 1]
and back exactly, for the smallest experiments.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .artifacts import load_weights, save_weights
from .encoder import images_to_tensor
from .errors import ConfigError, ContractError, TrainingError


@dataclass(frozen=True)
class VaeConfig:
    side: int = 64
    down_factor: int = 4  # d; paper-scale uses 8, desk default keeps 16x16 latents
    channels: int = 4  # k
    base_channels: int = 32
    kl_weight: float = 1e-4  # empirical default; not a published value
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.down_factor not in (1, 2, 4, 8):
            raise ConfigError("down_factor must be one of 1, 2, 4, 8")
        if self.side % self.down_factor:
            raise ConfigError("side must be divisible by down_factor")
        if self.down_factor == 1 and self.channels != 3:
            raise ConfigError("pass-through mode requires channels=3")

    @property
    def passthrough(self) -> bool:
        return self.down_factor == 1

    @property
    def latent_side(self) -> int:
        return self.side // self.down_factor


def _check_image(img: np.ndarray, side: int) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ContractError(f"expected HxWx3 image, got {img.shape}")
    if img.shape[0] != side or img.shape[1] != side:
        raise ContractError(f"expected side {side}, got {img.shape[:2]}")
    return img


class _ConvVae(nn.Module):
    def __init__(self, cfg: VaeConfig):
        super().__init__()
        c = cfg.base_channels
        k = cfg.channels
        n_down = int(np.log2(cfg.down_factor))
        enc = []
        ch_in = 3
        for i in range(n_down):
            ch_out = c * (2**i)
            enc += [nn.Conv2d(ch_in, ch_out, 4, stride=2, padding=1), nn.SiLU()]
            ch_in = ch_out
        enc += [nn.Conv2d(ch_in, ch_in, 3, padding=1), nn.SiLU()]
        self.encoder = nn.Sequential(*enc)
        self.to_moments = nn.Conv2d(ch_in, 2 * k, 1)

        dec = [nn.Conv2d(k, ch_in, 3, padding=1), nn.SiLU()]
        for i in reversed(range(n_down)):
            ch_out = c * (2 ** max(i - 1, 0)) if i > 0 else c
            dec += [nn.ConvTranspose2d(ch_in, ch_out, 4, stride=2, padding=1), nn.SiLU()]
            ch_in = ch_out
        dec += [nn.Conv2d(ch_in, 3, 3, padding=1), nn.Tanh()]
        self.decoder = nn.Sequential(*dec)

    def moments(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        mu, logvar = self.to_moments(self.encoder(x)).chunk(2, dim=1)
        return mu, logvar.clamp(-20.0, 10.0)

    def forward(self, x: torch.Tensor, generator: torch.Generator | None = None):
        mu, logvar = self.moments(x)
        eps = torch.randn(mu.shape, generator=generator, dtype=mu.dtype)
        z = mu + torch.exp(0.5 * logvar) * eps
        return self.decoder(z), mu, logvar


@dataclass
class Vae:
    """Frozen compression model; numpy HWC in, numpy HWC out."""

    cfg: VaeConfig
    net: _ConvVae | None = None
    latent_scale: float = 1.0
    history: dict = field(default_factory=dict)

    def encode(self, img: np.ndarray) -> np.ndarray:
        """Image -> latent (H/d, W/d, k) float32, posterior mean."""
        img = _check_image(img, self.cfg.side)
        if self.cfg.passthrough:
            return (img.astype(np.float32) / 127.5 - 1.0).astype(np.float32)
        with torch.no_grad():
            mu, _ = self.net.moments(images_to_tensor(img))
        return mu[0].permute(1, 2, 0).numpy()

    def encode_batch(self, images: np.ndarray, batch_size: int = 64) -> np.ndarray:
        if self.cfg.passthrough:
            return (np.asarray(images, dtype=np.float32) / 127.5 - 1.0).astype(np.float32)
        outs = []
        with torch.no_grad():
            for i in range(0, len(images), batch_size):
                mu, _ = self.net.moments(images_to_tensor(np.asarray(images[i : i + batch_size])))
                outs.append(mu.permute(0, 2, 3, 1).numpy())
        return np.concatenate(outs, axis=0)

    def decode(self, z: np.ndarray) -> np.ndarray:
        """Latent -> uint8 image on the training side."""
        z = np.asarray(z, dtype=np.float32)
        expect = (self.cfg.latent_side, self.cfg.latent_side, self.cfg.channels)
        if z.shape != expect:
            raise ContractError(f"latent shape {z.shape} != {expect}")
        if self.cfg.passthrough:
            return np.clip(np.rint((z + 1.0) * 127.5), 0, 255).astype(np.uint8)
        with torch.no_grad():
            x = self.net.decoder(torch.from_numpy(z).permute(2, 0, 1)[None])
        x = (x[0].permute(1, 2, 0).numpy() + 1.0) * 127.5
        return np.clip(np.rint(x), 0, 255).astype(np.uint8)

    def decode_batch(self, z: np.ndarray, batch_size: int = 64) -> np.ndarray:
        z = np.asarray(z, dtype=np.float32)
        if self.cfg.passthrough:
            return np.clip(np.rint((z + 1.0) * 127.5), 0, 255).astype(np.uint8)
        outs = []
        with torch.no_grad():
            for i in range(0, len(z), batch_size):
                t = torch.from_numpy(z[i : i + batch_size]).permute(0, 3, 1, 2)
                x = self.net.decoder(t).permute(0, 2, 3, 1).numpy()
                outs.append(x)
        x = (np.concatenate(outs, axis=0) + 1.0) * 127.5
        return np.clip(np.rint(x), 0, 255).astype(np.uint8)

    def weight_hash(self) -> str:
        if self.net is None:
            return "passthrough"
        h = hashlib.sha256()
        for name, tensor in sorted(self.net.state_dict().items()):
            h.update(name.encode())
            h.update(tensor.numpy().tobytes())
        return h.hexdigest()

    def save(self, path) -> None:
        arrays = {}
        if self.net is not None:
            arrays = {k: v.numpy() for k, v in self.net.state_dict().items()}
        save_weights(
            path,
            arrays,
            meta={
                "config": self.cfg.__dict__,
                "latent_scale": self.latent_scale,
                "history": self.history,
            },
        )

    @classmethod
    def load(cls, path) -> "Vae":
        arrays, meta = load_weights(path)
        cfg = VaeConfig(**meta["config"])
        vae = build_vae(cfg)
        if not cfg.passthrough:
            state = {k: torch.from_numpy(v) for k, v in arrays.items()}
            vae.net.load_state_dict(state)
            vae.net.eval()
            vae.net.requires_grad_(False)
        vae.latent_scale = float(meta.get("latent_scale", 1.0))
        vae.history = meta.get("history", {})
        return vae


def build_vae(cfg: VaeConfig) -> Vae:
    if cfg.passthrough:
        return Vae(cfg=cfg, net=None)
    torch.manual_seed(cfg.seed)
    net = _ConvVae(cfg)
    net.eval()
    return Vae(cfg=cfg, net=net)


def _eval_recon_loss(net: _ConvVae, x: torch.Tensor) -> float:
    """Deterministic reconstruction MSE using the posterior mean."""
    with torch.no_grad():
        mu, _ = net.moments(x)
        recon = net.decoder(mu)
        return float(F.mse_loss(recon, x))


def train_vae(images: np.ndarray, cfg: VaeConfig) -> Vae:
    """Train the conv VAE; returns a frozen model with loss history attached.

    images: (B, H, W, 3) uint8, B >= 100. Loss is reconstruction MSE plus
    kl_weight * KL(q(z|x) || N(0, I)). Non-finite loss aborts.
    """
    images = np.asarray(images)
    if cfg.passthrough:
        raise ConfigError("pass-through mode has no trainable weights")
    if len(images) < 100:
        raise ContractError(f"need >= 100 training images, got {len(images)}")

    torch.manual_seed(cfg.seed)
    net = _ConvVae(cfg)
    opt = torch.optim.Adam(net.parameters(), lr=cfg.lr)
    gen = torch.Generator().manual_seed(cfg.seed)
    order_rng = np.random.default_rng(cfg.seed)

    eval_x = images_to_tensor(images[: min(256, len(images))])
    eval_losses = [_eval_recon_loss(net, eval_x)]
    train_losses = []

    net.train()
    for epoch in range(cfg.epochs):
        order = order_rng.permutation(len(images))
        epoch_losses = []
        for i in range(0, len(order), cfg.batch_size):
            x = images_to_tensor(images[order[i : i + cfg.batch_size]])
            recon, mu, logvar = net(x, generator=gen)
            recon_loss = F.mse_loss(recon, x)
            kl = -0.5 * torch.mean(1 + logvar - mu.pow(2) - logvar.exp())
            loss = recon_loss + cfg.kl_weight * kl
            if not torch.isfinite(loss):
                raise TrainingError(
                    f"VAE loss became non-finite at epoch {epoch} "
                    f"(recon={float(recon_loss):.4g}, kl={float(kl):.4g})"
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_losses.append(float(loss.detach()))
        net.eval()
        eval_losses.append(_eval_recon_loss(net, eval_x))
        net.train()
        train_losses.append(float(np.mean(epoch_losses)))

    net.eval()
    net.requires_grad_(False)
    vae = Vae(cfg=cfg, net=net)
    sample = vae.encode_batch(images[: min(256, len(images))])
    std = float(sample.std())
    vae.latent_scale = 1.0 / std if std > 1e-8 else 1.0
    vae.history = {"train_loss": train_losses, "eval_recon": eval_losses}
    return vae

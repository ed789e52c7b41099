"""Frozen vision-transformer image encoder and the global-token bottleneck.

The encoder maps an image to a token set (class token, optional pooler token,
optional register tokens, patch tokens). Conditioning uses only the global
rows: ``[cls; pooler; registers]``. Patch tokens are deliberately dropped —
they carry enough local detail to make generation a copy task.

Desk-scale default is a 4-block ViT with frozen, seed-determined weights; a
weights file can swap in a genuinely pretrained encoder with the same layout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .artifacts import load_weights, save_weights
from .errors import ConfigError, ContractError

VARIANTS = {
    # v1-style: pooler token, no registers. v2-style: 4 registers, no pooler.
    "v1": {"pooler": True, "registers": 0},
    "v2": {"pooler": False, "registers": 4},
}


@dataclass(frozen=True)
class EncoderConfig:
    variant: str = "v1"
    depth: int = 4
    heads: int = 4
    embed_dim: int = 128
    patch_size: int = 8
    seed: int = 0
    weights_file: str | None = None
    final_norm: bool = True  # layer-norm tokens before use; configurable, not claimed canonical

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown encoder variant {self.variant!r}")
        if self.embed_dim % self.heads != 0:
            raise ConfigError("embed_dim must be divisible by heads")

    @property
    def has_pooler(self) -> bool:
        return VARIANTS[self.variant]["pooler"]

    @property
    def n_registers(self) -> int:
        return VARIANTS[self.variant]["registers"]

    @property
    def n_global(self) -> int:
        return 1 + int(self.has_pooler) + self.n_registers

    @property
    def encoder_id(self) -> str:
        src = "file" if self.weights_file else f"seed{self.seed}"
        return (
            f"vit-{self.variant}-d{self.depth}h{self.heads}"
            f"n{self.embed_dim}p{self.patch_size}-{src}"
        )


@dataclass
class TokenSet:
    """Full encoder output for one image."""

    cls: np.ndarray  # (N,)
    pooler: np.ndarray | None  # (N,) or None
    registers: np.ndarray  # (R, N), R >= 0
    patches: np.ndarray  # (L, N)
    embed_dim: int
    patch_size: int
    encoder_id: str


@dataclass
class GlobalCondition:
    """The conditioning bottleneck: global tokens only, (S_g, N)."""

    tokens: np.ndarray
    encoder_id: str

    def __post_init__(self):
        self.tokens = np.asarray(self.tokens, dtype=np.float32)
        if self.tokens.ndim != 2 or self.tokens.shape[0] < 1:
            raise ContractError(f"condition tokens must be (S_g>=1, N), got {self.tokens.shape}")


class _Block(nn.Module):
    def __init__(self, dim, heads):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(
            nn.Linear(dim, dim * 4), nn.GELU(), nn.Linear(dim * 4, dim)
        )

    def forward(self, x):
        h = self.norm1(x)
        x = x + self.attn(h, h, h, need_weights=False)[0]
        return x + self.mlp(self.norm2(x))


class VitImageEncoder(nn.Module):
    """Small ViT; weights are frozen right after construction or loading."""

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        n, p = cfg.embed_dim, cfg.patch_size
        torch.manual_seed(cfg.seed)
        self.patch_embed = nn.Conv2d(3, n, kernel_size=p, stride=p)
        self.cls_token = nn.Parameter(torch.randn(1, 1, n) * 0.02)
        self.register_tokens = nn.Parameter(torch.randn(1, cfg.n_registers, n) * 0.02)
        self.blocks = nn.ModuleList(_Block(n, cfg.heads) for _ in range(cfg.depth))
        self.norm = nn.LayerNorm(n)
        self.pooler = nn.Linear(n, n) if cfg.has_pooler else None
        self._pos_cache: dict[int, torch.Tensor] = {}

        if cfg.weights_file:
            arrays, _ = load_weights(cfg.weights_file)
            state = {k: torch.from_numpy(v) for k, v in arrays.items()}
            self.load_state_dict(state)
        self.eval()
        self.requires_grad_(False)

    def _pos_embedding(self, n_patches: int) -> torch.Tensor:
        # Fixed sinusoidal table over (specials + patches); deterministic, any grid.
        total = 1 + self.cfg.n_registers + n_patches
        key = total
        if key not in self._pos_cache:
            n = self.cfg.embed_dim
            pos = torch.arange(total, dtype=torch.float32)[:, None]
            i = torch.arange(n // 2, dtype=torch.float32)[None, :]
            angle = pos / torch.pow(10000.0, 2 * i / n)
            emb = torch.zeros(total, n)
            emb[:, 0::2] = torch.sin(angle)
            emb[:, 1::2] = torch.cos(angle)
            self._pos_cache[key] = emb[None]
        return self._pos_cache[key]

    @torch.no_grad()
    def forward(self, images: torch.Tensor) -> dict[str, torch.Tensor]:
        """images: (B, 3, H, W) in [-1, 1]; returns token groups."""
        b, _, h, w = images.shape
        p = self.cfg.patch_size
        if h % p or w % p:
            raise ContractError(f"image side {h}x{w} not divisible by patch size {p}")
        x = self.patch_embed(images).flatten(2).transpose(1, 2)  # (B, L, N)
        specials = [self.cls_token.expand(b, -1, -1)]
        if self.cfg.n_registers:
            specials.append(self.register_tokens.expand(b, -1, -1))
        x = torch.cat(specials + [x], dim=1)
        x = x + self._pos_embedding(x.shape[1] - 1 - self.cfg.n_registers).to(x.dtype)
        for block in self.blocks:
            x = block(x)
        if self.cfg.final_norm:
            x = self.norm(x)
        r = self.cfg.n_registers
        out = {
            "cls": x[:, 0],
            "registers": x[:, 1 : 1 + r],
            "patches": x[:, 1 + r :],
        }
        if self.pooler is not None:
            out["pooler"] = torch.tanh(self.pooler(out["cls"]))
        return out

    def save(self, path) -> None:
        arrays = {k: v.detach().cpu().numpy() for k, v in self.state_dict().items()}
        save_weights(path, arrays, meta={"encoder_id": self.cfg.encoder_id})


def images_to_tensor(images: np.ndarray) -> torch.Tensor:
    """uint8 (B, H, W, 3) or (H, W, 3) -> float tensor (B, 3, H, W) in [-1, 1]."""
    arr = np.asarray(images)
    if arr.ndim == 3:
        arr = arr[None]
    t = torch.from_numpy(arr.astype(np.float32) / 127.5 - 1.0)
    return t.permute(0, 3, 1, 2).contiguous()


def embed(image: np.ndarray, encoder: VitImageEncoder) -> TokenSet:
    """Encode one image into its full token set (frozen, deterministic)."""
    out = encoder(images_to_tensor(image))
    cfg = encoder.cfg
    return TokenSet(
        cls=out["cls"][0].numpy(),
        pooler=out["pooler"][0].numpy() if "pooler" in out else None,
        registers=out["registers"][0].numpy(),
        patches=out["patches"][0].numpy(),
        embed_dim=cfg.embed_dim,
        patch_size=cfg.patch_size,
        encoder_id=cfg.encoder_id,
    )


def global_tokens(tokens: TokenSet) -> GlobalCondition:
    """Reduce a token set to [cls; pooler; registers]; patch tokens are dropped."""
    rows = [tokens.cls[None]]
    if tokens.pooler is not None:
        rows.append(tokens.pooler[None])
    if tokens.registers.size:
        rows.append(tokens.registers)
    return GlobalCondition(tokens=np.concatenate(rows, axis=0), encoder_id=tokens.encoder_id)


def embed_global_batch(images: np.ndarray, encoder: VitImageEncoder, batch_size: int = 64) -> np.ndarray:
    """Global-condition tokens for a stack of images, (B, S_g, N)."""
    chunks = []
    for i in range(0, len(images), batch_size):
        out = encoder(images_to_tensor(images[i : i + batch_size]))
        rows = [out["cls"][:, None]]
        if "pooler" in out:
            rows.append(out["pooler"][:, None])
        if encoder.cfg.n_registers:
            rows.append(out["registers"])
        chunks.append(torch.cat(rows, dim=1).numpy())
    return np.concatenate(chunks, axis=0)


def lerp_condition(c1: GlobalCondition, c2: GlobalCondition, r: float) -> GlobalCondition:
    """Elementwise (1 - r) * c1 + r * c2 over the global tokens."""
    if not 0.0 <= r <= 1.0:
        raise ContractError(f"interpolation fraction r={r} outside [0, 1]")
    if c1.tokens.shape != c2.tokens.shape:
        raise ContractError(f"condition shapes differ: {c1.tokens.shape} vs {c2.tokens.shape}")
    if c1.encoder_id != c2.encoder_id:
        raise ContractError(f"encoder mismatch: {c1.encoder_id} vs {c2.encoder_id}")
    mixed = (1.0 - r) * c1.tokens + r * c2.tokens
    return GlobalCondition(tokens=mixed.astype(np.float32), encoder_id=c1.encoder_id)

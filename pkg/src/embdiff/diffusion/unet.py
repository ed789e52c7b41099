"""Conditional UNet denoiser with self/cross attention and attention capture.

Spatial positions cross-attend to the global condition tokens; a learned slot
embedding marks each condition row's role, so row order is meaningful. Self
attention probabilities can be captured per block (head-averaged, rows
renormalized) without affecting the prediction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import ConfigError, ContractError


@dataclass(frozen=True)
class DenoiserConfig:
    latent_side: int = 16
    latent_channels: int = 4
    base_channels: int = 64
    channel_mults: tuple[int, ...] = (1, 2, 4)
    attention_levels: tuple[int, ...] = (0, 1)  # level indices carrying self+cross attention
    heads: int = 4
    cond_dim: int = 128  # N of the encoder
    cond_len: int = 2  # S_g rows in the condition
    num_res_blocks: int = 1
    seed: int = 0

    def __post_init__(self):
        if any(a >= len(self.channel_mults) for a in self.attention_levels):
            raise ConfigError("attention levels must index into channel_mults")
        if self.latent_side % (2 ** (len(self.channel_mults) - 1)):
            raise ConfigError("latent side must be divisible by 2^(levels-1)")

    def to_dict(self) -> dict:
        d = self.__dict__.copy()
        d["channel_mults"] = list(self.channel_mults)
        d["attention_levels"] = list(self.attention_levels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DenoiserConfig":
        d = dict(d)
        d["channel_mults"] = tuple(d["channel_mults"])
        d["attention_levels"] = tuple(d["attention_levels"])
        return cls(**d)


@dataclass
class AttentionMap:
    block_id: str
    h: int
    w: int
    probs: np.ndarray  # (h*w, h*w), head-averaged, rows sum to 1


@dataclass
class AttentionStack:
    timestep: int
    maps: list[AttentionMap] = field(default_factory=list)


def _groups(ch: int) -> int:
    for g in (8, 4, 2, 1):
        if ch % g == 0:
            return g
    return 1


def timestep_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Standard sinusoidal embedding of integer timesteps."""
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float32) / half)
    args = t.float()[:, None] * freqs[None]
    emb = torch.cat([torch.cos(args), torch.sin(args)], dim=-1)
    if dim % 2:
        emb = F.pad(emb, (0, 1))
    return emb


class ResBlock(nn.Module):
    def __init__(self, ch_in, ch_out, time_dim):
        super().__init__()
        self.norm1 = nn.GroupNorm(_groups(ch_in), ch_in)
        self.conv1 = nn.Conv2d(ch_in, ch_out, 3, padding=1)
        self.time_proj = nn.Linear(time_dim, ch_out)
        self.norm2 = nn.GroupNorm(_groups(ch_out), ch_out)
        self.conv2 = nn.Conv2d(ch_out, ch_out, 3, padding=1)
        self.skip = nn.Conv2d(ch_in, ch_out, 1) if ch_in != ch_out else nn.Identity()

    def forward(self, x, t_emb):
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.time_proj(F.silu(t_emb))[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return h + self.skip(x)


class AttnBlock(nn.Module):
    """Self-attention over spatial cells, then cross-attention to the condition."""

    def __init__(self, ch, heads, cond_dim, block_id):
        super().__init__()
        self.heads = heads
        self.block_id = block_id
        self.norm_self = nn.GroupNorm(_groups(ch), ch)
        self.qkv = nn.Linear(ch, 3 * ch)
        self.proj_self = nn.Linear(ch, ch)
        self.norm_cross = nn.GroupNorm(_groups(ch), ch)
        self.q_cross = nn.Linear(ch, ch)
        self.kv_cross = nn.Linear(cond_dim, 2 * ch)
        self.proj_cross = nn.Linear(ch, ch)

    def _heads(self, x):
        b, s, c = x.shape
        return x.view(b, s, self.heads, c // self.heads).transpose(1, 2)

    def _merge(self, x):
        b, nh, s, hd = x.shape
        return x.transpose(1, 2).reshape(b, s, nh * hd)

    def forward(self, x, cond, capture: list | None = None):
        b, c, h, w = x.shape

        seq = self.norm_self(x).flatten(2).transpose(1, 2)  # (B, hw, C)
        q, k, v = self.qkv(seq).chunk(3, dim=-1)
        q, k, v = self._heads(q), self._heads(k), self._heads(v)
        scores = q @ k.transpose(-2, -1) / math.sqrt(q.shape[-1])
        probs = scores.softmax(dim=-1)
        if capture is not None:
            avg = probs.mean(dim=1)  # over heads
            avg = avg / avg.sum(dim=-1, keepdim=True)
            capture.append(
                AttentionMap(block_id=self.block_id, h=h, w=w, probs=avg[0].detach().numpy())
            )
        attn = self._merge(probs @ v)
        x = x + self.proj_self(attn).transpose(1, 2).view(b, c, h, w)

        seq = self.norm_cross(x).flatten(2).transpose(1, 2)
        q = self._heads(self.q_cross(seq))
        k, v = self.kv_cross(cond).chunk(2, dim=-1)
        k, v = self._heads(k), self._heads(v)
        scores = q @ k.transpose(-2, -1) / math.sqrt(q.shape[-1])
        attn = self._merge(scores.softmax(dim=-1) @ v)
        x = x + self.proj_cross(attn).transpose(1, 2).view(b, c, h, w)
        return x


class CondUNet(nn.Module):
    """Noise predictor eps(z_t, t, c); built deterministically from its seed."""

    def __init__(self, cfg: DenoiserConfig):
        super().__init__()
        self.cfg = cfg
        torch.manual_seed(cfg.seed)
        chs = [cfg.base_channels * m for m in cfg.channel_mults]
        time_dim = cfg.base_channels * 4
        self.time_mlp = nn.Sequential(
            nn.Linear(cfg.base_channels, time_dim), nn.SiLU(), nn.Linear(time_dim, time_dim)
        )
        self.slot_embed = nn.Parameter(torch.randn(1, cfg.cond_len, cfg.cond_dim) * 0.02)
        self.conv_in = nn.Conv2d(cfg.latent_channels, chs[0], 3, padding=1)

        self.down_res = nn.ModuleList()
        self.down_attn = nn.ModuleList()
        self.downsamples = nn.ModuleList()
        ch = chs[0]
        for i, ch_out in enumerate(chs):
            blocks = nn.ModuleList()
            for j in range(cfg.num_res_blocks):
                blocks.append(ResBlock(ch if j == 0 else ch_out, ch_out, time_dim))
            self.down_res.append(blocks)
            self.down_attn.append(
                AttnBlock(ch_out, cfg.heads, cfg.cond_dim, f"down{i}")
                if i in cfg.attention_levels
                else None
            )
            self.downsamples.append(
                nn.Conv2d(ch_out, ch_out, 3, stride=2, padding=1) if i < len(chs) - 1 else None
            )
            ch = ch_out

        self.mid_res1 = ResBlock(ch, ch, time_dim)
        self.mid_attn = AttnBlock(ch, cfg.heads, cfg.cond_dim, "mid")
        self.mid_res2 = ResBlock(ch, ch, time_dim)

        self.up_res = nn.ModuleList()
        self.up_attn = nn.ModuleList()
        self.upsamples = nn.ModuleList()
        for i in reversed(range(len(chs))):
            ch_out = chs[i]
            blocks = nn.ModuleList()
            for j in range(cfg.num_res_blocks):
                blocks.append(ResBlock(ch + ch_out if j == 0 else ch_out, ch_out, time_dim))
            self.up_res.append(blocks)
            self.up_attn.append(
                AttnBlock(ch_out, cfg.heads, cfg.cond_dim, f"up{i}")
                if i in cfg.attention_levels
                else None
            )
            self.upsamples.append(
                nn.Conv2d(ch_out, ch_out, 3, padding=1) if i > 0 else None
            )
            ch = ch_out

        self.norm_out = nn.GroupNorm(_groups(chs[0]), chs[0])
        self.conv_out = nn.Conv2d(chs[0], cfg.latent_channels, 3, padding=1)
        nn.init.zeros_(self.conv_out.weight)
        nn.init.zeros_(self.conv_out.bias)

    def forward(self, z, t, cond, capture: list | None = None):
        cfg = self.cfg
        if z.shape[1] != cfg.latent_channels:
            raise ContractError(f"latent has {z.shape[1]} channels, config says {cfg.latent_channels}")
        if cond.shape[-1] != cfg.cond_dim or cond.shape[1] != cfg.cond_len:
            raise ContractError(
                f"condition shape {tuple(cond.shape[1:])} does not match "
                f"(S_g={cfg.cond_len}, N={cfg.cond_dim})"
            )
        t_emb = self.time_mlp(timestep_embedding(t, cfg.base_channels))
        cond = cond + self.slot_embed

        x = self.conv_in(z)
        skips = []
        for blocks, attn, down in zip(self.down_res, self.down_attn, self.downsamples):
            for block in blocks:
                x = block(x, t_emb)
            if attn is not None:
                x = attn(x, cond, capture)
            skips.append(x)
            if down is not None:
                x = down(x)

        x = self.mid_res1(x, t_emb)
        x = self.mid_attn(x, cond, capture)
        x = self.mid_res2(x, t_emb)

        for blocks, attn, up in zip(self.up_res, self.up_attn, self.upsamples):
            x = torch.cat([x, skips.pop()], dim=1)
            for block in blocks:
                x = block(x, t_emb)
            if attn is not None:
                x = attn(x, cond, capture)
            if up is not None:
                x = up(F.interpolate(x, scale_factor=2, mode="nearest"))

        return self.conv_out(F.silu(self.norm_out(x)))

    def n_params(self) -> int:
        return sum(p.numel() for p in self.parameters())


def predict_noise(model: CondUNet, z_t: np.ndarray, t: int, cond: np.ndarray) -> np.ndarray:
    """Single-latent convenience wrapper: numpy HWC latent in, HWC noise out."""
    zt = torch.from_numpy(np.asarray(z_t, dtype=np.float32)).permute(2, 0, 1)[None]
    c = torch.from_numpy(np.asarray(cond, dtype=np.float32))[None]
    with torch.no_grad():
        eps = model(zt, torch.tensor([t]), c)
    return eps[0].permute(1, 2, 0).numpy()


def capture_attention(model: CondUNet, z_t, t: int, cond) -> AttentionStack:
    """Run one denoiser forward pass recording per-block self-attention maps."""
    if isinstance(z_t, np.ndarray):
        z = torch.from_numpy(z_t.astype(np.float32)).permute(2, 0, 1)[None]
    else:
        z = z_t
    if isinstance(cond, np.ndarray):
        c = torch.from_numpy(cond.astype(np.float32))[None]
    else:
        c = cond
    maps: list[AttentionMap] = []
    with torch.no_grad():
        model(z, torch.tensor([int(t)]), c, capture=maps)
    return AttentionStack(timestep=int(t), maps=maps)

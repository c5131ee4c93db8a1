"""Minimal ViT-B/16-compatible encoder for frozen feature extraction.

Pre-norm transformer over 16x16 patch tokens with a class token, optional
register tokens, and learned positional embeddings that are bicubically
interpolated to the requested grid. Geometry (depth, width, register
count, base grid) is inferred from the checkpoint, so the same code runs
a 12-block ViT-B/16 or a shallow test network. Intermediate per-block
patch-token outputs are returned without the final norm.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

PATCH_SIZE = 16
HEAD_DIM = 64


class Attention(nn.Module):
    def __init__(self, dim: int, num_heads: int):
        super().__init__()
        self.num_heads = num_heads
        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, n, d = x.shape
        qkv = self.qkv(x).reshape(b, n, 3, self.num_heads, d // self.num_heads)
        q, k, v = qkv.permute(2, 0, 3, 1, 4)
        out = F.scaled_dot_product_attention(q, k, v)
        return self.proj(out.transpose(1, 2).reshape(b, n, d))


class Mlp(nn.Module):
    def __init__(self, dim: int, hidden: int):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(F.gelu(self.fc1(x)))


class Block(nn.Module):
    def __init__(self, dim: int, num_heads: int, mlp_ratio: float = 4.0):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = Attention(dim, num_heads)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = Mlp(dim, int(dim * mlp_ratio))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.norm1(x))
        return x + self.mlp(self.norm2(x))


class PatchVit(nn.Module):
    """Patch-token encoder; ``forward_blocks`` returns chosen block outputs."""

    def __init__(self, dim: int = 768, depth: int = 12, num_registers: int = 0,
                 base_grid: int = 32, mlp_ratio: float = 4.0):
        super().__init__()
        self.dim = dim
        self.depth = depth
        self.num_registers = num_registers
        self.base_grid = base_grid
        self.patch_embed = nn.Conv2d(3, dim, kernel_size=PATCH_SIZE, stride=PATCH_SIZE)
        self.cls_token = nn.Parameter(torch.zeros(1, 1, dim))
        if num_registers:
            self.register_tokens = nn.Parameter(torch.zeros(1, num_registers, dim))
        self.pos_embed = nn.Parameter(torch.zeros(1, 1 + base_grid * base_grid, dim))
        self.blocks = nn.ModuleList(
            Block(dim, max(1, dim // HEAD_DIM), mlp_ratio) for _ in range(depth)
        )

    def _interpolated_pos(self, grid: int) -> torch.Tensor:
        cls_pos = self.pos_embed[:, :1]
        patch_pos = self.pos_embed[:, 1:]
        if grid == self.base_grid:
            return cls_pos, patch_pos
        patch_pos = patch_pos.reshape(1, self.base_grid, self.base_grid, self.dim)
        patch_pos = patch_pos.permute(0, 3, 1, 2)
        patch_pos = F.interpolate(
            patch_pos, size=(grid, grid), mode="bicubic", align_corners=False
        )
        return cls_pos, patch_pos.permute(0, 2, 3, 1).reshape(1, grid * grid, self.dim)

    @torch.no_grad()
    def forward_blocks(
        self, pixels: torch.Tensor, block_indices: Sequence[int]
    ) -> list[torch.Tensor]:
        """Patch tokens after each requested block (0-based indices).

        ``pixels`` is (1, 3, r, r) with r a multiple of 16; outputs are
        (grid, grid, dim) tensors in row-major patch order.
        """
        _, _, h, w = pixels.shape
        if h != w or h % PATCH_SIZE != 0:
            raise ValueError(f"input must be square with side divisible by 16, got {h}x{w}")
        grid = h // PATCH_SIZE
        x = self.patch_embed(pixels).flatten(2).transpose(1, 2)  # (1, g*g, d)
        cls_pos, patch_pos = self._interpolated_pos(grid)
        tokens = [self.cls_token + cls_pos, x + patch_pos]
        if self.num_registers:
            tokens.append(self.register_tokens.expand(1, -1, -1))
        x = torch.cat(tokens, dim=1)
        wanted = set(block_indices)
        if any(i < 0 or i >= self.depth for i in wanted):
            raise ValueError(f"block indices {sorted(wanted)} outside 0..{self.depth - 1}")
        collected: dict[int, torch.Tensor] = {}
        for i, block in enumerate(self.blocks):
            x = block(x)
            if i in wanted:
                patches = x[0, 1 : 1 + grid * grid]  # drop cls and registers
                collected[i] = patches.reshape(grid, grid, self.dim)
        return [collected[i] for i in block_indices]


def infer_geometry(state: dict) -> dict:
    """Read (dim, depth, registers, base_grid) off a state dict."""
    if "patch_embed.weight" not in state or "pos_embed" not in state:
        raise ValueError("state dict is missing patch_embed/pos_embed; not a PatchVit checkpoint")
    dim = state["patch_embed.weight"].shape[0]
    depth = 1 + max(
        int(k.split(".")[1]) for k in state if k.startswith("blocks.")
    )
    registers = state["register_tokens"].shape[1] if "register_tokens" in state else 0
    n_patches = state["pos_embed"].shape[1] - 1
    base_grid = int(math.isqrt(n_patches))
    if base_grid * base_grid != n_patches:
        raise ValueError(f"positional embedding covers {n_patches} patches, not a square grid")
    return {"dim": dim, "depth": depth, "num_registers": registers, "base_grid": base_grid}


def load_backbone(weights_path: str | Path) -> PatchVit:
    """Instantiate the encoder from a local state-dict checkpoint."""
    weights_path = Path(weights_path)
    if not weights_path.exists():
        raise FileNotFoundError(f"backbone weights not found: {weights_path}")
    state = torch.load(weights_path, map_location="cpu", weights_only=True)
    model = PatchVit(**infer_geometry(state))
    model.load_state_dict(state)
    model.eval()
    return model


def make_random_checkpoint(
    path: str | Path, depth: int = 12, dim: int = 768,
    num_registers: int = 4, base_grid: int = 32, seed: int = 0,
) -> None:
    """Seeded random weights with ViT-B/16 geometry, for offline testing."""
    torch.manual_seed(seed)
    model = PatchVit(dim=dim, depth=depth, num_registers=num_registers, base_grid=base_grid)
    for param in model.parameters():
        if param.ndim > 1:
            nn.init.trunc_normal_(param, std=0.02)
        else:
            nn.init.normal_(param, std=0.02)
    torch.save(model.state_dict(), path)

"""Semantic feature extraction with bi-level routing attention.

A frame is cut into non-overlapping patches, each embedded as a token, and
the token grid is grouped into S x S regions. Attention then runs in two
levels: a coarse region-affinity matrix routes each region to its top-k
peers, and fine token attention runs only over the tokens gathered from
those peers. A depthwise 5x5 convolution over the value grid (the local
context term) is added to the attention output, and a final linear layer
produces the semantic tokens.

Routing indices are hard: gradients flow through the gathered values while
the index selection is a constant of the forward pass. All tensor ops accept
an optional leading batch dimension.
"""

from __future__ import annotations

import math

import torch
from torch import nn

from .config import ModelConfig


def to_region_major(grid: torch.Tensor, regions_per_side: int) -> torch.Tensor:
    """(..., H', W', C) token grid -> (..., S^2, tokens_per_region, C)."""
    *lead, gh, gw, c = grid.shape
    s = regions_per_side
    if gh % s or gw % s:
        raise ValueError(f"token grid {gh}x{gw} not divisible into {s}x{s} regions")
    rh, rw = gh // s, gw // s
    x = grid.reshape(*lead, s, rh, s, rw, c)
    x = x.movedim(-3, -4)  # (..., s, s, rh, rw, c)
    return x.reshape(*lead, s * s, rh * rw, c)


def to_token_grid(tokens: torch.Tensor, regions_per_side: int,
                  grid_h: int, grid_w: int) -> torch.Tensor:
    """Inverse of to_region_major."""
    *lead, r, t, c = tokens.shape
    s = regions_per_side
    rh, rw = grid_h // s, grid_w // s
    if r != s * s or t != rh * rw:
        raise ValueError("token layout inconsistent with region geometry")
    x = tokens.reshape(*lead, s, s, rh, rw, c)
    x = x.movedim(-4, -3)  # (..., s, rh, s, rw, c)
    return x.reshape(*lead, grid_h, grid_w, c)


def topk_rows(a: torch.Tensor, k: int) -> torch.Tensor:
    """Indices of the k largest entries of each row, sorted by descending
    value with ties broken by lower column index."""
    n = a.shape[-1]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} out of range for {n} columns")
    order = torch.argsort(a, dim=-1, descending=True, stable=True)
    return order[..., :k]


def region_routing(q: torch.Tensor, k: torch.Tensor, topk: int) -> torch.Tensor:
    """Coarse routing: region-mean queries and keys form an affinity matrix
    whose row-wise top-k picks the regions each region will attend to."""
    if q.shape != k.shape:
        raise ValueError("Q and K must have identical shapes")
    qr = q.mean(dim=-2)
    kr = k.mean(dim=-2)
    affinity = qr @ kr.transpose(-1, -2)
    return topk_rows(affinity, topk)


def gather_kv(k: torch.Tensor, v: torch.Tensor,
              idx: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Concatenate the tokens of each region's routed peers.

    k, v: (..., R, T, C); idx: (..., R, kk) -> both outputs (..., R, kk*T, C).
    """
    if k.shape != v.shape:
        raise ValueError("K and V must have identical shapes")
    *lead, r, t, c = k.shape
    kk = idx.shape[-1]
    if idx.shape[:-1] != k.shape[:-3] + (r,):
        raise ValueError("routing index shape inconsistent with K")
    if idx.numel() and (int(idx.min()) < 0 or int(idx.max()) >= r):
        raise ValueError("routing index out of range")

    def one(x: torch.Tensor) -> torch.Tensor:
        src = x.unsqueeze(-4).expand(*lead, r, r, t, c)
        ix = idx[..., None, None].expand(*idx.shape, t, c)
        out = torch.gather(src, -3, ix)
        return out.reshape(*lead, r, kk * t, c)

    return one(k), one(v)


def attention_core(q: torch.Tensor, k_g: torch.Tensor, v_g: torch.Tensor,
                   heads: int = 1, extra: torch.Tensor | None = None) -> torch.Tensor:
    """Per-region scaled dot-product attention over gathered tokens.

    extra, when given, is added to the attention output (the local-context
    enhancement term). Works for any region count; q is (..., R, T, C) and
    k_g/v_g are (..., R, T_g, C).
    """
    if not (torch.isfinite(q).all() and torch.isfinite(k_g).all()
            and torch.isfinite(v_g).all()):
        raise ValueError("attention inputs contain non-finite values")
    *lead, r, t, c = q.shape
    tg = k_g.shape[-2]
    if k_g.shape != (*lead, r, tg, c) or v_g.shape != k_g.shape:
        raise ValueError("gathered K/V shapes inconsistent with Q")
    if c % heads:
        raise ValueError(f"feature width {c} not divisible by {heads} heads")
    d = c // heads
    qh = q.reshape(*lead, r, t, heads, d).movedim(-2, -4)
    kh = k_g.reshape(*lead, r, tg, heads, d).movedim(-2, -4)
    vh = v_g.reshape(*lead, r, tg, heads, d).movedim(-2, -4)
    logits = (qh @ kh.transpose(-1, -2)) / math.sqrt(d)
    weights = torch.softmax(logits, dim=-1)
    out = weights @ vh
    out = out.movedim(-4, -2).reshape(*lead, r, t, c)
    if extra is not None:
        if extra.shape != out.shape:
            raise ValueError("LCE term shape mismatch")
        out = out + extra
    return out


class SemanticExtractor(nn.Module):
    """Patch embedding, bi-level routing attention, and output projection."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        cfg.validate()
        if cfg.token_dim % cfg.num_heads:
            raise ValueError("token_dim must be divisible by num_heads")
        self.cfg = cfg
        patch_dim = cfg.patch * cfg.patch * cfg.channels
        self.patch_embed = nn.Linear(patch_dim, cfg.token_dim)
        self.w_q = nn.Linear(cfg.token_dim, cfg.token_dim, bias=False)
        self.w_k = nn.Linear(cfg.token_dim, cfg.token_dim, bias=False)
        self.w_v = nn.Linear(cfg.token_dim, cfg.token_dim, bias=False)
        if cfg.lce_enabled:
            self.lce = nn.Conv2d(cfg.token_dim, cfg.token_dim,
                                 kernel_size=cfg.lce_kernel,
                                 padding=cfg.lce_kernel // 2,
                                 groups=cfg.token_dim)
        else:
            self.lce = None
        self.proj = nn.Linear(cfg.token_dim, cfg.token_dim)

    def embed_patches(self, frames: torch.Tensor) -> torch.Tensor:
        """Frames (..., H, W, C) -> region-major tokens (..., S^2, T_r, C')."""
        cfg = self.cfg
        *lead, h, w, c = frames.shape
        if c != cfg.channels:
            raise ValueError(f"expected {cfg.channels} channels, got {c}")
        if h != cfg.frame_size or w != cfg.frame_size:
            raise ValueError(f"expected {cfg.frame_size}x{cfg.frame_size} frames")
        p, g = cfg.patch, cfg.grid_side
        x = frames.reshape(*lead, g, p, g, p, c)
        x = x.movedim(-3, -4)  # (..., g, g, p, p, c)
        x = x.reshape(*lead, g, g, p * p * c)
        tokens = self.patch_embed(x)
        return to_region_major(tokens, cfg.regions_per_side)

    def project_qkv(self, tokens: torch.Tensor
                    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        return self.w_q(tokens), self.w_k(tokens), self.w_v(tokens)

    def region_routing(self, q: torch.Tensor, k: torch.Tensor) -> torch.Tensor:
        return region_routing(q, k, self.cfg.routing_topk)

    def _lce_term(self, v: torch.Tensor) -> torch.Tensor | None:
        if self.lce is None:
            return None
        cfg = self.cfg
        grid = to_token_grid(v, cfg.regions_per_side, cfg.grid_side, cfg.grid_side)
        squeeze = grid.ndim == 3
        if squeeze:
            grid = grid.unsqueeze(0)
        out = self.lce(grid.permute(0, 3, 1, 2)).permute(0, 2, 3, 1)
        if squeeze:
            out = out.squeeze(0)
        return to_region_major(out, cfg.regions_per_side)

    def token_attention(self, q: torch.Tensor, k_g: torch.Tensor,
                        v_g: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
        return attention_core(q, k_g, v_g, heads=self.cfg.num_heads,
                              extra=self._lce_term(v))

    def forward(self, frames: torch.Tensor,
                routing_override: torch.Tensor | None = None) -> torch.Tensor:
        """Frames (..., H, W, C) -> semantic tokens (..., N_tok, C'),
        spatial row-major. routing_override freezes the routing indices,
        which keeps the forward map smooth for finite-difference checks."""
        cfg = self.cfg
        tokens = self.embed_patches(frames)
        q, k, v = self.project_qkv(tokens)
        idx = self.region_routing(q, k) if routing_override is None else routing_override
        idx = idx.detach()
        k_g, v_g = gather_kv(k, v, idx)
        out = self.token_attention(q, k_g, v_g, v)
        grid = to_token_grid(out, cfg.regions_per_side, cfg.grid_side, cfg.grid_side)
        flat = grid.reshape(*grid.shape[:-3], cfg.num_tokens, cfg.token_dim)
        return self.proj(flat)

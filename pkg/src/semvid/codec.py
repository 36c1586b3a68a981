"""KAN semantic encoder/expander and the attention decoder.

The encoder flattens the semantic token grid to an n-vector and maps it to
an encoding of length L through a Kolmogorov-Arnold layer: every edge
carries a learnable univariate function (fixed spline basis plus a residual
linear term), inner functions are summed per output unit, and an outer
univariate function shapes each unit. The receiver expands the noisy
encoding back to a token grid with a mirrored layer and reconstructs pixels
with a stack of pre-norm attention blocks and a linear pixel head.

A codec instance is bound to one compression-ratio class: the mentor
carries the long encoding, the student the short one.
"""

from __future__ import annotations

import torch
from torch import nn

from .config import ModelConfig
from .cr import CrClass
from .extractor import SemanticExtractor, attention_core

KAN_GRID = (-3.0, 3.0)
KAN_BASIS = 8


def spline_basis(t: torch.Tensor, n_basis: int = KAN_BASIS,
                 lo: float = KAN_GRID[0], hi: float = KAN_GRID[1]) -> torch.Tensor:
    """Cubic B-spline bumps on an even grid over [lo, hi].

    Returns basis values with a trailing n_basis axis. The basis is hard
    zero outside the grid, where only the residual linear term of a
    univariate function survives.
    """
    if n_basis < 2:
        raise ValueError("need at least two basis functions")
    centers = torch.linspace(lo, hi, n_basis, dtype=t.dtype, device=t.device)
    h = (hi - lo) / (n_basis - 1)
    u = (t.unsqueeze(-1) - centers) / h
    au = u.abs()
    near = 2.0 / 3.0 - au ** 2 + au ** 3 / 2.0
    far = (2.0 - au) ** 3 / 6.0
    val = torch.where(au <= 1.0, near, torch.where(au <= 2.0, far,
                                                   torch.zeros_like(au)))
    gate = ((t >= lo) & (t <= hi)).to(t.dtype).unsqueeze(-1)
    return val * gate


def eval_univariate(coef: torch.Tensor, lin: torch.Tensor | float,
                    t: torch.Tensor, lo: float = KAN_GRID[0],
                    hi: float = KAN_GRID[1]) -> torch.Tensor:
    """One learnable univariate function: basis expansion plus w*t."""
    t = torch.as_tensor(t)
    if not torch.isfinite(t).all():
        raise ValueError("univariate input must be finite")
    coef = torch.as_tensor(coef, dtype=t.dtype)
    basis = spline_basis(t, n_basis=coef.shape[-1], lo=lo, hi=hi)
    lin_t = torch.as_tensor(lin, dtype=t.dtype)
    return (basis * coef).sum(-1) + lin_t * t


class KanLayer(nn.Module):
    """n_in -> n_out layer of summed univariate edge functions.

    Inner: u_q = sum_p [ spline(x_p; c_qp) + w_qp x_p ]
    Outer: y_q = spline(u_q; c_q) + w_q u_q

    Spline coefficients start at zero and the outer linear term at one, so
    a fresh layer is exactly the linear map given by the inner residuals.
    """

    def __init__(self, n_in: int, n_out: int, n_basis: int = KAN_BASIS,
                 lo: float = KAN_GRID[0], hi: float = KAN_GRID[1]):
        super().__init__()
        if n_in < 1 or n_out < 1:
            raise ValueError("layer sizes must be positive")
        self.n_in, self.n_out, self.n_basis = n_in, n_out, n_basis
        self.lo, self.hi = lo, hi
        self.inner_coef = nn.Parameter(torch.zeros(n_out, n_in, n_basis))
        self.inner_lin = nn.Parameter(torch.randn(n_out, n_in) / n_in ** 0.5)
        self.outer_coef = nn.Parameter(torch.zeros(n_out, n_basis))
        self.outer_lin = nn.Parameter(torch.ones(n_out))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.n_in:
            raise ValueError(f"expected {self.n_in} inputs, got {x.shape[-1]}")
        basis = spline_basis(x, self.n_basis, self.lo, self.hi)
        u = torch.einsum("...pb,qpb->...q", basis, self.inner_coef)
        u = u + x @ self.inner_lin.transpose(0, 1)
        ub = spline_basis(u, self.n_basis, self.lo, self.hi)
        return (ub * self.outer_coef).sum(-1) + self.outer_lin * u


def kan_forward(x: torch.Tensor, layer: KanLayer) -> torch.Tensor:
    return layer(x)


class DecoderBlock(nn.Module):
    """Pre-norm dense token attention followed by a tokenwise MLP."""

    def __init__(self, dim: int, heads: int, mlp_ratio: int):
        super().__init__()
        self.heads = heads
        self.norm1 = nn.LayerNorm(dim)
        self.w_q = nn.Linear(dim, dim, bias=False)
        self.w_k = nn.Linear(dim, dim, bias=False)
        self.w_v = nn.Linear(dim, dim, bias=False)
        self.attn_out = nn.Linear(dim, dim)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, mlp_ratio * dim), nn.GELU(),
                                 nn.Linear(mlp_ratio * dim, dim))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.norm1(x)
        q, k, v = self.w_q(h), self.w_k(h), self.w_v(h)
        att = attention_core(q.unsqueeze(-3), k.unsqueeze(-3), v.unsqueeze(-3),
                             heads=self.heads).squeeze(-3)
        x = x + self.attn_out(att)
        return x + self.mlp(self.norm2(x))


class AttentionDecoder(nn.Module):
    """Token grid -> pixels: D attention blocks, linear pixel head, clamp.

    The pixel head bias starts at 0.5 so a fresh decoder emits mid-gray
    frames, keeping outputs away from the clamp rails where gradients die.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.blocks = nn.ModuleList(
            DecoderBlock(cfg.token_dim, cfg.num_heads, cfg.decoder_mlp_ratio)
            for _ in range(cfg.decoder_depth))
        self.pixel_head = nn.Linear(cfg.token_dim,
                                    cfg.patch * cfg.patch * cfg.channels)
        nn.init.constant_(self.pixel_head.bias, 0.5)

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        cfg = self.cfg
        if tokens.shape[-2:] != (cfg.num_tokens, cfg.token_dim):
            raise ValueError(
                f"expected token grid (..., {cfg.num_tokens}, {cfg.token_dim}), "
                f"got {tuple(tokens.shape)}")
        x = tokens
        for blk in self.blocks:
            x = blk(x)
        px = self.pixel_head(x)
        lead = px.shape[:-2]
        g, p, c = cfg.grid_side, cfg.patch, cfg.channels
        px = px.reshape(*lead, g, g, p, p, c).movedim(-3, -4)
        px = px.reshape(*lead, cfg.frame_size, cfg.frame_size, c)
        return torch.clamp(px, 0.0, 1.0)


class SemanticCodec(nn.Module):
    """Extractor, CR-specific KAN encoder/expander, and frame decoder."""

    def __init__(self, cfg: ModelConfig, cr: CrClass,
                 extractor: SemanticExtractor | None = None,
                 kan_basis: int | None = None):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.cr = cr
        nb = kan_basis or cfg.kan_basis_size
        self.extractor = extractor if extractor is not None else SemanticExtractor(cfg)
        self.encoder = KanLayer(cfg.flat_dim, cr.encoding_length, nb,
                                cfg.kan_grid_lo, cfg.kan_grid_hi)
        self.expander = KanLayer(cr.encoding_length, cfg.flat_dim, nb,
                                 cfg.kan_grid_lo, cfg.kan_grid_hi)
        self.decoder = AttentionDecoder(cfg)

    def extract(self, frames: torch.Tensor, **kw) -> torch.Tensor:
        return self.extractor(frames, **kw)

    def encode_semantics(self, s: torch.Tensor) -> torch.Tensor:
        cfg = self.cfg
        if s.shape[-2:] != (cfg.num_tokens, cfg.token_dim):
            raise ValueError("semantic grid shape mismatch")
        flat = s.reshape(*s.shape[:-2], cfg.flat_dim)
        e = self.encoder(flat)
        if not torch.isfinite(e).all():
            raise ValueError("encoding contains non-finite values")
        return e

    def expand_semantics(self, e_hat: torch.Tensor) -> torch.Tensor:
        if e_hat.shape[-1] != self.cr.encoding_length:
            raise ValueError(
                f"encoding length {e_hat.shape[-1]} does not match "
                f"{self.cr.tag} (expected {self.cr.encoding_length})")
        cfg = self.cfg
        flat = self.expander(e_hat)
        return flat.reshape(*e_hat.shape[:-1], cfg.num_tokens, cfg.token_dim)

    def decode_frame(self, s_hat: torch.Tensor) -> torch.Tensor:
        return self.decoder(s_hat)

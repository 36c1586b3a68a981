"""Mentor/student training with adaptive knowledge distillation.

The mentor codec (long encoding) and student codec (short encoding) train
side by side. Per batch, the mentor minimizes its own reconstruction MSE;
the student minimizes its MSE plus a distillation term: the KL divergence
between its decoder-side token distributions and the mentor's, divided by
the mentor's task loss so the pressure to imitate grows as the mentor gets
good. Each batch samples one channel SNR from the configured range, used
by both forwards so the distillation target reflects the same channel
condition the student faces; noise realizations stay per-model.

Reproducibility: the data order and each model's noise draws come from
generators derived from the run seed with per-role offsets, so a student
trained without KD sees bit-identical data and channel noise to one
trained with KD. That makes KD ablations differ only in the loss term.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import torch

from .channel import ChannelRealization, ModulatedSignal, channel_roundtrip
from .codec import SemanticCodec
from .config import ChannelConfig, ModelConfig, TrainConfig
from .cr import cr_pair
from .errors import TrainingDiverged

KD_FLOOR = 1e-8
_ROLE_SALT = {"data": 0x5EED_DA7A, "mentor": 0x5EED_3E17, "student": 0x5EED_57D1}


def _role_generator(seed: int, role: str) -> torch.Generator:
    g = torch.Generator()
    g.manual_seed((int(seed) ^ _ROLE_SALT[role]) & 0x7FFF_FFFF_FFFF_FFFF)
    return g


def task_loss(x: torch.Tensor, x_hat: torch.Tensor) -> torch.Tensor:
    """Pixel MSE between a frame and its reconstruction."""
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(x_hat.shape)}")
    return torch.mean((x - x_hat) ** 2)


def kd_loss(s_hat_student: torch.Tensor, s_hat_mentor: torch.Tensor,
            task_loss_mentor: float, tau: float = 1.0) -> torch.Tensor:
    """Adaptive distillation loss.

    KL(student || mentor) over tokenwise softmax distributions (softmax
    along the feature axis, temperature tau), averaged over tokens, then
    divided by the mentor's task loss. A non-positive mentor loss is
    clamped to a small floor with a warning; the division always uses at
    least that floor.
    """
    if s_hat_student.shape != s_hat_mentor.shape:
        raise ValueError("token grids must have identical shapes")
    if tau <= 0:
        raise ValueError("temperature must be positive")
    denom = float(task_loss_mentor)
    if denom <= 0.0:
        warnings.warn(f"mentor task loss {denom} clamped to {KD_FLOOR} in KD term",
                      stacklevel=2)
    denom = max(denom, KD_FLOOR)
    log_p = torch.log_softmax(s_hat_student / tau, dim=-1)
    log_q = torch.log_softmax(s_hat_mentor / tau, dim=-1)
    kl_per_token = (log_p.exp() * (log_p - log_q)).sum(dim=-1)
    return kl_per_token.mean() / denom


@dataclass
class ForwardResult:
    """Outputs of one training/inference forward through the channel."""

    x_hat: torch.Tensor
    s_hat: torch.Tensor
    encoding: torch.Tensor
    received: torch.Tensor
    task: torch.Tensor
    snr_db: float
    signals: list[ModulatedSignal] = field(default_factory=list)
    realizations: list[ChannelRealization] = field(default_factory=list)


def sample_snr_db(cfg: TrainConfig, generator: torch.Generator) -> float:
    lo, hi = cfg.snr_range_db
    if lo == hi:
        return float(lo)  # degenerate range; also keeps (inf, inf) NaN-free
    return lo + (hi - lo) * float(torch.rand((), generator=generator))


def forward_pass(x: torch.Tensor, model: SemanticCodec,
                 channel_cfg: ChannelConfig, snr_db: float, *,
                 generator: torch.Generator | None = None,
                 frame_index: int = 0,
                 routing_override: torch.Tensor | None = None) -> ForwardResult:
    """Extract, encode, transmit at the given SNR, expand, decode.

    Accepts one frame (H, W, C) or a batch (B, H, W, C); each batch element
    gets its own channel draw. With a generator the noise stream is
    consumed sequentially; otherwise draws are seeded per frame_index.
    """
    squeeze = x.ndim == 3
    xb = x.unsqueeze(0) if squeeze else x
    s = model.extract(xb, routing_override=routing_override)
    e = model.encode_semantics(s)
    rows, signals, realizations = [], [], []
    for b in range(e.shape[0]):
        e_hat_b, sig, real = channel_roundtrip(
            e[b], channel_cfg, frame_index=frame_index + b,
            generator=generator, snr_db=snr_db)
        rows.append(e_hat_b)
        signals.append(sig)
        realizations.append(real)
    e_hat = torch.stack(rows)
    s_hat = model.expand_semantics(e_hat)
    x_hat = model.decode_frame(s_hat)
    task = task_loss(xb, x_hat)
    if squeeze:
        x_hat, s_hat = x_hat.squeeze(0), s_hat.squeeze(0)
        e, e_hat = e.squeeze(0), e_hat.squeeze(0)
    return ForwardResult(x_hat=x_hat, s_hat=s_hat, encoding=e, received=e_hat,
                         task=task, snr_db=snr_db, signals=signals,
                         realizations=realizations)


@dataclass
class ModelPair:
    mentor: SemanticCodec
    student: SemanticCodec

    def __post_init__(self):
        if self.mentor.cfg.num_tokens != self.student.cfg.num_tokens or \
                self.mentor.cfg.token_dim != self.student.cfg.token_dim:
            raise ValueError("mentor and student token grids must match")
        if not self.mentor.cr.encoding_length > self.student.cr.encoding_length:
            raise ValueError("mentor must carry the longer encoding")


def build_model_pair(model_cfg: ModelConfig, seed: int = 0,
                     share_extractor: bool = False) -> ModelPair:
    """Construct mentor (dynamic CR) and student (static CR) codecs with
    seeded initialization."""
    torch.manual_seed(int(seed))
    static_cr, dynamic_cr = cr_pair(model_cfg.static_len, model_cfg.dynamic_len)
    mentor = SemanticCodec(model_cfg, dynamic_cr)
    student = SemanticCodec(
        model_cfg, static_cr,
        extractor=mentor.extractor if share_extractor else None)
    return ModelPair(mentor=mentor, student=student)


@dataclass
class TrainResult:
    history: dict[str, list[float]]
    val_history: dict[str, list[float]]
    epochs_run: int


def _frame_stack(dataset) -> torch.Tensor:
    arr = getattr(dataset, "pixel_array", None)
    if callable(arr):
        dataset = arr()
    t = torch.as_tensor(np.asarray(dataset), dtype=torch.float32)
    if t.ndim != 4:
        raise ValueError("dataset must stack to (N, H, W, C)")
    return t


def _abort_diverged(what: str, pair: ModelPair,
                    diagnostics_path: str | None) -> None:
    if diagnostics_path:
        from .checkpoint import save_pair_checkpoint
        save_pair_checkpoint(diagnostics_path, pair, note=f"diverged: {what}")
    raise TrainingDiverged(f"{what} became non-finite" +
                           (f"; diagnostic checkpoint at {diagnostics_path}"
                            if diagnostics_path else ""))


def _guard_finite(value: torch.Tensor, what: str, pair: ModelPair,
                  diagnostics_path: str | None) -> None:
    if not torch.isfinite(value).all():
        _abort_diverged(what, pair, diagnostics_path)


def _guard_params(model: SemanticCodec, what: str, pair: ModelPair,
                  diagnostics_path: str | None) -> None:
    for p in model.parameters():
        if not torch.isfinite(p).all():
            _abort_diverged(what, pair, diagnostics_path)


def validation_mse(model: SemanticCodec, frames, channel_cfg: ChannelConfig,
                   snr_db: float = math.inf, batch: int = 16) -> float:
    """Mean reconstruction MSE over a frame set, default noise-off."""
    xs = _frame_stack(frames)
    losses = []
    with torch.no_grad():
        for i in range(0, xs.shape[0], batch):
            xb = xs[i:i + batch]
            res = forward_pass(xb, model, channel_cfg, snr_db)
            losses.append(float(res.task) * xb.shape[0])
    return sum(losses) / xs.shape[0]


def train(dataset, pair: ModelPair, cfg: TrainConfig, *,
          channel_cfg: ChannelConfig | None = None, val_frames=None,
          train_mentor: bool = True, diagnostics_path: str | None = None
          ) -> TrainResult:
    """SGD training of the pair for cfg.epochs epochs.

    Per batch the mentor minimizes its task loss and the student minimizes
    task + KD (when enabled). train_mentor=False freezes the mentor, which
    is how a student-only (no-KD) control run avoids paying for mentor
    updates it would not use. When the pair shares an extractor, those
    parameters belong to the mentor's optimizer alone; the student's step
    never touches them, so a batch updates each tensor exactly once.
    """
    cfg.validate()
    xs = _frame_stack(dataset)
    if xs.shape[0] == 0:
        raise ValueError("dataset is empty")
    if channel_cfg is None:
        channel_cfg = ChannelConfig(snr_db=cfg.snr_range_db[1], fading=cfg.fading,
                                    seed=cfg.seed)
    g_data = _role_generator(cfg.seed, "data")
    g_mentor = _role_generator(cfg.seed, "mentor")
    g_student = _role_generator(cfg.seed, "student")
    opt_m = torch.optim.SGD(pair.mentor.parameters(), lr=cfg.learning_rate,
                            momentum=cfg.momentum)
    mentor_owned = {id(p) for p in pair.mentor.parameters()}
    student_params = [p for p in pair.student.parameters()
                      if id(p) not in mentor_owned]
    opt_s = torch.optim.SGD(student_params, lr=cfg.learning_rate,
                            momentum=cfg.momentum)
    history: dict[str, list[float]] = {"mentor_task": [], "student_task": [],
                                       "student_kd": [], "student_total": []}
    val_history: dict[str, list[float]] = {"mentor": [], "student": []}
    n = xs.shape[0]
    for _epoch in range(cfg.epochs):
        order = torch.randperm(n, generator=g_data)
        sums = {k: 0.0 for k in history}
        n_batches = 0
        for start in range(0, n, cfg.batch_size):
            xb = xs[order[start:start + cfg.batch_size]]
            snr_b = sample_snr_db(cfg, g_student)
            mentor_task_value = None
            s_hat_m = None
            if train_mentor or cfg.kd_enabled:
                res_m = forward_pass(xb, pair.mentor, channel_cfg, snr_b,
                                     generator=g_mentor)
                _guard_finite(res_m.task, "mentor task loss", pair,
                              diagnostics_path)
                mentor_task_value = float(res_m.task.detach())
                s_hat_m = res_m.s_hat.detach()
                if train_mentor:
                    opt_m.zero_grad()
                    res_m.task.backward()
                    opt_m.step()
                sums["mentor_task"] += mentor_task_value
            res_s = forward_pass(xb, pair.student, channel_cfg, snr_b,
                                 generator=g_student)
            _guard_finite(res_s.task, "student task loss", pair,
                          diagnostics_path)
            if cfg.kd_enabled:
                l_kd = kd_loss(res_s.s_hat, s_hat_m, mentor_task_value,
                               tau=cfg.kl_temperature)
                _guard_finite(l_kd, "KD loss", pair, diagnostics_path)
                total = res_s.task + l_kd
                sums["student_kd"] += float(l_kd.detach())
            else:
                total = res_s.task
            opt_s.zero_grad()
            total.backward()
            opt_s.step()
            _guard_params(pair.student, "student parameters", pair,
                          diagnostics_path)
            sums["student_task"] += float(res_s.task.detach())
            sums["student_total"] += float(total.detach())
            n_batches += 1
        for k in history:
            history[k].append(sums[k] / n_batches)
        if val_frames is not None:
            val_history["mentor"].append(
                validation_mse(pair.mentor, val_frames, channel_cfg))
            val_history["student"].append(
                validation_mse(pair.student, val_frames, channel_cfg))
    return TrainResult(history=history, val_history=val_history,
                       epochs_run=cfg.epochs)


def run_kd_comparison(train_frames, val_frames, model_cfg: ModelConfig,
                      cfg: TrainConfig, seeds: tuple[int, ...] = (0, 1, 2)
                      ) -> dict[int, dict[str, float]]:
    """Train mentor+student with KD and a student-only control per seed.

    Returns per-seed final noise-off validation MSEs for the mentor, the
    KD student, and the no-KD student. The control run shares the seed and
    still trains its own mentor copy (whose updates never depend on the
    student), so the two students see identical data order, channel draws,
    and, when the extractor is shared, an identical backbone trajectory;
    they differ only by the distillation term.
    """
    out: dict[int, dict[str, float]] = {}
    for seed in seeds:
        cfg_kd = TrainConfig(**{**cfg.__dict__, "seed": seed, "kd_enabled": True})
        pair = build_model_pair(model_cfg, seed=seed,
                                share_extractor=cfg.share_extractor)
        train(train_frames, pair, cfg_kd)
        chan = ChannelConfig(snr_db=math.inf, fading=cfg.fading, seed=seed)
        row = {
            "mentor": validation_mse(pair.mentor, val_frames, chan),
            "student_kd": validation_mse(pair.student, val_frames, chan),
        }
        cfg_nokd = TrainConfig(**{**cfg.__dict__, "seed": seed,
                                  "kd_enabled": False})
        pair2 = build_model_pair(model_cfg, seed=seed,
                                 share_extractor=cfg.share_extractor)
        train(train_frames, pair2, cfg_nokd)
        row["student_nokd"] = validation_mse(pair2.student, val_frames, chan)
        out[seed] = row
    return out


def kd_ordering_counts(results: dict[int, dict[str, float]]) -> dict[str, int]:
    """How many seeds satisfy each of the two expected orderings."""
    m_le_s = sum(1 for r in results.values() if r["mentor"] <= r["student_kd"])
    kd_le_nokd = sum(1 for r in results.values()
                     if r["student_kd"] <= r["student_nokd"])
    return {"mentor_le_student_kd": m_le_s,
            "student_kd_le_nokd": kd_le_nokd,
            "n_seeds": len(results)}

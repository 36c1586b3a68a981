"""Complex-symbol modulation and a differentiable noisy channel.

A real encoding vector is paired into complex symbols (odd lengths are
zero-padded), normalized to unit average power, pushed through y = H*c + N,
equalized with perfect channel knowledge, and demodulated back to reals.
H and N are constants of the draw, so gradients flow through the channel as
d y / d c = H.

Noise is seeded per frame as seed XOR frame_index, which keeps every frame
reproducible on its own and lets frames be processed in any order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch

from .config import ChannelConfig
from .errors import ChannelError, OutageError

_COMPLEX_FOR = {torch.float32: torch.complex64, torch.float64: torch.complex128}


@dataclass
class ModulatedSignal:
    """Unit-power complex symbols plus what demodulation needs to undo them.

    scale is kept as a 0-dim tensor so the normalization stays on the
    autograd graph; it is 0 for an all-zero input (nothing to normalize).
    """

    symbols: torch.Tensor
    scale: torch.Tensor
    n_values: int

    @property
    def n_symbols(self) -> int:
        return int(self.symbols.shape[0])

    @property
    def power(self) -> float:
        if self.n_symbols == 0:
            return 0.0
        return float(torch.mean(torch.abs(self.symbols) ** 2))


@dataclass
class ChannelRealization:
    """One frame's channel draw, recorded so it can be replayed exactly."""

    h: torch.Tensor
    noise: torch.Tensor
    snr_db: float
    noise_power: float
    fading: str
    frame_index: int = 0


def modulate(e: torch.Tensor) -> ModulatedSignal:
    """Pair consecutive reals into complex symbols at unit average power."""
    if e.ndim != 1:
        raise ChannelError(f"encoding must be a 1-D real vector, got shape {tuple(e.shape)}")
    if e.is_complex():
        raise ChannelError("encoding must be real-valued")
    n = int(e.shape[0])
    if n == 0:
        raise ChannelError("cannot modulate an empty encoding")
    if n % 2:
        e_pad = torch.cat([e, e.new_zeros(1)])
    else:
        e_pad = e
    raw = torch.complex(e_pad[0::2], e_pad[1::2])
    power = torch.mean(torch.abs(raw) ** 2)
    if float(power.detach()) == 0.0:
        return ModulatedSignal(symbols=raw, scale=power.detach(), n_values=n)
    scale = torch.sqrt(power)
    return ModulatedSignal(symbols=raw / scale, scale=scale, n_values=n)


def demodulate(symbols: torch.Tensor, scale: torch.Tensor, n_values: int) -> torch.Tensor:
    """Inverse of modulate: unscale, unpair, drop the padding value."""
    if symbols.ndim != 1 or not symbols.is_complex():
        raise ChannelError("symbols must be a 1-D complex vector")
    flat = torch.stack([symbols.real, symbols.imag], dim=1).reshape(-1)
    return (flat * scale)[:n_values]


def snr_to_noise_power(snr_db: float, signal_power: float = 1.0) -> float:
    """Total complex noise variance for a target SNR; split evenly across
    the real and imaginary components by the sampler."""
    if signal_power <= 0:
        raise ChannelError("signal power must be positive")
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    return signal_power / (10.0 ** (snr_db / 10.0))


def frame_generator(seed: int, frame_index: int = 0) -> torch.Generator:
    g = torch.Generator()
    g.manual_seed((int(seed) ^ int(frame_index)) & 0x7FFF_FFFF_FFFF_FFFF)
    return g


def _draw_gaussian(n: int, std: float, dtype: torch.dtype,
                   generator: torch.Generator) -> torch.Tensor:
    re = torch.randn(n, generator=generator, dtype=dtype) * std
    im = torch.randn(n, generator=generator, dtype=dtype) * std
    return torch.complex(re, im)


def transmit(signal: ModulatedSignal, cfg: ChannelConfig, *,
             frame_index: int = 0, generator: torch.Generator | None = None,
             snr_db: float | None = None) -> tuple[torch.Tensor, ChannelRealization]:
    """Send symbols through y = H*c + N.

    The channel gain is drawn first, then the noise vector, from a generator
    seeded cfg.seed XOR frame_index (unless one is passed in). The SNR can
    be overridden per call, e.g. for training-time SNR sampling. Noise
    power is computed against the nominal unit signal power, so an all-zero
    signal still sees the configured noise floor.
    """
    cfg.validate()
    eff_snr = cfg.snr_db if snr_db is None else snr_db
    if generator is None:
        generator = frame_generator(cfg.seed, frame_index)
    c = signal.symbols
    real_dtype = torch.float64 if c.dtype == torch.complex128 else torch.float32
    cplx = _COMPLEX_FOR[real_dtype]
    if cfg.fading == "awgn":
        h = torch.ones((), dtype=cplx)
    else:
        h = _draw_gaussian(1, math.sqrt(0.5), real_dtype, generator)[0]
    sigma2 = snr_to_noise_power(eff_snr, 1.0)
    if sigma2 == 0.0:
        noise = torch.zeros_like(c)
    else:
        noise = _draw_gaussian(c.shape[0], math.sqrt(sigma2 / 2.0), real_dtype,
                               generator)
    realization = ChannelRealization(h=h, noise=noise, snr_db=float(eff_snr),
                                     noise_power=sigma2, fading=cfg.fading,
                                     frame_index=frame_index)
    return apply_realization(c, realization), realization


def apply_realization(c: torch.Tensor, realization: ChannelRealization) -> torch.Tensor:
    """Replay a recorded draw: y = H*c + N with H, N held constant."""
    return realization.h.detach() * c + realization.noise.detach()


def equalize_demodulate(y: torch.Tensor, realization: ChannelRealization,
                        scale: torch.Tensor, n_values: int) -> torch.Tensor:
    """Perfect-CSI equalization then demodulation; H = 0 is an outage."""
    h = realization.h.detach()
    if float(torch.abs(h)) == 0.0:
        raise OutageError("channel gain is zero; frame lost")
    return demodulate(y / h, scale, n_values)


def channel_roundtrip(e: torch.Tensor, cfg: ChannelConfig, *,
                      frame_index: int = 0,
                      generator: torch.Generator | None = None,
                      snr_db: float | None = None
                      ) -> tuple[torch.Tensor, ModulatedSignal, ChannelRealization]:
    """modulate -> transmit -> equalize -> demodulate, returning the noisy
    encoding plus everything needed to account for or replay the frame."""
    signal = modulate(e)
    y, realization = transmit(signal, cfg, frame_index=frame_index,
                              generator=generator, snr_db=snr_db)
    e_hat = equalize_demodulate(y, realization, signal.scale, signal.n_values)
    return e_hat, signal, realization


def bit_cost(signal: ModulatedSignal, bits_per_symbol: int) -> int:
    """Bits on the air for one frame: encoding values times the fixed word
    width (32 = two 16-bit components per complex pairing)."""
    if bits_per_symbol < 1:
        raise ChannelError("bits_per_symbol must be >= 1")
    return signal.n_values * bits_per_symbol


def empirical_snr_db(c: torch.Tensor, y: torch.Tensor,
                     realization: ChannelRealization) -> float:
    """Measured signal-to-noise power ratio of one transmission, in dB."""
    sig = realization.h.detach() * c.detach()
    noise = y.detach() - sig
    p_sig = float(torch.mean(torch.abs(sig) ** 2))
    p_noise = float(torch.mean(torch.abs(noise) ** 2))
    if p_noise == 0.0:
        return math.inf
    return 10.0 * math.log10(p_sig / p_noise)

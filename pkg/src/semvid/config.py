"""Dataclass configuration for models, channel, sensing, training, and runs.

Configs load from nested key-value YAML files. Loading is strict: unknown
keys are rejected so typos fail fast instead of silently using defaults.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError

FADING_MODES = ("awgn", "rayleigh_flat")


@dataclass
class ModelConfig:
    """Shapes of the semantic codec (extractor, encoder, decoder)."""

    frame_size: int = 64          # square frames, pixels per side
    channels: int = 3
    patch: int = 8                # patch embedding size, pixels
    regions_per_side: int = 4     # routing grid: regions_per_side**2 regions
    token_dim: int = 64           # feature width of tokens
    routing_topk: int = 4         # regions gathered per query region
    num_heads: int = 1
    lce_enabled: bool = True
    lce_kernel: int = 5           # per-channel local conv size
    kan_basis_size: int = 8       # spline bumps per univariate function
    kan_grid_lo: float = -3.0
    kan_grid_hi: float = 3.0
    decoder_depth: int = 4        # attention blocks in the decoder
    decoder_mlp_ratio: int = 2
    static_len: int = 16          # encoding length for static frames
    dynamic_len: int = 256        # encoding length for dynamic frames

    @property
    def grid_side(self) -> int:
        return self.frame_size // self.patch

    @property
    def num_tokens(self) -> int:
        return self.grid_side ** 2

    @property
    def flat_dim(self) -> int:
        return self.num_tokens * self.token_dim

    def validate(self) -> None:
        if self.frame_size <= 0 or self.patch <= 0:
            raise ConfigError("frame_size and patch must be positive")
        if self.frame_size % self.patch != 0:
            raise ConfigError(
                f"frame_size {self.frame_size} not divisible by patch {self.patch}")
        if self.grid_side % self.regions_per_side != 0:
            raise ConfigError(
                f"patch grid {self.grid_side} not divisible by "
                f"regions_per_side {self.regions_per_side}")
        n_regions = self.regions_per_side ** 2
        if not 1 <= self.routing_topk <= n_regions:
            raise ConfigError(
                f"routing_topk {self.routing_topk} outside [1, {n_regions}]")
        if self.token_dim % self.num_heads != 0:
            raise ConfigError("token_dim must be divisible by num_heads")
        if not self.static_len < self.dynamic_len:
            raise ConfigError("static_len must be smaller than dynamic_len")
        if self.kan_grid_lo >= self.kan_grid_hi:
            raise ConfigError("kan grid bounds inverted")


@dataclass
class ChannelConfig:
    """Noisy-channel settings; `snr_db = inf` disables noise."""

    snr_db: float = 10.0
    fading: str = "awgn"
    bandwidth_hz: float = 1000.0
    bits_per_symbol: int = 32
    seed: int = 0

    def validate(self) -> None:
        if self.fading not in FADING_MODES:
            raise ConfigError(f"fading must be one of {FADING_MODES}")
        if self.bandwidth_hz <= 0:
            raise ConfigError("bandwidth_hz must be positive")
        if self.bits_per_symbol <= 0:
            raise ConfigError("bits_per_symbol must be positive")


@dataclass
class SensingConfig:
    """Baseline change sensor: rolling-median background subtraction."""

    background_window: int = 15
    diff_threshold: float = 0.1   # in [0,1] pixel units
    eta_threshold: float = 1e-4   # mask-difference threshold for static frames
    min_area_px: int = 1          # discard components smaller than this

    def validate(self) -> None:
        if self.background_window < 1:
            raise ConfigError("background_window must be >= 1")
        if self.eta_threshold <= 0:
            raise ConfigError("eta_threshold must be positive")
        if not 0 < self.diff_threshold < 1:
            raise ConfigError("diff_threshold must be in (0, 1)")


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 8
    learning_rate: float = 1e-2
    momentum: float = 0.9
    snr_range_db: tuple[float, float] = (0.0, 25.0)
    kl_temperature: float = 1.0
    seed: int = 0
    kd_enabled: bool = True
    share_extractor: bool = False
    fading: str = "awgn"

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.kl_temperature <= 0:
            raise ConfigError("kl_temperature must be positive")
        if self.snr_range_db[0] > self.snr_range_db[1]:
            raise ConfigError("snr_range_db must be (lo, hi) with lo <= hi")
        if self.fading not in FADING_MODES:
            raise ConfigError(f"fading must be one of {FADING_MODES}")


@dataclass
class RunConfig:
    """A transmission/experiment run: paths plus all component settings."""

    video_path: str = ""
    checkpoint_path: str = ""
    out_dir: str = "runs/out"
    model: ModelConfig = field(default_factory=ModelConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    sensing: SensingConfig = field(default_factory=SensingConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    zeta: float = 0.01            # delay weight in the objective
    seed: int = 0
    snr_sweep_db: list[float] = field(default_factory=lambda: [0.0, 5.0, 10.0, 15.0, 20.0, 25.0])
    schemes: list[str] = field(default_factory=lambda: ["full", "no_osms"])
    no_kd_checkpoint_path: str = ""
    dump_masks: bool = False
    save_frames: bool = False

    def validate(self) -> None:
        self.model.validate()
        self.channel.validate()
        self.sensing.validate()
        self.train.validate()
        if self.zeta < 0:
            raise ConfigError("zeta must be >= 0")
        known = {"full", "no_osms", "no_kd"}
        for s in self.schemes:
            if s not in known:
                raise ConfigError(f"unknown scheme {s!r}; expected one of {sorted(known)}")


def _coerce(value, target_type, path: str):
    origin = typing.get_origin(target_type)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a sequence")
        return tuple(value)
    if origin is list:
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list")
        return list(value)
    if target_type is float and isinstance(value, int):
        return float(value)
    if target_type in (int, float, str, bool) and not isinstance(value, target_type):
        raise ConfigError(f"{path}: expected {target_type.__name__}, got {type(value).__name__}")
    return value


def _build_dataclass(dc_type, mapping, path: str = ""):
    if mapping is None:
        mapping = {}
    if not isinstance(mapping, dict):
        raise ConfigError(f"{path or dc_type.__name__}: expected a mapping")
    fields = {f.name: f for f in dataclasses.fields(dc_type)}
    hints = typing.get_type_hints(dc_type)
    kwargs = {}
    for key, value in mapping.items():
        if key not in fields:
            raise ConfigError(f"unknown config key: {path + key!r}")
        ftype = hints[fields[key].name]
        if dataclasses.is_dataclass(ftype):
            kwargs[key] = _build_dataclass(ftype, value, path=f"{path}{key}.")
        else:
            kwargs[key] = _coerce(value, ftype, path + key)
    return dc_type(**kwargs)


def load_run_config(path: str | Path) -> RunConfig:
    """Parse and validate a YAML run config. Raises ConfigError on any problem."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"could not parse {path}: {exc}") from exc
    cfg = _build_dataclass(RunConfig, raw)
    cfg.validate()
    return cfg


def config_hash(model_cfg: ModelConfig) -> str:
    """Stable hash of the model geometry, stored in checkpoints."""
    payload = json.dumps(dataclasses.asdict(model_cfg), sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]

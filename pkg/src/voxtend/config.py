"""Flat key=value run configuration with command-line overrides.

One RunConfig is the single source of truth for a run; the CLI loads an
optional config file, applies --set overrides (flags win), validates,
and echoes the resolved form into the output directory so runs are
reproducible from their artifacts.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import IO

from .audio import FbankConfig
from .errors import ConfigError
from .guidance import DEFAULT_SCALES, GUIDANCE_MODES


@dataclass
class RunConfig:
    # diffusion
    schedule_kind: str = "linear"
    total_steps: int = 200
    # guidance; scale < 0 means "per-mode default"
    guidance_mode: str = "built-in"
    guidance_scale: float = -1.0
    # model artifacts
    estimator_checkpoint: str = ""
    embedder_checkpoint: str = ""
    # front end
    sample_rate: int = 16000
    frame_len: float = 0.025
    frame_shift: float = 0.010
    n_fft: int = 512
    n_mels: int = 64
    f_min: float = 300.0
    f_max: float = 7600.0
    log_floor: float = 1e-10
    vad_frame_len: float = 0.025
    vad_threshold_db: float = -40.0
    # protocol; durations are mapped to frames through frame_shift
    clip_duration: float = 2.0
    gen_duration: float = 8.0
    conditions: str = "baseline,dm,dm_plus,duplicate"
    extend_test_only: bool = False
    # toy world / training
    toy_clusters: int = 2
    toy_frames: int = 8
    toy_bins: int = 8
    toy_emb_dim: int = 4
    toy_mean_scale: float = 2.0
    toy_cluster_std: float = 0.3
    hidden1: int = 512
    hidden2: int = 512
    train_steps: int = 2000
    batch_size: int = 32
    learning_rate: float = 1e-3
    p_uncond: float = 0.1
    # run control
    master_seed: int = 0
    output_dir: str = "out"

    def resolved_scale(self) -> float:
        if self.guidance_scale >= 0.0:
            return self.guidance_scale
        return DEFAULT_SCALES[self.guidance_mode]

    def fbank_config(self) -> FbankConfig:
        return FbankConfig(
            sample_rate=self.sample_rate, frame_len=self.frame_len,
            frame_shift=self.frame_shift, n_fft=self.n_fft, n_mels=self.n_mels,
            f_min=self.f_min, f_max=self.f_max, log_floor=self.log_floor,
        )

    def validate(self) -> None:
        if self.guidance_mode not in GUIDANCE_MODES:
            raise ConfigError(f"guidance_mode must be one of {GUIDANCE_MODES}")
        if self.total_steps < 1:
            raise ConfigError("total_steps must be >= 1")
        if self.clip_duration <= 0.0 or self.gen_duration <= 0.0:
            raise ConfigError("durations must be positive")
        for name in self.conditions.split(","):
            if name.strip() not in ("baseline", "dm", "dm_plus", "duplicate"):
                raise ConfigError(f"unknown condition {name.strip()!r}")

    def render(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            lines.append(f"{f.name}={getattr(self, f.name)}")
        return "\n".join(lines) + "\n"


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _coerce(key: str, raw: str):
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    kind = _FIELD_TYPES[key]
    if kind == "bool":
        if raw.lower() in ("1", "true", "yes"):
            return True
        if raw.lower() in ("0", "false", "no"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected {kind}, got {raw!r}") from None
    return raw


def apply_setting(cfg: RunConfig, key: str, raw: str) -> None:
    setattr(cfg, key, _coerce(key, raw))


def load_config(source: IO[str], cfg: RunConfig | None = None) -> RunConfig:
    """Parse key=value lines ('#' comments and blanks allowed) into a config."""
    cfg = cfg or RunConfig()
    for lineno, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        apply_setting(cfg, key.strip(), value.strip())
    return cfg

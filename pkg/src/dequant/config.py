"""Pipeline configuration: reference defaults, INI files, flag overrides.

Every field can be overridden from a config file (flat key=value entries
grouped in sections) or `--set section.key=value` flags. Defaults follow the
published reference setup: 16 kHz audio, 3.2 s crops, T=1000 with betas
linear from 1e-4 to 0.02, midway sampling at tau=100 / gamma=0.3, discrete
strides [2,4,5,8] vs continuous [8], RVQ with K=1024 per stage, Adam at
lr 5e-5 with batch 20. Desk-scale runs override sizes and step counts.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields

from .codec import AEConfig
from .denoiser import TrainConfig
from .diffusion import SamplerConfig
from .synth import SynthSpec


@dataclass
class ScheduleConfig:
    T: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02


@dataclass
class RVQConfig:
    stages: int = 3
    K: int = 1024
    iters: int = 25
    seed: int = 0


@dataclass
class DenoiserConfig:
    widths: tuple = (16, 32, 32)
    kernel: int = 5
    latent_span: float = 3.0   # z-score divisor keeping latents inside the pilot band
    # reference full-scale widths, for documentation only: [128, 256, 256, 512, 512]


@dataclass
class UpsamplerConfig:
    mode: str = "learned"    # "learned" or "nearest"
    hidden: int = 32
    kernel: int = 5


@dataclass
class PipelineConfig:
    sample_rate: int = 16000
    crop_seconds: float = 3.2
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    continuous_ae: AEConfig = field(default_factory=lambda: AEConfig(
        strides=(8,), latent_dim=16, base_channels=32, seed=1))
    discrete_ae: AEConfig = field(default_factory=lambda: AEConfig(
        strides=(2, 4, 5, 8), latent_dim=8, base_channels=32, seed=2))
    rvq: RVQConfig = field(default_factory=RVQConfig)
    denoiser: DenoiserConfig = field(default_factory=DenoiserConfig)
    upsampler: UpsamplerConfig = field(default_factory=UpsamplerConfig)
    train_ae: TrainConfig = field(default_factory=lambda: TrainConfig(
        batch_size=20, learning_rate=5e-5, max_steps=2000, seed=3))
    train_denoiser: TrainConfig = field(default_factory=lambda: TrainConfig(
        batch_size=20, learning_rate=5e-5, max_steps=2000, seed=4))
    train_upsampler: TrainConfig = field(default_factory=lambda: TrainConfig(
        batch_size=20, learning_rate=1e-3, max_steps=500, seed=5))
    synth: SynthSpec = field(default_factory=SynthSpec)

    @property
    def crop_samples(self) -> int:
        return int(round(self.crop_seconds * self.sample_rate))

    @property
    def discrete_frame_rate(self) -> float:
        return self.sample_rate / self.discrete_ae.hop

    @property
    def upsample_factor(self) -> int:
        if self.discrete_ae.hop % self.continuous_ae.hop:
            raise ValueError(
                f"discrete hop {self.discrete_ae.hop} not an integer multiple "
                f"of continuous hop {self.continuous_ae.hop}")
        return self.discrete_ae.hop // self.continuous_ae.hop


_SECTIONS = {
    "audio": None,  # top-level scalars
    "schedule": "schedule",
    "sampler": "sampler",
    "continuous_ae": "continuous_ae",
    "discrete_ae": "discrete_ae",
    "rvq": "rvq",
    "denoiser": "denoiser",
    "upsampler": "upsampler",
    "train_ae": "train_ae",
    "train_denoiser": "train_denoiser",
    "train_upsampler": "train_upsampler",
    "synth": "synth",
}

_TOP_LEVEL = {"sample_rate", "crop_seconds"}


def _coerce(current, text: str):
    if isinstance(current, bool):
        return text.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(current, int):
        return int(text)
    if isinstance(current, float):
        return float(text)
    if isinstance(current, tuple):
        return tuple(int(v) for v in text.replace(",", " ").split())
    return text


def _apply(cfg: PipelineConfig, section: str, key: str, value: str):
    if section == "audio":
        if key not in _TOP_LEVEL:
            raise KeyError(f"unknown config key audio.{key}")
        setattr(cfg, key, _coerce(getattr(cfg, key), value))
        return
    attr = _SECTIONS.get(section)
    if attr is None:
        raise KeyError(f"unknown config section [{section}]")
    sub = getattr(cfg, attr)
    if not hasattr(sub, key):
        # configparser lowercases keys; match field names case-insensitively
        matches = [f.name for f in fields(sub) if f.name.lower() == key.lower()]
        if not matches:
            raise KeyError(f"unknown config key {section}.{key}")
        key = matches[0]
    setattr(sub, key, _coerce(getattr(sub, key), value))


def load_config(path=None, overrides=()) -> PipelineConfig:
    """Build a PipelineConfig from defaults, an optional INI file, then
    `section.key=value` override strings (applied in that order)."""
    cfg = PipelineConfig()
    if path is not None:
        parser = configparser.ConfigParser()
        with open(path) as f:
            parser.read_file(f)
        for section in parser.sections():
            for key, value in parser.items(section):
                _apply(cfg, section, key, value)
    for ov in overrides:
        if "=" not in ov or "." not in ov.split("=", 1)[0]:
            raise ValueError(f"override must look like section.key=value, got {ov!r}")
        dotted, value = ov.split("=", 1)
        section, key = dotted.split(".", 1)
        _apply(cfg, section.strip(), key.strip(), value.strip())
    return cfg


def dump_config(cfg: PipelineConfig) -> str:
    """Render the full configuration as INI text (all effective values)."""
    parser = configparser.ConfigParser()
    parser["audio"] = {k: str(getattr(cfg, k)) for k in sorted(_TOP_LEVEL)}
    for section, attr in _SECTIONS.items():
        if attr is None:
            continue
        sub = getattr(cfg, attr)
        parser[section] = {}
        for f in fields(sub):
            v = getattr(sub, f.name)
            if isinstance(v, tuple):
                v = " ".join(str(x) for x in v)
            parser[section][f.name] = str(v)
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()

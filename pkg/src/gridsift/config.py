"""Typed configuration with YAML loading, strict keys and range checks."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field, fields

import yaml

CONFIG_VERSION = 1
THREADS_ENV = "GRIDSIFT_THREADS"


class ConfigError(ValueError):
    """Raised for unknown keys, bad ranges or version mismatches."""


@dataclass(frozen=True)
class WindowConfig:
    length: int = 40            # samples per window
    overlap: int = 20           # samples shared between neighbours
    gap_factor: float = 3.0     # dt > gap_factor periods splits segments

    def validate(self):
        if self.length < 2:
            raise ConfigError(f"window.length must be >= 2, got {self.length}")
        if not 0 <= self.overlap < self.length:
            raise ConfigError(
                f"window.overlap must be in [0, length), got {self.overlap}")
        if self.gap_factor <= 0:
            raise ConfigError(f"window.gap_factor must be > 0, got {self.gap_factor}")

    @property
    def stride(self) -> int:
        return self.length - self.overlap


@dataclass(frozen=True)
class DetectorConfig:
    hidden: int = 32                    # LSTM units in both networks
    noise_dim: int = 8                  # per-step generator noise
    lr: float = 1e-3
    beta1: float = 0.5                  # Adam momentum; low value damps cycling
    batch_size: int = 64
    epochs: int = 200
    z_p: float = 3.0                    # flag outside mu +- z_p * sigma
    eps_clip: float = 1e-6              # reported scores stay in (eps, 1-eps)
    max_train_windows: int = 1024       # evenly spaced subsample for updates
    loss_mode: str = "non_saturating"   # or "saturating" (the literal min-max form)
    sigma_floor: float = 1e-12

    def validate(self):
        for name in ("hidden", "noise_dim", "batch_size", "epochs", "max_train_windows"):
            if getattr(self, name) < 1:
                raise ConfigError(f"detector.{name} must be >= 1, got {getattr(self, name)}")
        if self.lr <= 0:
            raise ConfigError(f"detector.lr must be > 0, got {self.lr}")
        if not 0 <= self.beta1 < 1:
            raise ConfigError(f"detector.beta1 must be in [0, 1), got {self.beta1}")
        if self.z_p <= 0:
            raise ConfigError(f"detector.z_p must be > 0, got {self.z_p}")
        if not 0 < self.eps_clip < 0.5:
            raise ConfigError(f"detector.eps_clip must be in (0, 0.5), got {self.eps_clip}")
        if self.loss_mode not in ("non_saturating", "saturating"):
            raise ConfigError(
                f"detector.loss_mode must be 'non_saturating' or 'saturating', "
                f"got {self.loss_mode!r}")


@dataclass(frozen=True)
class EventConfig:
    padding: int = 20           # samples added on each side of a merged span
    quiet_gap: int = 10         # flagged spans closer than this merge

    def validate(self):
        if self.padding < 0:
            raise ConfigError(f"events.padding must be >= 0, got {self.padding}")
        if self.quiet_gap < 0:
            raise ConfigError(f"events.quiet_gap must be >= 0, got {self.quiet_gap}")


@dataclass(frozen=True)
class SimilarityConfig:
    # minimum per-row std, in units of the training feature std, for a row
    # to count as varying; sensor-noise rows sit around 0.2-0.35
    eps_var: float = 0.75
    method: str = "fft"

    def validate(self):
        if self.eps_var < 0:
            raise ConfigError(f"similarity.eps_var must be >= 0, got {self.eps_var}")
        if self.method not in ("fft", "naive"):
            raise ConfigError(f"similarity.method must be 'fft' or 'naive', "
                              f"got {self.method!r}")


@dataclass(frozen=True)
class ClusterConfig:
    c_max: int = 8
    s_min: float = 0.25             # silhouette floor below which C* = 1
    exact_cap: int = 15             # exact solver up to this many events
    theta_active: float = 0.8       # assignment threshold for replay
    reopt_events: int = 10_000      # reoptimize after this many assignments
    reopt_days: float = 7.0         # ... or this much simulated time

    def validate(self):
        if self.c_max < 2:
            raise ConfigError(f"cluster.c_max must be >= 2, got {self.c_max}")
        if not 0 <= self.s_min <= 1:
            raise ConfigError(f"cluster.s_min must be in [0, 1], got {self.s_min}")
        if self.exact_cap < 1:
            raise ConfigError(f"cluster.exact_cap must be >= 1, got {self.exact_cap}")
        if not 0 < self.theta_active <= 1:
            raise ConfigError(
                f"cluster.theta_active must be in (0, 1], got {self.theta_active}")
        if self.reopt_events < 1 or self.reopt_days <= 0:
            raise ConfigError("cluster reoptimization settings must be positive")


@dataclass(frozen=True)
class SynthConfig:
    fps: float = 120.0
    duration_min: float = 480.0     # 8 hours
    events_per_hour: float = 64.0
    include_super_event: bool = True
    min_gap: int = 200              # quiet samples between planted events

    def validate(self):
        if self.fps <= 0:
            raise ConfigError(f"synth.fps must be > 0, got {self.fps}")
        if self.duration_min < 10:
            raise ConfigError(
                f"synth.duration_min must be >= 10 minutes, got {self.duration_min}")
        if self.events_per_hour < 0:
            raise ConfigError(
                f"synth.events_per_hour must be >= 0, got {self.events_per_hour}")
        if self.min_gap < 0:
            raise ConfigError(f"synth.min_gap must be >= 0, got {self.min_gap}")


@dataclass(frozen=True)
class ReportConfig:
    steady_len: int = 20            # samples for pre/post steady-state medians
    transient_k: float = 4.0        # deviation threshold, in pre-padding stds
    sequence_gap_s: float = 180.0   # follower window after a trigger
    sequence_min_count: int = 50

    def validate(self):
        if self.steady_len < 1:
            raise ConfigError(f"report.steady_len must be >= 1, got {self.steady_len}")
        if self.transient_k <= 0:
            raise ConfigError(f"report.transient_k must be > 0, got {self.transient_k}")
        if self.sequence_gap_s <= 0 or self.sequence_min_count < 1:
            raise ConfigError("report sequence rule settings must be positive")


@dataclass(frozen=True)
class PipelineConfig:
    version: int = CONFIG_VERSION
    seed: int = 7
    threads: int = 1
    workdir: str = "out"
    window: WindowConfig = field(default_factory=WindowConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    events: EventConfig = field(default_factory=EventConfig)
    similarity: SimilarityConfig = field(default_factory=SimilarityConfig)
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    report: ReportConfig = field(default_factory=ReportConfig)

    def validate(self):
        if self.version != CONFIG_VERSION:
            raise ConfigError(
                f"config version {self.version}, this build expects {CONFIG_VERSION}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        for section in (self.window, self.detector, self.events, self.similarity,
                        self.cluster, self.synth, self.report):
            section.validate()

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_SECTIONS = {
    "window": WindowConfig,
    "detector": DetectorConfig,
    "events": EventConfig,
    "similarity": SimilarityConfig,
    "cluster": ClusterConfig,
    "synth": SynthConfig,
    "report": ReportConfig,
}


def _build_section(name: str, cls, data: dict):
    if not isinstance(data, dict):
        raise ConfigError(f"config section {name!r} must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]!r} in config section {name!r}")
    return cls(**data)


def config_from_dict(raw: dict) -> PipelineConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    known = {"version", "seed", "threads", "workdir"} | set(_SECTIONS)
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown top-level config key {sorted(unknown)[0]!r}")
    kwargs = {k: raw[k] for k in ("version", "seed", "threads", "workdir") if k in raw}
    for name, cls in _SECTIONS.items():
        if name in raw:
            kwargs[name] = _build_section(name, cls, raw[name])
    cfg = PipelineConfig(**kwargs)
    cfg = apply_thread_env(cfg)
    cfg.validate()
    return cfg


def apply_thread_env(cfg: PipelineConfig) -> PipelineConfig:
    """GRIDSIFT_THREADS in the environment overrides the configured count."""
    env = os.environ.get(THREADS_ENV)
    if env is None:
        return cfg
    try:
        threads = int(env)
    except ValueError as exc:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from exc
    return dataclasses.replace(cfg, threads=threads)


def load_config(path) -> PipelineConfig:
    with open(path, "r") as fh:
        raw = yaml.safe_load(fh)
    return config_from_dict(raw or {})


def default_config() -> PipelineConfig:
    cfg = apply_thread_env(PipelineConfig())
    cfg.validate()
    return cfg

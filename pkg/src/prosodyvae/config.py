"""Run configuration.

All knobs live in one nested dataclass tree and serialize to a flat
``section.key = value`` text file. Overrides arrive either as dotted
``key=value`` strings (CLI) or environment variables with the
``PROSODYVAE_`` prefix where dots become double underscores
(``PROSODYVAE_train__max_steps=100``). Unknown keys are rejected.
"""

import dataclasses
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError

ENV_PREFIX = "PROSODYVAE_"

STAGES = ("stage1", "stage2", "joint_baseline", "nat_plain", "nat_global")


@dataclass
class FeatureConfig:
    sample_rate_hz: int = 22050
    frame_length: int = 1024
    hop_length: int = 256
    n_mels: int = 80
    fmin_hz: float = 40.0
    fmax_hz: float = 0.0  # 0 -> sample_rate / 2
    log_floor: float = 1e-5
    center: bool = False

    @property
    def frame_shift_ms(self):
        return 1000.0 * self.hop_length / self.sample_rate_hz

    def fmax(self):
        return self.fmax_hz if self.fmax_hz > 0 else self.sample_rate_hz / 2


@dataclass
class PitchConfig:
    f0_min_hz: float = 50.0
    f0_max_hz: float = 600.0
    voicing_threshold: float = 0.6
    energy_floor: float = 1e-4


@dataclass
class SyntheticConfig:
    n_utterances: int = 600
    n_coarse_factors: int = 4
    f0_base_per_factor: tuple = (110.0, 150.0, 200.0, 260.0)
    rate_per_factor: tuple = (0.8, 1.0, 1.15, 1.3)
    token_vocab_size: int = 40
    tokens_per_utt_min: int = 6
    tokens_per_utt_max: int = 12
    fine_jitter: float = 8.0
    seed: int = 1234


@dataclass
class ModelConfig:
    vocab_size: int = 43  # 3 reserved ids + synthetic token vocab
    n_mels: int = 80
    d_emb: int = 32
    d_h: int = 32
    d_z: int = 8
    d_g: int = 16
    d_att: int = 32
    attn_location_filters: int = 8
    attn_location_kernel: int = 11
    attn_diagonal_strength: float = 10.0
    posterior_hidden: int = 64
    prenet_dim: int = 32
    decoder_lstm_dim: int = 64
    prenet_dropout: float = 0.5
    ref_conv_channels: int = 16
    ref_lstm_dim: int = 32
    ref_min_frames: int = 8
    prior_lstm_dim: int = 64
    prior_include_current_token: bool = False
    log_sigma_min: float = -8.0
    log_sigma_max: float = 2.0
    sigma_duration: float = 0.05
    duration_floor: int = 1
    dur_pred_hidden: int = 32


@dataclass
class TrainConfig:
    stage: str = "stage1"
    max_steps: int = 1500
    batch_size: int = 16
    learning_rate: float = 2e-3
    warmup_steps: int = 100
    decay_steps: int = 2000
    decay_rate: float = 0.5
    kl_weight: float = 2e-3
    kl_warmup_steps: int = 400
    holdout_fraction: float = 0.1
    eval_every: int = 250
    eval_mcd_utterances: int = 8
    stage1_checkpoint: str = ""
    teacher_force_prior_samples: bool = False
    duration_loss_weight: float = 1.0


@dataclass
class EvalConfig:
    temperature: float = 0.7
    posterior_sample: bool = True
    n_references: int = 15
    sentences_per_reference: int = 14
    sentence_len_min: int = 6
    sentence_len_max: int = 12
    probe_folds: int = 5
    mcd_coeffs: int = 13
    f0_grid_step_hz: float = 1.0
    voicing_score_threshold: float = 0.25


@dataclass
class Config:
    seed: int = 1234
    corpus: FeatureConfig = field(default_factory=FeatureConfig)
    pitch: PitchConfig = field(default_factory=PitchConfig)
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def validate(self):
        if self.train.stage not in STAGES:
            raise ConfigError(f"train.stage must be one of {STAGES}, got {self.train.stage!r}")
        if self.train.stage == "stage2" and not self.train.stage1_checkpoint:
            raise ConfigError("train.stage1_checkpoint is required when train.stage = stage2")
        for name in ("d_h", "d_g", "d_emb"):
            if getattr(self.model, name) <= 0:
                raise ConfigError(f"model.{name} must be positive")
        if self.model.d_z < 0:
            raise ConfigError("model.d_z must be >= 0")
        if self.model.d_z == 0 and self.train.stage in ("stage1", "stage2", "joint_baseline"):
            raise ConfigError(f"model.d_z must be positive for stage {self.train.stage!r}")
        s = self.synthetic
        if not (len(s.f0_base_per_factor) == len(s.rate_per_factor) == s.n_coarse_factors):
            raise ConfigError("synthetic factor lists must match n_coarse_factors")
        return self


def _coerce(raw, target_type):
    if target_type is bool:
        low = raw.strip().lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ConfigError(f"expected a boolean, got {raw!r}")
    if target_type is int:
        return int(raw)
    if target_type is float:
        return float(raw)
    if target_type is tuple:
        raw = raw.strip()
        if not raw:
            return ()
        return tuple(float(part) for part in raw.split(","))
    return raw


def set_key(cfg, dotted, raw_value):
    """Assign one dotted key like ``train.max_steps`` from its string form."""
    parts = dotted.split(".")
    node = cfg
    for part in parts[:-1]:
        if not dataclasses.is_dataclass(node) or part not in {f.name for f in fields(node)}:
            raise ConfigError(f"unknown config key {dotted!r}")
        node = getattr(node, part)
    leaf = parts[-1]
    match = {f.name: f for f in fields(node)}.get(leaf)
    if match is None or dataclasses.is_dataclass(getattr(node, leaf)):
        raise ConfigError(f"unknown config key {dotted!r}")
    try:
        setattr(node, leaf, _coerce(raw_value, match.type if isinstance(match.type, type) else type(getattr(node, leaf))))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"bad value for {dotted!r}: {exc}") from exc


def flatten(cfg, prefix=""):
    out = {}
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        key = f"{prefix}{f.name}"
        if dataclasses.is_dataclass(value):
            out.update(flatten(value, prefix=f"{key}."))
        else:
            out[key] = value
    return out


def _format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(repr(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def save_config(cfg, path):
    lines = [f"{key} = {_format_value(value)}" for key, value in sorted(flatten(cfg).items())]
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(lines) + "\n")


def parse_assignments(lines, cfg=None):
    cfg = cfg if cfg is not None else Config()
    for raw in lines:
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        set_key(cfg, key, value)
    return cfg


def load_config(path, overrides=(), env=None):
    """Load a flat config file, then apply env and CLI overrides in that order."""
    cfg = Config()
    if path is not None:
        text = Path(path).read_text()
        parse_assignments(text.splitlines(), cfg)
    env = os.environ if env is None else env
    for name, value in sorted(env.items()):
        if name.startswith(ENV_PREFIX):
            set_key(cfg, name[len(ENV_PREFIX):].replace("__", "."), value)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        key, value = item.split("=", 1)
        set_key(cfg, key.strip(), value.strip())
    return cfg

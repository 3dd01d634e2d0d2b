"""Experiment configuration: the declarative description of one game variant.

A configuration is a flat record (JSON on disk) from which the typed
sub-configurations (channel, agent dims, augmentation plan, loss weights,
extractor) are derived. Two named profiles exist: ``desk`` (the default,
sized for a single workstation) and ``paper`` (full CIFAR-10 scale).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

from .agents import AgentDims
from .augment import AugmentPlan
from .channel import ChannelConfig
from .errors import ConfigError
from .pretrain import ContrastiveConfig
from .tasks import LossWeights
from .vision import REGIMES, ExtractorConfig

VARIANTS = (
    "baseline",
    "sender_noise",
    "sender_rotation",
    "sender_noise_rotation",
    "simclr_views",
    "receiver_predicts_rotation",
    "sender_predicts_rotation",
    "sender_predicts_rotation_simclr",
)

NOISE_VARIANTS = ("sender_noise", "sender_noise_rotation",
                  "receiver_predicts_rotation", "sender_predicts_rotation")
ROTATION_VARIANTS = ("sender_rotation", "sender_noise_rotation",
                     "receiver_predicts_rotation", "sender_predicts_rotation",
                     "sender_predicts_rotation_simclr")
SIMCLR_VARIANTS = ("simclr_views", "sender_predicts_rotation_simclr")
ROTATION_HEAD_VARIANTS = ("receiver_predicts_rotation",
                          "sender_predicts_rotation",
                          "sender_predicts_rotation_simclr")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one experiment, seed included."""

    variant: str = "baseline"
    regime: str = "learned"
    batch_size: int = 32
    epochs: int = 30
    seed: int = 0
    lr: float = 1e-3
    train_size: int = 5000
    val_size: int = 1000
    eval_runs: int = 3
    epoch_eval_runs: int = 1
    vocab_size: int = 20
    max_len: int = 5
    temperature: float = 1.0
    eos_id: int = 0
    embed_dim: int = 64
    hidden_dim: int = 128
    channels: tuple[int, ...] = (32, 64, 128, 256)
    noise_variance: float = 0.1
    lambda_game: float = 1.0
    lambda_rot: float = 0.5
    rotation_tap: str | None = None
    unfreeze_epoch: int | None = None
    pretrain_epochs: int = 20
    pretrain_batch_size: int = 128
    contrastive_temperature: float = 0.5
    proxy_epochs: int = 15

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(
                f"unknown variant {self.variant!r}; allowed variants: "
                f"{', '.join(VARIANTS)}; allowed regimes: {', '.join(REGIMES)}")
        if self.regime not in REGIMES:
            raise ConfigError(
                f"unknown regime {self.regime!r}; allowed regimes: "
                f"{', '.join(REGIMES)}; allowed variants: {', '.join(VARIANTS)}")
        if self.batch_size < 2:
            raise ConfigError(
                f"batch_size must be >= 2 (one target plus at least one "
                f"distractor), got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        for name in ("train_size", "val_size"):
            if getattr(self, name) < self.batch_size:
                raise ConfigError(f"{name} must be >= batch_size")
        for name in ("eval_runs", "epoch_eval_runs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not self.lr > 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        object.__setattr__(self, "channels", tuple(self.channels))
        if self.rotation_tap is not None:
            if self.rotation_tap not in ("sender", "receiver"):
                raise ConfigError(
                    f"rotation_tap must be 'sender' or 'receiver', "
                    f"got {self.rotation_tap!r}")
            if not self.has_rotation_head:
                raise ConfigError(
                    f"rotation_tap is only valid for rotation-prediction "
                    f"variants ({', '.join(ROTATION_HEAD_VARIANTS)})")
        if self.unfreeze_epoch is not None:
            if self.regime != "ss_pretrained_finetuned":
                raise ConfigError(
                    "unfreeze_epoch requires regime 'ss_pretrained_finetuned'")
            if self.unfreeze_epoch < 0:
                raise ConfigError("unfreeze_epoch must be >= 0")
        elif self.regime == "ss_pretrained_finetuned":
            object.__setattr__(self, "unfreeze_epoch", 5)
        # Constructing the typed sub-configs validates their invariants.
        self.channel_config
        self.agent_dims
        self.loss_weights
        self.extractor_config
        self.contrastive_config

    @property
    def has_rotation_head(self) -> bool:
        return self.variant in ROTATION_HEAD_VARIANTS

    @property
    def resolved_rotation_tap(self) -> str | None:
        if not self.has_rotation_head:
            return None
        if self.rotation_tap is not None:
            return self.rotation_tap
        return ("receiver" if self.variant == "receiver_predicts_rotation"
                else "sender")

    @property
    def feature_dim(self) -> int:
        return self.channels[-1]

    @property
    def channel_config(self) -> ChannelConfig:
        return ChannelConfig(vocab_size=self.vocab_size, max_len=self.max_len,
                             temperature=self.temperature, eos_id=self.eos_id)

    @property
    def agent_dims(self) -> AgentDims:
        return AgentDims(embed_dim=self.embed_dim, hidden_dim=self.hidden_dim,
                         feature_dim=self.feature_dim)

    @property
    def loss_weights(self) -> LossWeights:
        return LossWeights(lambda_game=self.lambda_game,
                           lambda_rot=self.lambda_rot)

    @property
    def extractor_config(self) -> ExtractorConfig:
        return ExtractorConfig(regime=self.regime, channels=self.channels,
                               feature_dim=self.feature_dim)

    @property
    def contrastive_config(self) -> ContrastiveConfig:
        return ContrastiveConfig(temperature=self.contrastive_temperature,
                                 batch_size=self.pretrain_batch_size,
                                 epochs=self.pretrain_epochs, lr=self.lr)

    @property
    def augment_plan(self) -> AugmentPlan:
        return AugmentPlan(
            noise_enabled=self.variant in NOISE_VARIANTS,
            noise_variance=self.noise_variance,
            rotation_enabled=self.variant in ROTATION_VARIANTS,
            simclr_enabled=self.variant in SIMCLR_VARIANTS,
        )


PROFILES = {
    "desk": {},
    "paper": {
        "batch_size": 128,
        "epochs": 200,
        "vocab_size": 100,
        "train_size": 50_000,
        "val_size": 10_000,
        "eval_runs": 7,
    },
}

_INT_KEYS = {"batch_size", "epochs", "seed", "train_size", "val_size",
             "eval_runs", "epoch_eval_runs", "vocab_size", "max_len",
             "eos_id", "embed_dim", "hidden_dim", "pretrain_epochs",
             "pretrain_batch_size", "proxy_epochs"}
_FLOAT_KEYS = {"lr", "temperature", "noise_variance", "lambda_game",
               "lambda_rot", "contrastive_temperature"}
_STR_KEYS = {"variant", "regime"}
_OPT_INT_KEYS = {"unfreeze_epoch"}
_OPT_STR_KEYS = {"rotation_tap"}


def _coerce(key: str, value):
    if key in _INT_KEYS:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"key {key!r} must be an integer, got {value!r}")
        return value
    if key in _FLOAT_KEYS:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"key {key!r} must be a number, got {value!r}")
        return float(value)
    if key in _STR_KEYS:
        if not isinstance(value, str):
            raise ConfigError(f"key {key!r} must be a string, got {value!r}")
        return value
    if key in _OPT_INT_KEYS:
        if value is not None and (isinstance(value, bool)
                                  or not isinstance(value, int)):
            raise ConfigError(f"key {key!r} must be an integer or null, got {value!r}")
        return value
    if key in _OPT_STR_KEYS:
        if value is not None and not isinstance(value, str):
            raise ConfigError(f"key {key!r} must be a string or null, got {value!r}")
        return value
    if key == "channels":
        if (not isinstance(value, (list, tuple)) or not value
                or not all(isinstance(c, int) and not isinstance(c, bool)
                           for c in value)):
            raise ConfigError(f"key 'channels' must be a list of integers, got {value!r}")
        return tuple(value)
    raise ConfigError(f"unknown configuration key {key!r}")


def parse_config(text: str) -> ExperimentConfig:
    """Parse a JSON configuration document.

    An empty document yields the desk-scale defaults. The optional
    ``profile`` key selects a base profile; every other key overrides one
    field. Unknown keys are rejected.
    """
    text = text.strip()
    try:
        raw = json.loads(text) if text else {}
    except json.JSONDecodeError as e:
        raise ConfigError(f"configuration is not valid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    profile = raw.pop("profile", "desk")
    if profile not in PROFILES:
        raise ConfigError(
            f"unknown profile {profile!r}; allowed: {', '.join(PROFILES)}")
    merged = dict(PROFILES[profile])
    for key, value in raw.items():
        merged[key] = _coerce(key, value)
    return ExperimentConfig(**merged)


def config_echo(config: ExperimentConfig) -> dict:
    """Flat JSON-safe dict; parse_config(json.dumps(...)) reproduces config."""
    out = dataclasses.asdict(config)
    out["channels"] = list(config.channels)
    return out

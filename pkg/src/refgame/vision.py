"""Image feature extractors under the different weight regimes.

A compact VGG-style convolutional stack stands in for the large pretrained
network of the original game: conv-batchnorm-ReLU blocks with 2x pooling and
a final global average pool. The "pretrained" regime is realised by
supervised pretraining on the classification labels of the training split;
the self-supervised regimes consume a checkpoint produced by contrastive
pretraining.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .augment import AugmentPlan, baseline_augment
from .errors import ConfigError
from .torchutil import (derive_rng, derive_torch_generator, init_batchnorm,
                        init_conv, init_linear)

REGIMES = ("pretrained_frozen", "random_frozen", "learned",
           "ss_pretrained_frozen", "ss_pretrained_finetuned")
PRETRAINED_REGIMES = ("pretrained_frozen", "ss_pretrained_frozen",
                      "ss_pretrained_finetuned")
ALWAYS_FROZEN_REGIMES = ("pretrained_frozen", "random_frozen",
                         "ss_pretrained_frozen")

# CIFAR-10 training-split statistics, used when no dataset stats are given.
DEFAULT_PIXEL_MEAN = (0.4914, 0.4822, 0.4465)
DEFAULT_PIXEL_STD = (0.2470, 0.2435, 0.2616)


@dataclass(frozen=True)
class ExtractorConfig:
    """Architecture and weight-regime description of the feature extractor."""

    regime: str
    channels: tuple[int, ...] = (32, 64, 128, 256)
    kernel_size: int = 3
    batch_norm: bool = True
    feature_dim: int = 256

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ConfigError(
                f"unknown regime {self.regime!r}; allowed: {', '.join(REGIMES)}")
        if not self.channels or any(c <= 0 for c in self.channels):
            raise ConfigError(f"channels must be positive, got {self.channels}")
        if self.feature_dim != self.channels[-1]:
            raise ConfigError(
                f"feature_dim {self.feature_dim} must equal the last channel "
                f"count {self.channels[-1]}")


class Extractor(nn.Module):
    """Conv stack producing one feature vector per image.

    Input images are (N, H, W, 3) float arrays in [0, 1]; per-channel
    normalisation is applied internally so augmentation happens in raw pixel
    space. ``frozen`` extractors receive no parameter updates and keep their
    normalisation statistics fixed.
    """

    def __init__(self, config: ExtractorConfig, gen: torch.Generator,
                 pixel_mean=DEFAULT_PIXEL_MEAN, pixel_std=DEFAULT_PIXEL_STD,
                 unfreeze_epoch: int | None = None):
        super().__init__()
        self.config = config
        self.unfreeze_epoch = unfreeze_epoch
        layers = []
        c_in = 3
        for c_out in config.channels:
            layers.append(nn.Conv2d(c_in, c_out, config.kernel_size,
                                    padding=config.kernel_size // 2,
                                    bias=not config.batch_norm))
            if config.batch_norm:
                layers.append(nn.BatchNorm2d(c_out, momentum=0.1))
            layers.append(nn.ReLU(inplace=True))
            layers.append(nn.MaxPool2d(2))
            c_in = c_out
        self.blocks = nn.Sequential(*layers)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.register_buffer(
            "pixel_mean", torch.tensor(pixel_mean).view(1, 3, 1, 1))
        self.register_buffer(
            "pixel_std", torch.tensor(pixel_std).view(1, 3, 1, 1))
        self._init_params(gen)
        self._frozen = False
        self.set_frozen(config.regime in ALWAYS_FROZEN_REGIMES
                        or (config.regime == "ss_pretrained_finetuned"
                            and (unfreeze_epoch or 0) > 0))

    @property
    def feature_dim(self) -> int:
        return self.config.feature_dim

    @property
    def frozen(self) -> bool:
        return self._frozen

    def set_frozen(self, flag: bool) -> None:
        self._frozen = bool(flag)
        for p in self.parameters():
            p.requires_grad_(not self._frozen)
        if self._frozen:
            self.eval()

    def apply_freeze_schedule(self, epoch: int) -> None:
        """Set the frozen state for a 1-based training epoch."""
        regime = self.config.regime
        if regime == "learned":
            self.set_frozen(False)
        elif regime == "ss_pretrained_finetuned":
            self.set_frozen(epoch <= (self.unfreeze_epoch or 0))
        else:
            self.set_frozen(True)

    def train(self, mode: bool = True):
        # A frozen extractor stays in eval mode so its normalisation
        # statistics never move.
        return super().train(mode and not self._frozen)

    def _init_params(self, gen: torch.Generator) -> None:
        for layer in self.blocks:
            if isinstance(layer, nn.Conv2d):
                init_conv(layer, gen)
            elif isinstance(layer, nn.BatchNorm2d):
                init_batchnorm(layer)

    def forward(self, images) -> torch.Tensor:
        x = _to_nchw(images)
        x = (x - self.pixel_mean) / self.pixel_std
        x = self.blocks(x)
        return self.pool(x).flatten(1)


def _to_nchw(images) -> torch.Tensor:
    if isinstance(images, np.ndarray):
        images = torch.from_numpy(np.ascontiguousarray(images, dtype=np.float32))
    if images.ndim != 4 or images.shape[3] != 3:
        raise ValueError(
            f"expected (N, H, W, 3) images, got shape {tuple(images.shape)}")
    return images.permute(0, 3, 1, 2).contiguous()


def extractor_checkpoint(extractor: Extractor) -> dict:
    """Self-describing checkpoint for an extractor's weights."""
    return {
        "kind": "extractor",
        "regime": extractor.config.regime,
        "channels": list(extractor.config.channels),
        "kernel_size": extractor.config.kernel_size,
        "batch_norm": extractor.config.batch_norm,
        "feature_dim": extractor.config.feature_dim,
        "state": {k: v.detach().clone() for k, v in extractor.state_dict().items()},
    }


def build_extractor(config: ExtractorConfig, seed: int,
                    weights_source: dict | str | Path | None = None,
                    pixel_mean=DEFAULT_PIXEL_MEAN,
                    pixel_std=DEFAULT_PIXEL_STD,
                    unfreeze_epoch: int | None = None) -> Extractor:
    """Construct an extractor for the given regime.

    Pretrained regimes require ``weights_source`` (a checkpoint dict or a
    path to one); random regimes are initialised deterministically from the
    seed.
    """
    if config.regime in PRETRAINED_REGIMES and weights_source is None:
        raise ConfigError(
            f"regime {config.regime!r} requires a pretrained weights_source")
    gen = derive_torch_generator(seed, "extractor-init")
    extractor = Extractor(config, gen, pixel_mean, pixel_std,
                          unfreeze_epoch=unfreeze_epoch)
    if weights_source is not None:
        if isinstance(weights_source, (str, Path)):
            weights_source = torch.load(weights_source, weights_only=True)
        if weights_source.get("kind") != "extractor":
            raise ConfigError("weights_source is not an extractor checkpoint")
        if list(config.channels) != list(weights_source["channels"]):
            raise ConfigError(
                f"checkpoint channels {weights_source['channels']} do not "
                f"match config channels {list(config.channels)}")
        extractor.load_state_dict(weights_source["state"])
        # Restore the frozen flag dropped by load_state_dict's grad handling.
        extractor.set_frozen(extractor.frozen)
    return extractor


def extract_features(extractor: Extractor, images,
                     train_mode: bool = False) -> torch.Tensor:
    """Feature vectors for a batch of images.

    Eval mode is deterministic and gradient-free; train mode leaves the
    gradient path open (unless the extractor is frozen).
    """
    if train_mode and not extractor.frozen:
        extractor.train()
        return extractor(images)
    extractor.eval()
    with torch.no_grad():
        return extractor(images)


class _ProxyClassifier(nn.Module):
    def __init__(self, extractor: Extractor, n_classes: int,
                 gen: torch.Generator):
        super().__init__()
        self.extractor = extractor
        self.head = nn.Linear(extractor.feature_dim, n_classes)
        init_linear(self.head, gen)

    def forward(self, images) -> torch.Tensor:
        return self.head(self.extractor(images))


def train_supervised_proxy(config: ExtractorConfig, train_split, test_split,
                           seed: int, epochs: int = 15, batch_size: int = 128,
                           lr: float = 1e-3,
                           plan: AugmentPlan | None = None) -> tuple[dict, float]:
    """Supervised classification pretraining of the extractor.

    Trains the conv stack plus a linear head on the split's class labels,
    then discards the head. Returns the extractor checkpoint and the test
    accuracy of the classifier.
    """
    plan = plan or AugmentPlan()
    base = ExtractorConfig(regime="learned", channels=config.channels,
                           kernel_size=config.kernel_size,
                           batch_norm=config.batch_norm,
                           feature_dim=config.feature_dim)
    gen = derive_torch_generator(seed, "proxy-init")
    mean, std = train_split.channel_stats()
    extractor = Extractor(base, gen, mean, std)
    model = _ProxyClassifier(extractor, int(train_split.labels.max()) + 1, gen)
    optimizer = torch.optim.Adam(model.parameters(), lr=lr)
    n = len(train_split.images)
    for epoch in range(1, epochs + 1):
        model.train()
        rng = derive_rng(seed, "proxy-epoch", epoch)
        order = rng.permutation(n)
        for start in range(0, n - batch_size + 1, batch_size):
            idx = order[start:start + batch_size]
            batch = np.stack([baseline_augment(train_split.images[i], plan, rng)
                              for i in idx])
            labels = torch.from_numpy(train_split.labels[idx])
            logits = model(batch)
            loss = nn.functional.cross_entropy(logits, labels)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
    model.eval()
    correct = 0
    with torch.no_grad():
        for start in range(0, len(test_split.images), 256):
            batch = test_split.images[start:start + 256]
            labels = test_split.labels[start:start + 256]
            pred = model(batch).argmax(dim=1).numpy()
            correct += int((pred == labels).sum())
    accuracy = correct / len(test_split.images)
    checkpoint = extractor_checkpoint(extractor)
    checkpoint["regime"] = config.regime
    checkpoint["proxy_test_accuracy"] = accuracy
    return checkpoint, accuracy

"""Rotation-prediction head and multi-objective loss combination."""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .torchutil import init_batchnorm, init_linear

PROB_FLOOR = 1e-12
N_ROTATIONS = 4


@dataclass(frozen=True)
class LossWeights:
    """Weights of the additive multi-task objective."""

    lambda_game: float = 1.0
    lambda_rot: float = 0.5

    def __post_init__(self):
        if self.lambda_game < 0 or self.lambda_rot < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.lambda_game == 0 and self.lambda_rot == 0:
            raise ValueError("at least one loss weight must be positive")


class RotationHead(nn.Module):
    """Three affine layers predicting the four quarter-turn classes.

    The first two layers are 200-wide with batch normalisation before their
    ReLU activations; the final layer has no normalisation and ends in a
    softmax over the four rotation classes.
    """

    def __init__(self, input_dim: int, gen: torch.Generator,
                 hidden_dim: int = 200):
        super().__init__()
        self.input_dim = input_dim
        self.fc1 = nn.Linear(input_dim, hidden_dim)
        self.bn1 = nn.BatchNorm1d(hidden_dim, momentum=0.1)
        self.fc2 = nn.Linear(hidden_dim, hidden_dim)
        self.bn2 = nn.BatchNorm1d(hidden_dim, momentum=0.1)
        self.fc3 = nn.Linear(hidden_dim, N_ROTATIONS)
        for layer in (self.fc1, self.fc2, self.fc3):
            init_linear(layer, gen)
        init_batchnorm(self.bn1)
        init_batchnorm(self.bn2)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ValueError(
                f"expected [batch, {self.input_dim}] input, got {tuple(x.shape)}")
        x = torch.relu(self.bn1(self.fc1(x)))
        x = torch.relu(self.bn2(self.fc2(x)))
        return torch.softmax(self.fc3(x), dim=-1)


def cross_entropy_loss(probs: torch.Tensor, label: int) -> torch.Tensor:
    """-log p[label] with the probability floored at 1e-12."""
    if probs.ndim != 1:
        raise ValueError(f"expected a 1-D probability vector, got {tuple(probs.shape)}")
    if not 0 <= label < probs.shape[0]:
        raise ValueError(f"label {label} out of range")
    return -torch.log(probs[label].clamp_min(PROB_FLOOR))


def rotation_cross_entropy(probs: torch.Tensor,
                           labels: torch.Tensor) -> torch.Tensor:
    """Mean cross-entropy over a batch of probability rows."""
    picked = probs[torch.arange(probs.shape[0]), labels]
    return -torch.log(picked.clamp_min(PROB_FLOOR)).mean()


def combined_loss(l_game, l_rot, weights: LossWeights):
    """Weighted sum of the game and rotation losses."""
    return weights.lambda_game * l_game + weights.lambda_rot * l_rot

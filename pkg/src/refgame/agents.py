"""Sender and Receiver networks and the ranking loss of the game.

The Sender turns an image feature vector into a discrete token sequence via
an LSTM whose outputs are sampled with the straight-through estimator during
training and decoded greedily at evaluation. The Receiver decodes the token
sequence with its own LSTM and scores candidate feature vectors by inner
product.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .channel import (ChannelConfig, MessageBatch, find_lengths,
                      gumbel_softmax, straight_through_onehot)
from .torchutil import init_batchnorm, init_linear, init_lstm_cell


@dataclass(frozen=True)
class AgentDims:
    """Network widths shared by both agents.

    Vocabulary size and maximum message length live in ChannelConfig.
    """

    embed_dim: int = 64
    hidden_dim: int = 128
    feature_dim: int = 256

    def __post_init__(self):
        for name in ("embed_dim", "hidden_dim", "feature_dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def _hard_onehot(logits: torch.Tensor) -> torch.Tensor:
    index = logits.argmax(dim=-1, keepdim=True)
    return torch.zeros_like(logits).scatter_(-1, index, 1.0)


class Sender(nn.Module):
    """Feature vector -> discrete message.

    The image feature is mapped to the initial LSTM hidden state through an
    affine layer followed by batch normalisation (the normalisation between
    the CNN and the LSTM is essential for the model to train). Generation
    starts from a learned start-of-sequence embedding that is not part of
    the vocabulary.
    """

    def __init__(self, dims: AgentDims, channel: ChannelConfig,
                 gen: torch.Generator):
        super().__init__()
        self.dims = dims
        self.channel = channel
        self.feat_to_hidden = nn.Linear(dims.feature_dim, dims.hidden_dim)
        self.feat_norm = nn.BatchNorm1d(dims.hidden_dim, momentum=0.1)
        self.cell = nn.LSTMCell(dims.embed_dim, dims.hidden_dim)
        self.hidden_to_logits = nn.Linear(dims.hidden_dim, channel.vocab_size)
        self.token_embedding = nn.Parameter(
            torch.empty(channel.vocab_size, dims.embed_dim))
        self.sos_embedding = nn.Parameter(torch.empty(dims.embed_dim))
        self._init_params(gen)

    def _init_params(self, gen: torch.Generator) -> None:
        init_linear(self.feat_to_hidden, gen)
        init_batchnorm(self.feat_norm)
        init_lstm_cell(self.cell, gen)
        init_linear(self.hidden_to_logits, gen)
        with torch.no_grad():
            self.token_embedding.normal_(0.0, 1.0, generator=gen)
            self.sos_embedding.normal_(0.0, 0.01, generator=gen)

    def encode(self, features: torch.Tensor) -> torch.Tensor:
        """Normalised feature-to-hidden representation (initial LSTM state)."""
        if features.ndim != 2 or features.shape[1] != self.dims.feature_dim:
            raise ValueError(
                f"expected [batch, {self.dims.feature_dim}] features, "
                f"got {tuple(features.shape)}")
        return self.feat_norm(self.feat_to_hidden(features))

    def generate(self, hidden: torch.Tensor,
                 rng: torch.Generator | None = None) -> MessageBatch:
        """Unroll the LSTM for up to max_len steps from the given state.

        Training mode samples each token with the straight-through estimator
        (``rng`` required); eval mode decodes greedily. Positions after the
        first end-of-sequence token are masked out of the result.
        """
        batch = hidden.shape[0]
        cfg = self.channel
        h, c = hidden, torch.zeros_like(hidden)
        e = self.sos_embedding.unsqueeze(0).expand(batch, -1)
        steps = []
        for _ in range(cfg.max_len):
            h, c = self.cell(e, (h, c))
            logits = self.hidden_to_logits(h)
            if self.training:
                if rng is None:
                    raise ValueError("training-mode generation requires rng")
                relaxed = gumbel_softmax(logits, cfg.temperature, rng)
                onehot = straight_through_onehot(relaxed)
            else:
                onehot = _hard_onehot(logits)
            steps.append(onehot)
            e = onehot @ self.token_embedding
        onehots = torch.stack(steps, dim=1)
        tokens = onehots.argmax(dim=-1)
        lengths = find_lengths(tokens, cfg.eos_id)
        keep = (torch.arange(cfg.max_len).unsqueeze(0) < lengths.unsqueeze(1))
        eos_onehot = torch.zeros(cfg.vocab_size)
        eos_onehot[cfg.eos_id] = 1.0
        onehots = torch.where(keep.unsqueeze(-1), onehots, eos_onehot)
        tokens = torch.where(keep, tokens, torch.full_like(tokens, cfg.eos_id))
        return MessageBatch(onehots=onehots, tokens=tokens, lengths=lengths,
                            config=cfg)

    def forward(self, features: torch.Tensor,
                rng: torch.Generator | None = None) -> MessageBatch:
        return self.generate(self.encode(features), rng)


class Receiver(nn.Module):
    """Message + candidate features -> one score per candidate."""

    def __init__(self, dims: AgentDims, channel: ChannelConfig,
                 gen: torch.Generator):
        super().__init__()
        self.dims = dims
        self.channel = channel
        self.token_embedding = nn.Parameter(
            torch.empty(channel.vocab_size, dims.embed_dim))
        self.cell = nn.LSTMCell(dims.embed_dim, dims.hidden_dim)
        self.hidden_norm = nn.BatchNorm1d(dims.hidden_dim, momentum=0.1)
        self.projection = nn.Linear(dims.hidden_dim, dims.feature_dim)
        self._init_params(gen)

    def _init_params(self, gen: torch.Generator) -> None:
        with torch.no_grad():
            self.token_embedding.normal_(0.0, 1.0, generator=gen)
        init_lstm_cell(self.cell, gen)
        init_batchnorm(self.hidden_norm)
        init_linear(self.projection, gen)

    def encode_message(self, message: MessageBatch) -> torch.Tensor:
        """Run the LSTM over the message; normalised final hidden state.

        The recurrence is frozen once a message's effective length is
        exhausted, so tokens after the end-of-sequence marker cannot
        influence the result.
        """
        embedded = message.onehots @ self.token_embedding
        batch, max_len, _ = embedded.shape
        h = embedded.new_zeros(batch, self.dims.hidden_dim)
        c = embedded.new_zeros(batch, self.dims.hidden_dim)
        for t in range(max_len):
            h_new, c_new = self.cell(embedded[:, t], (h, c))
            active = (t < message.lengths).float().unsqueeze(1)
            h = active * h_new + (1.0 - active) * h
            c = active * c_new + (1.0 - active) * c
        return self.hidden_norm(h)

    def project(self, hidden: torch.Tensor) -> torch.Tensor:
        return self.projection(hidden)

    def forward(self, message: MessageBatch,
                candidates: torch.Tensor) -> torch.Tensor:
        """Score matrix [batch, n_candidates] of inner products."""
        if candidates.ndim != 2 or candidates.shape[1] != self.dims.feature_dim:
            raise ValueError(
                f"expected [n, {self.dims.feature_dim}] candidates, "
                f"got {tuple(candidates.shape)}")
        query = self.project(self.encode_message(message))
        return query @ candidates.T


def game_hinge_loss(scores: torch.Tensor, target_index: int) -> torch.Tensor:
    """Sum over distractors of max(0, 1 - s_target + s_distractor)."""
    if scores.ndim != 1:
        raise ValueError(f"expected a 1-D score vector, got {tuple(scores.shape)}")
    if not 0 <= target_index < scores.shape[0]:
        raise ValueError(f"target_index {target_index} out of range")
    margins = torch.relu(1.0 - scores[target_index] + scores)
    mask = torch.ones_like(scores)
    mask[target_index] = 0.0
    return (margins * mask).sum()


def hinge_loss_all_targets(score_matrix: torch.Tensor) -> torch.Tensor:
    """Mean hinge loss over a batch where game b has target b.

    ``score_matrix[b, d]`` is the score of candidate d in game b.
    """
    if score_matrix.ndim != 2 or score_matrix.shape[0] != score_matrix.shape[1]:
        raise ValueError(
            f"expected a square score matrix, got {tuple(score_matrix.shape)}")
    b = score_matrix.shape[0]
    target = score_matrix.diagonal().unsqueeze(1)
    margins = torch.relu(1.0 - target + score_matrix)
    off_diag = 1.0 - torch.eye(b, dtype=score_matrix.dtype)
    return (margins * off_diag).sum() / b

"""Discrete stochastic communication primitives.

Gumbel noise, relaxed categorical sampling, straight-through discretisation
and end-of-sequence length semantics. All sampling goes through an explicit
``torch.Generator`` so results are reproducible and thread-safe with
per-thread generators.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import torch

CLAMP_EPS = 1e-20


@dataclass(frozen=True)
class ChannelConfig:
    """Static description of the communication channel.

    ``vocab_size`` counts every token id including the end-of-sequence token;
    ``max_len`` is the hard cap on emitted tokens per message. ``eos_id`` is 0
    by convention and doubles as the mask value for positions after the first
    end-of-sequence token.
    """

    vocab_size: int
    max_len: int
    temperature: float = 1.0
    eos_id: int = 0

    def __post_init__(self):
        if self.vocab_size < 2:
            raise ValueError(f"vocab_size must be >= 2, got {self.vocab_size}")
        if self.max_len < 1:
            raise ValueError(f"max_len must be >= 1, got {self.max_len}")
        if not self.temperature > 0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")
        if not 0 <= self.eos_id < self.vocab_size:
            raise ValueError(f"eos_id {self.eos_id} outside [0, {self.vocab_size})")


@dataclass(frozen=True)
class Message:
    """A single discrete message.

    ``tokens`` always has the channel's full length; positions at or past the
    first end-of-sequence token hold the eos id and carry no information.
    ``effective_len`` counts the end-of-sequence token itself.
    """

    tokens: tuple[int, ...]
    effective_len: int

    def __post_init__(self):
        if not 1 <= self.effective_len <= len(self.tokens):
            raise ValueError(
                f"effective_len {self.effective_len} outside [1, {len(self.tokens)}]")


def gumbel_from_uniform(u: torch.Tensor) -> torch.Tensor:
    """Map uniforms on (0,1) to standard Gumbel noise via -log(-log(u))."""
    u = u.clamp(CLAMP_EPS, 1.0 - CLAMP_EPS)
    return -torch.log(-torch.log(u))


def sample_gumbel(shape: Sequence[int], rng: torch.Generator) -> torch.Tensor:
    """I.i.d. standard Gumbel noise of the given shape.

    Uniform draws are clamped away from {0, 1} before the double log, so the
    output is always finite.
    """
    if len(tuple(shape)) == 0:
        raise ValueError("shape must be non-empty")
    u = torch.rand(tuple(shape), generator=rng)
    return gumbel_from_uniform(u)


def gumbel_softmax(
    logits: torch.Tensor,
    temperature: float,
    rng: torch.Generator | None = None,
    noise: torch.Tensor | None = None,
) -> torch.Tensor:
    """Relaxed categorical sample: softmax((logits + gumbel) / temperature).

    ``noise`` overrides the Gumbel draw (useful for deterministic checks);
    otherwise it is sampled from ``rng``. Output rows are positive and sum
    to 1 along the last dimension.
    """
    if not temperature > 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    if not torch.isfinite(logits).all():
        raise ValueError("logits must be finite")
    if noise is None:
        if rng is None:
            raise ValueError("either rng or noise must be provided")
        noise = sample_gumbel(logits.shape, rng)
    return torch.softmax((logits + noise) / temperature, dim=-1)


def straight_through_onehot(relaxed: torch.Tensor) -> torch.Tensor:
    """Hard one-hot at the argmax of a relaxed sample, gradient passed through.

    Forward output is the hard one-hot (exact without a gradient path, up to
    float rounding with one); backward behaves as if the relaxed sample
    itself had been used downstream. Ties break toward the lowest index.
    """
    index = relaxed.argmax(dim=-1, keepdim=True)
    hard = torch.zeros_like(relaxed).scatter_(-1, index, 1.0)
    if relaxed.requires_grad:
        return hard + relaxed - relaxed.detach()
    return hard


def effective_length(tokens: Sequence[int] | torch.Tensor, eos_id: int) -> int:
    """Index of the first eos token + 1, or the full length when absent.

    The end-of-sequence token counts toward the length.
    """
    if isinstance(tokens, torch.Tensor):
        tokens = tokens.tolist()
    for i, tok in enumerate(tokens):
        if int(tok) == eos_id:
            return i + 1
    return len(tokens)


def find_lengths(tokens: torch.Tensor, eos_id: int) -> torch.Tensor:
    """Vectorised effective_length over a [batch, max_len] token tensor."""
    is_eos = tokens == eos_id
    any_eos = is_eos.any(dim=1)
    first = is_eos.float().argmax(dim=1) + 1
    return torch.where(any_eos, first.long(), torch.full_like(first.long(), tokens.shape[1]))


def make_message(raw_tokens: Sequence[int], config: ChannelConfig) -> Message:
    """Normalise a raw token sequence into a Message (mask after first eos)."""
    toks = [int(t) for t in raw_tokens]
    if len(toks) != config.max_len:
        raise ValueError(f"expected {config.max_len} tokens, got {len(toks)}")
    if any(not 0 <= t < config.vocab_size for t in toks):
        raise ValueError("token id outside vocabulary")
    length = effective_length(toks, config.eos_id)
    masked = tuple(toks[i] if i < length else config.eos_id for i in range(len(toks)))
    return Message(tokens=masked, effective_len=length)


class MessageBatch:
    """A batch of messages with the differentiable sampling path attached.

    ``onehots`` holds the straight-through samples actually emitted, with
    every position after the first end-of-sequence token replaced by a
    constant (detached) eos one-hot, so no information or gradient flows
    through masked positions. ``tokens`` mirrors it with integer ids and
    ``lengths`` holds per-message effective lengths.
    """

    def __init__(self, onehots: torch.Tensor, tokens: torch.Tensor,
                 lengths: torch.Tensor, config: ChannelConfig):
        self.onehots = onehots
        self.tokens = tokens
        self.lengths = lengths
        self.config = config

    def __len__(self) -> int:
        return self.tokens.shape[0]

    def message(self, i: int) -> Message:
        return Message(tuple(int(t) for t in self.tokens[i]),
                       int(self.lengths[i]))

    def messages(self) -> list[Message]:
        return [self.message(i) for i in range(len(self))]

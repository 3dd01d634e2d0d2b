"""Deterministic parameter initialisation, seed derivation and state hashing.

Every stochastic component in this package draws from an explicit generator
so that runs are reproducible independently of global RNG state.
"""

from __future__ import annotations

import hashlib

import numpy as np
import torch
from torch import nn


def _tag_entropy(base_seed: int, tags: tuple) -> list[int]:
    words = [int(base_seed) & 0xFFFFFFFF]
    for tag in tags:
        if isinstance(tag, int):
            words.append(tag & 0xFFFFFFFF)
        else:
            digest = hashlib.sha256(str(tag).encode()).digest()
            words.append(int.from_bytes(digest[:4], "little"))
    return words


def derive_seed(base_seed: int, *tags) -> int:
    """Stable 63-bit seed derived from a base seed and a tag path."""
    ss = np.random.SeedSequence(_tag_entropy(base_seed, tags))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)


def derive_rng(base_seed: int, *tags) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(_tag_entropy(base_seed, tags)))


def derive_torch_generator(base_seed: int, *tags) -> torch.Generator:
    gen = torch.Generator()
    gen.manual_seed(derive_seed(base_seed, *tags))
    return gen


def uniform_fan_in_(tensor: torch.Tensor, fan_in: int, gen: torch.Generator) -> None:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init, the usual affine scaling."""
    bound = 1.0 / float(fan_in) ** 0.5
    with torch.no_grad():
        tensor.uniform_(-bound, bound, generator=gen)


def orthogonal_(tensor: torch.Tensor, gen: torch.Generator) -> None:
    """Orthogonal init for a 2-D tensor via QR of a generator-seeded normal."""
    rows, cols = tensor.shape
    size = max(rows, cols)
    with torch.no_grad():
        a = torch.randn(size, size, generator=gen, dtype=torch.float64)
        q, r = torch.linalg.qr(a)
        q = q * torch.sign(torch.diagonal(r))
        tensor.copy_(q[:rows, :cols].to(tensor.dtype))


def init_linear(layer: nn.Linear, gen: torch.Generator) -> None:
    fan_in = layer.weight.shape[1]
    uniform_fan_in_(layer.weight, fan_in, gen)
    if layer.bias is not None:
        uniform_fan_in_(layer.bias, fan_in, gen)


def init_conv(layer: nn.Conv2d, gen: torch.Generator) -> None:
    fan_in = layer.in_channels * layer.kernel_size[0] * layer.kernel_size[1]
    uniform_fan_in_(layer.weight, fan_in, gen)
    if layer.bias is not None:
        uniform_fan_in_(layer.bias, fan_in, gen)


def init_lstm_cell(cell: nn.LSTMCell, gen: torch.Generator) -> None:
    """Uniform fan-in input weights, per-gate orthogonal recurrent weights."""
    hidden = cell.hidden_size
    uniform_fan_in_(cell.weight_ih, cell.input_size, gen)
    with torch.no_grad():
        for g in range(4):
            block = torch.empty(hidden, hidden)
            orthogonal_(block, gen)
            cell.weight_hh[g * hidden:(g + 1) * hidden].copy_(block)
        cell.bias_ih.zero_()
        cell.bias_hh.zero_()


def init_batchnorm(layer: nn.modules.batchnorm._BatchNorm) -> None:
    with torch.no_grad():
        layer.weight.fill_(1.0)
        layer.bias.zero_()
        layer.reset_running_stats()


def state_hash(module: nn.Module, include_buffers: bool = True) -> str:
    """SHA-256 over all named parameters (and buffers), order-stable."""
    h = hashlib.sha256()
    items = sorted(module.state_dict().items())
    for name, tensor in items:
        if not include_buffers and name.endswith(("running_mean", "running_var",
                                                  "num_batches_tracked")):
            continue
        h.update(name.encode())
        h.update(tensor.detach().cpu().numpy().tobytes())
    return h.hexdigest()

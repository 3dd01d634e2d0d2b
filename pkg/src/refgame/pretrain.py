"""Self-supervised contrastive pretraining of the feature extractor.

Two independently augmented views of each image are pushed together and
away from every other view in the batch via the normalised-temperature
cross-entropy loss over cosine similarities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .augment import AugmentPlan, simclr_view
from .torchutil import derive_rng, derive_torch_generator, init_linear
from .vision import Extractor, extractor_checkpoint


@dataclass(frozen=True)
class ContrastiveConfig:
    """Projection head and training knobs for contrastive pretraining."""

    projection_hidden: int = 256
    projection_dim: int = 128
    temperature: float = 0.5
    batch_size: int = 128
    epochs: int = 20
    lr: float = 1e-3

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


class ProjectionHead(nn.Module):
    def __init__(self, input_dim: int, config: ContrastiveConfig,
                 gen: torch.Generator):
        super().__init__()
        self.fc1 = nn.Linear(input_dim, config.projection_hidden)
        self.fc2 = nn.Linear(config.projection_hidden, config.projection_dim)
        init_linear(self.fc1, gen)
        init_linear(self.fc2, gen)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(torch.relu(self.fc1(x)))


def contrastive_loss(embeddings: torch.Tensor,
                     temperature: float) -> torch.Tensor:
    """Normalised-temperature cross-entropy over cosine similarities.

    ``embeddings`` holds 2N rows: the first N are one view per image, the
    last N the matching second views, so rows i and i+N are positive pairs.
    Each of the 2N anchors contrasts its positive against the other 2N - 2
    rows.
    """
    if embeddings.ndim != 2:
        raise ValueError(f"expected [2N, dim], got {tuple(embeddings.shape)}")
    total = embeddings.shape[0]
    if total < 4 or total % 2 != 0:
        raise ValueError(
            f"need at least 2 view pairs (4 embeddings), got {total} rows")
    n = total // 2
    z = nn.functional.normalize(embeddings, dim=1)
    sim = (z @ z.T) / temperature
    sim.fill_diagonal_(float("-inf"))  # an anchor never contrasts with itself
    positive = torch.cat([torch.arange(n, 2 * n), torch.arange(0, n)])
    log_prob = sim - torch.logsumexp(sim, dim=1, keepdim=True)
    return -log_prob[torch.arange(total), positive].mean()


def pretrain_extractor(extractor: Extractor, dataset,
                       config: ContrastiveConfig, seed: int,
                       plan: AugmentPlan | None = None) -> dict:
    """Train the extractor on view pairs; returns the extractor checkpoint.

    The projection head only exists during pretraining. The extractor is
    updated in place regardless of its frozen flag (pretraining precedes the
    game), and its checkpoint is returned for ``build_extractor``.
    """
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    plan = plan or AugmentPlan(simclr_enabled=True)
    was_frozen = extractor.frozen
    extractor.set_frozen(False)
    gen = derive_torch_generator(seed, "contrastive-head")
    head = ProjectionHead(extractor.feature_dim, config, gen)
    optimizer = torch.optim.Adam(
        list(extractor.parameters()) + list(head.parameters()), lr=config.lr)
    n = len(dataset)
    batch = min(config.batch_size, n)
    if batch >= 2:
        for epoch in range(1, config.epochs + 1):
            extractor.train()
            head.train()
            rng = derive_rng(seed, "contrastive-epoch", epoch)
            order = rng.permutation(n)
            for start in range(0, n - batch + 1, batch):
                idx = order[start:start + batch]
                first = np.stack([simclr_view(dataset.images[i], plan, rng)
                                  for i in idx])
                second = np.stack([simclr_view(dataset.images[i], plan, rng)
                                   for i in idx])
                features = extractor(np.concatenate([first, second]))
                loss = contrastive_loss(head(features), config.temperature)
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
    extractor.set_frozen(was_frozen)
    return extractor_checkpoint(extractor)

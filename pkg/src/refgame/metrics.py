"""Communication-success and visual-semantics measures, plus the analytic
and Monte-Carlo baselines they are judged against.

All functions are pure; rankings are 1-based and ties in scores are assumed
to have been broken deterministically upstream (by candidate index).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class GameOutcome:
    """One round of the game, after ranking.

    ``ranking`` lists candidate indices by descending score; ``labels[i]`` is
    the class of candidate ``i`` (indexed by candidate, not by rank).
    """

    ranking: tuple[int, ...]
    labels: tuple[int, ...]
    target_index: int
    target_class: int
    message_length: int

    def __post_init__(self):
        n = len(self.ranking)
        if sorted(self.ranking) != list(range(n)):
            raise ValueError("ranking must be a permutation of candidate indices")
        if len(self.labels) != n:
            raise ValueError("one label per candidate required")
        if not 0 <= self.target_index < n:
            raise ValueError(f"target_index {self.target_index} outside [0, {n})")
        if self.labels[self.target_index] != self.target_class:
            raise ValueError("target_class does not match the target's label")

    def target_rank(self) -> int:
        return self.ranking.index(self.target_index) + 1


def rank_candidates(scores: Sequence[float]) -> tuple[int, ...]:
    """Candidate indices sorted by descending score, ties toward lower index."""
    scores = np.asarray(scores, dtype=np.float64)
    return tuple(int(i) for i in np.argsort(-scores, kind="stable"))


def topk_comm_rate(outcomes: Iterable[GameOutcome], k: int) -> float:
    """Fraction of games whose target lands within the first k ranks."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    outcomes = list(outcomes)
    hits = sum(1 for o in outcomes if o.target_rank() <= k)
    return hits / len(outcomes)


def count_target_class_topk(outcome: GameOutcome, k: int = 5) -> int:
    """How many of the first k ranked candidates share the target's class.

    The target image itself counts when it is ranked within the top k.
    """
    return sum(1 for idx in outcome.ranking[:k]
               if outcome.labels[idx] == outcome.target_class)


def mean_rank_target_class(outcome: GameOutcome) -> float:
    """Mean 1-based rank of all candidates sharing the target's class."""
    ranks = [pos + 1 for pos, idx in enumerate(outcome.ranking)
             if outcome.labels[idx] == outcome.target_class]
    return float(np.mean(ranks))


def message_length_stats(outcomes: Iterable[GameOutcome]) -> tuple[float, float]:
    """Sample mean and population (ddof=0) standard deviation of lengths."""
    lengths = np.array([o.message_length for o in outcomes], dtype=np.float64)
    return float(lengths.mean()), float(lengths.std(ddof=0))


@dataclass(frozen=True)
class MetricsReport:
    """Aggregate of all game metrics, with across-run standard deviations.

    Values are means over evaluation runs; ``*_std`` fields are population
    standard deviations across runs (0 for a single run). The message-length
    std is the within-run spread across games, averaged over runs.
    """

    comm_rate_top1: float
    comm_rate_top5: float
    target_class_in_top5: float
    target_class_mean_rank: float
    message_length_mean: float
    message_length_std: float
    rotation_accuracy: float | None
    comm_rate_top1_std: float
    comm_rate_top5_std: float
    target_class_in_top5_std: float
    target_class_mean_rank_std: float
    n_runs: int
    n_games: int

    def __post_init__(self):
        for name in ("comm_rate_top1", "comm_rate_top5"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")

    def to_dict(self) -> dict:
        return {
            "comm_rate_top1": self.comm_rate_top1,
            "comm_rate_top5": self.comm_rate_top5,
            "target_class_in_top5": self.target_class_in_top5,
            "target_class_mean_rank": self.target_class_mean_rank,
            "message_length_mean": self.message_length_mean,
            "message_length_std": self.message_length_std,
            "rotation_accuracy": self.rotation_accuracy,
            "comm_rate_top1_std": self.comm_rate_top1_std,
            "comm_rate_top5_std": self.comm_rate_top5_std,
            "target_class_in_top5_std": self.target_class_in_top5_std,
            "target_class_mean_rank_std": self.target_class_mean_rank_std,
            "n_runs": self.n_runs,
            "n_games": self.n_games,
        }


def summarize_outcomes(outcomes: Sequence[GameOutcome],
                       rotation_accuracy: float | None = None) -> dict:
    """Per-run metric values from a list of outcomes."""
    if not outcomes:
        raise ValueError("no outcomes to summarize")
    length_mean, length_std = message_length_stats(outcomes)
    return {
        "comm_rate_top1": topk_comm_rate(outcomes, 1),
        "comm_rate_top5": topk_comm_rate(outcomes, 5),
        "target_class_in_top5": float(np.mean(
            [count_target_class_topk(o, 5) for o in outcomes])),
        "target_class_mean_rank": float(np.mean(
            [mean_rank_target_class(o) for o in outcomes])),
        "message_length_mean": length_mean,
        "message_length_std": length_std,
        "rotation_accuracy": rotation_accuracy,
        "n_games": len(outcomes),
    }


def aggregate_runs(runs: Sequence[dict]) -> MetricsReport:
    """Combine per-run summaries into a MetricsReport."""
    if not runs:
        raise ValueError("no runs to aggregate")

    def col(name):
        return np.array([r[name] for r in runs], dtype=np.float64)

    rot = [r["rotation_accuracy"] for r in runs]
    rotation = float(np.mean(rot)) if all(a is not None for a in rot) else None
    return MetricsReport(
        comm_rate_top1=float(col("comm_rate_top1").mean()),
        comm_rate_top5=float(col("comm_rate_top5").mean()),
        target_class_in_top5=float(col("target_class_in_top5").mean()),
        target_class_mean_rank=float(col("target_class_mean_rank").mean()),
        message_length_mean=float(col("message_length_mean").mean()),
        message_length_std=float(col("message_length_std").mean()),
        rotation_accuracy=rotation,
        comm_rate_top1_std=float(col("comm_rate_top1").std(ddof=0)),
        comm_rate_top5_std=float(col("comm_rate_top5").std(ddof=0)),
        target_class_in_top5_std=float(col("target_class_in_top5").std(ddof=0)),
        target_class_mean_rank_std=float(col("target_class_mean_rank").std(ddof=0)),
        n_runs=len(runs),
        n_games=int(sum(r["n_games"] for r in runs)),
    )


@dataclass(frozen=True)
class BaselineReport:
    """Reference values for a game with ``batch_size`` candidates.

    ``expected_same_class`` is the expected number of candidates sharing the
    target's class (target included). The class-only rates use the
    ratio-of-expectations approximation k / m. The hashing values describe a
    protocol that always ranks the target first and places everything else
    uniformly at random; note the hashing top-5 class count comes out near
    1.4 under this model, higher than the idealised value of 1.0 sometimes
    quoted for perfect hashing.
    """

    batch_size: int
    n_classes: int
    k: int
    expected_same_class: float
    class_only_top1: float
    class_only_topk: float
    ideal_mean_rank: float
    hashing_mean_rank: float
    hashing_topk_count: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def analytic_baselines(batch_size: int, n_classes: int, k: int = 5,
                       mc_games: int = 100_000, seed: int = 0) -> BaselineReport:
    """Analytic class-only baselines plus Monte-Carlo hashing baselines.

    Candidates are modelled as drawn uniformly over classes; the target's
    class matches one candidate by construction (itself).
    """
    if batch_size < 2:
        raise ValueError(f"batch_size must be >= 2, got {batch_size}")
    if n_classes < 2:
        raise ValueError(f"n_classes must be >= 2, got {n_classes}")
    m = 1.0 + (batch_size - 1) / n_classes
    hashing_rank, hashing_count = _simulate_hashing(
        batch_size, n_classes, k, mc_games, seed)
    return BaselineReport(
        batch_size=batch_size,
        n_classes=n_classes,
        k=k,
        expected_same_class=m,
        class_only_top1=1.0 / m,
        class_only_topk=k / m,
        ideal_mean_rank=(m + 1.0) / 2.0,
        hashing_mean_rank=hashing_rank,
        hashing_topk_count=hashing_count,
    )


def _simulate_hashing(batch_size: int, n_classes: int, k: int,
                      n_games: int, seed: int,
                      chunk: int = 20_000) -> tuple[float, float]:
    """Target at rank 1, distractors ranked uniformly at random."""
    rng = np.random.default_rng(seed)
    mean_ranks = np.empty(n_games, dtype=np.float64)
    topk_counts = np.empty(n_games, dtype=np.float64)
    done = 0
    while done < n_games:
        g = min(chunk, n_games - done)
        same = rng.random((g, batch_size - 1)) < 1.0 / n_classes
        # Ranks 2..B assigned to distractors by a uniform random permutation.
        ranks = np.argsort(rng.random((g, batch_size - 1)), axis=1) + 2
        n_same = same.sum(axis=1)
        rank_sum = np.where(same, ranks, 0).sum(axis=1)
        mean_ranks[done:done + g] = (1.0 + rank_sum) / (1.0 + n_same)
        topk_counts[done:done + g] = 1.0 + np.where(
            same & (ranks <= k), 1.0, 0.0).sum(axis=1)
        done += g
    return float(mean_ranks.mean()), float(topk_counts.mean())

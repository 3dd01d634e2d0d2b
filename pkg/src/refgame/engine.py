"""Game orchestration: batches into games, variant wiring, training and
evaluation loops, and the end-to-end experiment runner.

Every batch of B images yields B games, each image serving once as the
target. The Sender describes its (variant-specific) view of the target; the
Receiver ranks its own views of all B candidates by inner-product score.
"""

from __future__ import annotations

import json
import time
from contextlib import nullcontext
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .agents import Receiver, Sender, hinge_loss_all_targets
from .augment import (add_gaussian_noise, baseline_augment, rotate_quarter,
                      sample_rotation, simclr_view)
from .config import ExperimentConfig, config_echo, parse_config
from .data import DatasetSplit, load_cifar10, stratified_subsample
from .errors import ConfigError, NonFiniteLossError
from .logs import EpochRow, RunLog, write_metrics_log
from .metrics import (GameOutcome, MetricsReport, aggregate_runs,
                      rank_candidates, summarize_outcomes)
from .pretrain import pretrain_extractor
from .tasks import RotationHead, combined_loss, rotation_cross_entropy
from .torchutil import (derive_rng, derive_seed, derive_torch_generator,
                        state_hash)
from .vision import Extractor, build_extractor, train_supervised_proxy


@dataclass
class GameModels:
    """The trainable pieces of one experiment (extractor shared by agents)."""

    extractor: Extractor
    sender: Sender
    receiver: Receiver
    rotation_head: RotationHead | None = None

    def set_train_mode(self, flag: bool) -> None:
        for m in (self.extractor, self.sender, self.receiver,
                  self.rotation_head):
            if isinstance(m, nn.Module):
                m.train(flag)

    def modules(self) -> list[nn.Module]:
        mods = [self.extractor, self.sender, self.receiver]
        if self.rotation_head is not None:
            mods.append(self.rotation_head)
        return [m for m in mods if isinstance(m, nn.Module)]

    def parameters(self):
        for m in self.modules():
            yield from m.parameters()


def build_models(config: ExperimentConfig, pixel_stats=None,
                 weights_source=None) -> GameModels:
    mean, std = pixel_stats if pixel_stats is not None else (None, None)
    kwargs = {}
    if mean is not None:
        kwargs = {"pixel_mean": mean, "pixel_std": std}
    extractor = build_extractor(config.extractor_config, config.seed,
                                weights_source=weights_source,
                                unfreeze_epoch=config.unfreeze_epoch, **kwargs)
    gen = derive_torch_generator(config.seed, "agents-init")
    sender = Sender(config.agent_dims, config.channel_config, gen)
    receiver = Receiver(config.agent_dims, config.channel_config, gen)
    head = None
    if config.has_rotation_head:
        head = RotationHead(config.hidden_dim, gen)
    return GameModels(extractor, sender, receiver, head)


@dataclass
class ViewBatch:
    """Per-variant pixel views of one batch."""

    sender_views: np.ndarray
    receiver_views: np.ndarray
    rotation_labels: np.ndarray | None


def build_views(images: np.ndarray, config: ExperimentConfig,
                rng: np.random.Generator, train_mode: bool) -> ViewBatch:
    """Construct the Sender's and Receiver's pixel views of a batch.

    Without independent views the two agents share one (possibly jittered)
    copy per image, and the Sender-only transforms are stacked on top of the
    Sender's copy: quarter rotation first (its label is the auxiliary-task
    target), then additive noise. The baseline jitter is a training-time
    regulariser and is disabled at evaluation; the variant-defining
    transforms stay active in both modes.
    """
    plan = config.augment_plan
    if plan.simclr_enabled:
        receiver_views = [simclr_view(img, plan, rng) for img in images]
        sender_views = [simclr_view(img, plan, rng) for img in images]
    else:
        if train_mode:
            shared = [baseline_augment(img, plan, rng) for img in images]
        else:
            shared = [img.copy() for img in images]
        receiver_views = shared
        sender_views = [v.copy() for v in shared]
    rotation_labels = None
    if plan.rotation_enabled:
        labels = [sample_rotation(rng) for _ in range(len(images))]
        sender_views = [rotate_quarter(v, k)
                        for v, k in zip(sender_views, labels)]
        rotation_labels = np.array(labels, dtype=np.int64)
    if plan.noise_enabled:
        sender_views = [add_gaussian_noise(v, rng, plan.noise_variance)
                        for v in sender_views]
    return ViewBatch(np.stack(sender_views), np.stack(receiver_views),
                     rotation_labels)


@dataclass
class RoundRecord:
    """One game: its ranked outcome and the losses attributed to it."""

    outcome: GameOutcome
    game_loss: float
    rotation_loss: float | None = None
    rotation_label: int | None = None
    rotation_pred: int | None = None


@dataclass
class BatchResult:
    records: list[RoundRecord]
    game_loss: torch.Tensor
    rotation_loss: torch.Tensor | None
    total_loss: torch.Tensor


def outcomes_from_scores(scores: np.ndarray, labels: np.ndarray,
                         lengths: np.ndarray) -> list[GameOutcome]:
    """Ranked outcomes for an all-targets score matrix (game b targets b)."""
    label_tuple = tuple(int(c) for c in labels)
    outcomes = []
    for b in range(scores.shape[0]):
        outcomes.append(GameOutcome(
            ranking=rank_candidates(scores[b]),
            labels=label_tuple,
            target_index=b,
            target_class=label_tuple[b],
            message_length=int(lengths[b]),
        ))
    return outcomes


def _per_game_hinge(scores: np.ndarray) -> np.ndarray:
    target = np.diagonal(scores)[:, None]
    margins = np.maximum(0.0, 1.0 - target + scores)
    np.fill_diagonal(margins, 0.0)
    return margins.sum(axis=1)


def play_batch(models: GameModels, images: np.ndarray, labels: np.ndarray,
               config: ExperimentConfig, torch_rng: torch.Generator,
               np_rng: np.random.Generator, train_mode: bool) -> BatchResult:
    """Play the B all-targets games of one batch and aggregate losses."""
    if len(images) != config.batch_size:
        raise ValueError(
            f"expected a full batch of {config.batch_size}, got {len(images)}")
    models.set_train_mode(train_mode)
    views = build_views(images, config, np_rng, train_mode)
    grad_ctx = nullcontext() if train_mode else torch.no_grad()
    with grad_ctx:
        stacked = np.concatenate([views.sender_views, views.receiver_views])
        features = models.extractor(stacked)
        sender_feats = features[:config.batch_size]
        receiver_feats = features[config.batch_size:]
        sender_hidden = models.sender.encode(sender_feats)
        message = models.sender.generate(sender_hidden, torch_rng)
        receiver_hidden = models.receiver.encode_message(message)
        scores = models.receiver.project(receiver_hidden) @ receiver_feats.T
        game_loss = hinge_loss_all_targets(scores)
        rotation_loss = None
        rotation_probs = None
        if models.rotation_head is not None and views.rotation_labels is not None:
            tap = (sender_hidden if config.resolved_rotation_tap == "sender"
                   else receiver_hidden)
            rotation_probs = models.rotation_head(tap)
            rotation_loss = rotation_cross_entropy(
                rotation_probs, torch.from_numpy(views.rotation_labels))
            total_loss = combined_loss(game_loss, rotation_loss,
                                       config.loss_weights)
        else:
            total_loss = config.loss_weights.lambda_game * game_loss

    score_array = scores.detach().numpy()
    lengths = message.lengths.numpy()
    outcomes = outcomes_from_scores(score_array, labels, lengths)
    per_game = _per_game_hinge(score_array)
    rotation_loss_value = (float(rotation_loss.detach())
                           if rotation_loss is not None else None)
    rotation_preds = (rotation_probs.detach().argmax(dim=1).numpy()
                      if rotation_probs is not None else None)
    records = []
    for b, outcome in enumerate(outcomes):
        records.append(RoundRecord(
            outcome=outcome,
            game_loss=float(per_game[b]),
            rotation_loss=rotation_loss_value,
            rotation_label=(int(views.rotation_labels[b])
                            if views.rotation_labels is not None else None),
            rotation_pred=(int(rotation_preds[b])
                           if rotation_preds is not None else None),
        ))
    return BatchResult(records, game_loss, rotation_loss, total_loss)


@dataclass
class TrainState:
    models: GameModels
    optimizer: torch.optim.Optimizer
    torch_rng: torch.Generator
    epoch: int = 0


@dataclass
class EpochSummary:
    epoch: int
    train_loss: float
    game_loss: float
    rotation_loss: float | None
    n_batches: int


def init_train_state(models: GameModels, config: ExperimentConfig) -> TrainState:
    optimizer = torch.optim.Adam(models.parameters(), lr=config.lr)
    return TrainState(models=models, optimizer=optimizer,
                      torch_rng=derive_torch_generator(config.seed, "channel"))


def train_epoch(state: TrainState, split: DatasetSplit,
                config: ExperimentConfig) -> EpochSummary:
    """One shuffled pass over the training split (epochs are 1-based).

    Tail batches smaller than batch_size are dropped. Raises
    NonFiniteLossError with diagnostics when a loss leaves the reals.
    """
    state.epoch += 1
    epoch = state.epoch
    state.models.extractor.apply_freeze_schedule(epoch)
    state.models.set_train_mode(True)
    rng = derive_rng(config.seed, "train-epoch", epoch)
    order = rng.permutation(len(split))
    b = config.batch_size
    totals, games, rots = [], [], []
    for i, start in enumerate(range(0, len(split) - b + 1, b)):
        idx = order[start:start + b]
        result = play_batch(state.models, split.images[idx], split.labels[idx],
                            config, state.torch_rng, rng, train_mode=True)
        if not torch.isfinite(result.total_loss):
            raise NonFiniteLossError(
                f"non-finite loss at epoch {epoch}, batch {i}",
                diagnostics={
                    "epoch": epoch, "batch": i,
                    "game_loss": float(result.game_loss.detach()),
                    "rotation_loss": (float(result.rotation_loss.detach())
                                      if result.rotation_loss is not None
                                      else None),
                })
        state.optimizer.zero_grad()
        result.total_loss.backward()
        state.optimizer.step()
        totals.append(float(result.total_loss.detach()))
        games.append(float(result.game_loss.detach()))
        if result.rotation_loss is not None:
            rots.append(float(result.rotation_loss.detach()))
    if not totals:
        raise ValueError("training split yields no full batch")
    return EpochSummary(
        epoch=epoch,
        train_loss=float(np.mean(totals)),
        game_loss=float(np.mean(games)),
        rotation_loss=float(np.mean(rots)) if rots else None,
        n_batches=len(totals),
    )


def _rotation_accuracy(records: list[RoundRecord]) -> float | None:
    pairs = [(r.rotation_label, r.rotation_pred) for r in records
             if r.rotation_label is not None and r.rotation_pred is not None]
    if not pairs:
        return None
    return float(np.mean([lab == pred for lab, pred in pairs]))


def evaluate(models: GameModels, split: DatasetSplit,
             config: ExperimentConfig, n_runs: int,
             seed: int) -> MetricsReport:
    """Play eval games over n_runs distinct shuffles of the split.

    Greedy decoding throughout; every image serves as target once per batch.
    Identical (models, split, seed) triples yield identical reports.
    """
    models.set_train_mode(False)
    b = config.batch_size
    runs = []
    for r in range(n_runs):
        rng = derive_rng(seed, "eval-run", r)
        torch_rng = derive_torch_generator(seed, "eval-run-torch", r)
        order = rng.permutation(len(split))
        records: list[RoundRecord] = []
        for start in range(0, len(split) - b + 1, b):
            idx = order[start:start + b]
            result = play_batch(models, split.images[idx], split.labels[idx],
                                config, torch_rng, rng, train_mode=False)
            records.extend(result.records)
        outcomes = [rec.outcome for rec in records]
        runs.append(summarize_outcomes(outcomes, _rotation_accuracy(records)))
    return aggregate_runs(runs)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    runlog: RunLog
    report: MetricsReport
    proxy_accuracy: float | None = None
    csv_path: Path | None = None
    summary_path: Path | None = None
    checkpoint_path: Path | None = None


def _prepare_dataset(config: ExperimentConfig, data_dir, dataset):
    if dataset is not None:
        train, val = dataset
        return train, val
    if data_dir is None:
        raise ConfigError("either a dataset or a data_dir must be provided")
    train_full, test_full = load_cifar10(data_dir)
    train = stratified_subsample(train_full, config.train_size,
                                 derive_seed(config.seed, "subsample-train"))
    val = stratified_subsample(test_full, config.val_size,
                               derive_seed(config.seed, "subsample-val"))
    return train, val


def _pretrained_weights(config: ExperimentConfig, train: DatasetSplit,
                        val: DatasetSplit, pixel_stats) -> tuple[dict | None, float | None]:
    if config.regime == "pretrained_frozen":
        checkpoint, accuracy = train_supervised_proxy(
            config.extractor_config, train, val, config.seed,
            epochs=config.proxy_epochs)
        return checkpoint, accuracy
    if config.regime in ("ss_pretrained_frozen", "ss_pretrained_finetuned"):
        gen = derive_torch_generator(config.seed, "extractor-init")
        mean, std = pixel_stats
        seed_extractor = Extractor(
            replace(config.extractor_config, regime="learned"), gen, mean, std)
        checkpoint = pretrain_extractor(seed_extractor, train,
                                        config.contrastive_config, config.seed)
        checkpoint["regime"] = config.regime
        return checkpoint, None
    return None, None


def run_experiment(config: ExperimentConfig, out_dir=None, data_dir=None,
                   dataset: tuple[DatasetSplit, DatasetSplit] | None = None,
                   ) -> ExperimentResult:
    """Pretrain (as the regime requires), train, evaluate, write artifacts.

    ``dataset`` injects pre-built (train, val) splits; otherwise CIFAR-10 is
    loaded from ``data_dir`` and subsampled to the configured sizes. The
    whole pipeline is deterministic in config.seed.
    """
    train, val = _prepare_dataset(config, data_dir, dataset)
    pixel_stats = train.channel_stats()
    weights, proxy_accuracy = _pretrained_weights(config, train, val,
                                                  pixel_stats)
    models = build_models(config, pixel_stats, weights)
    state = init_train_state(models, config)
    rows = []
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        summary = train_epoch(state, train, config)
        report = evaluate(models, val, config, config.epoch_eval_runs,
                          derive_seed(config.seed, "epoch-eval", epoch))
        rows.append(EpochRow(
            epoch=epoch,
            train_loss=summary.train_loss,
            comm_rate_top1=report.comm_rate_top1,
            comm_rate_top5=report.comm_rate_top5,
            target_class_in_top5=report.target_class_in_top5,
            target_class_mean_rank=report.target_class_mean_rank,
            message_length_mean=report.message_length_mean,
            message_length_std=report.message_length_std,
            rotation_accuracy=report.rotation_accuracy,
            wall_time=time.perf_counter() - t0,
            seed=config.seed,
        ))
    runlog = RunLog(rows=rows, seed=config.seed)
    final_report = evaluate(models, val, config, config.eval_runs,
                            derive_seed(config.seed, "final-eval"))
    result = ExperimentResult(config=config, runlog=runlog,
                              report=final_report,
                              proxy_accuracy=proxy_accuracy)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path, summary_path = write_metrics_log(
            runlog, out_dir / "metrics.csv", final_report, config)
        checkpoint_path = out_dir / "checkpoint.pt"
        save_checkpoint(models, config, checkpoint_path)
        result.csv_path = csv_path
        result.summary_path = summary_path
        result.checkpoint_path = checkpoint_path
    return result


def save_checkpoint(models: GameModels, config: ExperimentConfig,
                    path) -> None:
    """Named parameter arrays plus the full config and seed, torch-packed."""
    payload = {
        "kind": "game",
        "config": config_echo(config),
        "seed": config.seed,
        "params": {
            "extractor": models.extractor.state_dict(),
            "sender": models.sender.state_dict(),
            "receiver": models.receiver.state_dict(),
        },
    }
    if models.rotation_head is not None:
        payload["params"]["rotation_head"] = models.rotation_head.state_dict()
    torch.save(payload, path)


def load_checkpoint(path) -> tuple[GameModels, ExperimentConfig]:
    payload = torch.load(path, weights_only=True)
    if payload.get("kind") != "game":
        raise ConfigError(f"{path} is not a game checkpoint")
    config = parse_config(json.dumps(payload["config"]))
    gen = derive_torch_generator(config.seed, "agents-init")
    extractor = Extractor(config.extractor_config,
                          derive_torch_generator(config.seed, "extractor-init"),
                          unfreeze_epoch=config.unfreeze_epoch)
    extractor.load_state_dict(payload["params"]["extractor"])
    extractor.set_frozen(extractor.frozen)
    sender = Sender(config.agent_dims, config.channel_config, gen)
    sender.load_state_dict(payload["params"]["sender"])
    receiver = Receiver(config.agent_dims, config.channel_config, gen)
    receiver.load_state_dict(payload["params"]["receiver"])
    head = None
    if "rotation_head" in payload["params"]:
        head = RotationHead(config.hidden_dim, gen)
        head.load_state_dict(payload["params"]["rotation_head"])
    return GameModels(extractor, sender, receiver, head), config


def extractor_param_hash(models: GameModels) -> str:
    """Hash of the extractor's parameters and statistics buffers."""
    return state_hash(models.extractor)

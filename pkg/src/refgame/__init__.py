"""Referential signalling games with discrete emergent messages.

Sender/receiver agents communicate through a straight-through relaxed
categorical channel while playing an image identification game; the package
covers the game variants (feature-extractor weight regimes, sender-side
augmentations, rotation side-tasks, contrastive pretraining) and the
visual-semantics metric suite.
"""

from .agents import AgentDims, Receiver, Sender, game_hinge_loss
from .augment import (AugmentPlan, add_gaussian_noise, baseline_augment,
                      rotate_quarter, sample_rotation, simclr_view)
from .channel import (ChannelConfig, Message, MessageBatch, effective_length,
                      gumbel_softmax, sample_gumbel, straight_through_onehot)
from .config import VARIANTS, ExperimentConfig, config_echo, parse_config
from .data import DatasetSplit, load_cifar10, stratified_subsample
from .engine import (GameModels, build_models, evaluate, load_checkpoint,
                     play_batch, run_experiment, save_checkpoint, train_epoch)
from .errors import ConfigError, DataFormatError, NonFiniteLossError
from .logs import RunLog, emit_plot_data, write_metrics_log
from .metrics import (BaselineReport, GameOutcome, MetricsReport,
                      analytic_baselines, count_target_class_topk,
                      mean_rank_target_class, message_length_stats,
                      topk_comm_rate)
from .pretrain import ContrastiveConfig, contrastive_loss, pretrain_extractor
from .tasks import LossWeights, RotationHead, combined_loss, cross_entropy_loss
from .vision import (REGIMES, Extractor, ExtractorConfig, build_extractor,
                     extract_features, train_supervised_proxy)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"

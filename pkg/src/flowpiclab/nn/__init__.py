from .backend import BACKEND
from .losses import cross_entropy, info_nce, softmax
from .network import (
    Checkpoint,
    Network,
    NetworkConfig,
    build_network,
    checkpoint_from,
    load_checkpoint,
    save_checkpoint,
)
from .training import (
    EarlyStopper,
    TrainConfig,
    TrainingDiverged,
    evaluate,
    finetune,
    pretrain_simclr,
    train_supervised,
)

__all__ = [
    "BACKEND",
    "Checkpoint",
    "EarlyStopper",
    "Network",
    "NetworkConfig",
    "TrainConfig",
    "TrainingDiverged",
    "build_network",
    "checkpoint_from",
    "cross_entropy",
    "evaluate",
    "finetune",
    "info_nce",
    "load_checkpoint",
    "pretrain_simclr",
    "save_checkpoint",
    "softmax",
    "train_supervised",
]

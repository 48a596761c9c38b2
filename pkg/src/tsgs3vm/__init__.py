"""Semi-supervised kernel SVM trained with triply stochastic functional gradients."""

__version__ = "0.1.0"

from .data import SemiDataset, kfold_unlabeled, make_semi_split, parse_libsvm  # noqa: E402
from .loss import UnlabeledLoss, hinge, loss_bounds, unlabeled  # noqa: E402
from .model import Model, load, predict_label, predict_score, predict_scores, save  # noqa: E402
from .rf import KernelSpec, approx_kernel, exact_rbf, feature_vector, spawn_feature_block  # noqa: E402
from .trainer import Constant, TheoremRate, TrainConfig, step_size, train, tsg_step  # noqa: E402

__all__ = [
    "Constant", "KernelSpec", "Model", "SemiDataset", "TheoremRate", "TrainConfig", "UnlabeledLoss",
    "approx_kernel", "exact_rbf", "feature_vector", "hinge", "kfold_unlabeled", "load", "loss_bounds",
    "make_semi_split", "parse_libsvm", "predict_label", "predict_score", "predict_scores", "save",
    "spawn_feature_block", "step_size", "train", "tsg_step", "unlabeled",
]

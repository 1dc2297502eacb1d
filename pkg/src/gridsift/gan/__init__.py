"""Per-feature adversarial anomaly detectors on sliding windows."""

from gridsift.gan.nets import LSTM, Adam, Dense, Discriminator, Generator, sigmoid, softplus
from gridsift.gan.train import (
    TrainedGan,
    TrainingDivergedError,
    d_loss_and_grads,
    fit_score_pdf,
    g_loss_and_grads,
    score_windows,
    train_gan,
    window_flags,
)
from gridsift.gan.io import ModelFormatError, ModelVersionError, load_gan, save_gan

__all__ = [
    "LSTM", "Adam", "Dense", "Discriminator", "Generator",
    "sigmoid", "softplus",
    "TrainedGan", "TrainingDivergedError",
    "d_loss_and_grads", "g_loss_and_grads",
    "fit_score_pdf", "score_windows", "train_gan", "window_flags",
    "ModelFormatError", "ModelVersionError", "load_gan", "save_gan",
]

"""Adversarial training and scoring for one feature channel.

The discriminator D maximizes

    mean log D(x) + mean log(1 - D(G(z)))

while the generator minimizes mean log(1 - D(G(z))).  At the saddle point
D(x) = p_data / (p_data + p_g) = 1/2 everywhere, so scores of normal
windows concentrate around 0.5.  Losses are evaluated through logits with
softplus, which equals the log form exactly but cannot overflow; reported
scores are clamped into (eps_clip, 1 - eps_clip).

Training mode "saturating" uses the literal generator objective above;
the default "non_saturating" minimizes -mean log D(G(z)) instead, which
has the same fixed points but keeps gradients alive early on.

After training, scores over all training windows are summarized by a
normal fit (mu, sigma); a window is flagged when its score falls outside
the open interval (mu - z_p sigma, mu + z_p sigma).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from gridsift.config import DetectorConfig
from gridsift.gan.nets import Adam, Discriminator, Generator, sigmoid, softplus

log = logging.getLogger(__name__)

SCORE_BATCH = 4096


class TrainingDivergedError(RuntimeError):
    """Raised when a loss or parameter becomes non-finite during training."""

    def __init__(self, feature: str, epoch: int, detail: str = ""):
        super().__init__(
            f"training diverged for feature {feature!r} at epoch {epoch}"
            + (f": {detail}" if detail else ""))
        self.feature = feature
        self.epoch = epoch


@dataclass
class TrainedGan:
    """One feature channel's detector: both networks plus the score model."""

    feature: str
    feature_index: int
    gen: Generator
    disc: Discriminator
    mu: float = 0.5
    sigma: float = 1e-12
    config: DetectorConfig = field(default_factory=DetectorConfig)
    seed: int = 0
    curves: dict = field(default_factory=dict)

    def score(self, windows: np.ndarray) -> np.ndarray:
        return score_windows(self.disc, windows, self.config.eps_clip)

    def flags(self, scores: np.ndarray) -> np.ndarray:
        return window_flags(scores, self.mu, self.sigma, self.config.z_p)


def d_objective_and_grads(disc: Discriminator, x_real: np.ndarray, x_fake: np.ndarray):
    """Value of the discriminator objective and its ascent gradients.

    Returns (value, grads) where grads point in the direction that
    *minimizes* -value, ready for a descent optimizer.  Real and fake
    batches run through the network together; the LSTM has no cross-batch
    coupling so the result matches two separate passes.
    """
    n_r = len(x_real)
    n_f = len(x_fake)
    a, cache = disc.forward(np.concatenate((x_real, x_fake)))
    a_r = a[:n_r]
    a_f = a[n_r:]
    value = float(np.mean(-softplus(-a_r)) + np.mean(-softplus(a_f)))
    # d(-value)/da: real term sigmoid(a)-1, fake term sigmoid(a)
    da = np.concatenate(((sigmoid(a_r) - 1.0) / n_r, sigmoid(a_f) / n_f))
    _, grads = disc.backward(da, cache)
    return value, grads


def d_loss_and_grads(disc: Discriminator, x_real: np.ndarray, x_fake: np.ndarray):
    """Descent form: loss = -objective, with matching gradients."""
    value, grads = d_objective_and_grads(disc, x_real, x_fake)
    return -value, grads


def g_loss_and_grads(gen: Generator, disc: Discriminator, z: np.ndarray,
                     mode: str = "non_saturating"):
    """Generator loss and gradients through the frozen discriminator.

    Returns (literal_value, loss, grads): literal_value is the
    mean log(1 - D(G(z))) term regardless of mode, loss is the quantity
    actually descended.
    """
    y, g_cache = gen.forward(z)
    return _g_loss_from_output(gen, disc, y, g_cache, mode)


def _g_loss_from_output(gen: Generator, disc: Discriminator, y: np.ndarray,
                        g_cache: dict, mode: str):
    """Generator loss/grads given an already-computed forward pass."""
    a, d_cache = disc.forward(y)
    n = len(a)
    literal = float(np.mean(-softplus(a)))
    if mode == "saturating":
        loss = literal
        da = -sigmoid(a) / n
    elif mode == "non_saturating":
        loss = float(np.mean(softplus(-a)))
        da = (sigmoid(a) - 1.0) / n
    else:
        raise ValueError(f"unknown generator loss mode {mode!r}")
    dX, _ = disc.backward(da, d_cache)
    grads = gen.backward(dX, g_cache)
    return literal, loss, grads


def subsample_windows(windows: np.ndarray, max_windows: int) -> np.ndarray:
    """Evenly spaced deterministic subsample used for gradient updates."""
    n = len(windows)
    if n <= max_windows:
        return windows
    idx = np.unique(np.linspace(0, n - 1, max_windows).astype(np.int64))
    return windows[idx]


def train_gan(windows: np.ndarray, cfg: DetectorConfig, seed: int,
              feature: str = "", feature_index: int = 0) -> TrainedGan:
    """Train one generator/discriminator pair on (n, window_len) windows.

    Updates alternate one discriminator step with one generator step per
    batch.  Loss curves (per-epoch means) are recorded on the model; a
    non-finite loss or parameter aborts with TrainingDivergedError.
    """
    if windows.ndim != 2 or len(windows) == 0:
        raise ValueError(f"expected (n, window_len) training windows, got {windows.shape}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    gen = Generator(cfg.noise_dim, cfg.hidden, rng)
    disc = Discriminator(cfg.hidden, rng)
    adam_g = Adam(cfg.lr, beta1=cfg.beta1)
    adam_d = Adam(cfg.lr, beta1=cfg.beta1)

    train = subsample_windows(np.asarray(windows, dtype=np.float64), cfg.max_train_windows)
    n = len(train)
    T = train.shape[1]
    bs = min(cfg.batch_size, n)
    d_curve = np.empty(cfg.epochs)
    g_curve = np.empty(cfg.epochs)

    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        d_vals = []
        g_vals = []
        for lo in range(0, n, bs):
            idx = order[lo:lo + bs]
            x_real = train[idx]
            b = len(idx)

            z = rng.standard_normal((b, T, cfg.noise_dim))
            x_fake, _ = gen.forward(z, need_cache=False)
            d_val, d_grads = d_objective_and_grads(disc, x_real, x_fake)
            adam_d.step(disc.params(), d_grads)

            # fresh noise for the generator step: updating G on the exact
            # batch D just rejected couples the two updates and oscillates
            z2 = rng.standard_normal((b, T, cfg.noise_dim))
            g_literal, _, g_grads = g_loss_and_grads(gen, disc, z2, cfg.loss_mode)
            adam_g.step(gen.params(), g_grads)

            d_vals.append(d_val)
            g_vals.append(g_literal)
        d_curve[epoch] = float(np.mean(d_vals))
        g_curve[epoch] = float(np.mean(g_vals))
        if not (np.isfinite(d_curve[epoch]) and np.isfinite(g_curve[epoch])):
            raise TrainingDivergedError(feature, epoch, "non-finite loss")
        if not all(np.isfinite(p).all() for p in disc.params().values()):
            raise TrainingDivergedError(feature, epoch, "non-finite discriminator weights")
        if not all(np.isfinite(p).all() for p in gen.params().values()):
            raise TrainingDivergedError(feature, epoch, "non-finite generator weights")

    model = TrainedGan(
        feature=feature, feature_index=feature_index, gen=gen, disc=disc,
        config=cfg, seed=seed,
        curves={"d_objective": d_curve.tolist(), "g_objective": g_curve.tolist()},
    )
    return model


def score_windows(disc: Discriminator, windows: np.ndarray, eps_clip: float,
                  batch: int = SCORE_BATCH) -> np.ndarray:
    """Discriminator scores in (eps_clip, 1 - eps_clip) for each window."""
    windows = np.asarray(windows, dtype=np.float64)
    out = np.empty(len(windows))
    for lo in range(0, len(windows), batch):
        logits, _ = disc.forward(windows[lo:lo + batch], need_cache=False)
        out[lo:lo + batch] = sigmoid(logits)
    return np.clip(out, eps_clip, 1.0 - eps_clip)


def fit_score_pdf(model: TrainedGan, windows: np.ndarray) -> TrainedGan:
    """Fit the normal score summary (mu, sigma) over all training windows.

    Sigma uses the population convention and is floored so the detection
    band never collapses to an empty interval.
    """
    scores = score_windows(model.disc, windows, model.config.eps_clip)
    model.mu = float(scores.mean())
    model.sigma = float(max(scores.std(), model.config.sigma_floor))
    return model


def window_flags(scores: np.ndarray, mu: float, sigma: float, z_p: float) -> np.ndarray:
    """True where a score falls outside the open band (mu - z_p sigma,
    mu + z_p sigma)."""
    lo = mu - z_p * sigma
    hi = mu + z_p * sigma
    return (scores <= lo) | (scores >= hi)

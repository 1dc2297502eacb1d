"""Detector bank: one adversarial model pair per feature channel.

Covers training the nine channel detectors, scoring a windowed stream
into per-window score/flag matrices, and persisting the bank as a
directory of model files plus a JSON index.  The index also carries the
normalization statistics of the training stream so held-out data can be
standardized consistently before detection.
"""

from __future__ import annotations

import json
import logging
import multiprocessing
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from gridsift.config import DetectorConfig
from gridsift.gan.io import ModelFormatError, ModelVersionError, load_gan, save_gan
from gridsift.gan.train import TrainedGan, fit_score_pdf, train_gan
from gridsift.ingest import FEATURE_NAMES, NormStats, WindowSet

log = logging.getLogger(__name__)

INDEX_NAME = "models.json"
INDEX_FORMAT = "gridsift-models"
INDEX_VERSION = 1


def feature_seed(seed: int, feature_index: int) -> int:
    """Stable per-channel training seed derived from the run seed.

    Uses a spawn key so each channel gets an independent stream; results
    do not depend on training order or process count.
    """
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(feature_index,))
    return int(ss.generate_state(1)[0])


@dataclass
class DetectorBank:
    """All trained channel detectors for one run, index-aligned with
    FEATURE_NAMES."""

    models: list[TrainedGan]
    norm_stats: NormStats | None = None
    seed: int = 0

    def model_for(self, feature: str) -> TrainedGan:
        for m in self.models:
            if m.feature == feature:
                return m
        raise KeyError(f"no detector for feature {feature!r}")


def _train_one(args) -> TrainedGan:
    index, name, windows, cfg, seed = args
    model = train_gan(windows, cfg, seed, feature=name, feature_index=index)
    model = fit_score_pdf(model, windows)
    log.info("trained detector %s: mu=%.4f sigma=%.5f", name, model.mu, model.sigma)
    return model


def train_feature_detectors(windows: WindowSet, cfg: DetectorConfig, seed: int,
                            norm_stats: NormStats | None = None,
                            processes: int = 1) -> DetectorBank:
    """Train one detector per feature channel of a windowed stream.

    processes > 1 trains channels in parallel worker processes; the
    per-channel seeds make the result identical either way.
    """
    jobs = [
        (i, name, windows.feature_windows(i), cfg, feature_seed(seed, i))
        for i, name in enumerate(FEATURE_NAMES)
    ]
    if processes > 1:
        with multiprocessing.Pool(processes) as pool:
            models = pool.map(_train_one, jobs)
    else:
        models = [_train_one(job) for job in jobs]
    return DetectorBank(models=models, norm_stats=norm_stats, seed=seed)


def detect_windows(bank: DetectorBank, windows: WindowSet):
    """Score every window with every channel detector.

    Returns (scores, flags), both (n_windows, n_features); flags mark
    scores outside the channel's detection band.
    """
    n_features = len(bank.models)
    cols_s = []
    cols_f = []
    for i, model in enumerate(bank.models):
        w = windows.feature_windows(model.feature_index)
        scores = model.score(w)
        cols_s.append(scores)
        cols_f.append(model.flags(scores))
    return np.stack(cols_s, axis=1), np.stack(cols_f, axis=1)


def save_models(dirpath, bank: DetectorBank) -> None:
    """Write one model file per channel plus the models.json index."""
    root = Path(dirpath)
    root.mkdir(parents=True, exist_ok=True)
    features = []
    for m in sorted(bank.models, key=lambda m: m.feature_index):
        fname = f"{m.feature}.gan"
        save_gan(root / fname, m)
        features.append({
            "name": m.feature,
            "index": m.feature_index,
            "file": fname,
            "mu": m.mu,
            "sigma": m.sigma,
        })
    index = {
        "format": INDEX_FORMAT,
        "version": INDEX_VERSION,
        "seed": bank.seed,
        "features": features,
        "norm_stats": None if bank.norm_stats is None else {
            "mean": bank.norm_stats.mean.tolist(),
            "std": bank.norm_stats.std.tolist(),
        },
    }
    with open(root / INDEX_NAME, "w", encoding="utf-8") as fh:
        json.dump(index, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_models(dirpath) -> DetectorBank:
    """Load a detector bank saved by save_models."""
    root = Path(dirpath)
    index_path = root / INDEX_NAME
    try:
        with open(index_path, "r", encoding="utf-8") as fh:
            index = json.load(fh)
    except FileNotFoundError:
        raise ModelFormatError(f"missing model index {index_path}")
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model index {index_path} is not valid JSON: {exc}")
    fmt = index.get("format")
    if fmt != INDEX_FORMAT:
        raise ModelFormatError(
            f"model index {index_path}: format {fmt!r}, expected {INDEX_FORMAT!r}")
    version = index.get("version")
    if version != INDEX_VERSION:
        raise ModelVersionError(
            f"model index {index_path}: version {version}, expected {INDEX_VERSION}")
    models = []
    for entry in sorted(index["features"], key=lambda e: e["index"]):
        path = root / entry["file"]
        model = load_gan(path)
        if model.feature != entry["name"] or model.feature_index != entry["index"]:
            raise ModelFormatError(
                f"model file {path}: holds feature {model.feature!r} "
                f"(index {model.feature_index}), index entry says "
                f"{entry['name']!r} (index {entry['index']})")
        models.append(model)
    stats = None
    if index.get("norm_stats"):
        stats = NormStats(
            mean=np.asarray(index["norm_stats"]["mean"], dtype=np.float64),
            std=np.asarray(index["norm_stats"]["std"], dtype=np.float64),
        )
    return DetectorBank(models=models, norm_stats=stats, seed=int(index.get("seed", 0)))

"""Versioned binary serialization for trained detector models.

Layout: magic, u32 version, u64 header length, JSON header, then the
float64 parameter blobs in the header's manifest order.  Reloaded models
reproduce scores bit for bit.
"""

from __future__ import annotations

import dataclasses
import json
import struct

import numpy as np

from gridsift.config import DetectorConfig
from gridsift.gan.nets import Discriminator, Generator
from gridsift.gan.train import TrainedGan

MODEL_MAGIC = b"GSIFTGAN"
MODEL_VERSION = 1


class ModelFormatError(ValueError):
    """Raised when a model file is corrupt or not a model file at all."""


class ModelVersionError(ModelFormatError):
    """Raised when a model file has an unsupported version."""


def _collect_params(model: TrainedGan) -> dict[str, np.ndarray]:
    out = {}
    for prefix, net in (("gen", model.gen), ("disc", model.disc)):
        for name, arr in net.params().items():
            out[f"{prefix}.{name}"] = arr
    return out


def save_gan(path, model: TrainedGan) -> None:
    params = _collect_params(model)
    names = sorted(params)
    header = {
        "feature": model.feature,
        "feature_index": model.feature_index,
        "arch": {
            "hidden": model.config.hidden,
            "noise_dim": model.config.noise_dim,
        },
        "score_pdf": {"mu": model.mu, "sigma": model.sigma},
        "config": dataclasses.asdict(model.config),
        "seed": model.seed,
        "curves": model.curves,
        "manifest": [[n, list(params[n].shape)] for n in names],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", MODEL_VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(params[n], dtype="<f8").tobytes())


def load_gan(path) -> TrainedGan:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < len(MODEL_MAGIC) + 12:
        raise ModelFormatError(f"model file {path} is truncated")
    if data[: len(MODEL_MAGIC)] != MODEL_MAGIC:
        raise ModelFormatError(
            f"model file {path}: bad magic {data[:8]!r}, expected {MODEL_MAGIC!r}")
    off = len(MODEL_MAGIC)
    (version,) = struct.unpack_from("<I", data, off)
    off += 4
    if version != MODEL_VERSION:
        raise ModelVersionError(
            f"model file {path}: version {version}, expected {MODEL_VERSION}")
    (hlen,) = struct.unpack_from("<Q", data, off)
    off += 8
    try:
        header = json.loads(data[off:off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"model file {path}: corrupt header ({exc})") from exc
    off += hlen

    cfg = DetectorConfig(**header["config"])
    rng = np.random.default_rng(0)          # placeholder init, overwritten below
    gen = Generator(cfg.noise_dim, cfg.hidden, rng)
    disc = Discriminator(cfg.hidden, rng)
    model = TrainedGan(
        feature=header["feature"], feature_index=header["feature_index"],
        gen=gen, disc=disc,
        mu=header["score_pdf"]["mu"], sigma=header["score_pdf"]["sigma"],
        config=cfg, seed=header["seed"], curves=header.get("curves", {}),
    )
    params = _collect_params(model)
    for name, shape in header["manifest"]:
        if name not in params:
            raise ModelFormatError(f"model file {path}: unknown parameter {name!r}")
        count = int(np.prod(shape))
        need = off + 8 * count
        if need > len(data):
            raise ModelFormatError(f"model file {path}: parameter payload truncated")
        params[name][...] = np.frombuffer(
            data, dtype="<f8", count=count, offset=off).reshape(shape)
        off += 8 * count
    if off != len(data):
        raise ModelFormatError(
            f"model file {path}: {len(data) - off} trailing bytes after parameters")
    return model

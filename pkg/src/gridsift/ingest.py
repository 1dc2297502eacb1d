"""Stream ingestion: CSV parsing, feature derivation, normalization, windowing.

A raw frame carries three-phase voltage and current phasors (magnitude and
angle).  The derived feature vector has nine channels per frame:

    |V_a| |V_b| |V_c| |I_a| |I_b| |I_c| cos(th_a) cos(th_b) cos(th_c)

where th_p is the angle between the voltage and current phasors of phase p,
so the last three channels are per-phase power factors.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import yaml

log = logging.getLogger(__name__)

FEATURE_NAMES = (
    "va_mag", "vb_mag", "vc_mag",
    "ia_mag", "ib_mag", "ic_mag",
    "pf_a", "pf_b", "pf_c",
)
N_FEATURES = 9

# Raw CSV column order expected when no schema file overrides it.
DEFAULT_COLUMNS = {
    "timestamp": "timestamp_us",
    "v_mag": ["va_mag", "vb_mag", "vc_mag"],
    "v_ang": ["va_ang", "vb_ang", "vc_ang"],
    "i_mag": ["ia_mag", "ib_mag", "ic_mag"],
    "i_ang": ["ia_ang", "ib_ang", "ic_ang"],
}

EPS_NORM = 1e-9        # floor for per-feature std so constant channels stay finite
GAP_FACTOR = 3         # dt > GAP_FACTOR * nominal period opens a new segment

WINDOW_CACHE_MAGIC = b"GSIFTWC\x00"
WINDOW_CACHE_VERSION = 1


class SchemaError(ValueError):
    """Raised when a stream file does not match the declared column schema."""


class CacheFormatError(ValueError):
    """Raised when a window cache file is corrupt or has an unknown layout."""


class CacheVersionError(CacheFormatError):
    """Raised when a window cache file has an unsupported version."""


@dataclass
class StreamSchema:
    """Column layout and units of a raw CSV stream."""

    timestamp: str = "timestamp_us"
    v_mag: tuple[str, str, str] = ("va_mag", "vb_mag", "vc_mag")
    v_ang: tuple[str, str, str] = ("va_ang", "vb_ang", "vc_ang")
    i_mag: tuple[str, str, str] = ("ia_mag", "ib_mag", "ic_mag")
    i_ang: tuple[str, str, str] = ("ia_ang", "ib_ang", "ic_ang")
    angle_unit: str = "rad"     # "rad" or "deg"
    fps: float = 120.0

    def all_columns(self) -> list[str]:
        return [self.timestamp, *self.v_mag, *self.v_ang, *self.i_mag, *self.i_ang]


def load_schema(path) -> StreamSchema:
    """Read a YAML sidecar describing the CSV column layout."""
    with open(path, "r") as fh:
        raw = yaml.safe_load(fh) or {}
    known = {"timestamp", "v_mag", "v_ang", "i_mag", "i_ang", "angle_unit", "fps"}
    unknown = set(raw) - known
    if unknown:
        raise SchemaError(f"unknown schema keys: {sorted(unknown)}")
    kwargs = {}
    for key in ("v_mag", "v_ang", "i_mag", "i_ang"):
        if key in raw:
            cols = raw[key]
            if not isinstance(cols, (list, tuple)) or len(cols) != 3:
                raise SchemaError(f"schema key {key!r} must list exactly 3 columns")
            kwargs[key] = tuple(cols)
    if "timestamp" in raw:
        kwargs["timestamp"] = raw["timestamp"]
    if "angle_unit" in raw:
        if raw["angle_unit"] not in ("rad", "deg"):
            raise SchemaError(f"angle_unit must be 'rad' or 'deg', got {raw['angle_unit']!r}")
        kwargs["angle_unit"] = raw["angle_unit"]
    if "fps" in raw:
        kwargs["fps"] = float(raw["fps"])
    return StreamSchema(**kwargs)


@dataclass
class RawStream:
    """Column-oriented phasor stream.  Angles are radians internally."""

    ts: np.ndarray              # int64 microseconds, strictly increasing
    v_mag: np.ndarray           # (N, 3) volts
    v_ang: np.ndarray           # (N, 3) radians
    i_mag: np.ndarray           # (N, 3) amperes
    i_ang: np.ndarray           # (N, 3) radians
    fps: float = 120.0
    n_skipped: int = 0          # malformed rows dropped during parsing

    def __len__(self) -> int:
        return len(self.ts)


@dataclass
class FeatureStream:
    """Nine derived feature channels, shape (9, N), plus timestamps."""

    ts: np.ndarray
    x: np.ndarray               # (9, N) raw (un-normalized) feature values
    fps: float = 120.0

    def __len__(self) -> int:
        return self.x.shape[1]


@dataclass
class NormStats:
    """Per-feature standardization constants (population convention)."""

    mean: np.ndarray            # (9,)
    std: np.ndarray             # (9,) floored at EPS_NORM

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(mean=np.asarray(d["mean"], dtype=np.float64),
                   std=np.asarray(d["std"], dtype=np.float64))


def parse_csv(path, schema: StreamSchema | None = None) -> RawStream:
    """Parse a raw phasor CSV into a RawStream.

    Malformed rows (wrong field count, non-numeric values, non-increasing
    timestamps) are skipped and counted; missing required columns raise
    SchemaError naming the column.
    """
    schema = schema or StreamSchema()
    cols = schema.all_columns()
    try:
        df = pd.read_csv(path, usecols=lambda c: c in cols, on_bad_lines="skip")
    except ValueError as exc:
        raise SchemaError(f"failed to read {path}: {exc}") from exc
    missing = [c for c in cols if c not in df.columns]
    if missing:
        raise SchemaError(f"stream file {path} is missing required columns {missing}")

    n_raw = len(df)
    for c in cols:
        if df[c].dtype == object:
            df[c] = pd.to_numeric(df[c], errors="coerce")
    good = np.isfinite(df[cols].to_numpy(dtype=np.float64)).all(axis=1)
    df = df[good]

    ts = df[schema.timestamp].to_numpy(dtype=np.int64)
    keep = np.ones(len(ts), dtype=bool)
    if len(ts) > 1:
        # drop rows that do not advance time: running-maximum filter
        run_max = np.maximum.accumulate(ts)
        keep[1:] = ts[1:] > run_max[:-1]
    n_skipped = n_raw - int(keep.sum())
    if n_skipped:
        log.warning("parse_csv: skipped %d malformed row(s) out of %d", n_skipped, n_raw)

    def block(names) -> np.ndarray:
        return np.ascontiguousarray(df[list(names)].to_numpy(dtype=np.float64)[keep])

    v_ang = block(schema.v_ang)
    i_ang = block(schema.i_ang)
    if schema.angle_unit == "deg":
        v_ang = np.deg2rad(v_ang)
        i_ang = np.deg2rad(i_ang)
    return RawStream(
        ts=ts[keep],
        v_mag=block(schema.v_mag),
        v_ang=v_ang,
        i_mag=block(schema.i_mag),
        i_ang=i_ang,
        fps=schema.fps,
        n_skipped=n_skipped,
    )


def derive_features(raw: RawStream) -> FeatureStream:
    """Map phasor frames to the nine-channel feature stream.

    Power factor of phase p is cos(v_ang_p - i_ang_p); magnitudes pass
    through unchanged.
    """
    n = len(raw)
    x = np.empty((N_FEATURES, n), dtype=np.float64)
    x[0:3] = raw.v_mag.T
    x[3:6] = raw.i_mag.T
    x[6:9] = np.cos(raw.v_ang - raw.i_ang).T
    return FeatureStream(ts=raw.ts, x=x, fps=raw.fps)


def fit_norm_stats(x: np.ndarray, eps: float = EPS_NORM) -> NormStats:
    """Population mean/std per feature row; std floored at eps."""
    x = np.asarray(x, dtype=np.float64)
    mean = x.mean(axis=1)
    std = x.std(axis=1)            # ddof=0
    std = np.maximum(std, eps)
    return NormStats(mean=mean, std=std)


def normalize(x: np.ndarray, stats: NormStats) -> np.ndarray:
    return (x - stats.mean[:, None]) / stats.std[:, None]


def denormalize(xn: np.ndarray, stats: NormStats) -> np.ndarray:
    return xn * stats.std[:, None] + stats.mean[:, None]


def split_segments(ts: np.ndarray, fps: float, gap_factor: float = GAP_FACTOR) -> list[tuple[int, int]]:
    """Split a timestamp vector into contiguous segments at large gaps.

    A segment ends whenever the spacing to the next sample exceeds
    gap_factor nominal sample periods.  Returns half-open index ranges.
    """
    n = len(ts)
    if n == 0:
        return []
    period_us = 1e6 / fps
    dt = np.diff(ts)
    breaks = np.nonzero(dt > gap_factor * period_us)[0]
    bounds = np.concatenate(([0], breaks + 1, [n]))
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]


@dataclass
class WindowSet:
    """Sliding windows over a normalized feature stream.

    Windows are taken per segment with the configured length and stride
    (stride = length - overlap); a trailing partial window is dropped.
    The feature matrix is kept whole and windows are exposed as strided
    views, so a WindowSet is cheap to hold for multi-hour streams.
    """

    x_norm: np.ndarray                      # (9, N)
    ts: np.ndarray                          # (N,) int64 us
    segments: list[tuple[int, int]]
    window_len: int
    overlap: int
    stats: NormStats
    fps: float = 120.0
    starts: np.ndarray = field(init=False)  # absolute start index of each window

    def __post_init__(self):
        if not 0 <= self.overlap < self.window_len:
            raise ValueError(f"overlap must be in [0, window_len), got {self.overlap}")
        stride = self.window_len - self.overlap
        starts = []
        for a, b in self.segments:
            seg_len = b - a
            if seg_len < self.window_len:
                continue
            n_win = (seg_len - self.window_len) // stride + 1
            starts.append(a + stride * np.arange(n_win, dtype=np.int64))
        self.starts = (np.concatenate(starts) if starts
                       else np.empty(0, dtype=np.int64))

    @property
    def stride(self) -> int:
        return self.window_len - self.overlap

    @property
    def n_windows(self) -> int:
        return len(self.starts)

    def feature_windows(self, feature: int) -> np.ndarray:
        """Materialize the (n_windows, window_len) matrix for one feature."""
        row = self.x_norm[feature]
        out = np.empty((self.n_windows, self.window_len), dtype=np.float64)
        for k, s in enumerate(self.starts):
            out[k] = row[s:s + self.window_len]
        return out

    def window(self, feature: int, index: int) -> np.ndarray:
        s = self.starts[index]
        return self.x_norm[feature, s:s + self.window_len]


def windowize(features: FeatureStream, stats: NormStats | None = None,
              window_len: int = 40, overlap: int = 20,
              gap_factor: float = GAP_FACTOR) -> WindowSet:
    """Normalize a feature stream and cut it into sliding windows.

    When stats is None, normalization constants are fit on this stream
    (the training-time path); pass persisted stats to window held-out data.
    """
    if stats is None:
        stats = fit_norm_stats(features.x)
    segments = split_segments(features.ts, features.fps, gap_factor)
    x_norm = normalize(features.x, stats)
    return WindowSet(x_norm=x_norm, ts=features.ts, segments=segments,
                     window_len=window_len, overlap=overlap, stats=stats,
                     fps=features.fps)


# ---------------------------------------------------------------------------
# Window cache file
#
# Layout: magic, u32 version, u64 header length, JSON header, then the
# int64 timestamp vector and the float64 normalized feature matrix.  The
# matrix round-trips bit-exactly; windows are rebuilt as views on load.
# ---------------------------------------------------------------------------

def save_window_cache(path, ws: WindowSet) -> None:
    header = {
        "window_len": ws.window_len,
        "overlap": ws.overlap,
        "n_features": int(ws.x_norm.shape[0]),
        "n_samples": int(ws.x_norm.shape[1]),
        "n_windows": int(ws.n_windows),
        "fps": ws.fps,
        "segments": [[int(a), int(b)] for a, b in ws.segments],
        "norm": ws.stats.to_dict(),
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(WINDOW_CACHE_MAGIC)
        fh.write(struct.pack("<I", WINDOW_CACHE_VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(ws.ts, dtype="<i8").tobytes())
        fh.write(np.ascontiguousarray(ws.x_norm, dtype="<f8").tobytes())


def load_window_cache(path) -> WindowSet:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < len(WINDOW_CACHE_MAGIC) + 12:
        raise CacheFormatError(f"window cache {path} is truncated")
    if data[: len(WINDOW_CACHE_MAGIC)] != WINDOW_CACHE_MAGIC:
        raise CacheFormatError(
            f"window cache {path}: bad magic {data[:8]!r}, expected {WINDOW_CACHE_MAGIC!r}")
    off = len(WINDOW_CACHE_MAGIC)
    (version,) = struct.unpack_from("<I", data, off)
    off += 4
    if version != WINDOW_CACHE_VERSION:
        raise CacheVersionError(
            f"window cache {path}: version {version}, expected {WINDOW_CACHE_VERSION}")
    (hlen,) = struct.unpack_from("<Q", data, off)
    off += 8
    try:
        header = json.loads(data[off:off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CacheFormatError(f"window cache {path}: corrupt header ({exc})") from exc
    off += hlen
    n = header["n_samples"]
    nf = header["n_features"]
    need = off + 8 * n + 8 * nf * n
    if len(data) != need:
        raise CacheFormatError(
            f"window cache {path}: payload is {len(data) - off} bytes, expected {need - off}")
    ts = np.frombuffer(data, dtype="<i8", count=n, offset=off).copy()
    off += 8 * n
    x_norm = np.frombuffer(data, dtype="<f8", count=nf * n, offset=off).reshape(nf, n).copy()
    return WindowSet(
        x_norm=x_norm, ts=ts,
        segments=[(a, b) for a, b in header["segments"]],
        window_len=header["window_len"], overlap=header["overlap"],
        stats=NormStats.from_dict(header["norm"]), fps=header["fps"],
    )

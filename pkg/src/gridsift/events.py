"""Turning flagged windows into events, categorizing and storing them.

Each scored window carries a 9-bit detection vector (one bit per feature
channel).  Windows with any bit set are merged into events: overlapping
or nearly-adjacent flagged spans coalesce, short quiet gaps are bridged,
and the result is padded with context samples on both sides.  An event's
detection vector is the bitwise OR over its member windows; its waveform
matrix P holds the raw (de-normalized) feature values over the padded
span.

Categories follow the detection-vector pattern: which of the three
feature groups (voltage, current, power factor) are active, and whether
every active group fires on all three phases (balanced).  The five
canonical patterns are pre-registered; unseen patterns get new numerals
in first-seen order.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from gridsift.ingest import FEATURE_NAMES, NormStats, WindowSet, denormalize

log = logging.getLogger(__name__)

GROUP_SLICES = {"V": slice(0, 3), "I": slice(3, 6), "PF": slice(6, 9)}

EVENT_STORE_MAGIC = b"GSIFTEVT"
EVENT_STORE_VERSION = 1


def roman(n: int) -> str:
    """Roman numeral for a small positive integer."""
    vals = [(1000, "M"), (900, "CM"), (500, "D"), (400, "CD"), (100, "C"),
            (90, "XC"), (50, "L"), (40, "XL"), (10, "X"), (9, "IX"),
            (5, "V"), (4, "IV"), (1, "I")]
    out = []
    for v, sym in vals:
        while n >= v:
            out.append(sym)
            n -= v
    return "".join(out)


def category_key(vector: np.ndarray) -> tuple:
    """Reduce a 9-bit detection vector to its category key.

    The key is (V active, I active, PF active, balanced); for PF-only
    vectors phase balance is not distinguishing, so the balance slot is
    None and all three PF-only patterns share one category.
    """
    vector = np.asarray(vector, dtype=bool)
    if vector.shape != (9,):
        raise ValueError(f"detection vector must have 9 bits, got {vector.shape}")
    if not vector.any():
        raise ValueError("detection vector has no active bits")
    active = {g: bool(vector[s].any()) for g, s in GROUP_SLICES.items()}
    if (active["V"], active["I"], active["PF"]) == (False, False, True):
        return (False, False, True, None)
    balanced = all(bool(vector[s].all())
                   for g, s in GROUP_SLICES.items() if active[g])
    return (active["V"], active["I"], active["PF"], balanced)


# canonical categories in report order
CANONICAL_CATEGORIES: list[tuple[tuple, str]] = [
    ((True, True, True, True), "I"),       # all groups, balanced
    ((True, False, False, True), "II"),    # voltage only, balanced
    ((False, True, True, True), "III"),    # current + power factor, balanced
    ((False, True, True, False), "IV"),    # current + power factor, unbalanced
    ((False, False, True, None), "V"),     # power factor only
]


class CategoryRegistry:
    """Maps category keys to stable names; unseen keys get new numerals."""

    def __init__(self):
        self._by_key: dict[tuple, str] = dict(CANONICAL_CATEGORIES)
        self._order: list[str] = [name for _, name in CANONICAL_CATEGORIES]

    def categorize(self, vector: np.ndarray) -> str:
        key = category_key(vector)
        if key not in self._by_key:
            name = roman(len(self._order) + 1)
            self._by_key[key] = name
            self._order.append(name)
            log.info("new event category %s for pattern %s", name, key)
        return self._by_key[key]

    def names(self) -> list[str]:
        return list(self._order)

    def to_dict(self) -> dict:
        return {
            "order": self._order,
            "keys": [[list(k[:3]), k[3], v] for k, v in self._by_key.items()],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CategoryRegistry":
        reg = cls()
        for groups, balanced, name in d["keys"]:
            key = (groups[0], groups[1], groups[2], balanced)
            reg._by_key[key] = name
        reg._order = list(d["order"])
        return reg


@dataclass
class EventRecord:
    """One detected event with context padding."""

    event_id: int
    start: int                  # padded span start (sample index)
    end: int                    # padded span end (exclusive)
    core_start: int             # merged flagged span before padding
    core_end: int
    start_ts: int               # microseconds
    end_ts: int
    vector: np.ndarray          # (9,) uint8 detection vector
    category: str
    segment: int
    P: np.ndarray | None = None  # (9, L) raw feature values

    @property
    def length(self) -> int:
        return self.end - self.start

    def meta(self) -> dict:
        return {
            "event_id": self.event_id,
            "start": self.start, "end": self.end,
            "core_start": self.core_start, "core_end": self.core_end,
            "start_ts": int(self.start_ts), "end_ts": int(self.end_ts),
            "vector": [int(b) for b in self.vector],
            "category": self.category,
            "segment": self.segment,
        }

    @classmethod
    def from_meta(cls, d: dict, P=None) -> "EventRecord":
        return cls(
            event_id=d["event_id"], start=d["start"], end=d["end"],
            core_start=d["core_start"], core_end=d["core_end"],
            start_ts=d["start_ts"], end_ts=d["end_ts"],
            vector=np.asarray(d["vector"], dtype=np.uint8),
            category=d["category"], segment=d["segment"], P=P,
        )


def merge_flagged_windows(starts: np.ndarray, flags: np.ndarray, window_len: int,
                          segments: list[tuple[int, int]], quiet_gap: int = 10,
                          padding: int = 20):
    """Merge flagged windows into padded event spans.

    Returns a list of (start, end, core_start, core_end, vector, segment)
    tuples in time order.  Overlapping or adjacent flagged spans coalesce,
    as do spans whose quiet separation is below quiet_gap.  Padding then
    adds context on both sides, clipped to the segment; padded spans of
    distinct events may overlap, the cores never do.
    """
    flags = np.asarray(flags, dtype=bool)
    hot = flags.any(axis=1)
    out = []
    for seg_idx, (a, b) in enumerate(segments):
        in_seg = (starts >= a) & (starts + window_len <= b) & hot
        idx = np.nonzero(in_seg)[0]
        if len(idx) == 0:
            continue
        spans = []      # [core_start, core_end, vector]
        for w in idx:
            s = int(starts[w])
            e = s + window_len
            v = flags[w]
            if spans and s - spans[-1][1] < quiet_gap:
                spans[-1][1] = max(spans[-1][1], e)
                spans[-1][2] = spans[-1][2] | v
            else:
                spans.append([s, e, v.copy()])
        out.extend((max(a, s - padding), min(b, e + padding), s, e, v, seg_idx)
                   for s, e, v in spans)
    return out


def build_events(ws: WindowSet, flags: np.ndarray, quiet_gap: int = 10,
                 padding: int = 20) -> list[EventRecord]:
    """Assemble EventRecords (with raw waveform matrices) from window flags."""
    spans = merge_flagged_windows(ws.starts, flags, ws.window_len, ws.segments,
                                  quiet_gap=quiet_gap, padding=padding)
    registry = CategoryRegistry()
    events = []
    for k, (ps, pe, cs, ce, v, seg) in enumerate(spans):
        vec = v.astype(np.uint8)
        P = denormalize(ws.x_norm[:, ps:pe], ws.stats)
        events.append(EventRecord(
            event_id=k, start=ps, end=pe, core_start=cs, core_end=ce,
            start_ts=int(ws.ts[ps]), end_ts=int(ws.ts[pe - 1]),
            vector=vec, category=registry.categorize(vec), segment=seg, P=P,
        ))
    return events, registry


def event_rate_report(events: list[EventRecord], n_samples: int, fps: float,
                      registry: CategoryRegistry | None = None) -> dict:
    """Counts per category, events per hour and flagged-sample fraction."""
    names = registry.names() if registry else [n for _, n in CANONICAL_CATEGORIES]
    counts = {name: 0 for name in names}
    for ev in events:
        counts.setdefault(ev.category, 0)
        counts[ev.category] += 1
    core_samples = sum(ev.core_end - ev.core_start for ev in events)
    hours = n_samples / fps / 3600.0 if n_samples else 0.0
    return {
        "n_events": len(events),
        "by_category": counts,
        "events_per_hour": (len(events) / hours) if hours else 0.0,
        "flagged_sample_fraction": (core_samples / n_samples) if n_samples else 0.0,
    }


# ---------------------------------------------------------------------------
# Event store: append-only binary waveforms plus a JSON index
# ---------------------------------------------------------------------------

class EventStoreError(ValueError):
    pass


class EventStore:
    """Persisted events: metadata in a JSON index, waveforms in a binary
    append-only file addressed by (offset, length)."""

    def __init__(self, bin_path, index_path, header: dict | None = None,
                 registry: CategoryRegistry | None = None):
        self.bin_path = str(bin_path)
        self.index_path = str(index_path)
        self.header = header or {}
        self.registry = registry or CategoryRegistry()
        self.metas: list[dict] = []

    # -- write side --------------------------------------------------------
    @classmethod
    def create(cls, bin_path, index_path, fps: float, stats: NormStats,
               extra: dict | None = None) -> "EventStore":
        header = {"fps": fps, "norm": stats.to_dict(), "features": list(FEATURE_NAMES)}
        header.update(extra or {})
        store = cls(bin_path, index_path, header)
        with open(bin_path, "wb") as fh:
            fh.write(EVENT_STORE_MAGIC)
            fh.write(struct.pack("<I", EVENT_STORE_VERSION))
        return store

    def append(self, event: EventRecord) -> None:
        if event.P is None:
            raise EventStoreError(f"event {event.event_id} has no waveform to store")
        blob = np.ascontiguousarray(event.P, dtype="<f8").tobytes()
        with open(self.bin_path, "ab") as fh:
            offset = fh.tell()
            fh.write(blob)
        meta = event.meta()
        meta["p_offset"] = offset
        meta["p_shape"] = list(event.P.shape)
        self.metas.append(meta)

    def extend(self, events) -> None:
        for ev in events:
            self.append(ev)

    def flush_index(self) -> None:
        doc = {
            "version": EVENT_STORE_VERSION,
            "bin_file": self.bin_path.rsplit("/", 1)[-1],
            "header": self.header,
            "categories": self.registry.to_dict(),
            "events": self.metas,
        }
        with open(self.index_path, "w") as fh:
            json.dump(doc, fh, sort_keys=True, indent=1)
            fh.write("\n")

    # -- read side ----------------------------------------------------------
    @classmethod
    def open(cls, index_path) -> "EventStore":
        with open(index_path, "r") as fh:
            doc = json.load(fh)
        if doc.get("version") != EVENT_STORE_VERSION:
            raise EventStoreError(
                f"event index {index_path}: version {doc.get('version')}, "
                f"expected {EVENT_STORE_VERSION}")
        base = str(index_path).rsplit("/", 1)
        bin_path = (base[0] + "/" if len(base) == 2 else "") + doc["bin_file"]
        store = cls(bin_path, index_path, doc["header"],
                    CategoryRegistry.from_dict(doc["categories"]))
        store.metas = doc["events"]
        with open(bin_path, "rb") as fh:
            head = fh.read(12)
        if head[:8] != EVENT_STORE_MAGIC:
            raise EventStoreError(f"event file {bin_path}: bad magic {head[:8]!r}")
        (version,) = struct.unpack_from("<I", head, 8)
        if version != EVENT_STORE_VERSION:
            raise EventStoreError(
                f"event file {bin_path}: version {version}, expected {EVENT_STORE_VERSION}")
        return store

    def __len__(self) -> int:
        return len(self.metas)

    def load_waveform(self, meta: dict) -> np.ndarray:
        rows, cols = meta["p_shape"]
        with open(self.bin_path, "rb") as fh:
            fh.seek(meta["p_offset"])
            blob = fh.read(8 * rows * cols)
        if len(blob) != 8 * rows * cols:
            raise EventStoreError(
                f"event {meta['event_id']}: waveform truncated in {self.bin_path}")
        return np.frombuffer(blob, dtype="<f8").reshape(rows, cols).copy()

    def load_event(self, meta: dict) -> EventRecord:
        return EventRecord.from_meta(meta, P=self.load_waveform(meta))

    def norm_stats(self) -> NormStats:
        return NormStats.from_dict(self.header["norm"])

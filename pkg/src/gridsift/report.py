"""Post-clustering analytics and plot-ready exports.

Per-event current statistics (steady-state delta, inrush peak, transient
length), per-cluster summaries, trigger/follower sequence mining, and
deterministic CSV/JSON report files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from gridsift.events import EventRecord, GROUP_SLICES

REPORT_FORMAT = "gridsift-report"
REPORT_VERSION = 1

I_ROWS = GROUP_SLICES["I"]
DEV_MULT = 4.0          # transient threshold: 4x pre-padding noise


@dataclass
class EventFeatures:
    """Current-channel statistics of one detected event."""

    event_id: int
    delta_iss: np.ndarray       # (3,) post minus pre steady state, amperes
    delta_iss_mean: float
    i_inr: float                # peak excursion above pre steady state
    transient_len: int          # samples, >= 1
    cluster: int | None = None

    def to_dict(self) -> dict:
        return {
            "event_id": self.event_id,
            "delta_iss": [float(d) for d in self.delta_iss],
            "delta_iss_mean": float(self.delta_iss_mean),
            "i_inr": float(self.i_inr),
            "transient_len": int(self.transient_len),
            "cluster": self.cluster,
        }


@dataclass(frozen=True)
class SequenceRule:
    """A trigger cluster followed by a burst of follower-cluster events."""

    trigger: int
    follower: int
    gap_s: float                # lookahead window after the trigger ends
    min_count: int

    def __post_init__(self):
        if self.gap_s <= 0:
            raise ValueError(f"sequence gap must be > 0, got {self.gap_s}")
        if self.min_count < 1:
            raise ValueError(f"min follower count must be >= 1, got {self.min_count}")


@dataclass
class SequenceMatch:
    """One mined super-event span."""

    trigger_index: int          # position in the timeline
    start_s: float              # trigger start
    end_s: float                # end of the last counted follower
    n_followers: int

    def to_dict(self) -> dict:
        return {
            "trigger_index": self.trigger_index,
            "start_s": float(self.start_s),
            "end_s": float(self.end_s),
            "n_followers": self.n_followers,
        }


def _longest_run(mask: np.ndarray) -> int:
    if not mask.any():
        return 0
    padded = np.r_[False, mask, False].astype(np.int8)
    edges = np.flatnonzero(np.diff(padded))
    return int(np.max(edges[1::2] - edges[0::2]))


def extract_event_features(e: EventRecord, pad: int = 20,
                           dev_mult: float = DEV_MULT) -> EventFeatures:
    """Steady-state and transient current statistics for one event.

    Pre/post steady states are medians of the first/last `pad` samples of
    the padded span.  The transient is the longest contiguous run where
    any phase deviates from its pre steady state by more than dev_mult
    times that phase's pre-padding noise.
    """
    if e.P is None:
        raise ValueError(f"event {e.event_id} carries no sample matrix")
    L = e.P.shape[1]
    if L < 2 * pad + 1:
        raise ValueError(
            f"event {e.event_id}: span of {L} samples leaves no room for "
            f"{pad} samples of padding on each side")
    cur = e.P[I_ROWS]                               # (3, L)
    pre = np.median(cur[:, :pad], axis=1)
    post = np.median(cur[:, -pad:], axis=1)
    delta = post - pre
    dev = cur - pre[:, None]
    i_inr = max(0.0, float(dev.max()))
    noise = cur[:, :pad].std(axis=1)
    mask = (np.abs(dev) > dev_mult * noise[:, None]).any(axis=0)
    transient_len = max(1, _longest_run(mask))
    return EventFeatures(
        event_id=e.event_id, delta_iss=delta,
        delta_iss_mean=float(delta.mean()), i_inr=i_inr,
        transient_len=transient_len)


def features_for(events: list[EventRecord],
                 clusters: np.ndarray | None = None) -> list[EventFeatures]:
    """Extract features for every event, attaching cluster ids if given."""
    feats = []
    for j, e in enumerate(events):
        f = extract_event_features(e)
        if clusters is not None:
            f.cluster = int(clusters[j])
        feats.append(f)
    return feats


def mine_sequences(timeline, rule: SequenceRule) -> list[SequenceMatch]:
    """Find trigger events followed by enough follower-cluster events.

    The timeline is a sorted sequence of (start_s, end_s, cluster)
    triples.  A follower counts when it starts within (trigger_end,
    trigger_end + gap_s].  Each qualifying trigger yields one match.
    """
    starts = np.array([t[0] for t in timeline], dtype=np.float64)
    ends = np.array([t[1] for t in timeline], dtype=np.float64)
    clusters = np.array([t[2] for t in timeline])
    if np.any(np.diff(starts) < 0):
        raise ValueError("timeline must be sorted by start time")
    f_idx = np.flatnonzero(clusters == rule.follower)
    f_starts = starts[f_idx]
    matches = []
    for i in np.flatnonzero(clusters == rule.trigger):
        t_end = ends[i]
        lo = np.searchsorted(f_starts, t_end, side="right")
        hi = np.searchsorted(f_starts, t_end + rule.gap_s, side="right")
        n = int(hi - lo)
        if n >= rule.min_count:
            matches.append(SequenceMatch(
                trigger_index=int(i), start_s=float(starts[i]),
                end_s=float(ends[f_idx[hi - 1]]), n_followers=n))
    return matches


def _percentiles(values: np.ndarray) -> dict:
    return {
        "mean": float(np.mean(values)),
        "p10": float(np.percentile(values, 10)),
        "p50": float(np.percentile(values, 50)),
        "p90": float(np.percentile(values, 90)),
    }


def cluster_stats(feats: list[EventFeatures], events: list[EventRecord],
                  n_samples: int, fps: float) -> list[dict]:
    """Count, daily rate, and feature summaries per cluster id."""
    days = n_samples / fps / 86400.0
    by_cluster: dict[int, list[int]] = {}
    for j, f in enumerate(feats):
        by_cluster.setdefault(f.cluster, []).append(j)
    out = []
    for c in sorted(by_cluster, key=lambda v: (v is None, v)):
        idx = by_cluster[c]
        cats = sorted({events[j].category for j in idx})
        out.append({
            "cluster": c,
            "category": cats[0] if len(cats) == 1 else cats,
            "count": len(idx),
            "rate_per_day": len(idx) / days if days > 0 else 0.0,
            "delta_iss_mean": _percentiles(np.array([feats[j].delta_iss_mean for j in idx])),
            "i_inr": _percentiles(np.array([feats[j].i_inr for j in idx])),
            "transient_len": _percentiles(np.array([feats[j].transient_len for j in idx])),
        })
    return out


def vector_str(vector) -> str:
    bits = "".join(str(int(b)) for b in vector)
    return f"[{bits[0:3]} {bits[3:6]} {bits[6:9]}]"


def summary_table(events: list[EventRecord], category_order: list[str]) -> list[dict]:
    """Detection-vector rows with counts, grouped in category order."""
    rows: dict[tuple[str, str], int] = {}
    for e in events:
        key = (e.category, vector_str(e.vector))
        rows[key] = rows.get(key, 0) + 1
    rank = {name: i for i, name in enumerate(category_order)}
    ordered = sorted(rows, key=lambda k: (rank.get(k[0], len(rank)), k[1]))
    return [{"category": c, "vector": v, "count": rows[(c, v)]}
            for c, v in ordered]


def _write_json(path: Path, doc: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def export_reports(events: list[EventRecord], clusters: np.ndarray,
                   outdir, fps: float, n_samples: int,
                   category_order: list[str],
                   rules: list[SequenceRule] = (),
                   matches: list[list[SequenceMatch]] = ()) -> dict[str, Path]:
    """Write cluster stats, per-cluster scatter CSVs, sequence report,
    and the category summary.  Returns the paths written."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    scatter_dir = out / "scatter"
    scatter_dir.mkdir(exist_ok=True)

    feats = features_for(events, clusters)
    stats = cluster_stats(feats, events, n_samples, fps) if events else []
    paths = {}

    clusters_doc = {
        "format": REPORT_FORMAT, "version": REPORT_VERSION,
        "n_events": len(events), "clusters": stats,
    }
    paths["clusters"] = out / "clusters.json"
    _write_json(paths["clusters"], clusters_doc)

    for c in sorted({f.cluster for f in feats}):
        members = [f for f in feats if f.cluster == c]
        for name, col in (("iss_inr", "i_inr"), ("iss_len", "transient_len")):
            p = scatter_dir / f"cluster_{c}_{name}.csv"
            with open(p, "w", encoding="utf-8") as fh:
                fh.write(f"event_id,delta_iss_mean,{col}\n")
                for f in members:
                    val = f"{f.i_inr:.6f}" if col == "i_inr" else str(f.transient_len)
                    fh.write(f"{f.event_id},{f.delta_iss_mean:.6f},{val}\n")
            paths[f"scatter_{c}_{name}"] = p

    seq_doc = {
        "format": REPORT_FORMAT, "version": REPORT_VERSION,
        "rules": [
            {"trigger": r.trigger, "follower": r.follower,
             "gap_s": r.gap_s, "min_count": r.min_count,
             "matches": [m.to_dict() for m in ms]}
            for r, ms in zip(rules, matches)
        ],
    }
    paths["sequences"] = out / "sequences.json"
    _write_json(paths["sequences"], seq_doc)

    summary_doc = {
        "format": REPORT_FORMAT, "version": REPORT_VERSION,
        "n_events": len(events),
        "table": summary_table(events, category_order),
    }
    paths["summary"] = out / "summary.json"
    _write_json(paths["summary"], summary_doc)
    return paths

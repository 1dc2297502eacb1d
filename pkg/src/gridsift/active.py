"""Online cluster maintenance: fast assignment plus periodic full re-solves.

New events are matched against each cluster's representative by MCC; a
match below the acceptance threshold opens a new cluster on the spot.
Periodically (event count or elapsed stream time) the model is rebuilt
with the full optimization pipeline over a capped sample of recent
events, and cluster ids are remapped to preserve continuity.

Event matrices handed to this module must share one standardization
(same per-feature scaling as the batch similarity computation).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from gridsift.clustering import (
    select_cluster_count,
    select_representatives,
)
from gridsift.similarity import EPS_VAR_DEFAULT, build_similarity_matrix, mcc

MODEL_FORMAT = "gridsift-clusters"
SET_FORMAT = "gridsift-cluster-set"
MODEL_VERSION = 1

THETA_ACTIVE_DEFAULT = 0.8
REOPT_EVENT_COUNT = 10_000
REOPT_PERIOD_S = 7 * 86400.0
SAMPLE_CAP = 400            # most recent events kept for full re-solves
C_MAX_ACTIVE = 8


class ModelFormatError(ValueError):
    """Raised when a cluster model file is corrupt or mislabeled."""


class ModelVersionError(ModelFormatError):
    """Raised when a cluster model file has an unsupported version."""


@dataclass
class ClusterModel:
    """Per-category cluster state for online assignment."""

    category: str
    theta: float = THETA_ACTIVE_DEFAULT
    eps_var: float = EPS_VAR_DEFAULT
    row_scale: np.ndarray | None = None
    reps: dict[int, np.ndarray] = field(default_factory=dict)      # cluster -> matrix
    rep_events: dict[int, int] = field(default_factory=dict)       # cluster -> event id
    members: dict[int, list[int]] = field(default_factory=dict)
    recent: list[tuple[int, np.ndarray]] = field(default_factory=list)
    next_cluster: int = 0
    events_since_solve: int = 0
    last_solve_s: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def n_clusters(self) -> int:
        return len(self.reps)

    def assignments(self) -> dict[int, int]:
        """event id -> cluster id over all remembered members."""
        out = {}
        for c, ids in self.members.items():
            for ev in ids:
                out[ev] = c
        return out


def _remember(model: ClusterModel, event_id: int, P: np.ndarray) -> None:
    model.recent.append((event_id, P))
    if len(model.recent) > SAMPLE_CAP:
        del model.recent[: len(model.recent) - SAMPLE_CAP]


def active_assign(model: ClusterModel, event_id: int, P: np.ndarray) -> int:
    """Assign one event, creating a new cluster when nothing matches.

    Returns the cluster id.  Ties on similarity go to the lowest cluster
    id; a new cluster uses the event itself as representative.
    """
    best_c = None
    best_s = -np.inf
    for c in sorted(model.reps):
        s = mcc(P, model.reps[c], row_scale=model.row_scale,
                eps_var=model.eps_var)
        if s > best_s:
            best_s = s
            best_c = c
    if best_c is None or best_s < model.theta:
        best_c = model.next_cluster
        model.next_cluster += 1
        model.reps[best_c] = P
        model.rep_events[best_c] = event_id
        model.members[best_c] = []
    model.members[best_c].append(event_id)
    model.events_since_solve += 1
    _remember(model, event_id, P)
    return best_c


def should_reoptimize(model: ClusterModel, now_s: float) -> bool:
    return (model.events_since_solve >= REOPT_EVENT_COUNT
            or now_s - model.last_solve_s >= REOPT_PERIOD_S)


def _remap_ids(old_members: dict[int, list[int]],
               new_groups: list[list[int]], next_free: int) -> list[int]:
    """Give each new group the id of the old cluster it best continues.

    An old id carries over when the new group holds a strict majority of
    that old cluster's (sampled) members; otherwise the group gets a
    fresh id.  Groups are processed in solver order, each old id used at
    most once.
    """
    old_sets = {c: set(ids) for c, ids in old_members.items()}
    taken = set()
    out = []
    for group in new_groups:
        gset = set(group)
        chosen = None
        for c in sorted(old_sets):
            if c in taken or not old_sets[c]:
                continue
            if len(gset & old_sets[c]) * 2 > len(old_sets[c]):
                chosen = c
                break
        if chosen is None:
            chosen = next_free
            next_free += 1
        else:
            taken.add(chosen)
        out.append(chosen)
    return out


def reoptimize(model: ClusterModel, now_s: float | None = None) -> ClusterModel:
    """Full re-solve over the recent sample plus current representatives.

    No accumulated events means no work: the model is returned as is.
    Cluster ids are remapped for continuity (majority-overlap contract),
    representatives and members are rebuilt from the solved sample.
    """
    if model.events_since_solve == 0:
        return model
    pool: dict[int, np.ndarray] = {ev: P for ev, P in model.recent}
    for c, ev in model.rep_events.items():
        pool.setdefault(ev, model.reps[c])
    ids = sorted(pool)
    matrices = [pool[ev] for ev in ids]
    if len(ids) < 2:
        model.events_since_solve = 0
        if now_s is not None:
            model.last_solve_s = now_s
        return model

    S = build_similarity_matrix(matrices, row_scale=model.row_scale,
                                eps_var=model.eps_var)
    D = 1.0 - S
    sel = select_cluster_count(D, c_max=min(C_MAX_ACTIVE, len(ids)))
    labels = sel.assignment.labels
    groups = [[ids[j] for j in np.flatnonzero(labels == c)]
              for c in range(sel.assignment.n_used)]
    rep_idx = select_representatives(D, sel.assignment)

    new_ids = _remap_ids(model.members, groups, model.next_cluster)
    reps, rep_events, members = {}, {}, {}
    for c, (group, cid) in enumerate(zip(groups, new_ids)):
        j = rep_idx[c]
        reps[cid] = matrices[j]
        rep_events[cid] = ids[j]
        members[cid] = group
    model.reps = reps
    model.rep_events = rep_events
    model.members = members
    model.next_cluster = max(model.next_cluster, max(new_ids) + 1)
    model.events_since_solve = 0
    if now_s is not None:
        model.last_solve_s = now_s
    model.meta = {"solved_over": len(ids), "n_clusters": len(groups),
                  "silhouette": sel.scores.get(sel.n_clusters)}
    return model


def _model_doc(model: ClusterModel) -> dict:
    return {
        "category": model.category,
        "theta": model.theta,
        "eps_var": model.eps_var,
        "row_scale": None if model.row_scale is None else [float(v) for v in model.row_scale],
        "next_cluster": model.next_cluster,
        "events_since_solve": model.events_since_solve,
        "last_solve_s": model.last_solve_s,
        "meta": model.meta,
        "clusters": [
            {
                "cluster": c,
                "rep_event": model.rep_events[c],
                "rep_matrix": model.reps[c].tolist(),
                "members": model.members.get(c, []),
            }
            for c in sorted(model.reps)
        ],
    }


def save_model(path, model: ClusterModel) -> None:
    """Write the model as versioned JSON.

    Representatives, members, and counters persist; the rolling sample of
    recent event matrices does not (it refills as new events arrive), so
    a freshly loaded model re-solves over representatives until then.
    """
    doc = {"format": MODEL_FORMAT, "version": MODEL_VERSION}
    doc.update(_model_doc(model))
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def _model_from_doc(doc: dict) -> ClusterModel:
    model = ClusterModel(
        category=doc["category"],
        theta=float(doc["theta"]),
        eps_var=float(doc["eps_var"]),
        row_scale=None if doc["row_scale"] is None else np.asarray(doc["row_scale"]),
        next_cluster=int(doc["next_cluster"]),
        events_since_solve=int(doc["events_since_solve"]),
        last_solve_s=float(doc["last_solve_s"]),
        meta=doc.get("meta", {}),
    )
    for entry in doc["clusters"]:
        c = int(entry["cluster"])
        model.reps[c] = np.asarray(entry["rep_matrix"], dtype=np.float64)
        model.rep_events[c] = int(entry["rep_event"])
        model.members[c] = [int(v) for v in entry["members"]]
    return model


def _read_doc(path, expected_format: str) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"cluster model {path}: not valid JSON ({exc})")
    if not isinstance(doc, dict) or doc.get("format") != expected_format:
        fmt = doc.get("format") if isinstance(doc, dict) else None
        raise ModelFormatError(
            f"cluster model {path}: format {fmt!r}, expected {expected_format!r}")
    if doc.get("version") != MODEL_VERSION:
        raise ModelVersionError(
            f"cluster model {path}: version {doc.get('version')}, "
            f"expected {MODEL_VERSION}")
    return doc


def load_model(path) -> ClusterModel:
    return _model_from_doc(_read_doc(path, MODEL_FORMAT))


def save_model_set(path, models: dict[str, ClusterModel]) -> None:
    """Write all per-category models into one versioned JSON file."""
    doc = {
        "format": SET_FORMAT,
        "version": MODEL_VERSION,
        "models": [_model_doc(models[cat]) for cat in sorted(models)],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_model_set(path) -> dict[str, ClusterModel]:
    doc = _read_doc(path, SET_FORMAT)
    models = {}
    for entry in doc["models"]:
        model = _model_from_doc(entry)
        models[model.category] = model
    return models

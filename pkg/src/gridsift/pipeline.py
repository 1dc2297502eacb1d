"""Stage driver: synth -> train -> detect -> cluster -> replay -> report.

Every stage reads only persisted artifacts of earlier stages and writes
its own, so stages can run in separate processes and a partial run can
resume where it stopped (a stage whose output file already exists is
skipped).  Failures map to per-stage exit codes.

Layout under the working directory:

    corpus/data.csv, corpus/schema.yaml, corpus/labels.json
    models/<feature>.gan, models/models.json
    events/events.bin, events/events.json
    model.json            per-category cluster models
    replay.json           online assignment log
    reports/              clusters.json, scatter/, sequences.json, summary.json
"""

from __future__ import annotations

import json
import logging
import time
from pathlib import Path

import numpy as np

from gridsift.active import (
    ClusterModel,
    active_assign,
    load_model_set,
    reoptimize,
    save_model_set,
)
from gridsift.clustering import select_cluster_count, select_representatives
from gridsift.config import PipelineConfig, WindowConfig
from gridsift.detector import (
    detect_windows,
    load_models,
    save_models,
    train_feature_detectors,
)
from gridsift.events import EventStore, build_events, event_rate_report
from gridsift.ingest import (
    FEATURE_NAMES,
    NormStats,
    WindowSet,
    derive_features,
    load_schema,
    parse_csv,
    windowize,
)
from gridsift.report import (
    SequenceRule,
    export_reports,
    mine_sequences,
)
from gridsift.similarity import build_similarity_matrix, similarity_to_distance
from gridsift.synth import load_labels, write_corpus

log = logging.getLogger(__name__)

EXIT_CODES = {
    "config": 2,
    "synth": 3,
    "train": 4,
    "detect": 5,
    "cluster": 6,
    "replay": 7,
    "report": 8,
}


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name and exit code."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"stage {stage}: {message}")
        self.stage = stage
        self.exit_code = EXIT_CODES.get(stage, 1)


def load_stream_windows(data_csv, schema_path, wcfg: WindowConfig,
                        stats: NormStats | None = None) -> WindowSet:
    """Parse a stream CSV plus schema sidecar into a windowed feature set."""
    schema = load_schema(schema_path)
    raw = parse_csv(data_csv, schema)
    feats = derive_features(raw)
    return windowize(feats, stats=stats, window_len=wcfg.length,
                     overlap=wcfg.overlap, gap_factor=wcfg.gap_factor)


def default_schema_path(data_csv) -> Path:
    """Schema sidecar convention: schema.yaml next to the data file."""
    return Path(data_csv).parent / "schema.yaml"


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def stage_synth(cfg: PipelineConfig, outdir) -> tuple[Path, Path, Path]:
    t0 = time.perf_counter()
    csv_path, schema_path, labels_path = write_corpus(outdir, cfg.synth, cfg.seed)
    n_labels = len(load_labels(labels_path))
    log.info("stage=synth status=done duration_s=%.2f minutes=%.0f events=%d out=%s",
             time.perf_counter() - t0, cfg.synth.duration_min, n_labels, outdir)
    return csv_path, schema_path, labels_path


def stage_train(cfg: PipelineConfig, data_csv, schema_path, models_dir) -> Path:
    t0 = time.perf_counter()
    ws = load_stream_windows(data_csv, schema_path, cfg.window)
    bank = train_feature_detectors(ws, cfg.detector, cfg.seed,
                                   norm_stats=ws.stats, processes=cfg.threads)
    save_models(models_dir, bank)
    log.info("stage=train status=done duration_s=%.2f features=%d windows=%d out=%s",
             time.perf_counter() - t0, len(bank.models), ws.n_windows, models_dir)
    return Path(models_dir)


def stage_detect(cfg: PipelineConfig, models_dir, data_csv, schema_path,
                 events_dir) -> Path:
    t0 = time.perf_counter()
    bank = load_models(models_dir)
    if bank.norm_stats is None:
        raise ValueError(f"model bank {models_dir} has no normalization stats; "
                         f"held-out data cannot be standardized")
    ws = load_stream_windows(data_csv, schema_path, cfg.window, stats=bank.norm_stats)
    scores, flags = detect_windows(bank, ws)
    events, registry = build_events(ws, flags, quiet_gap=cfg.events.quiet_gap,
                                    padding=cfg.events.padding)

    out = Path(events_dir)
    out.mkdir(parents=True, exist_ok=True)
    extra = {
        "source": Path(data_csv).name,
        "n_samples": int(len(ws.ts)),
        "n_windows": int(ws.n_windows),
        "flag_fraction": {
            name: float(flags[:, i].mean()) for i, name in enumerate(FEATURE_NAMES)
        },
        "rate": event_rate_report(events, len(ws.ts), ws.fps, registry),
    }
    store = EventStore.create(out / "events.bin", out / "events.json",
                              ws.fps, ws.stats, extra=extra)
    store.registry = registry
    store.extend(events)
    store.flush_index()
    np.save(out / "flags.npy", flags)
    np.save(out / "window_starts.npy", ws.starts)
    log.info("stage=detect status=done duration_s=%.2f windows=%d events=%d out=%s",
             time.perf_counter() - t0, ws.n_windows, len(events), out)
    return out / "events.json"


def _events_by_category(store: EventStore) -> dict[str, list[dict]]:
    """Event metas grouped by category, time order preserved."""
    groups: dict[str, list[dict]] = {}
    for meta in store.metas:
        groups.setdefault(meta["category"], []).append(meta)
    return groups


def stage_cluster(cfg: PipelineConfig, events_index, model_path) -> dict[str, ClusterModel]:
    t0 = time.perf_counter()
    store = EventStore.open(events_index)
    row_scale = store.norm_stats().std
    groups = _events_by_category(store)
    models: dict[str, ClusterModel] = {}
    for cat in store.registry.names():
        metas = groups.get(cat)
        if not metas:
            continue
        ids = [m["event_id"] for m in metas]
        matrices = [store.load_waveform(m) for m in metas]
        S = build_similarity_matrix(matrices, row_scale=row_scale,
                                    eps_var=cfg.similarity.eps_var,
                                    method=cfg.similarity.method)
        D = similarity_to_distance(S)
        sel = select_cluster_count(D, c_max=cfg.cluster.c_max,
                                   s_min=cfg.cluster.s_min,
                                   exact_cap=cfg.cluster.exact_cap)
        rep_idx = select_representatives(D, sel.assignment)
        model = ClusterModel(category=cat, theta=cfg.cluster.theta_active,
                             eps_var=cfg.similarity.eps_var, row_scale=row_scale)
        labels = sel.assignment.labels
        for c in range(sel.assignment.n_used):
            j = rep_idx[c]
            model.reps[c] = matrices[j]
            model.rep_events[c] = ids[j]
            model.members[c] = [ids[k] for k in np.flatnonzero(labels == c)]
        model.next_cluster = sel.assignment.n_used
        model.last_solve_s = max(m["end_ts"] for m in metas) * 1e-6
        model.meta = {"solved_over": len(ids), "n_clusters": sel.assignment.n_used,
                      "silhouette": sel.scores.get(sel.n_clusters)}
        models[cat] = model
        log.info("stage=cluster category=%s events=%d clusters=%d silhouette=%s",
                 cat, len(ids), model.n_clusters, model.meta["silhouette"])
    save_model_set(model_path, models)
    log.info("stage=cluster status=done duration_s=%.2f categories=%d out=%s",
             time.perf_counter() - t0, len(models), model_path)
    return models


def stage_replay(cfg: PipelineConfig, model_path, events_index,
                 out_model=None, log_path=None) -> dict:
    """Assign stored events online against a persisted model set.

    Events already known to the model double as a self-check: the log
    records whether the online path reproduces their solved cluster.
    """
    t0 = time.perf_counter()
    models = load_model_set(model_path)
    store = EventStore.open(events_index)
    row_scale = store.norm_stats().std
    prior = {cat: m.assignments() for cat, m in models.items()}

    entries = []
    n_new = 0
    reopt_s = cfg.cluster.reopt_days * 86400.0
    for meta in store.metas:
        cat = meta["category"]
        if cat not in models:
            models[cat] = ClusterModel(category=cat, theta=cfg.cluster.theta_active,
                                       eps_var=cfg.similarity.eps_var,
                                       row_scale=row_scale,
                                       last_solve_s=meta["start_ts"] * 1e-6)
            prior[cat] = {}
        model = models[cat]
        before = model.n_clusters
        c = active_assign(model, meta["event_id"], store.load_waveform(meta))
        created = model.n_clusters > before
        n_new += created
        entries.append({
            "event_id": meta["event_id"],
            "category": cat,
            "cluster": c,
            "new_cluster": created,
            "prior": prior[cat].get(meta["event_id"]),
        })
        now_s = meta["end_ts"] * 1e-6
        if (model.events_since_solve >= cfg.cluster.reopt_events
                or now_s - model.last_solve_s >= reopt_s):
            reoptimize(model, now_s)
            log.info("stage=replay category=%s reoptimized clusters=%d", cat,
                     model.n_clusters)

    with_prior = [e for e in entries if e["prior"] is not None]
    matching = sum(e["cluster"] == e["prior"] for e in with_prior)
    summary = {
        "n_events": len(entries),
        "n_new_clusters": n_new,
        "n_with_prior": len(with_prior),
        "n_matching_prior": matching,
        "match_fraction": matching / len(with_prior) if with_prior else None,
    }
    if log_path is not None:
        with open(log_path, "w", encoding="utf-8") as fh:
            json.dump({"summary": summary, "assignments": entries}, fh,
                      sort_keys=True, indent=1)
            fh.write("\n")
    if out_model is not None:
        save_model_set(out_model, models)
    log.info("stage=replay status=done duration_s=%.2f events=%d new_clusters=%d "
             "match_fraction=%s", time.perf_counter() - t0, len(entries), n_new,
             summary["match_fraction"])
    return summary


def _global_cluster_ids(models: dict[str, ClusterModel],
                        category_order: list[str]) -> dict[tuple[str, int], int]:
    """Flatten (category, local cluster) pairs to report-wide integer ids."""
    cats = [c for c in category_order if c in models]
    cats += sorted(set(models) - set(cats))
    out = {}
    for cat in cats:
        for c in sorted(models[cat].reps):
            out[(cat, c)] = len(out)
    return out


def stage_report(cfg: PipelineConfig, model_path, events_index, outdir) -> dict:
    t0 = time.perf_counter()
    store = EventStore.open(events_index)
    models = load_model_set(model_path)
    category_order = store.registry.names()
    gid = _global_cluster_ids(models, category_order)
    assign = {cat: m.assignments() for cat, m in models.items()}

    events = [store.load_event(m) for m in store.metas]
    clusters = np.full(len(events), -1, dtype=np.int64)
    for j, e in enumerate(events):
        local = assign.get(e.category, {}).get(e.event_id)
        if local is not None:
            clusters[j] = gid[(e.category, local)]

    # one candidate rule per ordered pair of distinct clusters; only
    # rules that actually fire are reported
    timeline = [(e.start_ts * 1e-6, e.end_ts * 1e-6, int(clusters[j]))
                for j, e in enumerate(events)]
    rules, matches = [], []
    for trig in sorted(gid.values()):
        for foll in sorted(gid.values()):
            if trig == foll:
                continue
            rule = SequenceRule(trigger=trig, follower=foll,
                                gap_s=cfg.report.sequence_gap_s,
                                min_count=cfg.report.sequence_min_count)
            found = mine_sequences(timeline, rule)
            if found:
                rules.append(rule)
                matches.append(found)

    paths = export_reports(
        events, clusters, outdir,
        fps=float(store.header["fps"]),
        n_samples=int(store.header.get("n_samples", 0)),
        category_order=category_order,
        rules=rules, matches=matches,
    )
    log.info("stage=report status=done duration_s=%.2f events=%d clusters=%d "
             "sequence_rules=%d out=%s", time.perf_counter() - t0, len(events),
             len(gid), len(rules), outdir)
    return paths


# ---------------------------------------------------------------------------
# End-to-end driver
# ---------------------------------------------------------------------------

def run_pipeline(cfg: PipelineConfig) -> int:
    """Run every stage in order, skipping those whose output exists.

    Returns 0 on success or the failing stage's exit code.
    """
    work = Path(cfg.workdir)
    work.mkdir(parents=True, exist_ok=True)
    corpus = work / "corpus"
    data_csv = corpus / "data.csv"
    schema_path = corpus / "schema.yaml"
    models_dir = work / "models"
    events_index = work / "events" / "events.json"
    model_path = work / "model.json"
    replay_path = work / "replay.json"
    reports_dir = work / "reports"

    plan = [
        ("synth", data_csv,
         lambda: stage_synth(cfg, corpus)),
        ("train", models_dir / "models.json",
         lambda: stage_train(cfg, data_csv, schema_path, models_dir)),
        ("detect", events_index,
         lambda: stage_detect(cfg, models_dir, data_csv, schema_path,
                              events_index.parent)),
        ("cluster", model_path,
         lambda: stage_cluster(cfg, events_index, model_path)),
        ("replay", replay_path,
         lambda: stage_replay(cfg, model_path, events_index, log_path=replay_path)),
        ("report", reports_dir / "summary.json",
         lambda: stage_report(cfg, model_path, events_index, reports_dir)),
    ]
    for name, artifact, run in plan:
        if artifact.exists():
            log.info("stage=%s status=skipped artifact=%s", name, artifact)
            continue
        try:
            run()
        except Exception as exc:
            log.error("stage=%s status=failed artifact=%s error=%s",
                      name, artifact, exc)
            return EXIT_CODES[name]
    return 0

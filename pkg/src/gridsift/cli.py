"""Command line interface.

Subcommands mirror the pipeline stages (synth, train, detect, cluster,
replay, report) plus `pipeline` to run them all.  Every subcommand takes
an optional `--config` YAML file; flags override file values.  Failures
exit with the failing stage's code (config errors exit 2 before any
stage runs).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from gridsift import pipeline as pl
from gridsift.config import (
    ConfigError,
    PipelineConfig,
    default_config,
    load_config,
)

log = logging.getLogger("gridsift")


def _configure_logging(args) -> None:
    level = logging.INFO
    if getattr(args, "verbose", False):
        level = logging.DEBUG
    elif getattr(args, "quiet", False):
        level = logging.WARNING
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(levelname)s %(name)s %(message)s")


def _load_base_config(args) -> PipelineConfig:
    if getattr(args, "config", None):
        return load_config(args.config)
    return default_config()


def _replace_section(cfg: PipelineConfig, section: str, **updates) -> PipelineConfig:
    updates = {k: v for k, v in updates.items() if v is not None}
    if not updates:
        return cfg
    sub = dataclasses.replace(getattr(cfg, section), **updates)
    cfg = dataclasses.replace(cfg, **{section: sub})
    cfg.validate()
    return cfg


def _replace_top(cfg: PipelineConfig, **updates) -> PipelineConfig:
    updates = {k: v for k, v in updates.items() if v is not None}
    if not updates:
        return cfg
    cfg = dataclasses.replace(cfg, **updates)
    cfg.validate()
    return cfg


def _events_index(path) -> Path:
    """Accept either the events directory or the index file itself."""
    p = Path(path)
    return p / "events.json" if p.is_dir() else p


def _schema_for(args) -> Path:
    if args.schema:
        return Path(args.schema)
    return pl.default_schema_path(args.data)


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------

def _cmd_synth(args, cfg: PipelineConfig) -> int:
    cfg = _replace_top(cfg, seed=args.seed)
    cfg = _replace_section(cfg, "synth", duration_min=args.minutes,
                           events_per_hour=args.rate)
    pl.stage_synth(cfg, args.out)
    return 0


def _cmd_train(args, cfg: PipelineConfig) -> int:
    cfg = _replace_top(cfg, seed=args.seed)
    cfg = _replace_section(cfg, "detector", epochs=args.epochs, z_p=args.zp)
    pl.stage_train(cfg, args.data, _schema_for(args), args.out)
    return 0


def _cmd_detect(args, cfg: PipelineConfig) -> int:
    pl.stage_detect(cfg, args.models, args.data, _schema_for(args), args.out)
    return 0


def _cmd_cluster(args, cfg: PipelineConfig) -> int:
    cfg = _replace_section(cfg, "cluster", c_max=args.cmax,
                           theta_active=args.theta, exact_cap=args.exact_cap)
    pl.stage_cluster(cfg, _events_index(args.events), args.out)
    return 0


def _cmd_replay(args, cfg: PipelineConfig) -> int:
    summary = pl.stage_replay(cfg, args.model, _events_index(args.events),
                              out_model=args.out, log_path=args.log)
    print(f"replayed {summary['n_events']} events, "
          f"{summary['n_new_clusters']} new clusters, "
          f"match_fraction={summary['match_fraction']}")
    return 0


def _cmd_report(args, cfg: PipelineConfig) -> int:
    pl.stage_report(cfg, args.model, _events_index(args.events), args.out)
    return 0


def _cmd_pipeline(args, cfg: PipelineConfig) -> int:
    cfg = _replace_top(cfg, seed=args.seed, workdir=args.workdir)
    return pl.run_pipeline(cfg)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridsift",
        description="Event detection, categorization and clustering for "
                    "micro-PMU synchrophasor streams.")
    parser.add_argument("--config", help="YAML configuration file")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="debug logging")
    parser.add_argument("-q", "--quiet", action="store_true",
                        help="warnings only")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a labeled synthetic corpus")
    p.add_argument("--minutes", type=float, help="stream duration")
    p.add_argument("--rate", type=float, help="planted events per hour")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=_cmd_synth, stage="synth")

    p = sub.add_parser("train", help="train the per-feature detectors")
    p.add_argument("--data", required=True, help="stream CSV")
    p.add_argument("--schema", help="schema YAML (default: schema.yaml "
                                    "next to the data file)")
    p.add_argument("--out", required=True, help="model directory")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--zp", type=float, help="detection band half-width in sigmas")
    p.set_defaults(handler=_cmd_train, stage="train")

    p = sub.add_parser("detect", help="score a stream and store events")
    p.add_argument("--models", required=True, help="trained model directory")
    p.add_argument("--data", required=True, help="stream CSV")
    p.add_argument("--schema", help="schema YAML (default: schema.yaml "
                                    "next to the data file)")
    p.add_argument("--out", required=True, help="event store directory")
    p.set_defaults(handler=_cmd_detect, stage="detect")

    p = sub.add_parser("cluster", help="cluster stored events per category")
    p.add_argument("--events", required=True,
                   help="event store directory or index file")
    p.add_argument("--out", required=True, help="cluster model JSON")
    p.add_argument("--cmax", type=int, help="largest cluster count tried")
    p.add_argument("--theta", type=float, help="online acceptance threshold")
    p.add_argument("--exact-cap", type=int, dest="exact_cap",
                   help="exact solver limit on event count")
    p.set_defaults(handler=_cmd_cluster, stage="cluster")

    p = sub.add_parser("replay", help="assign stored events online")
    p.add_argument("--model", required=True, help="cluster model JSON")
    p.add_argument("--events", required=True,
                   help="event store directory or index file")
    p.add_argument("--out", help="write the updated model here")
    p.add_argument("--log", help="write the assignment log here")
    p.set_defaults(handler=_cmd_replay, stage="replay")

    p = sub.add_parser("report", help="export cluster and sequence reports")
    p.add_argument("--model", required=True, help="cluster model JSON")
    p.add_argument("--events", required=True,
                   help="event store directory or index file")
    p.add_argument("--out", required=True, help="report directory")
    p.set_defaults(handler=_cmd_report, stage="report")

    p = sub.add_parser("pipeline", help="run all stages end to end")
    p.add_argument("--workdir", help="working directory for all artifacts")
    p.add_argument("--seed", type=int)
    p.set_defaults(handler=_cmd_pipeline, stage="pipeline")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args)
    try:
        cfg = _load_base_config(args)
    except (ConfigError, OSError) as exc:
        log.error("config error: %s", exc)
        return pl.EXIT_CODES["config"]
    try:
        return args.handler(args, cfg)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return pl.EXIT_CODES["config"]
    except Exception as exc:
        log.error("stage=%s status=failed error=%s", args.stage, exc)
        return pl.EXIT_CODES.get(args.stage, 1)


if __name__ == "__main__":
    sys.exit(main())

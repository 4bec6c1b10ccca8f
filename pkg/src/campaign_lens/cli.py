"""``campaign-lens`` command line: one subcommand per stage plus ``run``."""

from __future__ import annotations

import argparse
import datetime as dt
import logging
import sys

from . import __version__
from .core import CampaignLensError, ConfigError
from .pipeline import (
    RunManifest, StageError, resolve_config, run_pipeline, stage_characterize,
    stage_cluster, stage_consensus, stage_explain, stage_featurize, stage_ingest, stage_select,
)

log = logging.getLogger("campaign_lens")

OK, STAGE_FAILURE, CONFIG_ERROR = 0, 1, 2


def _k_range(text: str) -> tuple[int, int]:
    try:
        lo, hi = text.split("..")
        return int(lo), int(hi)
    except ValueError:
        raise ConfigError("k_range", f"expected 'lo..hi', got {text!r}") from None


def _date(key: str, text: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise ConfigError(key, f"bad ISO date {text!r}") from None


def _k_value(text: str):
    if text == "auto":
        return "auto"
    try:
        k = int(text)
    except ValueError:
        raise ConfigError("k", f"expected 'auto' or an integer, got {text!r}") from None
    if k < 2:
        raise ConfigError("k", "k must be at least 2")
    return k


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key-value config file")
    common.add_argument("--seed", type=int, help="random seed (default 40)")
    common.add_argument("--jobs", type=int, default=1, help="cap on worker threads")
    common.add_argument("--manifest-out", help="write a run manifest with file digests here")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="campaign-lens", description=__doc__)
    p.add_argument("--version", action="version", version=f"campaign-lens {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", parents=[common], help="filter and deduplicate a domain list")
    s.add_argument("--domains", help="domain,first_seen[,status] rows")
    s.add_argument("--keywords", help="comma-separated required keywords")
    s.add_argument("--from", dest="date_from")
    s.add_argument("--to", dest="date_to")
    s.add_argument("--intel", help="line-delimited intel snapshot to validate and normalize")
    s.add_argument("--intel-out")
    s.add_argument("--out", required=True)

    s = sub.add_parser("featurize", parents=[common], help="extract the 34 site features")
    s.add_argument("--dataset", required=True)
    s.add_argument("--mode", choices=("fixture", "live"), default="fixture")
    s.add_argument("--fixtures")
    s.add_argument("--whois-dir", help="live mode: directory of <domain>/whois.txt records")
    s.add_argument("--out", required=True)

    s = sub.add_parser("select", parents=[common], help="prune correlated features and scale")
    s.add_argument("--matrix", required=True)
    s.add_argument("--threshold", type=float, help="absolute correlation cut-off (default 0.6)")
    s.add_argument("--out", required=True)

    s = sub.add_parser("cluster", parents=[common], help="fit the four clustering models")
    s.add_argument("--scaled", required=True)
    s.add_argument("--gower", required=True)
    s.add_argument("--k", default="auto", help="'auto' or a fixed cluster count")
    s.add_argument("--k-range", help="candidate k values for auto selection, e.g. 2..10")
    s.add_argument("--out", required=True)

    s = sub.add_parser("consensus", parents=[common], help="align model labels and vote")
    s.add_argument("--assignments", required=True)
    s.add_argument("--out", required=True)

    s = sub.add_parser("explain", parents=[common], help="surrogate classifier and SHAP rankings")
    s.add_argument("--matrix", required=True)
    s.add_argument("--consensus", required=True)
    s.add_argument("--selection", help="restrict to the kept features of a selection file")
    s.add_argument("--out", required=True)

    s = sub.add_parser("characterize", parents=[common], help="intel verdicts, profiles and report")
    s.add_argument("--consensus", required=True)
    s.add_argument("--matrix", required=True)
    s.add_argument("--intel", required=True)
    s.add_argument("--dataset", required=True)
    s.add_argument("--explain", required=True)
    s.add_argument("--out", required=True)

    s = sub.add_parser("run", parents=[common], help="run every stage from a config file")
    s.add_argument("--mode", choices=("fixture", "live"), default="fixture")
    s.add_argument("--k", default="auto")
    s.add_argument("--out", required=True)
    return p


def _config(args):
    overrides = {"seed": args.seed}
    if getattr(args, "threshold", None) is not None:
        overrides["corr_threshold"] = args.threshold
    if getattr(args, "k_range", None):
        overrides["k_min"], overrides["k_max"] = _k_range(args.k_range)
    if getattr(args, "keywords", None):
        overrides["required_keywords"] = tuple(k.strip().lower() for k in args.keywords.split(",") if k.strip())
    if getattr(args, "date_from", None):
        overrides["window_start"] = _date("window", args.date_from)
    if getattr(args, "date_to", None):
        overrides["window_end"] = _date("window", args.date_to)
    return resolve_config(args.config, **overrides)


def _stage(args, cfg):
    """Run one stage; returns (inputs, outputs) for the manifest."""
    cmd = args.command
    if cmd == "ingest":
        domains = args.domains or cfg.domains_file
        if not domains:
            raise ConfigError("domains_file", "pass --domains or set domains_file")
        intel = args.intel or cfg.intel_file or None
        outs = stage_ingest(cfg, domains, args.out, intel, args.intel_out)
        return [domains] + ([intel] if intel else []), outs
    if cmd == "featurize":
        fixtures = args.fixtures or cfg.fixtures_dir or None
        outs = stage_featurize(cfg, args.dataset, args.out, args.mode, fixtures, args.jobs, args.whois_dir)
        return [args.dataset], outs
    if cmd == "select":
        return [args.matrix], stage_select(args.matrix, cfg.corr_threshold, args.out)
    if cmd == "cluster":
        k = _k_value(args.k)
        return [args.scaled, args.gower], stage_cluster(args.scaled, args.gower, args.out, k,
                                                         cfg.k_range, cfg.seed)
    if cmd == "consensus":
        return [args.assignments], stage_consensus(args.assignments, args.out, cfg.seed)
    if cmd == "explain":
        ins = [args.matrix, args.consensus] + ([args.selection] if args.selection else [])
        return ins, stage_explain(args.matrix, args.consensus, args.out, cfg.seed, args.selection)
    if cmd == "characterize":
        ins = [args.consensus, args.matrix, args.intel, args.dataset, args.explain]
        man = RunManifest(cfg.digest(), {"characterize": cfg.seed}).to_dict()
        return ins, stage_characterize(cfg, args.consensus, args.matrix, args.intel, args.dataset,
                                       args.explain, args.out, man)
    raise ConfigError("command", f"unknown command {cmd!r}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        if args.command == "run":
            report, _ = run_pipeline(cfg, args.out, args.mode, _k_value(args.k), args.jobs, args.manifest_out)
            print(report)
            return OK
        try:
            ins, outs = _stage(args, cfg)
        except ConfigError:
            raise
        except (CampaignLensError, ValueError, OSError, KeyError) as exc:
            raise StageError(args.command, exc) from exc
        if args.manifest_out:
            man = RunManifest(cfg.digest(), {args.command: cfg.seed})
            man.record(args.command, ins, outs)
            man.write(args.manifest_out)
    except ConfigError as exc:
        print(f"campaign-lens: config error: {exc.key}: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    except StageError as exc:
        print(f"campaign-lens: {exc.stage}: {exc.cause}", file=sys.stderr)
        return STAGE_FAILURE
    return OK


if __name__ == "__main__":
    sys.exit(main())

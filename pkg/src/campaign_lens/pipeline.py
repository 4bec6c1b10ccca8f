"""File-based stage functions and the end-to-end runner.

Every stage reads the previous stage's files and writes its own, so each
one can be rerun on its own. ``run_all`` chains them and records a manifest
with content digests of every input and output.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .characterize import (
    build_profiles, cluster_intel_table, directory_digest, flag_table, format_intel_line,
    indicator_summary, render_report, transition_table, verdicts_by_domain,
)
from .cluster import (
    evaluate_k_range, fit_models, gower_distance, pca_project, read_assignments, read_distance,
    write_assignments, write_distance,
)
from .consensus import consensus, read_consensus, write_consensus
from .core import CampaignLensError, ConfigBundle, ConfigError, Dataset, apply_env, load_config
from .explain import Hyperparams, read_summary, shap_values, summarize, train_surrogate, write_explain
from .featurize import (
    FixtureMode, LiveMode, featurize_all, mask_path, read_matrix, read_whois, write_matrix,
)
from .ingest import (
    IngestFilter, load_domains, load_intel, read_dataset, registration_trend, save_dataset,
)
from .selection import (
    pearson_matrix, prune_correlated, read_scaled, read_selection, standardize, write_correlation,
    write_scaled, write_selection,
)

log = logging.getLogger(__name__)

STAGES = ("ingest", "featurize", "select", "cluster", "consensus", "explain", "characterize")


class StageError(CampaignLensError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause


def file_digest(path) -> str:
    p = Path(path)
    if p.is_dir():
        return directory_digest(p)
    return hashlib.sha256(p.read_bytes()).hexdigest()


@dataclass
class StageRecord:
    name: str
    inputs: dict[str, str]
    outputs: dict[str, str]


@dataclass
class RunManifest:
    config_hash: str
    seeds: dict[str, int]
    tool_version: str = __version__
    stages: list[StageRecord] = field(default_factory=list)

    def record(self, name: str, inputs, outputs, root: Path | None = None) -> StageRecord:
        def rel(p):
            p = Path(p)
            if root is not None:
                try:
                    return p.resolve().relative_to(root.resolve()).as_posix()
                except ValueError:
                    pass
            return p.name

        rec = StageRecord(name, {rel(p): file_digest(p) for p in inputs},
                          {rel(p): file_digest(p) for p in outputs})
        self.stages.append(rec)
        return rec

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def read_manifest(path) -> RunManifest:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    stages = [StageRecord(**s) for s in doc.pop("stages")]
    return RunManifest(stages=stages, **doc)


# --------------------------------------------------------------------------
# Stages
# --------------------------------------------------------------------------

def stage_ingest(cfg: ConfigBundle, domains_path, out_path, intel_path=None, intel_out=None) -> list[Path]:
    filt = IngestFilter(cfg.required_keywords, (cfg.window_start, cfg.window_end))
    ds = load_domains(domains_path, filt, live_statuses=cfg.live_statuses)
    if not len(ds):
        raise ValueError(f"no domains in {domains_path} pass the keyword and window filter")
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(ds, out_path)
    written = [out_path]
    if intel_path is not None:
        records = load_intel(intel_path)
        intel_out = Path(intel_out or out_path.with_name(out_path.stem + "_intel.txt"))
        intel_out.write_text("".join(format_intel_line(r) + "\n" for r in records), encoding="utf-8")
        written.append(intel_out)
    return written


def _whois_dir(directory, ds: Dataset):
    out = {}
    for r in ds:
        p = Path(directory) / r.domain.raw / "whois.txt"
        if p.is_file():
            out[r.domain.raw] = read_whois(p, r.domain)
    return out


def stage_featurize(cfg: ConfigBundle, dataset_path, out_path, mode: str = "fixture",
                    fixtures_dir=None, jobs: int = 1, whois_dir=None) -> list[Path]:
    ds = read_dataset(dataset_path)
    if mode == "fixture":
        if not fixtures_dir:
            raise ConfigError("fixtures_dir", "fixture mode needs a fixture directory")
        fetch_mode = FixtureMode(Path(fixtures_dir))
        whois = None
    elif mode == "live":
        fetch_mode = LiveMode(parallelism=max(1, jobs))
        whois = _whois_dir(whois_dir, ds) if whois_dir else None
    else:
        raise ConfigError("mode", f"unknown fetch mode {mode!r}")
    matrix = featurize_all(ds, cfg, fetch_mode, whois)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_matrix(matrix, out_path)
    return [out_path, mask_path(out_path)]


def select_outputs(out_path) -> dict[str, Path]:
    out_path = Path(out_path)
    d = out_path.parent
    return {"selection": out_path, "correlation": d / "correlation.csv",
            "scaled": d / "scaled.csv", "gower": d / "gower.csv"}


def stage_select(matrix_path, threshold: float, out_path) -> list[Path]:
    m = read_matrix(matrix_path)
    corr = pearson_matrix(m)
    sel = prune_correlated(corr, threshold)
    paths = select_outputs(out_path)
    paths["selection"].parent.mkdir(parents=True, exist_ok=True)
    write_selection(sel, threshold, paths["selection"])
    write_correlation(corr, paths["correlation"])
    write_scaled(standardize(m, sel), m.domains, paths["scaled"])
    write_distance(gower_distance(m, sel), m.domains, paths["gower"])
    return list(paths.values())


def stage_cluster(scaled_path, gower_path, out_dir, k="auto", k_range=range(2, 11), seed: int = 40) -> list[Path]:
    domains, scaled = read_scaled(scaled_path)
    gdomains, gower = read_distance(gower_path)
    if gdomains != domains:
        raise ValueError("scaled matrix and Gower matrix list different domains")
    report = None
    if k == "auto":
        report, fits = evaluate_k_range(scaled, gower, k_range, seed)
        chosen = report.consensus_k
        log.info("automatic k selection: per-model %s, consensus k=%d", report.chosen, chosen)
        models = fits[chosen]
    else:
        models = fit_models(scaled, gower, int(k), seed)
    pca = pca_project(scaled.values) if scaled.values.shape[1] >= 2 else None
    write_assignments(out_dir, domains, models, report, pca)
    return [Path(out_dir)]


def stage_consensus(assign_dir, out_path, seed: int = 40) -> list[Path]:
    domains, assignments = read_assignments(assign_dir)
    _, votes, result = consensus(assignments, seed)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_consensus(out_path, domains, votes, result)
    return [out_path]


def stage_explain(matrix_path, consensus_path, out_dir, seed: int = 40, selection_path=None) -> list[Path]:
    m = read_matrix(matrix_path)
    domains, _, result = read_consensus(consensus_path, seed)
    if list(m.domains) != domains:
        raise ValueError("feature matrix and consensus list different domains")
    if selection_path is not None:
        m = m.take(read_selection(selection_path).kept)
    X = m.values
    model, metrics, _, test_idx = train_surrogate(X, result.final_labels, Hyperparams(), seed,
                                                  list(m.catalog.ids))
    shap = shap_values(model, X[test_idx])
    summary = summarize(shap, X[test_idx])
    write_explain(out_dir, model, metrics, shap, summary, [domains[i] for i in test_idx])
    return [Path(out_dir)]


def stage_characterize(cfg: ConfigBundle, consensus_path, matrix_path, intel_path, dataset_path,
                       explain_dir, out_dir, manifest: dict | None) -> list[Path]:
    ds = read_dataset(dataset_path)
    m = read_matrix(matrix_path)
    domains, votes, result = read_consensus(consensus_path, cfg.seed)
    if domains != ds.domains or list(m.domains) != domains:
        raise ValueError("dataset, feature matrix and consensus list different domains")
    records = load_intel(intel_path)
    labels = result.final_labels
    verdicts = verdicts_by_domain(records, domains, threshold=cfg.intel_threshold)
    profiles = build_profiles(labels, m, ds, verdicts)
    tables = {
        "cluster_sizes": {str(c): n for c, n in result.sizes().items()},
        "tie_rows": list(result.tie_rows),
        "intel_verdicts": cluster_intel_table(labels, domains, verdicts),
        "flags_iqs": flag_table(labels, domains, records, stage="IQS", threshold=cfg.intel_threshold),
        "flags_fes": flag_table(labels, domains, records, stage="FES", threshold=cfg.intel_threshold),
        "parking_transitions": transition_table(records, labels, domains, source="ipqs"),
        "indicators": indicator_summary(labels, m, ds),
    }
    explain = read_summary(explain_dir) if explain_dir is not None and Path(explain_dir).is_dir() else None
    render_report(out_dir, profiles, tables, explain, manifest, registration_trend(ds))
    return [Path(out_dir)]


# --------------------------------------------------------------------------
# End to end
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RunLayout:
    root: Path

    def __getattr__(self, name):
        files = {
            "dataset": "dataset.tsv", "intel": "dataset_intel.txt", "matrix": "matrix.csv",
            "selection": "select/selection.json", "assignments": "assignments",
            "consensus": "consensus.csv", "explain": "explain", "report": "report",
            "manifest": "manifest.json",
        }
        if name in files:
            return self.root / files[name]
        raise AttributeError(name)


def _run(stage: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ConfigError:
        raise
    except (CampaignLensError, ValueError, OSError, KeyError) as exc:
        raise StageError(stage, exc) from exc


def run_pipeline(cfg: ConfigBundle, out_dir, mode: str = "fixture", k="auto", jobs: int = 1,
                 manifest_out=None) -> tuple[Path, RunManifest]:
    """Run every stage into ``out_dir``; raises StageError or ConfigError."""
    if not cfg.domains_file:
        raise ConfigError("domains_file", "no domain list configured")
    if not cfg.intel_file:
        raise ConfigError("intel_file", "no intel snapshot configured")
    lay = RunLayout(Path(out_dir))
    lay.root.mkdir(parents=True, exist_ok=True)
    seed = cfg.seed
    man = RunManifest(cfg.digest(), {"cluster": seed, "consensus": seed, "explain": seed})
    root = lay.root

    outs = _run("ingest", stage_ingest, cfg, cfg.domains_file, lay.dataset, cfg.intel_file, lay.intel)
    man.record("ingest", [cfg.domains_file, cfg.intel_file], outs, root)

    fixtures = Path(cfg.fixtures_dir) if cfg.fixtures_dir else None
    outs = _run("featurize", stage_featurize, cfg, lay.dataset, lay.matrix, mode, fixtures, jobs)
    man.record("featurize", [lay.dataset] + ([fixtures] if fixtures else []), outs, root)

    outs = _run("select", stage_select, lay.matrix, cfg.corr_threshold, lay.selection)
    man.record("select", [lay.matrix], outs, root)

    sel = select_outputs(lay.selection)
    outs = _run("cluster", stage_cluster, sel["scaled"], sel["gower"], lay.assignments, k, cfg.k_range, seed)
    man.record("cluster", [sel["scaled"], sel["gower"]], outs, root)

    outs = _run("consensus", stage_consensus, lay.assignments, lay.consensus, seed)
    man.record("consensus", [lay.assignments], outs, root)

    outs = _run("explain", stage_explain, lay.matrix, lay.consensus, lay.explain, seed, lay.selection)
    man.record("explain", [lay.matrix, lay.consensus, lay.selection], outs, root)

    snapshot = man.to_dict()
    outs = _run("characterize", stage_characterize, cfg, lay.consensus, lay.matrix, lay.intel,
                lay.dataset, lay.explain, lay.report, snapshot)
    man.record("characterize", [lay.consensus, lay.matrix, lay.intel, lay.dataset, lay.explain], outs, root)

    man.write(manifest_out or lay.manifest)
    return lay.report, man


def resolve_config(config_path=None, environ=None, **overrides) -> ConfigBundle:
    cfg = load_config(config_path) if config_path else ConfigBundle()
    cfg = apply_env(cfg, environ)
    changes = {key: value for key, value in overrides.items() if value is not None}
    return cfg.replace(**changes) if changes else cfg


def run_all(config_path, mode: str = "fixture", out_dir="campaign_lens_run", seed: int | None = None,
            jobs: int = 1, manifest_out=None, environ=None) -> tuple[int, Path | None]:
    """Exit code (0 ok, 1 stage failure, 2 config error) and the report directory."""
    try:
        cfg = resolve_config(config_path, environ, seed=seed)
        report, _ = run_pipeline(cfg, out_dir, mode, jobs=jobs, manifest_out=manifest_out)
    except ConfigError as exc:
        log.error("config error in key %r: %s", exc.key, exc)
        return 2, None
    except StageError as exc:
        log.error("%s", exc)
        return 1, None
    return 0, report


def report_digest(report_dir) -> str:
    return directory_digest(report_dir)


__all__ = [
    "STAGES", "RunManifest", "StageError", "file_digest", "read_manifest", "report_digest",
    "resolve_config", "run_all", "run_pipeline", "stage_characterize", "stage_cluster",
    "stage_consensus", "stage_explain", "stage_featurize", "stage_ingest", "stage_select",
]

"""Threat-intel verdicts, per-cluster profiles and report rendering."""

from __future__ import annotations

import csv
import hashlib
import json
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import CampaignLensError

STAGES = ("IQS", "FES")
FLAGS = ("spamming", "malware", "phishing", "suspicious", "parking")
VT_STATUSES = ("malicious", "suspicious", "clean", "not_found")


class ReportError(CampaignLensError):
    pass


@dataclass(frozen=True)
class IntelRecord:
    domain: str
    source: str = "ipqs"
    stage: str = "IQS"
    spamming: bool = False
    malware: bool = False
    phishing: bool = False
    suspicious: bool = False
    parking: bool = False
    risk_score: int = 0
    vt_status: str | None = None

    def __post_init__(self):
        if not 0 <= self.risk_score <= 100:
            raise ValueError(f"risk score {self.risk_score} outside 0..100")
        if self.stage not in STAGES:
            raise ValueError(f"stage must be IQS or FES, got {self.stage!r}")
        if self.vt_status is not None and self.vt_status not in VT_STATUSES:
            raise ValueError(f"unknown vt status {self.vt_status!r}")


def _bit(key: str, text: str) -> bool:
    t = text.lower()
    if t in ("1", "true"):
        return True
    if t in ("0", "false"):
        return False
    raise ValueError(f"{key} must be 0 or 1, got {text!r}")


def parse_intel_line(line: str) -> IntelRecord:
    """Parse ``domain=<d> source=<s> stage=<IQS|FES> <flag>=<0|1> ... risk=<0..100> [vt=<status>]``."""
    fields: dict[str, str] = {}
    for token in line.split():
        key, sep, value = token.partition("=")
        if not sep:
            raise ValueError(f"expected key=value, got {token!r}")
        fields[key] = value
    if "risk_score" in fields and "risk" not in fields:
        fields["risk"] = fields.pop("risk_score")
    for key in ("domain", "stage", "risk"):
        if not fields.get(key):
            raise ValueError(f"missing mandatory field {key!r}")
    unknown = set(fields) - {"domain", "source", "stage", "risk", "vt", *FLAGS}
    if unknown:
        raise ValueError(f"unknown fields {sorted(unknown)}")
    try:
        risk = int(fields["risk"])
    except ValueError:
        raise ValueError(f"risk must be an integer, got {fields['risk']!r}") from None
    return IntelRecord(
        domain=fields["domain"].lower(),
        source=fields.get("source", "ipqs").lower(),
        stage=fields["stage"].upper(),
        risk_score=risk,
        vt_status=fields.get("vt"),
        **{f: _bit(f, fields[f]) for f in FLAGS if f in fields},
    )


def format_intel_line(r: IntelRecord) -> str:
    parts = [f"domain={r.domain}", f"source={r.source}", f"stage={r.stage}"]
    parts += [f"{f}={int(getattr(r, f))}" for f in FLAGS]
    parts.append(f"risk={r.risk_score}")
    if r.vt_status:
        parts.append(f"vt={r.vt_status}")
    return " ".join(parts)


# --------------------------------------------------------------------------
# Verdicts
# --------------------------------------------------------------------------

MALICIOUS, BENIGN, UNKNOWN = "malicious", "benign", "unknown"


@dataclass(frozen=True)
class IntelVerdict:
    domain: str
    verdict: str


def classify_intel(r: IntelRecord, threshold: int = 75) -> IntelVerdict:
    """Malicious iff some threat flag is set and the risk score reaches the threshold."""
    flagged = r.spamming or r.malware or r.phishing or r.suspicious
    return IntelVerdict(r.domain, MALICIOUS if flagged and r.risk_score >= threshold else BENIGN)


def verdicts_by_domain(records: Iterable[IntelRecord], domains: Sequence[str], source: str = "ipqs",
                       threshold: int = 75) -> dict[str, IntelVerdict]:
    """One verdict per domain from the given source, preferring the IQS-stage record."""
    best: dict[str, IntelRecord] = {}
    for r in records:
        if r.source != source:
            continue
        prev = best.get(r.domain)
        if prev is None or (prev.stage != "IQS" and r.stage == "IQS"):
            best[r.domain] = r
    return {d: classify_intel(best[d], threshold) if d in best else IntelVerdict(d, UNKNOWN)
            for d in domains}


def pct(count: int, total: int) -> float:
    return 100.0 * count / total if total else 0.0


def cluster_intel_table(labels: Sequence[int], domains: Sequence[str],
                        verdicts: Mapping[str, IntelVerdict]) -> dict:
    """Per-cluster malicious counts; unknown verdicts stay out of the percentage denominator."""
    rows: dict = {}
    for lab, dom in zip(labels, domains):
        row = rows.setdefault(int(lab), {"size": 0, MALICIOUS: 0, BENIGN: 0, UNKNOWN: 0})
        row["size"] += 1
        row[verdicts.get(dom, IntelVerdict(dom, UNKNOWN)).verdict] += 1
    out = {}
    for lab in sorted(rows):
        row = rows[lab]
        known = row[MALICIOUS] + row[BENIGN]
        out[lab] = {**row, "known": known, "malicious_pct": pct(row[MALICIOUS], known)}
    total = {key: sum(r[key] for r in rows.values()) for key in ("size", MALICIOUS, BENIGN, UNKNOWN)}
    known = total[MALICIOUS] + total[BENIGN]
    out["all"] = {**total, "known": known, "malicious_pct": pct(total[MALICIOUS], known)}
    return out


def flag_table(labels: Sequence[int], domains: Sequence[str], records: Iterable[IntelRecord],
               source: str = "ipqs", stage: str = "IQS", threshold: int = 75) -> dict:
    """Counts of each flag, high-risk scores and VT statuses per cluster for one source and stage."""
    by_domain = {}
    for r in records:
        if r.source == source and r.stage == stage:
            by_domain[r.domain] = r
    keys = list(FLAGS) + ["high_risk"] + [f"vt_{s}" for s in VT_STATUSES]
    out: dict = {}
    groups: dict = defaultdict(list)
    for lab, dom in zip(labels, domains):
        groups[int(lab)].append(dom)
    for lab in sorted(groups) + ["all"]:
        doms = [d for g in groups.values() for d in g] if lab == "all" else groups[lab]
        counts = Counter()
        for d in doms:
            r = by_domain.get(d)
            if r is None:
                continue
            counts["observed"] += 1
            for f in FLAGS:
                counts[f] += int(getattr(r, f))
            counts["high_risk"] += int(r.risk_score >= threshold)
            if r.vt_status:
                counts[f"vt_{r.vt_status}"] += 1
        out[lab] = {"size": len(doms), "observed": counts["observed"],
                    **{k: counts[k] for k in keys}}
    return out


# --------------------------------------------------------------------------
# Parking transitions
# --------------------------------------------------------------------------

TRANSITION_KEYS = ("parked_iqs", "parked_fes", "parked_to_live", "live_to_parked", "parked_both",
                   "single_stage")


def transition_table(records: Iterable[IntelRecord], labels: Sequence[int], domains: Sequence[str],
                     source: str | None = None) -> dict:
    """Parked/live movement between the two observation stages, per cluster plus an ``all`` row.

    A domain observed at only one stage adds to that stage's parked column
    (if parked) and to ``single_stage``, never to the transition columns.
    """
    parked: dict[str, dict[str, bool]] = defaultdict(dict)
    for r in records:
        if source is not None and r.source != source:
            continue
        parked[r.domain][r.stage] = parked[r.domain].get(r.stage, False) or r.parking
    table = {int(lab): dict.fromkeys(TRANSITION_KEYS, 0) for lab in sorted(set(map(int, labels)))}
    for lab, dom in zip(labels, domains):
        row = table[int(lab)]
        stages = parked.get(dom)
        if not stages:
            continue
        iqs, fes = stages.get("IQS"), stages.get("FES")
        row["parked_iqs"] += int(bool(iqs))
        row["parked_fes"] += int(bool(fes))
        if iqs is None or fes is None:
            row["single_stage"] += 1
            continue
        row["parked_to_live"] += int(iqs and not fes)
        row["live_to_parked"] += int(fes and not iqs)
        row["parked_both"] += int(iqs and fes)
    table["all"] = {k: sum(r[k] for r in list(table.values())) for k in TRANSITION_KEYS}
    return table


# --------------------------------------------------------------------------
# Cluster profiles
# --------------------------------------------------------------------------

PAGE_BUCKETS = ((0, 1, "0-1"), (2, 5, "2-5"), (6, 10, "6-10"), (11, 20, "11-20"), (21, None, "21+"))
KEYWORD_FEATURES = {"help": "f9", "war": "f11", "for_to": "f12", "4_2": "f13",
                    "crypto": "f28", "bank": "f29"}


@dataclass
class ClusterProfile:
    cluster: int
    size: int
    malicious: int = 0
    malicious_fraction: float = 0.0
    tld_counts: dict[str, int] = field(default_factory=dict)
    cctld_counts: dict[str, int] = field(default_factory=dict)
    page_histogram: dict[str, int] = field(default_factory=dict)
    single_page_fraction: float = 0.0
    landing_size_mean: float = 0.0
    single_page_size_cdf: list[tuple[float, float]] = field(default_factory=list)
    keyword_fractions: dict[str, float] = field(default_factory=dict)
    monthly_creations: dict[str, int] = field(default_factory=dict)


def _bucket(pages: float) -> str:
    for lo, hi, name in PAGE_BUCKETS:
        if pages >= lo and (hi is None or pages <= hi):
            return name
    return PAGE_BUCKETS[-1][2]


def empirical_cdf(values: Iterable[float]) -> list[tuple[float, float]]:
    """Sorted (value, cumulative fraction) pairs; repeated values collapse to one point."""
    vals = sorted(float(v) for v in values)
    n = len(vals)
    out: list[tuple[float, float]] = []
    for i, v in enumerate(vals, 1):
        if out and out[-1][0] == v:
            out[-1] = (v, i / n)
        else:
            out.append((v, i / n))
    return out


def build_profiles(labels: Sequence[int], matrix, ds, verdicts: Mapping[str, IntelVerdict] | None = None
                   ) -> list[ClusterProfile]:
    """Per-cluster TLD, page-count, landing-size, keyword and creation-month tables.

    ``matrix`` must carry the full feature catalog in dataset order.
    """
    labels = np.asarray(labels, dtype=int)
    records = list(ds)
    if len(records) != len(labels) or list(matrix.domains) != [r.domain.raw for r in records]:
        raise ReportError("consensus, feature matrix and dataset rows disagree")
    f18, f20 = matrix.column("f18"), matrix.column("f20")
    content_missing = matrix.mask[:, matrix.catalog.index("f20")]
    profiles = []
    for c in sorted(set(labels.tolist())):
        rows = np.flatnonzero(labels == c)
        p = ClusterProfile(cluster=c, size=len(rows))
        recs = [records[i] for i in rows]
        p.tld_counts = dict(sorted(Counter(r.domain.public_suffix for r in recs).items()))
        cc = Counter(r.domain.labels[-1] for r in recs if len(r.domain.labels[-1]) == 2)
        p.cctld_counts = dict(sorted(cc.items()))
        hist = Counter("unknown" if content_missing[i] else _bucket(f20[i]) for i in rows)
        p.page_histogram = {name: hist.get(name, 0) for *_, name in PAGE_BUCKETS}
        if hist.get("unknown"):
            p.page_histogram["unknown"] = hist["unknown"]
        seen = [i for i in rows if not content_missing[i]]
        single = [i for i in seen if f20[i] <= 1]
        p.single_page_fraction = len(single) / len(seen) if seen else 0.0
        p.landing_size_mean = float(np.mean(f18[seen])) if seen else 0.0
        p.single_page_size_cdf = empirical_cdf(f18[single])
        for name, fid in KEYWORD_FEATURES.items():
            col = matrix.column(fid)
            j = matrix.catalog.index(fid)
            valid = [i for i in rows if not matrix.mask[i, j]]
            p.keyword_fractions[name] = float(np.mean(col[valid] > 0)) if valid else 0.0
        p.monthly_creations = dict(sorted(Counter(r.first_seen.strftime("%Y-%m") for r in recs).items()))
        if verdicts is not None:
            known = [verdicts[r.domain.raw].verdict for r in recs
                     if r.domain.raw in verdicts and verdicts[r.domain.raw].verdict != UNKNOWN]
            p.malicious = sum(v == MALICIOUS for v in known)
            p.malicious_fraction = p.malicious / len(known) if known else 0.0
        profiles.append(p)
    return profiles


def indicator_summary(labels: Sequence[int], matrix, ds) -> dict:
    """Per-cluster means of the campaign indicators: cheap TLD, hyphens, name length,
    TLD badness, bank tokens, landing size, page count and event keywords."""
    labels = np.asarray(labels, dtype=int)
    length = np.array([len(r.domain.lexical_string) for r in ds], dtype=float)
    event = (matrix.values[:, [matrix.catalog.index(f) for f in ("f8", "f9", "f10", "f11")]] > 0).any(axis=1)
    cols = {
        "cheap_tld": matrix.column("f14"),
        "hyphen_count": matrix.column("f6"),
        "domain_length": length,
        "tld_badness": matrix.column("f16"),
        "bank_token": matrix.column("f29"),
        "landing_size_kb": matrix.column("f18"),
        "page_count": matrix.column("f20"),
        "event_keyword": event.astype(float),
    }
    out = {}
    for c in sorted(set(labels.tolist())):
        rows = labels == c
        out[str(c)] = {name: float(v[rows].mean()) for name, v in cols.items()}
    return out


# --------------------------------------------------------------------------
# Report
# --------------------------------------------------------------------------

def _round(obj, ndigits: int = 10):
    if isinstance(obj, float):
        return round(obj, ndigits)
    if isinstance(obj, dict):
        return {str(k): _round(v, ndigits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v, ndigits) for v in obj]
    if isinstance(obj, np.generic):
        return _round(obj.item(), ndigits)
    return obj


def _write_series(path: Path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.10g}" if isinstance(v, float) else v for v in row])


def render_report(out_dir, profiles: list[ClusterProfile] | None, tables: Mapping | None,
                  explain_summary: Mapping | None, manifest: Mapping | None,
                  trend=None) -> Path:
    """Write ``report.json`` plus one plot-ready CSV per figure analog; returns the report path."""
    for stage, artifact in (("characterize", profiles), ("characterize", tables),
                            ("explain", explain_summary), ("cli", manifest)):
        if artifact is None:
            raise ReportError(f"missing upstream artifact from stage {stage!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = {
        "clusters": {str(p.cluster): {"size": p.size} for p in profiles},
        "profiles": [asdict(p) for p in profiles],
        "tables": tables,
        "explain": explain_summary,
        "manifest": manifest,
    }
    path = out / "report.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_round(report), fh, indent=2, sort_keys=True)
        fh.write("\n")

    _write_series(out / "page_counts.csv", ["cluster", "bucket", "count"],
                  [(p.cluster, b, n) for p in profiles for b, n in p.page_histogram.items()])
    _write_series(out / "single_page_size_cdf.csv", ["cluster", "size_kb", "cumulative_fraction"],
                  [(p.cluster, v, f) for p in profiles for v, f in p.single_page_size_cdf])
    _write_series(out / "monthly_creations.csv", ["cluster", "month", "count"],
                  [(p.cluster, m, n) for p in profiles for m, n in p.monthly_creations.items()])
    _write_series(out / "tld_distribution.csv", ["cluster", "suffix", "count"],
                  [(p.cluster, t, n) for p in profiles for t, n in p.tld_counts.items()])
    _write_series(out / "cctld_distribution.csv", ["cluster", "cctld", "count"],
                  [(p.cluster, t, n) for p in profiles for t, n in p.cctld_counts.items()])
    if trend is not None:
        _write_series(out / "registration_trend.csv", ["date", "count"],
                      [(d.isoformat(), n) for d, n in trend.points])
    return path


def directory_digest(path) -> str:
    """sha256 over every file under ``path`` (relative names and contents, sorted)."""
    root = Path(path)
    h = hashlib.sha256()
    for f in sorted(p for p in root.rglob("*") if p.is_file()):
        h.update(f.relative_to(root).as_posix().encode())
        h.update(b"\0")
        h.update(f.read_bytes())
        h.update(b"\0")
    return h.hexdigest()

"""Loading, filtering and deduplicating domain lists and recorded intel snapshots."""

from __future__ import annotations

import csv
import datetime as dt
import io
import logging
from dataclasses import dataclass

from .characterize import IntelRecord, parse_intel_line
from .core import (CampaignLensError, Dataset, DomainParseError, ManualVerdict,
                   PublicSuffixList, WebsiteRecord, parse_domain)

log = logging.getLogger(__name__)


class IngestError(CampaignLensError, ValueError):
    def __init__(self, path, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class IngestFilter:
    required_keywords: tuple[str, ...]
    window: tuple[dt.date, dt.date]

    def __post_init__(self):
        if self.window[0] > self.window[1]:
            raise ValueError("filter window start is after its end")
        object.__setattr__(self, "required_keywords",
                           tuple(k.strip().lower() for k in self.required_keywords if k.strip()))

    def accepts(self, registrable_part: str, first_seen: dt.date) -> bool:
        if not self.window[0] <= first_seen <= self.window[1]:
            return False
        if not self.required_keywords:
            return True
        return any(k in registrable_part for k in self.required_keywords)


@dataclass(frozen=True)
class RegistrationSeries:
    points: tuple[tuple[dt.date, int], ...]

    @property
    def total(self) -> int:
        return sum(c for _, c in self.points)


def _split_row(line: str) -> list[str]:
    if "\t" in line:
        return [c.strip() for c in line.split("\t")]
    if "," in line:
        return next(csv.reader(io.StringIO(line)))
    return line.split()


def load_domains(path, filt: IngestFilter, suffixes: PublicSuffixList | None = None,
                 live_statuses=("ok", "redirect_followed")) -> Dataset:
    """Read ``domain, first_seen[, probe_status]`` rows into a filtered, deduplicated Dataset.

    Duplicate domains keep their earliest ``first_seen``. Output is sorted by
    (first_seen, domain) so the result does not depend on input row order.
    A missing probe status counts as live.
    """
    earliest: dict[str, tuple[dt.date, object, bool]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            cols = _split_row(line)
            if lineno == 1 and cols[0].lower() == "domain":
                continue
            if len(cols) < 2:
                raise IngestError(path, lineno, "expected at least (domain, first_seen)")
            try:
                domain = parse_domain(cols[0], suffixes)
            except DomainParseError as exc:
                raise IngestError(path, lineno, str(exc)) from None
            try:
                seen = dt.date.fromisoformat(cols[1].strip())
            except ValueError:
                raise IngestError(path, lineno, f"bad ISO date {cols[1]!r}") from None
            is_live = len(cols) < 3 or not cols[2] or cols[2].strip().lower() in live_statuses
            if not filt.accepts(domain.registrable_part, seen):
                continue
            prev = earliest.get(domain.raw)
            if prev is None or seen < prev[0]:
                earliest[domain.raw] = (seen, domain, is_live)
            elif seen == prev[0] and is_live and not prev[2]:
                earliest[domain.raw] = (seen, domain, True)
    records = sorted(
        (WebsiteRecord(domain=d, first_seen=s, is_live=live) for s, d, live in earliest.values()),
        key=lambda r: (r.first_seen, r.domain.raw),
    )
    if not records:
        log.warning("empty dataset after filtering %s", path)
    return Dataset(records=tuple(records), window=filt.window)


def load_intel(path) -> list[IntelRecord]:
    """Read a line-delimited intel snapshot. Records are ordered by (domain, stage, source)."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                out.append(parse_intel_line(line))
            except ValueError as exc:
                raise IngestError(path, lineno, str(exc)) from None
    out.sort(key=lambda r: (r.domain, r.stage, r.source))
    return out


def registration_trend(ds: Dataset) -> RegistrationSeries:
    """Daily counts of first-seen dates over the dataset window, zero-filled."""
    if not len(ds):
        raise ValueError("registration trend of an empty dataset")
    counts: dict[dt.date, int] = {}
    for rec in ds:
        counts[rec.first_seen] = counts.get(rec.first_seen, 0) + 1
    start = min(ds.window[0], min(counts))
    end = max(ds.window[1], max(counts))
    points = []
    day = start
    while day <= end:
        points.append((day, counts.get(day, 0)))
        day += dt.timedelta(days=1)
    return RegistrationSeries(tuple(points))


# -- dataset files passed between pipeline stages ---------------------------

_DATASET_HEADER = ["domain", "first_seen", "is_live", "snapshot_id", "whois_id", "manual_verdict"]


def save_dataset(ds: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# window {ds.window[0].isoformat()} {ds.window[1].isoformat()}\n")
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(_DATASET_HEADER)
        for r in ds:
            w.writerow([r.domain.raw, r.first_seen.isoformat(), int(r.is_live),
                        r.snapshot_id or "", r.whois_id or "",
                        r.manual_verdict.value if r.manual_verdict else ""])


def read_dataset(path, suffixes: PublicSuffixList | None = None) -> Dataset:
    window = None
    records = []
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        if first.startswith("# window"):
            _, _, a, b = first.split()
            window = (dt.date.fromisoformat(a), dt.date.fromisoformat(b))
        else:
            fh.seek(0)
        reader = csv.DictReader(fh, delimiter="\t")
        for row in reader:
            records.append(WebsiteRecord(
                domain=parse_domain(row["domain"], suffixes),
                first_seen=dt.date.fromisoformat(row["first_seen"]),
                is_live=row["is_live"] == "1",
                snapshot_id=row["snapshot_id"] or None,
                whois_id=row["whois_id"] or None,
                manual_verdict=ManualVerdict(row["manual_verdict"]) if row["manual_verdict"] else None,
            ))
    if window is None:
        if not records:
            raise ValueError(f"{path}: dataset file has no window header and no rows")
        dates = [r.first_seen for r in records]
        window = (min(dates), max(dates))
    return Dataset(tuple(records), window)

"""Feature extraction (f1..f34) from domain names, landing pages and WHOIS data."""

from __future__ import annotations

import concurrent.futures
import csv
import enum
import functools
import logging
import re
import socket
import ssl
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from html.parser import HTMLParser
from pathlib import Path
from typing import Callable, Mapping, Sequence
from urllib.parse import urljoin, urlsplit

import numpy as np

from .core import (BINARY, COUNT, CampaignLensError, ConfigBundle, Dataset, DomainName,
                   FeatureCatalog, catalog_default, data_path, read_list_file,
                   try_parse_domain)

log = logging.getLogger(__name__)

CONTENT_IDS = [f"f{i}" for i in range(17, 31)]


class FixtureError(CampaignLensError, FileNotFoundError):
    pass


class FetchStatus(str, enum.Enum):
    OK = "ok"
    REDIRECT_FOLLOWED = "redirect_followed"
    ERROR = "error"


@dataclass(frozen=True)
class SiteSnapshot:
    domain: DomainName
    fetch_status: FetchStatus
    final_url: str = ""
    landing_body: bytes = b""
    ssl_retrievable: bool = False
    internal_links: frozenset = frozenset()
    external_links: frozenset = frozenset()
    stage: str = "FES"
    error_code: int | None = None

    def __post_init__(self):
        if self.internal_links & self.external_links:
            raise ValueError("internal and external link sets overlap")

    @property
    def landing_size_kb(self) -> float:
        return len(self.landing_body) / 1024

    @property
    def ok(self) -> bool:
        return self.fetch_status is not FetchStatus.ERROR


@dataclass(frozen=True)
class WhoisRecord:
    domain: DomainName
    registrar: str | None = None
    name_servers: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "name_servers",
                           tuple(h.strip().lower().rstrip(".") for h in self.name_servers if h.strip()))


@dataclass
class FeatureMatrix:
    """n x l feature values in catalog column order, with a missing-value mask."""

    catalog: FeatureCatalog
    domains: list[str]
    values: np.ndarray
    mask: np.ndarray
    provenance: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.mask = np.asarray(self.mask, dtype=bool)
        n, l = self.values.shape
        if l != len(self.catalog) or self.mask.shape != (n, l) or len(self.domains) != n:
            raise ValueError("feature matrix shape does not match catalog/domains")

    @property
    def shape(self):
        return self.values.shape

    def column(self, fid: str) -> np.ndarray:
        return self.values[:, self.catalog.index(fid)]

    def take(self, ids: Sequence[str]) -> "FeatureMatrix":
        idx = [self.catalog.index(i) for i in ids]
        return FeatureMatrix(self.catalog.subset(ids), list(self.domains),
                             self.values[:, idx], self.mask[:, idx], list(self.provenance))

    def kinds(self) -> list[str]:
        return [e.kind for e in self.catalog]


# --------------------------------------------------------------------------
# Lexical and TLD features
# --------------------------------------------------------------------------

@functools.lru_cache(maxsize=1)
def default_wordlist() -> frozenset[str]:
    return frozenset(read_list_file(data_path("wordlist.txt")))


def count_dictionary_words(text: str, words: frozenset[str] | None = None,
                           min_len: int = 3, max_len: int = 20) -> int:
    """Greedy longest-match segmentation; counts matched words of length >= min_len."""
    if words is None:
        words = default_wordlist()
    count, i, n = 0, 0, len(text)
    while i < n:
        for j in range(min(n, i + max_len), i + min_len - 1, -1):
            if text[i:j] in words:
                count += 1
                i = j
                break
        else:
            i += 1
    return count


def _has_any(text: str, keywords: Sequence[str]) -> int:
    return int(any(k and k in text for k in keywords))


def extract_lexical(d: DomainName, cfg: ConfigBundle | None = None,
                    words: frozenset[str] | None = None) -> list[float]:
    cfg = cfg or ConfigBundle()
    s = d.lexical_string
    n = len(s)
    digits = sum(c.isdigit() for c in s)
    left_labels = d.labels[:-d.suffix_labels]
    return [
        sum(c in "aeiouy" for c in s),
        count_dictionary_words(s, words),
        len(set(s)),
        sum("a" <= c <= "z" for c in s),
        digits / n if n else 0.0,
        s.count("-"),
        int(any(lab.startswith("xn--") for lab in left_labels)),
        _has_any(s, cfg.kw_fundraising),
        _has_any(s, cfg.kw_help),
        _has_any(s, cfg.kw_cause),
        _has_any(s, cfg.kw_war),
        _has_any(s, cfg.kw_for_to),
        _has_any(s, cfg.kw_digit_words),
    ]


def tld_badness(suffix: str, scores: Mapping[str, float]) -> float | None:
    """Score for the full suffix, else for its top-level label, else None."""
    if suffix in scores:
        return scores[suffix]
    return scores.get(suffix.rsplit(".", 1)[-1])


def extract_tld(d: DomainName, cfg: ConfigBundle) -> list[float]:
    score = tld_badness(d.public_suffix, cfg.badness)
    return [
        int(d.public_suffix in cfg.cheap_tlds),
        int(d.suffix_labels >= 2),
        0.0 if score is None else float(score),
    ]


# --------------------------------------------------------------------------
# Landing page parsing
# --------------------------------------------------------------------------

_LINK_ATTRS = {"a": "href", "area": "href", "form": "action", "frame": "src", "iframe": "src"}
_SKIP_SCHEMES = ("mailto:", "tel:", "javascript:", "data:", "sms:")


class _PageParser(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.links: list[str] = []
        self.text: list[str] = []
        self._hidden = 0

    def handle_starttag(self, tag, attrs):
        if tag in ("script", "style"):
            self._hidden += 1
        target = _LINK_ATTRS.get(tag)
        for name, value in attrs:
            if value is None:
                continue
            if name == target:
                self.links.append(value.strip())
            self.text.append(value)

    def handle_endtag(self, tag):
        if tag in ("script", "style") and self._hidden:
            self._hidden -= 1

    def handle_data(self, data):
        if not self._hidden:
            self.text.append(data)


def parse_page(body: bytes) -> tuple[list[str], str]:
    """Return (link targets, landing text) for an HTML body."""
    p = _PageParser()
    p.feed(body.decode("utf-8", errors="replace"))
    p.close()
    return p.links, " ".join(p.text)


def _same_site(host: str, domain: DomainName) -> bool:
    parsed = try_parse_domain(host)
    if parsed is not None:
        return parsed.site == domain.site
    return host == domain.raw or host.endswith("." + domain.site)


def classify_links(links: Sequence[str], domain: DomainName, base_url: str) -> tuple[frozenset, frozenset]:
    """Split raw link targets into (internal, external) relative to the queried domain."""
    internal, external = set(), set()
    for raw in links:
        if not raw or raw.startswith("#") or raw.lower().startswith(_SKIP_SCHEMES):
            continue
        parts = urlsplit(urljoin(base_url, raw))
        if parts.scheme not in ("http", "https") or not parts.hostname:
            continue
        (internal if _same_site(parts.hostname, domain) else external).add(raw)
    return frozenset(internal), frozenset(external)


def _snapshot_from_body(domain, status, final_url, body, ssl_ok, stage="FES") -> SiteSnapshot:
    links, _ = parse_page(body)
    internal, external = classify_links(links, domain, final_url)
    return SiteSnapshot(domain, status, final_url, body, ssl_ok, internal, external, stage)


# --------------------------------------------------------------------------
# Fetching
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FixtureMode:
    directory: Path

    def __post_init__(self):
        object.__setattr__(self, "directory", Path(self.directory))


def _default_urls(domain: DomainName) -> list[str]:
    return [f"https://{domain.raw}/", f"http://{domain.raw}/"]


def probe_certificate(host: str, timeout: float) -> bool:
    """True when a TLS handshake on port 443 yields a peer certificate (validity not checked)."""
    ctx = ssl.create_default_context()
    ctx.check_hostname = False
    ctx.verify_mode = ssl.CERT_NONE
    try:
        with socket.create_connection((host, 443), timeout=timeout) as sock:
            with ctx.wrap_socket(sock, server_hostname=host) as tls:
                return bool(tls.getpeercert(binary_form=True))
    except (OSError, ssl.SSLError):
        return False


@dataclass(frozen=True)
class LiveMode:
    timeout: float = 10.0
    max_redirects: int = 5
    parallelism: int = 8
    max_bytes: int = 5 * 1024 * 1024
    url_for: Callable[[DomainName], list[str]] = _default_urls
    ssl_probe: Callable[[str, float], bool] = probe_certificate
    stage: str = "FES"


def _kv_file(path: Path) -> dict[str, list[str]]:
    out: dict[str, list[str]] = {}
    for line in path.read_text(encoding="utf-8", errors="replace").splitlines():
        line = line.strip()
        if not line or line.startswith(("#", "%")):
            continue
        m = re.match(r"^([^:=]+?)\s*[:=]\s*(.*)$", line)
        if not m:
            continue
        key = re.sub(r"[\s_-]+", "", m.group(1).lower())
        out.setdefault(key, []).append(m.group(2).strip())
    return out


def _flag(text: str) -> bool:
    return text.strip().lower() in ("1", "true", "yes", "y", "ok")


def read_whois(path, domain: DomainName) -> WhoisRecord:
    """Parse a key-value WHOIS file: ``registrar`` plus any number of name-server lines."""
    kv = _kv_file(Path(path))
    registrar = next((v for v in kv.get("registrar", []) if v), None)
    servers: list[str] = []
    for key in ("nameserver", "nameservers", "nserver", "ns"):
        for v in kv.get(key, []):
            servers.extend(h for h in re.split(r"[,\s]+", v) if h)
    seen = []
    for h in servers:
        h = h.lower().rstrip(".")
        if h not in seen:
            seen.append(h)
    return WhoisRecord(domain, registrar, tuple(seen))


def _fixture_status(text: str) -> tuple[FetchStatus, int | None]:
    parts = text.strip().lower().split()
    if not parts:
        return FetchStatus.OK, None
    head = parts[0]
    if head.isdigit():
        code = int(head)
        return (FetchStatus.OK, None) if code < 400 else (FetchStatus.ERROR, code)
    if head == "error":
        return FetchStatus.ERROR, int(parts[1]) if len(parts) > 1 and parts[1].isdigit() else None
    if head.startswith("redirect"):
        return FetchStatus.REDIRECT_FOLLOWED, None
    return FetchStatus.OK, None


def fetch_fixture(domain: DomainName, mode: FixtureMode) -> SiteSnapshot:
    site_dir = mode.directory / domain.raw
    meta_path = site_dir / "meta"
    if not meta_path.is_file():
        raise FixtureError(f"fixture metadata missing: {meta_path}")
    meta = {k: v[-1] for k, v in _kv_file(meta_path).items()}
    status, code = _fixture_status(meta.get("status", "ok"))
    stage = meta.get("stage", "FES").upper()
    if status is FetchStatus.ERROR:
        return SiteSnapshot(domain, status, stage=stage, error_code=code)
    page = site_dir / "page.html"
    if not page.is_file():
        raise FixtureError(f"fixture page missing: {page}")
    final_url = meta.get("finalurl") or f"http://{domain.raw}/"
    host = urlsplit(final_url).hostname or ""
    if status is FetchStatus.OK and not _same_site(host, domain):
        status = FetchStatus.REDIRECT_FOLLOWED
    return _snapshot_from_body(domain, status, final_url, page.read_bytes(),
                               _flag(meta.get("ssl", "0")), stage)


def fixture_whois(domain: DomainName, mode: FixtureMode) -> WhoisRecord | None:
    path = mode.directory / domain.raw / "whois.txt"
    return read_whois(path, domain) if path.is_file() else None


class _LimitedRedirects(urllib.request.HTTPRedirectHandler):
    def __init__(self, limit: int):
        super().__init__()
        self.max_redirections = limit


def fetch_live(domain: DomainName, mode: LiveMode) -> SiteSnapshot:
    opener = urllib.request.build_opener(_LimitedRedirects(mode.max_redirects))
    last_code = None
    for url in mode.url_for(domain):
        try:
            with opener.open(url, timeout=mode.timeout) as resp:
                body = resp.read(mode.max_bytes)
                final_url = resp.geturl()
        except urllib.error.HTTPError as exc:
            last_code = exc.code
            continue
        except (urllib.error.URLError, OSError, ValueError) as exc:
            log.debug("fetch %s failed: %s", url, exc)
            continue
        status = FetchStatus.OK if final_url == url else FetchStatus.REDIRECT_FOLLOWED
        ssl_ok = mode.ssl_probe(domain.raw, mode.timeout)
        return _snapshot_from_body(domain, status, final_url, body, ssl_ok, mode.stage)
    return SiteSnapshot(domain, FetchStatus.ERROR, stage=mode.stage, error_code=last_code)


def fetch_site(domain: DomainName, mode) -> SiteSnapshot:
    if isinstance(mode, FixtureMode):
        return fetch_fixture(domain, mode)
    return fetch_live(domain, mode)


def fetch_all(domains: Sequence[DomainName], mode) -> list[SiteSnapshot]:
    """Fetch every domain; live mode uses a bounded pool with one request per host at a time."""
    if isinstance(mode, FixtureMode):
        return [fetch_fixture(d, mode) for d in domains]
    locks: dict[str, threading.Lock] = {d.site: threading.Lock() for d in domains}

    def work(d):
        with locks[d.site]:
            return fetch_live(d, mode)

    with concurrent.futures.ThreadPoolExecutor(max_workers=max(1, mode.parallelism)) as pool:
        return list(pool.map(work, domains))


# --------------------------------------------------------------------------
# Content and WHOIS features
# --------------------------------------------------------------------------

def _host_matches(url: str, base_url: str, entries: Sequence[str]) -> bool:
    parts = urlsplit(urljoin(base_url, url))
    host = (parts.hostname or "").lower()
    bare = host[4:] if host.startswith("www.") else host
    site = try_parse_domain(host)
    for entry in entries:
        if "/" in entry:
            if (bare + parts.path).startswith(entry):
                return True
        elif host == entry or host.endswith("." + entry) or (site is not None and site.site == entry):
            return True
    return False


def extract_content(s: SiteSnapshot, cfg: ConfigBundle) -> list[float]:
    if not s.ok:
        raise ValueError(f"no content for {s.domain.raw}: fetch failed")
    base = s.final_url or f"http://{s.domain.raw}/"
    ext = sorted(s.external_links)
    n_ext = len(ext)
    lengths = np.array([len(u) for u in ext], dtype=float)
    final_host = urlsplit(base).hostname or ""
    _, text = parse_page(s.landing_body)
    tokens = set(re.findall(r"[a-z0-9]+", text.lower()))
    return [
        int(s.ssl_retrievable),
        s.landing_size_kb,
        int(_same_site(final_host, s.domain)),
        len(s.internal_links),
        n_ext,
        float(lengths.mean()) if n_ext else 0.0,
        float(lengths.std()) if n_ext else 0.0,
        sum(_host_matches(u, base, cfg.shorteners) for u in ext) / n_ext if n_ext else 0.0,
        sum(_host_matches(u, base, cfg.social_domains) for u in ext) / n_ext if n_ext else 0.0,
        int(any(_host_matches(u, base, cfg.form_hosts) for u in ext)),
        int(any(_host_matches(u, base, cfg.payment_domains) for u in ext)),
        int(any(k in tokens for k in cfg.kw_crypto)),
        int(any(k in tokens for k in cfg.kw_bank)),
        int(any(k in tokens for k in cfg.kw_card)),
    ]


def extract_whois(w: WhoisRecord | None, d: DomainName) -> list[float]:
    if w is None:
        return [0, 0, 0, 0]
    self_resolving = False
    for host in w.name_servers:
        ns = try_parse_domain(host)
        if ns is not None and ns.site == d.site:
            self_resolving = True
    return [int(bool(w.registrar)), int(len(w.name_servers) > 0), int(self_resolving),
            len(w.name_servers)]


def feature_vector(d: DomainName, snapshot: SiteSnapshot, whois: WhoisRecord | None,
                   cfg: ConfigBundle) -> tuple[list[float], bool]:
    """34 values in catalog order plus a flag telling whether content was available."""
    content = extract_content(snapshot, cfg) if snapshot.ok else [0.0] * len(CONTENT_IDS)
    row = extract_lexical(d, cfg) + extract_tld(d, cfg) + content + extract_whois(whois, d)
    return [float(v) for v in row], snapshot.ok


def featurize_all(ds: Dataset, cfg: ConfigBundle, mode,
                  whois: Mapping[str, WhoisRecord] | None = None) -> FeatureMatrix:
    if not len(ds):
        raise ValueError("cannot featurize an empty dataset")
    catalog = catalog_default()
    domains = [r.domain for r in ds]
    snapshots = fetch_all(domains, mode)
    content_cols = [catalog.index(f) for f in CONTENT_IDS]
    values = np.zeros((len(domains), len(catalog)))
    mask = np.zeros_like(values, dtype=bool)
    provenance = []
    missing_scores = set()
    scores = cfg.badness
    for i, (d, snap) in enumerate(zip(domains, snapshots)):
        if isinstance(mode, FixtureMode):
            w = fixture_whois(d, mode)
        else:
            w = (whois or {}).get(d.raw)
        row, ok = feature_vector(d, snap, w, cfg)
        values[i] = row
        if not ok:
            mask[i, content_cols] = True
        if tld_badness(d.public_suffix, scores) is None:
            missing_scores.add(d.public_suffix)
        status = snap.fetch_status.value
        if snap.error_code is not None:
            status += f" {snap.error_code}"
        provenance.append((d.raw, status))
    if missing_scores:
        log.warning("no badness score for suffixes %s; using 0.0", ", ".join(sorted(missing_scores)))
    return FeatureMatrix(catalog, [d.raw for d in domains], values, mask, provenance)


# --------------------------------------------------------------------------
# Matrix files
# --------------------------------------------------------------------------

def _fmt(value: float, kind: str) -> str:
    if kind in (BINARY, COUNT):
        return str(int(value))
    return repr(float(value))


def mask_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".mask")


def write_matrix(m: FeatureMatrix, path) -> None:
    """Write values as delimited text plus a ``.mask`` sidecar; floats round-trip exactly."""
    kinds = m.kinds()
    header = ["domain"] + m.catalog.ids
    with open(path, "w", encoding="utf-8", newline="") as fh, \
            open(mask_path(path), "w", encoding="utf-8", newline="") as mh:
        w = csv.writer(fh, lineterminator="\n")
        mw = csv.writer(mh, lineterminator="\n")
        w.writerow(header)
        mw.writerow(header)
        for dom, row, mrow in zip(m.domains, m.values, m.mask):
            w.writerow([dom] + [_fmt(v, k) for v, k in zip(row, kinds)])
            mw.writerow([dom] + [int(x) for x in mrow])


def read_matrix(path) -> FeatureMatrix:
    full = catalog_default()
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    ids = rows[0][1:]
    catalog = full.subset(ids)
    if catalog.ids != ids:
        raise ValueError(f"{path}: columns not in catalog order")
    domains = [r[0] for r in rows[1:]]
    values = np.array([[float(x) for x in r[1:]] for r in rows[1:]]).reshape(len(domains), len(ids))
    mpath = mask_path(path)
    if mpath.is_file():
        with open(mpath, encoding="utf-8") as fh:
            mrows = list(csv.reader(fh))[1:]
        mask = np.array([[x == "1" for x in r[1:]] for r in mrows], dtype=bool).reshape(values.shape)
    else:
        mask = np.zeros(values.shape, dtype=bool)
    return FeatureMatrix(catalog, domains, values, mask)

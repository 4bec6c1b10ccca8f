"""Shared domain types, domain-name parsing, the feature catalog and run configuration."""

from __future__ import annotations

import dataclasses
import datetime as dt
import enum
import functools
import hashlib
import os
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping


class CampaignLensError(Exception):
    """Base class for all package errors."""


class DomainParseError(CampaignLensError, ValueError):
    pass


class ConfigError(CampaignLensError, ValueError):
    def __init__(self, key: str, message: str = "invalid configuration key"):
        super().__init__(f"{message}: {key}")
        self.key = key


def data_path(name: str) -> Path:
    """Path of a file shipped in the package ``data`` directory."""
    return Path(str(resources.files("campaign_lens") / "data" / name))


def read_list_file(path: str | os.PathLike) -> list[str]:
    """Read a one-item-per-line list; blank lines and ``#`` comments are skipped."""
    items = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                items.append(line)
    return items


# --------------------------------------------------------------------------
# Public suffixes and domain names
# --------------------------------------------------------------------------

_LABEL_RE = re.compile(r"^[a-z0-9](?:[a-z0-9-]{0,61}[a-z0-9])?$")


class PublicSuffixList:
    """Longest-match public suffix lookup over a PSL-format snapshot.

    Wildcard (``*.ck``) and exception (``!www.ck``) rules follow the usual
    PSL semantics. Unlike the PSL default rule, a name whose TLD matches no
    rule is rejected rather than treated as a one-label suffix.
    """

    def __init__(self, rules: Iterable[str]):
        self.exact: set[str] = set()
        self.wildcard: set[str] = set()
        self.exception: set[str] = set()
        for rule in rules:
            rule = rule.strip().lower()
            if not rule or rule.startswith("//"):
                continue
            rule = rule.split()[0]
            if rule.startswith("!"):
                self.exception.add(rule[1:])
            elif rule.startswith("*."):
                self.wildcard.add(rule[2:])
            else:
                self.exact.add(rule)

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "PublicSuffixList":
        with open(path, encoding="utf-8") as fh:
            # IDN rules are stored in Unicode; the parser only sees ASCII labels
            return cls(line for line in fh if line.isascii())

    def suffix_length(self, labels: tuple[str, ...]) -> int:
        """Number of trailing labels forming the public suffix (0 if none match)."""
        n = len(labels)
        for i in range(n):
            cand = ".".join(labels[i:])
            if cand in self.exception:
                return n - i - 1
            if cand in self.exact:
                return n - i
            if i + 1 < n and ".".join(labels[i + 1:]) in self.wildcard:
                return n - i
        return 0


@functools.lru_cache(maxsize=1)
def default_suffix_list() -> PublicSuffixList:
    return PublicSuffixList.from_file(data_path("public_suffix_list.dat"))


@dataclass(frozen=True)
class DomainName:
    raw: str
    labels: tuple[str, ...]
    registrable_part: str
    public_suffix: str

    @property
    def site(self) -> str:
        """Registrable domain (one label plus the public suffix)."""
        return self.labels[-self.suffix_labels - 1] + "." + self.public_suffix

    @property
    def suffix_labels(self) -> int:
        return self.public_suffix.count(".") + 1

    @property
    def lexical_string(self) -> str:
        """Everything left of the public suffix with dots removed."""
        return self.registrable_part.replace(".", "")

    def __str__(self) -> str:
        return self.raw


def parse_domain(raw: str, suffixes: PublicSuffixList | None = None) -> DomainName:
    """Parse and validate a hostname against the public-suffix snapshot."""
    if suffixes is None:
        suffixes = default_suffix_list()
    text = raw.strip().lower().rstrip(".")
    if not text or "." not in text:
        raise DomainParseError(f"not a dotted domain name: {raw!r}")
    labels = tuple(text.split("."))
    for label in labels:
        if not label or len(label) > 63 or not _LABEL_RE.match(label):
            raise DomainParseError(f"malformed label {label!r} in {raw!r}")
    n_suffix = suffixes.suffix_length(labels)
    if n_suffix == 0:
        raise DomainParseError(f"no public suffix matches label {labels[-1]!r} in {raw!r}")
    if n_suffix >= len(labels):
        raise DomainParseError(f"{raw!r} is itself a public suffix (label {labels[0]!r})")
    return DomainName(
        raw=text,
        labels=labels,
        registrable_part=".".join(labels[:-n_suffix]),
        public_suffix=".".join(labels[-n_suffix:]),
    )


def try_parse_domain(raw: str, suffixes: PublicSuffixList | None = None) -> DomainName | None:
    try:
        return parse_domain(raw, suffixes)
    except DomainParseError:
        return None


# --------------------------------------------------------------------------
# Records and datasets
# --------------------------------------------------------------------------


class ManualVerdict(str, enum.Enum):
    MALICIOUS_ACTIVITY = "malicious_activity"
    FAKE_CAMPAIGN = "fake_campaign"
    REDIRECTED = "redirected"
    PARKED = "parked"
    UNDER_CONSTRUCTION = "under_construction"
    COMPROMISED = "compromised"
    BENIGN = "benign"


@dataclass(frozen=True)
class WebsiteRecord:
    domain: DomainName
    first_seen: dt.date
    is_live: bool = True
    snapshot_id: str | None = None
    whois_id: str | None = None
    manual_verdict: ManualVerdict | None = None


@dataclass(frozen=True)
class Dataset:
    records: tuple[WebsiteRecord, ...]
    window: tuple[dt.date, dt.date]

    def __post_init__(self):
        seen = set()
        for rec in self.records:
            if rec.domain.raw in seen:
                raise ValueError(f"duplicate domain in dataset: {rec.domain.raw}")
            seen.add(rec.domain.raw)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def domains(self) -> list[str]:
        return [r.domain.raw for r in self.records]


# --------------------------------------------------------------------------
# Feature catalog
# --------------------------------------------------------------------------

LEXICAL, TLD, CONTENT, WHOIS = "lexical", "tld", "content", "whois"
BINARY, COUNT, RATIO, SCORE = "binary", "count", "ratio", "score"


@dataclass(frozen=True)
class FeatureSpec:
    id: str
    name: str
    category: str
    kind: str


_CATALOG = [
    ("f1", "domain_vowel_count", LEXICAL, COUNT),
    ("f2", "domain_keyword_count", LEXICAL, COUNT),
    ("f3", "domain_unique_char_count", LEXICAL, COUNT),
    ("f4", "domain_letter_count", LEXICAL, COUNT),
    ("f5", "domain_digit_rate", LEXICAL, RATIO),
    ("f6", "domain_hyphen_count", LEXICAL, COUNT),
    ("f7", "has_punycode", LEXICAL, BINARY),
    ("f8", "has_fundraising_keyword", LEXICAL, BINARY),
    ("f9", "has_help_keyword", LEXICAL, BINARY),
    ("f10", "has_cause_keyword", LEXICAL, BINARY),
    ("f11", "has_war_keyword", LEXICAL, BINARY),
    ("f12", "has_for_to", LEXICAL, BINARY),
    ("f13", "has_4_2", LEXICAL, BINARY),
    ("f14", "is_cheap_tld", TLD, BINARY),
    ("f15", "is_multi_label_tld", TLD, BINARY),
    ("f16", "tld_badness_score", TLD, SCORE),
    ("f17", "ssl_retrievable", CONTENT, BINARY),
    ("f18", "landing_page_size_kb", CONTENT, SCORE),
    ("f19", "same_landing_domain", CONTENT, BINARY),
    ("f20", "internal_page_count", CONTENT, COUNT),
    ("f21", "external_link_count", CONTENT, COUNT),
    ("f22", "external_link_len_mean", CONTENT, SCORE),
    ("f23", "external_link_len_std", CONTENT, SCORE),
    ("f24", "shortener_ratio", CONTENT, RATIO),
    ("f25", "social_media_ratio", CONTENT, RATIO),
    ("f26", "has_external_form", CONTENT, BINARY),
    ("f27", "has_paypal_link", CONTENT, BINARY),
    ("f28", "has_crypto_token", CONTENT, BINARY),
    ("f29", "has_bank_token", CONTENT, BINARY),
    ("f30", "has_card_token", CONTENT, BINARY),
    ("f31", "whois_registrar_available", WHOIS, BINARY),
    ("f32", "name_server_available", WHOIS, BINARY),
    ("f33", "self_resolving_name_server", WHOIS, BINARY),
    ("f34", "name_server_count", WHOIS, COUNT),
]


@dataclass(frozen=True)
class FeatureCatalog:
    entries: tuple[FeatureSpec, ...]

    def __post_init__(self):
        ids = [e.id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("feature ids must be unique")

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, fid: str) -> FeatureSpec:
        return self.entries[self.index(fid)]

    @property
    def ids(self) -> list[str]:
        return [e.id for e in self.entries]

    def index(self, fid: str) -> int:
        for i, e in enumerate(self.entries):
            if e.id == fid:
                return i
        raise KeyError(fid)

    def subset(self, ids: Iterable[str]) -> "FeatureCatalog":
        wanted = set(ids)
        return FeatureCatalog(tuple(e for e in self.entries if e.id in wanted))


def catalog_default() -> FeatureCatalog:
    return FeatureCatalog(tuple(FeatureSpec(*row) for row in _CATALOG))


# --------------------------------------------------------------------------
# Configuration
# --------------------------------------------------------------------------

_SOCIAL = (
    "facebook.com", "fb.com", "linkedin.com", "twitter.com", "x.com",
    "instagram.com", "whatsapp.com", "wa.me", "snapchat.com", "youtube.com",
    "youtu.be", "telegram.org", "t.me",
)


def _bundled_list(name: str) -> tuple[str, ...]:
    return tuple(read_list_file(data_path(name)))


def _bundled_scores(name: str) -> tuple[tuple[str, float], ...]:
    out = []
    for line in read_list_file(data_path(name)):
        suffix, score = line.split()
        out.append((suffix.lower(), float(score)))
    return tuple(out)


@dataclass(frozen=True)
class ConfigBundle:
    """Every tunable of a run. Lists are stored as tuples of lowercase strings."""

    kw_fundraising: tuple[str, ...] = (
        "money", "donate", "pay", "coin", "cash", "charity", "buy", "fund", "dollar")
    kw_help: tuple[str, ...] = ("help", "assist", "stand", "support", "aid", "save", "unite")
    kw_cause: tuple[str, ...] = ("art", "concert", "pray", "care", "build", "hope", "food")
    kw_war: tuple[str, ...] = (
        "war", "free", "fight", "tank", "weapon", "drone", "hero", "arm", "victory",
        "bullet", "gun")
    kw_for_to: tuple[str, ...] = ("for", "to")
    kw_digit_words: tuple[str, ...] = ("4", "2")
    kw_crypto: tuple[str, ...] = (
        "crypto", "block", "chain", "blockchain", "wallet", "nft", "coin", "thereum",
        "bitcoin", "altcoin", "btcc", "trx", "doge", "solana", "cardano", "usdc", "xrp",
        "tether", "usdt", "eth", "sol", "btc")
    kw_bank: tuple[str, ...] = (
        "bank", "banking", "monobank", "account", "acc", "accnt", "branch", "routing", "rout")
    kw_card: tuple[str, ...] = (
        "creditcard", "credit", "card", "mastercard", "debit", "visa", "cards",
        "kreditkarte", "kredit", "karte")
    cheap_tlds: tuple[str, ...] = field(default_factory=lambda: _bundled_list("cheap_tlds.txt"))
    tld_badness: tuple[tuple[str, float], ...] = field(
        default_factory=lambda: _bundled_scores("tld_badness.txt"))
    shorteners: tuple[str, ...] = field(default_factory=lambda: _bundled_list("shorteners.txt"))
    social_domains: tuple[str, ...] = _SOCIAL
    form_hosts: tuple[str, ...] = (
        "docs.google.com/forms", "forms.gle", "firebaseapp.com", "web.app")
    payment_domains: tuple[str, ...] = ("paypal.com", "paypal.me")
    required_keywords: tuple[str, ...] = ("ukraine", "ukrainian")
    window_start: dt.date = dt.date(2022, 2, 25)
    window_end: dt.date = dt.date(2022, 7, 25)
    live_statuses: tuple[str, ...] = ("ok", "redirect_followed")
    corr_threshold: float = 0.6
    k_min: int = 2
    k_max: int = 10
    seed: int = 40
    intel_threshold: int = 75
    domains_file: str = ""
    fixtures_dir: str = ""
    intel_file: str = ""

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if f.name == "tld_badness":
                items = [s for s, _ in value]
            elif isinstance(value, tuple):
                items = value
            else:
                continue
            for item in items:
                if item != item.lower():
                    raise ConfigError(f.name, "list entries must be lowercase")
        if not 0.0 < self.corr_threshold < 1.0:
            raise ConfigError("corr_threshold", "threshold must lie in (0, 1)")
        if self.k_min < 2 or self.k_max < self.k_min:
            raise ConfigError("k_range", "k-range must be nonempty with min >= 2")
        if self.window_start > self.window_end:
            raise ConfigError("window", "window start after end")
        if not 0 <= self.intel_threshold <= 100:
            raise ConfigError("intel_threshold", "threshold must lie in 0..100")

    @property
    def k_range(self) -> range:
        return range(self.k_min, self.k_max + 1)

    @property
    def badness(self) -> dict[str, float]:
        return dict(self.tld_badness)

    def replace(self, **changes) -> "ConfigBundle":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        """Serialize to the flat key-value format read by :func:`parse_config`."""
        lines = []
        for f in dataclasses.fields(self):
            if f.name in ("window_start", "window_end", "k_min", "k_max"):
                continue
            value = getattr(self, f.name)
            if f.name == "tld_badness":
                lines.append(f"{f.name}:")
                lines.extend(f"    {s} {score!r}" for s, score in value)
            elif isinstance(value, tuple):
                lines.append(f"{f.name}:")
                lines.extend(f"    {item}" for item in value)
            else:
                lines.append(f"{f.name} = {value}")
            if f.name == "required_keywords":
                lines.append(f"window = {self.window_start.isoformat()}..{self.window_end.isoformat()}")
            if f.name == "corr_threshold":
                lines.append(f"k_range = {self.k_min}..{self.k_max}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        """sha256 of every setting except input file locations, so moving a run does not change it."""
        text = "".join(line + "\n" for line in self.to_text().splitlines()
                       if line.split(" = ", 1)[0] not in _PATH_KEYS)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


_PATH_KEYS = ("domains_file", "fixtures_dir", "intel_file")
_LIST_KEYS = {f.name for f in dataclasses.fields(ConfigBundle)
              if str(f.type).startswith("tuple")}
_SCALAR_KEYS = {"corr_threshold", "seed", "intel_threshold", "domains_file",
                "fixtures_dir", "intel_file", "window", "k_range"}


def _parse_range(key: str, text: str, conv):
    try:
        lo, hi = text.split("..")
        return conv(lo.strip()), conv(hi.strip())
    except ValueError:
        raise ConfigError(key, f"expected 'lo..hi', got {text!r}") from None


def _apply_scalar(values: dict, key: str, text: str) -> None:
    try:
        if key == "window":
            values["window_start"], values["window_end"] = _parse_range(key, text, dt.date.fromisoformat)
        elif key == "k_range":
            values["k_min"], values["k_max"] = _parse_range(key, text, int)
        elif key == "corr_threshold":
            values[key] = float(text)
        elif key in ("seed", "intel_threshold"):
            values[key] = int(text)
        else:
            values[key] = text
    except ValueError:
        raise ConfigError(key, f"bad value {text!r}") from None


def parse_config(text: str, base_dir: str | os.PathLike | None = None) -> ConfigBundle:
    """Parse the flat key-value config format.

    ``key = value`` sets a scalar; ``key:`` opens a list whose items follow on
    indented lines. A list can also be read from a plain-text file with
    ``<list_key>_file = path``. Unknown keys raise :class:`ConfigError`.
    """
    values: dict = {}
    current: str | None = None
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].rstrip()
        if not stripped.strip():
            continue
        if line[:1].isspace():
            if current is None:
                raise ConfigError(f"line {lineno}", "list item outside a list")
            values[current].append(stripped.strip())
            continue
        current = None
        if "=" in stripped:
            key, _, value = stripped.partition("=")
            key, value = key.strip(), value.strip()
            if key.endswith("_file") and key[:-5] in _LIST_KEYS:
                path = Path(value)
                if base_dir is not None and not path.is_absolute():
                    path = Path(base_dir) / path
                values[key[:-5]] = read_list_file(path)
            elif key in _SCALAR_KEYS:
                _apply_scalar(values, key, value)
            else:
                raise ConfigError(key)
        elif stripped.endswith(":"):
            key = stripped[:-1].strip()
            if key not in _LIST_KEYS:
                raise ConfigError(key)
            current = key
            values[key] = []
        else:
            raise ConfigError(f"line {lineno}", "unparsable config line")
    for key in list(values):
        if key == "tld_badness":
            pairs = []
            for item in values[key]:
                try:
                    suffix, score = item.split()
                    pairs.append((suffix.lower(), float(score)))
                except ValueError:
                    raise ConfigError(key, f"bad score entry {item!r}") from None
            values[key] = tuple(pairs)
        elif key in _LIST_KEYS:
            values[key] = tuple(v.lower() for v in values[key])
    for key in ("domains_file", "fixtures_dir", "intel_file"):
        if values.get(key) and base_dir is not None and not Path(values[key]).is_absolute():
            values[key] = str(Path(base_dir) / values[key])
    return ConfigBundle(**values)


def load_config(path: str | os.PathLike) -> ConfigBundle:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), base_dir=path.parent)


ENV_PREFIX = "CAMPAIGN_LENS_"


def apply_env(cfg: ConfigBundle, environ: Mapping[str, str] | None = None) -> ConfigBundle:
    """Override scalar settings from ``CAMPAIGN_LENS_<KEY>`` environment variables."""
    environ = os.environ if environ is None else environ
    values: dict = {}
    for key in sorted(_SCALAR_KEYS):
        name = ENV_PREFIX + key.upper()
        if name in environ:
            _apply_scalar(values, key, environ[name])
    return cfg.replace(**values) if values else cfg

"""Clustering and characterization of event-themed website campaigns."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    CampaignLensError, ConfigBundle, ConfigError, Dataset, DomainName, DomainParseError,
    FeatureCatalog, ManualVerdict, WebsiteRecord, catalog_default, load_config, parse_domain,
)

__all__ = [
    "CampaignLensError", "ConfigBundle", "ConfigError", "Dataset", "DomainName", "DomainParseError",
    "FeatureCatalog", "ManualVerdict", "WebsiteRecord", "__version__", "catalog_default",
    "load_config", "parse_domain",
]

"""Lexical and TLD features for a handful of themed domain names.

Run: python demos/01_domain_features.py
"""
from campaign_lens import ConfigBundle, catalog_default, parse_domain
from campaign_lens.featurize import extract_lexical, extract_tld

cfg = ConfigBundle()
catalog = catalog_default()
names = ["donate4ukraine.com", "help-ukraine.org.ua", "xn--80ak6aa92e.com", "standwithukraine.tk"]

lex = [f for f in catalog if f.category == "lexical"]
tld = [f for f in catalog if f.category == "tld"]

for raw in names:
    d = parse_domain(raw)
    print(f"{raw}  (suffix {d.public_suffix!r}, registrable part {d.registrable_part!r})")
    values = list(zip(lex, extract_lexical(d, cfg))) + list(zip(tld, extract_tld(d, cfg)))
    for spec, value in values:
        if value:
            print(f"   {spec.id:>4} {spec.name:<28} {value:g}")

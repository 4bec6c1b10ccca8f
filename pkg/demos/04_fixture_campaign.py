"""End-to-end run over the bundled 20-site fixture corpus, then a tour of the report.

Run: python demos/04_fixture_campaign.py [output_dir]
"""
import json
import sys
import tempfile

from campaign_lens.core import data_path
from campaign_lens.pipeline import report_digest, run_all

out = sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="campaign_lens_")
code, report_dir = run_all(data_path("fixture_corpus") / "campaign.conf", out_dir=out, seed=40)
if code:
    sys.exit(code)

doc = json.loads((report_dir / "report.json").read_text())
tables = doc["tables"]
print("run directory:", out)
print("report digest:", report_digest(report_dir))
print("cluster sizes:", tables["cluster_sizes"])

print("\nIPQS verdicts (IQS stage)")
for cluster, row in tables["intel_verdicts"].items():
    print(f"  {cluster:>3}: {row['malicious']} malicious of {row['known']} known ({row['malicious_pct']}%)")

print("\nparked-page transitions between collection stages")
for cluster, row in tables["parking_transitions"].items():
    print(f"  {cluster:>3}: {row}")

print("\nper-cluster profile")
for p in doc["profiles"]:
    tlds = ", ".join(f"{t}:{c}" for t, c in sorted(p["tld_counts"].items()))
    print(f"  C{p['cluster']} size {p['size']}  single-page {p['single_page_fraction']:.2f}  tlds {tlds}")

print("\ntop surrogate feature per cluster")
for cluster, ranking in doc["explain"]["ranking"].items():
    top = ranking[0]
    print(f"  C{cluster}: {top['feature']} (mean |SHAP| {top['mean_abs_shap']:.3f}, direction {top['direction']:+d})")

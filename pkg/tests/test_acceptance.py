"""The eight acceptance criteria, each at its stated tolerance and runtime budget.

Every test prints one PASS/FAIL line; the lines are repeated in the pytest
terminal summary under "acceptance criteria".
"""

import itertools
import json
import time
from pathlib import Path

import numpy as np
import pytest

import oracles
from campaign_lens.characterize import (
    IntelRecord, MALICIOUS, BENIGN, build_profiles, classify_intel, cluster_intel_table,
    transition_table, verdicts_by_domain,
)
from campaign_lens.cluster import (
    ModelAssignment, euclidean_distance, gmm, kmeans, kmedoids,
    silhouette, upgma_tree,
)
from campaign_lens.consensus import consensus, read_consensus
from campaign_lens.core import catalog_default, data_path, load_config
from campaign_lens.explain import Hyperparams, fit_boosting, shap_values, train_surrogate
from campaign_lens.featurize import FeatureMatrix, FixtureMode, featurize_all, read_matrix, write_matrix
from campaign_lens.ingest import IngestFilter, load_domains, load_intel, read_dataset
from campaign_lens.pipeline import report_digest, run_all
from campaign_lens.selection import pearson_matrix, prune_correlated, restrict

ARCHETYPES = {
    1: ["donate-ukraine-4war.shop", "fund-ukraine-army4u.xyz", "fund-ukraine-hero4u.top",
        "cash-ukraine-hero4u.click", "coin-ukraine-arms4u.icu", "coin-ukraine-guns4u.site",
        "money-ukraine-4arms.live"],
    2: ["careforhomeukraine.org", "hopeforlifeukraine.org", "hopeforhomeukraine.com",
        "artforpeaceukraine.org", "foodforhomeukraine.org", "prayforlifeukraine.org"],
    3: ["xn--ukrainenewshelp-6of.com.ua", "xn--ukraineposthelp-9za.org.ua",
        "xn--ukrainecityhelp-8kb.kiev.ua", "xn--ukrainezonehelp-3bc.in.ua",
        "xn--helpnewsukraine-6of.com.ua", "xn--helppostukraine-6of.net.ua",
        "xn--helpcityukraine-8kb.com.ua"],
}

# counted by hand from the bundled intel snapshot
HAND_TRANSITIONS = {
    1: dict(parked_iqs=0, parked_fes=1, parked_to_live=0, live_to_parked=1, parked_both=0, single_stage=1),
    2: dict(parked_iqs=0, parked_fes=0, parked_to_live=0, live_to_parked=0, parked_both=0, single_stage=1),
    3: dict(parked_iqs=5, parked_fes=5, parked_to_live=1, live_to_parked=2, parked_both=3, single_stage=1),
    "all": dict(parked_iqs=5, parked_fes=6, parked_to_live=1, live_to_parked=3, parked_both=3, single_stage=3),
}
HAND_MALICIOUS = {1: 5, 2: 1, 3: 2, "all": 8}

# report digest of the seed-40 fixture run, frozen on first build; a mismatch on
# another platform means the report is not byte-portable
FROZEN_REPORT_DIGEST_FILE = Path(__file__).with_name("fixture_report.sha256")


def _random_feature_matrix(rng, n, l):
    cat = catalog_default().subset([f"f{j}" for j in range(1, l + 1)])
    cols = []
    for _ in range(l):
        kind = rng.integers(4)
        if kind == 0:
            cols.append(rng.normal(size=n))
        elif kind == 1:
            cols.append(rng.integers(0, 4, size=n).astype(float))
        elif kind == 2:
            base = cols[-1] if cols else rng.normal(size=n)
            cols.append(base * rng.uniform(-2, 2) + rng.normal(scale=0.3, size=n))
        else:
            cols.append(np.full(n, 1.5) if rng.random() < 0.3 else rng.exponential(size=n))
    values = np.column_stack(cols)
    return FeatureMatrix(cat, [f"d{i}.com" for i in range(n)], values, np.zeros_like(values, dtype=bool))


def _members(tree, n):
    sets = {i: frozenset([i]) for i in range(n)}
    out = []
    for step, (a, b, h, _) in enumerate(tree):
        out.append((sets[a], sets[b], h))
        sets[n + step] = sets[a] | sets[b]
    return out


# -- 1 ------------------------------------------------------------------------

def test_criterion_1_golden_feature_matrix(corpus_dir, tmp_path, verdict):
    t0 = time.perf_counter()
    cfg = load_config(corpus_dir / "campaign.conf")
    ds = load_domains(cfg.domains_file, IngestFilter(cfg.required_keywords, (cfg.window_start, cfg.window_end)),
                      live_statuses=cfg.live_statuses)
    m = featurize_all(ds, cfg, FixtureMode(cfg.fixtures_dir))
    write_matrix(m, tmp_path / "m.csv")
    elapsed = time.perf_counter() - t0

    golden = read_matrix(corpus_dir / "golden_matrix.csv")
    failures = []
    if m.values.shape != (20, 34):
        failures.append(f"shape {m.values.shape}")
    elif not (np.array_equal(m.values, golden.values) and m.domains == golden.domains):
        bad = np.argwhere(m.values != golden.values)
        failures.append(f"{len(bad)} cells differ from golden, first {bad[:3].tolist()}")
    if (tmp_path / "m.csv").read_bytes() != (corpus_dir / "golden_matrix.csv").read_bytes():
        failures.append("written matrix is not byte-identical to the golden file")
    zero = [fid for j, fid in enumerate(m.catalog.ids) if not np.any(m.values[:, j] != 0)]
    if zero:
        failures.append(f"features never nonzero: {zero}")
    if elapsed >= 5:
        failures.append(f"runtime {elapsed:.2f}s >= 5s")
    verdict(1, "golden 20x34 feature matrix", failures, elapsed)


# -- 2 ------------------------------------------------------------------------

def test_criterion_2_pearson_and_selection(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    failures = []
    worst = 0.0
    for trial in range(100):
        n, l = int(rng.integers(3, 51)), int(rng.integers(2, 9))
        m = _random_feature_matrix(rng, n, l)
        c = pearson_matrix(m)
        cols = [m.values[:, j].tolist() for j in range(l)]
        for i in range(l):
            for j in range(l):
                expect = 1.0 if i == j else oracles.pearson(cols[i], cols[j])
                worst = max(worst, abs(c.values[i, j] - expect))
        for th in (0.3, 0.6, 0.9):
            sel = prune_correlated(c, th)
            again = prune_correlated(restrict(c, sel.kept), th)
            if again.kept != sel.kept or again.dropped:
                failures.append(f"trial {trial}: pruning not idempotent at {th}")
    if worst > 1e-9:
        failures.append(f"max |r - oracle| = {worst:.3g}")

    for trial in range(100):
        n, l = int(rng.integers(3, 51)), int(rng.integers(2, 9))
        m = _random_feature_matrix(rng, n, l)
        src = int(rng.integers(l))
        if m.values[:, src].min() == m.values[:, src].max():
            m.values[:, src] = rng.normal(size=n)
        dst = int(rng.integers(src + 1, l + 1))
        values = np.insert(m.values, dst, m.values[:, src], axis=1)
        cat = catalog_default().subset([f"f{j}" for j in range(1, l + 2)])
        dup = FeatureMatrix(cat, m.domains, values, np.zeros_like(values, dtype=bool))
        sel = prune_correlated(pearson_matrix(dup), 0.6)
        later = cat.ids[dst]
        if later in sel.kept:
            failures.append(f"duplicate trial {trial}: later copy {later} kept")
        elif not any(d == later for d, _, _ in sel.dropped):
            failures.append(f"duplicate trial {trial}: {later} missing from dropped list")
    verdict(2, "Pearson oracle, duplicate drop, idempotent pruning", failures, time.perf_counter() - t0)


# -- 3 ------------------------------------------------------------------------

def test_criterion_3_clustering_oracles(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    failures = []
    for trial in range(25):
        n, dims, k = int(rng.integers(4, 9)), int(rng.integers(1, 3)), int(rng.integers(2, 4))
        x = rng.normal(size=(n, dims)) * rng.uniform(0.5, 3)
        got = kmeans(x, k, seed=40).diagnostics["sse"]
        best = oracles.global_min_sse(x.tolist(), k)
        if abs(got - best) > 1e-9 * max(1.0, best):
            failures.append(f"kmeans trial {trial}: sse {got:.6g} vs optimum {best:.6g}")

        D = euclidean_distance(rng.normal(size=(n, 2)))
        got = kmedoids(D, k).diagnostics["total_dissimilarity"]
        best = oracles.global_min_medoid_cost(D.values.tolist(), k)
        if abs(got - best) > 1e-9 * max(1.0, best):
            failures.append(f"kmedoids trial {trial}: cost {got:.6g} vs optimum {best:.6g}")

        pts = rng.normal(size=(n, 2))
        D = euclidean_distance(pts)
        ours = _members(upgma_tree(D), n)
        ref = oracles.upgma(D.values.tolist())
        for step, ((a, b, h), (ra, rb, rh)) in enumerate(zip(ours, ref)):
            if {a, b} != {ra, rb} or abs(h - rh) > 1e-9:
                failures.append(f"upgma trial {trial}: merge {step} differs")
                break

    for trial in range(50):
        n, dims, k = int(rng.integers(6, 41)), int(rng.integers(1, 4)), int(rng.integers(1, 5))
        x = rng.normal(size=(n, dims))
        x[: n // 2] += rng.uniform(0, 4)
        trace = np.asarray(gmm(x, k, seed=int(rng.integers(1000))).diagnostics["loglik_trace"])
        drop = np.diff(trace).min() if len(trace) > 1 else 0.0
        if drop < -1e-9:
            failures.append(f"gmm trial {trial}: log-likelihood fell by {-drop:.3g}")
    elapsed = time.perf_counter() - t0
    if elapsed >= 60:
        failures.append(f"runtime {elapsed:.1f}s >= 60s")
    verdict(3, "kmeans/kmedoids/UPGMA exhaustive oracles, GMM monotone", failures, elapsed)


# -- 4 ------------------------------------------------------------------------

def test_criterion_4_silhouette_oracle(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    failures = []
    worst = 0.0
    for _ in range(100):
        n, k = int(rng.integers(3, 41)), int(rng.integers(2, 6))
        labels = rng.integers(1, k + 1, size=n)
        if len(set(labels.tolist())) < 2:
            labels[0], labels[1] = 1, 2
        D = euclidean_distance(rng.normal(size=(n, int(rng.integers(1, 4)))))
        worst = max(worst, abs(silhouette(labels, D) - oracles.silhouette(labels.tolist(), D.values.tolist())))
    if worst > 1e-9:
        failures.append(f"max deviation {worst:.3g}")
    line = silhouette([1, 1, 2, 2], euclidean_distance(np.array([0.0, 1.0, 9.0, 10.0])))
    if abs(line - (1 - 1 / 9.5)) > 1e-12:
        failures.append(f"{{0,1,9,10}} gives {line!r}")
    verdict(4, "silhouette definitional oracle", failures, time.perf_counter() - t0)


# -- 5 ------------------------------------------------------------------------

def _random_models(rng, n, k):
    out = []
    for name in ("kmeans", "kmedoids", "hierarchical", "gmm"):
        labels = np.concatenate([np.arange(1, k + 1), rng.integers(1, k + 1, size=n - k)])
        rng.shuffle(labels)
        out.append(ModelAssignment(name, k, labels))
    return out


def test_criterion_5_consensus_invariance(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    failures = []
    for trial in range(100):
        n, k = int(rng.integers(5, 41)), int(rng.integers(2, 6))
        models = _random_models(rng, n, k)
        seed = int(rng.integers(10_000))
        _, votes, base = consensus(models, seed)
        if not np.all(votes.V.sum(axis=1) == len(models)):
            failures.append(f"trial {trial}: vote rows do not sum to m")
        which = int(rng.integers(len(models)))
        perm = rng.permutation(k) + 1
        relabeled = [ModelAssignment(a.model_id, k, perm[a.labels - 1]) if i == which else a
                     for i, a in enumerate(models)]
        _, _, again = consensus(relabeled, seed)
        if not np.array_equal(base.final_labels, again.final_labels) or base.tie_rows != again.tie_rows:
            failures.append(f"trial {trial}: relabeling {models[which].model_id} changed the result")
        _, _, repeat = consensus(models, seed)
        if not np.array_equal(base.final_labels, repeat.final_labels) or base.tie_rows != repeat.tie_rows:
            failures.append(f"trial {trial}: same seed gave a different tie resolution")
    verdict(5, "consensus permutation invariance and seeded ties", failures, time.perf_counter() - t0)


# -- 6 ------------------------------------------------------------------------

def _blobs(rng, n=300, dims=4):
    centres = np.array([[0.0] * dims, [5.0] + [0.0] * (dims - 1), [2.5, 4.5] + [0.0] * (dims - 2)])
    y = np.repeat([1, 2, 3], n // 3)
    x = centres[y - 1] + rng.normal(size=(n, dims))
    return x, y


def _shap_oracle_failures(model, X, label):
    failures = []
    sm = shap_values(model, X)
    l = X.shape[1]
    for ci in range(len(model.classes)):
        trees = [rt[ci] for rt in model.trees]
        for r, x in enumerate(X):
            def value(subset, x=x, trees=trees):
                return sum(oracles.tree_conditional_expectation(t, x, subset) for t in trees)
            ref = oracles.shapley(value, l)
            dev = np.abs(sm.values[ci, r] - ref).max()
            if dev > 1e-6:
                failures.append(f"{label}: class {ci} row {r} deviates {dev:.3g}")
                return failures
    return failures


def test_criterion_6_surrogate_and_shap(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    failures = []
    x, y = _blobs(rng)
    model, metrics, _, test_idx = train_surrogate(x, y, Hyperparams(), seed=40)
    if metrics.accuracy < 0.95:
        failures.append(f"held-out accuracy {metrics.accuracy:.3f} < 0.95")
    sm = shap_values(model, x)
    gap = np.abs(sm.values.sum(axis=2) + sm.base_values[:, None] - model.margin(x).T).max()
    if gap > 1e-6:
        failures.append(f"local accuracy gap {gap:.3g}")

    # exhaustive Shapley on small ensembles: up to 10 features, at most 3 trees per class margin
    for trial, (l, rounds, K, depth) in enumerate([(10, 1, 3, 3), (6, 3, 2, 3), (8, 2, 2, 4), (4, 3, 3, 2)]):
        X = rng.normal(size=(60, l))
        X[:, 0] = np.round(X[:, 0])
        yy = 1 + (X[:, 0] + X[:, 1] * X[:, 2 % l] > 0).astype(int) + (K == 3) * (X[:, 1] > 0.8)
        hp = Hyperparams(max_depth=depth, rounds=rounds, min_child_weight=0.5, gamma=0.0)
        m = fit_boosting(X, yy, hp, [f"x{j}" for j in range(l)])
        failures += _shap_oracle_failures(m, X[:4], f"fixture {trial}")
    elapsed = time.perf_counter() - t0
    if elapsed >= 120:
        failures.append(f"runtime {elapsed:.1f}s >= 120s")
    verdict(6, f"surrogate accuracy {metrics.accuracy:.3f}, SHAP local accuracy and exact Shapley",
            failures, elapsed)


# -- 7 and 8 share one pair of fixture runs -------------------------------------

@pytest.fixture(scope="module")
def fixture_runs(tmp_path_factory):
    cfg = data_path("fixture_corpus") / "campaign.conf"
    t0 = time.perf_counter()
    runs = [run_all(cfg, out_dir=tmp_path_factory.mktemp(f"run{i}"), seed=40) for i in range(2)]
    return runs, time.perf_counter() - t0


def test_criterion_7_characterization(corpus_dir, fixture_runs, verdict):
    t0 = time.perf_counter()
    failures = []
    threats = ("spamming", "malware", "phishing", "suspicious")
    for bits in itertools.product((False, True), repeat=len(threats)):
        for risk in (60, 75, 90):
            for parked in (False, True):
                r = IntelRecord(domain="x.com", source="ipqs", stage="IQS", risk_score=risk,
                                parking=parked, **dict(zip(threats, bits)))
                want = MALICIOUS if any(bits) and risk >= 75 else BENIGN
                if classify_intel(r).verdict != want:
                    failures.append(f"flags {bits} parking {parked} risk {risk}")

    records = load_intel(corpus_dir / "intel.txt")
    domains = [d for c in ARCHETYPES for d in ARCHETYPES[c]]
    labels = [c for c in ARCHETYPES for _ in ARCHETYPES[c]]
    table = transition_table(records, labels, domains)
    for key, want in HAND_TRANSITIONS.items():
        if table[key] != want:
            failures.append(f"transitions {key}: {table[key]} != {want}")
    intel = cluster_intel_table(labels, domains, verdicts_by_domain(records, domains))
    for key, want in HAND_MALICIOUS.items():
        if intel[key]["malicious"] != want:
            failures.append(f"malicious count {key}: {intel[key]['malicious']} != {want}")

    code, report = fixture_runs[0][0]
    if code != 0:
        failures.append(f"fixture run exited {code}")
    else:
        doc = json.loads((report / "report.json").read_text())
        for key, row in doc["tables"]["intel_verdicts"].items():
            known = row["malicious"] + row["benign"]
            if known != row["known"] or known + row["unknown"] != row["size"]:
                failures.append(f"intel row {key} counts inconsistent")
            if abs(row["malicious_pct"] - (100 * row["malicious"] / known if known else 0.0)) > 1e-9:
                failures.append(f"intel row {key} percentage does not recompute")
        for p in doc["profiles"]:
            if sum(p["page_histogram"].values()) != p["size"]:
                failures.append(f"profile {p['cluster']} page histogram total")
            known = doc["tables"]["intel_verdicts"][str(p["cluster"])]["known"]
            if abs(p["malicious_fraction"] - (p["malicious"] / known if known else 0.0)) > 1e-9:
                failures.append(f"profile {p['cluster']} malicious fraction does not recompute")
        sizes = doc["tables"]["cluster_sizes"]
        if sum(v for k, v in sizes.items() if k != "all") != 20:
            failures.append("cluster sizes do not total 20")

        ds = read_dataset(report.parent / "dataset.tsv")
        mat = read_matrix(report.parent / "matrix.csv")
        arche = [next(c for c in ARCHETYPES if r.domain.raw in ARCHETYPES[c]) for r in ds]
        for p in build_profiles(arche, mat, ds):
            if sum(p.tld_counts.values()) != p.size:
                failures.append(f"archetype {p.cluster} TLD counts")
    verdict(7, "IPQS truth table, transition hand counts, percentage recompute", failures,
            time.perf_counter() - t0)


def test_criterion_8_end_to_end(fixture_runs, verdict):
    (first, second), elapsed = fixture_runs
    failures = []
    if first[0] != 0 or second[0] != 0:
        failures.append(f"exit codes {first[0]}, {second[0]}")
        verdict(8, "end-to-end determinism", failures, elapsed)
    d1, d2 = report_digest(first[1]), report_digest(second[1])
    if d1 != d2:
        failures.append("report digests differ between consecutive runs")
    if FROZEN_REPORT_DIGEST_FILE.exists():
        frozen = FROZEN_REPORT_DIGEST_FILE.read_text().strip()
        if d1 != frozen:
            failures.append(f"digest {d1[:12]} differs from frozen {frozen[:12]}")
    else:
        failures.append("frozen digest file missing")
    doc = json.loads((first[1] / "report.json").read_text())
    k = len([c for c in doc["tables"]["cluster_sizes"] if c != "all"])
    if k != 3:
        failures.append(f"automatic k = {k}, constructed truth is 3")
    ds = read_dataset(first[1].parent / "dataset.tsv")
    doms, _, res = read_consensus(first[1].parent / "consensus.csv")
    truth = {d: c for c in ARCHETYPES for d in ARCHETYPES[c]}
    groups = {frozenset(d for d, h in zip(doms, res.final_labels) if h == c) for c in set(res.final_labels.tolist())}
    if groups != {frozenset(v) for v in ARCHETYPES.values()}:
        failures.append("consensus partition differs from the constructed archetypes")
    if len(ds) != len(truth):
        failures.append(f"dataset has {len(ds)} rows, expected {len(truth)}")
    if elapsed >= 180:
        failures.append(f"two runs took {elapsed:.1f}s >= 180s")
    verdict(8, f"run_all deterministic, automatic k={k}", failures, elapsed)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))

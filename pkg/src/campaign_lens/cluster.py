"""Clustering models, distances and k-selection diagnostics.

kmeans and gmm operate on z-scored euclidean space; kmedoids and the
average-linkage hierarchy consume a precomputed (Gower) distance matrix.
Every model returns labels in 1..k renumbered by first occurrence.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .core import BINARY
from .featurize import FeatureMatrix
from .selection import ScaledMatrix, SelectionResult

log = logging.getLogger(__name__)

MODELS = ("kmeans", "kmedoids", "hierarchical", "gmm")


@dataclass(frozen=True)
class DistanceMatrix:
    values: np.ndarray
    metric: str

    def __post_init__(self):
        v = self.values
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("distance matrix must be square")

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass
class ModelAssignment:
    model_id: str
    k: int
    labels: np.ndarray
    diagnostics: dict = field(default_factory=dict)
    seed: int | None = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=int)
        present = set(np.unique(self.labels).tolist())
        if present != set(range(1, self.k + 1)):
            raise ValueError(f"{self.model_id}: labels must cover 1..{self.k} with no empty cluster")

    @property
    def n(self) -> int:
        return len(self.labels)


def canonical_labels(labels) -> np.ndarray:
    """Renumber labels 1..k in order of first occurrence."""
    mapping: dict = {}
    out = np.empty(len(labels), dtype=int)
    for i, lab in enumerate(np.asarray(labels).tolist()):
        if lab not in mapping:
            mapping[lab] = len(mapping) + 1
        out[i] = mapping[lab]
    return out


# --------------------------------------------------------------------------
# Distances
# --------------------------------------------------------------------------

def gower_distance(m: FeatureMatrix, sel: SelectionResult | None = None) -> DistanceMatrix:
    """Mixed-type Gower dissimilarity over the kept features.

    Binary features contribute a 0/1 mismatch, the rest ``|xi - xj| / range``.
    Features masked in either row are left out of that pair's mean.
    """
    sub = m.take(sel.kept) if sel is not None else m
    if sub.values.shape[1] == 0:
        raise ValueError("no features for Gower distance")
    n = sub.values.shape[0]
    total = np.zeros((n, n))
    weight = np.zeros((n, n))
    for j, spec in enumerate(sub.catalog):
        col = sub.values[:, j]
        ok = ~sub.mask[:, j]
        pair_ok = np.outer(ok, ok)
        if spec.kind == BINARY:
            contrib = (col[:, None] != col[None, :]).astype(float)
        else:
            vals = col[ok]
            rng = float(vals.max() - vals.min()) if vals.size else 0.0
            if rng == 0.0:
                log.warning("feature %s has zero range; contributes 0 to Gower distance", spec.id)
                contrib = np.zeros((n, n))
            else:
                contrib = np.abs(col[:, None] - col[None, :]) / rng
        total += np.where(pair_ok, contrib, 0.0)
        weight += pair_ok
    with np.errstate(invalid="ignore", divide="ignore"):
        d = np.where(weight > 0, total / np.maximum(weight, 1), 0.0)
    d = np.clip((d + d.T) / 2, 0.0, 1.0)
    np.fill_diagonal(d, 0.0)
    return DistanceMatrix(d, "gower")


def euclidean_distance(x: ScaledMatrix | np.ndarray) -> DistanceMatrix:
    arr = x.values if isinstance(x, ScaledMatrix) else np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    return DistanceMatrix(squareform(pdist(arr)), "euclidean_scaled")


def _as_array(x) -> np.ndarray:
    arr = x.values if isinstance(x, ScaledMatrix) else np.asarray(x, dtype=float)
    return arr[:, None] if arr.ndim == 1 else arr


def _check_k(k: int, n: int) -> None:
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must satisfy 1 <= k <= n={n}")


# --------------------------------------------------------------------------
# k-means
# --------------------------------------------------------------------------

def _sq_dists(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    return ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)


def _kmeanspp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    chosen = [int(rng.integers(n))]
    closest = ((x - x[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            rest = [i for i in range(n) if i not in chosen]
            idx = int(rng.choice(rest))
        chosen.append(idx)
        closest = np.minimum(closest, ((x - x[idx]) ** 2).sum(axis=1))
    return x[chosen].copy()


def _fill_empty(labels: np.ndarray, d2: np.ndarray, k: int) -> int:
    """Give each empty cluster the worst-fitted point of a cluster with >= 2 members."""
    moved = 0
    for c in range(k):
        if not np.any(labels == c):
            fit = d2[np.arange(len(labels)), labels].copy()
            sizes = np.bincount(labels, minlength=k)
            fit[sizes[labels] < 2] = -np.inf
            labels[int(fit.argmax())] = c
            moved += 1
    return moved


def _lloyd(x: np.ndarray, centers: np.ndarray, max_iter: int):
    k = len(centers)
    d2 = _sq_dists(x, centers)
    labels = d2.argmin(axis=1)
    trace = [float(d2[np.arange(len(x)), labels].sum())]
    reseeds = 0
    for _ in range(max_iter):
        reseeds += _fill_empty(labels, d2, k)
        centers = np.array([x[labels == c].mean(axis=0) for c in range(k)])
        d2 = _sq_dists(x, centers)
        trace.append(float(d2[np.arange(len(x)), labels].sum()))
        new = d2.argmin(axis=1)
        if np.array_equal(new, labels):
            break
        labels = new
    else:
        reseeds += _fill_empty(labels, d2, k)
    return labels, centers, trace, reseeds


def _hartigan(x: np.ndarray, labels: np.ndarray, k: int):
    """Single-point transfers that lower the SSE, until no point gains by moving.

    Escapes Lloyd fixpoints where one point sits closer to a foreign centroid
    once the change in both cluster means is taken into account.
    """
    labels = labels.copy()
    sizes = np.bincount(labels, minlength=k).astype(float)
    centers = np.array([x[labels == c].mean(axis=0) for c in range(k)])
    moves = 0
    changed = True
    while changed:
        changed = False
        for i in range(len(x)):
            a = labels[i]
            if sizes[a] < 2:
                continue
            d2 = ((centers - x[i]) ** 2).sum(axis=1)
            add = sizes / (sizes + 1) * d2
            add[a] = np.inf
            b = int(add.argmin())
            if add[b] < sizes[a] / (sizes[a] - 1) * d2[a] - 1e-12:
                centers[a] = (centers[a] * sizes[a] - x[i]) / (sizes[a] - 1)
                centers[b] = (centers[b] * sizes[b] + x[i]) / (sizes[b] + 1)
                sizes[a] -= 1
                sizes[b] += 1
                labels[i] = b
                moves += 1
                changed = True
    return labels, moves


def kmeans(x, k: int, seed: int = 40, n_init: int = 10, max_iter: int = 300) -> ModelAssignment:
    """Lloyd iterations from k-means++ seeding, polished by Hartigan transfers.

    The lowest-SSE of ``n_init`` restarts wins; earlier restarts win ties.
    """
    arr = _as_array(x)
    _check_k(k, len(arr))
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        labels, centers, trace, reseeds = _lloyd(arr, _kmeanspp(arr, k, rng), max_iter)
        labels, moves = _hartigan(arr, labels, k)
        if moves:
            centers = np.array([arr[labels == c].mean(axis=0) for c in range(k)])
            trace.append(float(_sq_dists(arr, centers)[np.arange(len(arr)), labels].sum()))
        if best is None or trace[-1] < best[2][-1]:
            best = (labels, centers, trace, reseeds, moves)
    labels, centers, trace, reseeds, moves = best
    canon = canonical_labels(labels)
    order = [int(labels[np.argmax(canon == c)]) for c in range(1, k + 1)]
    return ModelAssignment("kmeans", k, canon, {
        "centroids": centers[order].tolist(),
        "inertia_trace": trace,
        "sse": trace[-1],
        "empty_cluster_reseeds": reseeds,
        "hartigan_moves": moves,
    }, seed)


def sse(x, labels) -> float:
    arr = _as_array(x)
    labels = np.asarray(labels)
    return float(sum(((arr[labels == c] - arr[labels == c].mean(axis=0)) ** 2).sum()
                     for c in np.unique(labels)))


# --------------------------------------------------------------------------
# k-medoids (PAM)
# --------------------------------------------------------------------------

def _medoid_cost(d: np.ndarray, medoids) -> float:
    return float(d[:, list(medoids)].min(axis=1).sum())


def _swap(D: np.ndarray, medoids: list[int], max_iter: int):
    """Steepest-descent SWAP until no single medoid exchange lowers the cost."""
    n, k = D.shape[0], len(medoids)
    cost = _medoid_cost(D, medoids)
    swaps = 0
    for _ in range(max_iter):
        best = (cost, None, None)
        for s in range(k):
            others = medoids[:s] + medoids[s + 1:]
            base = D[:, others].min(axis=1) if others else np.full(n, np.inf)
            cand = np.minimum(D, base[None, :]).sum(axis=1)
            cand[medoids] = np.inf
            o = int(cand.argmin())
            if cand[o] < best[0] - 1e-12:
                best = (float(cand[o]), s, o)
        if best[1] is None:
            break
        cost, s, o = best
        medoids[s] = o
        swaps += 1
    return medoids, cost, swaps


def kmedoids(d: DistanceMatrix, k: int, seed: int = 40, max_iter: int = 1000,
             n_init: int = 10) -> ModelAssignment:
    """PAM: greedy BUILD, then steepest-descent SWAP to a 1-swap local optimum.

    SWAP also runs from ``n_init - 1`` seeded random medoid sets and the
    cheapest result is kept (BUILD's on ties). Ties inside a run go to the lower index.
    """
    D = d.values
    n = D.shape[0]
    _check_k(k, n)
    medoids = [int(D.sum(axis=1).argmin())]
    nearest = D[:, medoids[0]].copy()
    while len(medoids) < k:
        gains = np.minimum(D, nearest[None, :]).sum(axis=1)
        gains[medoids] = np.inf
        m = int(gains.argmin())
        medoids.append(m)
        nearest = np.minimum(nearest, D[m])
    build_cost = _medoid_cost(D, medoids)
    medoids, cost, swaps = _swap(D, medoids, max_iter)
    rng = np.random.default_rng(seed)
    for _ in range(n_init - 1):
        start = sorted(int(i) for i in rng.choice(n, size=k, replace=False))
        cand, c, sw = _swap(D, start, max_iter)
        if c < cost - 1e-12:
            medoids, cost, swaps = cand, c, sw
    medoids = sorted(medoids)
    raw = D[:, medoids].argmin(axis=1)
    canon = canonical_labels(raw)
    order = [medoids[int(raw[np.argmax(canon == c)])] for c in range(1, k + 1)]
    return ModelAssignment("kmedoids", k, canon, {
        "medoids": order,
        "total_dissimilarity": _medoid_cost(D, medoids),
        "build_dissimilarity": build_cost,
        "swaps": swaps,
    }, seed)


# --------------------------------------------------------------------------
# Average-linkage hierarchy
# --------------------------------------------------------------------------

def upgma_tree(d: DistanceMatrix) -> list[tuple[int, int, float, int]]:
    """Average-linkage merges as (id_a, id_b, height, size) rows, scipy-style ids.

    The closest pair merges first; ties go to the pair of clusters with the
    smallest member indices.
    """
    D = d.values.astype(float).copy()
    n = D.shape[0]
    np.fill_diagonal(D, np.inf)
    size = np.ones(n)
    ids = list(range(n))
    active = np.ones(n, dtype=bool)
    tree = []
    for step in range(n - 1):
        i, j = divmod(int(np.argmin(D)), n)
        if i > j:
            i, j = j, i
        h = float(D[i, j])
        ni, nj = size[i], size[j]
        merged = (ni * D[i] + nj * D[j]) / (ni + nj)
        tree.append((ids[i], ids[j], h, int(ni + nj)))
        D[i, :] = merged
        D[:, i] = merged
        D[i, i] = np.inf
        D[j, :] = np.inf
        D[:, j] = np.inf
        D[i, ~active] = np.inf
        D[~active, i] = np.inf
        active[j] = False
        size[i] = ni + nj
        ids[i] = n + step
    return tree


def cut_tree(tree, n: int, k: int) -> np.ndarray:
    """Labels after applying the first n-k merges, canonically numbered."""
    parent = list(range(2 * n - 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for step, (a, b, _, _) in enumerate(tree[: n - k]):
        parent[find(a)] = n + step
        parent[find(b)] = n + step
    return canonical_labels([find(i) for i in range(n)])


def hierarchical(d: DistanceMatrix, k: int) -> ModelAssignment:
    n = d.n
    _check_k(k, n)
    tree = upgma_tree(d)
    return ModelAssignment("hierarchical", k, cut_tree(tree, n, k),
                           {"merge_tree": [list(t) for t in tree], "linkage": "average"})


# --------------------------------------------------------------------------
# Diagonal Gaussian mixture
# --------------------------------------------------------------------------

def _log_densities(x, weights, means, variances):
    diff2 = (x[:, None, :] - means[None, :, :]) ** 2
    ll = -0.5 * (np.log(2 * np.pi * variances)[None, :, :] + diff2 / variances[None, :, :]).sum(axis=2)
    return ll + np.log(weights)[None, :]


def _logsumexp(a: np.ndarray) -> np.ndarray:
    mx = a.max(axis=1, keepdims=True)
    return (mx + np.log(np.exp(a - mx).sum(axis=1, keepdims=True)))[:, 0]


def gmm_parameter_count(k: int, dims: int) -> int:
    return k * (2 * dims + 1) - 1


def gmm(x, k: int, seed: int = 40, var_floor: float = 1e-6, tol: float = 1e-7,
        max_iter: int = 500) -> ModelAssignment:
    """EM for a diagonal-covariance mixture, initialised from k-means."""
    arr = _as_array(x)
    n, dims = arr.shape
    _check_k(k, n)
    init = kmeans(arr, k, seed).labels - 1
    weights = np.bincount(init, minlength=k) / n
    means = np.array([arr[init == c].mean(axis=0) for c in range(k)])
    variances = np.maximum(np.array([arr[init == c].var(axis=0) for c in range(k)]), var_floor)
    trace: list[float] = []
    respawns = 0
    converged = False
    for _ in range(max_iter):
        logp = _log_densities(arr, weights, means, variances)
        lse = _logsumexp(logp)
        ll = float(lse.sum())
        resp = np.exp(logp - lse[:, None])
        if trace and ll - trace[-1] < tol:
            trace.append(ll)
            converged = True
            break
        trace.append(ll)
        nk = resp.sum(axis=0)
        for c in np.flatnonzero(nk < 1e-10):
            worst = int(lse.argmin())
            log.warning("gmm component %d collapsed; respawning at row %d", c, worst)
            resp[:, c] = 0.0
            resp[worst] = 0.0
            resp[worst, c] = 1.0
            respawns += 1
        nk = resp.sum(axis=0)
        weights = nk / n
        means = (resp.T @ arr) / nk[:, None]
        variances = np.empty_like(means)
        for c in range(k):
            variances[c] = (resp[:, c:c + 1] * (arr - means[c]) ** 2).sum(axis=0) / nk[c]
        variances = np.maximum(variances, var_floor)
    logp = _log_densities(arr, weights, means, variances)
    lse = _logsumexp(logp)
    resp = np.exp(logp - lse[:, None])
    if not converged:
        trace.append(float(lse.sum()))
    ll = trace[-1]
    raw = resp.argmax(axis=1)
    p = gmm_parameter_count(k, dims)
    canon = canonical_labels(raw)
    present = np.unique(raw)
    fallback = len(present) < k
    if fallback:
        # an empty hard cluster cannot form a partition; fall back to the k-means init labels
        log.warning("gmm produced %d nonempty components out of %d; using k-means labels",
                    len(present), k)
        canon = canonical_labels(init)
    return ModelAssignment("gmm", k, canon, {
        "loglik_trace": trace,
        "loglik": ll,
        "aic": 2 * p - 2 * ll,
        "bic": p * math.log(n) - 2 * ll,
        "n_params": p,
        "weights": weights.tolist(),
        "means": means.tolist(),
        "variances": variances.tolist(),
        "responsibilities": resp,
        "converged": converged,
        "respawns": respawns,
        "fallback_labels": fallback,
    }, seed)


# --------------------------------------------------------------------------
# Validation indices
# --------------------------------------------------------------------------

def silhouette_samples(labels, d: DistanceMatrix) -> np.ndarray:
    labels = np.asarray(labels)
    uniq, inv = np.unique(labels, return_inverse=True)
    k = len(uniq)
    if k < 2:
        raise ValueError("silhouette is undefined for a single cluster")
    n = len(labels)
    onehot = np.zeros((n, k))
    onehot[np.arange(n), inv] = 1.0
    sums = d.values @ onehot
    counts = onehot.sum(axis=0)
    own = counts[inv]
    a = np.where(own > 1, sums[np.arange(n), inv] / np.maximum(own - 1, 1), 0.0)
    other = sums / counts[None, :]
    other[np.arange(n), inv] = np.inf
    b = other.min(axis=1)
    denom = np.maximum(a, b)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where((own > 1) & (denom > 0), (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return s


def silhouette(labels, d: DistanceMatrix) -> float:
    """Mean silhouette; points in singleton clusters score 0."""
    return float(silhouette_samples(labels, d).mean())


def calinski_harabasz(x, labels) -> float:
    """Between/within dispersion ratio; ``inf`` when every cluster is a single point mass."""
    arr = _as_array(x)
    labels = np.asarray(labels)
    uniq = np.unique(labels)
    n, k = len(arr), len(uniq)
    if not 2 <= k < n:
        raise ValueError(f"Calinski-Harabasz needs 2 <= k < n (k={k}, n={n})")
    mu = arr.mean(axis=0)
    between = within = 0.0
    for c in uniq:
        pts = arr[labels == c]
        mc = pts.mean(axis=0)
        between += len(pts) * float(((mc - mu) ** 2).sum())
        within += float(((pts - mc) ** 2).sum())
    if within == 0.0:
        return math.inf
    return (between / (k - 1)) / (within / (n - k))


# --------------------------------------------------------------------------
# k selection
# --------------------------------------------------------------------------

@dataclass
class KSelectionReport:
    k_range: list[int]
    silhouette: dict[str, dict[int, float]]
    calinski_harabasz: dict[int, float]
    aic: dict[int, float]
    bic: dict[int, float]
    chosen: dict[str, int]
    consensus_k: int


def _argmax_k(curve: dict[int, float]) -> int:
    best_k, best = None, -math.inf
    for k in sorted(curve):
        if curve[k] > best:
            best_k, best = k, curve[k]
    return best_k


def consensus_k(chosen) -> int:
    """Mode of the per-model choices; ties go to the smaller k."""
    counts = Counter(chosen)
    top = max(counts.values())
    return min(k for k, c in counts.items() if c == top)


def select_k(silhouettes: dict[str, dict[int, float]], k_range,
             ch: dict[int, float] | None = None, aic: dict[int, float] | None = None,
             bic: dict[int, float] | None = None) -> KSelectionReport:
    ks = list(k_range)
    for model, curve in silhouettes.items():
        missing = set(ks) - set(curve)
        if missing:
            raise ValueError(f"{model} not evaluated for k in {sorted(missing)}")
    chosen = {m: _argmax_k({k: c[k] for k in ks}) for m, c in silhouettes.items()}
    return KSelectionReport(ks, silhouettes, dict(ch or {}), dict(aic or {}), dict(bic or {}),
                            chosen, consensus_k(chosen.values()))


def fit_models(scaled, gower: DistanceMatrix, k: int, seed: int = 40) -> list[ModelAssignment]:
    """All four models at one k, in the order kmeans, kmedoids, hierarchical, gmm."""
    return [kmeans(scaled, k, seed), kmedoids(gower, k, seed), hierarchical(gower, k),
            gmm(scaled, k, seed)]


def evaluate_k_range(scaled, gower: DistanceMatrix, k_range, seed: int = 40):
    """Fit every model over the k-range; returns (report, {k: assignments})."""
    arr = _as_array(scaled)
    n = len(arr)
    ks = [k for k in k_range if 2 <= k < n]
    if len(ks) < len(list(k_range)):
        log.warning("k-range clipped to %s for n=%d", ks, n)
    if not ks:
        raise ValueError(f"no admissible k in range for n={n}")
    euclid = euclidean_distance(arr)
    sil = {m: {} for m in MODELS}
    ch, aic, bic = {}, {}, {}
    fits = {}
    for k in ks:
        models = fit_models(arr, gower, k, seed)
        fits[k] = models
        for m in models:
            dist = euclid if m.model_id in ("kmeans", "gmm") else gower
            sil[m.model_id][k] = silhouette(m.labels, dist)
        ch[k] = calinski_harabasz(arr, models[0].labels)
        aic[k] = models[3].diagnostics["aic"]
        bic[k] = models[3].diagnostics["bic"]
    return select_k(sil, ks, ch, aic, bic), fits


# --------------------------------------------------------------------------
# PCA
# --------------------------------------------------------------------------

def principal_axes(x):
    """Eigenvalues (descending) and unit eigenvectors of the population covariance.

    Each eigenvector's largest-magnitude loading is made positive.
    """
    arr = _as_array(x)
    xc = arr - arr.mean(axis=0)
    cov = xc.T @ xc / len(arr)
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(-vals, kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    for j in range(vecs.shape[1]):
        if vecs[np.argmax(np.abs(vecs[:, j])), j] < 0:
            vecs[:, j] = -vecs[:, j]
    return np.clip(vals, 0.0, None), vecs


def pca_project(x, dims: int = 2) -> np.ndarray:
    arr = _as_array(x)
    if arr.shape[1] < dims:
        raise ValueError(f"need at least {dims} features for PCA")
    _, vecs = principal_axes(arr)
    return (arr - arr.mean(axis=0)) @ vecs[:, :dims]


# --------------------------------------------------------------------------
# Files
# --------------------------------------------------------------------------

def _jsonable(diag: dict) -> dict:
    out = {}
    for key, value in diag.items():
        if isinstance(value, np.ndarray):
            continue
        out[key] = value
    return out


def write_assignments(out_dir, domains, assignments, report: KSelectionReport | None = None,
                      pca: np.ndarray | None = None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = {"models": {}, "n": len(domains)}
    for a in assignments:
        with open(out / f"labels_{a.model_id}.csv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["row", "domain", "label"])
            for i, (dom, lab) in enumerate(zip(domains, a.labels)):
                w.writerow([i, dom, int(lab)])
        diag = _jsonable(a.diagnostics)
        diag.pop("merge_tree", None)
        summary["models"][a.model_id] = {"k": a.k, "seed": a.seed, "diagnostics": diag}
        if a.model_id == "hierarchical":
            with open(out / "merge_tree.csv", "w", encoding="utf-8", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["step", "cluster_a", "cluster_b", "height", "size"])
                for step, (ca, cb, h, sz) in enumerate(a.diagnostics["merge_tree"]):
                    w.writerow([step, ca, cb, repr(float(h)), sz])
    if report is not None:
        summary["chosen_k"] = report.chosen
        summary["consensus_k"] = report.consensus_k
        with open(out / "k_selection.csv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k"] + [f"silhouette_{m}" for m in MODELS] + ["calinski_harabasz", "aic", "bic"])
            for k in report.k_range:
                w.writerow([k] + [repr(report.silhouette[m][k]) for m in MODELS]
                           + [repr(report.calinski_harabasz.get(k, math.nan)),
                              repr(report.aic.get(k, math.nan)), repr(report.bic.get(k, math.nan))])
    if pca is not None:
        with open(out / "pca.csv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["row", "domain", "pc1", "pc2"])
            for i, (dom, (p1, p2)) in enumerate(zip(domains, pca)):
                w.writerow([i, dom, f"{p1:.12g}", f"{p2:.12g}"])
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")


def read_assignments(in_dir) -> tuple[list[str], list[ModelAssignment]]:
    src = Path(in_dir)
    with open(src / "summary.json", encoding="utf-8") as fh:
        summary = json.load(fh)
    domains: list[str] = []
    out = []
    for model in MODELS:
        path = src / f"labels_{model}.csv"
        if not path.is_file():
            continue
        with open(path, encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        domains = [r["domain"] for r in rows]
        info = summary["models"][model]
        out.append(ModelAssignment(model, info["k"], [int(r["label"]) for r in rows],
                                   info.get("diagnostics", {}), info.get("seed")))
    if not out:
        raise FileNotFoundError(f"no label files in {src}")
    return domains, out


def write_distance(d: DistanceMatrix, domains, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([d.metric] + list(domains))
        for dom, row in zip(domains, d.values):
            w.writerow([dom] + [repr(float(v)) for v in row])


def read_distance(path) -> tuple[list[str], DistanceMatrix]:
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    metric, domains = rows[0][0], rows[0][1:]
    values = np.array([[float(v) for v in r[1:]] for r in rows[1:]]).reshape(len(domains), len(domains))
    return domains, DistanceMatrix(values, metric)

"""Surrogate gradient-boosted trees on consensus labels, with exact tree Shapley values.

The booster is a multiclass softmax ensemble grown with second-order
(Newton) leaf weights, one regression tree per class per round. Node
covers are training-sample counts, so the path-dependent attribution's
base value is exactly the mean training margin.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import CampaignLensError

SHAP_VARIANT = "tree_path_dependent"


class SurrogateError(CampaignLensError, ValueError):
    pass


@dataclass(frozen=True)
class Hyperparams:
    max_depth: int = 2
    rounds: int = 200
    learning_rate: float = 0.25
    min_child_weight: float = 3.0
    gamma: float = 0.5
    reg_lambda: float = 1.0
    test_fraction: float = 0.2


@dataclass
class Tree:
    """Array-backed binary tree; ``feature == -1`` marks a leaf. Rows go left when x < threshold."""

    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    value: list[float] = field(default_factory=list)
    cover: list[float] = field(default_factory=list)
    gain: list[float] = field(default_factory=list)

    def add(self, cover: float) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        self.cover.append(cover)
        self.gain.append(0.0)
        return len(self.feature) - 1

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(len(X))
        for r, x in enumerate(X):
            node = 0
            while self.feature[node] >= 0:
                node = self.left[node] if x[self.feature[node]] < self.threshold[node] else self.right[node]
            out[r] = self.value[node]
        return out

    def depth(self, node: int = 0) -> int:
        if self.feature[node] < 0:
            return 0
        return 1 + max(self.depth(self.left[node]), self.depth(self.right[node]))

    def expected_value(self) -> float:
        root = self.cover[0]
        return sum(self.cover[i] / root * self.value[i]
                   for i in range(len(self.feature)) if self.feature[i] < 0)

    @property
    def n_leaves(self) -> int:
        return sum(f < 0 for f in self.feature)


def _best_split(X, g, h, idx, hp: Hyperparams):
    G, H = g[idx].sum(), h[idx].sum()
    parent = G * G / (H + hp.reg_lambda)
    best = (0.0, -1, 0.0)
    for f in range(X.shape[1]):
        xs = X[idx, f]
        order = np.argsort(xs, kind="stable")
        xs = xs[order]
        gl = np.cumsum(g[idx][order])[:-1]
        hl = np.cumsum(h[idx][order])[:-1]
        gr, hr = G - gl, H - hl
        ok = (xs[1:] > xs[:-1]) & (hl >= hp.min_child_weight) & (hr >= hp.min_child_weight)
        if not ok.any():
            continue
        gain = 0.5 * (gl ** 2 / (hl + hp.reg_lambda) + gr ** 2 / (hr + hp.reg_lambda) - parent)
        gain = np.where(ok, gain, -np.inf)
        pos = int(np.argmax(gain))
        if gain[pos] > best[0]:
            best = (float(gain[pos]), f, float((xs[pos] + xs[pos + 1]) / 2))
    return best


def build_tree(X: np.ndarray, g: np.ndarray, h: np.ndarray, hp: Hyperparams) -> Tree:
    """Grow one regression tree on gradient/hessian statistics.

    A node splits only when the second-order loss reduction exceeds ``gamma``;
    ties keep the lowest feature index and then the lowest threshold.
    """
    tree = Tree()

    def grow(idx, depth):
        node = tree.add(float(len(idx)))
        if depth < hp.max_depth:
            gain, f, thr = _best_split(X, g, h, idx, hp)
            if f >= 0 and gain > hp.gamma:
                mask = X[idx, f] < thr
                tree.feature[node] = f
                tree.threshold[node] = thr
                tree.gain[node] = gain
                tree.left[node] = grow(idx[mask], depth + 1)
                tree.right[node] = grow(idx[~mask], depth + 1)
                return node
        tree.value[node] = float(-g[idx].sum() / (h[idx].sum() + hp.reg_lambda) * hp.learning_rate)
        return node

    grow(np.arange(len(X)), 0)
    return tree


def softmax(F: np.ndarray) -> np.ndarray:
    z = F - F.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(F: np.ndarray, y_idx: np.ndarray) -> float:
    z = F - F.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    return float((lse - z[np.arange(len(y_idx)), y_idx]).mean())


@dataclass
class SurrogateModel:
    classes: list[int]
    trees: list[list[Tree]]
    hyperparams: Hyperparams
    feature_ids: list[str]
    seed: int
    train_loss: list[float] = field(default_factory=list)

    def margin(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[1] != len(self.feature_ids):
            raise SurrogateError(f"expected {len(self.feature_ids)} features, got {X.shape[1]}")
        F = np.zeros((len(X), len(self.classes)))
        for round_trees in self.trees:
            for c, t in enumerate(round_trees):
                F[:, c] += t.predict(X)
        return F

    def predict(self, X) -> np.ndarray:
        return np.asarray(self.classes)[self.margin(X).argmax(axis=1)]


def fit_boosting(X: np.ndarray, y: np.ndarray, hp: Hyperparams, feature_ids: Sequence[str],
                 seed: int = 40) -> SurrogateModel:
    X = np.asarray(X, dtype=float)
    classes = sorted(set(np.asarray(y).tolist()))
    y_idx = np.searchsorted(classes, y)
    K = len(classes)
    onehot = np.eye(K)[y_idx]
    F = np.zeros((len(X), K))
    trees = []
    losses = [cross_entropy(F, y_idx)]
    for _ in range(hp.rounds):
        p = softmax(F)
        g = p - onehot
        h = np.maximum(2.0 * p * (1.0 - p), 1e-16)
        round_trees = [build_tree(X, g[:, c], h[:, c], hp) for c in range(K)]
        for c, t in enumerate(round_trees):
            F[:, c] += t.predict(X)
        trees.append(round_trees)
        losses.append(cross_entropy(F, y_idx))
    return SurrogateModel(classes, trees, hp, list(feature_ids), seed, losses)


# --------------------------------------------------------------------------
# Split and metrics
# --------------------------------------------------------------------------

def stratified_split(y, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-class shuffled split; every class with >= 2 members lands in both parts."""
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c in sorted(set(y.tolist())):
        idx = np.flatnonzero(y == c)
        idx = idx[rng.permutation(len(idx))]
        n_test = int(round(test_fraction * len(idx)))
        n_test = min(max(n_test, 1), len(idx) - 1)
        test.extend(idx[:n_test].tolist())
        train.extend(idx[n_test:].tolist())
    return np.array(sorted(train)), np.array(sorted(test))


@dataclass
class SurrogateMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    confusion: np.ndarray
    classes: list[int]
    n_train: int
    n_test: int
    seed: int


def metrics_from_confusion(conf: np.ndarray) -> tuple[float, float, float, float]:
    """(accuracy, macro precision, macro recall, macro F1); rows are true classes."""
    conf = np.asarray(conf, dtype=float)
    tp = np.diag(conf)
    pred = conf.sum(axis=0)
    true = conf.sum(axis=1)
    prec = np.divide(tp, pred, out=np.zeros_like(tp), where=pred > 0)
    rec = np.divide(tp, true, out=np.zeros_like(tp), where=true > 0)
    denom = prec + rec
    f1 = np.divide(2 * prec * rec, denom, out=np.zeros_like(tp), where=denom > 0)
    return float(tp.sum() / conf.sum()), float(prec.mean()), float(rec.mean()), float(f1.mean())


def confusion_matrix(y_true, y_pred, classes) -> np.ndarray:
    pos = {c: i for i, c in enumerate(classes)}
    conf = np.zeros((len(classes), len(classes)), dtype=int)
    for t, p in zip(y_true, y_pred):
        conf[pos[int(t)], pos[int(p)]] += 1
    return conf


def train_surrogate(X, labels, hp: Hyperparams | None = None, seed: int = 40,
                    feature_ids: Sequence[str] | None = None):
    """Stratified split, boosting on the training part, metrics on the held-out part.

    Returns (model, metrics, train_idx, test_idx).
    """
    hp = hp or Hyperparams()
    X = np.asarray(X, dtype=float)
    y = np.asarray(getattr(labels, "final_labels", labels), dtype=int)
    if feature_ids is None:
        feature_ids = [f"x{j}" for j in range(X.shape[1])]
    counts = {c: int((y == c).sum()) for c in sorted(set(y.tolist()))}
    if len(counts) < 2:
        raise SurrogateError("surrogate needs at least two distinct cluster labels")
    small = [c for c, n in counts.items() if n < 2]
    if small:
        raise SurrogateError(f"clusters {small} have a single member; merge them or re-seed")
    train_idx, test_idx = stratified_split(y, hp.test_fraction, seed)
    model = fit_boosting(X[train_idx], y[train_idx], hp, feature_ids, seed)
    pred = model.predict(X[test_idx])
    conf = confusion_matrix(y[test_idx], pred, model.classes)
    acc, prec, rec, f1 = metrics_from_confusion(conf)
    metrics = SurrogateMetrics(acc, prec, rec, f1, conf, model.classes,
                               len(train_idx), len(test_idx), seed)
    return model, metrics, train_idx, test_idx


# --------------------------------------------------------------------------
# Path-dependent tree SHAP
# --------------------------------------------------------------------------

class _PathElement:
    __slots__ = ("feature", "zero", "one", "weight")

    def __init__(self, feature=-1, zero=0.0, one=0.0, weight=0.0):
        self.feature, self.zero, self.one, self.weight = feature, zero, one, weight

    def copy(self):
        return _PathElement(self.feature, self.zero, self.one, self.weight)


def _extend(path, depth, zero, one, feature):
    path.append(_PathElement(feature, zero, one, 1.0 if depth == 0 else 0.0))
    for i in range(depth - 1, -1, -1):
        path[i + 1].weight += one * path[i].weight * (i + 1) / (depth + 1)
        path[i].weight = zero * path[i].weight * (depth - i) / (depth + 1)


def _unwind(path, depth, idx):
    one, zero = path[idx].one, path[idx].zero
    nxt = path[depth].weight
    for i in range(depth - 1, -1, -1):
        if one != 0:
            tmp = path[i].weight
            path[i].weight = nxt * (depth + 1) / ((i + 1) * one)
            nxt = tmp - path[i].weight * zero * (depth - i) / (depth + 1)
        else:
            path[i].weight = path[i].weight * (depth + 1) / (zero * (depth - i))
    for i in range(idx, depth):
        path[i].feature = path[i + 1].feature
        path[i].zero = path[i + 1].zero
        path[i].one = path[i + 1].one
    path.pop()


def _unwound_sum(path, depth, idx) -> float:
    one, zero = path[idx].one, path[idx].zero
    nxt = path[depth].weight
    total = 0.0
    for i in range(depth - 1, -1, -1):
        if one != 0:
            tmp = nxt * (depth + 1) / ((i + 1) * one)
            total += tmp
            nxt = path[i].weight - tmp * zero * (depth - i) / (depth + 1)
        elif zero != 0:
            total += path[i].weight / zero / ((depth - i) / (depth + 1))
    return total


def tree_shap(tree: Tree, x: np.ndarray, phi: np.ndarray) -> None:
    """Accumulate one tree's exact path-dependent Shapley values for row ``x`` into ``phi``."""

    def recurse(node, parent_path, zero, one, feature):
        path = [p.copy() for p in parent_path]
        depth = len(path)
        _extend(path, depth, zero, one, feature)
        f = tree.feature[node]
        if f < 0:
            for i in range(1, depth + 1):
                w = _unwound_sum(path, depth, i)
                el = path[i]
                phi[el.feature] += w * (el.one - el.zero) * tree.value[node]
            return
        hot, cold = ((tree.left[node], tree.right[node]) if x[f] < tree.threshold[node]
                     else (tree.right[node], tree.left[node]))
        in_zero = in_one = 1.0
        for k in range(1, depth + 1):
            if path[k].feature == f:
                in_zero, in_one = path[k].zero, path[k].one
                _unwind(path, depth, k)
                break
        cover = tree.cover[node]
        recurse(hot, path, tree.cover[hot] / cover * in_zero, in_one, f)
        recurse(cold, path, tree.cover[cold] / cover * in_zero, 0.0, f)

    recurse(0, [], 1.0, 1.0, -1)


@dataclass
class ShapMatrix:
    classes: list[int]
    feature_ids: list[str]
    values: np.ndarray  # (K, n, l)
    base_values: np.ndarray  # (K,)
    variant: str = SHAP_VARIANT

    def for_class(self, c: int) -> np.ndarray:
        return self.values[self.classes.index(c)]


def shap_values(model: SurrogateModel, X) -> ShapMatrix:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != len(model.feature_ids):
        raise SurrogateError(
            f"feature count mismatch: model has {len(model.feature_ids)}, data has {X.shape[-1]}")
    K = len(model.classes)
    phi = np.zeros((K, len(X), X.shape[1]))
    base = np.zeros(K)
    for round_trees in model.trees:
        for c, t in enumerate(round_trees):
            base[c] += t.expected_value()
            if t.feature[0] < 0:
                continue
            for r in range(len(X)):
                tree_shap(t, X[r], phi[c, r])
    return ShapMatrix(list(model.classes), list(model.feature_ids), phi, base)


# --------------------------------------------------------------------------
# Summaries
# --------------------------------------------------------------------------

@dataclass
class FeatureEffect:
    feature: str
    mean_abs: float
    direction: int


@dataclass
class ShapSummary:
    ranking: dict[int, list[FeatureEffect]]


def _corr_sign(a: np.ndarray, b: np.ndarray) -> int:
    if len(a) < 2 or a.min() == a.max() or b.min() == b.max():
        return 0
    r = np.corrcoef(a, b)[0, 1]
    if not np.isfinite(r) or abs(r) < 1e-12:
        return 0
    return 1 if r > 0 else -1


def summarize(shap: ShapMatrix, X) -> ShapSummary:
    """Per cluster: features by descending mean |phi|, with the sign of corr(value, phi)."""
    X = np.asarray(X, dtype=float)
    if len(X) == 0:
        raise SurrogateError("cannot summarize an empty test set")
    ranking = {}
    for ci, c in enumerate(shap.classes):
        phi = shap.values[ci]
        effects = [FeatureEffect(fid, float(np.abs(phi[:, j]).mean()), _corr_sign(X[:, j], phi[:, j]))
                   for j, fid in enumerate(shap.feature_ids)]
        order = sorted(range(len(effects)), key=lambda j: (-effects[j].mean_abs, j))
        ranking[c] = [effects[j] for j in order]
    return ShapSummary(ranking)


# --------------------------------------------------------------------------
# Files
# --------------------------------------------------------------------------

def write_explain(out_dir, model: SurrogateModel, metrics: SurrogateMetrics, shap: ShapMatrix,
                  summary: ShapSummary, test_domains: Sequence[str]) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "accuracy": metrics.accuracy,
        "precision_macro": metrics.precision,
        "recall_macro": metrics.recall,
        "f1_macro": metrics.f1,
        "classes": metrics.classes,
        "n_train": metrics.n_train,
        "n_test": metrics.n_test,
        "seed": metrics.seed,
        "hyperparams": asdict(model.hyperparams),
        "features": model.feature_ids,
        "shap_variant": shap.variant,
        "base_values": {str(c): float(b) for c, b in zip(shap.classes, shap.base_values)},
        "final_train_loss": model.train_loss[-1],
    }
    with open(out / "metrics.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out / "confusion.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["true\\pred"] + [f"C{c}" for c in metrics.classes])
        for c, row in zip(metrics.classes, metrics.confusion):
            w.writerow([f"C{c}"] + row.tolist())
    for ci, c in enumerate(shap.classes):
        with open(out / f"ranking_c{c}.csv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rank", "feature", "mean_abs_shap", "direction"])
            for r, e in enumerate(summary.ranking[c], 1):
                w.writerow([r, e.feature, f"{e.mean_abs:.12g}", e.direction])
        with open(out / f"shap_c{c}.csv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["domain"] + shap.feature_ids)
            for dom, row in zip(test_domains, shap.values[ci]):
                w.writerow([dom] + [f"{v:.12g}" for v in row])


def read_summary(in_dir) -> dict:
    """Rankings and metrics from an explain directory, for report rendering."""
    src = Path(in_dir)
    with open(src / "metrics.json", encoding="utf-8") as fh:
        doc = json.load(fh)
    ranking = {}
    for c in doc["classes"]:
        with open(src / f"ranking_c{c}.csv", encoding="utf-8") as fh:
            ranking[str(c)] = [{"feature": r["feature"], "mean_abs_shap": float(r["mean_abs_shap"]),
                                "direction": int(r["direction"])} for r in csv.DictReader(fh)]
    doc["ranking"] = ranking
    return doc


def summary_to_dict(metrics: SurrogateMetrics, summary: ShapSummary, top: int = 10) -> dict:
    return {
        "accuracy": metrics.accuracy,
        "precision_macro": metrics.precision,
        "recall_macro": metrics.recall,
        "f1_macro": metrics.f1,
        "shap_variant": SHAP_VARIANT,
        "ranking": {str(c): [{"feature": e.feature, "mean_abs_shap": e.mean_abs, "direction": e.direction}
                             for e in effects[:top]] for c, effects in summary.ranking.items()},
    }

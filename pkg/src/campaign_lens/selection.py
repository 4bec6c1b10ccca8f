"""Pairwise Pearson pruning and feature scaling.

All variances use the population (1/n) convention, shared with the
z-scoring here and the mixture model in :mod:`campaign_lens.cluster`.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass

import numpy as np

from .core import BINARY, CampaignLensError
from .featurize import FeatureMatrix

log = logging.getLogger(__name__)


class SelectionError(CampaignLensError, ValueError):
    pass


@dataclass(frozen=True)
class CorrelationMatrix:
    ids: tuple[str, ...]
    values: np.ndarray

    def __getitem__(self, pair):
        a, b = pair
        return float(self.values[self.ids.index(a), self.ids.index(b)])


@dataclass(frozen=True)
class SelectionResult:
    kept: tuple[str, ...]
    dropped: tuple[tuple[str, str, float], ...]

    def __post_init__(self):
        if not self.kept:
            raise SelectionError("selection must keep at least one feature")


@dataclass(frozen=True)
class ScaledMatrix:
    ids: tuple[str, ...]
    values: np.ndarray
    policy: str
    means: np.ndarray
    stds: np.ndarray


def _pair_corr(x: np.ndarray, y: np.ndarray) -> float:
    if x.min() == x.max() or y.min() == y.max():
        return 0.0
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        return 0.0
    r = float(dx @ dy) / np.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def pearson_matrix(m: FeatureMatrix) -> CorrelationMatrix:
    """Sample Pearson correlation for every column pair over rows unmasked in both.

    A pair where either column is constant gets 0 rather than NaN.
    """
    n, l = m.values.shape
    if n < 2:
        raise SelectionError("need at least two rows for correlation")
    valid = ~m.mask
    for j, fid in enumerate(m.catalog.ids):
        if valid[:, j].sum() < 2:
            raise SelectionError(f"feature {fid} has fewer than two unmasked values")
    out = np.eye(l)
    if valid.all():
        x = m.values - m.values.mean(axis=0)
        ss = np.einsum("ij,ij->j", x, x)
        cov = x.T @ x
        ss[m.values.min(axis=0) == m.values.max(axis=0)] = 0.0
        denom = np.sqrt(np.outer(ss, ss))
        with np.errstate(invalid="ignore", divide="ignore"):
            c = np.where(denom > 0, cov / denom, 0.0)
        c = np.clip(c, -1.0, 1.0)
        np.fill_diagonal(c, 1.0)
        out = c
    else:
        for i in range(l):
            for j in range(i + 1, l):
                rows = valid[:, i] & valid[:, j]
                r = _pair_corr(m.values[rows, i], m.values[rows, j]) if rows.sum() >= 2 else 0.0
                out[i, j] = out[j, i] = r
    out = (out + out.T) / 2
    return CorrelationMatrix(tuple(m.catalog.ids), out)


def prune_correlated(c: CorrelationMatrix, th: float) -> SelectionResult:
    """Greedy scan in catalog order: for a pair with |corr| > th, drop the later feature."""
    if not 0.0 < th < 1.0:
        raise SelectionError("threshold must lie in (0, 1)")
    l = len(c.ids)
    alive = [True] * l
    dropped = []
    for i in range(l):
        if not alive[i]:
            continue
        for j in range(i + 1, l):
            if alive[j] and abs(c.values[i, j]) > th:
                alive[j] = False
                dropped.append((c.ids[j], c.ids[i], float(abs(c.values[i, j]))))
    kept = tuple(fid for fid, a in zip(c.ids, alive) if a)
    return SelectionResult(kept, tuple(dropped))


def restrict(c: CorrelationMatrix, ids) -> CorrelationMatrix:
    idx = [c.ids.index(i) for i in ids]
    return CorrelationMatrix(tuple(ids), c.values[np.ix_(idx, idx)])


def standardize(m: FeatureMatrix, sel: SelectionResult, policy: str = "zscore_continuous") -> ScaledMatrix:
    """z-score non-binary kept columns; binary columns pass through; constant columns become 0."""
    if policy not in ("zscore_continuous", "none"):
        raise ValueError(f"unknown scaling policy {policy!r}")
    sub = m.take(sel.kept)
    x = sub.values.copy()
    means = np.zeros(x.shape[1])
    stds = np.ones(x.shape[1])
    if policy == "zscore_continuous":
        for j, spec in enumerate(sub.catalog):
            if spec.kind == BINARY:
                continue
            mu = x[:, j].mean()
            sd = x[:, j].std()
            means[j] = mu
            if sd == 0.0:
                log.warning("feature %s is constant; scaled to 0", spec.id)
                x[:, j] = 0.0
                stds[j] = 0.0
            else:
                stds[j] = sd
                x[:, j] = (x[:, j] - mu) / sd
    return ScaledMatrix(tuple(sel.kept), x, policy, means, stds)


# -- files --------------------------------------------------------------------

def write_selection(sel: SelectionResult, threshold: float, path) -> None:
    doc = {
        "threshold": threshold,
        "kept": list(sel.kept),
        "dropped": [{"feature": d, "partner": p, "abs_corr": round(v, 12)} for d, p, v in sel.dropped],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_selection(path) -> SelectionResult:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return SelectionResult(tuple(doc["kept"]),
                           tuple((d["feature"], d["partner"], d["abs_corr"]) for d in doc["dropped"]))


def write_correlation(c: CorrelationMatrix, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature"] + list(c.ids))
        for fid, row in zip(c.ids, c.values):
            w.writerow([fid] + [f"{v:.12g}" for v in row])


def write_scaled(s: ScaledMatrix, domains, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["domain"] + list(s.ids))
        for dom, row in zip(domains, s.values):
            w.writerow([dom] + [repr(float(v)) for v in row])


def read_scaled(path) -> tuple[list[str], ScaledMatrix]:
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    ids = tuple(rows[0][1:])
    domains = [r[0] for r in rows[1:]]
    x = np.array([[float(v) for v in r[1:]] for r in rows[1:]]).reshape(len(domains), len(ids))
    return domains, ScaledMatrix(ids, x, "zscore_continuous", x.mean(axis=0), x.std(axis=0))

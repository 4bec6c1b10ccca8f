"""Cross-model label alignment and per-site majority voting."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .cluster import ModelAssignment, canonical_labels


@dataclass(frozen=True)
class AlignmentMap:
    reference: str
    maps: dict[str, dict[int, int]]

    def apply(self, a: ModelAssignment) -> ModelAssignment:
        m = self.maps[a.model_id]
        labels = np.array([m[int(x)] for x in a.labels])
        return ModelAssignment(a.model_id, a.k, labels, a.diagnostics, a.seed)


@dataclass(frozen=True)
class VoteMatrix:
    V: np.ndarray
    m: int

    @property
    def K(self) -> int:
        return self.V.shape[1]


@dataclass(frozen=True)
class ConsensusResult:
    final_labels: np.ndarray
    tie_rows: tuple[int, ...]
    seed: int
    k: int

    def sizes(self) -> dict[int, int]:
        return {c: int((self.final_labels == c).sum()) for c in range(1, self.k + 1)}


def contingency(a, b, k: int) -> np.ndarray:
    """k x k overlap counts between two label vectors in 1..k."""
    t = np.zeros((k, k), dtype=int)
    np.add.at(t, (np.asarray(a) - 1, np.asarray(b) - 1), 1)
    return t


def align_labels(assignments: list[ModelAssignment], reference: str = "kmeans") -> AlignmentMap:
    """Map every model's labels onto the reference partition by maximum total overlap.

    Labels are first renumbered by first occurrence, so the result does not
    depend on how any model happened to number its clusters. The optimal
    bijection is found on the contingency table (Hungarian method).
    """
    by_id = {a.model_id: a for a in assignments}
    if reference not in by_id:
        raise ValueError(f"reference model {reference!r} not among assignments")
    ks = {a.k for a in assignments}
    ns = {a.n for a in assignments}
    if len(ks) != 1 or len(ns) != 1:
        raise ValueError(f"assignments disagree on k or n (k={sorted(ks)}, n={sorted(ns)})")
    k = ks.pop()
    ref = canonical_labels(by_id[reference].labels)
    maps = {}
    for a in assignments:
        canon = canonical_labels(a.labels)
        to_canon = {int(o): int(c) for o, c in zip(a.labels, canon)}
        table = contingency(canon, ref, k)
        rows, cols = linear_sum_assignment(table, maximize=True)
        canon_to_ref = {int(r) + 1: int(c) + 1 for r, c in zip(rows, cols)}
        maps[a.model_id] = {o: canon_to_ref[c] for o, c in sorted(to_canon.items())}
    return AlignmentMap(reference, maps)


def vote(aligned: list[ModelAssignment], seed: int = 40) -> tuple[VoteMatrix, ConsensusResult]:
    """V[i, k] counts models placing row i in cluster k; the argmax wins, ties by seeded draw."""
    if not aligned:
        raise ValueError("no assignments to vote on")
    k = aligned[0].k
    n = aligned[0].n
    V = np.zeros((n, k), dtype=int)
    for a in aligned:
        V[np.arange(n), a.labels - 1] += 1
    rng = np.random.default_rng(seed)
    final = np.empty(n, dtype=int)
    ties = []
    top = V.max(axis=1)
    for i in range(n):
        winners = np.flatnonzero(V[i] == top[i]) + 1
        if len(winners) > 1:
            final[i] = int(rng.choice(winners))
            ties.append(i)
        else:
            final[i] = int(winners[0])
    return VoteMatrix(V, len(aligned)), ConsensusResult(final, tuple(ties), seed, k)


def consensus(assignments: list[ModelAssignment], seed: int = 40, reference: str = "kmeans"):
    """Align then vote. Returns (alignment, votes, result)."""
    amap = align_labels(assignments, reference)
    votes, result = vote([amap.apply(a) for a in assignments], seed)
    return amap, votes, result


def write_consensus(path, domains, votes: VoteMatrix, result: ConsensusResult) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "domain"] + [f"v{c}" for c in range(1, votes.K + 1)] + ["h", "tie"])
        ties = set(result.tie_rows)
        for i, dom in enumerate(domains):
            w.writerow([i, dom] + votes.V[i].tolist() + [int(result.final_labels[i]), int(i in ties)])


def read_consensus(path, seed: int = 40) -> tuple[list[str], VoteMatrix, ConsensusResult]:
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: empty consensus file")
    vcols = [c for c in rows[0] if c.startswith("v") and c[1:].isdigit()]
    V = np.array([[int(r[c]) for c in vcols] for r in rows], dtype=int)
    labels = np.array([int(r["h"]) for r in rows])
    ties = tuple(i for i, r in enumerate(rows) if r["tie"] == "1")
    m = int(V[0].sum())
    return ([r["domain"] for r in rows], VoteMatrix(V, m),
            ConsensusResult(labels, ties, seed, len(vcols)))

import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from campaign_lens.cluster import ModelAssignment
from campaign_lens.consensus import (
    align_labels, consensus, contingency, read_consensus, vote, write_consensus,
)

REF = [1, 1, 2, 2, 3, 3, 3]


def models(*label_lists):
    names = ("kmeans", "kmedoids", "hierarchical", "gmm")
    return [ModelAssignment(n, max(l), l) for n, l in zip(names, label_lists)]


def test_permutation_recovered():
    perm = {1: 3, 2: 1, 3: 2}
    amap = align_labels(models(REF, [perm[x] for x in REF]))
    assert amap.maps["kmedoids"] == {3: 1, 1: 2, 2: 3}
    assert amap.maps["kmeans"] == {1: 1, 2: 2, 3: 3}
    assert amap.apply(models(REF, [perm[x] for x in REF])[1]).labels.tolist() == REF


def test_diagonal_dominant_table_maps_to_identity():
    a = [1] * 5 + [2] * 5 + [3] * 5
    b = [1, 1, 1, 1, 2] + [2, 2, 2, 2, 3] + [3, 3, 3, 3, 1]
    table = contingency(b, a, 3)
    assert table.tolist() == [[4, 0, 1], [1, 4, 0], [0, 1, 4]]
    best = max(itertools.permutations(range(3)), key=lambda p: sum(table[i, p[i]] for i in range(3)))
    assert best == (0, 1, 2)
    assert align_labels(models(a, b)).maps["kmedoids"] == {1: 1, 2: 2, 3: 3}


def test_unanimous_vote():
    votes, res = vote(models(*[[1, 2, 2]] * 4))
    assert votes.V[1].tolist() == [0, 4]
    assert res.final_labels.tolist() == [1, 2, 2] and res.tie_rows == ()


def test_plurality_vote():
    _, _, res = consensus(models([1, 2, 3, 3], [1, 2, 3, 1], [1, 2, 3, 2], [1, 2, 3, 3]))
    assert res.final_labels[3] == 3


def test_tie_is_seeded_and_flagged():
    ms = models([1, 2, 3, 1], [1, 2, 3, 1], [1, 2, 3, 3], [1, 2, 3, 3])
    votes, res = vote(ms, seed=11)
    assert votes.V[3].tolist() == [2, 0, 2]
    assert res.tie_rows == (3,)
    assert res.final_labels[3] in (1, 3)
    outcomes = {int(vote(ms, seed=s)[1].final_labels[3]) for s in range(40)}
    assert outcomes == {1, 3}
    assert vote(ms, seed=11)[1].final_labels.tolist() == res.final_labels.tolist()


@given(st.integers(5, 30), st.integers(2, 5), st.integers(0, 2**16), st.permutations([0, 1, 2, 3]))
def test_invariance_under_relabeling_and_model_order(n, k, seed, order):
    g = np.random.default_rng(seed)
    lists = []
    for _ in range(4):
        lab = np.concatenate([np.arange(1, k + 1), g.integers(1, k + 1, n - k)])
        g.shuffle(lab)
        lists.append(lab)
    ms = models(*lists)
    _, votes, base = consensus(ms, seed)
    assert (votes.V.sum(axis=1) == 4).all()
    relabeled = [ModelAssignment(m.model_id, k, (g.permutation(k) + 1)[m.labels - 1]) for m in ms]
    _, _, again = consensus([relabeled[i] for i in order], seed)
    assert again.final_labels.tolist() == base.final_labels.tolist()
    assert again.tie_rows == base.tie_rows


@given(st.integers(3, 25), st.integers(0, 2**16))
def test_odd_models_two_clusters_never_tie(n, seed):
    g = np.random.default_rng(seed)
    ms = [ModelAssignment(name, 2, np.r_[1, 2, g.integers(1, 3, n - 2)])
          for name in ("kmeans", "kmedoids", "gmm")]
    assert consensus(ms, seed)[2].tie_rows == ()


def test_mismatched_k_rejected():
    with pytest.raises(ValueError):
        align_labels([ModelAssignment("kmeans", 2, [1, 2, 2]), ModelAssignment("gmm", 3, [1, 2, 3])])
    with pytest.raises(ValueError):
        align_labels([ModelAssignment("gmm", 2, [1, 2])])


def test_file_round_trip(tmp_path):
    ms = models([1, 2, 3, 1], [1, 2, 3, 1], [1, 2, 3, 3], [1, 2, 3, 3])
    _, votes, res = consensus(ms, 5)
    write_consensus(tmp_path / "c.csv", ["a.org", "b.org", "c.org", "d.org"], votes, res)
    doms, v2, r2 = read_consensus(tmp_path / "c.csv", 5)
    assert doms == ["a.org", "b.org", "c.org", "d.org"]
    assert np.array_equal(v2.V, votes.V) and v2.m == 4
    assert r2.final_labels.tolist() == res.final_labels.tolist() and r2.tie_rows == res.tie_rows

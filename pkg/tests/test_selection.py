import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from campaign_lens.core import catalog_default
from campaign_lens.featurize import FeatureMatrix
from campaign_lens.selection import (
    CorrelationMatrix, SelectionError, pearson_matrix, prune_correlated, read_scaled, read_selection,
    restrict, standardize, write_scaled, write_selection,
)


def matrix(cols, ids=None, mask=None):
    values = np.column_stack([np.asarray(c, dtype=float) for c in cols])
    ids = ids or [f"f{j}" for j in range(1, values.shape[1] + 1)]
    cat = catalog_default().subset(ids)
    mask = np.zeros_like(values, dtype=bool) if mask is None else mask
    return FeatureMatrix(cat, [f"d{i}.org" for i in range(len(values))], values, mask)


def test_hand_correlation():
    c = pearson_matrix(matrix([[1, 2, 3], [1, 2, 4]]))
    assert c.values[0, 1] == pytest.approx(math.sqrt(27 / 28), abs=1e-12)


def test_self_and_sign_flip():
    x = np.array([0.3, 1.7, -2.0, 5.5])
    c = pearson_matrix(matrix([x, -x]))
    assert c.values[0, 0] == 1.0
    assert c.values[0, 1] == pytest.approx(-1.0, abs=1e-15)


def test_constant_column_correlates_zero():
    c = pearson_matrix(matrix([[1, 2, 3], [4, 4, 4]]))
    assert c.values[0, 1] == 0.0


def test_masked_rows_are_left_out_pairwise():
    mask = np.zeros((4, 2), dtype=bool)
    mask[3, 1] = True
    c = pearson_matrix(matrix([[1, 2, 3, 100], [1, 2, 4, -7]], mask=mask))
    assert c.values[0, 1] == pytest.approx(oracles.pearson([1, 2, 3], [1, 2, 4]), abs=1e-12)


def test_prune_keeps_lower_index():
    x = np.arange(6.0)
    sel = prune_correlated(pearson_matrix(matrix([x, [1, -1, -1, 1, 1, -1], 2 * x + 1])), 0.6)
    assert sel.kept == ("f1", "f2")
    assert sel.dropped[0][:2] == ("f3", "f1")


def test_prune_uncorrelated_keeps_all():
    c = CorrelationMatrix(("f1", "f2", "f3"), np.eye(3))
    assert prune_correlated(c, 0.6).kept == ("f1", "f2", "f3")


@pytest.mark.parametrize("th", [0.0, 1.0, -0.2])
def test_threshold_bounds(th):
    with pytest.raises(SelectionError):
        prune_correlated(CorrelationMatrix(("f1",), np.eye(1)), th)


@given(arrays(float, st.tuples(st.integers(3, 20), st.integers(2, 6)),
              elements=st.floats(-100, 100, allow_nan=False, width=32)),
       st.randoms(use_true_random=False))
def test_pruning_row_order_invariant_and_idempotent(values, rnd):
    m = matrix(list(values.T))
    perm = list(range(len(values)))
    rnd.shuffle(perm)
    shuffled = matrix(list(values[perm].T))
    c1, c2 = pearson_matrix(m), pearson_matrix(shuffled)
    assert np.allclose(c1.values, c2.values, atol=1e-9)
    sel = prune_correlated(c1, 0.6)
    assert prune_correlated(restrict(c1, sel.kept), 0.6).kept == sel.kept
    for i, j in zip(*np.triu_indices(len(sel.kept), 1)):
        assert abs(restrict(c1, sel.kept).values[i, j]) <= 0.6


def test_zscore_population_std():
    m = matrix([[2, 4, 6], [5, 5, 5], [0, 1, 1]], ids=["f1", "f2", "f7"])
    s = standardize(m, prune_correlated(CorrelationMatrix(("f1", "f2", "f7"), np.eye(3)), 0.9))
    assert s.ids == ("f1", "f2", "f7")
    assert np.allclose(s.values[:, 0], [-1.224744871391589, 0, 1.224744871391589], atol=1e-12)
    assert (s.values[:, 1] == 0).all()
    assert s.values[:, 2].tolist() == [0, 1, 1]


def test_selection_and_scaled_round_trip(tmp_path):
    m = matrix([[2, 4, 6, 9], [1, 0, 3, 3]])
    sel = prune_correlated(pearson_matrix(m), 0.6)
    write_selection(sel, 0.6, tmp_path / "s.json")
    back = read_selection(tmp_path / "s.json")
    assert back.kept == sel.kept
    assert [d[:2] for d in back.dropped] == [d[:2] for d in sel.dropped]
    assert [d[2] for d in back.dropped] == pytest.approx([d[2] for d in sel.dropped], abs=1e-12)
    s = standardize(m, sel)
    write_scaled(s, m.domains, tmp_path / "x.csv")
    domains, back = read_scaled(tmp_path / "x.csv")
    assert domains == m.domains
    assert np.array_equal(back.values, s.values)

import numpy as np
import pytest

import oracles
from campaign_lens.explain import (
    Hyperparams, SurrogateError, Tree, confusion_matrix, fit_boosting, metrics_from_confusion,
    read_summary, shap_values, stratified_split, summarize, train_surrogate, tree_shap, write_explain,
)


def stump(feature, threshold, left, right, cover=(10, 4, 6)):
    t = Tree()
    root = t.add(cover[0])
    t.feature[root], t.threshold[root] = feature, threshold
    t.left[root] = t.add(cover[1])
    t.right[root] = t.add(cover[2])
    t.value[t.left[root]], t.value[t.right[root]] = left, right
    return t


def blobs(g, n=90):
    y = np.repeat([1, 2, 3], n // 3)
    x = g.normal(size=(n, 4))
    x[:, 0] += (y == 2) * 6
    x[:, 1] += (y == 3) * 6
    return x, y


def test_stump_puts_all_mass_on_split_feature():
    t = stump(2, 0.5, -1.0, 3.0)
    for x in ([0, 0, 0.0, 0], [0, 0, 1.0, 0]):
        phi = np.zeros(4)
        tree_shap(t, np.array(x), phi)
        ref = oracles.shapley(lambda s: oracles.tree_conditional_expectation(t, x, s), 4)
        assert np.allclose(phi, ref, atol=1e-12)
        assert phi[[0, 1, 3]].tolist() == [0, 0, 0]
        assert phi[2] + t.expected_value() == pytest.approx(t.predict(np.array([x]))[0])


def test_repeated_feature_on_path_matches_oracle():
    t = Tree()
    r = t.add(20)
    t.feature[r], t.threshold[r] = 0, 0.0
    a, b = t.add(12), t.add(8)
    t.left[r], t.right[r] = a, b
    t.feature[a], t.threshold[a] = 0, -1.0
    t.left[a], t.right[a] = t.add(5), t.add(7)
    t.feature[b], t.threshold[b] = 1, 0.0
    t.left[b], t.right[b] = t.add(3), t.add(5)
    for leaf, v in zip((t.left[a], t.right[a], t.left[b], t.right[b]), (1.0, -2.0, 4.0, 0.5)):
        t.value[leaf] = v
    for x in ([-2, 1.0, 0], [-0.5, -1.0, 0], [1, -1.0, 0], [1, 1.0, 0]):
        phi = np.zeros(3)
        tree_shap(t, np.array(x, float), phi)
        ref = oracles.shapley(lambda s: oracles.tree_conditional_expectation(t, x, s), 3)
        assert np.allclose(phi, ref, atol=1e-12)


def test_null_feature_leaves_attributions_unchanged(rng):
    x, y = blobs(rng)
    hp = Hyperparams(rounds=20)
    m1 = fit_boosting(x, y, hp, list("abcd"))
    x2 = np.column_stack([x, np.full(len(x), 3.0)])
    m2 = fit_boosting(x2, y, hp, list("abcde"))
    s1, s2 = shap_values(m1, x[:10]), shap_values(m2, x2[:10])
    assert np.allclose(s1.values, s2.values[:, :, :4], atol=1e-12)
    assert (s2.values[:, :, 4] == 0).all()
    ranking = summarize(s2, x2[:10]).ranking
    assert all(r[-1].feature == "e" and r[-1].mean_abs == 0 for r in ranking.values())


def test_training_loss_nonincreasing_and_local_accuracy(rng):
    x, y = blobs(rng)
    m = fit_boosting(x, y, Hyperparams(rounds=40), list("abcd"))
    assert all(b <= a + 1e-9 for a, b in zip(m.train_loss, m.train_loss[1:]))
    s = shap_values(m, x)
    assert np.abs(s.values.sum(axis=2) + s.base_values[:, None] - m.margin(x).T).max() < 1e-6


def test_separating_feature_ranks_first(rng):
    x, y = blobs(rng, 150)
    model, metrics, _, test = train_surrogate(x, y, seed=40, feature_ids=list("abcd"))
    assert metrics.accuracy >= 0.95
    ranking = summarize(shap_values(model, x[test]), x[test]).ranking
    assert ranking[2][0].feature == "a" and ranking[2][0].direction == 1
    assert ranking[3][0].feature == "b"


def test_metrics_recompute_from_confusion(rng):
    x, y = blobs(rng)
    model, metrics, _, test = train_surrogate(x, y, Hyperparams(rounds=10), seed=3)
    conf = confusion_matrix(y[test], model.predict(x[test]), model.classes)
    assert np.array_equal(conf, metrics.confusion)
    assert (metrics.accuracy, metrics.precision, metrics.recall, metrics.f1) == metrics_from_confusion(conf)
    assert metrics_from_confusion([[2, 1], [0, 1]]) == pytest.approx((0.75, (1 + 0.5) / 2, (2 / 3 + 1) / 2,
                                                                      (0.8 + 2 / 3) / 2))


def test_stratified_split_covers_every_class():
    y = np.repeat([1, 2, 3], [2, 10, 5])
    train, test = stratified_split(y, 0.2, 40)
    assert set(y[train]) == set(y[test]) == {1, 2, 3}
    assert sorted(np.r_[train, test].tolist()) == list(range(17))
    assert stratified_split(y, 0.2, 40)[1].tolist() == test.tolist()


def test_degenerate_labels_rejected(rng):
    x = rng.normal(size=(10, 2))
    with pytest.raises(SurrogateError):
        train_surrogate(x, np.ones(10, int))
    with pytest.raises(SurrogateError):
        train_surrogate(x, np.r_[np.ones(9, int), 2])


def test_same_seed_same_model(rng):
    x, y = blobs(rng)
    a = train_surrogate(x, y, Hyperparams(rounds=15), seed=9)
    b = train_surrogate(x, y, Hyperparams(rounds=15), seed=9)
    assert a[0].train_loss == b[0].train_loss
    assert np.array_equal(shap_values(a[0], x).values, shap_values(b[0], x).values)


def test_feature_count_mismatch(rng):
    x, y = blobs(rng)
    m = fit_boosting(x, y, Hyperparams(rounds=2), list("abcd"))
    with pytest.raises(SurrogateError):
        shap_values(m, x[:, :3])


def test_write_and_read_summary(tmp_path, rng):
    x, y = blobs(rng)
    model, metrics, _, test = train_surrogate(x, y, Hyperparams(rounds=10), feature_ids=list("abcd"))
    shap = shap_values(model, x[test])
    write_explain(tmp_path, model, metrics, shap, summarize(shap, x[test]), [f"d{i}" for i in test])
    doc = read_summary(tmp_path)
    assert doc["accuracy"] == pytest.approx(metrics.accuracy)
    assert doc["classes"] == [1, 2, 3]
    assert [r["feature"] for r in doc["ranking"]["2"]][0] == "a"

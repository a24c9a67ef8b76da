import numpy as np
import pytest

from onebitfl.core import rng_from
from onebitfl.learners import (Dataset, Learner, load_csv, loss_and_grad,
                               measure_dissimilarity, partition_label_skew,
                               save_csv, synth_generate)


def make_learner(kind, p=4, C=3, hidden=6):
    return Learner(kind=kind, p=p, n_classes=C, hidden=hidden)


# ----------------------------------------------------------------- synthetic

def test_synth_deterministic_given_seed():
    a = synth_generate(3, 20, 5, 2.0, rng_from(1))
    b = synth_generate(3, 20, 5, 2.0, rng_from(1))
    np.testing.assert_array_equal(a.features, b.features)
    np.testing.assert_array_equal(a.labels, b.labels)


def test_synth_shapes_and_balance():
    d = synth_generate(4, 50, 7, 2.0, rng_from(2))
    assert d.features.shape == (200, 7)
    assert all((d.labels == c).sum() == 50 for c in range(4))


def centralized_fit(learner, d, steps=400, lr=0.5):
    w = learner.init_params(rng_from(0))
    for _ in range(steps):
        _, g = learner.loss_grad(w, d.features, d.labels)
        w = w - lr * g
    return w


def test_wide_spread_is_separable():
    # far-apart blobs: centralized training must reach near-perfect accuracy
    d = synth_generate(2, 200, 8, 10.0, rng_from(3))
    learner = make_learner("logistic", p=8, C=2)
    w = centralized_fit(learner, d)
    assert learner.accuracy(w, d) >= 0.99


def test_zero_spread_is_chance_level():
    rng = rng_from(4)
    train = synth_generate(2, 500, 8, 0.0, rng)
    test = synth_generate(2, 500, 8, 0.0, rng)
    learner = make_learner("logistic", p=8, C=2)
    w = centralized_fit(learner, train, steps=200)
    assert abs(learner.accuracy(w, test) - 0.5) <= 0.08


def test_shared_centers_fresh_noise():
    center_rng = rng_from(5)
    a = synth_generate(3, 10, 4, 2.0, center_rng)
    b = synth_generate(3, 10, 4, 2.0, rng_from(5), noise_rng=rng_from(6))
    # same per-class means in expectation (identical centers), different samples
    assert not np.array_equal(a.features, b.features)
    for c in range(3):
        diff = a.features[a.labels == c].mean(0) - b.features[b.labels == c].mean(0)
        assert np.linalg.norm(diff) < 2.5  # noise-level, not center-level, gap


# ----------------------------------------------------------------- partition

def test_partition_conservation_and_no_duplication():
    d = synth_generate(4, 30, 3, 2.0, rng_from(7))
    parts = partition_label_skew(d, n_clients=6, classes_per_client=2, rng=rng_from(8))
    assert sum(p.n for p in parts) == d.n
    stacked = np.vstack([p.features for p in parts])
    order_a = np.lexsort(stacked.T)
    order_b = np.lexsort(d.features.T)
    np.testing.assert_array_equal(stacked[order_a], d.features[order_b])


def test_partition_respects_class_cap():
    d = synth_generate(10, 12, 3, 2.0, rng_from(9))
    parts = partition_label_skew(d, n_clients=10, classes_per_client=2, rng=rng_from(10))
    for p in parts:
        assert len(np.unique(p.labels)) <= 2


def test_partition_k_equals_c_is_homogeneous():
    d = synth_generate(3, 30, 2, 2.0, rng_from(11))
    parts = partition_label_skew(d, n_clients=5, classes_per_client=3, rng=rng_from(12))
    for p in parts:
        assert set(np.unique(p.labels)) == {0, 1, 2}
    sizes = [p.n for p in parts]
    assert max(sizes) - min(sizes) <= 3  # equal up to per-class remainders


def test_partition_pure_classes_when_k1_m_equals_c():
    d = synth_generate(4, 25, 2, 2.0, rng_from(13))
    parts = partition_label_skew(d, n_clients=4, classes_per_client=1, rng=rng_from(14))
    seen = set()
    for p in parts:
        labels = set(np.unique(p.labels))
        assert len(labels) == 1
        seen |= labels
    assert seen == {0, 1, 2, 3}


def test_partition_relaxes_cap_when_undercovered():
    # 2 clients * 1 class < 4 classes: cap is relaxed so no sample is dropped
    d = synth_generate(4, 10, 2, 2.0, rng_from(15))
    parts = partition_label_skew(d, n_clients=2, classes_per_client=1, rng=rng_from(16))
    assert sum(p.n for p in parts) == d.n


def test_partition_near_equal_sizes():
    d = synth_generate(4, 500, 16, 2.0, rng_from(17))
    parts = partition_label_skew(d, n_clients=50, classes_per_client=2, rng=rng_from(18))
    sizes = np.array([p.n for p in parts])
    assert sizes.sum() == 2000
    assert sizes.min() >= 0.5 * sizes.mean()
    assert sizes.max() <= 2.0 * sizes.mean()


# -------------------------------------------------------------- loss and grad

def test_zero_weights_uniform_loss():
    d = synth_generate(3, 10, 4, 2.0, rng_from(19))
    learner = make_learner("logistic", p=4, C=3)
    learner.params = np.zeros(learner.dim)
    loss, _ = loss_and_grad(learner, d, np.arange(d.n))
    assert loss == pytest.approx(np.log(3), rel=1e-12)


def finite_difference(learner, w, X, y, h=1e-5):
    g = np.zeros_like(w)
    for j in range(w.size):
        wp, wm = w.copy(), w.copy()
        wp[j] += h
        wm[j] -= h
        g[j] = (learner.loss(wp, X, y) - learner.loss(wm, X, y)) / (2 * h)
    return g


@pytest.mark.parametrize("kind", ["logistic", "mlp"])
def test_gradient_matches_finite_differences(kind):
    d = synth_generate(3, 8, 4, 2.0, rng_from(20))
    learner = make_learner(kind, p=4, C=3)
    rng = rng_from(21)
    for _ in range(10):
        w = rng.normal(0.0, 0.5, size=learner.dim)
        _, g = learner.loss_grad(w, d.features, d.labels)
        fd = finite_difference(learner, w, d.features, d.labels)
        denom = max(np.abs(fd).max(), 1e-8)
        assert np.abs(g - fd).max() / denom <= 1e-6


def test_duplicated_batch_is_invariant():
    d = synth_generate(3, 8, 4, 2.0, rng_from(22))
    learner = make_learner("logistic", p=4, C=3)
    learner.params = rng_from(23).normal(size=learner.dim)
    batch = np.arange(d.n)
    l1, g1 = loss_and_grad(learner, d, batch)
    l2, g2 = loss_and_grad(learner, d, np.concatenate([batch, batch]))
    assert l1 == pytest.approx(l2, rel=1e-12)
    np.testing.assert_allclose(g1, g2, rtol=1e-12)


# ------------------------------------------------------------- dissimilarity

def test_dissimilarity_identical_gradients():
    g = rng_from(24).normal(size=6)
    assert measure_dissimilarity([g, g.copy(), g.copy()]) == pytest.approx(1.0)


def test_dissimilarity_opposed_gradients_sentinel():
    g = np.array([1.0, -2.0])
    assert measure_dissimilarity([g, -g]) == np.inf


def test_dissimilarity_matches_naive_oracle():
    grads = [rng_from(25 + i).normal(size=5) for i in range(7)]
    mean_sq = np.mean([g @ g for g in grads])
    mean_g = np.mean(grads, axis=0)
    naive = np.sqrt(mean_sq / (mean_g @ mean_g))
    assert measure_dissimilarity(grads) == pytest.approx(naive, rel=1e-12)


def test_dissimilarity_at_least_one():
    rng = rng_from(26)
    for _ in range(20):
        grads = [rng.normal(size=4) for _ in range(5)]
        assert measure_dissimilarity(grads) >= 1.0 - 1e-12


# ----------------------------------------------------------------------- csv

def test_csv_roundtrip(tmp_path):
    d = synth_generate(3, 12, 5, 2.0, rng_from(27))
    path = tmp_path / "data.csv"
    save_csv(d, path)
    back = load_csv(path)
    np.testing.assert_array_equal(back.features, d.features)
    np.testing.assert_array_equal(back.labels, d.labels)
    assert back.n_classes == 3


def test_load_csv_validates_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b,label\n1,2,0\n")
    with pytest.raises(ValueError):
        load_csv(path)

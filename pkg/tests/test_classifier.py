import numpy as np
import pytest
from sklearn.linear_model import LogisticRegression

from inkatlas.classifier import (
    ClassifierError,
    FeatureVector,
    HeadConfig,
    LabeledFeatures,
    accuracy,
    classify,
    forward_probs,
    load_feature_file,
    load_labels_file,
    load_model,
    loss_and_gradients,
    save_feature_file,
    save_model,
    split_dataset,
    train_head,
)
from inkatlas.corpus import PaintingType


def make_blobs(n_per_class=200, dim=512, sep=2.0, seed=7):
    """Two Gaussian blobs at -sep*e1 (gongbi) and +sep*e1 (xieyi), unit variance."""
    rng = np.random.default_rng(seed)
    xa = rng.normal(0.0, 1.0, size=(n_per_class, dim))
    xa[:, 0] -= sep
    xb = rng.normal(0.0, 1.0, size=(n_per_class, dim))
    xb[:, 0] += sep
    ids = [f"g{i:04d}" for i in range(n_per_class)] + [f"x{i:04d}" for i in range(n_per_class)]
    x = np.vstack([xa, xb])
    y = np.array([0] * n_per_class + [1] * n_per_class)
    return LabeledFeatures(ids=ids, x=x, y=y)


def split_labeled(data, ratio, seed):
    train_ids, val_ids = split_dataset(data.ids, ratio, seed)
    return data.subset(train_ids), data.subset(val_ids)


class TestSplitDataset:
    def test_seven_three_split_sizes(self):
        ids = [f"id{i}" for i in range(1000)]
        train, val = split_dataset(ids, 0.7, seed=42)
        assert len(train) == 700 and len(val) == 300

    def test_deterministic_for_fixed_seed(self):
        ids = [f"id{i}" for i in range(100)]
        assert split_dataset(ids, 0.7, seed=42) == split_dataset(ids, 0.7, seed=42)

    def test_partition_against_set_algebra_oracle(self):
        ids = [f"id{i}" for i in range(10)]
        train, val = split_dataset(ids, 0.7, seed=1)
        assert len(train) == 7
        assert set(train) | set(val) == set(ids)
        assert set(train) & set(val) == set()

    def test_split_independent_of_input_order(self):
        ids = [f"id{i}" for i in range(50)]
        forward = split_dataset(ids, 0.6, seed=9)
        backward = split_dataset(list(reversed(ids)), 0.6, seed=9)
        assert forward == backward

    def test_invalid_ratio_and_empty_ids(self):
        with pytest.raises(ClassifierError):
            split_dataset(["a"], 0.0, seed=0)
        with pytest.raises(ClassifierError):
            split_dataset(["a"], 1.0, seed=0)
        with pytest.raises(ClassifierError):
            split_dataset([], 0.5, seed=0)


class TestGradients:
    def test_analytic_gradients_match_finite_differences(self):
        rng = np.random.default_rng(2024)
        checked = 0
        while checked < 20:
            d = int(rng.integers(2, 9))
            hidden = int(rng.integers(1, 9))
            n = int(rng.integers(3, 7))
            x = rng.normal(0, 1, size=(n, d))
            y = rng.integers(0, 2, size=n)
            w1 = rng.normal(0, 1, size=(d, hidden))
            b1 = rng.normal(0, 0.5, size=hidden)
            w2 = rng.normal(0, 1, size=(hidden, 2))
            b2 = rng.normal(0, 0.5, size=2)
            # stay clear of the relu kink, where finite differences misbehave
            if np.any(np.abs(x @ w1 + b1) < 1e-2):
                continue
            mask = (rng.random((n, hidden)) < 0.5) / 0.5 if checked % 2 else None
            _, grads = loss_and_gradients(w1, b1, w2, b2, x, y, mask)
            numeric = _finite_difference_grads(w1, b1, w2, b2, x, y, mask)
            for analytic, fd in zip(grads, numeric):
                denom = max(np.linalg.norm(analytic), np.linalg.norm(fd), 1e-12)
                assert np.linalg.norm(analytic - fd) / denom <= 1e-3
            checked += 1

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(0)
        data = make_blobs(n_per_class=10, dim=8, seed=3)
        config = HeadConfig(hidden_width=4, epochs=1, seed=1)
        model, _ = train_head(*split_labeled(data, 0.7, seed=0), config)
        probs = forward_probs(model, rng.normal(0, 5, size=(100, 8)))
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-9)


def _finite_difference_grads(w1, b1, w2, b2, x, y, mask, step=1e-4):
    params = [w1.copy(), b1.copy(), w2.copy(), b2.copy()]
    grads = []
    for i, p in enumerate(params):
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + step
            up, _ = loss_and_gradients(*params, x, y, mask)
            p[idx] = orig - step
            down, _ = loss_and_gradients(*params, x, y, mask)
            p[idx] = orig
            g[idx] = (up - down) / (2 * step)
            it.iternext()
        grads.append(g)
    return grads


@pytest.fixture(scope="module")
def blob_run():
    data = make_blobs()
    train, val = split_labeled(data, 0.7, seed=42)
    config = HeadConfig(seed=7)
    model, val_acc = train_head(train, val, config)
    return data, train, val, model, val_acc


class TestTraining:

    def test_blob_validation_accuracy(self, blob_run):
        _, train, val, _, val_acc = blob_run
        assert val_acc >= 0.95
        # separability oracle: plain logistic regression must also clear 0.95
        oracle = LogisticRegression(max_iter=1000).fit(train.x, train.y)
        assert oracle.score(val.x, val.y) >= 0.95

    def test_fixed_seed_reproduces_weights_bit_for_bit(self):
        data = make_blobs(n_per_class=30, dim=16, seed=5)
        train, val = split_labeled(data, 0.7, seed=0)
        config = HeadConfig(hidden_width=8, epochs=5, seed=99)
        m1, _ = train_head(train, val, config)
        m2, _ = train_head(train, val, config)
        for a, b in [(m1.w1, m2.w1), (m1.b1, m2.b1), (m1.w2, m2.w2), (m1.b2, m2.b2)]:
            assert np.array_equal(a, b)

    def test_training_invariant_to_input_row_order(self):
        data = make_blobs(n_per_class=30, dim=16, seed=5)
        train, val = split_labeled(data, 0.7, seed=0)
        perm = np.random.default_rng(4).permutation(len(train.ids))
        shuffled = LabeledFeatures(
            ids=[train.ids[i] for i in perm], x=train.x[perm], y=train.y[perm]
        )
        config = HeadConfig(hidden_width=8, epochs=5, seed=99)
        m1, _ = train_head(train, val, config)
        m2, _ = train_head(shuffled, val, config)
        assert np.array_equal(m1.w1, m2.w1) and np.array_equal(m1.w2, m2.w2)

    def test_single_class_training_set_is_an_error(self):
        data = make_blobs(n_per_class=10, dim=4, seed=2)
        only_gongbi = data.subset([i for i in data.ids if i.startswith("g")])
        val = data.subset(data.ids[:4])
        with pytest.raises(ClassifierError, match="per class"):
            train_head(only_gongbi, val, HeadConfig(hidden_width=4, epochs=1))

    def test_dimension_mismatch_is_an_error(self):
        a = make_blobs(n_per_class=5, dim=4, seed=1)
        b = make_blobs(n_per_class=5, dim=6, seed=1)
        with pytest.raises(ClassifierError, match="mismatch"):
            train_head(a, b, HeadConfig(hidden_width=4, epochs=1))

    def test_classify_blob_means_and_oracle_agreement(self, blob_run):
        data, train, _, model, _ = blob_run
        dim = data.x.shape[1]
        gongbi_mean = np.zeros(dim)
        gongbi_mean[0] = -2.0
        xieyi_mean = np.zeros(dim)
        xieyi_mean[0] = 2.0
        oracle = LogisticRegression(max_iter=1000).fit(train.x, train.y)
        for values, expected, oracle_class in [
            (gongbi_mean, PaintingType.GONGBI, 0),
            (xieyi_mean, PaintingType.XIEYI, 1),
        ]:
            label, confidence = classify(model, FeatureVector("probe", tuple(values)))
            assert label is expected
            assert confidence > 0.5
            assert oracle.predict(values[None, :])[0] == oracle_class

    def test_classify_reproduces_validation_accuracy(self, blob_run):
        _, _, val, model, val_acc = blob_run
        hits = 0
        for rid, values, y in zip(val.ids, val.x, val.y):
            label, _ = classify(model, FeatureVector(rid, tuple(values)))
            hits += label is (PaintingType.GONGBI if y == 0 else PaintingType.XIEYI)
        assert hits / len(val.ids) == val_acc

    def test_equal_logits_break_to_first_class(self):
        config = HeadConfig(hidden_width=2, epochs=1)
        model = _zero_model(dim=3, hidden=2, config=config)
        label, confidence = classify(model, FeatureVector("t", (1.0, 2.0, 3.0)))
        assert label is PaintingType.GONGBI
        assert confidence == pytest.approx(0.5)


def _zero_model(dim, hidden, config):
    from inkatlas.classifier import ClassifierModel

    return ClassifierModel(
        w1=np.zeros((dim, hidden)),
        b1=np.zeros(hidden),
        w2=np.zeros((hidden, 2)),
        b2=np.zeros(2),
        config=config,
    )


class TestFeatureFiles:
    def test_round_trip(self, tmp_path):
        vectors = [
            FeatureVector("a", (1.0, -2.5, 3.25)),
            FeatureVector("b", (0.0, 0.125, -7.0)),
        ]
        path = tmp_path / "features.csv"
        save_feature_file(path, vectors)
        assert load_feature_file(path) == vectors

    def test_header_and_width_validation(self, tmp_path):
        bad_header = tmp_path / "f1.csv"
        bad_header.write_text("3\nr1,1,2,3\n")
        with pytest.raises(ClassifierError, match="D="):
            load_feature_file(bad_header)
        bad_width = tmp_path / "f2.csv"
        bad_width.write_text("D=3\nr1,1,2\n")
        with pytest.raises(ClassifierError, match="expected 3"):
            load_feature_file(bad_width)

    def test_labels_file(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("r1,gongbi\nr2,xieyi\n")
        labels = load_labels_file(path)
        assert labels == {"r1": PaintingType.GONGBI, "r2": PaintingType.XIEYI}
        bad = tmp_path / "bad.csv"
        bad.write_text("r1,ink\n")
        with pytest.raises(ClassifierError):
            load_labels_file(bad)

    def test_model_round_trip(self, tmp_path):
        data = make_blobs(n_per_class=10, dim=6, seed=8)
        train, val = split_labeled(data, 0.7, seed=0)
        model, _ = train_head(train, val, HeadConfig(hidden_width=4, epochs=2, seed=3))
        path = tmp_path / "model.npz"
        save_model(model, path)
        loaded = load_model(path)
        assert np.array_equal(loaded.w1, model.w1)
        assert loaded.config == model.config
        probe = FeatureVector("p", tuple(np.ones(6)))
        assert classify(loaded, probe) == classify(model, probe)

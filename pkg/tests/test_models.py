import hashlib
import math

import numpy as np
import pytest

from cyclepgd.models import (
    LinearSoftmaxClassifier,
    ModelFormatError,
    MlpClassifier,
    cross_entropy,
    finite_diff_grad,
    load_model,
    save_model,
    softmax,
)
from cyclepgd.rng import SplitMix64


class TestSoftmax:
    def test_symmetric(self):
        assert np.allclose(softmax(np.zeros(2)), [0.5, 0.5], atol=0)

    def test_saturation_no_overflow(self):
        p = softmax(np.array([1000.0, 0.0]))
        assert np.all(np.isfinite(p))
        assert abs(p[0] - 1.0) < 1e-12 and p[1] < 1e-12

    def test_sums_to_one(self):
        rng = SplitMix64(1)
        for _ in range(100):
            p = softmax(np.array(rng.normals(6)) * 10)
            assert abs(p.sum() - 1.0) < 1e-12
            assert np.all(p >= 0)

    def test_shift_invariance(self):
        rng = SplitMix64(2)
        for _ in range(50):
            v = np.array(rng.normals(5))
            c = rng.normal() * 100
            assert np.allclose(softmax(v + c), softmax(v), atol=1e-12)


class TestCrossEntropy:
    def test_ln2(self):
        assert cross_entropy(np.zeros(2), 0) == pytest.approx(math.log(2.0), abs=1e-15)

    def test_saturated_pair(self):
        # independent oracle: log(1 + e^-20) via log1p
        expected = math.log1p(math.exp(-20.0))
        got = cross_entropy(np.array([10.0, -10.0]), 0)
        assert got == pytest.approx(expected, rel=1e-12)

    def test_monotone_in_true_logit(self):
        losses = [cross_entropy(np.array([z, 1.0, -1.0]), 0) for z in (0.0, 1.0, 2.0, 5.0)]
        assert all(a > b for a, b in zip(losses, losses[1:]))

    def test_finite_for_extreme_logits(self):
        assert math.isfinite(cross_entropy(np.array([-1e4, 1e4]), 0))

    def test_rejects_bad_label(self):
        with pytest.raises(ValueError):
            cross_entropy(np.zeros(3), 3)
        with pytest.raises(ValueError):
            cross_entropy(np.zeros(3), -1)


def _random_linear(rng, d, m):
    model = LinearSoftmaxClassifier(n_classes=m)
    W = np.array(rng.normals(m * d)).reshape(m, d)
    b = np.array(rng.normals(m))
    return model.set_weights(W, b)


def _random_mlp(rng, d, h, m, activation):
    model = MlpClassifier(n_classes=m, hidden=h, activation=activation)
    W1 = np.array(rng.normals(h * d)).reshape(h, d)
    W2 = np.array(rng.normals(m * h)).reshape(m, h)
    return model.set_weights(W1, np.array(rng.normals(h)), W2, np.array(rng.normals(m)))


class TestInputGradients:
    def test_identity_linear_symmetric_point(self):
        model = LinearSoftmaxClassifier(n_classes=2).set_weights(np.eye(2), np.zeros(2))
        loss, grad = model.loss_and_input_grad(np.zeros(2), 0)
        assert loss == pytest.approx(math.log(2.0), abs=1e-15)
        assert np.allclose(grad, [-0.5, 0.5], atol=0)

    @pytest.mark.parametrize("arch", ["linear", "mlp-relu", "mlp-tanh"])
    def test_matches_finite_differences(self, arch):
        rng = SplitMix64(sum(map(ord, arch)))
        for trial in range(10):
            d, m = 6, 3
            if arch == "linear":
                model = _random_linear(rng, d, m)
            else:
                model = _random_mlp(rng, d, 5, m, arch.split("-")[1])
            x = np.array(rng.normals(d)) * 0.5
            y = trial % m
            _, grad = model.loss_and_input_grad(x, y)
            fd = finite_diff_grad(model, x, y, h=1e-5)
            denom = max(np.linalg.norm(fd), 1e-12)
            assert np.linalg.norm(grad - fd) / denom < 1e-4

    def test_dead_relu_zero_grad(self):
        # all-negative pre-activations kill every relu unit
        model = MlpClassifier(n_classes=2, hidden=3, activation="relu")
        model.set_weights(np.zeros((3, 2)), np.full(3, -1.0), np.ones((2, 3)), np.zeros(2))
        _, grad = model.loss_and_input_grad(np.array([0.3, -0.4]), 0)
        assert np.array_equal(grad, np.zeros(2))

    def test_finite_diff_zero_on_constant_model(self):
        model = LinearSoftmaxClassifier(n_classes=2).set_weights(np.zeros((2, 3)), np.array([1.0, 0.0]))
        fd = finite_diff_grad(model, np.array([0.1, 0.2, 0.3]), 0)
        assert np.array_equal(fd, np.zeros(3))

    def test_fused_eval_matches_split_calls(self):
        rng = SplitMix64(77)
        for arch in ("linear", "relu", "tanh"):
            model = (
                _random_linear(rng, 5, 3)
                if arch == "linear"
                else _random_mlp(rng, 5, 4, 3, arch)
            )
            x = np.array(rng.normals(5))
            grad, label = model.eval_grad_and_label(x, 1)
            _, grad_ref = model.loss_and_input_grad(x, 1)
            assert grad.tobytes() == grad_ref.tobytes()
            assert label == model.predict_one(x)


class TestPredict:
    def test_argmax_tie_breaks_low_index(self):
        model = LinearSoftmaxClassifier(n_classes=3).set_weights(np.zeros((3, 2)), np.zeros(3))
        assert model.predict_one(np.array([0.4, 0.6])) == 0

    def test_batch_predict_agrees_with_predict_one(self, blobs2, linear2):
        batch = linear2.predict(blobs2.X[:20])
        singles = [linear2.predict_one(x) for x in blobs2.X[:20]]
        assert list(batch) == singles

    def test_forward_bit_reproducible(self, mlp16, blobs16):
        x = blobs16.X[0]
        digests = {hashlib.blake2b(mlp16.forward(x).tobytes()).hexdigest() for _ in range(5)}
        assert len(digests) == 1


class TestTraining:
    def test_blobs_accuracy(self, blobs2, linear2):
        assert linear2.score(blobs2.X, blobs2.y) >= 0.95

    def test_mlp_blobs_accuracy(self, blobs16, mlp16):
        assert mlp16.score(blobs16.X, blobs16.y) >= 0.95

    def test_zero_steps_keeps_init(self):
        ds_X = np.array([[0.1, 0.9], [0.8, 0.2]])
        ds_y = np.array([0, 1])
        a = MlpClassifier(n_classes=2, hidden=4, n_steps=0, seed=12).fit(ds_X, ds_y)
        b = MlpClassifier(n_classes=2, hidden=4, n_steps=0, seed=12)
        W1, b1, W2, b2 = b._init_params(2)
        assert a.W1_.tobytes() == W1.tobytes()
        assert a.W2_.tobytes() == W2.tobytes()
        assert np.array_equal(a.b1_, b1) and np.array_equal(a.b2_, b2)

    def test_same_seed_bit_identical(self, blobs2):
        a = MlpClassifier(n_classes=2, hidden=8, n_steps=50, seed=3).fit(blobs2.X, blobs2.y)
        b = MlpClassifier(n_classes=2, hidden=8, n_steps=50, seed=3).fit(blobs2.X, blobs2.y)
        for name in a.param_arrays():
            assert a.param_arrays()[name].tobytes() == b.param_arrays()[name].tobytes()

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            LinearSoftmaxClassifier(n_classes=2).fit(np.zeros((0, 3)), np.zeros(0))

    def test_bad_activation_rejected(self):
        with pytest.raises(ValueError):
            MlpClassifier(n_classes=2, activation="gelu").fit(
                np.array([[0.0, 1.0]]), np.array([0])
            )


class TestEstimatorProtocol:
    def test_get_set_params_roundtrip(self):
        model = MlpClassifier(n_classes=4, hidden=16, activation="tanh", seed=9)
        params = model.get_params()
        assert params["hidden"] == 16 and params["activation"] == "tanh"
        model.set_params(hidden=8)
        assert model.hidden == 8
        with pytest.raises(ValueError):
            model.set_params(bogus=1)

    def test_sklearn_clone_compatible(self, blobs2):
        sklearn_base = pytest.importorskip("sklearn.base")
        model = LinearSoftmaxClassifier(n_classes=2, n_steps=20)
        clone = sklearn_base.clone(model)
        assert clone.get_params() == model.get_params()
        clone.fit(blobs2.X, blobs2.y)
        assert clone.score(blobs2.X, blobs2.y) > 0.5


class TestSerialization:
    @pytest.mark.parametrize("arch", ["linear", "mlp"])
    def test_roundtrip_bit_exact(self, arch, tmp_path, blobs2):
        if arch == "linear":
            model = LinearSoftmaxClassifier(n_classes=2, n_steps=30).fit(blobs2.X, blobs2.y)
        else:
            model = MlpClassifier(n_classes=2, hidden=6, n_steps=30, seed=4).fit(blobs2.X, blobs2.y)
        path = tmp_path / "weights.json"
        save_model(model, path)
        loaded = load_model(path)
        x = blobs2.X[3]
        assert loaded.forward(x).tobytes() == model.forward(x).tobytes()
        assert loaded.model_id() == model.model_id()

    def test_truncated_file_rejected(self, tmp_path, blobs2, linear2):
        path = tmp_path / "weights.json"
        save_model(linear2, path)
        raw = path.read_text()
        path.write_text(raw[: len(raw) // 2])
        with pytest.raises(ModelFormatError):
            load_model(path)

    def test_wrong_dims_rejected(self, tmp_path, linear2):
        import json

        path = tmp_path / "weights.json"
        save_model(linear2, path)
        doc = json.loads(path.read_text())
        doc["dim_in"] = 999
        path.write_text(json.dumps(doc))
        with pytest.raises(ModelFormatError):
            load_model(path)

    def test_unknown_schema_rejected(self, tmp_path, linear2):
        import json

        path = tmp_path / "weights.json"
        save_model(linear2, path)
        doc = json.loads(path.read_text())
        doc["schema_version"] = 99
        path.write_text(json.dumps(doc))
        with pytest.raises(ModelFormatError):
            load_model(path)

    def test_unknown_arch_rejected(self, tmp_path, linear2):
        import json

        path = tmp_path / "weights.json"
        save_model(linear2, path)
        doc = json.loads(path.read_text())
        doc["arch"] = "transformer"
        path.write_text(json.dumps(doc))
        with pytest.raises(ModelFormatError):
            load_model(path)

import numpy as np
import pytest

from cwlcascade.errors import (
    CheckpointError,
    EmptyDatasetError,
    KTooLargeError,
    ShapeMismatchError,
)
from cwlcascade.nn import (
    AdamState,
    Conv1D,
    Conv2D,
    Dense,
    Flatten,
    MaxPool1D,
    MaxPool2D,
    ReLU,
    Sequential,
    Softmax,
    TrainConfig,
    adam_step,
    build_cnn1d,
    build_cnn2d,
    cross_entropy,
    evaluate_accuracy,
    freeze_all_but,
    load_checkpoint,
    one_hot,
    pretrain_and_freeze,
    save_checkpoint,
    train,
)
from cwlcascade.nn.gradcheck import (
    check_layer_input_gradient,
    check_model_gradients,
    numeric_grad,
    rel_error,
)

F64 = np.float64


# ---- forward -----------------------------------------------------------------

def test_dense_identity():
    m = Sequential([Dense(4)], (4,), dtype=F64)
    m.layers[0].params["W"][:] = np.eye(4)
    x = np.random.default_rng(0).standard_normal((3, 4))
    np.testing.assert_array_equal(m.forward(x), x)


def test_conv1d_unit_kernel_is_channel_mix():
    m = Sequential([Conv1D(2, 1, 1)], (3, 10), dtype=F64)
    W = m.layers[0].params["W"]
    x = np.random.default_rng(1).standard_normal((2, 3, 10))
    expected = np.einsum("oc,ncl->nol", W[:, :, 0], x)
    np.testing.assert_allclose(m.forward(x), expected, atol=1e-12)
    W[:] = 0
    W[0, 1, 0] = 1.0
    np.testing.assert_array_equal(m.forward(x)[:, 0], x[:, 1])


def test_forward_matches_hand_rolled_network():
    rng = np.random.default_rng(2)
    m = Sequential([Dense(6), ReLU(), Dense(5), ReLU(), Dense(3), Softmax()], (4,), seed=9, dtype=F64)
    x = rng.standard_normal((7, 4))
    p = [l.params for l in m.layers]
    h = np.maximum(x @ p[0]["W"] + p[0]["b"], 0)
    h = np.maximum(h @ p[2]["W"] + p[2]["b"], 0)
    z = h @ p[4]["W"] + p[4]["b"]
    ref = np.exp(z - z.max(1, keepdims=True))
    ref /= ref.sum(1, keepdims=True)
    np.testing.assert_allclose(m.forward(x), ref, atol=1e-6)
    np.testing.assert_allclose(m.forward(x).sum(axis=1), 1.0, atol=1e-9)


def test_conv2d_and_pool_against_loops():
    rng = np.random.default_rng(3)
    conv = Sequential([Conv2D(2, 3, 2)], (2, 7, 8), dtype=F64)
    x = rng.standard_normal((2, 2, 7, 8))
    W, b = conv.layers[0].params["W"], conv.layers[0].params["b"]
    y = conv.forward(x)
    for n in range(2):
        for o in range(2):
            for i in range(3):
                for j in range(3):
                    patch = x[n, :, 2 * i:2 * i + 3, 2 * j:2 * j + 3]
                    assert abs(y[n, o, i, j] - (np.sum(patch * W[o]) + b[o])) < 1e-12
    pool = Sequential([MaxPool2D(2)], (2, 7, 8), dtype=F64)
    z = pool.forward(x)
    assert z.shape == (2, 2, 3, 4)
    assert z[1, 0, 2, 3] == x[1, 0, 4:6, 6:8].max()


def test_shape_mismatch_names_layer():
    m = Sequential([Dense(3), ReLU(), Dense(2)], (4,), dtype=F64)
    with pytest.raises(ShapeMismatchError, match="layer 0"):
        m.forward(np.zeros((1, 5)))


def test_cross_entropy_properties():
    y = one_hot([0, 1], 2, F64)
    assert cross_entropy(y, y) == 0.0
    assert cross_entropy(np.array([[0.6, 0.4], [0.5, 0.5]]), y) > 0


# ---- gradients -------------------------------------------------------------------

def tiny_models():
    return [
        Sequential([Dense(5), ReLU(), Dense(3), Softmax()], (4,), seed=1, dtype=F64),
        Sequential([Conv1D(3, 3, 2), ReLU(), MaxPool1D(2), Flatten(), Dense(3), Softmax()],
                   (2, 17), seed=2, dtype=F64),
        Sequential([Conv2D(2, 3, 1), ReLU(), MaxPool2D(2), Flatten(), Dense(2), Softmax()],
                   (1, 8, 8), seed=3, dtype=F64),
    ]


@pytest.mark.parametrize("idx", range(3))
def test_model_parameter_gradients(idx):
    m = tiny_models()[idx]
    assert sum(p.size for _, p in m.parameters()) <= 500
    rng = np.random.default_rng(idx)
    x = rng.standard_normal((4,) + m.input_shape)
    y = one_hot(rng.integers(0, m.output_shape[0], 4), m.output_shape[0], F64)
    errs = check_model_gradients(m, x, y)
    assert len(errs) == len(list(m.parameters()))
    assert max(errs.values()) < 1e-4


@pytest.mark.parametrize("make,shape", [
    (lambda: Dense(3), (5,)),
    (lambda: Conv1D(2, 3, 2), (2, 11)),
    (lambda: Conv2D(2, 3, 2), (2, 7, 7)),
    (lambda: MaxPool1D(2), (2, 9)),
    (lambda: MaxPool2D(2), (2, 6, 5)),
    (lambda: ReLU(), (3, 4)),
    (lambda: Flatten(), (2, 3, 2)),
    (lambda: Softmax(), (6,)),
])
def test_layer_input_gradients(make, shape):
    rng = np.random.default_rng(4)
    for k in range(3):
        layer = make()
        layer.build(shape, rng, F64)
        x = rng.standard_normal((3,) + shape)
        assert check_layer_input_gradient(layer, x, seed=k) < 1e-4


def test_saturated_softmax_gradient_vanishes():
    m = Sequential([Dense(2), Softmax()], (3,), dtype=F64)
    m.layers[0].params["W"][:] = np.array([[50.0, -50.0]] * 3)
    x = np.ones((2, 3))
    m.forward(x)
    grads = m.backward(one_hot([0, 0], 2, F64))
    assert max(np.linalg.norm(g) for g in grads.values()) < 1e-6


def test_fully_frozen_model_has_no_gradients():
    m = Sequential([Dense(3), Softmax()], (2,), dtype=F64)
    m.frozen_prefix = len(m)
    m.forward(np.ones((1, 2)))
    assert m.backward(one_hot([1], 3, F64)) == {}


def test_numeric_grad_and_rel_error():
    x = np.array([1.0, -2.0, 3.0])
    g = numeric_grad(lambda: float(np.sum(x ** 3)), x)
    np.testing.assert_allclose(g, 3 * x ** 2, rtol=1e-7)
    assert rel_error([1.0, 2.0], [1.0, 2.0]) == 0.0


# ---- Adam ------------------------------------------------------------------------

def test_adam_zero_gradient_leaves_params():
    p = {"w": np.array([1.0, -2.0])}
    adam_step(p, {"w": np.zeros(2)}, AdamState(), TrainConfig(), 1)
    np.testing.assert_array_equal(p["w"], [1.0, -2.0])


def test_adam_single_step_hand_computation():
    cfg = TrainConfig(lr=0.01)
    g = np.array([0.5, -3.0])
    p = {"w": np.array([1.0, 1.0])}
    adam_step(p, {"w": g.copy()}, AdamState(), cfg, 1)
    m_hat = (1 - cfg.beta1) * g / (1 - cfg.beta1)
    v_hat = (1 - cfg.beta2) * g * g / (1 - cfg.beta2)
    expected = 1.0 - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
    np.testing.assert_allclose(p["w"], expected, rtol=1e-12)


def test_adam_leaves_keys_without_gradient():
    p = {"a": np.ones(2), "b": np.ones(2)}
    adam_step(p, {"a": np.ones(2)}, AdamState(), TrainConfig(), 1)
    np.testing.assert_array_equal(p["b"], np.ones(2))


def test_adam_errors():
    with pytest.raises(ShapeMismatchError):
        adam_step({"w": np.ones(2)}, {"w": np.ones(3)}, AdamState(), TrainConfig(), 1)
    with pytest.raises(ValueError):
        adam_step({"w": np.ones(2)}, {"w": np.ones(2)}, AdamState(), TrainConfig(), 0)
    with pytest.raises(ValueError):
        TrainConfig(beta1=1.0)


# ---- training ----------------------------------------------------------------------

def separable(rng, n=80):
    X = rng.standard_normal((n, 2))
    y = (X[:, 0] + 0.5 * X[:, 1] > 0).astype(int)
    X[:, 0] += np.where(y == 1, 0.5, -0.5)
    return X, y


def test_separable_set_reaches_full_accuracy():
    X, y = separable(np.random.default_rng(5))
    m = Sequential([Dense(8), ReLU(), Dense(2), Softmax()], (2,), seed=0, dtype=F64)
    _, hist = train(m, X, y, TrainConfig(lr=0.05, epochs=50, batch_size=16))
    assert hist.accuracy[-1] == 1.0
    assert evaluate_accuracy(m, X, y) == 1.0


def test_xor():
    X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)
    y = np.array([0, 1, 1, 0])
    m = Sequential([Dense(8), ReLU(), Dense(2), Softmax()], (2,), seed=3, dtype=F64)
    train(m, np.repeat(X, 4, axis=0), np.repeat(y, 4), TrainConfig(lr=0.05, epochs=500, batch_size=4))
    assert evaluate_accuracy(m, X, y) >= 0.99


def test_zero_learning_rate_changes_nothing():
    X, y = separable(np.random.default_rng(6), 20)
    m = Sequential([Dense(4), ReLU(), Dense(2), Softmax()], (2,), dtype=F64)
    before = m.checksum()
    _, hist = train(m, X, y, TrainConfig(lr=0.0, epochs=3))
    assert m.checksum() == before
    assert hist.loss[1] == pytest.approx(hist.loss[0], rel=1e-6)
    assert hist.loss[2] == pytest.approx(hist.loss[0], rel=1e-6)


def test_training_is_deterministic():
    X, y = separable(np.random.default_rng(7), 40)
    sums = []
    for _ in range(2):
        m = Sequential([Dense(6), ReLU(), Dense(2), Softmax()], (2,), seed=4)
        train(m, X, y, TrainConfig(epochs=5, seed=11))
        sums.append(m.checksum())
    assert sums[0] == sums[1]


def test_empty_dataset():
    m = Sequential([Dense(2), Softmax()], (2,))
    with pytest.raises(EmptyDatasetError):
        train(m, np.zeros((0, 2)), np.zeros(0, int))


# ---- freezing and transfer ------------------------------------------------------------

def small_cnn(seed=0):
    return Sequential([Conv2D(2, 3, 2), ReLU(), Flatten(), Dense(6), ReLU(), Dense(2), Softmax()],
                      (1, 9, 9), seed=seed)


def texture_set(rng, n=60):
    y = np.arange(n) % 2
    X = rng.standard_normal((n, 1, 9, 9)).astype(np.float32) * 0.2
    X[y == 1, :, ::2, :] += 1.0
    return X, y


def test_k1_updates_only_final_dense():
    rng = np.random.default_rng(8)
    X, y = texture_set(rng)
    m, _ = pretrain_and_freeze(X, y, small_cnn(), 1, TrainConfig(epochs=3))
    assert m.frozen_prefix == 5
    frozen = m.frozen_checksum()
    snap = {k: v.copy() for k, v in m.parameters()}
    train(m, X, 1 - y, TrainConfig(epochs=10, seed=2))
    assert m.frozen_checksum() == frozen
    changed = {k for k, v in m.parameters() if not np.array_equal(v, snap[k])}
    assert changed == {(5, "W"), (5, "b")}


def test_k_equal_layer_count_is_full_training():
    m = freeze_all_but(small_cnn(), 3)
    assert m.frozen_prefix == 0
    assert m.trainable_keys() == [k for k, _ in m.parameters()]


def test_k_too_large():
    with pytest.raises(KTooLargeError):
        freeze_all_but(small_cnn(), 4)
    rng = np.random.default_rng(0)
    X, y = texture_set(rng, 8)
    with pytest.raises(KTooLargeError):
        pretrain_and_freeze(X, y, small_cnn(), 4, TrainConfig(epochs=1))


def test_default_architectures():
    assert build_cnn1d().output_shape == (5,)
    assert build_cnn2d().output_shape == (2,)
    assert [l.kind for l in build_cnn1d().layers] == [
        "Conv1D", "ReLU", "MaxPool1D", "Conv1D", "ReLU", "MaxPool1D", "Flatten", "Dense", "ReLU",
        "Dense", "Softmax"]


# ---- checkpoints -------------------------------------------------------------------

def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    m = build_cnn1d(64, 5, seed=3)
    m.frozen_prefix = 3
    p = tmp_path / "m.cwlnn"
    save_checkpoint(m, p)
    assert p.read_bytes()[:6] == b"CWLNN1"
    back = load_checkpoint(p)
    x = np.random.default_rng(0).standard_normal((4, 1, 64)).astype(np.float32)
    assert np.array_equal(m.forward(x), back.forward(x))
    assert back.frozen_prefix == 3
    assert back.checksum() == m.checksum()


def test_checkpoint_rejects_bad_magic(tmp_path):
    p = tmp_path / "bad.cwlnn"
    p.write_bytes(b"NOTNN1" + bytes(16))
    with pytest.raises(CheckpointError):
        load_checkpoint(p)


def test_checkpoint_rejects_truncation(tmp_path):
    p = tmp_path / "m.cwlnn"
    save_checkpoint(build_cnn1d(64, 5), p)
    p.write_bytes(p.read_bytes()[:-10])
    with pytest.raises(CheckpointError):
        load_checkpoint(p)

import numpy as np
import pytest

from hupipe.nn import (ConvWindow, Dropout, EmbedMean, LayerNorm, Linear, Maxout,
                       NonFiniteGradient, ParamStore, ShapeError, Softmax, adam_step,
                       backward, cross_entropy, expand_window, forward, gradient_check,
                       log_softmax, softmax)

SEEDS = range(20)


def projected(layer_fn, rng, shape):
    """Loss ``sum(Y * R)`` for a fixed random ``R``."""
    R = rng.normal(size=shape)

    def loss_fn():
        Y, bp = layer_fn()
        return float((Y * R).sum()), lambda: bp(R)

    return loss_fn


def test_linear_identity():
    store = ParamStore()
    lin = Linear(store, "lin", 3, 3)
    store["lin.W"] = np.eye(3)
    X = np.arange(6, dtype=np.float32).reshape(2, 3)
    assert np.array_equal(lin.predict(X), X)


def test_linear_shape_error_names_layer():
    lin = Linear(ParamStore(), "proj", 3, 4)
    with pytest.raises(ShapeError, match="proj"):
        lin.predict(np.zeros((2, 5), dtype=np.float32))


def test_softmax_rows_sum_to_one():
    Z = np.random.default_rng(0).normal(size=(7, 5)) * 30
    assert np.allclose(softmax(Z).sum(axis=1), 1.0, atol=1e-6)
    mask = np.ones_like(Z, dtype=bool)
    mask[:, 0] = False
    P = softmax(Z, mask)
    assert np.all(P[:, 0] == 0)
    assert np.allclose(P.sum(axis=1), 1.0, atol=1e-6)
    assert np.allclose(np.exp(log_softmax(Z, mask)), P)


def test_maxout_equals_max_of_independent_affines():
    rng = np.random.default_rng(1)
    store = ParamStore(dtype=np.float64)
    layer = Maxout(store, "mx", 4, 3, pieces=2)
    X = rng.normal(size=(5, 3))
    W = store["mx.W"].reshape(4, 2, 3)
    b = rng.normal(size=8)
    store["mx.b"] = b
    b = b.reshape(4, 2)
    a0 = np.einsum("ni,oi->no", X, W[:, 0, :]) + b[:, 0]
    a1 = np.einsum("ni,oi->no", X, W[:, 1, :]) + b[:, 1]
    assert np.allclose(layer.predict(X), np.maximum(a0, a1))


def test_zero_output_gradient_gives_zero_param_grads():
    store = ParamStore(dtype=np.float64)
    layer = Maxout(store, "mx", 4, 3)
    Y, bp = forward(layer, np.ones((2, 3)), mode="train")
    backward(bp, np.zeros_like(Y))
    assert all(not store.grad(n).any() for n in store.names())


def test_batched_gradient_equals_sum_of_per_example():
    rng = np.random.default_rng(2)
    store = ParamStore(dtype=np.float64)
    layer = Maxout(store, "mx", 4, 3)
    X = rng.normal(size=(6, 3))
    dY = rng.normal(size=(6, 4))
    layer.begin_update(X, True)[1](dY)
    batched = store.grad("mx.W").copy()
    store.zero_grads()
    for i in range(6):
        layer.begin_update(X[i:i + 1], True)[1](dY[i:i + 1])
    assert np.allclose(store.grad("mx.W"), batched)


def test_cross_entropy_against_direct_formula():
    rng = np.random.default_rng(3)
    Z = rng.normal(size=(4, 5))
    gold = np.array([0, 4, 2, 2])
    loss, dZ = cross_entropy(Z, gold, normalizer=2.0)
    P = np.exp(Z) / np.exp(Z).sum(axis=1, keepdims=True)
    assert loss == pytest.approx(-np.log(P[np.arange(4), gold]).sum() / 2)
    onehot = np.eye(5)[gold]
    assert np.allclose(dZ, (P - onehot) / 2)


@pytest.mark.parametrize("seed", SEEDS)
def test_gradcheck_linear_softmax_xent(seed):
    rng = np.random.default_rng(seed)
    store = ParamStore(seed=seed, dtype=np.float64)
    layer = Linear(store, "out", 3, 4)
    X = rng.normal(size=(5, 4))
    gold = rng.integers(0, 3, size=5)

    def loss_fn():
        Z, bp = layer.begin_update(X, True)
        loss, dZ = cross_entropy(Z, gold)
        return loss, lambda: [bp(dZ)]

    assert gradient_check(loss_fn, store, inputs=[X]) < 1e-4


@pytest.mark.parametrize("seed", SEEDS)
def test_gradcheck_softmax_layer(seed):
    rng = np.random.default_rng(seed)
    store = ParamStore(seed=seed, dtype=np.float64)
    layer = Softmax(store, "sm", 3, 4)
    X = rng.normal(size=(5, 4))
    loss_fn = projected(lambda: layer.begin_update(X, True), rng, (5, 3))
    assert gradient_check(lambda: (lambda l, b: (l, lambda: [b()]))(*loss_fn()),
                          store, inputs=[X]) < 1e-4


@pytest.mark.parametrize("seed", SEEDS)
def test_gradcheck_maxout(seed):
    rng = np.random.default_rng(seed)
    store = ParamStore(seed=seed, dtype=np.float64)
    layer = Maxout(store, "mx", 4, 3, pieces=3)
    X = rng.normal(size=(6, 3))
    loss_fn = projected(lambda: layer.begin_update(X, True), rng, (6, 4))
    assert gradient_check(lambda: _with_inputs(loss_fn), store, epsilon=1e-6, inputs=[X]) < 1e-4


@pytest.mark.parametrize("seed", SEEDS)
def test_gradcheck_layernorm(seed):
    rng = np.random.default_rng(seed)
    store = ParamStore(seed=seed, dtype=np.float64)
    layer = LayerNorm(store, "ln", 5)
    store["ln.G"] = rng.normal(size=5)
    X = rng.normal(size=(4, 5))
    loss_fn = projected(lambda: layer.begin_update(X, True), rng, (4, 5))
    assert gradient_check(lambda: _with_inputs(loss_fn), store, inputs=[X]) < 1e-4


@pytest.mark.parametrize("seed", SEEDS)
def test_gradcheck_conv_window_segments(seed):
    rng = np.random.default_rng(seed)
    store = ParamStore(seed=seed, dtype=np.float64)
    layer = ConvWindow(store, "cw", 3, 3, window=1, pieces=2)
    X = rng.normal(size=(7, 3))
    loss_fn = projected(lambda: layer.begin_update(X, True, lengths=[3, 4]), rng, (7, 3))
    assert gradient_check(lambda: _with_inputs(loss_fn), store, epsilon=1e-6, inputs=[X]) < 1e-4


@pytest.mark.parametrize("seed", SEEDS)
def test_gradcheck_dropout_fixed_mask(seed):
    rng = np.random.default_rng(seed)
    store = ParamStore(seed=seed, dtype=np.float64)
    lin = Linear(store, "lin", 4, 3)
    X = rng.normal(size=(5, 3))

    def layer():
        drop = Dropout(0.3, np.random.default_rng(seed))
        H, bp_l = lin.begin_update(X, True)
        Y, bp_d = drop.begin_update(H, True)
        return Y, lambda dY: bp_l(bp_d(dY))

    loss_fn = projected(layer, rng, (5, 4))
    assert gradient_check(lambda: _with_inputs(loss_fn), store, inputs=[X]) < 1e-4


@pytest.mark.parametrize("seed", SEEDS)
def test_gradcheck_embed_mean(seed):
    rng = np.random.default_rng(seed)
    store = ParamStore(seed=seed, dtype=np.float64)
    table = EmbedMean(store, "emb", 6, 3)
    rows = rng.integers(0, 6, size=9)
    segs = np.sort(rng.integers(0, 4, size=9))
    weights = rng.uniform(0.1, 1.0, size=9)
    loss_fn = projected(lambda: table.begin_update((rows, weights, segs, 4), True), rng, (4, 3))
    assert gradient_check(loss_fn, store) < 1e-4


@pytest.mark.parametrize("seed", SEEDS)
def test_gradcheck_two_layer_maxout_cnn(seed):
    from hupipe.encoder import CNNEncoder, EncoderConfig

    rng = np.random.default_rng(seed)
    store = ParamStore(seed=seed, dtype=np.float64)
    enc = CNNEncoder(store, EncoderConfig(width=4, depth=2, window=1, pieces=2, dropout=0.0))
    X = rng.normal(size=(6, 4))
    loss_fn = projected(lambda: enc.begin_update(X, True, lengths=[2, 4]), rng, (6, 4))
    assert gradient_check(lambda: _with_inputs(loss_fn), store, epsilon=1e-6, inputs=[X]) < 1e-4


def _with_inputs(loss_fn):
    loss, bp = loss_fn()
    return loss, lambda: [bp()]


def test_gradient_check_detects_wrong_gradient():
    store = ParamStore(dtype=np.float64)
    lin = Linear(store, "lin", 2, 2)
    X = np.ones((1, 2))

    def loss_fn():
        Y, bp = lin.begin_update(X, True)
        return float(Y.sum()), lambda: bp(2 * np.ones_like(Y))

    assert gradient_check(loss_fn, store) > 0.5


def test_gradient_check_skips_frozen():
    store = ParamStore(dtype=np.float64)
    lin = Linear(store, "a", 2, 2)
    other = Linear(store, "b", 2, 2)
    X = np.ones((1, 2))
    store.frozen.add("a.W")

    def loss_fn():
        H, bp1 = lin.begin_update(X, True)
        Y, bp2 = other.begin_update(H, True)
        # deliberately wrong gradient for the frozen tensor only
        return float(Y.sum()), lambda: bp1(bp2(np.ones_like(Y))) * 0

    assert gradient_check(loss_fn, store, names=["a.W", "b.W", "b.b"]) < 1e-4
    assert not store.grad("a.W").any()


def test_expand_window_respects_segments():
    X = np.arange(1, 5, dtype=np.float64)[:, None]
    out, _ = expand_window(X, 1, lengths=[2, 2])
    assert out.tolist() == [[0, 1, 2], [1, 2, 0], [0, 3, 4], [3, 4, 0]]


def test_params_roundtrip(tmp_path):
    store = ParamStore(seed=3)
    Linear(store, "lin", 3, 2)
    store.add("scalar.x", (1,), init="uniform")
    store.save(tmp_path / "p.bin")
    loaded = ParamStore.load(tmp_path / "p.bin")
    assert loaded.names() == store.names()
    for n in store.names():
        assert np.array_equal(loaded[n], store[n])
    data = (tmp_path / "p.bin").read_bytes()
    assert data.startswith(b"SPNN1")


def test_params_file_layout(tmp_path):
    store = ParamStore()
    store.add("w", (2, 3), init="ones")
    store.save(tmp_path / "p.bin")
    data = (tmp_path / "p.bin").read_bytes()
    import struct
    expected = (b"SPNN1" + struct.pack("<I", 1) + b"w" + struct.pack("<III", 2, 2, 3)
                + np.ones(6, dtype="<f4").tobytes())
    assert data == expected


def test_adam_zero_gradient_fixed_point():
    store = ParamStore()
    store.add("x", (3,), init="uniform")
    before = store["x"].copy()
    store.grad("x")
    adam_step(store, lr=0.1)
    assert np.array_equal(store["x"], before)
    assert store.step == 1


def test_adam_first_step_moves_by_lr():
    store = ParamStore(dtype=np.float64)
    store.add("x", (1,), init="zeros")
    store.inc_grad("x", np.array([1.0]))
    adam_step(store, lr=0.1, eps=1e-8)
    # m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
    assert store["x"][0] == pytest.approx(-0.1 / (1 + 1e-8), rel=1e-12)
    assert not store.grad("x").any()


def test_adam_clips_global_norm():
    store = ParamStore(dtype=np.float64)
    store.add("x", (2,), init="zeros")
    store.inc_grad("x", np.array([60.0, 80.0]))
    norm = adam_step(store, lr=0.1, grad_clip=10.0)
    assert norm == pytest.approx(100.0)
    # first moment after one step is (1 - beta1) * clipped gradient
    assert np.allclose(store._m["x"], 0.1 * np.array([6.0, 8.0]))


def test_adam_rejects_non_finite_gradient():
    store = ParamStore()
    store.add("enc.W", (2,), init="zeros")
    store.inc_grad("enc.W", np.array([np.nan, 0.0]))
    with pytest.raises(NonFiniteGradient, match="enc.W"):
        adam_step(store)


def test_frozen_parameters_not_updated():
    store = ParamStore()
    store.add("a", (2,), init="ones")
    store.frozen.add("a")
    store.inc_grad("a", np.ones(2))
    adam_step(store, lr=1.0)
    assert np.array_equal(store["a"], np.ones(2))

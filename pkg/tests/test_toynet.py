"""Dataset generator, trainer, and the two forward modes."""

import numpy as np
import pytest

from ffp8 import bundle, search, toynet
from ffp8.bundle import DTYPE_FP32, Layer, ModelBundle, Tensor
from ffp8.errors import BadSizes, DivergedTraining, MissingAssignment, ShapeMismatch
from ffp8.formats import make_format


@pytest.fixture(scope="module")
def ds():
    return toynet.make_dataset(seed=0)


@pytest.fixture(scope="module")
def model(ds):
    return toynet.train_baseline(ds, seed=0)


# --- dataset -----------------------------------------------------------------

def test_dataset_balance_and_split_sizes():
    d = toynet.make_dataset(n_samples=999, n_classes=3, seed=7)
    counts = np.bincount(np.concatenate([d.y_train, d.y_val]))
    assert counts.tolist() == [333, 333, 333]
    assert len(d.x_val) == 999 // 5
    assert len(d.x_train) == 999 - 999 // 5


def test_dataset_balance_within_one():
    d = toynet.make_dataset(n_samples=1000, n_classes=3, seed=1)
    counts = np.bincount(np.concatenate([d.y_train, d.y_val]))
    assert sorted(counts.tolist()) == [333, 333, 334]


def test_dataset_deterministic():
    a = toynet.make_dataset(seed=7)
    b = toynet.make_dataset(seed=7)
    assert np.array_equal(a.x_train, b.x_train)
    assert np.array_equal(a.y_val, b.y_val)
    c = toynet.make_dataset(seed=8)
    assert not np.array_equal(a.x_train, c.x_train)


def test_dataset_is_centered_so_negatives_exist(ds):
    assert (ds.x_train < 0).any() and (ds.x_train > 0).any()


@pytest.mark.parametrize("kwargs", [
    {"n_samples": 0}, {"n_features": 0}, {"n_classes": 1}, {"n_samples": 2, "n_classes": 3},
])
def test_dataset_rejects_bad_sizes(kwargs):
    with pytest.raises(BadSizes):
        toynet.make_dataset(**kwargs)


# --- training ----------------------------------------------------------------

def test_training_reaches_validation_accuracy(ds, model):
    assert toynet.evaluate(model, ds) >= 0.95


def test_training_deterministic(ds, model):
    again = toynet.train_baseline(toynet.make_dataset(seed=0), seed=0)
    assert bundle.to_bytes(model) == bundle.to_bytes(again)


def test_zero_epochs_returns_initial_weights(ds):
    a = toynet.train_baseline(ds, epochs=0, seed=3)
    b = toynet.train_baseline(ds, epochs=0, seed=3)
    assert bundle.to_bytes(a) == bundle.to_bytes(b)
    trained = toynet.train_baseline(ds, epochs=1, seed=3)
    assert bundle.to_bytes(a) != bundle.to_bytes(trained)
    assert np.array_equal(a.tensors["dense1.bias"].payload, np.zeros(32, dtype=np.float32))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_training_divergence_is_reported(ds):
    with pytest.raises(DivergedTraining):
        toynet.train_baseline(ds, epochs=3, lr=1e9, seed=0)


def test_model_records_topology_and_metadata(model):
    kinds = [l.kind for l in model.layers]
    assert kinds == ["input", "dense", "relu", "dense", "relu", "dense", "output"]
    assert model.tensors["dense1.weight"].shape == (16, 32)
    assert model.tensors["dense3.weight"].shape == (32, 3)
    assert "input_scale" in model.metadata
    assert model.metadata["train.epochs"] == "80"


# --- forward -----------------------------------------------------------------

def test_forward_zero_batch_gives_bias_row(model):
    z = np.zeros((4, 16), dtype=np.float32)
    _, trace = toynet.forward(model, z)
    b1 = model.tensors["dense1.bias"].payload
    assert np.array_equal(trace.pre_activations[0], np.broadcast_to(b1, (4, 32)))


def test_forward_shape_checks(model):
    with pytest.raises(ShapeMismatch):
        toynet.forward(model, np.zeros((4, 7), dtype=np.float32))
    with pytest.raises(ShapeMismatch):
        toynet.forward(model, np.zeros(16, dtype=np.float32))


def test_forward_missing_assignment(model):
    with pytest.raises(MissingAssignment):
        toynet.forward(model, np.zeros((1, 16), dtype=np.float32), search.Assignment())


def test_post_relu_trace_is_nonnegative(ds, model):
    _, trace = toynet.forward(model, ds.x_val)
    for post in trace.post_activations[:-1]:
        assert (post >= 0).all()


def _lattice_model_and_batch():
    # Every value below is a small multiple of 0.25, so all products and
    # sums reachable in the forward pass carry at most 11 fraction bits
    # and a wide enough format quantizes the whole pass as the identity.
    w1 = np.array([[0.5, -1.0, 2.0], [0.25, 1.5, -0.5]], dtype=np.float32)
    b1 = np.array([0.25, -0.25, 0.5], dtype=np.float32)
    w2 = np.array([[1.0, -0.5], [0.5, 0.25], [-0.25, 2.0]], dtype=np.float32)
    b2 = np.array([-0.5, 0.25], dtype=np.float32)
    m = ModelBundle()
    m.layers.append(Layer("input", "input"))
    m.add_tensor(Tensor("dense1.weight", "weight", w1.shape, DTYPE_FP32, w1))
    m.add_tensor(Tensor("dense1.bias", "weight", b1.shape, DTYPE_FP32, b1))
    m.layers.append(Layer("dense1", "dense", ("dense1.weight", "dense1.bias")))
    m.layers.append(Layer("relu1", "relu"))
    m.add_tensor(Tensor("dense2.weight", "weight", w2.shape, DTYPE_FP32, w2))
    m.add_tensor(Tensor("dense2.bias", "weight", b2.shape, DTYPE_FP32, b2))
    m.layers.append(Layer("dense2", "dense", ("dense2.weight", "dense2.bias")))
    m.layers.append(Layer("output", "output"))
    batch = np.array([[1.0, -0.5], [0.25, 2.0], [-1.5, 0.75]], dtype=np.float32)
    return m, batch


def test_quantized_forward_is_identity_on_representable_values():
    m, batch = _lattice_model_and_batch()
    plain, _ = toynet.forward(m, batch)
    wide = search.Assignment.uniform(make_format(1, 4, 11, 7, n=16))
    quant, _ = toynet.forward(m, batch, wide)
    assert np.array_equal(plain, quant)


def test_quantized_forward_decodes_stored_codes():
    m, batch = _lattice_model_and_batch()
    plain, _ = toynet.forward(m, batch)
    fmt = make_format(1, 4, 11, 7, n=16)
    stored = ModelBundle(layers=list(m.layers), metadata=dict(m.metadata))
    for name, t in m.tensors.items():
        if name.endswith(".weight"):
            stored.add_tensor(bundle.quantize_tensor(t, fmt)[0])
        else:
            stored.add_tensor(t)
    quant, _ = toynet.forward(m, batch, search.Assignment.uniform(fmt))
    from_codes, _ = toynet.forward(stored, batch, search.Assignment.uniform(fmt))
    assert np.array_equal(quant, from_codes)
    assert np.array_equal(plain, from_codes)


def test_quantized_argmax_preserved_when_logit_order_preserved():
    # Crafted logits whose pairwise order survives the round trip must
    # keep their argmax; quantization here is monotone saturation.
    fmt = make_format(1, 2, 5, 3)
    from ffp8.formats import decode_array, encode_array
    logits = np.array([[0.5, 1.25, 3.75], [1.9375, 1.875, -0.5]])
    q = decode_array(fmt, encode_array(fmt, logits))
    assert np.array_equal(q.argmax(axis=1), logits.argmax(axis=1))


def test_evaluate_repeatable(ds, model):
    assert toynet.evaluate(model, ds) == toynet.evaluate(model, ds)


# --- activation statistics ---------------------------------------------------

def test_collect_activation_stats_keys_and_signs(ds, model):
    stats = toynet.collect_activation_stats(model, ds.x_train[:256])
    assert list(stats) == ["input", "dense1", "dense2", "dense3"]
    assert stats["input"].negative_count > 0
    assert stats["dense1"].negative_count == 0
    assert stats["dense2"].negative_count == 0


def test_collect_activation_stats_repeatable(ds, model):
    a = toynet.collect_activation_stats(model, ds.x_train[:64])
    b = toynet.collect_activation_stats(model, ds.x_train[:64])
    assert a == b

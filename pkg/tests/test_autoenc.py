import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from greenguard.autoenc import (
    Activation,
    ArchitectureSpec,
    AutoencoderModel,
    Hyperparams,
    LayerSpec,
    SearchSpace,
    default_architecture,
    forward,
    loss_and_gradients,
    mirrored_architecture,
    model_from_bytes,
    model_to_bytes,
    random_search,
    reconstruction_error,
    save_model,
    load_model,
    shrink_architecture,
    train,
)
from greenguard.errors import (
    BadMagic,
    CorruptModel,
    DimensionMismatch,
    DivergedLoss,
    EmptySpace,
    EmptyTrainingSet,
    VersionMismatch,
)

import oracles

RELU, SIG, LIN = Activation.RELU, Activation.SIGMOID, Activation.IDENTITY


def hand_model(spec, weights, biases):
    return AutoencoderModel(spec, [np.array(w, float) for w in weights], [np.array(b, float) for b in biases])


# ---------------------------------------------------------------- forward

def test_identity_pair_reconstructs_input():
    spec = ArchitectureSpec(2, [LayerSpec(2, LIN)], [LayerSpec(2, LIN)], overcomplete=True)
    model = hand_model(spec, [np.eye(2), np.eye(2)], [np.zeros(2), np.zeros(2)])
    x = np.array([0.3, 0.9])
    code, x_hat = forward(model, x)
    assert np.array_equal(x_hat, x) and np.array_equal(code, x)


def test_zero_network_annihilates():
    spec = mirrored_architecture(4, (3, 2), hidden=RELU, output=RELU)
    model = hand_model(spec, [np.zeros(s) for s in spec.shapes()], [np.zeros(o) for _, o in spec.shapes()])
    assert np.array_equal(forward(model, np.ones(4))[1], np.zeros(4))


def test_hand_evaluated_2_2_1_2_2():
    spec = ArchitectureSpec(2, [LayerSpec(2, RELU), LayerSpec(1, LIN)],
                            [LayerSpec(2, RELU), LayerSpec(2, LIN)])
    model = hand_model(
        spec,
        [[[1, 2], [3, 4]], [[2], [1]], [[1, -1]], [[1, 0], [2, 1]]],
        [[0, -1], [0.5], [0, 0], [0.1, 0.2]],
    )
    # h1 = relu((1,0)W1 + b1) = relu(1, 1) = (1, 1)
    # code = h1 W2 + b2 = 2 + 1 + 0.5 = 3.5
    # h3 = relu(3.5 * (1, -1)) = (3.5, 0)
    # x_hat = (3.5, 0) W4 + b4 = (3.5 + 0.1, 0 + 0.2)
    code, x_hat = forward(model, np.array([1.0, 0.0]))
    assert code.tolist() == [3.5]
    assert x_hat == pytest.approx([3.6, 0.2], abs=1e-15)


def test_forward_dimension_mismatch():
    model = AutoencoderModel.initialize(default_architecture())
    with pytest.raises(DimensionMismatch):
        forward(model, np.zeros(27))


def test_forward_linear_output_scale():
    spec = mirrored_architecture(5, (3,), hidden=RELU, output=LIN)
    model = AutoencoderModel.initialize(spec, seed=4)
    x = np.random.default_rng(0).uniform(size=5)
    base = forward(model, x)[1] - model.biases[-1]
    model.weights[-1] *= 2.0
    assert np.array_equal(forward(model, x)[1] - model.biases[-1], 2.0 * base)


# ---------------------------------------------------------------- errors

def test_reconstruction_error_examples():
    assert reconstruction_error([1, 0], [1, 0], "mse") == 0
    assert reconstruction_error([1, 0], [0, 1], "mse") == 1.0
    assert reconstruction_error([1, 0], [0, 1], "mae") == 1.0
    assert reconstruction_error([0.2, 0.4, 0.6], [0.2, 0.1, 0.6], "mse") == pytest.approx(0.03, abs=1e-15)
    assert reconstruction_error([0.2, 0.4, 0.6], [0.2, 0.1, 0.6], "mae") == pytest.approx(0.1, abs=1e-15)
    with pytest.raises(DimensionMismatch):
        reconstruction_error([1, 2], [1, 2, 3])


vectors = hnp.arrays(np.float64, 6, elements=st.floats(-10, 10))


@given(vectors, vectors, st.sampled_from(["mse", "mae"]))
def test_reconstruction_error_symmetric_and_zero(a, b, metric):
    assert reconstruction_error(a, a, metric) == 0
    assert reconstruction_error(a, b, metric) == reconstruction_error(b, a, metric) >= 0


# ---------------------------------------------------------------- gradients

@pytest.mark.parametrize("seed", range(10))
def test_gradients_match_finite_differences(seed):
    model, X = oracles.random_small_network(np.random.default_rng(seed))
    loss, gw, gb = loss_and_gradients(model, X)
    assert loss == pytest.approx(oracles.objective(model, X), rel=1e-12)
    numeric = oracles.finite_difference_gradients(model, X)
    assert oracles.max_relative_error(gw + gb, numeric) < 1e-4


# ---------------------------------------------------------------- training

def test_memorize_single_vector():
    x = np.random.default_rng(3).uniform(size=28)
    model, history = train(np.tile(x, (32, 1)), Hyperparams(seed=3))
    assert len(history) == 50
    assert history.train_loss[-1] < 1e-3


def test_zero_learning_rate_freezes():
    X = np.random.default_rng(0).uniform(size=(20, 28))
    model, history = train(X, Hyperparams(learning_rate=0.0, epochs=5))
    assert len(set(history.train_loss)) == 1
    once, _ = train(X, Hyperparams(learning_rate=0.0, epochs=1))
    for a, b in zip(once.weights + once.biases, model.weights + model.biases):
        assert np.array_equal(a, b)


def test_training_is_deterministic():
    X = np.random.default_rng(1).uniform(size=(64, 28))
    a, ha = train(X, Hyperparams(epochs=5, seed=9))
    b, hb = train(X, Hyperparams(epochs=5, seed=9))
    assert model_to_bytes(a) == model_to_bytes(b)
    assert ha.train_loss == hb.train_loss


def test_training_reduces_loss(benchmark_run):
    loss = benchmark_run.history.train_loss
    assert len(loss) == 50 and loss[-1] < loss[0]
    assert len(benchmark_run.history.val_loss) == 50


def test_train_rejects_empty_and_mismatched():
    with pytest.raises(EmptyTrainingSet):
        train(np.zeros((0, 28)))
    with pytest.raises(DimensionMismatch):
        train(np.zeros((4, 27)))


def test_divergence_detected():
    spec = mirrored_architecture(8, (4,), hidden=LIN, output=LIN)
    with pytest.raises(DivergedLoss):
        train(small_data()[0], Hyperparams(learning_rate=1.0, epochs=20, spec=spec))


def test_hyperparams_validation():
    with pytest.raises(ValueError):
        Hyperparams(learning_rate=1.5)
    with pytest.raises(ValueError):
        Hyperparams(epochs=0)


# ---------------------------------------------------------------- search

def small_data():
    rng = np.random.default_rng(5)
    z = rng.uniform(size=(200, 2))
    X = np.clip(np.hstack([z, z @ rng.uniform(size=(2, 6))]) / 3, 0, 1)
    return X[:150], X[150:]


def test_search_single_trial():
    train_rows, val_rows = small_data()
    space = SearchSpace(epochs=(3,), encoder_widths=((4,),), input_dim=8)
    best, board = random_search(space, 1, train_rows, val_rows, seed=0)
    assert len(board) == 1 and board[0].hyperparams == best


def test_search_prefers_stable_config():
    train_rows, val_rows = small_data()
    good = Hyperparams(0.1, 20, 16, mirrored_architecture(8, (4,)), seed=1)
    bad = Hyperparams(1.0, 20, 16, mirrored_architecture(8, (4,), hidden=LIN, output=LIN), seed=1)
    best, board = random_search(None, 2, train_rows, val_rows, configs=[bad, good])
    assert best == good
    assert board[-1].diverged


def test_search_deterministic_and_parallel_order():
    train_rows, val_rows = small_data()
    space = SearchSpace(epochs=(3,), encoder_widths=((4,), (6, 3)), input_dim=8)
    _, a = random_search(space, 4, train_rows, val_rows, seed=7)
    _, b = random_search(space, 4, train_rows, val_rows, seed=7, n_jobs=3)
    assert [t.index for t in a] == [t.index for t in b]
    assert [t.val_mse for t in a] == [t.val_mse for t in b]
    assert [t.val_mse for t in a] == sorted(t.val_mse for t in a)


def test_search_empty_space():
    with pytest.raises(EmptySpace):
        random_search(SearchSpace(batch_size=()), 1, np.zeros((2, 28)), np.zeros((2, 28)))


# ---------------------------------------------------------------- shrink

def test_shrink_examples():
    spec = mirrored_architecture(28, (20, 10))
    assert shrink_architecture(spec, 0.2).hidden_widths == [16, 8, 16]
    assert shrink_architecture(spec, 0.0) == spec
    assert shrink_architecture(default_architecture()).describe() == "28-19-12-6-12-19-28"
    tiny = mirrored_architecture(4, (1,))
    assert shrink_architecture(tiny, 0.5).hidden_widths == [1]


def test_shrink_drop_layers():
    out = shrink_architecture(default_architecture(), 0.0, drop_layers=True)
    assert out.describe() == "28-16-8-16-28"


@given(st.lists(st.integers(1, 27), min_size=1, max_size=4), st.floats(0, 0.99), st.booleans())
def test_shrink_keeps_io_dims(widths, fraction, drop):
    widths[-1] = min(widths[-1], 27)
    spec = mirrored_architecture(28, widths)
    out = shrink_architecture(spec, fraction, drop_layers=drop)
    assert out.input_dim == 28 and out.decoder_layers[-1].width == 28


# ---------------------------------------------------------------- model file

def test_save_load_roundtrip(tmp_path, trained_model):
    path = tmp_path / "m.zrzm"
    save_model(trained_model, path)
    loaded = load_model(path)
    X = np.random.default_rng(0).uniform(size=(100, 28))
    assert np.array_equal(forward(loaded, X)[1], forward(trained_model, X)[1])
    assert loaded.threshold == trained_model.threshold
    assert loaded.normalization == trained_model.normalization
    assert model_to_bytes(loaded) == model_to_bytes(trained_model)


def test_truncated_model(trained_model):
    data = model_to_bytes(trained_model)
    for cut in (2, 9, len(data) // 2, len(data) - 1):
        with pytest.raises(CorruptModel):
            model_from_bytes(data[:cut])


def test_corrupted_model(trained_model):
    data = bytearray(model_to_bytes(trained_model))
    data[-3] ^= 0xFF
    with pytest.raises(CorruptModel):
        model_from_bytes(bytes(data))


def test_future_version(trained_model):
    data = bytearray(model_to_bytes(trained_model))
    data[4:6] = (2).to_bytes(2, "little")
    with pytest.raises(VersionMismatch):
        model_from_bytes(bytes(data))


def test_bad_model_magic():
    with pytest.raises(BadMagic):
        model_from_bytes(b"PK\x03\x04" + b"\x00" * 20)

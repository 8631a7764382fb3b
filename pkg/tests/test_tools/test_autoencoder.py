import numpy as np
import pandas as pd
import pytest

from transit_typology.errors import EmptyBatch, NonFiniteLoss, ShapeMismatch
from transit_typology.model import AutoencoderModel, LayerParams, Optimizer, TrainConfig
from transit_typology.tools.autoencoder import (
    decode,
    embed,
    embeddings_frame,
    encode,
    gradients,
    init_model,
    load_model,
    loss,
    save_model,
    train,
)

EPSILON = 1e-5
TOLERANCE = 1e-4
TINY = TrainConfig(layer_sizes=(5, 4, 3))


def _day_profiles(n_rows=200, seed=0):
    """Rows drawn from three day shapes at random amplitude plus noise."""
    rng = np.random.default_rng(seed)
    hours = np.arange(17)
    morning = np.exp(-((hours - 2) ** 2) / 4.0)
    evening = np.exp(-((hours - 12) ** 2) / 4.0)
    flat = np.full(17, 0.6)
    archetypes = [
        np.concatenate([shape, 0.5 * shape]) for shape in (morning, evening, flat)
    ]
    rows = [
        archetypes[rng.integers(3)] * rng.uniform(0.3, 1.0)
        + rng.normal(0.0, 0.01, size=34)
        for _ in range(n_rows)
    ]
    return np.clip(np.array(rows), 0.0, 1.0)


def _random_model(seed):
    rng = np.random.default_rng(seed)
    layers = [
        LayerParams(
            weights=rng.normal(0.0, 0.7, size=shape),
            biases=rng.normal(0.0, 0.3, size=shape[0]),
        )
        for shape in [(4, 5), (3, 4), (4, 3), (5, 4)]
    ]
    return AutoencoderModel(encoder=layers[:2], decoder=layers[2:], config=TINY)


def test_init_is_seeded():
    first = init_model(TrainConfig(seed=3))

    assert first.to_bytes() == init_model(TrainConfig(seed=3)).to_bytes()
    assert first.to_bytes() != init_model(TrainConfig(seed=4)).to_bytes()


def test_init_bounds():
    model = init_model()

    assert [layer.shape for layer in model.layers] == [(24, 34), (16, 24), (24, 16), (34, 24)]
    for layer in model.layers:
        limit = np.sqrt(6.0 / layer.shape[1])
        assert np.abs(layer.weights).max() <= limit
        assert not layer.biases.any()


def test_encode_decode_shapes():
    model = init_model()
    x = np.random.default_rng(0).uniform(size=(7, 34))

    z = encode(model, x)

    assert z.shape == (7, 16)
    assert decode(model, z).shape == (7, 34)
    assert encode(model, x[0]).shape == (16,)


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        encode(init_model(), np.zeros((2, 33)))


def test_empty_batch():
    with pytest.raises(EmptyBatch):
        loss(init_model(), np.zeros((0, 34)))


def test_loss_is_sum_over_components_mean_over_samples():
    model = init_model(TINY)
    for layer in model.layers:
        layer.weights[:] = 0.0
    x = np.array([[1.0, 0.0, 0.0, 0.0, 0.0], [1.0, 1.0, 0.0, 0.0, 0.0]])

    # a zero network reconstructs zeros
    assert loss(model, x) == pytest.approx(1.5)


@pytest.mark.parametrize("seed", range(15))
def test_gradients_match_finite_differences(seed):
    model = _random_model(seed)
    batch = np.random.default_rng(100 + seed).uniform(size=(6, 5))

    analytic = gradients(model, batch)

    checked = 0
    for layer, grad in zip(model.layers, analytic):
        for params, expected in ((layer.weights, grad.weights), (layer.biases, grad.biases)):
            for index in np.ndindex(params.shape):
                original = params[index]
                params[index] = original + EPSILON
                upper = loss(model, batch)
                params[index] = original - EPSILON
                lower = loss(model, batch)
                params[index] = original

                numeric = (upper - lower) / (2 * EPSILON)
                error = abs(expected[index] - numeric) / max(
                    abs(expected[index]), abs(numeric), 1e-4
                )
                assert error <= TOLERANCE, (index, expected[index], numeric)
                checked += 1

    assert checked == 80


def _hand_model():
    """2 -> 2 -> 1 -> 2 -> 2 network with small hand-picked parameters."""
    layers = [
        LayerParams(weights=[[1.0, -1.0], [0.5, 2.0]], biases=[0.0, -1.0]),
        LayerParams(weights=[[2.0, 1.0]], biases=[0.5]),
        LayerParams(weights=[[1.0], [-1.0]], biases=[0.0, 1.0]),
        LayerParams(weights=[[0.5, 3.0], [-1.0, 2.0]], biases=[1.0, 0.0]),
    ]
    return AutoencoderModel(
        encoder=layers[:2], decoder=layers[2:], config=TrainConfig(layer_sizes=(2, 2, 1))
    )


def test_forward_pass_by_hand():
    model = _hand_model()
    x = np.array([1.0, 2.0])

    # hidden [-1, 3.5] -> rectified [0, 3.5] -> z = 2 * 0 + 3.5 + 0.5
    assert encode(model, x).tolist() == pytest.approx([4.0])
    # hidden [4, -3] -> rectified [4, 0] -> [0.5 * 4 + 1, -1 * 4]
    assert decode(model, [4.0]).tolist() == pytest.approx([3.0, -4.0])
    assert loss(model, x) == pytest.approx(2.0**2 + 6.0**2)


def test_zero_input_gives_zero_first_layer_weight_gradients():
    model = _random_model(4)
    for layer in model.layers:
        layer.biases[:] = 0.0

    grads = gradients(model, np.zeros((3, 5)))

    assert not grads[0].weights.any()


def test_perfect_reconstruction_has_zero_gradients():
    identity = np.eye(3)
    layers = [LayerParams(weights=identity, biases=np.zeros(3)) for _ in range(4)]
    model = AutoencoderModel(
        encoder=layers[:2], decoder=layers[2:], config=TrainConfig(layer_sizes=(3, 3, 3))
    )
    batch = np.random.default_rng(9).uniform(size=(4, 3))

    assert loss(model, batch) == 0.0
    for grad in gradients(model, batch):
        assert not grad.weights.any()
        assert not grad.biases.any()


@pytest.mark.parametrize("optimizer", list(Optimizer))
def test_zero_learning_rate_keeps_loss(optimizer):
    matrix = _day_profiles(n_rows=30)
    config = TrainConfig(optimizer=optimizer, learning_rate=0.0, epochs=5, batch_size=8)
    start = init_model(config)

    trained, history = train(start, matrix, config)

    assert history == [loss(start, matrix)] * 5
    assert trained.to_bytes() == start.to_bytes()


@pytest.mark.slow
def test_training_reduces_loss():
    matrix = _day_profiles()
    config = TrainConfig(seed=42)

    model, history = train(init_model(config), matrix, config)

    assert len(history) == 200
    assert history[-1] < 0.1 * history[0]
    assert loss(model, matrix) == pytest.approx(history[-1])


@pytest.mark.slow
def test_training_is_deterministic():
    matrix = _day_profiles(n_rows=60)
    config = TrainConfig(seed=11, epochs=20)

    first, first_history = train(init_model(config), matrix, config)
    second, second_history = train(init_model(config), matrix, config)

    assert first.to_bytes() == second.to_bytes()
    assert first_history == second_history


def test_training_leaves_start_model_untouched():
    matrix = _day_profiles(n_rows=20)
    config = TrainConfig(epochs=2)
    start = init_model(config)
    before = start.to_bytes()

    train(start, matrix, config)

    assert start.to_bytes() == before


def test_sgd_optimizer():
    matrix = _day_profiles(n_rows=40)
    config = TrainConfig(optimizer=Optimizer.SGD, learning_rate=0.01, epochs=30)

    _, history = train(init_model(config), matrix, config)

    assert history[-1] < history[0]


def test_divergence_is_reported():
    matrix = _day_profiles(n_rows=64)
    config = TrainConfig(optimizer=Optimizer.SGD, learning_rate=1e6, epochs=50)

    with np.errstate(all="ignore"):
        with pytest.raises(NonFiniteLoss):
            train(init_model(config), matrix, config)


def test_model_file(tmp_path):
    model = init_model(TrainConfig(seed=5))
    path = tmp_path / "model.json"

    save_model(model, path)

    assert load_model(path).to_bytes() == model.to_bytes()


def test_embed_rows():
    model = init_model(TINY)
    normalized = pd.DataFrame(
        {
            "region_id": ["a", "b"],
            "city": ["x", "y"],
            **{f"v{i}": [0.1 * i, 0.2] for i in range(5)},
        }
    )

    embeddings = embed(model, normalized)
    frame = embeddings_frame(embeddings)

    assert [e.region for e in embeddings] == ["a", "b"]
    assert list(frame.columns) == ["region_id", "city", "e0", "e1", "e2"]
    assert np.allclose(frame[["e0", "e1", "e2"]].to_numpy(), encode(model, normalized.iloc[:, 2:]))

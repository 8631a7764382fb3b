from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pandas as pd
from loguru import logger

from transit_typology.errors import EmptyBatch, NonFiniteLoss, ShapeMismatch
from transit_typology.model import (
    AutoencoderModel,
    Embedding,
    LayerParams,
    Optimizer,
    TrainConfig,
)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8

Gradients = list[LayerParams]


def _layer_shapes(config: TrainConfig) -> list[tuple[int, int]]:
    d_in, d_hidden, d_embed = config.layer_sizes
    return [(d_hidden, d_in), (d_embed, d_hidden), (d_hidden, d_embed), (d_in, d_hidden)]


def _streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent generators for initialisation and batch shuffling."""
    init_sequence, shuffle_sequence = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(init_sequence), np.random.default_rng(shuffle_sequence)


def init_model(config: TrainConfig | None = None) -> AutoencoderModel:
    """Creates an untrained autoencoder.

    Weights are drawn uniformly from [-sqrt(6 / fan_in), sqrt(6 / fan_in)],
    biases are zero. The same seed always gives the same parameter bytes.
    """
    config = config or TrainConfig()
    rng, _ = _streams(config.seed)

    layers = []
    for fan_out, fan_in in _layer_shapes(config):
        limit = np.sqrt(6.0 / fan_in)
        layers.append(
            LayerParams(
                weights=rng.uniform(-limit, limit, size=(fan_out, fan_in)),
                biases=np.zeros(fan_out),
            )
        )
    return AutoencoderModel(encoder=layers[:2], decoder=layers[2:], config=config)


def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def _as_batch(x, width: int, what: str) -> np.ndarray:
    array = np.asarray(x, dtype=np.float64)
    if array.ndim not in (1, 2) or array.shape[-1] != width:
        raise ShapeMismatch(f"Expected {what} of width {width}, got shape {array.shape}.")
    return array


def _half(layers: list[LayerParams], x: np.ndarray) -> np.ndarray:
    first, second = layers
    hidden = _relu(x @ first.weights.T + first.biases)
    return hidden @ second.weights.T + second.biases


def encode(model: AutoencoderModel, x) -> np.ndarray:
    """Embeds one vector or a batch of row vectors."""
    return _half(model.encoder, _as_batch(x, model.config.layer_sizes[0], "input"))


def decode(model: AutoencoderModel, z) -> np.ndarray:
    return _half(model.decoder, _as_batch(z, model.embedding_dim, "embedding"))


def reconstruct(model: AutoencoderModel, x) -> np.ndarray:
    return decode(model, encode(model, x))


def _check_batch(model: AutoencoderModel, batch) -> np.ndarray:
    array = _as_batch(batch, model.config.layer_sizes[0], "batch")
    if array.ndim == 1:
        array = array[np.newaxis, :]
    if array.shape[0] == 0:
        raise EmptyBatch("Loss and gradients need at least one sample.")
    return array


def loss(model: AutoencoderModel, batch) -> float:
    """Squared reconstruction error summed over components, averaged over samples."""
    x = _check_batch(model, batch)
    residual = reconstruct(model, x) - x
    return float(np.sum(residual**2, dtype=np.float64) / x.shape[0])


def _backprop(model: AutoencoderModel, x: np.ndarray) -> list[np.ndarray]:
    w1, w2, w3, w4 = (layer.weights for layer in model.layers)
    b1, b2, b3, b4 = (layer.biases for layer in model.layers)

    h1 = x @ w1.T + b1
    a1 = _relu(h1)
    z = a1 @ w2.T + b2
    h3 = z @ w3.T + b3
    a3 = _relu(h3)
    out = a3 @ w4.T + b4

    g_out = 2.0 * (out - x) / x.shape[0]
    g_h3 = (g_out @ w4) * (h3 > 0)
    g_z = g_h3 @ w3
    g_h1 = (g_z @ w2) * (h1 > 0)

    return [
        g_h1.T @ x,
        g_h1.sum(axis=0),
        g_z.T @ a1,
        g_z.sum(axis=0),
        g_h3.T @ z,
        g_h3.sum(axis=0),
        g_out.T @ a3,
        g_out.sum(axis=0),
    ]


def gradients(model: AutoencoderModel, batch) -> Gradients:
    """Analytic gradients of `loss` for every layer, in encoder-decoder order.

    The rectifier's derivative at 0 is taken as 0.
    """
    grads = _backprop(model, _check_batch(model, batch))
    return [
        LayerParams(weights=grads[i], biases=grads[i + 1])
        for i in range(0, len(grads), 2)
    ]


class _AdamState:
    def __init__(self, params: list[np.ndarray]):
        self.step = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def update(self, params, grads, learning_rate: float) -> None:
        self.step += 1
        correction1 = 1.0 - ADAM_BETA1**self.step
        correction2 = 1.0 - ADAM_BETA2**self.step
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * g * g
            p -= learning_rate * (m / correction1) / (np.sqrt(v / correction2) + ADAM_EPSILON)


def _flat(layers: list[LayerParams]) -> list[np.ndarray]:
    return [array for layer in layers for array in (layer.weights, layer.biases)]


def train(
    model: AutoencoderModel,
    matrix,
    config: TrainConfig | None = None,
) -> tuple[AutoencoderModel, list[float]]:
    """Mini-batch training with a seeded shuffle per epoch.

    The loss recorded for an epoch is the loss over the whole matrix after the
    epoch, evaluated in row order.

    Args:
        model (AutoencoderModel): Starting parameters, left untouched.
        matrix: Normalized features, one region per row.
        config (TrainConfig | None, optional): Defaults to the model's config.

    Raises:
        NonFiniteLoss: If the loss or a parameter stops being finite.

    Returns:
        tuple[AutoencoderModel, list[float]]: Trained model and per-epoch losses.
    """
    config = config or model.config
    x = _check_batch(model, matrix)
    n_samples = x.shape[0]
    _, rng = _streams(config.seed)

    params = [array.copy() for array in _flat(model.layers)]
    adam = _AdamState(params) if config.optimizer == Optimizer.ADAM else None

    def current() -> AutoencoderModel:
        layers = [
            LayerParams(weights=params[i], biases=params[i + 1])
            for i in range(0, len(params), 2)
        ]
        return AutoencoderModel(encoder=layers[:2], decoder=layers[2:], config=config)

    working = current()
    history = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n_samples)
        for start in range(0, n_samples, config.batch_size):
            grads = _backprop(working, x[order[start : start + config.batch_size]])
            if adam is None:
                for p, g in zip(params, grads):
                    p -= config.learning_rate * g
            else:
                adam.update(params, grads, config.learning_rate)
            if not all(np.isfinite(p).all() for p in params):
                raise NonFiniteLoss(epoch)

        working = current()

        epoch_loss = loss(working, x)
        if not np.isfinite(epoch_loss):
            raise NonFiniteLoss(epoch)
        history.append(epoch_loss)

        if epoch == 1 or epoch % 50 == 0 or epoch == config.epochs:
            logger.debug(f"epoch {epoch}/{config.epochs}: loss {epoch_loss:.6f}")

    return working, history


def embed(model: AutoencoderModel, normalized: pd.DataFrame) -> list[Embedding]:
    """Encodes every row of a normalized features table."""
    features = normalized.drop(columns=["region_id", "city"]).to_numpy(dtype=np.float64)
    z = encode(model, features)
    return [
        Embedding(region=str(region), city_tag=str(city), z=row.tolist())
        for region, city, row in zip(normalized["region_id"], normalized["city"], z)
    ]


def embeddings_frame(embeddings: list[Embedding]) -> pd.DataFrame:
    width = len(embeddings[0].z) if embeddings else 0
    return pd.DataFrame(
        [[e.region, e.city_tag, *e.z] for e in embeddings],
        columns=["region_id", "city", *[f"e{i}" for i in range(width)]],
    )


def save_model(model: AutoencoderModel, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as file:
        json.dump(model.to_dict(), file)


def load_model(path: str | Path) -> AutoencoderModel:
    with open(path, "r", encoding="utf-8") as file:
        return AutoencoderModel.from_dict(json.load(file))

"""Cross-modal autoencoder: embed one matrix so it reconstructs another.

The model reads a standardized input matrix X (n samples by p features),
funnels it through a fixed chain of dense layers to a small linear
bottleneck of size d, then expands to predict the standardized paired
matrix Y (n by q). The bottleneck activations are the embedding. Layer
widths are derived from p and q by ceiling division:

    p -> ceil(p/5) -> ceil(p/25) -> ceil(p/625) -> d
      -> ceil(q/625) -> ceil(q/25) -> ceil(q/5) -> q

Hidden layers are relu; the bottleneck and the output are linear.
Dropout on the three encoder hidden layers is (0.20, 0.10, 0) and on the
three decoder hidden layers (0, 0.10, 0.20), so the layers nearest the
wide data matrices are regularized hardest and the bottleneck itself is
never dropped.

Training is plain minibatch Adam on mean squared reconstruction error in
the standardized Y space. Everything downstream of the config seed is
deterministic; see fit() for the stream layout.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AlignmentError,
    DomainError,
    InsufficientDataError,
    NumericalError,
    ParseError,
    ShapeError,
)
from .matrix_core import (
    KIND_DROPOUT,
    KIND_INIT,
    KIND_SHUFFLE,
    RngStream,
    as_matrix,
    column_stats,
    destandardize_columns,
    permuted,
    standardize_columns,
    stream_id,
)
from .neural_net import (
    AdamState,
    DenseLayer,
    Network,
    TrainConfig,
    adam_step,
    backward,
    draw_dropout_masks,
    forward,
    mse_loss,
    predict,
)

# Index of the bottleneck among the 8 dense layers (0-based): the layer
# whose output is the embedding.
BOTTLENECK_INDEX = 3

# Initial bias for relu layers; see build_network for why not zero.
RELU_BIAS_INIT = 0.5

_ENCODER_DROPOUT = (0.20, 0.10, 0.0)
_DECODER_DROPOUT = (0.0, 0.10, 0.20)

_MAGIC = b"AIMB"
_FORMAT_VERSION = 1
_LAYER_COUNT = 8
_ACTIVATION_CODES = {"linear": 0, "relu": 1}
_ACTIVATION_NAMES = {code: name for name, code in _ACTIVATION_CODES.items()}


@dataclass(frozen=True)
class Architecture:
    """Derived layer plan for one (p, q, d) triple."""

    input_size: int
    output_size: int
    embedding_size: int
    encoder_sizes: tuple[int, int, int]
    decoder_sizes: tuple[int, int, int]
    encoder_dropout: tuple[float, float, float] = _ENCODER_DROPOUT
    decoder_dropout: tuple[float, float, float] = _DECODER_DROPOUT

    @property
    def layer_sizes(self) -> list[int]:
        """All 9 sizes from input to output, bottleneck in the middle."""
        return [
            self.input_size,
            *self.encoder_sizes,
            self.embedding_size,
            *self.decoder_sizes,
            self.output_size,
        ]

    def layer_specs(self) -> list[tuple[int, int, str, float]]:
        """(fan_in, fan_out, activation, dropout_rate) for each of the
        8 dense layers."""
        sizes = self.layer_sizes
        activations = ["relu"] * 3 + ["linear"] + ["relu"] * 3 + ["linear"]
        dropout = [*self.encoder_dropout, 0.0, *self.decoder_dropout, 0.0]
        return [
            (sizes[i], sizes[i + 1], activations[i], dropout[i])
            for i in range(_LAYER_COUNT)
        ]


def build_architecture(p: int, q: int, d: int) -> Architecture:
    """Layer plan for input width p, output width q, embedding size d."""
    for name, value in (("input width", p), ("output width", q), ("embedding size", d)):
        if value < 1:
            raise DomainError(f"{name} must be a positive integer, got {value}")
    return Architecture(
        input_size=p,
        output_size=q,
        embedding_size=d,
        encoder_sizes=(
            math.ceil(p / 5),
            math.ceil(p / 25),
            math.ceil(p / 625),
        ),
        decoder_sizes=(
            math.ceil(q / 625),
            math.ceil(q / 25),
            math.ceil(q / 5),
        ),
    )


def build_network(arch: Architecture, seed: int) -> Network:
    """Freshly initialized network for the plan, deterministic in seed.

    Each layer draws from its own stream, so widening one layer never
    shifts another layer's initial weights. Relu layers get He-uniform
    weights (limit sqrt(6 / fan_in)), linear layers Glorot-uniform
    (limit sqrt(6 / (fan_in + fan_out))).

    Linear biases start at zero; relu biases start at a small positive
    constant. The derived funnel has 1-unit relu layers whenever the
    matching data width is below 626, and with a zero bias such a unit
    is stillborn for the roughly half of seeds where its weight points
    away from its nonnegative input cone - its gradient is then exactly
    zero and the whole encoder freezes. A positive bias keeps every unit
    initially active so training can decide.
    """
    layers = []
    for index, (fan_in, fan_out, activation, rate) in enumerate(arch.layer_specs()):
        rng = RngStream(seed, stream_id(KIND_INIT, index))
        if activation == "relu":
            limit = math.sqrt(6.0 / fan_in)
            bias = np.full(fan_out, RELU_BIAS_INIT)
        else:
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            bias = np.zeros(fan_out)
        weights = rng.uniform(-limit, limit, (fan_out, fan_in))
        layers.append(
            DenseLayer(
                weights=weights,
                bias=bias,
                activation=activation,
                dropout_rate=rate,
            )
        )
    return Network(layers, bottleneck_index=BOTTLENECK_INDEX)


@dataclass
class AimeModel:
    """A trained embedding model plus everything needed to apply it."""

    architecture: Architecture
    network: Network
    seed: int
    input_means: np.ndarray
    input_sds: np.ndarray
    output_means: np.ndarray
    output_sds: np.ndarray
    loss_history: list[float] = field(default_factory=list)

    @property
    def input_size(self) -> int:
        return self.architecture.input_size

    @property
    def output_size(self) -> int:
        return self.architecture.output_size

    @property
    def embedding_size(self) -> int:
        return self.architecture.embedding_size


def fit(
    x,
    y,
    embedding_size: int,
    config: TrainConfig | None = None,
) -> AimeModel:
    """Train an embedding model on paired matrices with aligned rows.

    Both matrices are standardized column-wise with their own training
    statistics (stored on the model). Each epoch shuffles the row order
    with stream (KIND_SHUFFLE, epoch) and draws dropout masks batch by
    batch from stream (KIND_DROPOUT, epoch), so a (config, data) pair
    always yields the same model. A batch size above n falls back to one
    full batch. The recorded loss history is the row-weighted mean
    training MSE per epoch, in standardized Y units.

    Raises NumericalError if the loss goes non-finite (diverged run).
    """
    if config is None:
        config = TrainConfig()
    x = as_matrix(x, name="x")
    y = as_matrix(y, name="y")
    if x.shape[0] != y.shape[0]:
        raise AlignmentError(
            f"x has {x.shape[0]} rows but y has {y.shape[0]}; rows must be "
            "the same samples in the same order"
        )
    n = x.shape[0]
    if n < 2:
        raise InsufficientDataError(f"training needs at least 2 samples, got {n}")

    seed = config.seed
    arch = build_architecture(x.shape[1], y.shape[1], embedding_size)
    input_means, input_sds = column_stats(x)
    output_means, output_sds = column_stats(y)
    xs = standardize_columns(x, input_means, input_sds)
    ys = standardize_columns(y, output_means, output_sds)

    network = build_network(arch, seed)
    state = AdamState.for_network(network)
    history: list[float] = []
    for epoch in range(config.epochs):
        order = permuted(np.arange(n), RngStream(seed, stream_id(KIND_SHUFFLE, epoch)))
        mask_rng = RngStream(seed, stream_id(KIND_DROPOUT, epoch))
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            xb, yb = xs[idx], ys[idx]
            masks = draw_dropout_masks(network, len(idx), mask_rng)
            out, cache = forward(network, xb, mode="train", masks=masks)
            loss, loss_grad = mse_loss(out, yb)
            grads = backward(network, cache, loss_grad)
            adam_step(network, grads, state, config)
            total += loss * len(idx)
        epoch_loss = total / n
        if not np.isfinite(epoch_loss):
            raise NumericalError(
                f"training loss became non-finite at epoch {epoch + 1}; "
                "lower the learning rate or check the data scale"
            )
        history.append(epoch_loss)

    return AimeModel(
        architecture=arch,
        network=network,
        seed=seed,
        input_means=input_means,
        input_sds=input_sds,
        output_means=output_means,
        output_sds=output_sds,
        loss_history=history,
    )


def embed(model: AimeModel, x) -> np.ndarray:
    """Bottleneck activations (n, d) for new rows of the input modality.

    Rows are standardized with the model's stored training statistics, so
    embeddings of new data live in the same space as the training ones.
    """
    x = as_matrix(x, name="x")
    if x.shape[1] != model.network.input_size:
        raise ShapeError(
            f"x has {x.shape[1]} columns, model expects {model.network.input_size}"
        )
    xs = standardize_columns(x, model.input_means, model.input_sds)
    _, cache = forward(model.network, xs, mode="eval")
    return cache.outputs[model.network.bottleneck_index]


def reconstruct(model: AimeModel, x) -> np.ndarray:
    """Predicted paired matrix (n, q), mapped back to original Y units."""
    x = as_matrix(x, name="x")
    if x.shape[1] != model.network.input_size:
        raise ShapeError(
            f"x has {x.shape[1]} columns, model expects {model.network.input_size}"
        )
    xs = standardize_columns(x, model.input_means, model.input_sds)
    out = predict(model.network, xs)
    return destandardize_columns(out, model.output_means, model.output_sds)


def save_model(model: AimeModel, path) -> None:
    """Write the model to the versioned binary format (see
    docs/model_format.md). Same model, same bytes."""
    chunks = [_MAGIC, struct.pack("<I", _FORMAT_VERSION)]
    chunks.append(
        struct.pack(
            "<6Q",
            model.input_size,
            model.output_size,
            model.embedding_size,
            model.seed,
            model.network.bottleneck_index,
            len(model.network.layers),
        )
    )
    history = np.asarray(model.loss_history, dtype="<f8")
    chunks.append(struct.pack("<Q", history.size))
    chunks.append(history.tobytes())
    for stats in (model.input_means, model.input_sds, model.output_means, model.output_sds):
        chunks.append(np.asarray(stats, dtype="<f8").tobytes())
    for layer in model.network.layers:
        chunks.append(
            struct.pack(
                "<QQBd",
                layer.fan_out,
                layer.fan_in,
                _ACTIVATION_CODES[layer.activation],
                layer.dropout_rate,
            )
        )
        chunks.append(np.ascontiguousarray(layer.weights, dtype="<f8").tobytes())
        chunks.append(np.asarray(layer.bias, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.data):
            raise ParseError(
                f"model file truncated: needed {count} bytes at offset {self.pos}"
            )
        out = self.data[self.pos : self.pos + count]
        self.pos += count
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def floats(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64)


def load_model(path) -> AimeModel:
    """Read a model written by save_model; malformed files raise ParseError."""
    with open(path, "rb") as fh:
        reader = _Reader(fh.read())
    if reader.take(4) != _MAGIC:
        raise ParseError("not a model file: bad magic bytes")
    (version,) = reader.unpack("<I")
    if version != _FORMAT_VERSION:
        raise ParseError(f"unsupported model format version {version}")
    p, q, d, seed, bottleneck, n_layers = reader.unpack("<6Q")
    if n_layers != _LAYER_COUNT:
        raise ParseError(f"expected {_LAYER_COUNT} layers, header says {n_layers}")
    (history_len,) = reader.unpack("<Q")
    history = reader.floats(history_len).tolist()
    input_means = reader.floats(p)
    input_sds = reader.floats(p)
    output_means = reader.floats(q)
    output_sds = reader.floats(q)
    layers = []
    for index in range(n_layers):
        fan_out, fan_in, act_code, rate = reader.unpack("<QQBd")
        if act_code not in _ACTIVATION_NAMES:
            raise ParseError(f"layer {index}: unknown activation code {act_code}")
        weights = reader.floats(fan_out * fan_in).reshape(fan_out, fan_in)
        bias = reader.floats(fan_out)
        layers.append(
            DenseLayer(
                weights=weights,
                bias=bias,
                activation=_ACTIVATION_NAMES[act_code],
                dropout_rate=rate,
            )
        )
    if reader.pos != len(reader.data):
        raise ParseError(
            f"{len(reader.data) - reader.pos} unexpected trailing bytes"
        )
    if bottleneck >= n_layers:
        raise ParseError("bottleneck index out of range for the layer count")
    network = Network(layers, bottleneck_index=bottleneck)
    if network.input_size != p or network.output_size != q:
        raise ParseError("layer shapes disagree with the header sizes")
    if network.layers[bottleneck].fan_out != d:
        raise ParseError("bottleneck width disagrees with the header sizes")
    arch = Architecture(
        input_size=p,
        output_size=q,
        embedding_size=d,
        encoder_sizes=tuple(layers[i].fan_out for i in range(3)),
        decoder_sizes=tuple(layers[i].fan_out for i in range(4, 7)),
        encoder_dropout=tuple(layers[i].dropout_rate for i in range(3)),
        decoder_dropout=tuple(layers[i].dropout_rate for i in range(4, 7)),
    )
    return AimeModel(
        architecture=arch,
        network=network,
        seed=seed,
        input_means=input_means,
        input_sds=input_sds,
        output_means=output_means,
        output_sds=output_sds,
        loss_history=history,
    )

"""Feed-forward network engine: forward, analytic backprop, Adam.

Written directly against numpy so the analytic gradients can be audited
against finite differences (see :func:`gradient_check`); no autodiff
framework is involved. Conventions:

* a batch is (n, features), one sample per row
* layer weights are (fan_out, fan_in); forward is ``a @ W.T + b``
* dropout is inverted: at train time the kept activations are scaled by
  ``1 / (1 - rate)`` so evaluation needs no rescaling
* the loss is mean squared error averaged over every output entry
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CacheError, DomainError, ShapeError
from .matrix_core import KIND_GRAD_CHECK, RngStream, stream_id

ACTIVATIONS = ("relu", "linear")
MODES = ("train", "eval")


@dataclass
class DenseLayer:
    """One dense layer plus the dropout rate applied to its output."""

    weights: np.ndarray
    bias: np.ndarray
    activation: str = "relu"
    dropout_rate: float = 0.0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ShapeError(f"weights must be 2-D, got {self.weights.ndim}-D")
        if self.bias.shape != (self.weights.shape[0],):
            raise ShapeError(
                f"bias of shape {self.bias.shape} does not match "
                f"{self.weights.shape[0]} output units"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {self.dropout_rate}")

    @property
    def fan_in(self) -> int:
        return self.weights.shape[1]

    @property
    def fan_out(self) -> int:
        return self.weights.shape[0]


@dataclass
class Network:
    """A chain of dense layers; consecutive fan_out/fan_in must agree.

    ``bottleneck_index`` marks the layer whose output is the embedding,
    for networks that have one; plain regression networks leave it None.
    """

    layers: list[DenseLayer]
    bottleneck_index: int | None = None

    def __post_init__(self):
        for a, b in zip(self.layers, self.layers[1:]):
            if a.fan_out != b.fan_in:
                raise ShapeError(
                    f"layer output size {a.fan_out} does not feed "
                    f"layer input size {b.fan_in}"
                )
        if self.bottleneck_index is not None and not (
            0 <= self.bottleneck_index < len(self.layers)
        ):
            raise ShapeError(
                f"bottleneck index {self.bottleneck_index} out of range for "
                f"{len(self.layers)} layers"
            )

    @property
    def input_size(self) -> int:
        return self.layers[0].fan_in

    @property
    def output_size(self) -> int:
        return self.layers[-1].fan_out


@dataclass
class TrainConfig:
    """Optimization settings plus the base seed for all training streams."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 32
    epochs: int = 200
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise DomainError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1:
            raise DomainError(
                f"beta1/beta2 must lie in [0, 1), got {self.beta1}/{self.beta2}"
            )
        if not self.epsilon > 0:
            raise DomainError(f"epsilon must be > 0, got {self.epsilon}")
        if self.batch_size < 1:
            raise DomainError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise DomainError(f"epochs must be >= 0, got {self.epochs}")
        if not 0 <= self.seed < 2**64:
            raise DomainError(f"seed must fit in 64 bits, got {self.seed}")


@dataclass
class ForwardCache:
    """Intermediate values from one forward pass, consumed by backward."""

    x: np.ndarray
    pre_activations: list[np.ndarray]
    outputs: list[np.ndarray]
    masks: list[np.ndarray | None]


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    return z


def _activate_grad(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (z > 0.0).astype(np.float64)
    return np.ones_like(z)


def draw_dropout_masks(
    network: Network, n: int, rng: RngStream
) -> list[np.ndarray | None]:
    """Scaled keep masks for one batch, ``None`` for zero-rate layers.

    Only positive-rate layers consume randomness, in layer order, so the
    draw sequence is stable under architecture changes that touch only
    no-dropout layers.
    """
    masks: list[np.ndarray | None] = []
    for layer in network.layers:
        if layer.dropout_rate > 0.0:
            u = rng.uniform(0.0, 1.0, (n, layer.fan_out))
            masks.append((u >= layer.dropout_rate) / (1.0 - layer.dropout_rate))
        else:
            masks.append(None)
    return masks


def forward(
    network: Network,
    x: np.ndarray,
    mode: str = "eval",
    rng: RngStream | None = None,
    masks: list[np.ndarray | None] | None = None,
) -> tuple[np.ndarray, ForwardCache]:
    """Run the network on a batch; returns (output, cache).

    In eval mode dropout is off and the pass is deterministic. In train
    mode masks come from ``rng`` (or are passed in directly, which is how
    the gradient checks replay one fixed pass bit for bit).
    """
    if mode not in MODES:
        raise DomainError(f"mode must be one of {MODES}, got {mode!r}")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != network.input_size:
        raise ShapeError(
            f"input of shape {x.shape} does not match input size "
            f"{network.input_size}"
        )
    if mode == "eval":
        masks = [None] * len(network.layers)
    elif masks is None:
        if rng is not None:
            masks = draw_dropout_masks(network, x.shape[0], rng)
        elif all(layer.dropout_rate == 0.0 for layer in network.layers):
            masks = [None] * len(network.layers)
        else:
            raise DomainError("train mode needs an rng (or explicit masks) "
                              "when any layer has dropout")
    if len(masks) != len(network.layers):
        raise ShapeError(f"{len(masks)} masks for {len(network.layers)} layers")

    a = x
    pre, outs = [], []
    for layer, mask in zip(network.layers, masks):
        z = a @ layer.weights.T + layer.bias
        a = _activate(layer.activation, z)
        if mask is not None:
            a = a * mask
        pre.append(z)
        outs.append(a)
    cache = ForwardCache(x=x, pre_activations=pre, outputs=outs, masks=list(masks))
    return a, cache


def predict(network: Network, x: np.ndarray) -> np.ndarray:
    """Evaluation-mode output for a batch."""
    return forward(network, x, mode="eval")[0]


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error over all entries, and its gradient w.r.t. pred."""
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {pred.shape} vs target {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff * diff))
    grad = (2.0 / diff.size) * diff
    return loss, grad


def backward(
    network: Network, cache: ForwardCache, loss_grad: np.ndarray
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Gradients of the loss w.r.t. each layer's (weights, bias).

    ``loss_grad`` is the gradient of the loss at the network output (for
    MSE, the second value of :func:`mse_loss`). The cache must come from
    a forward pass of this same network; mismatches raise CacheError.
    """
    if len(cache.outputs) != len(network.layers):
        raise CacheError(
            f"cache holds {len(cache.outputs)} layers, network has "
            f"{len(network.layers)}"
        )
    pred = cache.outputs[-1]
    if pred.shape != loss_grad.shape:
        raise CacheError(
            f"cached output {pred.shape} vs loss gradient {loss_grad.shape}"
        )

    n = pred.shape[0]
    grad_a = loss_grad
    grads: list[tuple[np.ndarray, np.ndarray] | None] = [None] * len(network.layers)
    for idx in range(len(network.layers) - 1, -1, -1):
        layer = network.layers[idx]
        z = cache.pre_activations[idx]
        if z.shape != (n, layer.fan_out):
            raise CacheError(
                f"cached pre-activation {z.shape} does not match layer {idx} "
                f"({n}, {layer.fan_out})"
            )
        mask = cache.masks[idx]
        if mask is not None:
            grad_a = grad_a * mask
        grad_z = grad_a * _activate_grad(layer.activation, z)
        below = cache.x if idx == 0 else cache.outputs[idx - 1]
        grads[idx] = (grad_z.T @ below, grad_z.sum(axis=0))
        if idx > 0:
            grad_a = grad_z @ layer.weights
    return grads


@dataclass
class AdamState:
    """First/second moment accumulators, one pair per layer parameter."""

    m: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    v: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    t: int = 0

    @classmethod
    def for_network(cls, network: Network) -> "AdamState":
        m = [
            (np.zeros_like(l.weights), np.zeros_like(l.bias))
            for l in network.layers
        ]
        v = [
            (np.zeros_like(l.weights), np.zeros_like(l.bias))
            for l in network.layers
        ]
        return cls(m=m, v=v, t=0)


def adam_step(
    network: Network,
    grads: list[tuple[np.ndarray, np.ndarray]],
    state: AdamState,
    config: TrainConfig,
) -> None:
    """One Adam update, in place, with bias-corrected moments."""
    state.t += 1
    t = state.t
    b1, b2 = config.beta1, config.beta2
    for layer, (gw, gb), (mw, mb), (vw, vb) in zip(
        network.layers, grads, state.m, state.v
    ):
        for param, g, m, v in ((layer.weights, gw, mw, vw), (layer.bias, gb, mb, vb)):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            m_hat = m / (1.0 - b1**t)
            v_hat = v / (1.0 - b2**t)
            param -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)


def _loss_with_masks(network, x, target, masks) -> float:
    out, _ = forward(network, x, mode="train", masks=masks)
    return mse_loss(out, target)[0]


def numerical_gradients(
    network: Network,
    x: np.ndarray,
    target: np.ndarray,
    masks: list[np.ndarray | None] | None = None,
    h: float = 1e-5,
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Central finite differences of the MSE loss for every parameter.

    Dropout masks are frozen across the +h/-h evaluations so the loss is
    a deterministic function of the parameters. Cost is two forward
    passes per scalar parameter; meant for small test networks.
    """
    if masks is None:
        masks = [None] * len(network.layers)
    grads = []
    for layer in network.layers:
        out = []
        for param in (layer.weights, layer.bias):
            g = np.zeros_like(param)
            flat = param.ravel()
            gflat = g.ravel()
            for k in range(flat.size):
                orig = flat[k]
                flat[k] = orig + h
                up = _loss_with_masks(network, x, target, masks)
                flat[k] = orig - h
                down = _loss_with_masks(network, x, target, masks)
                flat[k] = orig
                gflat[k] = (up - down) / (2.0 * h)
            out.append(g)
        grads.append((out[0], out[1]))
    return grads


def max_relative_error(
    analytic: list[tuple[np.ndarray, np.ndarray]],
    numeric: list[tuple[np.ndarray, np.ndarray]],
) -> float:
    """Worst relative disagreement: |a - n| / max(|a|, |n|, 1e-8)."""
    worst = 0.0
    for (aw, ab), (nw, nb) in zip(analytic, numeric):
        for a, n in ((aw, nw), (ab, nb)):
            denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
            worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def gradient_check(
    network: Network,
    x: np.ndarray,
    target: np.ndarray,
    h: float = 1e-5,
    seed: int = 0,
    masks: list[np.ndarray | None] | None = None,
) -> float:
    """Max relative error between analytic and finite-difference gradients.

    Dropout masks are drawn once from the seed (or passed in) and frozen
    for the analytic pass and every perturbed evaluation.
    """
    if masks is None:
        rng = RngStream(seed, stream_id(KIND_GRAD_CHECK, 0))
        masks = draw_dropout_masks(network, np.asarray(x).shape[0], rng)
    out, cache = forward(network, x, mode="train", masks=masks)
    _, loss_grad = mse_loss(out, target)
    analytic = backward(network, cache, loss_grad)
    numeric = numerical_gradients(network, x, target, masks=masks, h=h)
    return max_relative_error(analytic, numeric)

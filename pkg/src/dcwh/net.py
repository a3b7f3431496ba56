"""Dense feedforward embedding network with hand-written backprop.

The network maps input rows to ``L``-dimensional real embeddings.  Everything
runs in float64 so analytic gradients can be checked against central finite
differences at tight tolerances.
"""

from dataclasses import dataclass, field
import struct

import numpy as np

from ._io import Reader, atomic_write
from .errors import ConfigError, DimensionError, TrainingError

ACTIVATIONS = ("none", "relu")
CHECKPOINT_MAGIC = b"DCWN"
CHECKPOINT_VERSION = 1


@dataclass
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "none"

    @property
    def in_dim(self):
        return self.weight.shape[1]

    @property
    def out_dim(self):
        return self.weight.shape[0]


@dataclass
class EmbeddingNet:
    layers: list = field(default_factory=list)

    def __post_init__(self):
        if not self.layers:
            raise ConfigError("network needs at least one layer")
        for k, layer in enumerate(self.layers):
            if layer.activation not in ACTIVATIONS:
                raise ConfigError(f"layer {k}: unknown activation {layer.activation!r}")
            if layer.bias.shape != (layer.out_dim,):
                raise ConfigError(f"layer {k}: bias shape {layer.bias.shape}")
            if k and self.layers[k - 1].out_dim != layer.in_dim:
                raise ConfigError(
                    f"layer {k}: input dim {layer.in_dim} does not chain with "
                    f"previous output dim {self.layers[k - 1].out_dim}"
                )
        if self.layers[-1].activation != "none":
            raise ConfigError("final layer must be linear so embeddings can go negative")

    @property
    def input_dim(self):
        return self.layers[0].in_dim

    @property
    def output_dim(self):
        return self.layers[-1].out_dim

    @property
    def dims(self):
        return [self.input_dim] + [layer.out_dim for layer in self.layers]

    def copy(self):
        return EmbeddingNet([
            Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers
        ])

    def parameters(self):
        """Flat list ``[W0, b0, W1, b1, ...]`` of the live arrays."""
        out = []
        for layer in self.layers:
            out.extend((layer.weight, layer.bias))
        return out

    def is_finite(self):
        return all(np.all(np.isfinite(p)) for p in self.parameters())


@dataclass
class GradientSet:
    weights: list
    biases: list

    def __iter__(self):
        for gw, gb in zip(self.weights, self.biases):
            yield gw
            yield gb

    def scale(self, factor):
        return GradientSet([factor * g for g in self.weights],
                           [factor * g for g in self.biases])


@dataclass
class ForwardCache:
    inputs: list  # input to each layer
    preacts: list  # affine output of each layer


def init_net(dims, seed, hidden_activation="relu"):
    """Build a network with fan-averaged uniform (Xavier, magnitude 1) weights.

    ``dims`` is ``[input_dim, hidden..., L]``.  Every layer draws from
    ``U(-s, s)`` with ``s = sqrt(2 / (fan_in + fan_out))``; biases start at 0.
    """
    dims = [int(d) for d in dims]
    if len(dims) < 2:
        raise ConfigError("layer spec needs an input and an output dimension")
    for d in dims:
        if d <= 0:
            raise ConfigError(f"non-positive layer dimension {d} in {dims}")
    rng = np.random.default_rng(seed)
    layers = []
    for k, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        scale = np.sqrt(2.0 / (fan_in + fan_out))
        weight = rng.uniform(-scale, scale, size=(fan_out, fan_in))
        last = k == len(dims) - 2
        layers.append(Layer(weight, np.zeros(fan_out), "none" if last else hidden_activation))
    return EmbeddingNet(layers)


def forward(net, batch):
    """Return ``(embeddings, cache)`` for a ``(B, input_dim)`` batch."""
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise DimensionError(
            f"batch shape {x.shape} does not match input dim {net.input_dim}"
        )
    inputs, preacts = [], []
    for layer in net.layers:
        inputs.append(x)
        z = x @ layer.weight.T + layer.bias
        preacts.append(z)
        x = np.maximum(z, 0.0) if layer.activation == "relu" else z
    return x, ForwardCache(inputs, preacts)


def embed(net, batch, chunk=4096):
    """Forward pass without keeping the cache; processes large sets in chunks."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.shape[0] == 0:
        return np.zeros((0, net.output_dim))
    parts = [forward(net, batch[i:i + chunk])[0] for i in range(0, len(batch), chunk)]
    return np.concatenate(parts, axis=0)


def backward(net, cache, grad_embeddings):
    """Backpropagate upstream gradients through the cached forward pass.

    Returns the gradient of the summed per-sample loss with respect to every
    weight and bias; the caller decides whether that sum is already a mean.
    """
    g = np.asarray(grad_embeddings, dtype=np.float64)
    if len(cache.preacts) != len(net.layers) or g.shape != cache.preacts[-1].shape:
        raise DimensionError(
            f"upstream gradient shape {g.shape} does not match cached output "
            f"{cache.preacts[-1].shape if cache.preacts else None}"
        )
    gw = [None] * len(net.layers)
    gb = [None] * len(net.layers)
    for k in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[k]
        if layer.activation == "relu":
            g = g * (cache.preacts[k] > 0)
        gw[k] = g.T @ cache.inputs[k]
        gb[k] = g.sum(axis=0)
        if k:
            g = g @ layer.weight
    return GradientSet(gw, gb)


def sgd_step(net, grads, lr, weight_decay=0.0):
    """One plain SGD step with L2 decay on weights only; returns a new net."""
    if not lr > 0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    if weight_decay < 0:
        raise ConfigError(f"weight decay must be nonnegative, got {weight_decay}")
    if len(grads.weights) != len(net.layers):
        raise DimensionError("gradient set does not match network depth")
    layers = []
    for k, (layer, gw, gb) in enumerate(zip(net.layers, grads.weights, grads.biases)):
        if gw.shape != layer.weight.shape or gb.shape != layer.bias.shape:
            raise DimensionError(f"layer {k}: gradient shape mismatch")
        if not (np.all(np.isfinite(gw)) and np.all(np.isfinite(gb))):
            raise TrainingError(f"non-finite gradient in layer {k}")
        weight = layer.weight - lr * (gw + weight_decay * layer.weight)
        bias = layer.bias - lr * gb
        layers.append(Layer(weight, bias, layer.activation))
    return EmbeddingNet(layers)


def net_to_bytes(net):
    parts = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(net.layers))]
    for layer in net.layers:
        parts.append(struct.pack("<IIB", layer.in_dim, layer.out_dim,
                                 ACTIVATIONS.index(layer.activation)))
        parts.append(np.ascontiguousarray(layer.weight, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())
    return b"".join(parts)


def net_from_bytes(buf, what="checkpoint"):
    r = Reader(buf, what)
    r.expect_magic(CHECKPOINT_MAGIC)
    r.expect_version({CHECKPOINT_VERSION})
    n_layers = r.u32()
    layers = []
    for _ in range(n_layers):
        fan_in, fan_out, act = r.unpack("IIB")
        if act >= len(ACTIVATIONS):
            raise ConfigError(f"{what}: unknown activation code {act}")
        w = np.frombuffer(r.take(8 * fan_in * fan_out), dtype="<f8")
        b = np.frombuffer(r.take(8 * fan_out), dtype="<f8")
        layers.append(Layer(w.reshape(fan_out, fan_in).astype(np.float64),
                            b.astype(np.float64), ACTIVATIONS[act]))
    r.finish()
    return EmbeddingNet(layers)


def save_net(path, net):
    atomic_write(path, net_to_bytes(net))


def load_net(path):
    with open(path, "rb") as fh:
        return net_from_bytes(fh.read(), what=str(path))

"""Sequential layers and the small CNNs used for every experiment.

A network is a plain list of `Layer`. `forward` checks every layer's input
shape and names the offending layer on mismatch.
"""

from __future__ import annotations

import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .activations import PARAM_NAMES, af_derivative, af_forward, af_param_grads, af_project_constraints
from .config import ARCH_ALIASES, ARCHITECTURES
from .errors import ConfigError, ShapeMismatch
from .models import ActivationSpec
from .tensor import Conv2d, Function, MaxPool2d, Tensor, no_grad

logger = logging.getLogger(__name__)


class Layer:
    kind = "layer"

    def __init__(self):
        self.params: Dict[str, Tensor] = {}
        self.hyper: Dict[str, int] = {}

    @property
    def parameters(self) -> List[Tensor]:
        return list(self.params.values())

    def check_input(self, index: int, shape: Tuple[int, ...]) -> None:
        pass

    def __call__(self, x: Tensor) -> Tensor:
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.hyper})"


class Conv2dLayer(Layer):
    kind = "conv2d"

    def __init__(self, in_channels: int, out_channels: int, kernel: int,
                 rng: np.random.Generator, stride: int = 1, padding: int = 0):
        super().__init__()
        self.hyper = {"in_channels": in_channels, "out_channels": out_channels,
                      "kernel": kernel, "stride": stride, "padding": padding}
        fan_in = in_channels * kernel * kernel
        w = rng.standard_normal((out_channels, in_channels, kernel, kernel)) * np.sqrt(2.0 / fan_in)
        self.params = {
            "weight": Tensor(w, requires_grad=True, name="weight"),
            "bias": Tensor(np.zeros(out_channels), requires_grad=True, name="bias"),
        }

    def check_input(self, index, shape):
        h = self.hyper
        k, p = h["kernel"], h["padding"]
        if len(shape) != 4 or shape[1] != h["in_channels"]:
            raise ShapeMismatch(index, ("N", h["in_channels"], "H", "W"), shape)
        if shape[2] + 2 * p < k or shape[3] + 2 * p < k:
            raise ShapeMismatch(index, ("N", h["in_channels"], f">={k - 2 * p}", f">={k - 2 * p}"), shape)

    def __call__(self, x):
        return Conv2d.apply(x, self.params["weight"], self.params["bias"],
                            stride=self.hyper["stride"], padding=self.hyper["padding"])

    def out_shape(self, shape):
        h = self.hyper
        size = lambda n: (n + 2 * h["padding"] - h["kernel"]) // h["stride"] + 1
        return (h["out_channels"], size(shape[1]), size(shape[2]))


class MaxPool2dLayer(Layer):
    kind = "maxpool2d"

    def __init__(self, size: int = 2):
        super().__init__()
        self.hyper = {"kernel": size, "stride": size}

    def check_input(self, index, shape):
        k = self.hyper["kernel"]
        if len(shape) != 4 or shape[2] < k or shape[3] < k:
            raise ShapeMismatch(index, ("N", "C", f">={k}", f">={k}"), shape)

    def __call__(self, x):
        return MaxPool2d.apply(x, size=self.hyper["kernel"])

    def out_shape(self, shape):
        k = self.hyper["kernel"]
        return (shape[0], shape[1] // k, shape[2] // k)


class FlattenLayer(Layer):
    kind = "flatten"

    def check_input(self, index, shape):
        if len(shape) < 2:
            raise ShapeMismatch(index, ("N", "..."), shape)

    def __call__(self, x):
        return x.reshape(x.shape[0], -1)

    def out_shape(self, shape):
        return (int(np.prod(shape)),)


class LinearLayer(Layer):
    kind = "linear"

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator):
        super().__init__()
        self.hyper = {"in_features": in_features, "out_features": out_features}
        w = rng.standard_normal((in_features, out_features)) * np.sqrt(2.0 / in_features)
        self.params = {
            "weight": Tensor(w, requires_grad=True, name="weight"),
            "bias": Tensor(np.zeros(out_features), requires_grad=True, name="bias"),
        }

    def check_input(self, index, shape):
        if len(shape) != 2 or shape[1] != self.hyper["in_features"]:
            raise ShapeMismatch(index, ("N", self.hyper["in_features"]), shape)

    def __call__(self, x):
        return x @ self.params["weight"] + self.params["bias"]

    def out_shape(self, shape):
        return (self.hyper["out_features"],)


class ActivationFn(Function):

    def forward(self, x, *values, spec: ActivationSpec, names: Sequence[str]):
        self.spec, self.names, self.x = spec, names, x
        return af_forward(spec, x)

    def backward(self, grad):
        dx = grad * af_derivative(self.spec, self.x)
        partials = af_param_grads(self.spec, self.x) if self.names else {}
        return (dx, *(np.asarray((grad * partials[n]).sum()) for n in self.names))


class ActivationLayer(Layer):
    """Holds one scalar per parameter; learnable ones live in Tensors."""

    kind = "activation"

    def __init__(self, spec: ActivationSpec):
        super().__init__()
        self.hyper = {}
        self.set_spec(spec)

    def set_spec(self, spec: ActivationSpec) -> None:
        self._spec = spec
        learn = spec.learnable_names()
        for name in list(self.params):
            if name not in learn:
                del self.params[name]
        for name in learn:
            value = float(getattr(spec, name))
            if name in self.params:
                self.params[name].data = np.asarray(value)
            else:
                self.params[name] = Tensor(value, requires_grad=True, name=name, decay=False)

    @property
    def spec(self) -> ActivationSpec:
        update = {name: t.item() for name, t in self.params.items()}
        return self._spec.model_copy(update=update) if update else self._spec

    def __call__(self, x):
        names = list(self.params)
        return ActivationFn.apply(x, *self.params.values(), spec=self.spec, names=names)

    def out_shape(self, shape):
        return shape


# ── Network-level operations ──────────────────────────────

def forward(network: List[Layer], input: Tensor, capture: Optional[list] = None) -> Tensor:
    """Run the layers in order; `capture` collects (index, kind, output) per layer."""
    x = input if isinstance(input, Tensor) else Tensor(input)
    for i, layer in enumerate(network):
        layer.check_input(i, x.shape)
        x = layer(x)
        if capture is not None:
            capture.append((i, layer.kind, x))
    return x


def parameters(network: List[Layer]) -> List[Tensor]:
    return [t for layer in network for t in layer.parameters]


def named_parameters(network: List[Layer]) -> List[Tuple[str, Tensor]]:
    return [(f"{i}.{layer.kind}.{name}", t)
            for i, layer in enumerate(network) for name, t in layer.params.items()]


def activation_layers(network: List[Layer]) -> List[ActivationLayer]:
    return [layer for layer in network if isinstance(layer, ActivationLayer)]


def project_constraints(network: List[Layer]) -> None:
    for layer in activation_layers(network):
        layer.set_spec(af_project_constraints(layer.spec))


def state_dict(network: List[Layer]) -> Dict[str, np.ndarray]:
    """Weights by name, plus one '{i}.activation.{kind}' vector per activation layer."""
    state: Dict[str, np.ndarray] = {}
    for i, layer in enumerate(network):
        if isinstance(layer, ActivationLayer):
            spec = layer.spec
            state[f"{i}.activation.{spec.kind}"] = np.array(
                [getattr(spec, n) for n in PARAM_NAMES[spec.kind]], dtype=np.float64
            )
        else:
            for name, t in layer.params.items():
                state[f"{i}.{layer.kind}.{name}"] = t.data.copy()
    return state


def load_state_dict(network: List[Layer], state: Dict[str, np.ndarray]) -> None:
    expected = state_dict(network)
    missing = sorted(set(expected) - set(state))
    if missing:
        raise ConfigError(f"Checkpoint does not match network; missing {missing[:3]}")
    for i, layer in enumerate(network):
        if isinstance(layer, ActivationLayer):
            kind = layer.spec.kind
            values = state[f"{i}.activation.{kind}"]
            layer.set_spec(layer.spec.model_copy(update=dict(zip(PARAM_NAMES[kind], map(float, values)))))
            continue
        for name, t in layer.params.items():
            arr = state[f"{i}.{layer.kind}.{name}"]
            if arr.shape != t.shape:
                raise ShapeMismatch(i, t.shape, arr.shape, f"checkpoint {name}")
            t.data = np.array(arr, dtype=np.float64)


def channel_mean(images: np.ndarray) -> np.ndarray:
    """Per-channel mean of an N×C×H×W (or N×D) training split."""
    images = np.asarray(images, dtype=np.float64)
    axes = (0,) + tuple(range(2, images.ndim))
    return images.mean(axis=axes)


def zero_center_normalize(batch, per_channel_mean):
    """Subtract a per-channel mean (axis 1). Returns the same type it was given."""
    is_tensor = isinstance(batch, Tensor)
    data = batch.data if is_tensor else np.asarray(batch, dtype=np.float64)
    mean = np.asarray(per_channel_mean.data if isinstance(per_channel_mean, Tensor) else per_channel_mean,
                      dtype=np.float64).reshape(-1)
    channels = data.shape[1] if data.ndim >= 2 else None
    if mean.size not in (1, channels):
        raise ShapeMismatch(0, (channels,), mean.shape, "per-channel mean")
    shape = (1, mean.size) + (1,) * (data.ndim - 2)
    out = data - mean.reshape(shape)
    return Tensor(out) if is_tensor else out


def predict(network: List[Layer], images: np.ndarray, mean: np.ndarray,
            batch_size: int = 512) -> np.ndarray:
    """Logits for raw [0,1] images, normalised with the training mean."""
    outs = []
    with no_grad():
        for start in range(0, len(images), batch_size):
            xb = zero_center_normalize(images[start:start + batch_size], mean)
            outs.append(forward(network, Tensor(xb)).data)
    return np.concatenate(outs, axis=0) if outs else np.zeros((0, 0))


def build_network(
    arch: str,
    activation: ActivationSpec,
    in_shape: Tuple[int, int, int] = (1, 28, 28),
    classes: int = 10,
    seed: int = 0,
    padding: int = 1,
) -> List[Layer]:
    """cnn3: three conv(3×3)+AF+pool stages then FC₁; cnn3_fc2 inserts a 2-unit FC₂ before FC₁."""
    if arch not in ARCHITECTURES:
        raise ConfigError(f"Invalid net: '{arch}'")
    arch = ARCH_ALIASES.get(arch, arch)
    rng = np.random.default_rng(seed)
    act = lambda: ActivationLayer(activation.model_copy(deep=True))
    layers: List[Layer] = []
    shape = tuple(in_shape)

    if arch == "mlp":
        flat = int(np.prod(shape))
        return [FlattenLayer(), LinearLayer(flat, 64, rng), act(), LinearLayer(64, classes, rng)]

    channels = shape[0]
    for width in (16, 32, 64):
        conv = Conv2dLayer(channels, width, 3, rng, padding=padding)
        pool = MaxPool2dLayer(2)
        shape = pool.out_shape(conv.out_shape(shape))
        if min(shape[1:]) < 1:
            raise ConfigError(f"Input {tuple(in_shape)} too small for {arch}")
        layers += [conv, act(), pool]
        channels = width

    flat = int(np.prod(shape))
    layers.append(FlattenLayer())
    if arch == "cnn3_fc2":
        layers += [LinearLayer(flat, 2, rng), LinearLayer(2, classes, rng)]
    else:
        layers.append(LinearLayer(flat, classes, rng))
    logger.debug("Built %s: %d layers, %d features before FC", arch, len(layers), flat)
    return layers

"""Layer specifications, the sequential Network, and its gradient entry points."""
from __future__ import annotations

import contextlib
from dataclasses import asdict, dataclass
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .tensor import (
    DTYPE,
    ShapeError,
    Tensor,
    conv2d,
    global_avg_pool,
    linear,
    maxpool2d,
)

LAYER_KINDS = ("conv2d", "linear", "relu", "maxpool", "globalavgpool", "flatten")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_channels: int = 0
    out_channels: int = 0
    kernel: int = 0
    stride: int = 1
    padding: int = 0
    in_features: int = 0
    out_features: int = 0

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")

    @classmethod
    def conv(cls, cin: int, cout: int, kernel: int = 3, stride: int = 1, padding: int = 1) -> "LayerSpec":
        return cls("conv2d", in_channels=cin, out_channels=cout, kernel=kernel,
                   stride=stride, padding=padding)

    @classmethod
    def dense(cls, fin: int, fout: int) -> "LayerSpec":
        return cls("linear", in_features=fin, out_features=fout)

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "conv2d":
            d.update(in_channels=self.in_channels, out_channels=self.out_channels,
                     kernel=self.kernel, stride=self.stride, padding=self.padding)
        elif self.kind == "linear":
            d.update(in_features=self.in_features, out_features=self.out_features)
        elif self.kind == "maxpool":
            d.update(kernel=self.kernel, stride=self.stride)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        return cls(**d)

    def param_shapes(self) -> Dict[str, Tuple[int, ...]]:
        if self.kind == "conv2d":
            return {"weight": (self.out_channels, self.in_channels, self.kernel, self.kernel),
                    "bias": (self.out_channels,)}
        if self.kind == "linear":
            return {"weight": (self.out_features, self.in_features), "bias": (self.out_features,)}
        return {}

    def output_shape(self, shape: Tuple[int, ...]) -> Tuple[int, ...]:
        """Per-example output shape (no batch axis) for a per-example input shape."""
        if self.kind == "conv2d":
            if len(shape) != 3 or shape[0] != self.in_channels:
                raise ShapeError(f"conv2d expects ({self.in_channels}, H, W), got {shape}")
            _, h, w = shape
            ho = (h + 2 * self.padding - self.kernel) // self.stride + 1
            wo = (w + 2 * self.padding - self.kernel) // self.stride + 1
            if ho <= 0 or wo <= 0:
                raise ShapeError(f"conv2d kernel {self.kernel} does not fit input {shape}")
            return (self.out_channels, ho, wo)
        if self.kind == "linear":
            if len(shape) != 1 or shape[0] != self.in_features:
                raise ShapeError(f"linear expects ({self.in_features},), got {shape}")
            return (self.out_features,)
        if self.kind == "maxpool":
            if len(shape) != 3:
                raise ShapeError(f"maxpool expects (C, H, W), got {shape}")
            k, s = self.kernel or 2, self.stride or self.kernel or 2
            ho, wo = (shape[1] - k) // s + 1, (shape[2] - k) // s + 1
            if ho <= 0 or wo <= 0:
                raise ShapeError(f"maxpool kernel {k} does not fit input {shape}")
            return (shape[0], ho, wo)
        if self.kind == "globalavgpool":
            if len(shape) != 3:
                raise ShapeError(f"globalavgpool expects (C, H, W), got {shape}")
            return (shape[0],)
        if self.kind == "flatten":
            return (int(np.prod(shape)),)
        return tuple(shape)  # relu


def infer_shapes(layers: Sequence[LayerSpec], input_shape: Tuple[int, ...]) -> List[Tuple[int, ...]]:
    """Static shape check: the per-example output shape after every layer."""
    shapes = []
    shape = tuple(input_shape)
    for layer in layers:
        shape = layer.output_shape(shape)
        shapes.append(shape)
    return shapes


class Network:
    """A sequential classifier with a designated representation layer.

    ``rep_tap`` is the index of the layer whose output is the representation
    R(x). Exactly one linear layer may follow it, so logits are an affine
    function of the representation.
    """

    def __init__(self, layers: Sequence[LayerSpec], input_shape: Tuple[int, int, int],
                 rep_tap: int, params: Optional[Dict[str, np.ndarray]] = None,
                 class_names: Optional[Sequence[str]] = None):
        self.layers = list(layers)
        self.input_shape = tuple(int(s) for s in input_shape)
        self.rep_tap = int(rep_tap)
        self.shapes = infer_shapes(self.layers, self.input_shape)

        tail = self.layers[self.rep_tap + 1:]
        if len(tail) != 1 or tail[0].kind != "linear":
            raise ShapeError("exactly one linear layer must follow the representation tap")
        rep_shape = self.shapes[self.rep_tap]
        if len(rep_shape) != 1:
            raise ShapeError(f"representation must be a vector, got shape {rep_shape}")
        if rep_shape[0] >= int(np.prod(self.input_shape)):
            raise ShapeError("representation dimension must be smaller than input dimension")
        self.rep_dim = rep_shape[0]
        self.class_count = self.shapes[-1][0]
        self.class_names = list(class_names) if class_names is not None else \
            [str(i) for i in range(self.class_count)]

        self.params: Dict[str, Tensor] = {}
        for idx, layer in enumerate(self.layers):
            for pname, pshape in layer.param_shapes().items():
                key = f"{idx}.{pname}"
                if params is not None:
                    if key not in params:
                        raise ShapeError(f"missing parameter {key}")
                    arr = np.asarray(params[key], dtype=DTYPE)
                    if arr.shape != pshape:
                        raise ShapeError(f"parameter {key} has shape {arr.shape}, expected {pshape}")
                else:
                    arr = np.zeros(pshape, dtype=DTYPE)
                self.params[key] = Tensor(arr.copy(), requires_grad=True)

    # -- parameters ----------------------------------------------------------

    def param_names(self) -> List[str]:
        return list(self.params)

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        for k, t in self.params.items():
            arr = np.asarray(state[k], dtype=DTYPE)
            if arr.shape != t.shape:
                raise ShapeError(f"parameter {k}: {arr.shape} != {t.shape}")
            t.data = arr.copy()

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    @contextlib.contextmanager
    def frozen(self) -> Iterator["Network"]:
        """Parameters stop requiring gradients inside the block (input-only backward)."""
        saved = {k: t.requires_grad for k, t in self.params.items()}
        for t in self.params.values():
            t.requires_grad = False
        try:
            yield self
        finally:
            for k, t in self.params.items():
                t.requires_grad = saved[k]

    def architecture(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "rep_tap": self.rep_tap,
            "layers": [layer.to_dict() for layer in self.layers],
            "class_names": list(self.class_names),
        }

    @classmethod
    def from_architecture(cls, arch: dict, params: Optional[Dict[str, np.ndarray]] = None) -> "Network":
        return cls([LayerSpec.from_dict(d) for d in arch["layers"]], tuple(arch["input_shape"]),
                   arch["rep_tap"], params=params, class_names=arch.get("class_names"))

    # -- forward -------------------------------------------------------------

    def _apply(self, idx: int, x: Tensor) -> Tensor:
        layer = self.layers[idx]
        if layer.kind == "conv2d":
            return conv2d(x, self.params[f"{idx}.weight"], self.params[f"{idx}.bias"],
                          stride=layer.stride, padding=layer.padding)
        if layer.kind == "linear":
            return linear(x, self.params[f"{idx}.weight"], self.params[f"{idx}.bias"])
        if layer.kind == "relu":
            return x.relu()
        if layer.kind == "maxpool":
            k = layer.kernel or 2
            return maxpool2d(x, k, layer.stride or k)
        if layer.kind == "globalavgpool":
            return global_avg_pool(x)
        # flatten back to per-example rows in (C, H, W) order
        return x.transpose((1, 0, 2, 3)).reshape(x.shape[1], -1)

    def check_input(self, x) -> None:
        shape = tuple(x.shape)
        if len(shape) != 4 or shape[1:] != self.input_shape:
            raise ShapeError(f"expected batch of shape (B, {', '.join(map(str, self.input_shape))}), "
                             f"got {shape}")

    def _to_internal(self, x: Tensor) -> Tensor:
        # activations of spatial layers are kept channel-major: (C, B, H, W)
        return x.transpose((1, 0, 2, 3))

    def forward(self, x: Tensor) -> Tuple[Tensor, Tensor]:
        """Return ``(logits, representation)`` for a (B, C, H, W) batch."""
        self.check_input(x)
        x = self._to_internal(x)
        rep = None
        for idx in range(len(self.layers)):
            x = self._apply(idx, x)
            if idx == self.rep_tap:
                rep = x
        return x, rep

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)[0]

    def representation(self, x: Tensor) -> Tensor:
        self.check_input(x)
        x = self._to_internal(x)
        for idx in range(self.rep_tap + 1):
            x = self._apply(idx, x)
        return x


def repnet_s(num_classes: int = 10, input_shape: Tuple[int, int, int] = (3, 32, 32),
             rep_dim: int = 64) -> List[LayerSpec]:
    """Layer list of the default desk architecture (post-ReLU tap at index 9)."""
    cin = input_shape[0]
    return [
        LayerSpec.conv(cin, 16, 3, 1, 1), LayerSpec("relu"),
        LayerSpec.conv(16, 32, 3, 2, 1), LayerSpec("relu"),
        LayerSpec.conv(32, 64, 3, 2, 1), LayerSpec("relu"),
        LayerSpec("globalavgpool"),
        LayerSpec.dense(64, rep_dim), LayerSpec("relu"),
        LayerSpec.dense(rep_dim, num_classes),
    ]


def he_uniform_init(net: Network, seed: int) -> Network:
    """He-uniform weights, zero biases; reproducible for a fixed seed."""
    rng = np.random.default_rng(seed)
    for idx, layer in enumerate(net.layers):
        if layer.kind == "conv2d":
            fan_in = layer.in_channels * layer.kernel * layer.kernel
        elif layer.kind == "linear":
            fan_in = layer.in_features
        else:
            continue
        bound = np.sqrt(6.0 / fan_in)
        w = net.params[f"{idx}.weight"]
        w.data = rng.uniform(-bound, bound, size=w.shape).astype(DTYPE)
        net.params[f"{idx}.bias"].data = np.zeros(net.params[f"{idx}.bias"].shape, dtype=DTYPE)
    return net


def build_repnet_s(num_classes: int = 10, seed: int = 0,
                   input_shape: Tuple[int, int, int] = (3, 32, 32),
                   class_names: Optional[Sequence[str]] = None) -> Network:
    layers = repnet_s(num_classes, input_shape)
    net = Network(layers, input_shape, rep_tap=len(layers) - 2, class_names=class_names)
    return he_uniform_init(net, seed)


# -- functional entry points -------------------------------------------------

def _as_batch(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def forward_logits(net: Network, batch) -> Tensor:
    with net.frozen():
        return net(_as_batch(batch))


def extract_representation(net: Network, batch) -> Tensor:
    with net.frozen():
        return net.representation(_as_batch(batch))


Objective = Callable[[Tensor, Tensor, Tensor], Tensor]


def gradient_wrt_input(net: Network, objective: Objective, x) -> Tuple[float, np.ndarray]:
    """Value and gradient of ``objective(logits, rep, x)`` with respect to ``x``.

    The objective must reduce to a scalar tensor.
    """
    xt = Tensor(np.array(x.data if isinstance(x, Tensor) else x, dtype=DTYPE), requires_grad=True)
    with net.frozen():
        logits, rep = net.forward(xt)
        value = objective(logits, rep, xt)
        if value.size != 1:
            raise ShapeError(f"objective must be scalar, got shape {value.shape}")
        value.backward()
    grad = xt.grad if xt.grad is not None else np.zeros_like(xt.data)
    return value.item(), grad


def gradient_wrt_params(net: Network, loss_fn: Objective, batch) -> Tuple[float, Dict[str, np.ndarray]]:
    """Value of ``loss_fn(logits, rep, x)`` and its gradient for every named parameter."""
    xt = _as_batch(batch)
    net.zero_grad()
    logits, rep = net.forward(xt)
    loss = loss_fn(logits, rep, xt)
    if loss.size != 1:
        raise ShapeError(f"loss must be scalar, got shape {loss.shape}")
    loss.backward()
    grads = {k: (t.grad if t.grad is not None else np.zeros_like(t.data))
             for k, t in net.params.items()}
    net.zero_grad()
    return loss.item(), grads

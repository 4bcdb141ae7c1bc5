#!/usr/bin/env python3
"""
Minimal reverse-mode differentiation engine.

Only what the inpainting models, classifier backbones and losses need:
elementwise arithmetic with broadcasting, reductions, activations, strided /
dilated 1-D and 2-D convolution (cross-correlation), gated convolution,
nearest-neighbour upsampling, a dense layer, cross-entropy and Adam.

Tensors are immutable once consumed by an op: optimisers rebind ``values``
rather than writing into them, so a recorded graph never sees its inputs change.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Literal, Mapping, Sequence

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from scipy.special import expit, log_softmax, softmax

from inpainting.errors import ConfigurationError, NumericalError, ShapeMismatchError

logger = logging.getLogger(__name__)

Backward = Callable[[NDArray], None]


class Tensor:
    """n-dimensional array with an optional gradient and the op that produced it."""

    def __init__(
        self,
        values: NDArray | float | Sequence,
        requires_grad: bool = False,
        *,
        dtype: np.dtype | type | None = None,
        parents: tuple["Tensor", ...] = (),
        op: str = "leaf",
    ) -> None:
        array = np.asarray(values, dtype=dtype)
        if not np.issubdtype(array.dtype, np.floating):
            array = array.astype(np.float64)
        self.values: NDArray = array
        self.requires_grad = requires_grad
        self.grad: NDArray | None = None
        self.op = op
        self._parents = parents
        self._backward: Backward | None = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.values.shape)

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.values.dtype

    def item(self) -> float:
        return float(self.values.reshape(-1)[0]) if self.values.size == 1 else math.nan

    def numpy(self) -> NDArray:
        return self.values

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, grad: NDArray) -> None:
        grad = _unbroadcast(grad, self.values.shape).astype(self.values.dtype, copy=False)
        self.grad = grad.copy() if self.grad is None else self.grad + grad

    def backward(self) -> None:
        """Populate ``grad`` on every tracked tensor reachable from this scalar."""
        if self.values.size != 1:
            raise ShapeMismatchError(f"backward needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise ValueError("loss does not depend on any tracked tensor")
        order = _reverse_topological_order(self)
        self._accumulate(np.ones_like(self.values))
        for node in order:
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # arithmetic

    def __add__(self, other: "Tensor | NDArray | float") -> "Tensor":
        other = _lift(other, self)
        out = _result(self.values + other.values, (self, other), "add")

        def backward(g: NDArray) -> None:
            _send(self, g)
            _send(other, g)

        return _attach(out, backward)

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        out = _result(-self.values, (self,), "neg")
        return _attach(out, lambda g: _send(self, -g))

    def __sub__(self, other: "Tensor | NDArray | float") -> "Tensor":
        return self + (-_lift(other, self))

    def __rsub__(self, other: "Tensor | NDArray | float") -> "Tensor":
        return _lift(other, self) + (-self)

    def __mul__(self, other: "Tensor | NDArray | float") -> "Tensor":
        other = _lift(other, self)
        out = _result(self.values * other.values, (self, other), "mul")

        def backward(g: NDArray) -> None:
            _send(self, g * other.values)
            _send(other, g * self.values)

        return _attach(out, backward)

    __rmul__ = __mul__

    def __truediv__(self, other: float) -> "Tensor":
        if isinstance(other, Tensor):
            raise TypeError("division is only supported by constants")
        return self * (1.0 / other)

    def __getitem__(self, index: object) -> "Tensor":
        out = _result(self.values[index], (self,), "slice")

        def backward(g: NDArray) -> None:
            full = np.zeros_like(self.values)
            full[index] += g
            _send(self, full)

        return _attach(out, backward)

    # reductions and shape

    def sum(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> "Tensor":
        out = _result(self.values.sum(axis=axis, keepdims=keepdims), (self,), "sum")

        def backward(g: NDArray) -> None:
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            _send(self, np.broadcast_to(g, self.values.shape))

        return _attach(out, backward)

    def mean(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> "Tensor":
        axes = range(self.ndim) if axis is None else np.atleast_1d(axis)
        count = int(np.prod([self.values.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape: int) -> "Tensor":
        out = _result(self.values.reshape(*shape), (self,), "reshape")
        return _attach(out, lambda g: _send(self, g.reshape(self.values.shape)))

    def abs(self) -> "Tensor":
        out = _result(np.abs(self.values), (self,), "abs")
        # subgradient 0 at exactly 0
        return _attach(out, lambda g: _send(self, g * np.sign(self.values)))


def _lift(value: "Tensor | NDArray | float", like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=like.dtype))


def _result(values: NDArray, parents: tuple[Tensor, ...], op: str) -> Tensor:
    tracked = any(p.requires_grad for p in parents)
    return Tensor(values, requires_grad=tracked, parents=parents if tracked else (), op=op)


def _attach(out: Tensor, backward: Backward) -> Tensor:
    if out.requires_grad:
        out._backward = backward
    return out


def _send(parent: Tensor, grad: NDArray) -> None:
    if parent.requires_grad:
        parent._accumulate(grad)


def _unbroadcast(grad: NDArray, shape: tuple[int, ...]) -> NDArray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _reverse_topological_order(root: Tensor) -> list[Tensor]:
    """Consumers before producers; ties broken by parent order, so runs are reproducible."""
    consumers: dict[int, int] = {}
    seen: dict[int, Tensor] = {id(root): root}
    stack = [root]
    while stack:
        node = stack.pop()
        for parent in node._parents:
            if not parent.requires_grad:
                continue
            consumers[id(parent)] = consumers.get(id(parent), 0) + 1
            if id(parent) not in seen:
                seen[id(parent)] = parent
                stack.append(parent)

    order: list[Tensor] = []
    ready = [root]
    while ready:
        node = ready.pop()
        order.append(node)
        for parent in node._parents:
            if not parent.requires_grad:
                continue
            consumers[id(parent)] -= 1
            if consumers[id(parent)] == 0:
                ready.append(parent)
    assert len(order) == len(seen), "computation graph contains a cycle"
    return order


# activations


def sigmoid(x: Tensor) -> Tensor:
    s = expit(x.values)
    out = _result(s, (x,), "sigmoid")
    return _attach(out, lambda g: _send(x, g * s * (1.0 - s)))


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.values)
    out = _result(t, (x,), "tanh")
    return _attach(out, lambda g: _send(x, g * (1.0 - t * t)))


def relu(x: Tensor) -> Tensor:
    positive = x.values > 0
    out = _result(np.where(positive, x.values, 0.0).astype(x.dtype), (x,), "relu")
    return _attach(out, lambda g: _send(x, g * positive))


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    positive = x.values > 0
    factor = np.where(positive, 1.0, slope).astype(x.dtype)
    out = _result(x.values * factor, (x,), "leaky_relu")
    return _attach(out, lambda g: _send(x, g * factor))


Activation = Literal["leaky_relu", "sigmoid", "identity"]


def activate(x: Tensor, activation: str, slope: float = 0.2) -> Tensor:
    if activation == "leaky_relu":
        return leaky_relu(x, slope)
    if activation == "sigmoid":
        return sigmoid(x)
    if activation == "identity":
        return x
    if activation == "tanh":
        return tanh(x)
    if activation == "relu":
        return relu(x)
    raise ConfigurationError(f"unsupported activation {activation!r}")


# structural ops


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    values = np.concatenate([t.values for t in tensors], axis=axis)
    out = _result(values, tuple(tensors), "concat")
    bounds = np.cumsum([t.values.shape[axis] for t in tensors])[:-1]

    def backward(g: NDArray) -> None:
        for tensor, piece in zip(tensors, np.split(g, bounds, axis=axis)):
            _send(tensor, piece)

    return _attach(out, backward)


def pad(x: Tensor, widths: Sequence[tuple[int, int]]) -> Tensor:
    """Zero-pad trailing axes; ``widths`` holds (before, after) for the last len(widths) axes."""
    full = [(0, 0)] * (x.ndim - len(widths)) + [tuple(w) for w in widths]
    out = _result(np.pad(x.values, full), (x,), "pad")
    crop = tuple(slice(b, b + size) for (b, _), size in zip(full, x.values.shape))
    return _attach(out, lambda g: _send(x, g[crop]))


def upsample_nearest(x: Tensor, factors: Sequence[int]) -> Tensor:
    """Repeat each spatial position ``factor`` times along each spatial axis."""
    spatial = len(factors)
    values = x.values
    for offset, factor in enumerate(factors):
        values = np.repeat(values, factor, axis=x.ndim - spatial + offset)
    out = _result(values, (x,), "upsample")

    def backward(g: NDArray) -> None:
        for offset, factor in enumerate(factors):
            axis = x.ndim - spatial + offset
            shape = g.shape[:axis] + (g.shape[axis] // factor, factor) + g.shape[axis + 1 :]
            g = g.reshape(shape).sum(axis=axis + 1)
        _send(x, g)

    return _attach(out, backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """x (N, D) @ weight(K, D).T + bias(K)."""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeMismatchError(f"linear: input {x.shape} vs weight {weight.shape}")
    out = _result(x.values @ weight.values.T, (x, weight), "linear")

    def backward(g: NDArray) -> None:
        _send(x, g @ weight.values)
        _send(weight, g.T @ x.values)

    result = _attach(out, backward)
    return result + bias if bias is not None else result


def global_average_pool(x: Tensor) -> Tensor:
    """(N, C, *spatial) -> (N, C)."""
    return x.mean(axis=tuple(range(2, x.ndim)))


def cross_entropy(logits: Tensor, labels: NDArray[np.integer]) -> Tensor:
    """Mean negative log-likelihood of integer labels under softmax(logits)."""
    labels = np.asarray(labels, dtype=np.intp)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeMismatchError(f"cross_entropy: logits {logits.shape} vs labels {labels.shape}")
    n = logits.shape[0]
    log_probs = log_softmax(logits.values, axis=1)
    loss = -log_probs[np.arange(n), labels].mean()
    out = _result(np.asarray(loss, dtype=logits.dtype), (logits,), "cross_entropy")

    def backward(g: NDArray) -> None:
        probs = softmax(logits.values, axis=1)
        probs[np.arange(n), labels] -= 1.0
        _send(logits, g * probs / n)

    return _attach(out, backward)


# convolution


def _as_tuple(value: int | Sequence[int], dims: int) -> tuple[int, ...]:
    if isinstance(value, (int, np.integer)):
        return (int(value),) * dims
    value = tuple(int(v) for v in value)
    if len(value) != dims:
        raise ShapeMismatchError(f"expected {dims} values, got {value}")
    return value


def conv_output_length(length: int, kernel: int, stride: int, dilation: int, padding: str) -> int:
    span = (kernel - 1) * dilation + 1
    padded = length + (span - 1 if padding == "same" else 0)
    return (padded - span) // stride + 1


def conv(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride: int | Sequence[int] = 1,
    dilation: int | Sequence[int] = 1,
    padding: Literal["same", "valid"] = "same",
) -> Tensor:
    """
    Cross-correlation over 1 or 2 spatial axes.

    x is (N, C, L) or (N, C, H, W); weight is (O, C, K) or (O, C, KH, KW).
    "same" zero-pads (k - 1) * d samples per axis, the extra one after when odd;
    output length per axis is floor((padded - span) / stride) + 1.
    """
    dims = weight.ndim - 2
    if dims not in (1, 2) or x.ndim != dims + 2:
        raise ShapeMismatchError(f"conv: input {x.shape} vs weight {weight.shape}")
    if x.shape[1] != weight.shape[1]:
        raise ShapeMismatchError(
            f"conv: input has {x.shape[1]} channels, weight expects {weight.shape[1]}"
        )
    strides = _as_tuple(stride, dims)
    dilations = _as_tuple(dilation, dims)
    kernels = weight.shape[2:]

    pads: list[tuple[int, int]] = []
    out_sizes: list[int] = []
    for size, k, s, d in zip(x.shape[2:], kernels, strides, dilations):
        span = (k - 1) * d + 1
        if size < span:
            raise ShapeMismatchError(f"conv: spatial extent {size} < kernel span {span}")
        total = span - 1 if padding == "same" else 0
        pads.append((total // 2, total - total // 2))
        out_sizes.append(conv_output_length(size, k, s, d, padding))
    if min(out_sizes) < 1:
        raise ShapeMismatchError(f"conv: zero-length output for input {x.shape}")

    # 1-D runs as 2-D with a unit height axis
    xv = x.values if dims == 2 else x.values[:, :, None, :]
    wv = weight.values if dims == 2 else weight.values[:, :, None, :]
    if dims == 1:
        pads = [(0, 0)] + pads
        strides, dilations, out_sizes = (1,) + strides, (1,) + dilations, [1] + out_sizes
    xp = np.pad(xv, [(0, 0), (0, 0), pads[0], pads[1]])
    kh_count, kw_count = wv.shape[2], wv.shape[3]
    oh, ow = out_sizes
    (sh, sw), (dh, dw) = strides, dilations

    def window(kh: int, kw: int) -> tuple[slice, slice, slice, slice]:
        h0, w0 = kh * dh, kw * dw
        return (
            slice(None),
            slice(None),
            slice(h0, h0 + sh * (oh - 1) + 1, sh),
            slice(w0, w0 + sw * (ow - 1) + 1, sw),
        )

    n, c = xv.shape[:2]
    cols = np.empty((n, c, kh_count, kw_count, oh, ow), dtype=xv.dtype)
    for kh in range(kh_count):
        for kw in range(kw_count):
            cols[:, :, kh, kw] = xp[window(kh, kw)]
    result = np.tensordot(wv, cols, axes=([1, 2, 3], [1, 2, 3])).transpose(1, 0, 2, 3)
    if bias is not None:
        result = result + bias.values[None, :, None, None]
    values = result if dims == 2 else result[:, :, 0, :]

    parents = (x, weight) if bias is None else (x, weight, bias)
    out = _result(np.ascontiguousarray(values), parents, f"conv{dims}d")

    def backward(g: NDArray) -> None:
        g4 = g if dims == 2 else g[:, :, None, :]
        if bias is not None:
            _send(bias, g4.sum(axis=(0, 2, 3)))
        if weight.requires_grad:
            dw_ = np.tensordot(g4, cols, axes=([0, 2, 3], [0, 4, 5]))
            _send(weight, dw_ if dims == 2 else dw_[:, :, 0, :])
        if x.requires_grad:
            dcols = np.tensordot(wv, g4, axes=([0], [1]))  # (C, KH, KW, N, OH, OW)
            dxp = np.zeros_like(xp)
            for kh in range(kh_count):
                for kw in range(kw_count):
                    dxp[window(kh, kw)] += dcols[:, kh, kw].transpose(1, 0, 2, 3)
            dx = dxp[:, :, pads[0][0] : pads[0][0] + xv.shape[2], pads[1][0] : pads[1][0] + xv.shape[3]]
            _send(x, dx if dims == 2 else dx[:, :, 0, :])

    return _attach(out, backward)


# layer description


LayerKind = Literal[
    "conv1d", "conv2d", "gated_conv1d", "gated_conv2d", "upsample_nearest", "activation"
]


class LayerSpec(BaseModel):
    """One layer of a convolutional stack."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: LayerKind
    in_channels: int = 0
    out_channels: int = 0
    kernel: tuple[int, ...] = (1,)
    stride: tuple[int, ...] = (1,)
    dilation: tuple[int, ...] = (1,)
    factor: tuple[int, ...] = (1,)
    activation: Activation = "leaky_relu"
    slope: float = 0.2
    padding: Literal["same", "valid"] = "same"

    @model_validator(mode="before")
    @classmethod
    def _expand_scalars(cls, data: object) -> object:
        # a scalar kernel/stride/dilation applies to every spatial axis
        if not isinstance(data, dict):
            return data
        data = dict(data)
        dims = 2 if str(data.get("kind", "")).endswith("2d") else 1
        if "conv" in str(data.get("kind", "")):
            for name in ("kernel", "stride", "dilation"):
                data.setdefault(name, 1)
        for name in ("kernel", "stride", "dilation", "factor"):
            value = data.get(name)
            if isinstance(value, (int, np.integer)):
                data[name] = (int(value),) * (dims if name != "factor" else 1)
        return data

    @field_validator("kernel", "stride", "dilation", "factor")
    @classmethod
    def _positive(cls, value: tuple[int, ...]) -> tuple[int, ...]:
        if not value or any(v < 1 for v in value):
            raise ValueError(f"values must be >= 1, got {value}")
        return value

    @model_validator(mode="after")
    def _check(self) -> "LayerSpec":
        if self.is_conv:
            if self.in_channels < 1 or self.out_channels < 1:
                raise ValueError(f"{self.kind} needs positive in/out channel counts")
            for name in ("kernel", "stride", "dilation"):
                values = getattr(self, name)
                if len(values) != self.spatial_dims:
                    raise ValueError(
                        f"{self.kind} {name} needs {self.spatial_dims} values, got {values}"
                    )
        return self

    @property
    def is_conv(self) -> bool:
        return self.kind in ("conv1d", "conv2d", "gated_conv1d", "gated_conv2d")

    @property
    def is_gated(self) -> bool:
        return self.kind.startswith("gated")

    @property
    def spatial_dims(self) -> int | None:
        if self.kind in ("conv1d", "gated_conv1d"):
            return 1
        if self.kind in ("conv2d", "gated_conv2d"):
            return 2
        if self.kind == "upsample_nearest":
            return len(self.factor)
        return None

    def weight_shape(self) -> tuple[int, ...]:
        return (self.out_channels, self.in_channels, *self.kernel)

    def fan_in(self) -> int:
        return self.in_channels * int(np.prod(self.kernel))


def conv_forward(x: Tensor, layer: LayerSpec, weight: Tensor, bias: Tensor | None) -> Tensor:
    """Plain convolution followed by the layer's activation."""
    if not layer.is_conv or layer.is_gated:
        raise ConfigurationError(f"conv_forward needs a plain conv layer, got {layer.kind}")
    y = conv(x, weight, bias, layer.stride, layer.dilation, layer.padding)
    return activate(y, layer.activation, layer.slope)


def gated_conv_forward(
    x: Tensor,
    layer: LayerSpec,
    gate_weight: Tensor,
    gate_bias: Tensor | None,
    feature_weight: Tensor,
    feature_bias: Tensor | None,
) -> Tensor:
    """sigmoid(W_g * x) ⊙ act(W_f * x); both banks share one im2col pass."""
    if not layer.is_gated:
        raise ConfigurationError(f"gated_conv_forward needs a gated layer, got {layer.kind}")
    if gate_weight.shape != feature_weight.shape:
        raise ShapeMismatchError(
            f"gate bank {gate_weight.shape} != feature bank {feature_weight.shape}"
        )
    o = layer.out_channels
    weight = concat([gate_weight, feature_weight], axis=0)
    bias = None
    if gate_bias is not None and feature_bias is not None:
        bias = concat([gate_bias, feature_bias], axis=0)
    both = conv(x, weight, bias, layer.stride, layer.dilation, layer.padding)
    gate = sigmoid(both[:, :o])
    feature = activate(both[:, o:], layer.activation, layer.slope)
    return gate * feature


# receptive field


def receptive_field(model: "Iterable[LayerSpec] | object") -> tuple[int, ...]:
    """
    Input extent influencing one output position, per spatial axis.

    Without upsampling this is 1 + sum_i (k_i - 1) * d_i * prod_{j<i} s_j.
    Nearest upsampling makes the extent depend on where an output position
    falls within a repeated block, so the result is the widest extent over
    one period of output positions (the product of the upsampling factors).
    """
    layers = [l for l in getattr(model, "layers", model) if l.kind != "activation"]
    dims = next((l.spatial_dims for l in layers if l.spatial_dims), None)
    if dims is None:
        raise ConfigurationError("receptive_field: model has no spatial layers")
    for layer in layers:
        if not (layer.is_conv or layer.kind == "upsample_nearest"):
            raise ConfigurationError(f"receptive_field: unsupported layer kind {layer.kind!r}")

    def factors(layer: LayerSpec) -> tuple[int, ...]:
        return _as_tuple(layer.factor if len(layer.factor) == dims else layer.factor[0], dims)

    extents = []
    for axis in range(dims):
        period = math.prod(factors(l)[axis] for l in layers if l.kind == "upsample_nearest")
        widest = 0
        for position in range(period):
            # first and last input index reached from this output position
            lo = hi = position
            for layer in reversed(layers):
                if layer.kind == "upsample_nearest":
                    lo //= factors(layer)[axis]
                    hi //= factors(layer)[axis]
                    continue
                span = (layer.kernel[axis] - 1) * layer.dilation[axis] + 1
                left = (span - 1) // 2 if layer.padding == "same" else 0
                lo = lo * layer.stride[axis] - left
                hi = hi * layer.stride[axis] - left + span - 1
            widest = max(widest, hi - lo + 1)
        extents.append(widest)
    return tuple(extents)


# optimisation


@dataclass
class AdamState:
    step: int = 0
    first_moment: dict[str, NDArray] = field(default_factory=dict)
    second_moment: dict[str, NDArray] = field(default_factory=dict)


def adam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, NDArray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    """One bias-corrected Adam update. Non-finite gradients abort before anything changes."""
    for name, param in params.items():
        grad = grads[name]
        if grad.shape != param.shape:
            raise ShapeMismatchError(f"gradient for {name}: {grad.shape} != {param.shape}")
        if not np.all(np.isfinite(grad)):
            raise NumericalError(
                f"non-finite gradient for parameter {name!r} at step {state.step + 1}",
                context={"parameter": name, "step": state.step + 1},
            )

    step = state.step + 1
    correction1 = 1.0 - beta1**step
    correction2 = 1.0 - beta2**step
    first: dict[str, NDArray] = {}
    second: dict[str, NDArray] = {}
    for name, param in params.items():
        grad = grads[name]
        m = beta1 * state.first_moment.get(name, np.zeros_like(grad)) + (1.0 - beta1) * grad
        v = beta2 * state.second_moment.get(name, np.zeros_like(grad)) + (1.0 - beta2) * grad * grad
        update = lr * (m / correction1) / (np.sqrt(v / correction2) + eps)
        param.values = (param.values - update).astype(param.dtype)
        first[name], second[name] = m, v
    return AdamState(step, first, second)


class Adam:
    """Adam over a named parameter set."""

    def __init__(
        self,
        params: Mapping[str, Tensor],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        self.params = dict(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = AdamState()

    def zero_grad(self) -> None:
        for param in self.params.values():
            param.zero_grad()

    def step(self) -> None:
        grads = {
            name: p.grad if p.grad is not None else np.zeros_like(p.values)
            for name, p in self.params.items()
        }
        self.state = adam_step(
            self.params, grads, self.state, self.lr, self.beta1, self.beta2, self.eps
        )


def check_gradients(
    fn: Callable[[], Tensor], inputs: Sequence[Tensor], eps: float = 1e-5
) -> float:
    """
    Largest relative error between backprop and central differences.

    Error per input is max|analytic - numeric| / max(max|numeric|, 1e-12);
    the worst input is returned.
    """
    for tensor in inputs:
        tensor.zero_grad()
    fn().backward()
    analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.values) for t in inputs]

    worst = 0.0
    for tensor, grad in zip(inputs, analytic):
        base = tensor.values
        numeric = np.zeros_like(base)
        for index in np.ndindex(base.shape):
            plus = base.copy()
            plus[index] += eps
            minus = base.copy()
            minus[index] -= eps
            tensor.values = plus
            f_plus = fn().item()
            tensor.values = minus
            f_minus = fn().item()
            numeric[index] = (f_plus - f_minus) / (2 * eps)
        tensor.values = base
        scale = max(float(np.max(np.abs(numeric))), 1e-12)
        worst = max(worst, float(np.max(np.abs(grad - numeric))) / scale)
    return worst

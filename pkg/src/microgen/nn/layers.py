"""Stateful layer objects and sequential networks built on the raw kernels.

A network is a Sequential of Blocks; each Block is a (transposed) conv
layer, an optional batch norm and an activation, matching the row
structure of the DC-GAN layer table. Forward passes cache what the
backward pass needs; gradients accumulate into Param.grad until
zero_grads() is called.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .ops import ConvSpec

ACTIVATIONS = ("none", "relu", "leaky_relu", "sigmoid", "softmax")
LEAKY_SLOPE = 0.2


class Param:
    """A trainable array plus its accumulated gradient."""

    __slots__ = ("value", "grad")

    def __init__(self, value: np.ndarray):
        self.value = value
        self.grad = None

    def add_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g.astype(self.value.dtype, copy=True)
        else:
            self.grad += g


class ConvLayer:
    def __init__(self, spec: ConvSpec, weight: np.ndarray,
                 bias: np.ndarray | None = None):
        expected = (spec.out_channels, spec.in_channels) + tuple(spec.kernel)
        if weight.shape != expected:
            raise ValueError(f"conv weight shape {weight.shape}, expected {expected}")
        self.spec = spec
        self.weight = Param(weight)
        self.bias = Param(bias) if bias is not None else None
        self._cache = None

    def forward(self, x, train: bool = False, pad_mode: str | None = None):
        mode = pad_mode or self.spec.pad_mode
        y = ops.conv3d_forward(x, self.weight.value,
                               self.bias.value if self.bias else None,
                               self.spec.stride, self.spec.padding, mode)
        self._cache = (x, mode) if train else None
        return y

    def backward(self, grad_out):
        if self._cache is None:
            raise RuntimeError("backward without cached train-mode forward")
        x, mode = self._cache
        dx, dw, db = ops.conv3d_backward(
            x, self.weight.value, grad_out, self.spec.stride,
            self.spec.padding, mode, with_bias=self.bias is not None)
        self.weight.add_grad(dw)
        if self.bias is not None:
            self.bias.add_grad(db)
        return dx

    def params(self) -> list[Param]:
        return [self.weight] + ([self.bias] if self.bias else [])


class ConvTransposeLayer:
    def __init__(self, spec: ConvSpec, weight: np.ndarray,
                 bias: np.ndarray | None = None):
        expected = (spec.in_channels, spec.out_channels) + tuple(spec.kernel)
        if weight.shape != expected:
            raise ValueError(
                f"transposed conv weight shape {weight.shape}, expected {expected}")
        self.spec = spec
        self.weight = Param(weight)
        self.bias = Param(bias) if bias is not None else None
        self._cache = None

    def forward(self, x, train: bool = False, pad_mode: str | None = None):
        mode = pad_mode or self.spec.pad_mode
        y = ops.convt3d_forward(x, self.weight.value,
                                self.bias.value if self.bias else None,
                                self.spec.stride, self.spec.padding, mode)
        self._cache = (x, mode) if train else None
        return y

    def backward(self, grad_out):
        if self._cache is None:
            raise RuntimeError("backward without cached train-mode forward")
        x, mode = self._cache
        dx, dw, db = ops.convt3d_backward(
            x, self.weight.value, grad_out, self.spec.stride,
            self.spec.padding, mode, with_bias=self.bias is not None)
        self.weight.add_grad(dw)
        if self.bias is not None:
            self.bias.add_grad(db)
        return dx

    def params(self) -> list[Param]:
        return [self.weight] + ([self.bias] if self.bias else [])


class BatchNormLayer:
    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1,
                 gamma=None, beta=None, running_mean=None, running_var=None):
        if eps <= 0:
            raise ValueError(f"eps must be > 0, got {eps}")
        f32 = lambda a, fill: (np.full(channels, fill, dtype=np.float32)
                               if a is None else np.asarray(a, dtype=np.float32))
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.gamma = Param(f32(gamma, 1.0))
        self.beta = Param(f32(beta, 0.0))
        self.running_mean = f32(running_mean, 0.0)
        self.running_var = f32(running_var, 1.0)
        if (self.running_var < 0).any():
            raise ValueError("running variance must be >= 0")
        self._cache = None

    def forward(self, x, train: bool = False, pad_mode: str | None = None):
        y, cache = ops.batchnorm_forward(
            x, self.gamma.value, self.beta.value,
            self.running_mean, self.running_var,
            self.eps, self.momentum, mode="train" if train else "eval")
        self._cache = cache if train else None
        return y

    def backward(self, grad_out):
        if self._cache is None:
            raise RuntimeError("backward without cached train-mode forward")
        dx, dgamma, dbeta = ops.batchnorm_backward(grad_out, self.gamma.value,
                                                   self._cache)
        self.gamma.add_grad(dgamma)
        self.beta.add_grad(dbeta)
        return dx

    def params(self) -> list[Param]:
        return [self.gamma, self.beta]


class _Activation:
    def __init__(self, kind: str):
        if kind not in ACTIVATIONS:
            raise ValueError(f"unknown activation {kind!r}")
        self.kind = kind
        self._cache = None

    def forward(self, x, train: bool = False):
        kind = self.kind
        if kind == "none":
            y, cache = x, None
        elif kind == "relu":
            y, cache = ops.relu(x), x
        elif kind == "leaky_relu":
            y, cache = ops.leaky_relu(x, LEAKY_SLOPE), x
        elif kind == "sigmoid":
            y = ops.sigmoid(x)
            cache = y
        else:
            y = ops.softmax_channels(x)
            cache = y
        self._cache = cache if train else None
        return y

    def backward(self, grad_out):
        kind = self.kind
        if kind == "none":
            return grad_out
        if self._cache is None:
            raise RuntimeError("backward without cached train-mode forward")
        if kind == "relu":
            return ops.relu_backward(grad_out, self._cache)
        if kind == "leaky_relu":
            return ops.leaky_relu_backward(grad_out, self._cache, LEAKY_SLOPE)
        if kind == "sigmoid":
            return ops.sigmoid_backward(grad_out, self._cache)
        return ops.softmax_channels_backward(grad_out, self._cache)


@dataclass
class Block:
    layer: ConvLayer | ConvTransposeLayer
    bn: BatchNormLayer | None
    activation: _Activation

    @property
    def has_bn(self) -> bool:
        return self.bn is not None


class Sequential:
    """Kernel/batch-norm/activation blocks applied in order."""

    def __init__(self, blocks: list[Block]):
        self.blocks = blocks

    def forward(self, x, train: bool = False, pad_mode: str | None = None):
        for block in self.blocks:
            x = block.layer.forward(x, train=train, pad_mode=pad_mode)
            if block.bn is not None:
                x = block.bn.forward(x, train=train)
            x = block.activation.forward(x, train=train)
        return x

    def backward(self, grad_out):
        g = grad_out
        for block in reversed(self.blocks):
            g = block.activation.backward(g)
            if block.bn is not None:
                g = block.bn.backward(g)
            g = block.layer.backward(g)
        return g

    def params(self) -> list[Param]:
        out = []
        for block in self.blocks:
            out.extend(block.layer.params())
            if block.bn is not None:
                out.extend(block.bn.params())
        return out

    def zero_grads(self) -> None:
        for p in self.params():
            p.grad = None

    def out_spatial(self, dims: tuple[int, int, int],
                    pad_mode: str | None = None) -> tuple[int, int, int]:
        """Symbolic output shape of the stacked layer specs."""
        dims = tuple(dims)
        for block in self.blocks:
            spec = block.layer.spec
            mode = pad_mode or spec.pad_mode
            size_of = (ops.convt_out_len
                       if isinstance(block.layer, ConvTransposeLayer)
                       else ops.conv_out_len)
            dims = tuple(size_of(n, k, spec.stride, spec.padding, mode)
                         for n, k in zip(dims, spec.kernel))
        return dims

    @property
    def in_channels(self) -> int:
        return self.blocks[0].layer.spec.in_channels

    @property
    def out_channels(self) -> int:
        return self.blocks[-1].layer.spec.out_channels


def make_block(op: str, spec: ConvSpec, activation: str, with_bn: bool,
               rng: np.random.Generator, bn_eps: float = 1e-5,
               bn_momentum: float = 0.1, with_bias: bool | None = None) -> Block:
    """Randomly initialized block: kernels N(0, 0.02), BN gain N(1, 0.02).

    Layers followed by batch norm get no bias (it would be cancelled);
    bare layers get a zero bias unless overridden.
    """
    if op == "conv":
        shape = (spec.out_channels, spec.in_channels) + tuple(spec.kernel)
        cls = ConvLayer
    elif op == "convT":
        shape = (spec.in_channels, spec.out_channels) + tuple(spec.kernel)
        cls = ConvTransposeLayer
    else:
        raise ValueError(f"op must be 'conv' or 'convT', got {op!r}")
    weight = rng.normal(0.0, 0.02, size=shape).astype(np.float32)
    if with_bias is None:
        with_bias = not with_bn
    bias = np.zeros(spec.out_channels, dtype=np.float32) if with_bias else None
    layer = cls(spec, weight, bias)
    bn = None
    if with_bn:
        gamma = rng.normal(1.0, 0.02, size=spec.out_channels).astype(np.float32)
        bn = BatchNormLayer(spec.out_channels, eps=bn_eps, momentum=bn_momentum,
                            gamma=gamma)
    return Block(layer=layer, bn=bn, activation=_Activation(activation))

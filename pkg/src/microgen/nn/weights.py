"""Portable network weight file format MGW1.

Little-endian layout:
    magic ``MGW1`` | u32 version=1 | u32 layer_count | layer records.

Each record: u8 kind (0=conv, 1=transposed conv, 2=batchnorm), u32 in_ch,
out_ch, kd, kh, kw, stride, pad; u8 pad_mode (0=zero, 1=circular);
u8 has_bias; then f32 arrays:

* conv kernels as (out_ch, in_ch, kd, kh, kw), transposed-conv kernels as
  (in_ch, out_ch, kd, kh, kw), both C-order, then bias[out_ch] if present;
* batchnorm: gamma, beta, running mean, running variance (each of length
  out_ch = in_ch, with kernel/stride/pad fields zero), then one f32 eps.

The format stores no activation functions; loaders assign them by
architecture convention. A batchnorm record always normalizes the layer
record preceding it.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..volio import FormatError
from .layers import (Block, BatchNormLayer, ConvLayer, ConvTransposeLayer,
                     Sequential, _Activation)
from .ops import ConvSpec

MGW1_MAGIC = b"MGW1"
KIND_CONV, KIND_CONVT, KIND_BATCHNORM = 0, 1, 2
PAD_MODE_CODES = {"zero": 0, "circular": 1}
PAD_MODE_NAMES = {0: "zero", 1: "circular"}

_FILE_HEADER = struct.Struct("<4sII")
_RECORD_HEADER = struct.Struct("<B7IBB")


@dataclass
class LayerRecord:
    kind: int
    in_ch: int
    out_ch: int
    kernel: tuple[int, int, int] = (0, 0, 0)
    stride: int = 0
    pad: int = 0
    pad_mode: int = 0
    weight: np.ndarray | None = None
    bias: np.ndarray | None = None
    gamma: np.ndarray | None = None
    beta: np.ndarray | None = None
    mean: np.ndarray | None = None
    var: np.ndarray | None = None
    eps: float | None = None

    @property
    def has_bias(self) -> bool:
        return self.bias is not None

    @property
    def is_kernel(self) -> bool:
        return self.kind in (KIND_CONV, KIND_CONVT)


def write_mgw1(path, records: list[LayerRecord]) -> None:
    with open(path, "wb") as f:
        f.write(_FILE_HEADER.pack(MGW1_MAGIC, 1, len(records)))
        for rec in records:
            f.write(_RECORD_HEADER.pack(
                rec.kind, rec.in_ch, rec.out_ch, *rec.kernel,
                rec.stride, rec.pad, rec.pad_mode, 1 if rec.has_bias else 0))
            if rec.is_kernel:
                f.write(np.ascontiguousarray(rec.weight, dtype="<f4").tobytes())
                if rec.bias is not None:
                    f.write(np.ascontiguousarray(rec.bias, dtype="<f4").tobytes())
            elif rec.kind == KIND_BATCHNORM:
                for arr in (rec.gamma, rec.beta, rec.mean, rec.var):
                    f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
                f.write(struct.pack("<f", rec.eps))
            else:
                raise ValueError(f"unknown layer kind {rec.kind}")


def read_mgw1(path) -> list[LayerRecord]:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < _FILE_HEADER.size:
        raise FormatError(path, len(data), "truncated header")
    magic, version, layer_count = _FILE_HEADER.unpack_from(data, 0)
    if magic != MGW1_MAGIC:
        raise FormatError(path, 0, f"bad magic {magic!r}, expected {MGW1_MAGIC!r}")
    if version != 1:
        raise FormatError(path, 4, f"unsupported version {version}")
    offset = _FILE_HEADER.size
    records = []

    def take_f32(count: int, what: str) -> np.ndarray:
        nonlocal offset
        nbytes = 4 * count
        if offset + nbytes > len(data):
            raise FormatError(path, offset, f"truncated {what} array")
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset).copy()
        offset += nbytes
        return arr

    for i in range(layer_count):
        if offset + _RECORD_HEADER.size > len(data):
            raise FormatError(path, offset, f"truncated record {i}")
        (kind, in_ch, out_ch, kd, kh, kw, stride, pad,
         pad_mode, has_bias) = _RECORD_HEADER.unpack_from(data, offset)
        offset += _RECORD_HEADER.size
        if pad_mode not in PAD_MODE_NAMES:
            raise FormatError(path, offset - 2, f"bad pad_mode {pad_mode}")
        if kind in (KIND_CONV, KIND_CONVT):
            if min(kd, kh, kw) < 1 or stride < 1:
                raise FormatError(path, offset - _RECORD_HEADER.size,
                                  f"bad kernel geometry in record {i}")
            n = in_ch * out_ch * kd * kh * kw
            weight = take_f32(n, f"record {i} kernel")
            shape = ((out_ch, in_ch, kd, kh, kw) if kind == KIND_CONV
                     else (in_ch, out_ch, kd, kh, kw))
            bias = take_f32(out_ch, f"record {i} bias") if has_bias else None
            records.append(LayerRecord(
                kind=kind, in_ch=in_ch, out_ch=out_ch, kernel=(kd, kh, kw),
                stride=stride, pad=pad, pad_mode=pad_mode,
                weight=weight.reshape(shape), bias=bias))
        elif kind == KIND_BATCHNORM:
            if in_ch != out_ch:
                raise FormatError(path, offset - _RECORD_HEADER.size,
                                  f"batchnorm record {i} channel mismatch")
            gamma = take_f32(out_ch, f"record {i} gamma")
            beta = take_f32(out_ch, f"record {i} beta")
            mean = take_f32(out_ch, f"record {i} mean")
            var = take_f32(out_ch, f"record {i} var")
            eps = take_f32(1, f"record {i} eps")
            records.append(LayerRecord(
                kind=kind, in_ch=in_ch, out_ch=out_ch,
                gamma=gamma, beta=beta, mean=mean, var=var, eps=float(eps[0])))
        else:
            raise FormatError(path, offset - _RECORD_HEADER.size,
                              f"unknown layer kind {kind} in record {i}")
    if offset != len(data):
        raise FormatError(path, offset, f"{len(data) - offset} trailing bytes")
    return records


def split_records(records: list[LayerRecord]):
    """Partition records into (discriminator, generator) groups.

    Conv records (with their batchnorms) form the discriminator, transposed
    conv records the generator. Either group may be empty.
    """
    disc, gen = [], []
    current = None
    for i, rec in enumerate(records):
        if rec.kind == KIND_CONV:
            current = disc
        elif rec.kind == KIND_CONVT:
            current = gen
        elif current is None:
            raise ValueError(f"record {i}: batchnorm precedes any kernel layer")
        current.append(rec)
    return disc, gen


def records_from_sequential(net: Sequential) -> list[LayerRecord]:
    records = []
    for block in net.blocks:
        layer = block.layer
        spec = layer.spec
        kind = KIND_CONVT if isinstance(layer, ConvTransposeLayer) else KIND_CONV
        records.append(LayerRecord(
            kind=kind, in_ch=spec.in_channels, out_ch=spec.out_channels,
            kernel=tuple(spec.kernel), stride=spec.stride, pad=spec.padding,
            pad_mode=PAD_MODE_CODES[spec.pad_mode],
            weight=layer.weight.value,
            bias=layer.bias.value if layer.bias is not None else None))
        if block.bn is not None:
            bn = block.bn
            records.append(LayerRecord(
                kind=KIND_BATCHNORM, in_ch=bn.channels, out_ch=bn.channels,
                gamma=bn.gamma.value, beta=bn.beta.value,
                mean=bn.running_mean, var=bn.running_var, eps=bn.eps))
    return records


def sequential_from_records(records: list[LayerRecord],
                            activations: list[str]) -> Sequential:
    """Rebuild a network; `activations` has one entry per kernel record."""
    blocks: list[Block] = []
    kernel_records = [r for r in records if r.is_kernel]
    if len(kernel_records) != len(activations):
        raise ValueError(f"{len(kernel_records)} kernel layers but "
                         f"{len(activations)} activations")
    act_iter = iter(activations)
    for rec in records:
        if rec.is_kernel:
            spec = ConvSpec(rec.in_ch, rec.out_ch, rec.kernel, rec.stride,
                            rec.pad, PAD_MODE_NAMES[rec.pad_mode])
            cls = ConvLayer if rec.kind == KIND_CONV else ConvTransposeLayer
            layer = cls(spec, rec.weight.astype(np.float32, copy=True),
                        None if rec.bias is None
                        else rec.bias.astype(np.float32, copy=True))
            blocks.append(Block(layer=layer, bn=None,
                                activation=_Activation(next(act_iter))))
        else:
            if not blocks or blocks[-1].bn is not None:
                raise ValueError("batchnorm record without a preceding kernel layer")
            if rec.out_ch != blocks[-1].layer.spec.out_channels:
                raise ValueError("batchnorm channels do not match preceding layer")
            blocks[-1].bn = BatchNormLayer(
                rec.out_ch, eps=rec.eps, gamma=rec.gamma.copy(),
                beta=rec.beta.copy(), running_mean=rec.mean.copy(),
                running_var=rec.var.copy())
    return Sequential(blocks)

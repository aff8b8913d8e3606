"""Flat binary container for networks.

Layout, all little-endian::

    magic b"SGNN" | version u32 | layer count u32
    per layer: kind tag u32 | n_config u32 | config int32[n_config]
               | n_arrays u32 | per array: ndim u32 | dims int32[ndim] | data float32
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError, LengthError
from ..imaging import write_bytes_atomic
from . import layers as L
from .network import Network

MAGIC = b"SGNN"
VERSION = 1

_KINDS = {
    1: L.Conv2d,
    2: L.BatchNorm,
    3: L.PReLU,
    4: L.LeakyReLU,
    5: L.PixelShuffle,
    6: L.Dense,
    7: L.Sigmoid,
    8: L.ResBegin,
    9: L.ResEnd,
    10: L.Flatten,
    11: L.MaxPool2d,
}
_TAGS = {cls: tag for tag, cls in _KINDS.items()}


def _arrays(layer: L.Layer) -> list[np.ndarray]:
    if isinstance(layer, L.BatchNorm):
        return [layer.params["gamma"], layer.params["beta"], layer.buffers["running_mean"],
                layer.buffers["running_var"], np.array([layer.eps, layer.momentum])]
    if isinstance(layer, L.LeakyReLU):
        return [np.array([layer.alpha])]
    return list(layer.params.values())


def _build(tag: int, config: list[int], arrays: list[np.ndarray]) -> L.Layer:
    cls = _KINDS.get(tag)
    if cls is None:
        raise FormatError(f"unknown layer tag {tag}")
    if cls is L.BatchNorm:
        eps, momentum = (float(v) for v in arrays[4])
        layer = L.BatchNorm(config[0], eps=eps, momentum=momentum)
        layer.params["gamma"], layer.params["beta"] = arrays[0], arrays[1]
        layer.buffers["running_mean"], layer.buffers["running_var"] = arrays[2], arrays[3]
        layer.initialized = bool(config[1])
        return layer
    if cls is L.LeakyReLU:
        return L.LeakyReLU(float(arrays[0][0]))
    layer = cls(*config)
    for name, arr in zip(layer.params, arrays):
        if layer.params[name].shape != arr.shape:
            raise FormatError(f"{cls.__name__}.{name}: stored shape {arr.shape}, expected {layer.params[name].shape}")
        layer.params[name] = arr
    return layer


def dumps(net: Network) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC + struct.pack("<II", VERSION, len(net.layers)))
    for layer in net.layers:
        cfg = layer.config()
        arrays = _arrays(layer)
        buf.write(struct.pack("<II", _TAGS[type(layer)], len(cfg)))
        buf.write(np.asarray(cfg, dtype="<i4").tobytes())
        buf.write(struct.pack("<I", len(arrays)))
        for arr in arrays:
            arr = np.asarray(arr)
            buf.write(struct.pack("<I", arr.ndim))
            buf.write(np.asarray(arr.shape, dtype="<i4").tobytes())
            buf.write(arr.astype("<f4").tobytes())
    return buf.getvalue()


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise LengthError("checkpoint truncated")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def i32s(self, n: int) -> list[int]:
        return np.frombuffer(self.take(4 * n), dtype="<i4").astype(int).tolist()


def loads(data: bytes, name: str = "") -> Network:
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise FormatError("not a network checkpoint (bad magic)")
    version = r.u32()
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    layers = []
    for _ in range(r.u32()):
        tag = r.u32()
        config = r.i32s(r.u32())
        arrays = []
        for _ in range(r.u32()):
            shape = tuple(r.i32s(r.u32()))
            count = int(np.prod(shape)) if shape else 1
            arrays.append(np.frombuffer(r.take(4 * count), dtype="<f4").astype(np.float32).reshape(shape))
        layers.append(_build(tag, config, arrays))
    if r.pos != len(data):
        raise FormatError("trailing bytes after checkpoint")
    return Network(layers, name=name)


def save_network(net: Network, path) -> None:
    write_bytes_atomic(path, dumps(net))


def load_network(path) -> Network:
    return loads(Path(path).read_bytes(), name=Path(path).stem)

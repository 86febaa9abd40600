"""Binary model checkpoints.

Byte layout (all integers little-endian uint32, all parameters little-endian
float32)::

    b"CWLNN1"
    ndim, dims[ndim]                    model input shape (no batch axis)
    n_layers
    per layer:
        kind_len, kind (ASCII)          e.g. "Conv1D"
        n_args, args[n_args]            constructor arguments
    frozen_prefix
    per parameter, in layer order then name order (W before b):
        ndim, dims[ndim], data          row-major float32

Parameters are stored as float32, so a float32 model round-trips exactly.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import CheckpointError
from .layers import LAYER_TYPES
from .model import Sequential

MAGIC = b"CWLNN1"


def _u32(*vals) -> bytes:
    return struct.pack(f"<{len(vals)}I", *vals)


def save_checkpoint(model: Sequential, path) -> None:
    out = [MAGIC, _u32(len(model.input_shape), *model.input_shape), _u32(len(model.layers))]
    for layer in model.layers:
        kind = layer.kind.encode("ascii")
        args = layer.args()
        out += [_u32(len(kind)), kind, _u32(len(args), *args)]
    out.append(_u32(model.frozen_prefix))
    for _, p in model.parameters():
        out.append(_u32(p.ndim, *p.shape))
        out.append(np.ascontiguousarray(p, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(out))


class _Reader:
    def __init__(self, buf):
        self.buf, self.pos = buf, 0

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise CheckpointError("checkpoint truncated")
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self, n=1):
        return struct.unpack(f"<{n}I", self.take(4 * n))


def load_checkpoint(path) -> Sequential:
    r = _Reader(Path(path).read_bytes())
    if r.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path}: not a CWLNN1 checkpoint")
    (ndim,) = r.u32()
    input_shape = r.u32(ndim)
    (n_layers,) = r.u32()
    layers = []
    for _ in range(n_layers):
        (klen,) = r.u32()
        kind = r.take(klen).decode("ascii")
        (nargs,) = r.u32()
        args = r.u32(nargs) if nargs else ()
        if kind not in LAYER_TYPES:
            raise CheckpointError(f"unknown layer kind {kind!r}")
        layers.append(LAYER_TYPES[kind](*args))
    (frozen,) = r.u32()
    model = Sequential(layers, input_shape, dtype=np.float32)
    model.frozen_prefix = frozen
    for (i, name), p in list(model.parameters()):
        (pdim,) = r.u32()
        shape = r.u32(pdim) if pdim else ()
        if tuple(shape) != p.shape:
            raise CheckpointError(f"layer {i} {name}: stored shape {shape}, expected {p.shape}")
        data = np.frombuffer(r.take(4 * int(np.prod(shape))), dtype="<f4").reshape(shape)
        model.layers[i].params[name] = data.astype(np.float32)
    if r.pos != len(r.buf):
        raise CheckpointError("trailing bytes after last parameter")
    return model

"""Model tensor container: in-memory types and the FFPB binary format.

FFPB layout, all integers little-endian:

    magic   4 bytes  b"FFPB"
    version u32      currently 1
    tcount  u32      number of tensors
    per tensor:
        nlen u16, name (UTF-8)
        role u8      0 = weight, 1 = activation
        dtype u8     0 = fp32, 1 = ffp8
        if ffp8: x u8, y u8, z u8, b i16   (5-byte format descriptor)
        rank u8
        extents u32 * rank
        payload      fp32: float32 per element
                     ffp8: one byte per code for n <= 8, two bytes for n <= 16
    lcount  u32      number of layer records
    per layer:
        nlen u16, name
        kind u8      0 = input, 1 = dense, 2 = relu, 3 = output
        refcount u8, then per reference: nlen u16, tensor name
    mcount  u32      metadata entries
    per entry: klen u16, key; vlen u32, value (both UTF-8)

Reads reject a wrong magic (BadMagic), an unknown version (BadVersion),
streams that end early (TruncatedStream), repeated tensor names
(DuplicateTensorName) and layer references to missing tensors
(UnresolvedReference). Writing the result of a read reproduces the input
bytes exactly.
"""

import io
import struct
from dataclasses import dataclass, field

import numpy as np

from .analysis import QuantReport, error_metrics_from
from .errors import (
    BadMagic,
    BadVersion,
    DuplicateTensorName,
    Fp32Overflow,
    TruncatedStream,
    UnresolvedReference,
)
from .formats import FormatSpec, decode_array, encode_array, make_format

MAGIC = b"FFPB"
VERSION = 1

ROLE_WEIGHT = "weight"
ROLE_ACTIVATION = "activation"
_ROLE_TO_BYTE = {ROLE_WEIGHT: 0, ROLE_ACTIVATION: 1}
_BYTE_TO_ROLE = {v: k for k, v in _ROLE_TO_BYTE.items()}

DTYPE_FP32 = "fp32"
DTYPE_FFP8 = "ffp8"
_DTYPE_TO_BYTE = {DTYPE_FP32: 0, DTYPE_FFP8: 1}
_BYTE_TO_DTYPE = {v: k for k, v in _DTYPE_TO_BYTE.items()}

KIND_INPUT = "input"
KIND_DENSE = "dense"
KIND_RELU = "relu"
KIND_OUTPUT = "output"
_KIND_TO_BYTE = {KIND_INPUT: 0, KIND_DENSE: 1, KIND_RELU: 2, KIND_OUTPUT: 3}
_BYTE_TO_KIND = {v: k for k, v in _KIND_TO_BYTE.items()}

_FP32_MAX = float(np.finfo(np.float32).max)


@dataclass
class Tensor:
    """One named tensor: fp32 payload, or ffp8 codes plus their format."""

    name: str
    role: str
    shape: tuple
    dtype: str
    payload: np.ndarray
    fmt: FormatSpec | None = None

    def __post_init__(self):
        self.shape = tuple(int(d) for d in self.shape)
        if self.role not in _ROLE_TO_BYTE:
            raise ValueError(f"unknown role {self.role!r}")
        if self.dtype not in _DTYPE_TO_BYTE:
            raise ValueError(f"unknown dtype {self.dtype!r}")
        if self.dtype == DTYPE_FFP8 and self.fmt is None:
            raise ValueError("ffp8 tensor needs a FormatSpec")
        want = 1
        for d in self.shape:
            want *= d
        if int(self.payload.size) != want:
            raise ValueError(f"payload has {self.payload.size} elements, shape needs {want}")


@dataclass
class Layer:
    name: str
    kind: str
    tensors: tuple = ()

    def __post_init__(self):
        if self.kind not in _KIND_TO_BYTE:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        self.tensors = tuple(self.tensors)


@dataclass
class ModelBundle:
    tensors: dict = field(default_factory=dict)
    layers: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def add_tensor(self, t: Tensor) -> None:
        if t.name in self.tensors:
            raise DuplicateTensorName(t.name)
        self.tensors[t.name] = t

    def validate(self) -> None:
        for layer in self.layers:
            for ref in layer.tensors:
                if ref not in self.tensors:
                    raise UnresolvedReference(
                        f"layer {layer.name!r} references missing tensor {ref!r}")


# ---------------------------------------------------------------------------
# Quantize / dequantize
# ---------------------------------------------------------------------------

def quantize_tensor(t: Tensor, fmt: FormatSpec):
    """Encode an fp32 tensor under fmt. Returns (ffp8 tensor, QuantReport)."""
    if t.dtype != DTYPE_FP32:
        raise ValueError(f"tensor {t.name!r} is not fp32")
    values = np.asarray(t.payload, dtype=np.float64)
    codes = encode_array(fmt, values)
    q = decode_array(fmt, codes)
    report = error_metrics_from(values.ravel(), q.ravel(), fmt)
    out = Tensor(t.name, t.role, t.shape, DTYPE_FFP8, codes.reshape(t.shape), fmt)
    return out, report


def dequantize_tensor(t: Tensor) -> Tensor:
    """Decode an ffp8 tensor back to an exact fp32 tensor."""
    if t.dtype != DTYPE_FFP8:
        raise ValueError(f"tensor {t.name!r} is not ffp8")
    values = decode_array(t.fmt, t.payload)
    if values.size and float(np.abs(values).max()) > _FP32_MAX:
        raise Fp32Overflow(
            f"tensor {t.name!r} holds values beyond the binary32 finite range")
    return Tensor(t.name, t.role, t.shape, DTYPE_FP32,
                  values.astype(np.float32).reshape(t.shape))


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def _code_dtype(fmt: FormatSpec) -> str:
    return "<u1" if fmt.n <= 8 else "<u2"


def _pack_name(name: str) -> bytes:
    raw = name.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ValueError(f"name too long: {name[:32]!r}...")
    return struct.pack("<H", len(raw)) + raw


def to_bytes(bundle: ModelBundle) -> bytes:
    """Serialize a bundle to FFPB bytes."""
    bundle.validate()
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<II", VERSION, len(bundle.tensors)))
    for t in bundle.tensors.values():
        out.write(_pack_name(t.name))
        out.write(struct.pack("<BB", _ROLE_TO_BYTE[t.role], _DTYPE_TO_BYTE[t.dtype]))
        if t.dtype == DTYPE_FFP8:
            out.write(struct.pack("<BBBh", t.fmt.x, t.fmt.y, t.fmt.z, t.fmt.b))
        if len(t.shape) > 0xFF:
            raise ValueError(f"rank {len(t.shape)} too large")
        out.write(struct.pack("<B", len(t.shape)))
        out.write(struct.pack(f"<{len(t.shape)}I", *t.shape))
        if t.dtype == DTYPE_FP32:
            out.write(np.ascontiguousarray(t.payload, dtype="<f4").tobytes())
        else:
            out.write(np.ascontiguousarray(t.payload, dtype=_code_dtype(t.fmt)).tobytes())
    out.write(struct.pack("<I", len(bundle.layers)))
    for layer in bundle.layers:
        out.write(_pack_name(layer.name))
        out.write(struct.pack("<BB", _KIND_TO_BYTE[layer.kind], len(layer.tensors)))
        for ref in layer.tensors:
            out.write(_pack_name(ref))
    out.write(struct.pack("<I", len(bundle.metadata)))
    for key, value in bundle.metadata.items():
        out.write(_pack_name(key))
        raw = str(value).encode("utf-8")
        out.write(struct.pack("<I", len(raw)) + raw)
    return out.getvalue()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.data):
            raise TruncatedStream(
                f"needed {count} bytes at offset {self.pos}, "
                f"only {len(self.data) - self.pos} left")
        chunk = self.data[self.pos:self.pos + count]
        self.pos += count
        return chunk

    def unpack(self, spec: str):
        return struct.unpack(spec, self.take(struct.calcsize(spec)))

    def name(self) -> str:
        (nlen,) = self.unpack("<H")
        return self.take(nlen).decode("utf-8")


def from_bytes(data: bytes) -> ModelBundle:
    """Parse FFPB bytes into a bundle."""
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise BadMagic("not an FFPB stream")
    version, tcount = r.unpack("<II")
    if version != VERSION:
        raise BadVersion(f"unsupported container version {version}")
    bundle = ModelBundle()
    for _ in range(tcount):
        name = r.name()
        role_b, dtype_b = r.unpack("<BB")
        if role_b not in _BYTE_TO_ROLE:
            raise ValueError(f"unknown role byte {role_b}")
        if dtype_b not in _BYTE_TO_DTYPE:
            raise ValueError(f"unknown dtype byte {dtype_b}")
        fmt = None
        if _BYTE_TO_DTYPE[dtype_b] == DTYPE_FFP8:
            x, y, z, b = r.unpack("<BBBh")
            fmt = make_format(x, y, z, b)
        (rank,) = r.unpack("<B")
        shape = r.unpack(f"<{rank}I") if rank else ()
        count = 1
        for d in shape:
            count *= d
        if fmt is None:
            payload = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(shape).copy()
        else:
            width = 1 if fmt.n <= 8 else 2
            payload = np.frombuffer(r.take(width * count),
                                    dtype=_code_dtype(fmt)).reshape(shape).copy()
        t = Tensor(name, _BYTE_TO_ROLE[role_b], shape, _BYTE_TO_DTYPE[dtype_b],
                   payload, fmt)
        bundle.add_tensor(t)
    (lcount,) = r.unpack("<I")
    for _ in range(lcount):
        name = r.name()
        kind_b, refcount = r.unpack("<BB")
        if kind_b not in _BYTE_TO_KIND:
            raise ValueError(f"unknown layer kind byte {kind_b}")
        refs = tuple(r.name() for _ in range(refcount))
        bundle.layers.append(Layer(name, _BYTE_TO_KIND[kind_b], refs))
    (mcount,) = r.unpack("<I")
    for _ in range(mcount):
        key = r.name()
        (vlen,) = r.unpack("<I")
        bundle.metadata[key] = r.take(vlen).decode("utf-8")
    if r.pos != len(data):
        raise ValueError(f"{len(data) - r.pos} trailing bytes after bundle content")
    bundle.validate()
    return bundle


def write_bundle(bundle: ModelBundle, path) -> None:
    with open(path, "wb") as fh:
        fh.write(to_bytes(bundle))


def read_bundle(path) -> ModelBundle:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())

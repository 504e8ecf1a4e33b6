"""Dense tensor values and shape-checked structural operations.

Every value flowing through the library is a `Tensor`: a dense N-dimensional
array (N <= 4) of float32 or float64 scalars, tagged "f32"/"f64".  Images use
the NCHW layout [batch, channel, height, width].

There is no implicit broadcasting except against a plain Python scalar, and
operands of mixed precision are rejected: shape or dtype bugs in the network
wiring must fail loudly instead of being papered over.

Tensors are immutable from the caller's point of view; operations return new
tensors.  The only sanctioned in-place mutation is the optimizer's parameter
update, which owns its arrays.
"""

from __future__ import annotations

import numpy as np

DTYPES = {"f32": np.float32, "f64": np.float64}
_TAG_OF = {np.dtype(np.float32): "f32", np.dtype(np.float64): "f64"}

MAX_NDIM = 4


class ShapeError(ValueError):
    """Raised on shape, dtype, or index contract violations."""


class Tensor:
    __slots__ = ("data",)

    def __init__(self, data, dtype: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is not None:
            if dtype not in DTYPES:
                raise ShapeError(f"unknown dtype tag {dtype!r}; expected one of {sorted(DTYPES)}")
            arr = np.asarray(data, dtype=DTYPES[dtype])
        else:
            arr = np.asarray(data)
            if arr.dtype not in _TAG_OF:
                arr = arr.astype(np.float64)
        if arr.ndim > MAX_NDIM:
            raise ShapeError(f"tensor rank {arr.ndim} exceeds maximum {MAX_NDIM}")
        self.data = arr

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> str:
        return _TAG_OF[self.data.dtype]

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.size == 1 else _raise_item(self)

    def astype(self, dtype: str) -> "Tensor":
        if dtype not in DTYPES:
            raise ShapeError(f"unknown dtype tag {dtype!r}")
        return Tensor(self.data.astype(DTYPES[dtype]))

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy())

    def tolist(self):
        return self.data.tolist()

    def __repr__(self) -> str:
        dims = ",".join(str(d) for d in self.shape)
        return f"Tensor({self.dtype}[{dims}])"


def _raise_item(t: Tensor):
    raise ShapeError(f"item() requires a single-element tensor, got shape {t.shape}")


def _check_extents(shape) -> tuple[int, ...]:
    shape = tuple(int(d) for d in shape)
    if len(shape) > MAX_NDIM:
        raise ShapeError(f"tensor rank {len(shape)} exceeds maximum {MAX_NDIM}")
    for d in shape:
        if d < 0:
            raise ShapeError(f"negative extent in shape {shape}")
    return shape


def zeros(shape, dtype: str = "f64") -> Tensor:
    return Tensor(np.zeros(_check_extents(shape), dtype=DTYPES[dtype]))


def ones(shape, dtype: str = "f64") -> Tensor:
    return Tensor(np.ones(_check_extents(shape), dtype=DTYPES[dtype]))


def full(shape, value: float, dtype: str = "f64") -> Tensor:
    return Tensor(np.full(_check_extents(shape), value, dtype=DTYPES[dtype]))


def _binary_operand(a: Tensor, b) -> np.ndarray | float:
    """Validate the second operand of an elementwise op: equal-shape tensor or scalar."""
    if isinstance(b, Tensor):
        if b.shape != a.shape:
            raise ShapeError(f"elementwise shape mismatch: {a.shape} vs {b.shape}")
        if b.data.dtype != a.data.dtype:
            raise ShapeError(f"elementwise dtype mismatch: {a.dtype} vs {b.dtype}")
        return b.data
    if np.isscalar(b):
        return float(b)
    raise ShapeError(f"elementwise operand must be a Tensor or scalar, got {type(b).__name__}")


def add(a: Tensor, b) -> Tensor:
    return Tensor(a.data + _binary_operand(a, b))


def sub(a: Tensor, b) -> Tensor:
    return Tensor(a.data - _binary_operand(a, b))


def mul(a: Tensor, b) -> Tensor:
    return Tensor(a.data * _binary_operand(a, b))


def scale(a: Tensor, s: float) -> Tensor:
    return Tensor(a.data * a.data.dtype.type(s))


def concat_channels(tensors: list[Tensor]) -> Tensor:
    """Concatenate NCHW tensors along the channel axis, preserving argument order.

    All inputs must agree on batch, height, and width extents.
    """
    if not tensors:
        raise ShapeError("concat_channels requires at least one tensor")
    first = tensors[0]
    if first.ndim != 4:
        raise ShapeError(f"concat_channels expects NCHW tensors, got rank {first.ndim}")
    for t in tensors[1:]:
        if t.ndim != 4 or (t.shape[0],) + t.shape[2:] != (first.shape[0],) + first.shape[2:]:
            raise ShapeError(
                f"concat_channels spatial/batch mismatch: {first.shape} vs {t.shape}"
            )
        if t.data.dtype != first.data.dtype:
            raise ShapeError(f"concat_channels dtype mismatch: {first.dtype} vs {t.dtype}")
    if len(tensors) == 1:
        return Tensor(first.data.copy())
    return Tensor(np.concatenate([t.data for t in tensors], axis=1))


def channel_offsets(tensors: list[Tensor]) -> list[int]:
    """Start offsets of each input block inside concat_channels(tensors)."""
    offs, total = [], 0
    for t in tensors:
        offs.append(total)
        total += t.shape[1]
    return offs


def reshape(t: Tensor, shape) -> Tensor:
    shape = _check_extents(shape)
    if int(np.prod(shape, dtype=np.int64)) != t.size:
        raise ShapeError(f"cannot reshape {t.shape} (size {t.size}) to {shape}")
    return Tensor(t.data.reshape(shape))


def transpose(t: Tensor, axes=None) -> Tensor:
    return Tensor(np.transpose(t.data, axes))


def narrow(t: Tensor, axis: int, start: int, stop: int) -> Tensor:
    """Slice [start, stop) along one axis; indices must be in range."""
    if not -t.ndim <= axis < t.ndim:
        raise ShapeError(f"axis {axis} out of range for rank {t.ndim}")
    extent = t.shape[axis]
    if not (0 <= start <= stop <= extent):
        raise ShapeError(f"slice [{start}, {stop}) out of range for extent {extent}")
    index = [slice(None)] * t.ndim
    index[axis] = slice(start, stop)
    return Tensor(t.data[tuple(index)].copy())


def slice_channels(t: Tensor, start: int, stop: int) -> Tensor:
    return narrow(t, 1, start, stop)


# --- WTNS1 raw tensor file format ------------------------------------------
#
# ASCII header line `WTNS1 <dtype> <ndim> <d0> <d1> ...` terminated by a
# newline, followed by the scalars as little-endian bytes in row-major order.

_WTNS_MAGIC = "WTNS1"
_LE = {"f32": "<f4", "f64": "<f8"}


def save_wtns(path, t: Tensor) -> None:
    dims = " ".join(str(d) for d in t.shape)
    header = f"{_WTNS_MAGIC} {t.dtype} {t.ndim}" + (f" {dims}" if dims else "") + "\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(t.data).astype(_LE[t.dtype]).tobytes())


def load_wtns(path) -> Tensor:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace").strip()
        fields = header.split()
        if len(fields) < 3 or fields[0] != _WTNS_MAGIC:
            raise ShapeError(f"{path}: not a {_WTNS_MAGIC} file (header {header!r})")
        dtype, ndim = fields[1], int(fields[2])
        if dtype not in _LE:
            raise ShapeError(f"{path}: unknown dtype tag {dtype!r}")
        if len(fields) != 3 + ndim:
            raise ShapeError(f"{path}: header lists {len(fields) - 3} extents, expected {ndim}")
        shape = _check_extents(int(d) for d in fields[3:])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        payload = fh.read()
    expected = count * np.dtype(_LE[dtype]).itemsize
    if len(payload) != expected:
        raise ShapeError(f"{path}: payload is {len(payload)} bytes, expected {expected}")
    arr = np.frombuffer(payload, dtype=_LE[dtype]).reshape(shape)
    return Tensor(arr.astype(DTYPES[dtype]))

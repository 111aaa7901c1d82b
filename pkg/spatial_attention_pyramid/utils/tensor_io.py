"""Submodule providing the SAPT binary record used to store tensors."""
import struct
from typing import BinaryIO, Tuple

import numpy as np

from ..exceptions import DataFormatError

__all__ = ["write_tensor", "read_tensor"]

MAGIC = b"SAPT"
VERSION = 1
DTYPE_CODES = {
    np.dtype("float64"): 0,
    np.dtype("float32"): 1
}
CODE_DTYPES = {code: dtype for dtype, code in DTYPE_CODES.items()}


def write_tensor(stream: BinaryIO, tensor: np.ndarray):
    """Write given tensor to the stream as a SAPT record.

    Parameters
    ----------
    stream: BinaryIO,
        Binary stream opened for writing.
    tensor: np.ndarray,
        Tensor to serialize. Must be float64 or float32.

    Raises
    ------
    DataFormatError:
        If the tensor dtype has no SAPT code.
    """
    tensor = np.asarray(tensor)
    if tensor.dtype not in DTYPE_CODES:
        raise DataFormatError(
            "Cannot serialize tensor of dtype {dtype}: "
            "only float64 and float32 are supported.".format(
                dtype=tensor.dtype
            )
        )
    stream.write(MAGIC)
    stream.write(struct.pack("<II", VERSION, tensor.ndim))
    stream.write(struct.pack("<{}Q".format(tensor.ndim), *tensor.shape))
    stream.write(struct.pack("<B", DTYPE_CODES[tensor.dtype]))
    stream.write(np.ascontiguousarray(
        tensor,
        dtype=tensor.dtype.newbyteorder("<")
    ).tobytes())


def _read_exactly(stream: BinaryIO, size: int) -> bytes:
    data = stream.read(size)
    if len(data) != size:
        raise DataFormatError(
            "Truncated SAPT record: expected {size} bytes, got {got}.".format(
                size=size,
                got=len(data)
            )
        )
    return data


def read_tensor(stream: BinaryIO) -> np.ndarray:
    """Return the tensor stored in the next SAPT record of the stream.

    Raises
    ------
    DataFormatError:
        If the magic, version or dtype code is not recognised,
        or if the record is truncated.
    """
    magic = _read_exactly(stream, 4)
    if magic != MAGIC:
        raise DataFormatError(
            "Invalid tensor magic {magic!r}, expected {expected!r}.".format(
                magic=magic,
                expected=MAGIC
            )
        )
    version, rank = struct.unpack("<II", _read_exactly(stream, 8))
    if version != VERSION:
        raise DataFormatError(
            "Unsupported SAPT version {version}.".format(version=version)
        )
    shape: Tuple[int, ...] = struct.unpack(
        "<{}Q".format(rank),
        _read_exactly(stream, 8*rank)
    )
    code, = struct.unpack("<B", _read_exactly(stream, 1))
    if code not in CODE_DTYPES:
        raise DataFormatError(
            "Unknown SAPT dtype code {code}.".format(code=code)
        )
    dtype = CODE_DTYPES[code].newbyteorder("<")
    count = int(np.prod(shape, dtype=np.int64))
    data = _read_exactly(stream, count*dtype.itemsize)
    return np.frombuffer(data, dtype=dtype).astype(
        CODE_DTYPES[code]
    ).reshape(shape)

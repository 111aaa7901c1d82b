"""Binary checkpoints: parameters, optimiser moments and running statistics.

A checkpoint file starts with the magic ``SAPC``, a u32 version, the u64
iteration and the length-prefixed UTF-8 echo of the run configuration,
followed by a u32 record count and the records, sorted by name. Every record
is a u32 name length, the UTF-8 name and a SAPT tensor record.
"""
import io
import os
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Dict

import numpy as np

from .exceptions import DataFormatError
from .utils import read_tensor, write_tensor

__all__ = ["Checkpoint", "CHECKPOINT_MAGIC", "CHECKPOINT_VERSION"]

CHECKPOINT_MAGIC = b"SAPC"
CHECKPOINT_VERSION = 1


def _read_exactly(stream: BinaryIO, size: int, what: str) -> bytes:
    data = stream.read(size)
    if len(data) != size:
        raise DataFormatError(
            "Truncated checkpoint while reading {what}.".format(what=what)
        )
    return data


def _read_text(stream: BinaryIO, what: str) -> str:
    length, = struct.unpack("<I", _read_exactly(stream, 4, what))
    try:
        return _read_exactly(stream, length, what).decode("utf-8")
    except UnicodeDecodeError as e:
        raise DataFormatError(
            "The {what} of the checkpoint is not valid UTF-8.".format(what=what)
        ) from e


def _write_text(stream: BinaryIO, text: str):
    data = text.encode("utf-8")
    stream.write(struct.pack("<I", len(data)))
    stream.write(data)


@dataclass
class Checkpoint:
    """Snapshot of a training run.

    Parameters
    ----------
    iteration: int,
        Number of completed iterations; with the seed echoed in the
        configuration it also determines the sampling state.
    config: str,
        Canonical text of the run configuration.
    tensors: Dict[str, np.ndarray],
        Named tensors: ``param/``, ``adam_m/``, ``adam_v/``, ``adam_t/``
        and ``bn/`` records.
    """
    iteration: int
    config: str
    tensors: Dict[str, np.ndarray] = field(default_factory=dict)

    def write(self, stream: BinaryIO):
        """Write the checkpoint to a binary stream."""
        stream.write(CHECKPOINT_MAGIC)
        stream.write(struct.pack("<IQ", CHECKPOINT_VERSION, self.iteration))
        _write_text(stream, self.config)
        stream.write(struct.pack("<I", len(self.tensors)))
        for name in sorted(self.tensors):
            _write_text(stream, name)
            write_tensor(stream, np.asarray(self.tensors[name]))

    @classmethod
    def read(cls, stream: BinaryIO) -> "Checkpoint":
        """Return the checkpoint read from a binary stream.

        Raises
        ------
        DataFormatError:
            If the magic, the version or any record is invalid.
        """
        magic = _read_exactly(stream, 4, "magic")
        if magic != CHECKPOINT_MAGIC:
            raise DataFormatError(
                "Not a checkpoint: expected magic {expected}, got {magic}.".format(
                    expected=CHECKPOINT_MAGIC,
                    magic=magic
                )
            )
        version, iteration = struct.unpack("<IQ", _read_exactly(stream, 12, "header"))
        if version != CHECKPOINT_VERSION:
            raise DataFormatError(
                "Unsupported checkpoint version {version}, expected {expected}.".format(
                    version=version,
                    expected=CHECKPOINT_VERSION
                )
            )
        config = _read_text(stream, "configuration")
        count, = struct.unpack("<I", _read_exactly(stream, 4, "record count"))
        tensors = {}
        for _ in range(count):
            name = _read_text(stream, "record name")
            if name in tensors:
                raise DataFormatError(
                    "Duplicated checkpoint record {name}.".format(name=name)
                )
            tensors[name] = read_tensor(stream)
        return cls(iteration, config, tensors)

    def to_bytes(self) -> bytes:
        """Return the serialised checkpoint."""
        stream = io.BytesIO()
        self.write(stream)
        return stream.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Checkpoint":
        """Return the checkpoint serialised in given bytes."""
        return cls.read(io.BytesIO(data))

    def save(self, path: str):
        """Store the checkpoint at given path, creating its directory."""
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, "wb") as f:
            self.write(f)

    @classmethod
    def load(cls, path: str) -> "Checkpoint":
        """Return the checkpoint stored at given path.

        Raises
        ------
        DataFormatError:
            If the file does not exist or is not a valid checkpoint.
        """
        if not os.path.exists(path):
            raise DataFormatError("No checkpoint found at {path}.".format(path=path))
        with open(path, "rb") as f:
            return cls.read(f)

    def subset(self, prefix: str) -> Dict[str, np.ndarray]:
        """Return the tensors whose name starts with prefix, keyed by the rest of the name."""
        return {
            name[len(prefix):]: tensor
            for name, tensor in self.tensors.items()
            if name.startswith(prefix)
        }

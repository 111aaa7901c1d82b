"""Submodule providing binary PPM (P6) and PGM (P5) reading and writing."""
from typing import Tuple

import numpy as np

from ..exceptions import DataFormatError

__all__ = ["read_netpbm", "write_ppm", "write_pgm"]


def _tokens(data: bytes, count: int, path: str) -> Tuple[list, int]:
    """Return the first whitespace separated header tokens and where pixels start."""
    tokens = []
    position = 0
    while len(tokens) < count:
        while position < len(data) and data[position:position + 1].isspace():
            position += 1
        if position < len(data) and data[position:position + 1] == b"#":
            while position < len(data) and data[position:position + 1] not in (b"\n", b"\r"):
                position += 1
            continue
        start = position
        while position < len(data) and not data[position:position + 1].isspace():
            position += 1
        if start == position:
            raise DataFormatError(
                "Truncated header in image file {path}.".format(path=path)
            )
        tokens.append(data[start:position])
    # A single whitespace byte separates the header from the raster.
    return tokens, position + 1


def read_netpbm(path: str) -> np.ndarray:
    """Return the 8-bit raster stored in a binary PPM or PGM file.

    Parameters
    ----------
    path: str,
        Path to a P6 or P5 file with maximum value at most 255.

    Raises
    ------
    DataFormatError:
        If the header is malformed or the raster is not exactly
        width·height·channels bytes long.

    Returns
    -------
    Array H×W×3 for PPM files and H×W for PGM files, dtype uint8.
    """
    with open(path, "rb") as f:
        data = f.read()
    tokens, offset = _tokens(data, 4, path)
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise DataFormatError(
            "Image file {path} has unsupported magic {magic!r}, "
            "expected P5 or P6.".format(path=path, magic=magic)
        )
    try:
        width, height, max_value = (int(token) for token in tokens[1:])
    except ValueError:
        raise DataFormatError(
            "Malformed header in image file {path}.".format(path=path)
        )
    if width < 1 or height < 1 or not 0 < max_value < 256:
        raise DataFormatError(
            "Image file {path} declares an unsupported "
            "{width}×{height} raster with maximum value {max_value}.".format(
                path=path,
                width=width,
                height=height,
                max_value=max_value
            )
        )
    channels = 3 if magic == b"P6" else 1
    size = width*height*channels
    available = max(len(data) - offset, 0)
    if available != size:
        raise DataFormatError(
            "Image file {path} holds {got} bytes of pixels, expected {size}.".format(
                path=path,
                size=size,
                got=available
            )
        )
    raster = np.frombuffer(data, dtype=np.uint8, count=size, offset=offset)
    if channels == 3:
        return raster.reshape(height, width, 3).copy()
    return raster.reshape(height, width).copy()


def write_ppm(path: str, image: np.ndarray):
    """Store a H×W×3 uint8 image as a binary PPM file."""
    image = np.ascontiguousarray(image, dtype=np.uint8)
    height, width = image.shape[:2]
    with open(path, "wb") as f:
        f.write("P6\n{width} {height}\n255\n".format(width=width, height=height).encode())
        f.write(image.tobytes())


def write_pgm(path: str, image: np.ndarray):
    """Store a H×W uint8 image as a binary PGM file."""
    image = np.ascontiguousarray(image, dtype=np.uint8)
    height, width = image.shape
    with open(path, "wb") as f:
        f.write("P5\n{width} {height}\n255\n".format(width=width, height=height).encode())
        f.write(image.tobytes())

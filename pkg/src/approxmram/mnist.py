"""MNIST IDX container parsing and dataset loading.

Only unsigned-byte IDX files are accepted (magic 0x00000801 for label
vectors, 0x00000803 for image stacks).  Gzip variants are read
transparently when the path ends in ``.gz``.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SUPPORTED_MAGICS = {0x00000801: 1, 0x00000803: 3}
MAX_ELEMENTS = 1 << 31

FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


class IdxError(ValueError):
    """Malformed IDX content."""


class BadMagicError(IdxError):
    pass


class UnsupportedElementTypeError(BadMagicError):
    pass


class TruncatedPayloadError(IdxError):
    pass


class DimensionOverflowError(IdxError):
    pass


class DatasetError(RuntimeError):
    """Missing files or inconsistent image/label counts."""


def parse_idx(data: bytes) -> np.ndarray:
    if len(data) < 4:
        raise TruncatedPayloadError("IDX header truncated")
    (magic,) = struct.unpack(">I", data[:4])
    if magic >> 16 != 0:
        raise BadMagicError(f"bad IDX magic 0x{magic:08x}")
    if magic not in SUPPORTED_MAGICS:
        raise UnsupportedElementTypeError(
            f"unsupported element type 0x{(magic >> 8) & 0xFF:02x} with {magic & 0xFF} dims (magic 0x{magic:08x})"
        )
    ndim = SUPPORTED_MAGICS[magic]
    header_len = 4 + 4 * ndim
    if len(data) < header_len:
        raise TruncatedPayloadError("IDX dimension header truncated")
    dims = struct.unpack(f">{ndim}I", data[4:header_len])
    total = 1
    for d in dims:
        total *= d
        if total > MAX_ELEMENTS:
            raise DimensionOverflowError(f"IDX dimensions {dims} exceed {MAX_ELEMENTS} elements")
    payload = len(data) - header_len
    if payload != total:
        raise TruncatedPayloadError(f"IDX payload is {payload} bytes, dimensions {dims} need {total}")
    return np.frombuffer(data, dtype=np.uint8, offset=header_len).reshape(dims)


def serialize_idx(array) -> bytes:
    array = np.asarray(array)
    if array.dtype != np.uint8:
        raise ValueError("only uint8 arrays can be serialized")
    magic = {1: 0x00000801, 3: 0x00000803}.get(array.ndim)
    if magic is None:
        raise ValueError("only 1-D and 3-D arrays can be serialized")
    return struct.pack(f">I{array.ndim}I", magic, *array.shape) + array.tobytes()


def read_idx(path) -> np.ndarray:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return parse_idx(fh.read())


@dataclass(frozen=True, eq=False)
class Dataset:
    images: np.ndarray  # (n, 784) float64 in [0, 1]
    labels: np.ndarray  # (n,) uint8
    split_tag: str

    def __len__(self):
        return self.labels.size

    def subset(self, n: int) -> Dataset:
        return Dataset(self.images[:n], self.labels[:n], self.split_tag)


def _find(directory: Path, name: str) -> Path:
    for candidate in (name, name + ".gz", name.replace("-idx", ".idx"), name.replace("-idx", ".idx") + ".gz"):
        path = directory / candidate
        if path.exists():
            return path
    raise DatasetError(f"missing MNIST file {name}[.gz] in {directory}")


def load_dataset(dir_path, split: str) -> Dataset:
    if split not in FILES:
        raise ValueError(f"split must be 'train' or 'test', got {split!r}")
    directory = Path(dir_path)
    image_name, label_name = FILES[split]
    images = read_idx(_find(directory, image_name))
    labels = read_idx(_find(directory, label_name))
    if images.ndim != 3 or labels.ndim != 1:
        raise DatasetError("image file must be 3-D and label file 1-D")
    if images.shape[0] != labels.shape[0]:
        raise DatasetError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    if labels.size and labels.max() >= 10:
        raise DatasetError("labels must be digits 0-9")
    pixels = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(pixels, labels.copy(), split)

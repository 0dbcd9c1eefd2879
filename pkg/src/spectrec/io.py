"""Readers and writers for spectrum-images, masks, configs and diagnostics.

``.sib`` layout: one UTF-8 JSON header line ending in ``\\n``::

    {"magic":"SIB1","bands":Nb,"height":H,"width":W,"dtype":"f64","layout":"band-major"}

followed by ``Nb*H*W`` little-endian float64 values, band after band, each
band's pixels in row-major order. Mask files are JSON objects
``{"np": Np, "indices": [...]}``.
"""

from __future__ import annotations

import csv
import json
import os
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .core import SamplingMask, SpectrumImage
from .errors import DataError, FormatError
from .fista import FistaConfig

__all__ = [
    "SibHeader",
    "read_sib",
    "write_sib",
    "read_mask",
    "write_mask",
    "read_matrix",
    "write_matrix",
    "read_json",
    "write_json",
    "read_fista_config",
    "write_eigen_csv",
]

MAGIC = "SIB1"
MAX_HEADER_BYTES = 4096


@dataclass(frozen=True)
class SibHeader:
    bands: int
    height: int
    width: int
    magic: str = MAGIC
    dtype: str = "f64"
    layout: str = "band-major"

    def __post_init__(self):
        if self.magic != MAGIC:
            raise FormatError(f"bad magic {self.magic!r}")
        if self.dtype != "f64" or self.layout != "band-major":
            raise FormatError("invalid header: only f64 band-major data is supported")
        for name in ("bands", "height", "width"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise FormatError(f"invalid header: {name} must be an integer >= 1")

    @property
    def payload_bytes(self) -> int:
        return 8 * self.bands * self.height * self.width

    def encode(self) -> bytes:
        d = {"magic": self.magic, "bands": self.bands, "height": self.height,
             "width": self.width, "dtype": self.dtype, "layout": self.layout}
        return (json.dumps(d, separators=(",", ":")) + "\n").encode("utf-8")


def write_sib(image: SpectrumImage, path) -> None:
    header = SibHeader(image.bands, image.height, image.width)
    payload = np.ascontiguousarray(image.data, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(header.encode())
        fh.write(payload)


def _parse_header(line: bytes) -> SibHeader:
    try:
        raw = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"invalid header: {exc}") from None
    if not isinstance(raw, dict):
        raise FormatError("invalid header: not a JSON object")
    if raw.get("magic") != MAGIC:
        raise FormatError(f"bad magic {raw.get('magic')!r}")
    try:
        return SibHeader(raw["bands"], raw["height"], raw["width"],
                         raw["magic"], raw.get("dtype"), raw.get("layout"))
    except KeyError as exc:
        raise FormatError(f"invalid header: missing field {exc}") from None


def read_sib(path) -> SpectrumImage:
    with open(path, "rb") as fh:
        blob = fh.read()
    nl = blob.find(b"\n", 0, MAX_HEADER_BYTES)
    if nl < 0:
        raise FormatError("invalid header: no header line found")
    header = _parse_header(blob[:nl])
    payload = blob[nl + 1:]
    if len(payload) < header.payload_bytes:
        raise FormatError(
            f"truncated payload: {len(payload)} bytes, expected {header.payload_bytes}"
        )
    if len(payload) > header.payload_bytes:
        raise FormatError(
            f"trailing bytes after payload: {len(payload) - header.payload_bytes}"
        )
    data = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    data = data.reshape(header.bands, header.height * header.width)
    if not np.all(np.isfinite(data)):
        warnings.warn(f"{path}: payload contains non-finite values", RuntimeWarning,
                      stacklevel=2)
        return SpectrumImage(data, header.height, header.width, check_finite=False)
    return SpectrumImage(data, header.height, header.width)


def write_matrix(matrix, path) -> None:
    """Store an ``(rows, cols)`` matrix as a ``rows``-band image of size ``1 x cols``."""
    m = np.asarray(matrix, dtype=np.float64)
    write_sib(SpectrumImage(m, 1, m.shape[1]), path)


def read_matrix(path) -> np.ndarray:
    return read_sib(path).data


def write_mask(mask: SamplingMask, path) -> None:
    obj = {"np": mask.n_pixels, "indices": [int(i) for i in mask.indices]}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, separators=(",", ":"))
        fh.write("\n")


def read_mask(path) -> SamplingMask:
    obj = read_json(path)
    if not isinstance(obj, dict) or "np" not in obj or "indices" not in obj:
        raise FormatError("mask file must be an object with 'np' and 'indices'")
    n, idx = obj["np"], obj["indices"]
    if isinstance(n, bool) or not isinstance(n, int):
        raise FormatError("mask 'np' must be an integer")
    if not isinstance(idx, list) or not all(
        isinstance(i, int) and not isinstance(i, bool) for i in idx
    ):
        raise FormatError("mask 'indices' must be a list of integers")
    try:
        return SamplingMask(np.array(idx, dtype=np.int64), n)
    except DataError as exc:
        raise FormatError(f"invalid mask: {exc}") from None


def read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        obj = float(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    if isinstance(obj, os.PathLike):
        return os.fspath(obj)
    return obj


def write_json(obj, path) -> None:
    """Deterministic UTF-8 JSON; non-finite floats are written as strings."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def read_fista_config(path) -> FistaConfig:
    obj = read_json(path)
    if not isinstance(obj, dict):
        raise FormatError("config file must contain a JSON object")
    known = set(asdict(FistaConfig()))
    unknown = set(obj) - known
    if unknown:
        raise FormatError(f"unknown config keys: {sorted(unknown)}")
    try:
        return FistaConfig(**obj)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"invalid config: {exc}") from None


def write_eigen_csv(model, path) -> None:
    """Eigenvalue diagnostics: ``index, raw_eig, corrected_eig, weight`` per band.

    Indices are 1-based. Directions outside the signal subspace have weight
    ``inf``.
    """
    w = model.full_weights()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", "raw_eig", "corrected_eig", "weight"])
        for b in range(model.n_bands):
            writer.writerow([b + 1, repr(float(model.raw_eigs[b])),
                             repr(float(model.corrected_eigs[b])), repr(float(w[b]))])

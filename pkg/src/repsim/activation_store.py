"""Activation tensors on disk and in memory.

Tensors are stored as NPY version 1.0 files restricted to little-endian
float32 in C order.  A JSON manifest ties a model's per-layer files together::

    {"model_id": "u-real", "seed": 0, "input_size": [32, 32],
     "layers": [{"index": 0, "path": "layer_000.npy", "shape": [200, 32, 32, 32]}]}

Relative ``path`` entries are resolved against the manifest's directory.
"""

from __future__ import annotations

import ast
import json
import math
import os
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import (
    AlreadyFlat,
    BadMagic,
    DuplicateLayer,
    EmptySet,
    InconsistentBatch,
    InputError,
    IoFailure,
    MissingFile,
    NonFinite,
    ShapeMismatch,
    UnsupportedDtype,
    UnsupportedLayout,
)

NPY_MAGIC = b"\x93NUMPY"
NPY_ALIGN = 64
DTYPE = np.dtype("<f4")
# rows checked per chunk when scanning memory-mapped payloads for NaN/Inf
_SCAN_ROWS = 16


def _check_shape(shape: Sequence[int]) -> tuple[int, ...]:
    shape = tuple(int(s) for s in shape)
    if len(shape) not in (2, 4):
        raise ShapeMismatch(f"expected a 2-D (n,d) or 4-D (n,h,w,c) shape, got {shape}")
    if any(s <= 0 for s in shape):
        raise ShapeMismatch(f"shape entries must be positive, got {shape}")
    return shape


def _all_finite(values: np.ndarray) -> bool:
    if values.ndim == 0 or values.shape[0] <= _SCAN_ROWS:
        return bool(np.isfinite(values).all())
    for start in range(0, values.shape[0], _SCAN_ROWS):
        if not np.isfinite(values[start:start + _SCAN_ROWS]).all():
            return False
    return True


@dataclass(frozen=True, eq=False)
class ActivationTensor:
    """One layer's outputs for a batch of inputs, shape (n,h,w,c) or (n,d).

    ``values`` is a read-only float32 C-ordered array (possibly a memory map).
    The ``n >= 2`` requirement is enforced where centering happens, so single
    example tensors can still be stored and flattened.
    """

    model_id: str
    layer_index: int
    values: np.ndarray
    check_finite: bool = field(default=True, repr=False)

    def __post_init__(self):
        if self.layer_index < 0:
            raise InputError(f"layer_index must be non-negative, got {self.layer_index}")
        values = self.values
        if not isinstance(values, np.ndarray) or values.dtype != DTYPE or not values.flags.c_contiguous:
            values = np.ascontiguousarray(values, dtype=DTYPE)
        _check_shape(values.shape)
        if self.check_finite and not _all_finite(values):
            raise NonFinite(f"layer {self.layer_index} of {self.model_id!r} contains NaN or Inf")
        if values.flags.writeable:
            values = values.view()
            values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.values.shape)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return math.prod(self.values.shape[1:])

    def __eq__(self, other):
        if not isinstance(other, ActivationTensor):
            return NotImplemented
        return (
            self.model_id == other.model_id
            and self.layer_index == other.layer_index
            and self.shape == other.shape
            and np.array_equal(self.values.view(np.uint32), other.values.view(np.uint32))
        )

    __hash__ = None

    def take(self, rows: Sequence[int]) -> "ActivationTensor":
        """Select examples by row index (copies)."""
        return ActivationTensor(self.model_id, self.layer_index,
                                np.asarray(self.values[np.asarray(rows, dtype=np.intp)]),
                                check_finite=False)


@dataclass(frozen=True)
class FeatureMatrix:
    """Rows are examples, columns are features."""

    values: np.ndarray
    centered: bool = False

    def __post_init__(self):
        if self.values.ndim != 2:
            raise ShapeMismatch(f"feature matrix must be 2-D, got shape {self.values.shape}")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def as_matrix(t: ActivationTensor) -> FeatureMatrix:
    """Flatten without the 2-D warning; a view, no copy."""
    return FeatureMatrix(t.values.reshape(t.n, -1))


def flatten(t: ActivationTensor) -> FeatureMatrix:
    """(n,h,w,c) -> (n, h*w*c), each example linearized h-major, then w, then c.

    A 2-D tensor comes back unchanged with an ``AlreadyFlat`` warning.
    """
    if t.values.ndim == 2:
        warnings.warn(AlreadyFlat(f"layer {t.layer_index} is already (n,d)"), stacklevel=2)
    return as_matrix(t)


# --------------------------------------------------------------------------
# NPY container


def _npy_header(shape: tuple[int, ...]) -> bytes:
    body = "{'descr': '<f4', 'fortran_order': False, 'shape': %r, }" % (shape,)
    # magic(6) + version(2) + u16 length(2) + body + padding + '\n'
    pad = NPY_ALIGN - (10 + len(body) + 1) % NPY_ALIGN
    body = body + " " * (pad % NPY_ALIGN) + "\n"
    return NPY_MAGIC + b"\x01\x00" + struct.pack("<H", len(body)) + body.encode("latin1")


def read_npy_header(fh) -> tuple[tuple[int, ...], int]:
    """Return (shape, payload offset) from an open binary file."""
    magic = fh.read(8)
    if len(magic) != 8 or magic[:6] != NPY_MAGIC:
        raise BadMagic("not an NPY tensor file")
    major = magic[6]
    if major == 1:
        (hlen,) = struct.unpack("<H", fh.read(2))
        offset = 10 + hlen
    elif major in (2, 3):
        (hlen,) = struct.unpack("<I", fh.read(4))
        offset = 12 + hlen
    else:
        raise BadMagic(f"unsupported NPY version {major}.{magic[7]}")
    raw = fh.read(hlen)
    try:
        header = ast.literal_eval(raw.decode("latin1"))
        descr, fortran, shape = header["descr"], header["fortran_order"], header["shape"]
    except (ValueError, SyntaxError, KeyError, TypeError) as exc:
        raise BadMagic(f"malformed NPY header: {exc}") from None
    if descr != "<f4":
        raise UnsupportedDtype(f"dtype must be '<f4', got {descr!r}")
    if fortran:
        raise UnsupportedLayout("column-major (fortran_order) tensors are not supported")
    return _check_shape(shape), offset


def save_tensor(t: ActivationTensor, path) -> None:
    """Write ``t`` as an NPY v1.0 '<f4' C-order file. Output bytes depend only on the values."""
    if not _all_finite(t.values):
        raise NonFinite(f"refusing to write NaN/Inf for layer {t.layer_index}")
    try:
        with open(path, "wb") as fh:
            fh.write(_npy_header(t.shape))
            fh.write(np.ascontiguousarray(t.values, dtype=DTYPE).tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load_tensor(path, model_id: str = "", layer_index: int = 0, mmap: bool = False) -> ActivationTensor:
    """Read a tensor file.

    With ``mmap=True`` the payload stays on disk and is paged in on demand,
    which keeps Gram-path similarity within O(n^2) resident memory.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"no such tensor file: {path}")
    with open(path, "rb") as fh:
        shape, offset = read_npy_header(fh)
        expected = math.prod(shape) * DTYPE.itemsize
        actual = os.fstat(fh.fileno()).st_size - offset
        if actual != expected:
            raise ShapeMismatch(f"{path}: payload is {actual} bytes, header shape {shape} needs {expected}")
        if mmap:
            values = np.memmap(path, dtype=DTYPE, mode="r", offset=offset, shape=shape)
        else:
            fh.seek(offset)
            values = np.frombuffer(fh.read(expected), dtype=DTYPE).reshape(shape)
    return ActivationTensor(model_id, layer_index, values)


# --------------------------------------------------------------------------
# manifests and sets


@dataclass(frozen=True)
class ManifestEntry:
    layer_index: int
    path: str
    shape: tuple[int, ...]


@dataclass(frozen=True)
class ActivationManifest:
    model_id: str
    seed: int
    input_size: tuple[int, int]
    entries: tuple[ManifestEntry, ...]

    def to_json(self) -> dict:
        return {
            "model_id": self.model_id,
            "seed": self.seed,
            "input_size": list(self.input_size),
            "layers": [{"index": e.layer_index, "path": e.path, "shape": list(e.shape)}
                       for e in self.entries],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ActivationManifest":
        try:
            entries = tuple(
                ManifestEntry(int(e["index"]), str(e["path"]), tuple(int(s) for s in e["shape"]))
                for e in doc["layers"]
            )
            manifest = cls(str(doc["model_id"]), int(doc.get("seed", 0)),
                           tuple(int(s) for s in doc.get("input_size", (0, 0))), entries)
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed manifest: {exc}") from None
        manifest.validate()
        return manifest

    def validate(self) -> None:
        seen = set()
        prev = -1
        for e in self.entries:
            if e.layer_index in seen:
                raise DuplicateLayer(f"layer index {e.layer_index} appears twice")
            if e.layer_index <= prev:
                raise InputError(f"layer indices must be strictly increasing ({prev} then {e.layer_index})")
            seen.add(e.layer_index)
            prev = e.layer_index
            _check_shape(e.shape)


def read_manifest(path) -> ActivationManifest:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"no such manifest: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None
    return ActivationManifest.from_json(doc)


@dataclass(frozen=True)
class ActivationSet:
    """A model's per-layer tensors for one fixed batch of examples."""

    model_id: str
    seed: int
    input_size: tuple[int, int]
    tensors: dict[int, ActivationTensor]

    def __post_init__(self):
        if not self.tensors:
            raise EmptySet(f"activation set {self.model_id!r} has no layers")
        ns = {t.n for t in self.tensors.values()}
        if len(ns) > 1:
            detail = ", ".join(f"{i}:{t.n}" for i, t in self.tensors.items())
            raise InconsistentBatch(f"layers of {self.model_id!r} disagree on n ({detail})")

    @property
    def indices(self) -> list[int]:
        return list(self.tensors)

    @property
    def n(self) -> int:
        return next(iter(self.tensors.values())).n

    def __len__(self):
        return len(self.tensors)

    def __iter__(self) -> Iterator[ActivationTensor]:
        return iter(self.tensors.values())

    def __getitem__(self, layer_index: int) -> ActivationTensor:
        return self.tensors[layer_index]

    def take(self, rows: Sequence[int]) -> "ActivationSet":
        return ActivationSet(self.model_id, self.seed, self.input_size,
                             {i: t.take(rows) for i, t in self.tensors.items()})


def load_set(manifest_path, mmap: bool = False) -> ActivationSet:
    manifest_path = Path(manifest_path)
    manifest = read_manifest(manifest_path)
    if not manifest.entries:
        raise EmptySet(f"{manifest_path}: manifest lists no layers")
    base = manifest_path.parent
    tensors = {}
    for e in manifest.entries:
        path = Path(e.path) if os.path.isabs(e.path) else base / e.path
        t = load_tensor(path, manifest.model_id, e.layer_index, mmap=mmap)
        if t.shape != e.shape:
            raise ShapeMismatch(f"{path}: file shape {t.shape} != manifest shape {e.shape}")
        tensors[e.layer_index] = t
    return ActivationSet(manifest.model_id, manifest.seed, manifest.input_size, tensors)


def save_set(s: ActivationSet, out_dir, manifest_name: str = "manifest.json") -> Path:
    """Write every tensor plus a manifest into ``out_dir``; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for t in s:
        name = f"layer_{t.layer_index:03d}.npy"
        save_tensor(t, out_dir / name)
        entries.append(ManifestEntry(t.layer_index, name, t.shape))
    manifest = ActivationManifest(s.model_id, s.seed, tuple(s.input_size), tuple(entries))
    path = out_dir / manifest_name
    try:
        path.write_text(json.dumps(manifest.to_json(), indent=2) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return path

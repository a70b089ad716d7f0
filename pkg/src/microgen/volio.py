"""Binary and text volume file I/O.

MGV1 (label volumes), little-endian:
    magic ``MGV1`` | u32 version=1 | u32 nx, ny, nz | u32 phase_count |
    f64 spacing_nm | nx*ny*nz u8 labels, x-fastest order.

MGF1 (scalar field volumes, e.g. flux maps), little-endian:
    magic ``MGF1`` | u32 version=1 | u32 nx, ny, nz | u32 channels=1 |
    f64 spacing_nm | nx*ny*nz f32 values, x-fastest order.

A plain-text fixture format is also accepted: one header line
``dims=nx,ny,nz c=<phases> spacing=<nm>`` followed by one label per line
in x-fastest order.
"""

from __future__ import annotations

import struct

import numpy as np

from .voxel import VoxelGrid

MGV1_MAGIC = b"MGV1"
MGF1_MAGIC = b"MGF1"
_HEADER = struct.Struct("<4s5Id")   # magic, version, nx, ny, nz, count, spacing


class FormatError(ValueError):
    """Malformed volume/weight file; carries path and byte offset."""

    def __init__(self, path, offset: int, message: str):
        self.path = str(path)
        self.offset = offset
        super().__init__(f"{self.path}: offset {offset}: {message}")


def _read_header(path, data: bytes, magic: bytes):
    if len(data) < _HEADER.size:
        raise FormatError(path, len(data), "truncated header")
    got_magic, version, nx, ny, nz, count, spacing = _HEADER.unpack_from(data, 0)
    if got_magic != magic:
        raise FormatError(path, 0, f"bad magic {got_magic!r}, expected {magic!r}")
    if version != 1:
        raise FormatError(path, 4, f"unsupported version {version}")
    if min(nx, ny, nz) < 1:
        raise FormatError(path, 8, f"bad dims ({nx}, {ny}, {nz})")
    if spacing <= 0:
        raise FormatError(path, 24, f"bad spacing {spacing}")
    return (nx, ny, nz), count, spacing


def write_mgv1(path, grid: VoxelGrid) -> None:
    nx, ny, nz = grid.dims
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MGV1_MAGIC, 1, nx, ny, nz,
                             grid.phase_count, grid.spacing_nm))
        f.write(grid.labels.ravel(order="F").tobytes())


def read_mgv1(path) -> VoxelGrid:
    with open(path, "rb") as f:
        data = f.read()
    dims, phase_count, spacing = _read_header(path, data, MGV1_MAGIC)
    if phase_count < 2:
        raise FormatError(path, 20, f"bad phase_count {phase_count}")
    n = dims[0] * dims[1] * dims[2]
    body = data[_HEADER.size:]
    if len(body) != n:
        raise FormatError(path, _HEADER.size + min(len(body), n),
                          f"expected {n} label bytes, found {len(body)}")
    labels = np.frombuffer(body, dtype=np.uint8).reshape(dims, order="F")
    if labels.size and int(labels.max()) >= phase_count:
        bad = int(np.argmax(labels.ravel(order="F") >= phase_count))
        raise FormatError(path, _HEADER.size + bad,
                          f"label >= phase_count {phase_count}")
    return VoxelGrid(labels.copy(), spacing_nm=spacing, phase_count=phase_count)


def write_mgf1(path, values: np.ndarray, spacing_nm: float) -> None:
    values = np.asarray(values)
    if values.ndim != 3:
        raise ValueError(f"scalar field must be 3D, got {values.shape}")
    nx, ny, nz = values.shape
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MGF1_MAGIC, 1, nx, ny, nz, 1, spacing_nm))
        f.write(values.astype("<f4").ravel(order="F").tobytes())


def read_mgf1(path) -> tuple[np.ndarray, float]:
    with open(path, "rb") as f:
        data = f.read()
    dims, channels, spacing = _read_header(path, data, MGF1_MAGIC)
    if channels != 1:
        raise FormatError(path, 20, f"expected 1 channel, got {channels}")
    n = dims[0] * dims[1] * dims[2]
    body = data[_HEADER.size:]
    if len(body) != 4 * n:
        raise FormatError(path, _HEADER.size + min(len(body), 4 * n),
                          f"expected {4 * n} value bytes, found {len(body)}")
    values = np.frombuffer(body, dtype="<f4").reshape(dims, order="F")
    return values.copy(), spacing


def read_text_volume(path) -> VoxelGrid:
    """Parse the plain-text fixture format (header line + one label per line)."""
    with open(path, "r") as f:
        lines = [ln.strip() for ln in f if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise FormatError(path, 0, "empty file")
    fields = {}
    for token in lines[0].split():
        if "=" not in token:
            raise FormatError(path, 0, f"bad header token {token!r}")
        key, _, value = token.partition("=")
        fields[key] = value
    try:
        dims = tuple(int(v) for v in fields["dims"].split(","))
        phase_count = int(fields["c"])
        spacing = float(fields["spacing"])
    except (KeyError, ValueError) as exc:
        raise FormatError(path, 0, f"bad header {lines[0]!r}: {exc}") from None
    if len(dims) != 3:
        raise FormatError(path, 0, f"dims must have 3 entries, got {fields['dims']!r}")
    n = dims[0] * dims[1] * dims[2]
    if len(lines) - 1 != n:
        raise FormatError(path, 0, f"expected {n} labels, found {len(lines) - 1}")
    try:
        flat = np.array([int(v) for v in lines[1:]], dtype=np.int64)
    except ValueError as exc:
        raise FormatError(path, 0, f"non-integer label: {exc}") from None
    if flat.min() < 0 or flat.max() >= phase_count:
        raise FormatError(path, 0, "label out of range")
    labels = flat.astype(np.uint8).reshape(dims, order="F")
    return VoxelGrid(labels, spacing_nm=spacing, phase_count=phase_count)


# Default greyscale-to-phase table: black/grey/white of the 8-bit
# segmented datasets map to phases 0/1/2.
DEFAULT_GREY_MAP = {0: 0, 127: 1, 255: 2}


def read_raw_grey(path, dims: tuple[int, int, int], spacing_nm: float,
                  grey_map: dict[int, int] | None = None,
                  phase_count: int | None = None) -> VoxelGrid:
    """Import a raw u8 greyscale volume (x-fastest order) via a label table."""
    grey_map = DEFAULT_GREY_MAP if grey_map is None else grey_map
    n = dims[0] * dims[1] * dims[2]
    with open(path, "rb") as f:
        data = f.read()
    if len(data) != n:
        raise FormatError(path, min(len(data), n),
                          f"expected {n} bytes for dims {dims}, found {len(data)}")
    raw = np.frombuffer(data, dtype=np.uint8)
    table = np.full(256, 255, dtype=np.uint8)
    for grey, phase in grey_map.items():
        table[grey] = phase
    labels = table[raw]
    if (labels == 255).any() and 255 not in grey_map.values():
        bad = int(np.argmax(labels == 255))
        raise FormatError(path, bad, f"grey value {raw[bad]} not in label table")
    if phase_count is None:
        phase_count = max(grey_map.values()) + 1
    return VoxelGrid(labels.reshape(dims, order="F"), spacing_nm=spacing_nm,
                     phase_count=phase_count)

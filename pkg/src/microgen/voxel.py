"""Phase-labelled voxel grids, one-hot channel fields and sub-volume sampling.

Conventions shared by every module and file format:

* a grid is indexed ``[x, y, z]`` with dims ``(nx, ny, nz)``;
* the canonical flat order is x-fastest (x, then y, then z), i.e.
  ``labels.ravel(order="F")``;
* phase labels are integers in ``[0, phase_count)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Tolerance on per-voxel channel sums of a soft one-hot field.
CHANNEL_SUM_TOL = 1e-6


@dataclass(frozen=True)
class VoxelGrid:
    """Integer phase labels on a 3D lattice with a physical voxel size."""

    labels: np.ndarray          # (nx, ny, nz) uint8
    spacing_nm: float           # cubic voxel edge length in nm
    phase_count: int

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 3:
            raise ValueError(f"labels must be 3D, got shape {labels.shape}")
        if min(labels.shape) < 1:
            raise ValueError(f"dims must all be >= 1, got {labels.shape}")
        if self.spacing_nm <= 0:
            raise ValueError(f"spacing must be > 0, got {self.spacing_nm}")
        if self.phase_count < 2:
            raise ValueError(f"phase_count must be >= 2, got {self.phase_count}")
        if labels.dtype != np.uint8:
            if labels.min() < 0 or labels.max() > 255:
                raise ValueError("labels outside u8 range")
            labels = labels.astype(np.uint8)
        if labels.size and int(labels.max()) >= self.phase_count:
            raise ValueError(
                f"label {int(labels.max())} >= phase_count {self.phase_count}")
        labels = np.ascontiguousarray(labels)
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.labels.shape

    @property
    def voxel_count(self) -> int:
        return self.labels.size

    @property
    def spacing_um(self) -> float:
        return self.spacing_nm * 1e-3

    def flat_labels(self) -> np.ndarray:
        """Labels in the canonical x-fastest flat order."""
        return self.labels.ravel(order="F")


@dataclass(frozen=True)
class OneHotGrid:
    """c-channel real field in [0, 1], one channel per phase.

    Hard-encoded grids have exactly one 1 per voxel; soft grids (e.g.
    generator output) only need channel sums of 1 per voxel.
    """

    values: np.ndarray          # (c, nx, ny, nz) float
    spacing_nm: float = 1.0

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 4:
            raise ValueError(f"values must be 4D (c,nx,ny,nz), got {values.shape}")
        if values.shape[0] < 2:
            raise ValueError("need at least 2 channels")
        if self.spacing_nm <= 0:
            raise ValueError(f"spacing must be > 0, got {self.spacing_nm}")
        if values.size:
            lo, hi = float(values.min()), float(values.max())
            if lo < -CHANNEL_SUM_TOL or hi > 1 + CHANNEL_SUM_TOL:
                raise ValueError(f"channel values outside [0,1]: min={lo}, max={hi}")
            sums = values.sum(axis=0)
            err = float(np.abs(sums - 1.0).max())
            if err > CHANNEL_SUM_TOL:
                raise ValueError(f"per-voxel channel sums deviate from 1 by {err}")
        values = np.ascontiguousarray(values)
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def phase_count(self) -> int:
        return self.values.shape[0]

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.values.shape[1:]


@dataclass(frozen=True)
class SubvolumeSpec:
    """Cubic sampling window: edge length and origin stride, in voxels."""

    size: int
    stride: int

    def __post_init__(self):
        if self.size < 1:
            raise ValueError(f"size must be >= 1, got {self.size}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")


def one_hot_encode(grid: VoxelGrid) -> OneHotGrid:
    """Encode phase labels as a (c, nx, ny, nz) indicator field."""
    c = grid.phase_count
    values = np.zeros((c,) + grid.dims, dtype=np.float32)
    for p in range(c):
        values[p] = grid.labels == p
    return OneHotGrid(values, spacing_nm=grid.spacing_nm)


def decode(oh: OneHotGrid) -> VoxelGrid:
    """Label each voxel with its maximum channel (ties -> lowest channel)."""
    labels = np.argmax(oh.values, axis=0).astype(np.uint8)
    return VoxelGrid(labels, spacing_nm=oh.spacing_nm,
                     phase_count=oh.phase_count)


def confidence_map(oh: OneHotGrid) -> np.ndarray:
    """Per-voxel maximum channel value, in [1/c, 1].

    1 means the phase assignment is certain (rendered white in the
    uncertainty-map convention), 1/c means maximally uncertain (black).
    """
    return oh.values.max(axis=0)


def subvolume_count(dims: tuple[int, int, int], spec: SubvolumeSpec) -> int:
    """Number of cubes extract_subvolumes yields, by the per-axis formula."""
    for n in dims:
        if spec.size > n:
            raise ValueError(f"size {spec.size} exceeds dimension {n}")
    counts = [(n - spec.size) // spec.stride + 1 for n in dims]
    return counts[0] * counts[1] * counts[2]


def iter_subvolumes(grid: VoxelGrid, spec: SubvolumeSpec):
    """Yield axis-aligned cubes with origins at multiples of the stride.

    Partial windows are dropped (floor semantics). Origins are ordered
    (ox, oy, oz) lexicographically, z fastest.
    """
    subvolume_count(grid.dims, spec)  # validates size against dims
    size, stride = spec.size, spec.stride
    starts = [range(0, n - size + 1, stride) for n in grid.dims]
    for ox in starts[0]:
        for oy in starts[1]:
            for oz in starts[2]:
                block = grid.labels[ox:ox + size, oy:oy + size, oz:oz + size]
                yield VoxelGrid(block.copy(), spacing_nm=grid.spacing_nm,
                                phase_count=grid.phase_count)


def extract_subvolumes(grid: VoxelGrid, spec: SubvolumeSpec) -> list[VoxelGrid]:
    """All sub-volumes of iter_subvolumes as a list (small grids only)."""
    return list(iter_subvolumes(grid, spec))


def tile(grid: VoxelGrid, reps: tuple[int, int, int]) -> VoxelGrid:
    """Repeat the grid periodically: output label at v = input at v mod dims."""
    if len(reps) != 3 or min(reps) < 1:
        raise ValueError(f"reps must be 3 positive ints, got {reps}")
    return VoxelGrid(np.tile(grid.labels, reps), spacing_nm=grid.spacing_nm,
                     phase_count=grid.phase_count)


def tile_one_hot(oh: OneHotGrid, reps: tuple[int, int, int]) -> OneHotGrid:
    """Periodic repeat of a one-hot field (channel axis untouched)."""
    if len(reps) != 3 or min(reps) < 1:
        raise ValueError(f"reps must be 3 positive ints, got {reps}")
    return OneHotGrid(np.tile(oh.values, (1,) + tuple(reps)),
                      spacing_nm=oh.spacing_nm)

"""Morphological and statistical characterization of voxel microstructures.

All metrics use the voxel-lattice conventions: surfaces are counted as
voxel faces, triple-phase boundaries as lattice edges, so the exhaustive
face/edge scans used in the tests are exact oracles.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .voxel import VoxelGrid

AXES = {"x": 0, "y": 1, "z": 2}
BOUNDARY_MODES = ("truncated", "periodic")


def _check_phase(grid: VoxelGrid, phase: int) -> None:
    if not 0 <= phase < grid.phase_count:
        raise ValueError(f"phase {phase} not in [0, {grid.phase_count})")


def _check_boundary(boundary: str) -> None:
    if boundary not in BOUNDARY_MODES:
        raise ValueError(f"boundary must be one of {BOUNDARY_MODES}, got {boundary!r}")


def volume_fraction(grid: VoxelGrid, phase: int) -> float:
    """Fraction of voxels labelled `phase`."""
    _check_phase(grid, phase)
    return int(np.count_nonzero(grid.labels == phase)) / grid.voxel_count


def volume_fractions(grid: VoxelGrid) -> np.ndarray:
    """Volume fraction of every phase; sums to 1 exactly."""
    counts = np.bincount(grid.flat_labels(), minlength=grid.phase_count)
    return counts / grid.voxel_count


def interface_face_count(grid: VoxelGrid, phase: int,
                         boundary: str = "truncated") -> int:
    """Number of voxel faces between `phase` and any other phase."""
    _check_phase(grid, phase)
    _check_boundary(boundary)
    m = grid.labels == phase
    faces = 0
    for axis in range(3):
        a = np.swapaxes(m, 0, axis)
        faces += int(np.count_nonzero(a[:-1] ^ a[1:]))
        if boundary == "periodic":
            faces += int(np.count_nonzero(a[-1] ^ a[0]))
    return faces


def specific_surface_area(grid: VoxelGrid, phase: int,
                          boundary: str = "truncated") -> float:
    """Interface area of `phase` per unit volume, in 1/um."""
    faces = interface_face_count(grid, phase, boundary)
    return (faces / grid.voxel_count) / grid.spacing_um


def tpb_edge_count(grid: VoxelGrid, boundary: str = "truncated") -> int:
    """Lattice edges whose 4 surrounding voxels contain >= 3 distinct phases.

    For each edge orientation the 4 voxels form a 2x2 window in the
    perpendicular plane; >= 3 distinct values is equivalent to at most one
    coincident pair among the 6 voxel pairings.
    """
    _check_boundary(boundary)
    if grid.phase_count < 3:
        raise ValueError("TPB undefined for fewer than 3 phases")
    lab = grid.labels.astype(np.int16)

    def corner(du: int, dv: int, u: int, v: int) -> np.ndarray:
        if boundary == "periodic":
            out = lab
            if du:
                out = np.roll(out, -1, axis=u)
            if dv:
                out = np.roll(out, -1, axis=v)
            return out
        sl = [slice(None)] * 3
        sl[u] = slice(1, None) if du else slice(None, -1)
        sl[v] = slice(1, None) if dv else slice(None, -1)
        return lab[tuple(sl)]

    total = 0
    for axis in range(3):
        u, v = [ax for ax in range(3) if ax != axis]
        a = corner(0, 0, u, v)
        b = corner(1, 0, u, v)
        c = corner(0, 1, u, v)
        d = corner(1, 1, u, v)
        eq = ((a == b).astype(np.int8) + (a == c) + (a == d)
              + (b == c) + (b == d) + (c == d))
        total += int(np.count_nonzero(eq <= 1))
    return total


def tpb_density(grid: VoxelGrid, boundary: str = "truncated") -> float:
    """Triple-phase-boundary edge length per unit volume, in 1/um^2."""
    count = tpb_edge_count(grid, boundary)
    a = grid.spacing_um
    return (count / grid.voxel_count) / (a * a)


@dataclass(frozen=True)
class TpcfCurve:
    """Directional two-point correlation S2(r) for one phase along one axis."""

    phase: int
    axis: str
    r_max: int
    values: np.ndarray        # S2(r), r = 0..r_max
    pair_counts: np.ndarray   # valid ordered pairs per lag
    boundary: str = "truncated"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.r_max + 1,):
            raise ValueError(f"expected {self.r_max + 1} values, got {v.shape}")
        if v.size and (v.min() < 0 or v.max() > 1):
            raise ValueError("S2 values outside [0, 1]")
        object.__setattr__(self, "values", v)

    def normalized(self) -> np.ndarray:
        """S2(r)/S2(0); zeros if the phase is absent."""
        if self.values[0] == 0:
            return np.zeros_like(self.values)
        return self.values / self.values[0]


def tpcf(grid: VoxelGrid, phase: int, axis: str, r_max: int,
         boundary: str = "truncated") -> TpcfCurve:
    """Probability that two voxels r apart along `axis` are both `phase`.

    Truncated mode counts only in-bounds ordered pairs; periodic mode
    wraps indices, so every voxel contributes one pair per lag.
    """
    _check_phase(grid, phase)
    _check_boundary(boundary)
    if axis not in AXES:
        raise ValueError(f"axis must be one of {tuple(AXES)}, got {axis!r}")
    n = grid.dims[AXES[axis]]
    if not 0 <= r_max < n:
        raise ValueError(f"r_max {r_max} out of range for axis length {n}")
    m = np.swapaxes(grid.labels == phase, 0, AXES[axis])
    total = grid.voxel_count
    per_slice = total // n
    values = np.empty(r_max + 1, dtype=np.float64)
    counts = np.empty(r_max + 1, dtype=np.int64)
    for r in range(r_max + 1):
        if boundary == "periodic":
            matched = int(np.count_nonzero(m & np.roll(m, -r, axis=0)))
            pairs = total
        else:
            matched = int(np.count_nonzero(m[:n - r] & m[r:]))
            pairs = (n - r) * per_slice
        values[r] = matched / pairs
        counts[r] = pairs
    return TpcfCurve(phase=phase, axis=axis, r_max=r_max, values=values,
                     pair_counts=counts, boundary=boundary)


def delta_ssa(areas, a_max_mean: float) -> list[float]:
    """Fractional deviation of each area from the reference mean area."""
    if a_max_mean <= 0:
        raise ValueError(f"reference area must be > 0, got {a_max_mean}")
    return [(a - a_max_mean) / a_max_mean for a in areas]


@dataclass(frozen=True)
class MetricReport:
    """Morphological metrics of one sample volume."""

    volume_fractions: np.ndarray    # phi per phase
    ssa: np.ndarray                 # 1/um per phase
    tpb: float                      # 1/um^2
    boundary: str

    def __post_init__(self):
        phi = np.asarray(self.volume_fractions, dtype=np.float64)
        ssa = np.asarray(self.ssa, dtype=np.float64)
        if abs(float(phi.sum()) - 1.0) > 1e-12:
            raise ValueError(f"volume fractions sum to {phi.sum()}, expected 1")
        if ssa.size and ssa.min() < 0:
            raise ValueError("negative specific surface area")
        if self.tpb < 0:
            raise ValueError("negative TPB density")
        object.__setattr__(self, "volume_fractions", phi)
        object.__setattr__(self, "ssa", ssa)

    @property
    def phase_count(self) -> int:
        return len(self.volume_fractions)

    def as_rows(self, sample: str) -> list[tuple]:
        """Rows in the metrics CSV schema (sample, phase, metric, axis, value)."""
        rows = []
        for p in range(self.phase_count):
            rows.append((sample, p, "phi", "", self.volume_fractions[p]))
            rows.append((sample, p, "ssa", "", self.ssa[p]))
        rows.append((sample, "", "tpb", "", self.tpb))
        return rows


def compute_report(grid: VoxelGrid, boundary: str = "truncated") -> MetricReport:
    """Volume fractions, SSA per phase and TPB density of one grid."""
    ssa = np.array([specific_surface_area(grid, p, boundary)
                    for p in range(grid.phase_count)])
    tpb = tpb_density(grid, boundary) if grid.phase_count >= 3 else 0.0
    return MetricReport(volume_fractions=volume_fractions(grid), ssa=ssa,
                        tpb=tpb, boundary=boundary)


def aggregate_stats(reports: list[MetricReport]) -> dict[str, tuple[float, float]]:
    """Sample mean and unbiased (n-1) std per metric across reports.

    A single report yields std 0 by convention. Keys are ``phi_<p>``,
    ``ssa_<p>`` and ``tpb``.
    """
    if not reports:
        raise ValueError("need at least one report")
    c = reports[0].phase_count
    series: dict[str, np.ndarray] = {}
    for p in range(c):
        series[f"phi_{p}"] = np.array([r.volume_fractions[p] for r in reports])
        series[f"ssa_{p}"] = np.array([r.ssa[p] for r in reports])
    series["tpb"] = np.array([r.tpb for r in reports])
    out = {}
    for key, vals in series.items():
        mean = float(vals.mean())
        if len(vals) > 1 and np.any(vals != vals[0]):
            std = float(vals.std(ddof=1))
        else:
            std = 0.0
        out[key] = (mean, std)
    return out


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return f"{value:.9g}"
    return str(value)


def write_metrics_csv(path, rows) -> None:
    """Rows of (sample, phase, metric, axis, value); floats at 9 sig. digits."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["sample", "phase", "metric", "axis", "value"])
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_tpcf_csv(path, curves: list[TpcfCurve]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["phase", "axis", "r", "S2", "S2_norm"])
        for curve in curves:
            norm = curve.normalized()
            for r in range(curve.r_max + 1):
                writer.writerow([curve.phase, curve.axis, r,
                                 _fmt(curve.values[r]), _fmt(norm[r])])

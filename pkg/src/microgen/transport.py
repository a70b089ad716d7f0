"""Steady-state diffusion on the voxel lattice.

Solves Laplace's equation on the voxels of one conducting phase with a
6-point finite-difference stencil (unit conductance between adjacent
conducting voxels), Dirichlet concentrations C=1 / C=0 applied on the
inlet / outlet faces through half-voxel links (conductance 2, which makes
the fully dense volume exact), and zero-flux walls at phase interfaces.
Lateral faces are either mirror (zero-flux) or periodic (wrap adjacency).

Everything is computed in lattice units with intrinsic diffusivity 1, so
the relative diffusivity and the tortuosity factor are independent of the
voxel spacing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .voxel import VoxelGrid
from .volio import write_mgf1
from .metrics import AXES, volume_fraction

LATERAL_MODES = ("mirror", "periodic")


@dataclass(frozen=True)
class TransportResult:
    """Directional transport metrics of one phase (D0 = 1)."""

    phase: int
    direction: str
    d_eff: float
    d_rel: float
    tortuosity: float           # math.inf when non-percolating
    volume_fraction: float
    iterations: int
    converged: bool
    flux_mismatch: float        # |inlet flux - outlet flux| / flux
    lateral_bc: str


@dataclass(frozen=True)
class FluxField:
    """Per-voxel scalar flux magnitude; zero on non-conducting voxels."""

    values: np.ndarray          # (nx, ny, nz) float
    spacing_nm: float
    direction: str


def _check_args(grid: VoxelGrid, phase: int, direction: str, lateral_bc: str):
    if not 0 <= phase < grid.phase_count:
        raise ValueError(f"phase {phase} not in [0, {grid.phase_count})")
    if direction not in AXES:
        raise ValueError(f"direction must be one of {tuple(AXES)}, got {direction!r}")
    if lateral_bc not in LATERAL_MODES:
        raise ValueError(f"lateral_bc must be one of {LATERAL_MODES}, got {lateral_bc!r}")


def percolates(grid: VoxelGrid, phase: int, direction: str = "z",
               lateral_bc: str = "mirror") -> bool:
    """True iff a 6-connected path of `phase` joins inlet to outlet face.

    With periodic lateral boundaries, paths may also wrap around the two
    lateral axes.
    """
    _check_args(grid, phase, direction, lateral_bc)
    axis = AXES[direction]
    mask = np.swapaxes(grid.labels == phase, 0, axis)
    structure = ndimage.generate_binary_structure(3, 1)  # 6-connectivity
    comp, n_comp = ndimage.label(mask, structure=structure)
    if n_comp == 0:
        return False

    parent = list(range(n_comp + 1))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i: int, j: int) -> None:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj

    if lateral_bc == "periodic":
        for lat_axis in (1, 2):
            lo = np.take(comp, 0, axis=lat_axis)
            hi = np.take(comp, -1, axis=lat_axis)
            both = (lo > 0) & (hi > 0)
            for i, j in zip(lo[both].ravel(), hi[both].ravel()):
                union(int(i), int(j))

    inlet = {find(int(i)) for i in np.unique(comp[0]) if i > 0}
    outlet = {find(int(i)) for i in np.unique(comp[-1]) if i > 0}
    return bool(inlet & outlet)


def _neighbor_weights(m: np.ndarray, lateral_bc: str):
    """Link indicator arrays between adjacent conducting voxels.

    Returns (w_flow, w_lat) where w_flow[l] links slices l and l+1 along
    the flow axis, and w_lat[j] links voxels v and v+1 along lateral axis
    j (full length with wrap link in the last entry for periodic mode).
    """
    w_flow = (m[:-1] & m[1:]).astype(np.float64)
    w_lat = []
    for axis in (1, 2):
        if lateral_bc == "periodic":
            w = (m & np.roll(m, -1, axis=axis)).astype(np.float64)
        else:
            w = (m & _shift_view(m, axis)).astype(np.float64)
        w_lat.append(w)
    return w_flow, w_lat


def _shift_view(m: np.ndarray, axis: int) -> np.ndarray:
    """m advanced by one along axis, padded with False (mirror-mode links)."""
    out = np.zeros_like(m)
    sl_dst = [slice(None)] * 3
    sl_src = [slice(None)] * 3
    sl_dst[axis] = slice(None, -1)
    sl_src[axis] = slice(1, None)
    out[tuple(sl_dst)] = m[tuple(sl_src)]
    return out


def solve_diffusion(grid: VoxelGrid, phase: int, direction: str = "z",
                    lateral_bc: str = "mirror", tol: float = 1e-6,
                    max_iter: int | None = None, omega: float = 1.0,
                    check_every: int = 100):
    """Solve the steady-state diffusion problem for one phase and direction.

    Jacobi sweeps (optionally extrapolated by `omega`; the default 1.0 is
    the plain, order-independent scheme) run until both the relative
    change of the diffusivity estimate between checks and the
    inlet/outlet flux mismatch fall below `tol`, or `max_iter` sweeps.

    Returns (TransportResult, FluxField).
    """
    _check_args(grid, phase, direction, lateral_bc)
    if tol <= 0:
        raise ValueError(f"tol must be > 0, got {tol}")
    axis = AXES[direction]
    phi = volume_fraction(grid, phase)
    mask = np.swapaxes(grid.labels == phase, 0, axis)
    length = mask.shape[0]
    area = mask.shape[1] * mask.shape[2]
    f_dense = area / length
    if max_iter is None:
        max_iter = 10 * max(grid.dims) ** 2

    if not percolates(grid, phase, direction, lateral_bc):
        flux = FluxField(np.zeros(grid.dims, dtype=np.float64),
                         grid.spacing_nm, direction)
        result = TransportResult(
            phase=phase, direction=direction, d_eff=0.0, d_rel=0.0,
            tortuosity=math.inf, volume_fraction=phi, iterations=0,
            converged=True, flux_mismatch=0.0, lateral_bc=lateral_bc)
        return result, flux

    m = mask
    mf = m.astype(np.float64)
    # w_lat[j][v] links v and v+1 along lateral axis j; in mirror mode the
    # wrap entry is zero, so the periodic roll formulas apply to both modes.
    w_flow, w_lat = _neighbor_weights(m, lateral_bc)

    deg = np.zeros(m.shape, dtype=np.float64)
    deg[:-1] += w_flow
    deg[1:] += w_flow
    for j, w in zip((1, 2), w_lat):
        deg += w + np.roll(w, 1, axis=j)
    deg[0] += 2.0 * mf[0]
    deg[-1] += 2.0 * mf[-1]

    src = np.zeros(m.shape, dtype=np.float64)
    src[0] = 2.0 * mf[0]            # inlet C=1 through half-link

    # Linear profile initial guess; exact for the fully dense volume.
    prof = 1.0 - (np.arange(length, dtype=np.float64) + 0.5) / length
    c = prof[:, None, None] * mf

    safe_deg = np.where(deg > 0, deg, 1.0)
    live = deg > 0

    def fluxes(c):
        f_in = 2.0 * float(((1.0 - c[0]) * mf[0]).sum())
        f_out = 2.0 * float((c[-1] * mf[-1]).sum())
        return f_in, f_out

    d_rel_prev = None
    iterations = 0
    converged = False
    while iterations < max_iter:
        sweeps = min(check_every, max_iter - iterations)
        for _ in range(sweeps):
            num = src.copy()
            num[1:] += c[:-1] * w_flow
            num[:-1] += c[1:] * w_flow
            for j, w in zip((1, 2), w_lat):
                num += np.roll(c, -1, axis=j) * w
                num += np.roll(c, 1, axis=j) * np.roll(w, 1, axis=j)
            c_new = np.where(live, num / safe_deg, c)
            if omega == 1.0:
                c = c_new * mf
            else:
                c = (c + omega * (c_new - c)) * mf
        iterations += sweeps

        f_in, f_out = fluxes(c)
        f_p = 0.5 * (f_in + f_out)
        d_rel = f_p / f_dense
        mismatch = abs(f_in - f_out) / max(f_p, 1e-300)
        if d_rel_prev is not None:
            rel_change = abs(d_rel - d_rel_prev) / max(abs(d_rel), 1e-300)
            if rel_change < tol and mismatch < tol:
                converged = True
                break
        d_rel_prev = d_rel

    f_in, f_out = fluxes(c)
    f_p = 0.5 * (f_in + f_out)
    d_rel = f_p / f_dense
    mismatch = abs(f_in - f_out) / max(f_p, 1e-300)
    tau = phi / d_rel if d_rel > 0 else math.inf

    flux_mag = _flux_magnitude(c, mf, w_flow, w_lat)
    flux_values = np.swapaxes(flux_mag, 0, axis)
    result = TransportResult(
        phase=phase, direction=direction, d_eff=d_rel, d_rel=d_rel,
        tortuosity=tau, volume_fraction=phi, iterations=iterations,
        converged=converged, flux_mismatch=mismatch, lateral_bc=lateral_bc)
    return result, FluxField(np.ascontiguousarray(flux_values),
                             grid.spacing_nm, direction)


def _flux_magnitude(c, mf, w_flow, w_lat):
    """Per-voxel flux magnitude: per axis, the mean of the two face fluxes."""
    length = c.shape[0]
    comps = []

    # Flow axis: interior faces plus the Dirichlet half-links.
    faces = np.zeros((length + 1,) + c.shape[1:], dtype=np.float64)
    faces[0] = 2.0 * (1.0 - c[0]) * mf[0]
    faces[1:-1] = (c[:-1] - c[1:]) * w_flow
    faces[-1] = 2.0 * c[-1] * mf[-1]
    comps.append(0.5 * (faces[:-1] + faces[1:]))

    for j, w in zip((1, 2), w_lat):
        q = (c - np.roll(c, -1, axis=j)) * w      # face between v and v+1
        comps.append(0.5 * (q + np.roll(q, 1, axis=j)))

    mag = np.sqrt(comps[0] ** 2 + comps[1] ** 2 + comps[2] ** 2)
    return mag * mf


def export_flux_map(field: FluxField, path, csv_path=None) -> None:
    """Write the flux map as MGF1, optionally with a per-slice flux CSV.

    The CSV lists, for each slice perpendicular to the solved direction,
    the plane-summed and plane-averaged voxel flux magnitude.
    """
    write_mgf1(path, field.values, field.spacing_nm)
    if csv_path is not None:
        axis = AXES[field.direction]
        moved = np.moveaxis(field.values, axis, 0)
        import csv as _csv
        with open(csv_path, "w", newline="") as f:
            writer = _csv.writer(f)
            writer.writerow(["slice", "total_flux", "mean_flux"])
            for i in range(moved.shape[0]):
                plane = moved[i]
                writer.writerow([i, f"{plane.sum():.9g}", f"{plane.mean():.9g}"])

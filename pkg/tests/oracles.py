"""Independent brute-force reference implementations used as test oracles.

Everything here is written as plain loops over voxels, kept deliberately
separate from the library's vectorized code paths.
"""

from __future__ import annotations

from collections import deque

import numpy as np

AXIS_INDEX = {"x": 0, "y": 1, "z": 2}


def brute_volume_fraction(labels: np.ndarray, phase: int) -> float:
    count = 0
    nx, ny, nz = labels.shape
    for x in range(nx):
        for y in range(ny):
            for z in range(nz):
                if labels[x, y, z] == phase:
                    count += 1
    return count / labels.size


def brute_interface_faces(labels: np.ndarray, phase: int,
                          periodic: bool) -> int:
    nx, ny, nz = labels.shape
    dims = (nx, ny, nz)
    faces = 0
    for axis in range(3):
        n = dims[axis]
        hi = n if periodic else n - 1
        for x in range(nx):
            for y in range(ny):
                for z in range(nz):
                    v = [x, y, z]
                    if v[axis] >= hi:
                        continue
                    u = list(v)
                    u[axis] = (u[axis] + 1) % n
                    a = labels[tuple(v)]
                    b = labels[tuple(u)]
                    if (a == phase) != (b == phase):
                        faces += 1
    return faces


def brute_tpb_edges(labels: np.ndarray, periodic: bool) -> int:
    nx, ny, nz = labels.shape
    dims = (nx, ny, nz)
    count = 0
    for axis in range(3):
        u_ax, v_ax = [a for a in range(3) if a != axis]
        nu, nv = dims[u_ax], dims[v_ax]
        hi_u = nu if periodic else nu - 1
        hi_v = nv if periodic else nv - 1
        for x in range(nx):
            for y in range(ny):
                for z in range(nz):
                    pos = [x, y, z]
                    if pos[u_ax] >= hi_u or pos[v_ax] >= hi_v:
                        continue
                    quad = set()
                    for du in (0, 1):
                        for dv in (0, 1):
                            q = list(pos)
                            q[u_ax] = (q[u_ax] + du) % nu
                            q[v_ax] = (q[v_ax] + dv) % nv
                            quad.add(int(labels[tuple(q)]))
                    if len(quad) >= 3:
                        count += 1
    return count


def brute_tpcf(labels: np.ndarray, phase: int, axis: str, r_max: int,
               periodic: bool) -> np.ndarray:
    ax = AXIS_INDEX[axis]
    nx, ny, nz = labels.shape
    n = labels.shape[ax]
    out = np.zeros(r_max + 1)
    for r in range(r_max + 1):
        matched = 0
        pairs = 0
        for x in range(nx):
            for y in range(ny):
                for z in range(nz):
                    pos = [x, y, z]
                    other = list(pos)
                    other[ax] += r
                    if other[ax] >= n:
                        if not periodic:
                            continue
                        other[ax] %= n
                    pairs += 1
                    if (labels[tuple(pos)] == phase
                            and labels[tuple(other)] == phase):
                        matched += 1
        out[r] = matched / pairs
    return out


def brute_percolates(labels: np.ndarray, phase: int, axis: str,
                     periodic_lateral: bool = False) -> bool:
    ax = AXIS_INDEX[axis]
    moved = np.moveaxis(labels, ax, 0)
    mask = moved == phase
    length = mask.shape[0]
    seen = np.zeros_like(mask, dtype=bool)
    queue = deque()
    for j in range(mask.shape[1]):
        for k in range(mask.shape[2]):
            if mask[0, j, k]:
                seen[0, j, k] = True
                queue.append((0, j, k))
    while queue:
        i, j, k = queue.popleft()
        if i == length - 1:
            return True
        for di, dj, dk in ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0),
                           (0, 0, 1), (0, 0, -1)):
            ni, nj, nk = i + di, j + dj, k + dk
            if ni < 0 or ni >= length:
                continue
            if periodic_lateral:
                nj %= mask.shape[1]
                nk %= mask.shape[2]
            elif (nj < 0 or nj >= mask.shape[1]
                  or nk < 0 or nk >= mask.shape[2]):
                continue
            if mask[ni, nj, nk] and not seen[ni, nj, nk]:
                seen[ni, nj, nk] = True
                queue.append((ni, nj, nk))
    return False


def direct_solve_d_rel(labels: np.ndarray, phase: int, axis: str,
                       lateral_bc: str = "mirror") -> float:
    """Dense linear solve of the same resistor network (small grids only)."""
    ax = AXIS_INDEX[axis]
    mask = np.moveaxis(labels == phase, ax, 0)
    length = mask.shape[0]
    shape = mask.shape
    ids = -np.ones(shape, dtype=int)
    coords = np.argwhere(mask)
    for idx, c in enumerate(coords):
        ids[tuple(c)] = idx
    n = len(coords)
    if n == 0:
        return 0.0
    A = np.zeros((n, n))
    b = np.zeros(n)
    for idx, (i, j, k) in enumerate(coords):
        for d_ax, (di, dj, dk) in enumerate(((1, 0, 0), (-1, 0, 0),
                                             (0, 1, 0), (0, -1, 0),
                                             (0, 0, 1), (0, 0, -1))):
            ni, nj, nk = i + di, j + dj, k + dk
            if ni < 0 or ni >= length:
                continue
            if lateral_bc == "periodic":
                nj %= shape[1]
                nk %= shape[2]
            elif nj < 0 or nj >= shape[1] or nk < 0 or nk >= shape[2]:
                continue
            if mask[ni, nj, nk]:
                A[idx, idx] += 1.0
                A[idx, ids[ni, nj, nk]] -= 1.0
        if i == 0:
            A[idx, idx] += 2.0
            b[idx] += 2.0          # inlet C=1
        if i == length - 1:
            A[idx, idx] += 2.0     # outlet C=0
    # Anchor isolated voxels / floating clusters: they carry no flux.
    for idx in range(n):
        if A[idx, idx] == 0.0:
            A[idx, idx] = 1.0
    try:
        c = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        c, *_ = np.linalg.lstsq(A, b, rcond=None)
    f_in = sum(2.0 * (1.0 - c[ids[0, j, k]])
               for j in range(shape[1]) for k in range(shape[2])
               if mask[0, j, k])
    f_out = sum(2.0 * c[ids[length - 1, j, k]]
                for j in range(shape[1]) for k in range(shape[2])
                if mask[length - 1, j, k])
    f_dense = shape[1] * shape[2] / length
    return 0.5 * (f_in + f_out) / f_dense


def naive_conv3d(x: np.ndarray, w: np.ndarray, b, stride: int, pad: int,
                 pad_mode: str) -> np.ndarray:
    """Seven nested loops; supports zero and circular padding."""
    c_out, c_in, kd, kh, kw = w.shape
    nd, nh, nw = x.shape[1:]
    if pad_mode == "zero":
        od = (nd + 2 * pad - kd) // stride + 1
        oh = (nh + 2 * pad - kh) // stride + 1
        ow = (nw + 2 * pad - kw) // stride + 1
    else:
        od, oh, ow = nd // stride, nh // stride, nw // stride
    y = np.zeros((c_out, od, oh, ow), dtype=np.float64)
    for o in range(c_out):
        for zd in range(od):
            for zh in range(oh):
                for zw in range(ow):
                    acc = 0.0
                    for i in range(c_in):
                        for a in range(kd):
                            for bb in range(kh):
                                for cc in range(kw):
                                    sd = zd * stride + a - pad
                                    sh = zh * stride + bb - pad
                                    sw = zw * stride + cc - pad
                                    if pad_mode == "circular":
                                        sd %= nd
                                        sh %= nh
                                        sw %= nw
                                    elif not (0 <= sd < nd and 0 <= sh < nh
                                              and 0 <= sw < nw):
                                        continue
                                    acc += w[o, i, a, bb, cc] * x[i, sd, sh, sw]
                    y[o, zd, zh, zw] = acc + (b[o] if b is not None else 0.0)
    return y


def naive_convt3d(x: np.ndarray, w: np.ndarray, b, stride: int, pad: int,
                  pad_mode: str) -> np.ndarray:
    """Scatter formulation written independently of the library kernels."""
    c_in, c_out, kd, kh, kw = w.shape
    nd, nh, nw = x.shape[1:]
    if pad_mode == "zero":
        od = (nd - 1) * stride - 2 * pad + kd
        oh = (nh - 1) * stride - 2 * pad + kh
        ow = (nw - 1) * stride - 2 * pad + kw
    else:
        od, oh, ow = nd * stride, nh * stride, nw * stride
    y = np.zeros((c_out, od, oh, ow), dtype=np.float64)
    for i in range(c_in):
        for o in range(c_out):
            for zd in range(nd):
                for zh in range(nh):
                    for zw in range(nw):
                        for a in range(kd):
                            for bb in range(kh):
                                for cc in range(kw):
                                    td = zd * stride + a - pad
                                    th = zh * stride + bb - pad
                                    tw = zw * stride + cc - pad
                                    if pad_mode == "circular":
                                        td %= od
                                        th %= oh
                                        tw %= ow
                                    elif not (0 <= td < od and 0 <= th < oh
                                              and 0 <= tw < ow):
                                        continue
                                    y[o, td, th, tw] += (w[i, o, a, bb, cc]
                                                         * x[i, zd, zh, zw])
    if b is not None:
        y += b[:, None, None, None]
    return y

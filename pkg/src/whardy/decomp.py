"""C-orthogonal decomposition of a mean-zero grid function over a tree covering.

The working grid is aligned to the Whitney frame with cell size one quarter
of the finest cube side, so every cube is a union of cells and every
transfer box snaps to whole cells. Transfer mass moves through a block of
cells astride the middle half of the shared face whose area scales with the
cube (the snapped version of the analytic box, keeping |U_t|/|B_t|
uniformly bounded); the block touches the face, so each piece g_t is
supported on cells whose closed squares meet the expanded cube U_t (exact
box arithmetic), and all integrals below are exact cell sums.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .errors import ParameterError
from .fields import GridFunction, make_grid
from .treecover import TreeCovering


@dataclass
class Decomposition:
    tree: TreeCovering
    grid: GridFunction
    assignment: np.ndarray  # (nx, ny) cube id per cell, -1 in the uncovered collar
    cells: list  # per node: flat cell indices of supp(g_t)
    values: list  # per node: values of g_t on those cells
    m: np.ndarray  # shadow integrals m_t
    b_cells: list  # per node: flat cell indices of the snapped transfer box
    uncovered_count: int = 0

    def reconstruct(self) -> np.ndarray:
        out = np.zeros(self.grid.dims[0] * self.grid.dims[1])
        for idx, val in zip(self.cells, self.values):
            np.add.at(out, idx, val)
        return out.reshape(self.grid.dims)

    def node_integral(self, t: int) -> float:
        return float(self.values[t].sum() * self.grid.h**2)

    def node_function(self, t: int) -> GridFunction:
        flat = np.zeros(self.grid.dims[0] * self.grid.dims[1])
        flat[self.cells[t]] = self.values[t]
        return self.grid.with_values(flat.reshape(self.grid.dims))


def decomposition_grid(tree: TreeCovering) -> GridFunction:
    """Frame-aligned grid with h = (finest cube side) / 4 covering the domain."""
    dec = tree.decomposition
    if dec is None:
        raise ParameterError("tree has no Whitney decomposition attached")
    L = int(dec.levels.max())
    h = dec.frame.cube_side(L) / 4.0
    lo, hi = dec.domain.bounding_box()
    fx, fy = dec.frame.origin
    i0 = int(np.floor((lo[0] - fx) / h))
    j0 = int(np.floor((lo[1] - fy) / h))
    origin = (fx + i0 * h, fy + j0 * h)
    dims = (
        int(np.ceil((hi[0] - origin[0]) / h - 1e-12)),
        int(np.ceil((hi[1] - origin[1]) / h - 1e-12)),
    )
    g = make_grid(dec.domain, h, origin=origin, dims=dims)
    # grid cell (i, j) sits at frame-lattice cell (i0+i, j0+j)
    return replace(g, frame_offset=(i0, j0))


def assign_cells(tree: TreeCovering, grid: GridFunction) -> np.ndarray:
    """Cube id owning each masked cell center, -1 for the uncovered collar."""
    dec = tree.decomposition
    L = int(dec.levels.max())
    i0, j0 = grid.frame_offset
    nx, ny = grid.dims
    gi = np.arange(nx)[:, None] + i0
    gj = np.arange(ny)[None, :] + j0
    out = np.full((nx, ny), -1, dtype=np.int64)
    BIG = np.int64(1) << 32
    for lv in sorted(set(int(l) for l in dec.levels)):
        side_cells = 4 << (L - lv)  # cube side in grid cells
        sel = np.where(dec.levels == lv)[0]
        packed = dec.indices[sel, 0].astype(np.int64) * BIG + dec.indices[sel, 1]
        srt = np.argsort(packed)
        packed_sorted = packed[srt]
        ids_sorted = sel[srt]
        cx = gi // side_cells
        cy = gj // side_cells
        key = (cx * BIG + cy).ravel()
        pos = np.searchsorted(packed_sorted, key)
        pos = np.clip(pos, 0, len(packed_sorted) - 1)
        hit = packed_sorted[pos] == key
        flat = out.ravel()
        write = hit & (flat == -1)
        flat[write] = ids_sorted[pos[write]]
        out = flat.reshape(nx, ny)
    out[~grid.mask] = -1
    return out


def _face_data(tree: TreeCovering, t: int):
    """(axis, face cell coordinate, along-cell range, parent-side offset)."""
    dec = tree.decomposition
    L = int(dec.levels.max())
    lo, hi = dec.spans(L)
    p = int(tree.parent[t])
    alo = np.maximum(lo[t], lo[p])
    ahi = np.minimum(hi[t], hi[p])
    deg = alo == ahi
    f = int(np.argmax(deg))
    o = 1 - f
    span = int(ahi[o] - alo[o])
    face_cell = int(alo[f]) * 4  # face line in grid-cell units of the frame
    a_lo = int(alo[o]) * 4 + span  # middle half of the face, in cells
    a_hi = int(ahi[o]) * 4 - span
    parent_positive = lo[p][f] == alo[f]  # parent sits past the face
    return f, face_cell, (a_lo, a_hi), parent_positive


def _snap_b_cells(tree: TreeCovering, grid: GridFunction, t: int) -> np.ndarray:
    """Cells of the transfer box astride the shared face, snapped to the grid.

    Along the face: the middle half (a quarter face-length clear of each
    endpoint, so distinct boxes stay disjoint). Across: max(1, span // 8)
    cells into each cube, the cell version of the analytic l_min/32 reach,
    which keeps |U_t| / |B_t| uniformly bounded and the box inside both
    expanded cubes up to one-cell slack (support is checked cell-square
    against U_t).
    """
    f, face_cell, (a_lo, a_hi), _ = _face_data(tree, t)
    i0, j0 = grid.frame_offset
    span = (a_hi - a_lo) // 2  # face length is 4*span cells, middle half 2*span
    per_side = max(1, span // 8)
    across = np.arange(face_cell - per_side, face_cell + per_side)
    along = np.arange(a_lo, a_hi)
    if f == 0:
        ii = np.repeat(across, len(along)) - i0
        jj = np.tile(along, len(across)) - j0
    else:
        ii = np.tile(along, len(across)) - i0
        jj = np.repeat(across, len(along)) - j0
    nx, ny = grid.dims
    if np.any((ii < 0) | (ii >= nx) | (jj < 0) | (jj >= ny)):
        raise ParameterError("snapped transfer box escapes the grid")
    return (ii * ny + jj).astype(np.int64)


def c_decompose(tree: TreeCovering, g: GridFunction) -> Decomposition:
    """Split g into pieces g_t with supp in U_t and zero integral each.

    g_t = g. restricted to Q_t, plus the children's transferred masses on
    their boxes, minus the own shadow mass m_t spread over B_t. Requires a
    mean-zero g over the covered cells; collar cells are excluded and
    counted.
    """
    if g.h <= 0:
        raise ParameterError("bad grid")
    assignment = assign_cells(tree, g)
    covered = assignment >= 0
    uncovered = int((g.mask & ~covered).sum())
    h2 = g.h * g.h
    gv = np.where(covered, g.values, 0.0)
    total = float(gv.sum()) * h2
    l1 = float(np.abs(gv).sum()) * h2
    if l1 > 0 and abs(total) > 1e-10 * l1:
        raise ParameterError(
            f"input is not mean-zero over the covered region: integral {total:.3e}"
        )

    n = len(tree)
    own = np.zeros(n)
    flat_assign = assignment.ravel()
    flat_g = gv.ravel()
    sel = flat_assign >= 0
    np.add.at(own, flat_assign[sel], flat_g[sel] * h2)
    m = own.copy()
    for t in tree.order[::-1]:
        p = tree.parent[t]
        if p >= 0:
            m[p] += m[t]

    b_cells: list = [None] * n
    phi: list = [None] * n
    for t in range(n):
        if tree.parent[t] < 0:
            continue
        idx = _snap_b_cells(tree, g, t)
        b_cells[t] = idx
        phi[t] = 1.0 / (len(idx) * h2)

    cells: list = [None] * n
    values: list = [None] * n
    all_idx = np.arange(flat_assign.size)
    for t in range(n):
        parts_idx = [all_idx[flat_assign == t]]
        parts_val = [flat_g[flat_assign == t]]
        for s in tree.children[t]:
            parts_idx.append(b_cells[s])
            parts_val.append(np.full(len(b_cells[s]), m[s] * phi[s]))
        if tree.parent[t] >= 0:
            parts_idx.append(b_cells[t])
            parts_val.append(np.full(len(b_cells[t]), -m[t] * phi[t]))
        idx = np.concatenate(parts_idx)
        val = np.concatenate(parts_val)
        # merge duplicate cells (a cell can carry own value plus transfers)
        uniq, inv = np.unique(idx, return_inverse=True)
        acc = np.zeros(len(uniq))
        np.add.at(acc, inv, val)
        cells[t] = uniq
        values[t] = acc
    return Decomposition(
        tree=tree,
        grid=g,
        assignment=assignment,
        cells=cells,
        values=values,
        m=m,
        b_cells=b_cells,
        uncovered_count=uncovered,
    )


def decomposition_ratio(dec: Decomposition, q: float, beta: float) -> float:
    """(sum_t ||g_t||_q^q weighted d^(-beta q))^(1/q) over ||g||, same weight."""
    power = -beta * q
    grid = dec.grid
    h2 = grid.h * grid.h
    dist = grid.dist.ravel()
    num = 0.0
    for idx, val in zip(dec.cells, dec.values):
        if len(idx) == 0:
            continue
        num += float((np.abs(val) ** q * dist[idx] ** power).sum()) * h2
    covered = dec.assignment >= 0
    gv = np.where(covered, grid.values, 0.0)
    den = float((np.abs(gv.ravel()) ** q * dist**power)[covered.ravel()].sum()) * h2
    if den == 0.0:
        raise ParameterError("zero denominator in decomposition ratio")
    return (num ** (1.0 / q)) / (den ** (1.0 / q))


# ---------------------------------------------------------------------------
# dump


def dump_decomposition(dec: Decomposition, path) -> None:
    """Single binary container: JSON index line then per-node id/value blocks."""
    index = []
    offset = 0
    blobs = []
    for t, (idx, val) in enumerate(zip(dec.cells, dec.values)):
        blob = idx.astype("<i8").tobytes() + val.astype("<f8").tobytes()
        index.append({"node": t, "offset": offset, "count": int(len(idx))})
        offset += len(blob)
        blobs.append(blob)
    header = json.dumps({"h": dec.grid.h, "dims": list(dec.grid.dims), "index": index},
                        sort_keys=True)
    with open(path, "wb") as fh:
        fh.write(header.encode() + b"\n")
        for blob in blobs:
            fh.write(blob)

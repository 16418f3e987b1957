"""Iso-contour extraction on the periodic grid, plus comparison metrics.

2D uses a marching-squares pass written directly against the torus: every
cell, including the ones wrapping the domain boundary, is classified from
its wrapped corner nodes, crossing vertices are linearly interpolated, and
segments are chained into closed loops by shared grid-edge identity.  The
16-entry case table is fixed below (saddle cases 5 and 10 always keep the
two inside corners separated) and its hash is published as CASE_TABLE_SHA256
so goldens can pin the exact variant.  Loops are emitted in unwrapped
coordinates: a loop crossing the seam carries coordinates past +extent by
less than one cell and is flagged via seam_wrapped.

3D delegates to scikit-image's marching_cubes (Lewiner tables) applied to
the field padded by one wrapped layer per axis, which covers each torus
cell exactly once; geometry crossing the seam is emitted unwrapped the same
way.  Hausdorff distances are estimated symmetrically by dense sampling of
both sides.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial import cKDTree
from skimage import measure as _sk_measure

from .cloud import PointCloud
from .grid import IndicatorField, ScalarField

__all__ = [
    "Polyline2D",
    "TriMesh",
    "extract_iso",
    "hausdorff_distance",
    "sample_polyline",
    "sample_trimesh",
    "sample_polar_curve",
    "polylines_to_csv",
    "polylines_to_svg",
    "trimesh_to_obj",
    "CASE_TABLE_SHA256",
]

_DEGENERATE_AREA = 1e-12


@dataclass(frozen=True, eq=False)
class Polyline2D:
    """Closed loops in the plane; vertices are not repeated at closure."""

    loops: Tuple[np.ndarray, ...]
    extent: float
    seam_wrapped: bool = False

    def __post_init__(self):
        frozen = []
        for loop in self.loops:
            arr = np.ascontiguousarray(np.asarray(loop, dtype=np.float64))
            if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 3:
                raise ValueError("each loop needs at least 3 vertices of dimension 2")
            if not np.all(np.isfinite(arr)):
                raise ValueError("loop vertices must be finite")
            closed_pairs = arr - np.roll(arr, -1, axis=0)
            if np.any(np.all(closed_pairs == 0.0, axis=1)):
                raise ValueError("consecutive loop vertices must be distinct")
            arr.flags.writeable = False
            frozen.append(arr)
        object.__setattr__(self, "loops", tuple(frozen))

    @property
    def n_vertices(self) -> int:
        return sum(len(l) for l in self.loops)


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Triangle soup with in-range indices and no degenerate faces."""

    vertices: np.ndarray
    faces: np.ndarray
    seam_wrapped: bool = False

    def __post_init__(self):
        verts = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        faces = np.ascontiguousarray(np.asarray(self.faces, dtype=np.int64))
        if verts.ndim != 2 or verts.shape[1] != 3:
            raise ValueError("vertices must have shape (n, 3)")
        if faces.ndim != 2 or faces.shape[1] != 3 or faces.shape[0] == 0:
            raise ValueError("faces must have shape (m, 3) with m >= 1")
        if not np.all(np.isfinite(verts)):
            raise ValueError("vertices must be finite")
        if faces.min() < 0 or faces.max() >= len(verts):
            raise ValueError("face indices out of range")
        if np.any(_triangle_areas(verts, faces) <= _DEGENERATE_AREA):
            raise ValueError("mesh contains degenerate triangles")
        verts.flags.writeable = False
        faces.flags.writeable = False
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "faces", faces)


def _triangle_areas(verts: np.ndarray, faces: np.ndarray) -> np.ndarray:
    tri = verts[faces]
    cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    return 0.5 * np.linalg.norm(cross, axis=1)


# Marching-squares case table.  Cell corners, counterclockwise:
#   c0 = (i, j)   c1 = (i+1, j)   c2 = (i+1, j+1)   c3 = (i, j+1)
# case bit k is set when corner ck lies strictly above the iso value.
# Edge slots (each an ordered corner pair, the order fixing the
# interpolation direction):
#   0: c0->c1   1: c1->c2   2: c3->c2   3: c0->c3
# Entries are segments as (slot, slot) pairs.  The two saddle cases keep
# the diagonal corners separated (5 hugs c0 and c2, 10 hugs c1 and c3).
_CASE_SEGMENTS = (
    (),
    ((3, 0),),
    ((0, 1),),
    ((3, 1),),
    ((1, 2),),
    ((3, 0), (1, 2)),
    ((0, 2),),
    ((3, 2),),
    ((2, 3),),
    ((0, 2),),
    ((0, 1), (2, 3)),
    ((1, 2),),
    ((1, 3),),
    ((0, 1),),
    ((0, 3),),
    (),
)

CASE_TABLE_SHA256 = hashlib.sha256(repr(_CASE_SEGMENTS).encode()).hexdigest()

# slot -> (corner A, corner B) with corner offsets in cell-index units
_SLOT_CORNERS = ((0, 1), (1, 2), (3, 2), (0, 3))
_CORNER_OFFSETS = ((0, 0), (1, 0), (1, 1), (0, 1))


def _slot_edge_id(slot: int, i: int, j: int, n: int) -> Tuple[int, int, int]:
    if slot == 0:
        return (0, i, j)
    if slot == 1:
        return (1, (i + 1) % n, j)
    if slot == 2:
        return (0, i, (j + 1) % n)
    return (1, i, j)


def _field_values(field: Union[ScalarField, IndicatorField]) -> np.ndarray:
    if isinstance(field, IndicatorField):
        return field.values.astype(np.float64)
    return field.values


def _extract_2d(field, iso: float) -> Polyline2D:
    grid = field.grid
    n = grid.cells_per_axis
    h = grid.h
    extent = grid.extent
    period = 2.0 * extent
    vals = _field_values(field)
    inside = vals > iso

    corner_masks = [
        np.roll(np.roll(inside, -di, axis=0), -dj, axis=1)
        for di, dj in _CORNER_OFFSETS
    ]
    case = (
        corner_masks[0].astype(np.int8)
        + 2 * corner_masks[1]
        + 4 * corner_masks[2]
        + 8 * corner_masks[3]
    )
    active = np.argwhere((case != 0) & (case != 15))

    corner_vals = [np.roll(np.roll(vals, -di, axis=0), -dj, axis=1) for di, dj in _CORNER_OFFSETS]

    segments = []  # (edge ids pair, endpoint pair)
    for i, j in active:
        base_x = -extent + i * h
        base_y = -extent + j * h
        cvals = [cv[i, j] for cv in corner_vals]

        def slot_vertex(slot):
            a, b = _SLOT_CORNERS[slot]
            va, vb = cvals[a], cvals[b]
            t = (iso - va) / (vb - va)
            oa = _CORNER_OFFSETS[a]
            ob = _CORNER_OFFSETS[b]
            return (
                base_x + h * (oa[0] + t * (ob[0] - oa[0])),
                base_y + h * (oa[1] + t * (ob[1] - oa[1])),
            )

        for sa, sb in _CASE_SEGMENTS[case[i, j]]:
            segments.append(
                (
                    (_slot_edge_id(sa, i, j, n), _slot_edge_id(sb, i, j, n)),
                    (slot_vertex(sa), slot_vertex(sb)),
                )
            )

    by_edge = {}
    for idx, (eids, _) in enumerate(segments):
        for eid in eids:
            by_edge.setdefault(eid, []).append(idx)
    for eid, incident in by_edge.items():
        if len(incident) != 2:
            raise RuntimeError(
                f"contour chaining failed: edge {eid} has {len(incident)} segments"
            )

    used = [False] * len(segments)
    loops: List[np.ndarray] = []
    seam = False
    for seed in range(len(segments)):
        if used[seed]:
            continue
        used[seed] = True
        (start_edge, cur_edge), (pa, pb) = segments[seed]
        verts = [np.array(pa), np.array(pb)]
        pos = np.array(pb)
        while cur_edge != start_edge:
            nxt = None
            for idx in by_edge[cur_edge]:
                if not used[idx]:
                    nxt = idx
                    break
            if nxt is None:
                raise RuntimeError("contour chaining failed: open chain")
            used[nxt] = True
            eids, pts = segments[nxt]
            end = 0 if eids[0] == cur_edge else 1
            match = np.array(pts[end])
            shift = np.round((pos - match) / period) * period
            if np.any(shift != 0.0):
                seam = True
            pos = np.array(pts[1 - end]) + shift
            cur_edge = eids[1 - end]
            verts.append(pos)
        # the walk ends back on start_edge; the final vertex repeats the first
        arr = np.array(verts[:-1])
        if np.any(np.abs(arr[0] - verts[-1]) > 1e-9):
            seam = True  # loop winds around the torus
        keep = np.any(arr != np.roll(arr, 1, axis=0), axis=1)
        arr = arr[keep]
        if len(arr) >= 3:
            loops.append(arr)
    return Polyline2D(loops=tuple(loops), extent=extent, seam_wrapped=seam)


def _extract_3d(field, iso: float) -> TriMesh:
    grid = field.grid
    vals = _field_values(field)
    padded = np.pad(vals, [(0, 1)] * 3, mode="wrap")
    verts_idx, faces, _, _ = _sk_measure.marching_cubes(padded, level=iso)
    verts = -grid.extent + verts_idx * grid.h
    areas = _triangle_areas(verts, faces.astype(np.int64))
    faces = faces[areas > _DEGENERATE_AREA].astype(np.int64)
    seam = bool(verts.max() > grid.extent - grid.h + 1e-12)
    return TriMesh(vertices=verts, faces=faces, seam_wrapped=seam)


def extract_iso(
    field: Union[ScalarField, IndicatorField], iso: float
) -> Union[Polyline2D, TriMesh]:
    """Extract the iso-level interface of a field on the periodic grid.

    Raises ValueError when iso falls outside the open range of the field's
    values (the level set would be empty or cover everything).
    """
    vals = _field_values(field)
    vmin, vmax = float(vals.min()), float(vals.max())
    if not (vmin < iso < vmax):
        raise ValueError(
            f"iso value {iso} outside the field's value range ({vmin}, {vmax})"
        )
    if field.grid.dim == 2:
        return _extract_2d(field, iso)
    return _extract_3d(field, iso)


def sample_polyline(poly: Polyline2D, n_samples: int = 10_000) -> np.ndarray:
    """Arc-length uniform points along all loops, at least n_samples total."""
    chains = []
    lengths = []
    for loop in poly.loops:
        closing = np.linalg.norm(loop[-1] - loop[0])
        # a loop that winds around the torus has no meaningful closing edge
        if poly.seam_wrapped and closing > poly.extent:
            chain = loop
        else:
            chain = np.vstack([loop, loop[:1]])
        chains.append(chain)
        seg = np.linalg.norm(np.diff(chain, axis=0), axis=1)
        lengths.append(seg.sum())
    total = sum(lengths)
    out = []
    for chain, length in zip(chains, lengths):
        n = max(2, int(np.ceil(n_samples * (length / total))) if total > 0 else 2)
        seg = np.linalg.norm(np.diff(chain, axis=0), axis=1)
        s = np.concatenate([[0.0], np.cumsum(seg)])
        t = np.linspace(0.0, s[-1], n, endpoint=False)
        out.append(
            np.column_stack(
                [np.interp(t, s, chain[:, 0]), np.interp(t, s, chain[:, 1])]
            )
        )
    return np.vstack(out)


def sample_trimesh(mesh: TriMesh, n_samples: int = 10_000) -> np.ndarray:
    """Deterministic barycentric-lattice samples over all faces."""
    nf = len(mesh.faces)
    k = 1
    while nf * (k + 1) * (k + 2) // 2 < n_samples:
        k += 1
    bary = np.array(
        [
            (a / k, b / k, (k - a - b) / k)
            for a in range(k + 1)
            for b in range(k + 1 - a)
        ]
    )
    tri = mesh.vertices[mesh.faces]  # (nf, 3, 3)
    pts = np.einsum("bv,fvc->fbc", bary, tri)
    return pts.reshape(-1, 3)


def sample_polar_curve(radius_fn: Callable, n_samples: int = 10_000) -> np.ndarray:
    """Dense samples of the closed curve r = radius_fn(theta)."""
    theta = np.linspace(0.0, 2.0 * np.pi, n_samples, endpoint=False)
    r = np.asarray(radius_fn(theta), dtype=np.float64)
    return np.column_stack([r * np.cos(theta), r * np.sin(theta)])


def _as_points(obj, n_samples: int) -> np.ndarray:
    if isinstance(obj, Polyline2D):
        return sample_polyline(obj, n_samples)
    if isinstance(obj, TriMesh):
        return sample_trimesh(obj, n_samples)
    if isinstance(obj, PointCloud):
        return obj.points
    if callable(obj):
        return np.asarray(obj(n_samples), dtype=np.float64)
    arr = np.asarray(obj, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("point sets must be 2d arrays of shape (n, dim)")
    return arr


def hausdorff_distance(a, b, n_samples: int = 10_000) -> float:
    """Symmetric Hausdorff distance between densely sampled geometries.

    Each side is turned into at least n_samples points (where it is not
    already a finite point set), so the estimate carries a sampling error
    of the order of the local sample spacing.
    """
    pa = _as_points(a, n_samples)
    pb = _as_points(b, n_samples)
    if pa.shape[1] != pb.shape[1]:
        raise ValueError("geometries have different ambient dimensions")
    d_ab = cKDTree(pb).query(pa)[0].max()
    d_ba = cKDTree(pa).query(pb)[0].max()
    return float(max(d_ab, d_ba))


def polylines_to_csv(poly: Polyline2D, path) -> None:
    """Rows of loop_id, x, y per vertex, loops in extraction order."""
    with open(path, "w", newline="") as fh:
        fh.write("loop,x,y\n")
        for loop_id, loop in enumerate(poly.loops):
            for x, y in loop:
                fh.write(f"{loop_id},{x!r},{y!r}\n")


def polylines_to_svg(poly: Polyline2D, path, stroke: str = "black") -> None:
    """Standalone SVG of the loops over the domain square."""
    e = poly.extent
    size = 2.0 * e
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {size} {size}" '
        f'width="640" height="640">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
    ]
    for loop in poly.loops:
        pts = " ".join(f"{x + e},{e - y}" for x, y in loop)
        parts.append(
            f'<polygon points="{pts}" fill="none" stroke="{stroke}" '
            f'stroke-width="{0.004 * size}"/>'
        )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


def trimesh_to_obj(mesh: TriMesh, path) -> None:
    """ASCII OBJ with v and f records (1-indexed)."""
    with open(path, "w") as fh:
        for x, y, z in mesh.vertices:
            fh.write(f"v {x!r} {y!r} {z!r}\n")
        for a, b, c in mesh.faces:
            fh.write(f"f {a + 1} {b + 1} {c + 1}\n")

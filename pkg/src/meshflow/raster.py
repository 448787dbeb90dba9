"""Z-buffered triangle rasterizer for image-space meshes.

Pixel centers sit at integer coordinates with the origin at the top-left,
x running along columns and y along rows.  Coverage uses an inclusive
edge-function test, so a center lying exactly on an edge belongs to the
triangle.  The z-buffer keeps the maximum depth; on exact depth ties the
triangle with the lower index wins because triangles are visited in order
and only a strictly closer fragment replaces a stored one.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .model3d import Mesh

EMPTY_DEPTH = -np.inf
NO_TRIANGLE = -1


class HintMode(str, Enum):
    swap = "swap"  # caller passes the pose frame
    reenact = "reenact"  # caller passes the identity frame


@dataclass(frozen=True)
class RasterBuffers:
    width: int
    height: int
    color: np.ndarray  # (H, W, 3)
    depth: np.ndarray  # (H, W), EMPTY_DEPTH where uncovered
    tri_index: np.ndarray  # (H, W) int64, NO_TRIANGLE where uncovered
    bary: np.ndarray  # (H, W, 3)

    @property
    def covered(self) -> np.ndarray:
        return self.tri_index != NO_TRIANGLE


def interpolate(lam: np.ndarray, v1, v2, v3):
    """Barycentric blend written relative to the third vertex.

    ``v3 + l1*(v1 - v3) + l2*(v2 - v3)`` equals ``l1*v1 + l2*v2 + l3*v3`` when
    the weights sum to one, and reproduces a constant attribute exactly.
    ``lam`` has the weights on its last axis; attributes carry their own
    trailing axis (colors, 3D offsets).
    """
    l1 = lam[..., 0:1]
    l2 = lam[..., 1:2]
    v3 = np.asarray(v3)
    return v3 + l1 * (np.asarray(v1) - v3) + l2 * (np.asarray(v2) - v3)


def interpolate_scalar(lam: np.ndarray, s1, s2, s3):
    """Same blend for a scalar attribute such as depth."""
    l1 = lam[..., 0]
    l2 = lam[..., 1]
    s3 = np.asarray(s3)
    return s3 + l1 * (np.asarray(s1) - s3) + l2 * (np.asarray(s2) - s3)


def _edge(ax, ay, bx, by, px, py):
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


def triangle_barycentrics(a, b, c, px, py):
    """Barycentric weights of points (px, py) w.r.t. the 2D triangle abc.

    Returns an (..., 3) array, or None when the triangle has zero area.
    """
    area = _edge(a[0], a[1], b[0], b[1], c[0], c[1])
    if area == 0 or not np.isfinite(area):
        return None
    l1 = _edge(b[0], b[1], c[0], c[1], px, py) / area
    l2 = _edge(c[0], c[1], a[0], a[1], px, py) / area
    l3 = _edge(a[0], a[1], b[0], b[1], px, py) / area
    return np.stack([l1, l2, l3], axis=-1)


def rasterize(mesh: Mesh, colors: np.ndarray | None, width: int, height: int) -> RasterBuffers:
    """Render an image-space mesh with per-vertex colors into fresh buffers.

    ``colors`` is an (N, 3) array in [0, 1]; None renders white.
    """
    width, height = int(width), int(height)
    if width <= 0 or height <= 0:
        raise ValueError(f"image size must be positive, got {width}x{height}")
    verts = mesh.vertices
    if colors is None:
        colors = np.ones((mesh.n_vertices, 3))
    colors = np.asarray(colors, dtype=np.float64).reshape(-1, 3)
    if len(colors) != mesh.n_vertices:
        raise ValueError(f"texture has {len(colors)} colors for {mesh.n_vertices} vertices")

    depth = np.full((height, width), EMPTY_DEPTH)
    tri_index = np.full((height, width), NO_TRIANGLE, dtype=np.int64)
    bary = np.zeros((height, width, 3))
    color = np.zeros((height, width, 3))

    for t, (i1, i2, i3) in enumerate(mesh.triangles):
        a, b, c = verts[i1], verts[i2], verts[i3]
        xs = (a[0], b[0], c[0])
        ys = (a[1], b[1], c[1])
        x0 = max(int(np.ceil(min(xs))), 0)
        x1 = min(int(np.floor(max(xs))), width - 1)
        y0 = max(int(np.ceil(min(ys))), 0)
        y1 = min(int(np.floor(max(ys))), height - 1)
        if x0 > x1 or y0 > y1:
            continue
        py, px = np.mgrid[y0 : y1 + 1, x0 : x1 + 1].astype(np.float64)
        lam = triangle_barycentrics(a, b, c, px, py)
        if lam is None:
            continue
        inside = np.all(lam >= 0, axis=-1)
        if not inside.any():
            continue
        z = interpolate_scalar(lam, a[2], b[2], c[2])
        win = inside & (z > depth[y0 : y1 + 1, x0 : x1 + 1])
        if not win.any():
            continue
        rows, cols = np.nonzero(win)
        rows_img, cols_img = rows + y0, cols + x0
        lam_w = lam[rows, cols]
        depth[rows_img, cols_img] = z[rows, cols]
        tri_index[rows_img, cols_img] = t
        bary[rows_img, cols_img] = lam_w
        color[rows_img, cols_img] = interpolate(lam_w, colors[i1], colors[i2], colors[i3])

    np.clip(color, 0.0, 1.0, out=color)
    return RasterBuffers(width, height, color, depth, tri_index, bary)


def facial_mask(buffers: RasterBuffers) -> np.ndarray:
    """Binary (H, W) float mask: 1 on rendered face pixels, 0 elsewhere."""
    return buffers.covered.astype(np.float64)


def appearance_hint(source: np.ndarray, mask: np.ndarray, mode: HintMode | str = HintMode.swap) -> np.ndarray:
    """Keep the non-facial part of ``source``: ``source * (1 - mask)``.

    ``mode`` selects nothing numerically; for swapping pass the pose frame,
    for reenactment the identity frame.
    """
    HintMode(mode)
    source = np.asarray(source, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if mask.ndim == 3 and mask.shape[2] == 1:
        mask = mask[..., 0]
    if source.shape[:2] != mask.shape:
        raise ValueError(f"source {source.shape[:2]} and mask {mask.shape} sizes differ")
    keep = 1.0 - mask
    return source * (keep[..., None] if source.ndim == 3 else keep)

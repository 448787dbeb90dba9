"""Dense optical flow derived from two renders of the same mesh topology.

For a pixel covered at frame t the rasterizer records the front-most triangle
and the barycentric weights of the pixel center.  Applying those weights to
the per-vertex displacement ``V_t - V_tm1`` gives the flow vector; applying
them to frame-t depth gives the query point.  The point is then moved back to
frame t-1 and checked against that frame's depth buffer, and the flow is kept
only where the point is visible in both frames.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .model3d import Mesh
from .raster import NO_TRIANGLE, RasterBuffers, interpolate, interpolate_scalar, rasterize, triangle_barycentrics

DEFAULT_EPS_FRACTION = 1e-4


class CorrespondenceError(ValueError):
    """The two meshes do not share vertex count and triangle list."""


class NotCoveredError(LookupError):
    """The requested pixel is not covered by any triangle."""


@dataclass(frozen=True)
class FlowField:
    width: int
    height: int
    vectors: np.ndarray  # (H, W, 3): dx px, dy px, dz depth units; zero where invalid
    valid: np.ndarray  # (H, W) bool

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float64)
        ok = np.asarray(self.valid, dtype=bool)
        if v.shape != (self.height, self.width, 3) or ok.shape != (self.height, self.width):
            raise ValueError("flow arrays do not match the declared size")
        object.__setattr__(self, "vectors", v)
        object.__setattr__(self, "valid", ok)

    @classmethod
    def zeros(cls, width: int, height: int) -> "FlowField":
        return cls(width, height, np.zeros((height, width, 3)), np.ones((height, width), bool))


@dataclass(frozen=True)
class FramePair:
    mesh_t: Mesh
    mesh_tm1: Mesh
    buffers_t: RasterBuffers
    buffers_tm1: RasterBuffers

    def __post_init__(self):
        if self.mesh_t.n_vertices != self.mesh_tm1.n_vertices:
            raise CorrespondenceError(
                f"vertex counts differ: {self.mesh_t.n_vertices} vs {self.mesh_tm1.n_vertices}"
            )
        if not np.array_equal(self.mesh_t.triangles, self.mesh_tm1.triangles):
            raise CorrespondenceError("triangle lists differ between frames")
        bt, bp = self.buffers_t, self.buffers_tm1
        if (bt.width, bt.height) != (bp.width, bp.height):
            raise CorrespondenceError("frame buffers have different sizes")

    @classmethod
    def render(cls, mesh_t: Mesh, mesh_tm1: Mesh, width: int, height: int) -> "FramePair":
        """Rasterize both image-space meshes and bundle them."""
        if mesh_t.n_vertices != mesh_tm1.n_vertices or not np.array_equal(
            mesh_t.triangles, mesh_tm1.triangles
        ):
            raise CorrespondenceError("meshes do not share topology")
        bt = rasterize(mesh_t, None, width, height)
        bp = rasterize(mesh_tm1, None, width, height)
        return cls(mesh_t, mesh_tm1, bt, bp)

    def reversed(self) -> "FramePair":
        return FramePair(self.mesh_tm1, self.mesh_t, self.buffers_tm1, self.buffers_t)


def default_eps(buffers: RasterBuffers) -> float:
    """Depth tolerance: a small fraction of the covered depth range."""
    z = buffers.depth[buffers.covered]
    if z.size == 0:
        return DEFAULT_EPS_FRACTION
    span = float(z.max() - z.min())
    if span > 0:
        return DEFAULT_EPS_FRACTION * span
    return DEFAULT_EPS_FRACTION * max(1.0, float(np.abs(z).max()))


def _pixel_triangle(buffers: RasterBuffers, pixel) -> tuple[int, np.ndarray]:
    x, y = int(pixel[0]), int(pixel[1])
    if not (0 <= x < buffers.width and 0 <= y < buffers.height):
        raise NotCoveredError(f"pixel {(x, y)} is outside the image")
    tri = int(buffers.tri_index[y, x])
    if tri == NO_TRIANGLE:
        raise NotCoveredError(f"pixel {(x, y)} is not covered")
    return tri, buffers.bary[y, x]


def vertex_flow(pair: FramePair, pixel) -> np.ndarray:
    """Flow vector at an integer pixel ``(x, y)`` covered in frame t."""
    tri, lam = _pixel_triangle(pair.buffers_t, pixel)
    idx = pair.mesh_t.triangles[tri]
    d = pair.mesh_t.vertices[idx] - pair.mesh_tm1.vertices[idx]
    return interpolate(lam, d[0], d[1], d[2])


def query_depth(mesh_t: Mesh, buffers_t: RasterBuffers, pixel) -> float:
    tri, lam = _pixel_triangle(buffers_t, pixel)
    z = mesh_t.vertices[mesh_t.triangles[tri], 2]
    return float(interpolate_scalar(lam, z[0], z[1], z[2]))


def visibility_t(mesh_t: Mesh, buffers_t: RasterBuffers, pixel, eps: float) -> int:
    try:
        qz = query_depth(mesh_t, buffers_t, pixel)
    except NotCoveredError:
        return 0
    x, y = int(pixel[0]), int(pixel[1])
    return int(qz >= buffers_t.depth[y, x] - eps)


def sample_depth(buffers: RasterBuffers, xs, ys, mesh: Mesh | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Sample the depth buffer at continuous image coordinates.

    Bilinear over the neighbors that carry nonzero weight.  When some of
    those are uncovered (a silhouette) the sample comes from the exact
    front-most surface of ``mesh``, the image-space mesh the buffer was
    rendered from, and is missing if no triangle contains the point.
    Without ``mesh`` the nearest covered neighbor stands in.  A point
    outside the image, or with no covered neighbor, is missing.
    Returns ``(depth, ok)``.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    h, w = buffers.height, buffers.width
    inside = (xs >= 0) & (xs <= w - 1) & (ys >= 0) & (ys <= h - 1)
    xc = np.where(inside, xs, 0.0)
    yc = np.where(inside, ys, 0.0)
    x0 = np.floor(xc).astype(np.int64)
    y0 = np.floor(yc).astype(np.int64)
    fx = xc - x0
    fy = yc - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)

    corners = ((y0, x0, (1 - fx) * (1 - fy), fx**2 + fy**2),
               (y0, x1, fx * (1 - fy), (1 - fx) ** 2 + fy**2),
               (y1, x0, (1 - fx) * fy, fx**2 + (1 - fy) ** 2),
               (y1, x1, fx * fy, (1 - fx) ** 2 + (1 - fy) ** 2))
    covered = buffers.covered
    total = np.zeros(xs.shape)
    all_covered = np.ones(xs.shape, dtype=bool)
    best = np.full(xs.shape, np.inf)
    nearest = np.zeros(xs.shape)
    for yy, xx, weight, dist2 in corners:
        used = weight > 0
        cov = covered[yy, xx]
        all_covered &= cov | ~used
        z = np.where(cov, buffers.depth[yy, xx], 0.0)
        total += np.where(used, weight * z, 0.0)
        closer = used & cov & (dist2 < best)
        best = np.where(closer, dist2, best)
        nearest = np.where(closer, z, nearest)
    out = np.where(all_covered, total, nearest)
    ok = inside & (all_covered | np.isfinite(best))
    if mesh is not None:
        edge = inside & ~all_covered
        if edge.any():
            z, found = surface_depth(mesh, xs[edge], ys[edge])
            out[edge] = z
            ok[edge] = found
    return np.where(ok, out, -np.inf), ok


def _front_surface(mesh: Mesh, xs: np.ndarray, ys: np.ndarray, attribute: np.ndarray | None):
    # front-most triangle containing each point: depth there, and the blended attribute
    best = np.full(xs.shape, -np.inf)
    blended = np.zeros(xs.shape + (3,))
    for i1, i2, i3 in mesh.triangles:
        a, b, c = mesh.vertices[i1], mesh.vertices[i2], mesh.vertices[i3]
        if max(a[0], b[0], c[0]) < xs.min() or min(a[0], b[0], c[0]) > xs.max():
            continue
        lam = triangle_barycentrics(a, b, c, xs, ys)
        if lam is None:
            continue
        inside = np.all(lam >= 0, axis=-1)
        z = interpolate_scalar(lam, a[2], b[2], c[2])
        win = inside & (z > best)
        if win.any():
            best[win] = z[win]
            if attribute is not None:
                blended[win] = interpolate(lam[win], attribute[i1], attribute[i2], attribute[i3])
    return best, blended


def surface_depth(mesh: Mesh, xs, ys) -> tuple[np.ndarray, np.ndarray]:
    """Depth of the front-most triangle at continuous points; ``(depth, found)``."""
    xs = np.atleast_1d(np.asarray(xs, dtype=np.float64))
    ys = np.atleast_1d(np.asarray(ys, dtype=np.float64))
    if xs.size == 0:
        return np.zeros(0), np.zeros(0, dtype=bool)
    depth, _ = _front_surface(mesh, xs, ys, None)
    return depth, np.isfinite(depth)


def visibility_tm1(buffers_tm1: RasterBuffers, q_tm1, eps: float, mesh_tm1: Mesh | None = None) -> int:
    """Visibility in frame t-1 of a point already moved back by the flow.

    Pass ``mesh_tm1`` to resolve silhouette footprints on the exact surface.
    """
    qx, qy, qz = (float(v) for v in q_tm1)
    z, ok = sample_depth(buffers_tm1, np.array([qx]), np.array([qy]), mesh_tm1)
    return int(bool(ok[0]) and qz >= z[0] - eps)


def thread_count() -> int:
    """Worker cap from ``MESHFLOW_THREADS``; 0 or unset means one per CPU, at most 8."""
    try:
        threads = int(os.environ.get("MESHFLOW_THREADS", "0") or 0)
    except ValueError:
        threads = 0
    if threads <= 0:
        threads = min(os.cpu_count() or 1, 8)
    return threads


def _row_chunks(height: int) -> list[slice]:
    threads = thread_count()
    step = max(1, -(-height // threads))
    return [slice(r, min(r + step, height)) for r in range(0, height, step)]


def dense_flow(pair: FramePair, eps: float | None = None) -> FlowField:
    """Masked flow field from frame t back to frame t-1."""
    bt, bp = pair.buffers_t, pair.buffers_tm1
    if eps is None:
        eps = default_eps(bt)
    h, w = bt.height, bt.width
    vectors = np.zeros((h, w, 3))
    valid = np.zeros((h, w), dtype=bool)
    tris = pair.mesh_t.triangles
    disp = pair.mesh_t.vertices - pair.mesh_tm1.vertices
    zt = pair.mesh_t.vertices[:, 2]

    def rows(sl: slice) -> None:
        tri = bt.tri_index[sl]
        ys, xs = np.nonzero(tri != NO_TRIANGLE)
        if ys.size == 0:
            return
        idx = tris[tri[ys, xs]]
        lam = bt.bary[sl][ys, xs]
        flow = interpolate(lam, disp[idx[:, 0]], disp[idx[:, 1]], disp[idx[:, 2]])
        qz = interpolate_scalar(lam, zt[idx[:, 0]], zt[idx[:, 1]], zt[idx[:, 2]])
        s_t = qz >= bt.depth[sl][ys, xs] - eps
        yimg = ys + sl.start
        qx_tm1 = xs - flow[:, 0]
        qy_tm1 = yimg - flow[:, 1]
        qz_tm1 = qz - flow[:, 2]
        z_tm1, ok = sample_depth(bp, qx_tm1, qy_tm1, pair.mesh_tm1)
        s_tm1 = ok & (qz_tm1 >= z_tm1 - eps)
        keep = s_t & s_tm1
        valid[yimg, xs] = keep
        vectors[yimg[keep], xs[keep]] = flow[keep]

    chunks = _row_chunks(h)
    if len(chunks) == 1:
        rows(chunks[0])
    else:
        with ThreadPoolExecutor(len(chunks)) as pool:
            list(pool.map(rows, chunks))
    return FlowField(w, h, vectors, valid)


def flow_at(mesh_src: Mesh, mesh_dst: Mesh, xs, ys) -> tuple[np.ndarray, np.ndarray]:
    """Exact mesh flow ``src - dst`` at continuous image points of ``mesh_src``.

    Uses the front-most triangle of ``mesh_src`` containing each point, the
    same rule the rasterizer applies at pixel centers.  Returns
    ``(vectors, found)``; points outside every triangle get a zero vector.
    """
    xs = np.atleast_1d(np.asarray(xs, dtype=np.float64))
    ys = np.atleast_1d(np.asarray(ys, dtype=np.float64))
    if xs.size == 0:
        return np.zeros((0, 3)), np.zeros(0, dtype=bool)
    depth, vectors = _front_surface(mesh_src, xs, ys, mesh_src.vertices - mesh_dst.vertices)
    return vectors, np.isfinite(depth)

"""Seeded synthetic scenes: icospheres that sit still, translate or rotate."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .model3d import CameraPose, Mesh, MorphableModel, project, rotation_about


class Motion(str, Enum):
    static = "static"
    translate = "translate"
    rotate = "rotate"


def icosphere(subdivisions: int = 1) -> Mesh:
    """Unit icosphere; 20 * 4**subdivisions triangles."""
    p = (1 + 5**0.5) / 2
    verts = [(-1, p, 0), (1, p, 0), (-1, -p, 0), (1, -p, 0),
             (0, -1, p), (0, 1, p), (0, -1, -p), (0, 1, -p),
             (p, 0, -1), (p, 0, 1), (-p, 0, -1), (-p, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
             (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
             (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
             (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    v = [np.array(x, dtype=np.float64) / np.linalg.norm(x) for x in verts]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(i: int, j: int) -> int:
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = v[i] + v[j]
                v.append(m / np.linalg.norm(m))
                cache[key] = len(v) - 1
            return cache[key]

        nxt = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            nxt += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = nxt
    return Mesh(np.array(v), np.array(faces))


def gradient_texture(mesh: Mesh, rng: np.random.Generator, planar: bool = False) -> np.ndarray:
    """Per-vertex colors affine in the vertex position, staying inside [0.1, 0.9].

    With ``planar`` the gradient ignores z, so an unrotated render is an
    affine function of the pixel coordinates.
    """
    v = mesh.vertices
    radius = float(np.abs(v).max()) or 1.0
    directions = rng.normal(size=(3, 3))
    if planar:
        directions[:, 2] = 0.0
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return 0.5 + 0.4 * (v / radius) @ directions.T


@dataclass(frozen=True)
class Sequence:
    mesh: Mesh  # model space, shared by every frame
    poses: list[CameraPose]
    texture: np.ndarray
    width: int
    height: int

    def projected(self, k: int) -> Mesh:
        return project(self.mesh, self.poses[k])


def make_sequence(
    kind: Motion | str,
    frames: int,
    seed: int = 0,
    width: int = 64,
    height: int = 64,
    subdivisions: int = 2,
    step: tuple[float, float] = (1.0, 0.0),
    degrees: float = 10.0,
) -> Sequence:
    """A sphere of radius ~0.3 * min(width, height) centered in the frame.

    ``translate`` shifts it by ``step`` pixels per frame with no rotation and a
    z-free gradient texture; ``rotate`` spins it ``degrees`` per frame about
    the vertical axis from a seeded starting orientation.
    """
    kind = Motion(kind)
    if frames < 1:
        raise ValueError("need at least one frame")
    rng = np.random.default_rng(seed)
    # dyadic vertices and scale keep projected coordinates exact under pixel shifts
    base_mesh = icosphere(subdivisions)
    mesh = Mesh(np.round(base_mesh.vertices * 2.0**20) / 2.0**20, base_mesh.triangles)
    scale = np.round(0.3 * min(width, height) * 4) / 4
    center = np.array([(width - 1) / 2.0, (height - 1) / 2.0])
    if kind is Motion.translate:
        base = np.eye(3)
        total = np.asarray(step, dtype=float) * (frames - 1)
        center = center - total / 2.0
    else:
        base = rotation_about("x", rng.uniform(-30, 30)) @ rotation_about("y", rng.uniform(0, 360))
    texture = gradient_texture(mesh, rng, planar=kind is Motion.translate)

    poses = []
    for k in range(frames):
        if kind is Motion.rotate:
            rot = rotation_about("y", degrees * k) @ base
        else:
            rot = base
        shift = np.asarray(step, dtype=float) * k if kind is Motion.translate else np.zeros(2)
        poses.append(CameraPose(scale, rot, center + shift))
    return Sequence(mesh, poses, texture, width, height)


def random_model(n_vertices: int, k_id: int, k_exp: int, rng: np.random.Generator) -> MorphableModel:
    """Small random morphable model over a triangulated strip of vertices."""
    mean = rng.normal(size=(n_vertices, 3))
    tris = np.array([(i, i + 1, i + 2) for i in range(n_vertices - 2)], dtype=np.int64).reshape(-1, 3)
    return MorphableModel(
        mean,
        rng.normal(size=(3 * n_vertices, k_id)),
        rng.normal(size=(3 * n_vertices, k_exp)),
        tris,
    )


def random_triangle_soup(n_triangles: int, width: int, height: int, rng: np.random.Generator) -> Mesh:
    """Independent random image-space triangles with random depths; overlaps are common."""
    centers = rng.uniform([0, 0], [width, height], size=(n_triangles, 1, 2))
    size = rng.uniform(2, max(width, height) / 3, size=(n_triangles, 1, 1))
    xy = centers + size * rng.uniform(-1, 1, size=(n_triangles, 3, 2))
    z = rng.uniform(-10, 10, size=(n_triangles, 3, 1))
    verts = np.concatenate([xy, z], axis=2).reshape(-1, 3)
    return Mesh(verts, np.arange(3 * n_triangles).reshape(-1, 3))

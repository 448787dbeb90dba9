"""Linear morphable face model, coefficient recombination and weak-perspective projection.

A face shape is ``mean_shape + id_basis @ alpha_id + exp_basis @ alpha_exp``
with the bases stored vertex-major (row ``3*k + d`` is coordinate ``d`` of
vertex ``k``).  Projection is scaled orthographic: rotate, scale, and shift in
the image plane, keeping the scaled depth as a separate channel where a
larger value is closer to the camera.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DimensionError(ValueError):
    """Coefficient or basis shapes do not agree."""


@dataclass(frozen=True)
class Mesh:
    vertices: np.ndarray  # (N, 3) float64
    triangles: np.ndarray  # (M, 3) int64

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise DimensionError(f"triangle index out of range for {len(v)} vertices")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)


@dataclass(frozen=True)
class Coefficients:
    alpha_id: np.ndarray
    alpha_exp: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "alpha_id", np.asarray(self.alpha_id, dtype=np.float64).ravel())
        object.__setattr__(self, "alpha_exp", np.asarray(self.alpha_exp, dtype=np.float64).ravel())


@dataclass(frozen=True)
class MorphableModel:
    mean_shape: np.ndarray  # (N, 3)
    id_basis: np.ndarray  # (3N, K_id)
    exp_basis: np.ndarray  # (3N, K_exp)
    triangles: np.ndarray  # (M, 3)

    def __post_init__(self):
        mean = np.asarray(self.mean_shape, dtype=np.float64).reshape(-1, 3)
        n = len(mean)
        id_b = np.asarray(self.id_basis, dtype=np.float64)
        exp_b = np.asarray(self.exp_basis, dtype=np.float64)
        if id_b.ndim == 1:
            id_b = id_b.reshape(3 * n, -1)
        if exp_b.ndim == 1:
            exp_b = exp_b.reshape(3 * n, -1)
        if id_b.shape[0] != 3 * n or exp_b.shape[0] != 3 * n:
            raise DimensionError(
                f"basis rows {id_b.shape[0]}/{exp_b.shape[0]} do not match 3*N = {3 * n}"
            )
        if id_b.shape[1] < 1 or exp_b.shape[1] < 1:
            raise DimensionError("identity and expression bases need at least one column")
        tris = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if tris.size and (tris.min() < 0 or tris.max() >= n):
            raise DimensionError(f"triangle index out of range for {n} vertices")
        object.__setattr__(self, "mean_shape", mean)
        object.__setattr__(self, "id_basis", id_b)
        object.__setattr__(self, "exp_basis", exp_b)
        object.__setattr__(self, "triangles", tris)

    @property
    def n_vertices(self) -> int:
        return len(self.mean_shape)

    @property
    def k_id(self) -> int:
        return self.id_basis.shape[1]

    @property
    def k_exp(self) -> int:
        return self.exp_basis.shape[1]


@dataclass(frozen=True)
class CameraPose:
    scale: float
    rotation: np.ndarray  # (3, 3)
    translation: np.ndarray  # (2,) pixels

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).ravel()
        if t.shape != (2,):
            raise DimensionError("translation must be a 2D image-plane vector")
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-6, rtol=0) or abs(np.linalg.det(r) - 1) > 1e-6:
            raise ValueError("rotation must be orthonormal with determinant +1")
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "CameraPose":
        return cls(1.0, np.eye(3), np.zeros(2))


def rotation_about(axis: str, degrees: float) -> np.ndarray:
    """Right-handed rotation matrix about one of the coordinate axes."""
    a = np.deg2rad(degrees)
    c, s = np.cos(a), np.sin(a)
    if axis == "x":
        return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])
    if axis == "y":
        return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])
    if axis == "z":
        return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
    raise ValueError(f"unknown axis {axis!r}")


def _check(model: MorphableModel, c: Coefficients) -> None:
    if c.alpha_id.shape[0] != model.k_id:
        raise DimensionError(f"alpha_id has {c.alpha_id.shape[0]} entries, model expects {model.k_id}")
    if c.alpha_exp.shape[0] != model.k_exp:
        raise DimensionError(f"alpha_exp has {c.alpha_exp.shape[0]} entries, model expects {model.k_exp}")


def reconstruct(model: MorphableModel, c: Coefficients) -> Mesh:
    _check(model, c)
    offset = model.id_basis @ c.alpha_id + model.exp_basis @ c.alpha_exp
    return Mesh(model.mean_shape + offset.reshape(-1, 3), model.triangles.copy())


def recombine(model: MorphableModel, id_from: Coefficients, exp_from: Coefficients) -> Mesh:
    """Shape with the identity of ``id_from`` and the expression of ``exp_from``."""
    _check(model, id_from)
    _check(model, exp_from)
    return reconstruct(model, Coefficients(id_from.alpha_id, exp_from.alpha_exp))


def project(mesh: Mesh, pose: CameraPose) -> Mesh:
    """Weak-perspective projection into image space.

    x is the column, y the row, z the scaled depth (larger is closer).
    """
    rotated = mesh.vertices @ pose.rotation.T
    out = pose.scale * rotated
    out[:, :2] += pose.translation
    return Mesh(out, mesh.triangles.copy())

"""Readers and writers for every file format the pipeline touches.

Binary formats are little-endian with a 4-byte magic.  Each format has an
``encode_*``/``decode_*`` pair on bytes and a ``write_*``/``read_*`` pair on
paths; writers go through a temporary file and an atomic rename.
"""

from __future__ import annotations

import json
import os
import re
import struct
import tempfile
from pathlib import Path

import numpy as np

from .flow import FlowField
from .model3d import CameraPose, Coefficients, Mesh, MorphableModel

MAX_SIDE = 1 << 16


class FormatError(ValueError):
    """Base class for malformed input files."""


class BadMagicError(FormatError):
    pass


class TruncatedError(FormatError):
    pass


class DimensionOverflowError(FormatError):
    pass


def atomic_write(path: str | Path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read(path: str | Path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def _check_side(*sides: int) -> None:
    for s in sides:
        if s > MAX_SIDE:
            raise DimensionOverflowError(f"dimension {s} exceeds {MAX_SIDE}")


def _magic(data: bytes, magic: bytes) -> None:
    if data[:4] != magic:
        raise BadMagicError(f"expected magic {magic!r}, found {data[:4]!r}")


def _header(data: bytes, fmt: str) -> tuple:
    size = struct.calcsize(fmt)
    if len(data) < 4 + size:
        raise TruncatedError(f"header needs {4 + size} bytes, file has {len(data)}")
    return struct.unpack_from(fmt, data, 4)


def _payload(data: bytes, offset: int, dtype, count: int) -> np.ndarray:
    dtype = np.dtype(dtype)
    need = offset + dtype.itemsize * count
    if len(data) < need:
        raise TruncatedError(f"payload needs {need} bytes, file has {len(data)}")
    if len(data) > need:
        raise FormatError(f"{len(data) - need} trailing bytes after payload")
    return np.frombuffer(data, dtype=dtype, count=count, offset=offset)


# PPM (P6, 8-bit) -------------------------------------------------------------

_PNM_TOKEN = re.compile(rb"(?:\s+|#[^\n]*\n)*([^\s#]+)")


def quantize(image) -> np.ndarray:
    """Map [0, 1] floats to bytes, rounding halves up."""
    a = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    return np.floor(a * 255.0 + 0.5).astype(np.uint8)


def encode_ppm(image) -> bytes:
    img = np.asarray(image)
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=2)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"PPM needs an (H, W, 3) image, got {img.shape}")
    h, w = img.shape[:2]
    _check_side(w, h)
    return f"P6\n{w} {h}\n255\n".encode("ascii") + quantize(img).tobytes()


def decode_ppm(data: bytes) -> np.ndarray:
    if data[:2] != b"P6":
        raise BadMagicError(f"expected P6, found {data[:2]!r}")
    pos = 2
    fields = []
    for _ in range(3):
        m = _PNM_TOKEN.match(data, pos)
        if not m:
            raise TruncatedError("PPM header ends early")
        fields.append(m.group(1))
        pos = m.end()
    try:
        w, h, maxval = (int(f) for f in fields)
    except ValueError:
        raise FormatError(f"bad PPM header fields {fields!r}") from None
    if maxval != 255:
        raise FormatError(f"only 8-bit PPM is supported, maxval {maxval}")
    _check_side(w, h)
    pos += 1  # single whitespace byte before the raster
    raw = _payload(data, pos, np.uint8, w * h * 3)
    return raw.reshape(h, w, 3).astype(np.float64) / 255.0


def write_ppm(path, image) -> None:
    atomic_write(path, encode_ppm(image))


def read_ppm(path) -> np.ndarray:
    return decode_ppm(_read(path))


# PFM (little-endian, scale -1.0) ---------------------------------------------

def encode_pfm(image) -> bytes:
    """Encode an (H, W) or (H, W, 3) float image; rows are stored bottom-up."""
    img = np.asarray(image, dtype="<f4")
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[..., 0]
    if img.ndim == 2:
        tag = "Pf"
    elif img.ndim == 3 and img.shape[2] == 3:
        tag = "PF"
    else:
        raise ValueError(f"PFM needs (H, W) or (H, W, 3), got {img.shape}")
    h, w = img.shape[:2]
    _check_side(w, h)
    return f"{tag}\n{w} {h}\n-1.0\n".encode("ascii") + np.ascontiguousarray(img[::-1]).tobytes()


def decode_pfm(data: bytes) -> np.ndarray:
    tag = data[:2]
    if tag not in (b"Pf", b"PF"):
        raise BadMagicError(f"expected Pf or PF, found {tag!r}")
    pos = 2
    fields = []
    for _ in range(3):
        m = _PNM_TOKEN.match(data, pos)
        if not m:
            raise TruncatedError("PFM header ends early")
        fields.append(m.group(1))
        pos = m.end()
    try:
        w, h = int(fields[0]), int(fields[1])
        scale = float(fields[2])
    except ValueError:
        raise FormatError(f"bad PFM header fields {fields!r}") from None
    if scale >= 0:
        raise FormatError("only little-endian PFM (negative scale) is supported")
    _check_side(w, h)
    pos += 1
    channels = 3 if tag == b"PF" else 1
    raw = _payload(data, pos, "<f4", w * h * channels)
    img = raw.reshape((h, w, 3) if channels == 3 else (h, w))[::-1]
    return img.astype(np.float32)


def write_pfm(path, image) -> None:
    atomic_write(path, encode_pfm(image))


def read_pfm(path) -> np.ndarray:
    return decode_pfm(_read(path))


# FLW3 flow ----------------------------------------------------------------------

_FLOW_DTYPE = np.dtype([("dx", "<f4"), ("dy", "<f4"), ("dz", "<f4"), ("valid", "u1")])


def encode_flow(flow: FlowField) -> bytes:
    _check_side(flow.width, flow.height)
    rec = np.zeros((flow.height, flow.width), dtype=_FLOW_DTYPE)
    rec["dx"] = flow.vectors[..., 0]
    rec["dy"] = flow.vectors[..., 1]
    rec["dz"] = flow.vectors[..., 2]
    rec["valid"] = flow.valid
    return b"FLW3" + struct.pack("<II", flow.width, flow.height) + rec.tobytes()


def decode_flow(data: bytes) -> FlowField:
    _magic(data, b"FLW3")
    w, h = _header(data, "<II")
    _check_side(w, h)
    rec = _payload(data, 12, _FLOW_DTYPE, w * h).reshape(h, w)
    vectors = np.stack([rec["dx"], rec["dy"], rec["dz"]], axis=-1).astype(np.float64)
    return FlowField(w, h, vectors, rec["valid"] != 0)


def write_flow(path, flow: FlowField) -> None:
    atomic_write(path, encode_flow(flow))


def read_flow(path) -> FlowField:
    return decode_flow(_read(path))


# FMAP feature map ----------------------------------------------------------------

def encode_fmap(fmap) -> bytes:
    a = np.asarray(fmap, dtype="<f4")
    if a.ndim == 2:
        a = a[..., None]
    if a.ndim != 3:
        raise ValueError(f"feature map must be (H, W, C), got {a.shape}")
    h, w, c = a.shape
    _check_side(w, h)
    return b"FMAP" + struct.pack("<III", h, w, c) + np.ascontiguousarray(a).tobytes()


def decode_fmap(data: bytes) -> np.ndarray:
    _magic(data, b"FMAP")
    h, w, c = _header(data, "<III")
    _check_side(w, h)
    return _payload(data, 16, "<f4", h * w * c).reshape(h, w, c).copy()


def write_fmap(path, fmap) -> None:
    atomic_write(path, encode_fmap(fmap))


def read_fmap(path) -> np.ndarray:
    return decode_fmap(_read(path))


# MM3D morphable model and COEF coefficients --------------------------------------

def encode_model(model: MorphableModel) -> bytes:
    n, m = model.n_vertices, len(model.triangles)
    parts = [
        b"MM3D",
        struct.pack("<IIII", n, m, model.k_id, model.k_exp),
        model.mean_shape.astype("<f4").tobytes(),
        model.id_basis.astype("<f4").tobytes(),
        model.exp_basis.astype("<f4").tobytes(),
        model.triangles.astype("<u4").tobytes(),
    ]
    return b"".join(parts)


def decode_model(data: bytes) -> MorphableModel:
    _magic(data, b"MM3D")
    n, m, k_id, k_exp = _header(data, "<IIII")
    floats = 3 * n * (1 + k_id + k_exp)
    need = 20 + 4 * floats + 12 * m
    if len(data) < need:
        raise TruncatedError(f"model needs {need} bytes, file has {len(data)}")
    if len(data) > need:
        raise FormatError(f"{len(data) - need} trailing bytes after model")
    f = np.frombuffer(data, dtype="<f4", count=floats, offset=20).astype(np.float64)
    mean = f[: 3 * n].reshape(n, 3)
    id_basis = f[3 * n : 3 * n * (1 + k_id)].reshape(3 * n, k_id)
    exp_basis = f[3 * n * (1 + k_id) :].reshape(3 * n, k_exp)
    tris = np.frombuffer(data, dtype="<u4", count=3 * m, offset=20 + 4 * floats).reshape(m, 3)
    try:
        return MorphableModel(mean, id_basis, exp_basis, tris.astype(np.int64))
    except ValueError as err:
        raise FormatError(str(err)) from None


def write_model(path, model: MorphableModel) -> None:
    atomic_write(path, encode_model(model))


def read_model(path) -> MorphableModel:
    return decode_model(_read(path))


def encode_coefficients(c: Coefficients) -> bytes:
    return (
        b"COEF"
        + struct.pack("<II", len(c.alpha_id), len(c.alpha_exp))
        + c.alpha_id.astype("<f4").tobytes()
        + c.alpha_exp.astype("<f4").tobytes()
    )


def decode_coefficients(data: bytes) -> Coefficients:
    _magic(data, b"COEF")
    k_id, k_exp = _header(data, "<II")
    f = _payload(data, 12, "<f4", k_id + k_exp).astype(np.float64)
    return Coefficients(f[:k_id], f[k_id:])


def write_coefficients(path, c: Coefficients) -> None:
    atomic_write(path, encode_coefficients(c))


def read_coefficients(path) -> Coefficients:
    return decode_coefficients(_read(path))


# OBJ subset ----------------------------------------------------------------------

def parse_obj(text: str) -> Mesh:
    """Parse ``v x y z`` and ``f i j k`` lines (1-based); blank and ``#`` lines are skipped."""
    verts, faces = [], []
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        try:
            if parts[0] == "v" and len(parts) == 4:
                verts.append([float(p) for p in parts[1:]])
                continue
            if parts[0] == "f" and len(parts) == 4:
                faces.append([int(p) - 1 for p in parts[1:]])
                continue
        except ValueError:
            pass
        raise FormatError(f"OBJ line {n}: unsupported or malformed {raw!r}")
    v = np.array(verts, dtype=np.float64).reshape(-1, 3)
    f = np.array(faces, dtype=np.int64).reshape(-1, 3)
    if f.size and (f.min() < 0 or f.max() >= len(v)):
        raise FormatError(f"OBJ face index out of range for {len(v)} vertices")
    return Mesh(v, f)


def format_obj(mesh: Mesh) -> str:
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    lines += [f"f {i + 1} {j + 1} {k + 1}" for i, j, k in mesh.triangles.tolist()]
    return "\n".join(lines) + "\n"


def read_obj(path) -> Mesh:
    return parse_obj(_read(path).decode("utf-8"))


def write_obj(path, mesh: Mesh) -> None:
    atomic_write(path, format_obj(mesh).encode("utf-8"))


# Camera pose (JSON) and per-vertex texture (text) --------------------------------

def pose_to_json(pose: CameraPose) -> str:
    return json.dumps(
        {"scale": pose.scale, "rotation": pose.rotation.tolist(), "translation": pose.translation.tolist()},
        indent=2,
    ) + "\n"


def pose_from_json(text: str) -> CameraPose:
    try:
        d = json.loads(text)
        return CameraPose(float(d["scale"]), np.array(d["rotation"], dtype=float), np.array(d["translation"], dtype=float))
    except (KeyError, TypeError, ValueError) as err:
        raise FormatError(f"bad pose: {err}") from None


def read_pose(path) -> CameraPose:
    return pose_from_json(_read(path).decode("utf-8"))


def write_pose(path, pose: CameraPose) -> None:
    atomic_write(path, pose_to_json(pose).encode("utf-8"))


def format_texture(colors) -> str:
    return "".join(f"{r!r} {g!r} {b!r}\n" for r, g, b in np.asarray(colors, dtype=float).tolist())


def parse_texture(text: str) -> np.ndarray:
    """One ``r g b`` line per vertex, values in [0, 1]."""
    rows = []
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            vals = [float(p) for p in line.split()]
        except ValueError:
            vals = []
        if len(vals) != 3:
            raise FormatError(f"texture line {n}: expected three floats, got {raw!r}")
        rows.append(vals)
    colors = np.array(rows, dtype=np.float64).reshape(-1, 3)
    if np.any((colors < 0) | (colors > 1)):
        raise FormatError("texture colors must lie in [0, 1]")
    return colors


def read_texture(path) -> np.ndarray:
    return parse_texture(_read(path).decode("utf-8"))


def write_texture(path, colors) -> None:
    atomic_write(path, format_texture(colors).encode("utf-8"))

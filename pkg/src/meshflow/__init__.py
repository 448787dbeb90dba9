"""Mesh-derived optical flow and temporal-consistency tooling for 3DMM face video editing."""

from .flow import FlowField, FramePair, dense_flow
from .model3d import CameraPose, Coefficients, Mesh, MorphableModel, project, recombine, reconstruct
from .raster import RasterBuffers, appearance_hint, facial_mask, rasterize
from .temporal import photometric_error, temporal_error, temporal_loss, warp

__all__ = [
    "CameraPose",
    "Coefficients",
    "FlowField",
    "FramePair",
    "Mesh",
    "MorphableModel",
    "RasterBuffers",
    "appearance_hint",
    "dense_flow",
    "facial_mask",
    "photometric_error",
    "project",
    "rasterize",
    "recombine",
    "reconstruct",
    "temporal_error",
    "temporal_loss",
    "warp",
]

__version__ = "0.1.0"

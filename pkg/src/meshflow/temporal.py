"""Backward warping and the warped-residual temporal metrics."""

from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np

from .flow import FlowField


class PairLoss(NamedTuple):
    loss: float
    valid: int


def _image(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    return a[..., None] if a.ndim == 2 else a


def bilinear(image: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Bilinear samples of an (H, W, C) image at in-bounds points."""
    h, w = image.shape[:2]
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = (xs - x0)[:, None]
    fy = (ys - y0)[:, None]
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    top = image[y0, x0] * (1 - fx) + image[y0, x1] * fx
    bottom = image[y1, x0] * (1 - fx) + image[y1, x1] * fx
    return top * (1 - fy) + bottom * fy


def warp(image_tm1, flow: FlowField) -> tuple[np.ndarray, np.ndarray]:
    """Pull frame t-1 into frame t's pixel grid along the flow.

    Output pixel (x, y) is frame t-1 sampled at ``(x - dx, y - dy)``.  Pixels
    with invalid flow or a sample point off the image come back black and
    flagged False.
    """
    img = _image(image_tm1)
    squeeze = np.ndim(image_tm1) == 2
    h, w = img.shape[:2]
    if (h, w) != (flow.height, flow.width):
        raise ValueError(f"image {w}x{h} does not match flow {flow.width}x{flow.height}")
    ys, xs = np.nonzero(flow.valid)
    sx = xs - flow.vectors[ys, xs, 0]
    sy = ys - flow.vectors[ys, xs, 1]
    inb = (sx >= 0) & (sx <= w - 1) & (sy >= 0) & (sy <= h - 1)
    ys, xs, sx, sy = ys[inb], xs[inb], sx[inb], sy[inb]
    out = np.zeros_like(img)
    out[ys, xs] = bilinear(img, sx, sy)
    valid = np.zeros((h, w), dtype=bool)
    valid[ys, xs] = True
    return (out[..., 0] if squeeze else out), valid


def pair_loss(y_t, y_tm1, flow: FlowField) -> PairLoss:
    """Masked warped MSE between frame t and the warped frame t-1, with its pixel count."""
    a = _image(y_t)
    b = _image(y_tm1)
    if a.shape != b.shape:
        raise ValueError(f"frame shapes differ: {a.shape} vs {b.shape}")
    warped, valid = warp(b, flow)
    n = int(valid.sum())
    if n == 0:
        return PairLoss(0.0, 0)
    diff = a[valid] - warped[valid]
    return PairLoss(float(np.mean(diff * diff)), n)


def temporal_loss(y_t, y_tm1, flow: FlowField) -> float:
    return pair_loss(y_t, y_tm1, flow).loss


def sequence_losses(frames: Sequence, flows: Sequence[FlowField]) -> list[PairLoss]:
    """Per-pair losses; ``flows[k]`` maps frame k+1 back to frame k."""
    if len(frames) < 2:
        raise ValueError("need at least two frames")
    if len(flows) != len(frames) - 1:
        raise ValueError(f"{len(frames)} frames need {len(frames) - 1} flows, got {len(flows)}")
    return [pair_loss(frames[k + 1], frames[k], flows[k]) for k in range(len(flows))]


def temporal_error(frames: Sequence, flows: Sequence[FlowField]) -> float:
    """Unweighted mean of the pairwise temporal losses over a sequence."""
    losses = sequence_losses(frames, flows)
    return float(np.mean([p.loss for p in losses]))


def photometric_error(output, ground_truth) -> float:
    a = np.asarray(output, dtype=np.float64)
    b = np.asarray(ground_truth, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a - b)))


def format_report(losses: Sequence[PairLoss]) -> str:
    """Line records ``pair=<k> valid=<n> l_tmp=<x>`` followed by ``e_tmp=<x>``."""
    lines = [f"pair={k} valid={p.valid} l_tmp={p.loss!r}" for k, p in enumerate(losses, start=1)]
    e = float(np.mean([p.loss for p in losses])) if losses else 0.0
    lines.append(f"e_tmp={e!r}")
    return "\n".join(lines) + "\n"

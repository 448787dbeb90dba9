"""Normalization and loss arithmetic on dense (H, W, C) feature maps.

Covers AdaIN, the mask-partitioned bidirectional variant, the resampling used
to bring masks and embeddings to feature resolution, and the loss terms that
are combined into the training objective.  No network is involved; every
function is plain numpy on arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

ADAIN_EPS = 1e-5


class LossMode(str, Enum):
    video = "video"
    image = "image"


class AdversarialForm(str, Enum):
    hinge = "hinge"
    log = "log"


@dataclass(frozen=True)
class BsnParams:
    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.alpha, dtype=np.float64))
        b = np.atleast_1d(np.asarray(self.beta, dtype=np.float64))
        if a.shape != b.shape or a.ndim != 1:
            raise ValueError("alpha and beta must be vectors of equal length")
        if np.any((a < 0) | (a > 1)) or np.any((b < 0) | (b > 1)):
            raise ValueError("alpha and beta entries must lie in [0, 1]")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)

    @classmethod
    def initial(cls, channels: int) -> "BsnParams":
        """Starting values used before any training: alpha 0.8, beta 0.1."""
        return cls(np.full(channels, 0.8), np.full(channels, 0.1))


@dataclass(frozen=True)
class LossWeights:
    w_adv: float = 10.0
    w_app: float = 1.0
    w_rec: float = 10.0
    w_tmp: float = 5.0

    def __post_init__(self):
        for name in ("w_adv", "w_app", "w_rec", "w_tmp"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


def _fmap(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[..., None]
    if x.ndim != 3:
        raise ValueError(f"feature map must be (H, W, C), got shape {x.shape}")
    return x


def channel_stats(x) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel mean and population standard deviation over all positions."""
    x = _fmap(x)
    return x.mean(axis=(0, 1)), x.std(axis=(0, 1))


def adain(a, b, eps: float = ADAIN_EPS) -> np.ndarray:
    """Give ``a`` the per-channel mean and spread of ``b``."""
    a, b = _fmap(a), _fmap(b)
    if a.shape[2] != b.shape[2]:
        raise ValueError(f"channel counts differ: {a.shape[2]} vs {b.shape[2]}")
    mu_a, sd_a = channel_stats(a)
    mu_b, sd_b = channel_stats(b)
    return sd_b * (a - mu_a) / (sd_a + eps) + mu_b


def bsn(x, q, h, params: BsnParams, eps: float = ADAIN_EPS) -> np.ndarray:
    """Bidirectional spatial-aware normalization.

    ``h`` is the (H, W) facial soft mask at feature resolution; ``q`` the
    appearance embedding already resized to ``x``.  Statistics of each AdaIN
    call run over the whole map, masked-out zeros included.
    """
    x, q = _fmap(x), _fmap(q)
    h = np.asarray(h, dtype=np.float64)
    if h.ndim == 3 and h.shape[2] == 1:
        h = h[..., 0]
    if x.shape != q.shape:
        raise ValueError(f"x {x.shape} and q {q.shape} differ")
    if h.shape != x.shape[:2]:
        raise ValueError(f"mask {h.shape} does not match feature size {x.shape[:2]}")
    c = x.shape[2]
    if params.alpha.shape[0] not in (1, c):
        raise ValueError(f"params have {params.alpha.shape[0]} channels, features have {c}")
    alpha, beta = params.alpha, params.beta
    face = h[..., None]
    back = 1.0 - face
    transfer = alpha * adain(x * face, q * back, eps) + beta * adain(x * back, q * face, eps)
    retain = (1 - alpha) * (x * face) + (1 - beta) * (x * back)
    return transfer + retain


def _area_weights(src: int, dst: int) -> np.ndarray:
    # row i holds the overlap of target cell i with each source cell, normalized
    edges = np.linspace(0.0, src, dst + 1)
    lo = np.arange(src)[None, :]
    overlap = np.clip(np.minimum(edges[1:, None], lo + 1) - np.maximum(edges[:-1, None], lo), 0, None)
    return overlap / overlap.sum(axis=1, keepdims=True)


def downsample_mask(mask, target_h: int, target_w: int) -> np.ndarray:
    """Area-average a binary (H, W) mask down to the target size."""
    m = np.asarray(mask, dtype=np.float64)
    if m.ndim == 3 and m.shape[2] == 1:
        m = m[..., 0]
    h, w = m.shape
    if target_h > h or target_w > w or target_h < 1 or target_w < 1:
        raise ValueError(f"cannot downsample {h}x{w} to {target_h}x{target_w}")
    out = _area_weights(h, target_h) @ m @ _area_weights(w, target_w).T
    return np.clip(out, 0.0, 1.0)


def _linear_weights(src: int, dst: int) -> np.ndarray:
    if src == 1:
        return np.ones((dst, 1))
    pos = np.linspace(0.0, src - 1, dst)
    i0 = np.minimum(np.floor(pos).astype(int), src - 2)
    frac = pos - i0
    wts = np.zeros((dst, src))
    wts[np.arange(dst), i0] = 1 - frac
    wts[np.arange(dst), i0 + 1] += frac
    return wts


def upsample_embedding(p, target_h: int, target_w: int) -> np.ndarray:
    """Corner-aligned bilinear upsampling of an (H, W, C) map."""
    p = _fmap(p)
    h, w, _ = p.shape
    if target_h < h or target_w < w:
        raise ValueError(f"cannot upsample {h}x{w} to {target_h}x{target_w}")
    rows = _linear_weights(h, target_h)
    cols = _linear_weights(w, target_w)
    return np.einsum("ih,hwc,jw->ijc", rows, p, cols)


def appearance_loss(e_y, e_xp) -> float:
    a, b = np.asarray(e_y, dtype=np.float64), np.asarray(e_xp, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"embedding shapes differ: {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a - b)))


def reconstruction_loss(y, x_i, mode: LossMode | str = LossMode.video) -> float:
    """L1 gap to the identity frame; zero for image-mode samples, which lack ground truth."""
    if LossMode(mode) is LossMode.image:
        return 0.0
    a, b = np.asarray(y, dtype=np.float64), np.asarray(x_i, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a - b)))


def adversarial_loss(
    real_scores: Sequence, fake_scores: Sequence, form: AdversarialForm | str = AdversarialForm.hinge
) -> tuple[float, float]:
    """Discriminator and generator losses averaged over discriminator scales.

    Hinge: ``d = mean(relu(1 - real)) + mean(relu(1 + fake))``, ``g = -mean(fake)``.
    Log: scores are probabilities; ``d = -(mean log real + mean log(1 - fake))``
    and ``g = mean log(1 - fake)``, the minimax objective the generator lowers.
    """
    form = AdversarialForm(form)
    if len(real_scores) == 0 or len(real_scores) != len(fake_scores):
        raise ValueError("need equal, nonzero numbers of real and fake score maps")
    d_terms, g_terms = [], []
    for real, fake in zip(real_scores, fake_scores):
        real = np.asarray(real, dtype=np.float64)
        fake = np.asarray(fake, dtype=np.float64)
        if form is AdversarialForm.hinge:
            d_terms.append(np.mean(np.maximum(0.0, 1.0 - real)) + np.mean(np.maximum(0.0, 1.0 + fake)))
            g_terms.append(-np.mean(fake))
        else:
            if np.any((real <= 0) | (real >= 1)) or np.any((fake <= 0) | (fake >= 1)):
                raise ValueError("log form needs scores strictly inside (0, 1)")
            d_terms.append(-(np.mean(np.log(real)) + np.mean(np.log1p(-fake))))
            g_terms.append(np.mean(np.log1p(-fake)))
    return float(np.mean(d_terms)), float(np.mean(g_terms))


def total_loss(adv: float, app: float, rec: float, tmp: float, w: LossWeights | None = None) -> float:
    """Weighted sum of the four terms; defaults to weights 10, 1, 10, 5."""
    w = w or LossWeights()
    return w.w_adv * adv + w.w_app * app + w.w_rec * rec + w.w_tmp * tmp

"""Mixed image/video training-sample selection.

Each draw flips a biased coin: with probability ``sigma`` it builds an
image-mode tuple from three different still images (each pair is the same
image twice); otherwise it picks one video clip and takes three
consecutive-frame pairs from it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable

import numpy as np


class Mode(str, Enum):
    video = "video"
    image = "image"


class CatalogError(ValueError):
    pass


@dataclass(frozen=True)
class VideoClip:
    clip_id: str
    identity_id: str
    frame_count: int

    def __post_init__(self):
        if self.frame_count < 2:
            raise CatalogError(f"clip {self.clip_id} needs at least 2 frames, has {self.frame_count}")


@dataclass(frozen=True)
class DatasetCatalog:
    video_clips: tuple[VideoClip, ...] = ()
    image_ids: tuple[str, ...] = ()

    def clip(self, clip_id: str) -> VideoClip | None:
        for c in self.video_clips:
            if c.clip_id == clip_id:
                return c
        return None


@dataclass(frozen=True)
class FrameRef:
    """A video frame (``frame`` set) or a still image (``frame`` is None)."""

    source: str
    frame: int | None = None

    def __str__(self) -> str:
        return self.source if self.frame is None else f"{self.source}:{self.frame}"


@dataclass(frozen=True)
class RefPair:
    ref_t: FrameRef
    ref_tm1: FrameRef

    def __str__(self) -> str:
        return f"{self.ref_t},{self.ref_tm1}"


@dataclass(frozen=True)
class SampleTuple:
    mode: Mode
    identity_pair: RefPair
    pose_pair: RefPair
    expression_pair: RefPair
    pairs: tuple[RefPair, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "pairs", (self.identity_pair, self.pose_pair, self.expression_pair))

    def to_record(self) -> str:
        return (
            f"mode={self.mode.value} identity={self.identity_pair} "
            f"pose={self.pose_pair} expression={self.expression_pair}"
        )


def parse_catalog(lines: Iterable[str]) -> DatasetCatalog:
    """Read ``clip <id> <identity> <frames>`` and ``image <id>`` lines."""
    clips, images = [], []
    for n, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "clip" and len(parts) == 4:
            try:
                frames = int(parts[3])
            except ValueError:
                raise CatalogError(f"line {n}: frame count {parts[3]!r} is not an integer") from None
            clips.append(VideoClip(parts[1], parts[2], frames))
        elif parts[0] == "image" and len(parts) == 2:
            images.append(parts[1])
        else:
            raise CatalogError(f"line {n}: cannot parse {raw.rstrip()!r}")
    return DatasetCatalog(tuple(clips), tuple(images))


def read_catalog(path: str | Path) -> DatasetCatalog:
    with open(path, encoding="utf-8") as fh:
        return parse_catalog(fh)


def format_catalog(catalog: DatasetCatalog) -> str:
    out = [f"clip {c.clip_id} {c.identity_id} {c.frame_count}" for c in catalog.video_clips]
    out += [f"image {i}" for i in catalog.image_ids]
    return "\n".join(out) + "\n"


def draw(catalog: DatasetCatalog, sigma: float, rng: np.random.Generator | int | None = None) -> SampleTuple:
    """Draw one training tuple.  An integer ``rng`` is used as a seed."""
    if not 0.0 <= sigma <= 1.0:
        raise ValueError(f"sigma must be in [0, 1], got {sigma}")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    if rng.random() < sigma:
        if len(catalog.image_ids) < 3:
            raise CatalogError(f"image mode needs 3 images, catalog has {len(catalog.image_ids)}")
        picks = rng.choice(len(catalog.image_ids), size=3, replace=False)
        pairs = [RefPair(FrameRef(catalog.image_ids[i]), FrameRef(catalog.image_ids[i])) for i in picks]
        return SampleTuple(Mode.image, *pairs)
    if not catalog.video_clips:
        raise CatalogError("video mode needs at least one clip")
    clip = catalog.video_clips[rng.integers(len(catalog.video_clips))]
    ts = rng.integers(1, clip.frame_count, size=3)
    pairs = [RefPair(FrameRef(clip.clip_id, int(t)), FrameRef(clip.clip_id, int(t) - 1)) for t in ts]
    return SampleTuple(Mode.video, *pairs)


def draw_many(catalog: DatasetCatalog, sigma: float, count: int, seed: int | None = None) -> list[SampleTuple]:
    rng = np.random.default_rng(seed)
    return [draw(catalog, sigma, rng) for _ in range(count)]


def validate(sample: SampleTuple, catalog: DatasetCatalog) -> list[str]:
    """List every way ``sample`` breaks the tuple rules; empty when it is well formed."""
    problems = []
    if sample.mode is Mode.video:
        sources = {p.ref_t.source for p in sample.pairs} | {p.ref_tm1.source for p in sample.pairs}
        if len(sources) != 1:
            problems.append(f"video tuple spans several clips: {sorted(sources)}")
        for name, pair in zip(("identity", "pose", "expression"), sample.pairs):
            clip = catalog.clip(pair.ref_t.source)
            if clip is None:
                problems.append(f"{name}: unknown clip {pair.ref_t.source!r}")
                continue
            t, tm1 = pair.ref_t.frame, pair.ref_tm1.frame
            if t is None or tm1 is None:
                problems.append(f"{name}: video reference without a frame index")
                continue
            if not (0 <= tm1 and t < clip.frame_count):
                problems.append(f"{name}: frames {tm1},{t} outside clip of {clip.frame_count}")
            if t - tm1 != 1:
                problems.append(f"{name}: frames {tm1},{t} are not consecutive")
    else:
        known = set(catalog.image_ids)
        for name, pair in zip(("identity", "pose", "expression"), sample.pairs):
            if pair.ref_t != pair.ref_tm1:
                problems.append(f"{name}: image pair must repeat one image, got {pair}")
            for ref in (pair.ref_t, pair.ref_tm1):
                if ref.frame is not None or ref.source not in known:
                    problems.append(f"{name}: {ref} is not a catalog image")
        ids = {p.ref_t.source for p in sample.pairs}
        if len(ids) != 3:
            problems.append("image tuple must use three distinct identities")
    return problems

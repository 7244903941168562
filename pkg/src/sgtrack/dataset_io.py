"""Paired RGB/thermal sequences: ground-truth files, manifests, frames and a
synthetic sequence generator.

Ground-truth and result files hold one ``x,y,w,h`` line per frame, 0-based
pixel coordinates. A manifest is a ``key = value`` text file::

    name = walking01
    modality_dir.0 = visible
    modality_dir.1 = infrared
    groundtruth.0 = visible.txt
    groundtruth.1 = infrared.txt
    attributes = LI,PO
    frame_glob = *.png

Relative paths are resolved against the manifest's directory. Modality 0 is
the visible camera, modality 1 the thermal camera.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from PIL import Image

ATTRIBUTE_CODES = ("NO", "PO", "HO", "LI", "LR", "TC", "DEF", "FM", "SV", "MB", "CM", "BC")


class DatasetError(Exception):
    """Malformed or inconsistent sequence data."""


@dataclass(frozen=True)
class BoundingBox:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for v in (self.x, self.y, self.w, self.h):
            if not math.isfinite(v):
                raise ValueError(f"non-finite box coordinate in {self!r}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box width and height must be positive, got w={self.w}, h={self.h}")

    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2, self.y + self.h / 2)

    @property
    def area(self) -> float:
        return self.w * self.h

    @classmethod
    def from_center(cls, cx: float, cy: float, w: float, h: float) -> "BoundingBox":
        return cls(cx - w / 2, cy - h / 2, w, h)

    def translated(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self.x + dx, self.y + dy, self.w, self.h)

    def rescaled(self, factor: float) -> "BoundingBox":
        """Same center, both sides multiplied by `factor`."""
        cx, cy = self.center()
        return BoundingBox.from_center(cx, cy, self.w * factor, self.h * factor)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)


@dataclass
class SequenceManifest:
    name: str
    modality_dirs: list[Path]
    groundtruth_paths: list[Path]
    attribute_tags: frozenset[str] = frozenset()
    frame_count: int = 0
    frame_glob: str = "*.png"

    def __post_init__(self):
        if len(self.modality_dirs) < 1:
            raise DatasetError(f"{self.name}: at least one modality is required")
        if len(self.modality_dirs) != len(self.groundtruth_paths):
            raise DatasetError(
                f"{self.name}: {len(self.modality_dirs)} modality dirs but "
                f"{len(self.groundtruth_paths)} ground-truth files"
            )
        unknown = set(self.attribute_tags) - set(ATTRIBUTE_CODES)
        if unknown:
            raise DatasetError(f"{self.name}: unknown attribute code(s) {sorted(unknown)}")

    @property
    def num_modalities(self) -> int:
        return len(self.modality_dirs)


@dataclass
class FramePair:
    """One time step: M aligned images (H x W or H x W x 3, float64 in [0, 255])."""

    images: list[np.ndarray]
    index: int

    def __post_init__(self):
        shapes = {im.shape[:2] for im in self.images}
        if len(shapes) != 1:
            raise DatasetError(f"frame {self.index}: modality sizes disagree {sorted(shapes)}")

    @property
    def size(self) -> tuple[int, int]:
        """(width, height)"""
        h, w = self.images[0].shape[:2]
        return w, h


# -- ground truth / results ------------------------------------------------

def parse_groundtruth(text: str) -> list[BoundingBox]:
    boxes = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.replace("\t", ",").split(",")
        if len(parts) != 4:
            raise DatasetError(f"line {lineno}: expected 4 comma-separated values, got {line!r}")
        try:
            x, y, w, h = (float(p) for p in parts)
        except ValueError:
            raise DatasetError(f"line {lineno}: non-numeric value in {line!r}") from None
        try:
            boxes.append(BoundingBox(x, y, w, h))
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    return boxes


def read_groundtruth(path) -> list[BoundingBox]:
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"missing ground-truth file: {path}")
    return parse_groundtruth(path.read_text(encoding="utf-8"))


def _fmt(v: float) -> str:
    if float(v).is_integer():
        return str(int(v))
    return repr(float(v))


def format_results(boxes: Sequence[BoundingBox]) -> str:
    return "".join(",".join(_fmt(v) for v in b.as_tuple()) + "\n" for b in boxes)


def write_results(path, boxes: Sequence[BoundingBox]) -> None:
    """Write boxes atomically (temp file + rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(format_results(boxes), encoding="utf-8")
    os.replace(tmp, path)


# -- manifests and frames --------------------------------------------------

def read_manifest(manifest_path) -> SequenceManifest:
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise DatasetError(f"missing manifest: {manifest_path}")
    root = manifest_path.parent
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(manifest_path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DatasetError(f"{manifest_path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        entries[key.strip()] = value.strip()

    dirs, gts = {}, {}
    for key, value in entries.items():
        if key.startswith("modality_dir."):
            dirs[int(key.split(".", 1)[1])] = root / value
        elif key.startswith("groundtruth."):
            gts[int(key.split(".", 1)[1])] = root / value
    if sorted(dirs) != list(range(len(dirs))) or sorted(gts) != list(range(len(gts))):
        raise DatasetError(f"{manifest_path}: modality indices must be 0..M-1")
    tags = frozenset(t.strip() for t in entries.get("attributes", "").split(",") if t.strip())
    manifest = SequenceManifest(
        name=entries.get("name", manifest_path.stem),
        modality_dirs=[dirs[i] for i in sorted(dirs)],
        groundtruth_paths=[gts[i] for i in sorted(gts)],
        attribute_tags=tags,
        frame_glob=entries.get("frame_glob", "*.png"),
    )
    return manifest


def write_manifest(path, manifest: SequenceManifest) -> None:
    path = Path(path)
    root = path.parent
    lines = [f"name = {manifest.name}"]
    for i, d in enumerate(manifest.modality_dirs):
        lines.append(f"modality_dir.{i} = {os.path.relpath(d, root)}")
    for i, g in enumerate(manifest.groundtruth_paths):
        lines.append(f"groundtruth.{i} = {os.path.relpath(g, root)}")
    lines.append(f"attributes = {','.join(sorted(manifest.attribute_tags))}")
    lines.append(f"frame_glob = {manifest.frame_glob}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_image(path, modality: int) -> np.ndarray:
    """Decode to float64; the visible modality as RGB, the others as gray."""
    with Image.open(path) as im:
        im = im.convert("RGB" if modality == 0 else "L")
        return np.asarray(im, dtype=np.float64)


def load_sequence(manifest_path):
    """Returns ``(manifest, frames, groundtruth)``.

    `frames` is a lazy iterator over FramePair in ascending index order;
    `groundtruth` holds one box list per modality.
    """
    manifest = read_manifest(manifest_path)
    frame_files = []
    for d in manifest.modality_dirs:
        if not d.is_dir():
            raise DatasetError(f"missing modality directory: {d}")
        files = sorted(d.glob(manifest.frame_glob))
        if not files:
            raise DatasetError(f"no frames matching {manifest.frame_glob!r} in {d}")
        frame_files.append(files)
    counts = {len(f) for f in frame_files}
    if len(counts) != 1:
        raise DatasetError(f"{manifest.name}: modalities have different frame counts {sorted(counts)}")
    manifest.frame_count = counts.pop()

    groundtruth = []
    for path in manifest.groundtruth_paths:
        boxes = read_groundtruth(path)
        if len(boxes) != manifest.frame_count:
            raise DatasetError(
                f"{path}: {len(boxes)} ground-truth lines but {manifest.frame_count} frames"
            )
        groundtruth.append(boxes)

    def frames() -> Iterator[FramePair]:
        for index, paths in enumerate(zip(*frame_files)):
            yield FramePair([load_image(p, m) for m, p in enumerate(paths)], index)

    return manifest, frames(), groundtruth


def save_frame(frame: FramePair, dirs: Sequence[Path], pattern: str = "{:05d}.png") -> None:
    for image, d in zip(frame.images, dirs):
        Image.fromarray(np.clip(np.rint(image), 0, 255).astype(np.uint8)).save(
            Path(d) / pattern.format(frame.index)
        )


# -- synthetic sequences ---------------------------------------------------

@dataclass
class MotionPath:
    """Linear motion of the target center with optional geometric growth.

    Frame k: center = start + k * velocity, size = target_size * growth**k.
    """

    start: tuple[float, float] = (60.0, 80.0)
    velocity: tuple[float, float] = (3.0, 0.0)
    growth: float = 1.0

    def center(self, k: int) -> tuple[float, float]:
        return (self.start[0] + k * self.velocity[0], self.start[1] + k * self.velocity[1])

    def scale(self, k: int) -> float:
        return self.growth ** k


@dataclass
class SyntheticConfig:
    frame_count: int = 100
    image_size: tuple[int, int] = (400, 160)  # (width, height)
    target_size: tuple[float, float] = (24.0, 24.0)
    motion_path: MotionPath = field(default_factory=MotionPath)
    rgb_contrast: float = 1.0
    thermal_contrast: float = 1.0
    noise_sigma: float = 4.0
    occlusion_intervals: list[tuple[int, int]] = field(default_factory=list)
    rng_seed: int = 0
    name: str = "synthetic"
    attributes: frozenset[str] = frozenset()

    def validate(self) -> None:
        if self.frame_count < 1:
            raise ValueError("frame_count must be >= 1")
        for c in (self.rgb_contrast, self.thermal_contrast):
            if not 0.0 <= c <= 1.0:
                raise ValueError(f"contrast {c} outside [0, 1]")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        W, H = self.image_size
        if self.target_size[0] > W or self.target_size[1] > H:
            raise ValueError("target does not fit inside the image")


@dataclass
class SyntheticSequence:
    manifest: SequenceManifest
    frames: list[FramePair]
    groundtruth: list[list[BoundingBox]]

    def save(self, out_dir) -> Path:
        """Write frames, ground truth and manifest under `out_dir`; returns the manifest path."""
        out = Path(out_dir)
        dirs = [out / "visible", out / "infrared"][: len(self.frames[0].images)]
        gts = [out / "visible.txt", out / "infrared.txt"][: len(dirs)]
        for d in dirs:
            d.mkdir(parents=True, exist_ok=True)
        for frame in self.frames:
            save_frame(frame, dirs)
        for boxes, g in zip(self.groundtruth, gts):
            write_results(g, boxes)
        manifest = SequenceManifest(
            name=self.manifest.name,
            modality_dirs=dirs,
            groundtruth_paths=gts,
            attribute_tags=self.manifest.attribute_tags,
            frame_count=len(self.frames),
        )
        path = out / "manifest.txt"
        write_manifest(path, manifest)
        return path


_MID_LEVEL = 128.0
_AMPLITUDE = 110.0
# signal levels in [-1, 1]: (background, target body, target outline) per channel
_PALETTE = {
    3: np.array([[-0.45, -0.35, -0.5], [0.75, -0.55, -0.15], [-0.9, -0.9, 0.65]]),
    1: np.array([[-0.5], [0.8], [0.25]]),
}
_DISTRACTOR = {3: np.array([0.1, 0.8, -0.8]), 1: np.array([-0.15])}


def generate_synthetic(cfg: SyntheticConfig) -> SyntheticSequence:
    """Render a deterministic two-modality sequence.

    Each modality is ``128 + 110 * contrast * signal + noise``, where the
    signal is a plain background with the target drawn as a rectangle of
    distinct intensity and a thin outline of a third intensity. Occlusion intervals (inclusive frame
    ranges) paste a distractor over the target; the ground truth keeps the
    true box. Both modalities share one ground truth.
    """
    cfg.validate()
    W, H = cfg.image_size
    channels = (3, 1)
    contrasts = (cfg.rgb_contrast, cfg.thermal_contrast)
    noise_rng = np.random.default_rng(cfg.rng_seed)

    boxes = []
    for k in range(cfg.frame_count):
        cx, cy = cfg.motion_path.center(k)
        sc = cfg.motion_path.scale(k)
        box = BoundingBox.from_center(cx, cy, cfg.target_size[0] * sc, cfg.target_size[1] * sc)
        if box.x < 0 or box.y < 0 or box.x + box.w > W or box.y + box.h > H:
            raise ValueError(f"frame {k}: target {box} leaves the {W}x{H} image")
        boxes.append(box)

    ys, xs = np.mgrid[0:H, 0:W]
    px, py = xs + 0.5, ys + 0.5
    frames = []
    for k, box in enumerate(boxes):
        inside = (px >= box.x) & (px < box.x + box.w) & (py >= box.y) & (py < box.y + box.h)
        border = max(1.0, round(min(box.w, box.h) / 12))
        body = ((px >= box.x + border) & (px < box.x + box.w - border)
                & (py >= box.y + border) & (py < box.y + box.h - border))
        occluded = any(a <= k <= b for a, b in cfg.occlusion_intervals)
        images = []
        for m, c in enumerate(channels):
            bg, tgt, outline = _PALETTE[c]
            signal = np.broadcast_to(bg, (H, W, c)).copy()
            if occluded:
                signal[inside] = _DISTRACTOR[c]
            else:
                signal[inside] = outline
                signal[body] = tgt
            img = _MID_LEVEL + _AMPLITUDE * contrasts[m] * signal
            if cfg.noise_sigma > 0:
                img = img + noise_rng.normal(0.0, cfg.noise_sigma, size=img.shape)
            img = np.clip(np.rint(img), 0, 255)
            images.append(img if c == 3 else img[..., 0])
        frames.append(FramePair(images, k))

    manifest = SequenceManifest(
        name=cfg.name,
        modality_dirs=[Path("visible"), Path("infrared")],
        groundtruth_paths=[Path("visible.txt"), Path("infrared.txt")],
        attribute_tags=frozenset(cfg.attributes),
        frame_count=cfg.frame_count,
    )
    return SyntheticSequence(manifest, frames, [list(boxes), list(boxes)])

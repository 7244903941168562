"""Patch grid, per-patch color/gradient histograms and the weighted joint
descriptor.

A box is resampled so its shorter side is 32 pixels, split into an 8 x 8
grid of non-overlapping patches (remainder pixels go to the last row and
column), and every patch gets an 8-bin histogram per color channel plus an
8-bin histogram of gradient magnitude. A 3-channel modality yields 32 rows
per patch, a gray one 16.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import map_coordinates

from .dataset_io import BoundingBox, FramePair

CANONICAL_SIDE = 32
GRID_ROWS = 8
GRID_COLS = 8
NUM_BINS = 8
# sampled intensities are rounded so bin edges are stable across sampling paths
_ROUND_DECIMALS = 6


@dataclass(frozen=True)
class PatchGrid:
    width: int  # canonical (scaled) box width in pixels
    height: int
    scale: float  # 32 / min(w, h) of the source box
    rows: int = GRID_ROWS
    cols: int = GRID_COLS

    @property
    def n(self) -> int:
        return self.rows * self.cols

    @property
    def col_edges(self) -> np.ndarray:
        return _edges(self.width, self.cols)

    @property
    def row_edges(self) -> np.ndarray:
        return _edges(self.height, self.rows)

    @property
    def col_widths(self) -> np.ndarray:
        return np.diff(self.col_edges)

    @property
    def row_heights(self) -> np.ndarray:
        return np.diff(self.row_edges)

    def patch_rects(self) -> list[tuple[int, int, int, int]]:
        """(x, y, w, h) of every patch in canonical pixels, row-major."""
        ce, re = self.col_edges, self.row_edges
        return [
            (int(ce[j]), int(re[i]), int(ce[j + 1] - ce[j]), int(re[i + 1] - re[i]))
            for i in range(self.rows)
            for j in range(self.cols)
        ]

    def patch_centers(self) -> np.ndarray:
        """(n, 2) centers in canonical pixels, row-major."""
        return np.array([(x + w / 2, y + h / 2) for x, y, w, h in self.patch_rects()])


def _edges(length: int, parts: int) -> np.ndarray:
    base = length // parts
    edges = np.arange(parts + 1) * base
    edges[-1] = length
    return edges


def build_patch_grid(box: BoundingBox, rows: int = GRID_ROWS, cols: int = GRID_COLS) -> PatchGrid:
    scale = CANONICAL_SIDE / min(box.w, box.h)
    width = max(int(round(box.w * scale)), cols)
    height = max(int(round(box.h * scale)), rows)
    return PatchGrid(width, height, scale, rows, cols)


def descriptor_dim(channels: int) -> int:
    return channels * NUM_BINS + NUM_BINS


# -- sampling --------------------------------------------------------------

def _as_channels(image: np.ndarray) -> np.ndarray:
    return image[..., None] if image.ndim == 2 else image


def sample_region(image: np.ndarray, x0: float, y0: float, sx: float, sy: float,
                  width: int, height: int) -> np.ndarray:
    """Resample an axis-aligned region, edge-replicated outside the image.

    Output pixel (v, u) is centered on source point
    ``(x0 + (u + 0.5) / sx - 0.5, y0 + (v + 0.5) / sy - 0.5)``. When
    shrinking (scale < 1) it averages a grid of ceil(1 / scale) x ceil(1 / scale)
    bilinear sub-samples spread over its footprint (at most 4 x 4), so
    histograms approximate area fractions. Returns (height, width, channels).
    """
    img = _as_channels(image)
    kx, ky = _supersampling(sx), _supersampling(sy)
    # kx x ky sub-samples per output pixel, averaged, when shrinking
    su = (np.arange(kx) + 0.5) / kx - 0.5
    sv = (np.arange(ky) + 0.5) / ky - 0.5
    u = x0 + ((np.arange(width)[:, None] + 0.5 + su[None, :]) / sx - 0.5).ravel()
    v = y0 + ((np.arange(height)[:, None] + 0.5 + sv[None, :]) / sy - 0.5).ravel()
    vv, uu = np.meshgrid(v, u, indexing="ij")
    out = np.empty((height, width, img.shape[2]))
    for c in range(img.shape[2]):
        fine = map_coordinates(img[..., c], [vv, uu], order=1, mode="nearest")
        out[..., c] = fine.reshape(height, ky, width, kx).mean(axis=(1, 3))
    return np.round(out, _ROUND_DECIMALS)


def _supersampling(scale: float) -> int:
    return int(min(4, max(1, np.ceil(1.0 / scale - 1e-9))))


def _gray(crops: np.ndarray) -> np.ndarray:
    if crops.shape[-1] == 1:
        return crops[..., 0]
    return np.round(crops @ np.array([0.299, 0.587, 0.114]), _ROUND_DECIMALS)


def _patch_neighbors(edges: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Previous/next index along one axis, replicated at patch borders."""
    length = edges[-1]
    idx = np.arange(length)
    prev, nxt = idx - 1, idx + 1
    prev[edges[:-1]] = edges[:-1]
    nxt[edges[1:] - 1] = edges[1:] - 1
    return prev, nxt


def _patch_index_map(grid: PatchGrid) -> np.ndarray:
    ri = np.repeat(np.arange(grid.rows), grid.row_heights)
    ci = np.repeat(np.arange(grid.cols), grid.col_widths)
    return ri[:, None] * grid.cols + ci[None, :]


def _histograms(bins: np.ndarray, patch_map: np.ndarray, n: int, counts: np.ndarray) -> np.ndarray:
    """bins: (N, H, W) ints in [0, 8). Returns (N, n, 8) L1-normalized histograms."""
    N = bins.shape[0]
    flat = (np.arange(N)[:, None, None] * n + patch_map[None]) * NUM_BINS + bins
    hist = np.bincount(flat.ravel(), minlength=N * n * NUM_BINS).reshape(N, n, NUM_BINS)
    return hist / counts[None, :, None]


def crop_features(crops: np.ndarray, grid: PatchGrid) -> np.ndarray:
    """Histogram features of a stack of canonical crops.

    crops: (N, height, width, channels) intensities in [0, 255].
    Returns (N, n, d) with d = channels * 8 + 8; per patch the channel
    histograms come first, the gradient histogram last.
    """
    N, H, W, C = crops.shape
    assert (H, W) == (grid.height, grid.width)
    n = grid.n
    pmap = _patch_index_map(grid)
    counts = np.outer(grid.row_heights, grid.col_widths).ravel().astype(float)

    blocks = []
    for c in range(C):
        bins = np.clip((crops[..., c] * (NUM_BINS / 256.0)).astype(np.int64), 0, NUM_BINS - 1)
        blocks.append(_histograms(bins, pmap, n, counts))

    gray = _gray(crops)
    rp, rn = _patch_neighbors(grid.row_edges)
    cp, cn = _patch_neighbors(grid.col_edges)
    gy = (gray[:, rn, :] - gray[:, rp, :]) / 2.0
    gx = (gray[:, :, cn] - gray[:, :, cp]) / 2.0
    mag = np.round(np.hypot(gx, gy), _ROUND_DECIMALS)
    # per-patch maximum, broadcast back to pixels
    pmax = np.maximum.reduceat(mag, grid.row_edges[:-1], axis=1)
    pmax = np.maximum.reduceat(pmax, grid.col_edges[:-1], axis=2).reshape(N, n)
    pix_max = pmax[:, pmap]
    safe = np.where(pix_max > 0, pix_max, 1.0)
    gbins = np.where(pix_max > 0, np.floor(mag / safe * NUM_BINS), 0).astype(np.int64)
    gbins = np.clip(gbins, 0, NUM_BINS - 1)
    blocks.append(_histograms(gbins, pmap, n, counts))
    return np.concatenate(blocks, axis=2)


def _check_overlap(frame: FramePair, box: BoundingBox) -> None:
    W, H = frame.size
    if box.x >= W or box.y >= H or box.x + box.w <= 0 or box.y + box.h <= 0:
        raise ValueError(f"box {box} lies fully outside the {W}x{H} frame")


def extract_features(frame: FramePair, grid: PatchGrid, box: BoundingBox) -> list[np.ndarray]:
    """Per-modality feature matrices X^m of shape (d_m, n).

    `box` is resampled onto the grid's canonical width x height, so a box of
    a different size than the one the grid was built from is resized
    (used by the scale pyramid).
    """
    _check_overlap(frame, box)
    sx, sy = grid.width / box.w, grid.height / box.h
    out = []
    for image in frame.images:
        crop = sample_region(image, box.x, box.y, sx, sy, grid.width, grid.height)
        out.append(crop_features(crop[None], grid)[0].T.copy())
    return out


def extract_translation_features(frame: FramePair, grid: PatchGrid, box: BoundingBox,
                                 offsets: np.ndarray) -> list[np.ndarray]:
    """Features for translated copies of `box` in one pass.

    offsets: (N, 2) integer shifts in canonical pixels. Returns per modality
    an (N, n, d_m) array; entry k equals ``extract_features`` of the box
    shifted by ``offsets[k] / (sx, sy)`` in frame pixels.
    """
    offsets = np.asarray(offsets, dtype=np.int64)
    sx, sy = grid.width / box.w, grid.height / box.h
    ox0, oy0 = offsets.min(axis=0)
    ox1, oy1 = offsets.max(axis=0)
    rw = grid.width + (ox1 - ox0)
    rh = grid.height + (oy1 - oy0)
    x0 = box.x + ox0 / sx
    y0 = box.y + oy0 / sy
    out = []
    for image in frame.images:
        region = sample_region(image, x0, y0, sx, sy, int(rw), int(rh))
        ys = (offsets[:, 1] - oy0)[:, None, None] + np.arange(grid.height)[None, :, None]
        xs = (offsets[:, 0] - ox0)[:, None, None] + np.arange(grid.width)[None, None, :]
        crops = region[ys, xs]
        out.append(crop_features(crops, grid))
    return out


def assemble_descriptor(features: list[np.ndarray], patch_weights: np.ndarray,
                        modality_weights: np.ndarray) -> np.ndarray:
    """Joint descriptor: modality-major, patch-major blocks r^m * s_i * x^m_i.

    `features` are (d_m, n) matrices, or (N, n, d_m) stacks for a batch of
    boxes, in which case an (N, D) array is returned.
    """
    s = np.asarray(patch_weights, dtype=float)
    r = np.asarray(modality_weights, dtype=float)
    if len(features) != r.shape[0]:
        raise ValueError(f"{len(features)} modalities but {r.shape[0]} modality weights")
    parts = []
    for X, rm in zip(features, r):
        if X.ndim == 2:
            d, n = X.shape
            if n != s.shape[0]:
                raise ValueError(f"{n} patches but {s.shape[0]} patch weights")
            parts.append((rm * X * s[None, :]).T.ravel())
        else:
            N, n, d = X.shape
            if n != s.shape[0]:
                raise ValueError(f"{n} patches but {s.shape[0]} patch weights")
            parts.append((rm * X * s[None, :, None]).reshape(N, n * d))
    return np.concatenate(parts, axis=-1)

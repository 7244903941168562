"""Online structured-SVM tracking on patch- and modality-weighted descriptors.

Per frame: translation by exhaustive scoring of a stride grid inside the
search window, scale by a small pyramid around the translated box, then a
confidence gate. Accepted frames refresh the patch/modality weights with
the graph solver and update the decision plane.

Scores blend the running plane with the one learned on the first frame:
``nu * <h, psi> + (1 - nu) * <h0, psi>``. The plane minimizes
``xi ||h||^2 + sum_y max(0, (1 - IoU(y_t, y)) - <h, psi(y_t) - psi(y)>)``
by dual coordinate ascent; h is kept as ``sum_k a_k eps_k / (2 xi)`` with
0 <= a_k <= 1 over stored difference vectors.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np

from . import features as feat
from .dataset_io import BoundingBox, FramePair
from .evaluation import iou
from .graph_learning import GraphState, SolverConfig, solve_joint


@dataclass
class TrackerParams:
    nu: float = 0.67
    theta: float = 0.35
    xi: float = 1e-4
    translation_stride: int = 2  # canonical pixels
    train_stride: int = 8
    scale_base: float = 1.05
    scale_count: int = 5
    support_budget: int = 100
    shrink_factor: float = 0.6
    radial_samples: int = 16
    radial_ious: tuple[float, ...] = (0.3, 0.5, 0.7, 0.9)
    init_passes: int = 200
    update_passes: int = 20

    def __post_init__(self):
        if not 0.0 <= self.nu <= 1.0:
            raise ValueError("nu must lie in [0, 1]")
        if not 0.0 < self.theta < 1.0:
            raise ValueError("theta must lie in (0, 1)")
        if self.scale_count < 1 or self.scale_count % 2 == 0:
            raise ValueError("scale_count must be odd")
        if self.scale_base <= 1.0:
            raise ValueError("scale_base must exceed 1")
        if not 0.0 < self.shrink_factor < 1.0:
            raise ValueError("shrink_factor must lie in (0, 1)")
        if self.xi <= 0 or self.translation_stride < 1 or self.train_stride < 1 or self.support_budget < 1:
            raise ValueError("xi, strides and support_budget must be positive")


# -- seeds and sampling ----------------------------------------------------

def init_seed_vector(grid: feat.PatchGrid, shrink_factor: float = 0.6) -> np.ndarray:
    """1 for patches whose center lies in the centered, shrunk box."""
    if not 0.0 < shrink_factor < 1.0:
        raise ValueError("shrink_factor must lie in (0, 1)")
    c = grid.patch_centers()
    half_w = shrink_factor * grid.width / 2
    half_h = shrink_factor * grid.height / 2
    inside = (np.abs(c[:, 0] - grid.width / 2) <= half_w) & (np.abs(c[:, 1] - grid.height / 2) <= half_h)
    return inside.astype(float)


def search_window_side(grid: feat.PatchGrid) -> float:
    return 2.0 * math.sqrt(grid.width * grid.height)


def translation_offsets(window_side: float, stride: int) -> np.ndarray:
    """Integer canonical offsets (dx, dy) on the stride grid, row-major."""
    k = int(math.floor(window_side / 2 / stride))
    steps = np.arange(-k, k + 1) * stride
    dy, dx = np.meshgrid(steps, steps, indexing="ij")
    return np.stack([dx.ravel(), dy.ravel()], axis=1)


def _offset_boxes(box: BoundingBox, grid: feat.PatchGrid, offsets: np.ndarray) -> list[BoundingBox]:
    sx, sy = grid.width / box.w, grid.height / box.h
    return [box.translated(dx / sx, dy / sy) for dx, dy in offsets]


def _inside_frame(boxes, frame_size) -> np.ndarray:
    W, H = frame_size
    return np.array([0 <= b.center()[0] < W and 0 <= b.center()[1] < H for b in boxes], dtype=bool)


def sample_translation_candidates(prev: BoundingBox, params: TrackerParams, frame_size,
                                  grid: feat.PatchGrid | None = None):
    """Boxes of the previous size centered on the stride grid of the search
    window, restricted to centers inside the frame. Returns (boxes, offsets)."""
    grid = grid or feat.build_patch_grid(prev)
    offsets = translation_offsets(search_window_side(grid), params.translation_stride)
    boxes = _offset_boxes(prev, grid, offsets)
    keep = _inside_frame(boxes, frame_size)
    if not keep.any():
        keep[len(boxes) // 2] = True  # the unshifted box
    return [b for b, k in zip(boxes, keep) if k], offsets[keep]


def scale_exponents(count: int) -> np.ndarray:
    half = (count - 1) // 2
    return np.arange(-half, half + 1)


def _radial_offsets(grid: feat.PatchGrid, params: TrackerParams) -> np.ndarray:
    """Integer canonical shifts in `radial_samples` directions, at distances
    giving the requested IoU levels in turn."""
    W, H = grid.width, grid.height
    out = []
    for k in range(params.radial_samples):
        ang = 2 * math.pi * k / params.radial_samples
        target = params.radial_ious[k % len(params.radial_ious)]
        ux, uy = math.cos(ang), math.sin(ang)

        def overlap(t):
            ix, iy = max(W - abs(t * ux), 0.0), max(H - abs(t * uy), 0.0)
            inter = ix * iy
            return inter / (2 * W * H - inter)

        lo, hi = 0.0, 2.0 * max(W, H)
        for _ in range(60):
            mid = (lo + hi) / 2
            lo, hi = (mid, hi) if overlap(mid) > target else (lo, mid)
        t = (lo + hi) / 2
        out.append((int(round(t * ux)), int(round(t * uy))))
    return np.array(out, dtype=np.int64)


# -- descriptors -----------------------------------------------------------

def normalize_descriptors(psi: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(psi, axis=-1, keepdims=True)
    return psi / np.where(norm > 0, norm, 1.0)


def weighted_descriptors(feats, s_hat, r) -> np.ndarray:
    """Unit-norm joint descriptors for single (d, n) or batched (N, n, d) features."""
    return normalize_descriptors(feat.assemble_descriptor(feats, s_hat, r))


# -- decision plane --------------------------------------------------------

@dataclass
class SupportVector:
    pattern: int  # frame the sample came from
    positive: np.ndarray  # psi(y_t)
    negative: np.ndarray  # psi(y)
    coef: float  # dual variable in [0, 1]
    overlap: float  # IoU(y_t, y)

    @property
    def diff(self) -> np.ndarray:
        return self.positive - self.negative

    @property
    def margin(self) -> float:
        return 1.0 - self.overlap


@dataclass
class DecisionPlane:
    h: np.ndarray
    h0: np.ndarray
    xi: float = 1e-4
    support_set: list[SupportVector] = field(default_factory=list)

    @classmethod
    def empty(cls, dim: int, xi: float = 1e-4) -> "DecisionPlane":
        return cls(np.zeros(dim), np.zeros(dim), xi)

    def positive_support(self) -> list[np.ndarray]:
        """One positive descriptor per pattern with an active support vector."""
        seen, out = set(), []
        for sv in self.support_set:
            if sv.coef > 0 and sv.pattern not in seen:
                seen.add(sv.pattern)
                out.append(sv.positive)
        return out

    def primal_objective(self, diffs: np.ndarray, margins: np.ndarray, h: np.ndarray | None = None) -> float:
        h = self.h if h is None else h
        return self.xi * float(h @ h) + hinge_loss(h, diffs, margins)

    def train(self, pattern: int, positive: np.ndarray, negatives: np.ndarray, overlaps: np.ndarray,
              passes: int, budget: int) -> None:
        """Add a structured sample set and run dual coordinate ascent over
        all stored support vectors, then enforce the budget."""
        for neg, ov in zip(negatives, overlaps):
            if 1.0 - ov > 1e-12 and np.any(neg != positive):
                self.support_set.append(SupportVector(pattern, positive, neg, 0.0, float(ov)))
        if not self.support_set:
            return
        D = np.array([sv.diff for sv in self.support_set])
        margins = np.array([sv.margin for sv in self.support_set])
        alpha = np.array([sv.coef for sv in self.support_set])
        sq = np.einsum("ij,ij->i", D, D)
        c = 1.0 / (2.0 * self.xi)
        h = c * (alpha @ D)
        for _ in range(passes):
            largest = 0.0
            for k in range(len(alpha)):
                if sq[k] == 0:
                    continue
                g = margins[k] - D[k] @ h
                new = min(max(alpha[k] + g / (c * sq[k]), 0.0), 1.0)
                step = new - alpha[k]
                if step != 0.0:
                    h += (c * step) * D[k]
                    alpha[k] = new
                    largest = max(largest, abs(step))
            if largest < 1e-10:
                break
        kept = []
        for sv, a in zip(self.support_set, alpha):
            sv.coef = float(a)
            if a > 0:
                kept.append(sv)
        self.support_set = kept
        self.h = c * (alpha[alpha > 0] @ D[alpha > 0]) if kept else np.zeros_like(self.h)
        self._enforce_budget(budget)

    def _enforce_budget(self, budget: int) -> None:
        c = 1.0 / (2.0 * self.xi)
        while len(self.support_set) > budget:
            # change of ||h||^2 when dropping sv k: ||h - v||^2 - ||h||^2, v = c a_k eps_k
            best, best_k = math.inf, 0
            for k, sv in enumerate(self.support_set):
                v = c * sv.coef * sv.diff
                change = abs(float(v @ v) - 2.0 * float(self.h @ v))
                if change < best:
                    best, best_k = change, k
            sv = self.support_set.pop(best_k)
            self.h = self.h - c * sv.coef * sv.diff


def hinge_loss(h: np.ndarray, diffs: np.ndarray, margins: np.ndarray) -> float:
    return float(np.maximum(0.0, margins - diffs @ h).sum())


def score_candidate(psi: np.ndarray, plane: DecisionPlane, nu: float) -> np.ndarray:
    if psi.shape[-1] != plane.h.shape[0]:
        raise ValueError(f"descriptor length {psi.shape[-1]} does not match plane {plane.h.shape[0]}")
    return nu * (psi @ plane.h) + (1.0 - nu) * (psi @ plane.h0)


def confidence(psi: np.ndarray, plane: DecisionPlane) -> float:
    """Mean inner product with the positive support vectors (0 if none)."""
    pos = plane.positive_support()
    if not pos:
        return 0.0
    return float(np.mean([p @ psi for p in pos]))


# -- tracker state and steps -----------------------------------------------

@dataclass
class TrackerState:
    box: BoundingBox
    s_hat: np.ndarray
    r: np.ndarray
    plane: DecisionPlane
    frame_index: int = 0
    graph: GraphState | None = None


@dataclass
class FrameLog:
    index: int
    box: BoundingBox
    score: float
    scale: float
    confidence: float
    updated: bool
    r: np.ndarray
    s_hat: np.ndarray
    objective_trace: list[float] = field(default_factory=list)


def _training_set(frame: FramePair, box: BoundingBox, grid: feat.PatchGrid, params: TrackerParams,
                  s_hat, r):
    offsets = translation_offsets(search_window_side(grid), params.train_stride)
    offsets = np.concatenate([offsets, _radial_offsets(grid, params)])
    offsets = np.unique(offsets, axis=0)
    offsets = offsets[np.any(offsets != 0, axis=1)]
    boxes = _offset_boxes(box, grid, offsets)
    keep = _inside_frame(boxes, frame.size)
    offsets = offsets[keep]
    boxes = [b for b, k in zip(boxes, keep) if k]
    all_offsets = np.concatenate([np.zeros((1, 2), dtype=np.int64), offsets])
    batch = feat.extract_translation_features(frame, grid, box, all_offsets)
    psi = weighted_descriptors(batch, s_hat, r)
    # pyramid scales around the box, so the plane also ranks sizes
    scaled = [box.rescaled(params.scale_base ** e) for e in scale_exponents(params.scale_count) if e != 0]
    if scaled:
        psi_scaled = np.array([weighted_descriptors(feat.extract_features(frame, grid, b), s_hat, r)
                               for b in scaled])
        psi = np.concatenate([psi, psi_scaled])
        boxes = boxes + scaled
    overlaps = np.array([iou(box, b) for b in boxes])
    return psi[0], psi[1:], overlaps, boxes


def refresh_weights(frame: FramePair, box: BoundingBox, params: TrackerParams, solver: SolverConfig):
    grid = feat.build_patch_grid(box)
    X = feat.extract_features(frame, grid, box)
    q = init_seed_vector(grid, params.shrink_factor)
    return solve_joint(X, q, solver)


def initialize(frame: FramePair, box: BoundingBox, params: TrackerParams | None = None,
               solver: SolverConfig | None = None) -> TrackerState:
    params = params or TrackerParams()
    solver = solver or SolverConfig()
    if min(box.w, box.h) < feat.GRID_ROWS:
        raise ValueError(f"box {box} is smaller than the {feat.GRID_ROWS}-patch grid")
    graph = refresh_weights(frame, box, params, solver)
    grid = feat.build_patch_grid(box)
    pos, negs, overlaps, _ = _training_set(frame, box, grid, params, graph.s_hat, graph.r)
    plane = DecisionPlane.empty(pos.shape[0], params.xi)
    plane.train(0, pos, negs, overlaps, params.init_passes, params.support_budget)
    plane.h0 = plane.h.copy()
    return TrackerState(box, graph.s_hat, graph.r, plane, frame.index, graph)


def estimate_translation(frame: FramePair, state: TrackerState, params: TrackerParams):
    """Best-scoring translated box; ties go to the first in row-major order.
    Returns (box, score)."""
    grid = feat.build_patch_grid(state.box)
    boxes, offsets = sample_translation_candidates(state.box, params, frame.size, grid)
    batch = feat.extract_translation_features(frame, grid, state.box, offsets)
    psi = weighted_descriptors(batch, state.s_hat, state.r)
    scores = score_candidate(psi, state.plane, params.nu)
    k = int(np.argmax(scores))
    return boxes[k], float(scores[k])


def estimate_scale(frame: FramePair, box: BoundingBox, state: TrackerState, params: TrackerParams):
    """Scale pyramid around `box`. Returns (box, factor, score, descriptor).

    Every region is resampled to the canonical size of `box`; candidates are
    visited with the unchanged scale first so ties keep the current size.
    """
    grid = feat.build_patch_grid(box)
    exps = scale_exponents(params.scale_count)
    exps = sorted(exps, key=lambda e: (abs(e), e))
    best = None
    for e in exps:
        b = params.scale_base ** e
        cand = box.rescaled(b) if e != 0 else box
        psi = weighted_descriptors(feat.extract_features(frame, grid, cand), state.s_hat, state.r)
        score = float(score_candidate(psi, state.plane, params.nu))
        if best is None or score > best[2]:
            best = (cand, float(b), score, psi)
    return best


def update_classifier(frame: FramePair, box: BoundingBox, state: TrackerState, params: TrackerParams,
                      passes: int | None = None) -> DecisionPlane:
    """Structured update around the accepted box; h0 is left untouched."""
    grid = feat.build_patch_grid(box)
    pos, negs, overlaps, _ = _training_set(frame, box, grid, params, state.s_hat, state.r)
    plane = state.plane
    plane.train(frame.index, pos, negs, overlaps, passes or params.update_passes, params.support_budget)
    return plane


def track_frame(frame: FramePair, state: TrackerState, params: TrackerParams | None = None,
                solver: SolverConfig | None = None):
    """Advance one frame. Returns (box, state, log)."""
    params = params or TrackerParams()
    solver = solver or SolverConfig()
    moved, _ = estimate_translation(frame, state, params)
    box, factor, score, psi = estimate_scale(frame, moved, state, params)
    conf = confidence(psi, state.plane)
    updated = conf > params.theta
    trace: list[float] = []
    if updated:
        graph = refresh_weights(frame, box, params, solver)
        state.s_hat, state.r, state.graph = graph.s_hat, graph.r, graph
        trace = list(graph.objective_trace)
        state.plane = update_classifier(frame, box, state, params)
    state.box = box
    state.frame_index = frame.index
    log = FrameLog(frame.index, box, score, factor, conf, updated, state.r.copy(), state.s_hat.copy(), trace)
    return box, state, log


class SGTracker:
    """Stateful wrapper with the initialize/update interface used by the
    evaluation protocol."""

    name = "SGT"

    def __init__(self, params: TrackerParams | None = None, solver: SolverConfig | None = None):
        self.params = params or TrackerParams()
        self.solver = solver or SolverConfig()
        self.state: TrackerState | None = None
        self.logs: list[FrameLog] = []

    def initialize(self, frame: FramePair, box: BoundingBox) -> None:
        self.state = initialize(frame, box, self.params, self.solver)
        g = self.state.graph
        self.logs.append(FrameLog(frame.index, box, math.nan, 1.0, math.nan, True, g.r.copy(),
                                  g.s_hat.copy(), list(g.objective_trace)))

    def update(self, frame: FramePair) -> BoundingBox:
        if self.state is None:
            raise RuntimeError("tracker used before initialize()")
        box, self.state, log = track_frame(frame, self.state, self.params, self.solver)
        self.logs.append(log)
        return box

    def snapshot(self) -> TrackerState:
        return copy.deepcopy(self.state)

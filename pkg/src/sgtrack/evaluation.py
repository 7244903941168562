"""Benchmark metrics over result and ground-truth box lists.

With several modalities each frame has one ground-truth box per camera;
precision uses the closest center and success the best overlap, so a
tracker is not penalized for small misalignment between the cameras.
"""

from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dataset_io import ATTRIBUTE_CODES, BoundingBox, DatasetError, FramePair

PRECISION_THRESHOLD = 20.0
SUCCESS_GRID = np.linspace(0.0, 1.0, 21)


def iou(b1: BoundingBox, b2: BoundingBox) -> float:
    ix = min(b1.x + b1.w, b2.x + b2.w) - max(b1.x, b2.x)
    iy = min(b1.y + b1.h, b2.y + b2.h) - max(b1.y, b2.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (b1.w * b1.h + b2.w * b2.h - inter)


def center_distance(b1: BoundingBox, b2: BoundingBox) -> float:
    (x1, y1), (x2, y2) = b1.center(), b2.center()
    return math.hypot(x1 - x2, y1 - y2)


def _check_lengths(results, gt_per_modality) -> None:
    if not gt_per_modality:
        raise ValueError("no ground-truth modality given")
    for m, gt in enumerate(gt_per_modality):
        if len(gt) != len(results):
            raise ValueError(f"{len(results)} results but {len(gt)} ground-truth boxes in modality {m}")


def min_center_distances(results, gt_per_modality) -> np.ndarray:
    _check_lengths(results, gt_per_modality)
    return np.array([min(center_distance(r, gt[k]) for gt in gt_per_modality)
                     for k, r in enumerate(results)])


def max_overlaps(results, gt_per_modality) -> np.ndarray:
    _check_lengths(results, gt_per_modality)
    return np.array([max(iou(r, gt[k]) for gt in gt_per_modality) for k, r in enumerate(results)])


def precision_curve(results, gt_per_modality, thresholds) -> np.ndarray:
    d = min_center_distances(results, gt_per_modality)
    return np.array([float(np.mean(d <= t)) for t in thresholds])


def success_curve(results, gt_per_modality, thresholds=SUCCESS_GRID) -> np.ndarray:
    o = max_overlaps(results, gt_per_modality)
    return np.array([float(np.mean(o > t)) for t in thresholds])


def mpr(results, gt_per_modality, threshold: float = PRECISION_THRESHOLD) -> float:
    """Fraction of frames whose closest per-modality center distance is within `threshold`."""
    return float(precision_curve(results, gt_per_modality, [threshold])[0])


def msr(results, gt_per_modality) -> float:
    """Area under the success curve sampled on a 21-point overlap grid."""
    sr = success_curve(results, gt_per_modality, SUCCESS_GRID)
    return float(np.trapezoid(sr, SUCCESS_GRID))


# -- reset-based accuracy and robustness -----------------------------------

@dataclass(frozen=True)
class ReinitProtocol:
    skip_after_failure: int = 5
    burn_in: int = 10

    def __post_init__(self):
        if self.skip_after_failure < 0 or self.burn_in < 0:
            raise ValueError("skip_after_failure and burn_in must be non-negative")


@dataclass
class ResetRun:
    """Per-frame record of one reset-based run.

    overlaps[k] is NaN for frames skipped after a failure. init_frames lists
    the frames where the tracker was (re)started on the ground truth.
    """
    overlaps: np.ndarray
    init_frames: list[int]
    failure_frames: list[int]
    evaluated: np.ndarray  # mask of frames counted in accuracy

    @property
    def accuracy(self) -> float:
        vals = self.overlaps[self.evaluated]
        return float(vals.mean()) if vals.size else math.nan

    @property
    def failures(self) -> int:
        return len(self.failure_frames)

    @property
    def failure_rate(self) -> float:
        """Failures per tracked frame."""
        tracked = int(np.sum(~np.isnan(self.overlaps)))
        return self.failures / tracked if tracked else 0.0


def reset_run(tracker, frames: Sequence[FramePair], gt_per_modality, protocol: ReinitProtocol) -> ResetRun:
    """Run `tracker` (``initialize(frame, box)`` / ``update(frame) -> box``)
    with restarts.

    A frame fails when its best overlap is 0. The tracker restarts on the
    modality-0 ground truth ``max(skip_after_failure, 1)`` frames after the
    failure. Frames within `burn_in` frames of a (re)start, and failed
    frames, are left out of the accuracy.
    """
    n = len(frames)
    _check_lengths(frames, gt_per_modality)
    overlaps = np.full(n, np.nan)
    evaluated = np.zeros(n, dtype=bool)
    inits, failures = [], []
    start = 0
    while start < n:
        tracker.initialize(frames[start], gt_per_modality[0][start])
        inits.append(start)
        overlaps[start] = max(iou(gt_per_modality[0][start], gt[start]) for gt in gt_per_modality)
        evaluated[start] = protocol.burn_in == 0
        k = start + 1
        restart = n
        while k < n:
            box = tracker.update(frames[k])
            ov = max(iou(box, gt[k]) for gt in gt_per_modality)
            overlaps[k] = ov
            if ov <= 0.0:
                failures.append(k)
                restart = k + max(protocol.skip_after_failure, 1)
                break
            evaluated[k] = k - start >= protocol.burn_in
            k += 1
        start = restart
    return ResetRun(overlaps, inits, failures, evaluated)


def accuracy_robustness(tracker, frames, gt_per_modality, protocol: ReinitProtocol | None = None):
    """Returns (accuracy, failure count, failure frames)."""
    run = reset_run(tracker, frames, gt_per_modality, protocol or ReinitProtocol())
    return run.accuracy, run.failures, run.failure_frames


# -- expected average overlap ----------------------------------------------

def _truncate_at_failure(curve: np.ndarray) -> tuple[np.ndarray, bool]:
    zeros = np.flatnonzero(curve <= 0.0)
    if zeros.size:
        out = curve.copy()
        out[zeros[0]:] = 0.0
        return out, True
    return curve, False


def eao(curves: Sequence[Sequence[float]]):
    """Expected average overlap of no-reset overlap curves.

    A curve is zero from its first zero onward and, having failed, counts
    as zero-padded for any length; a curve that never fails only
    contributes to lengths it covers. Returns (EAO, expected-overlap curve
    indexed by length - 1, (lo, hi) length interval).
    """
    if len(curves) == 0:
        raise ValueError("eao needs at least one overlap curve")
    prepared = []
    for c in curves:
        c = np.asarray(c, dtype=float)
        if c.size == 0:
            raise ValueError("empty overlap curve")
        prepared.append(_truncate_at_failure(c))
    lengths = np.array([c.size for c, _ in prepared])
    max_len = int(lengths.max())
    curve = np.full(max_len, np.nan)
    for ell in range(1, max_len + 1):
        vals = []
        for c, failed in prepared:
            if c.size >= ell:
                vals.append(c[:ell].mean())
            elif failed:
                vals.append(c.sum() / ell)
        if vals:
            curve[ell - 1] = float(np.mean(vals))
    med = float(np.median(lengths))
    lo = max(1, int(math.ceil(0.5 * med)))
    hi = max(lo, min(max_len, int(math.floor(1.5 * med))))
    window = curve[lo - 1:hi]
    window = window[~np.isnan(window)]
    value = float(window.mean()) if window.size else 0.0
    return value, curve, (lo, hi)


# -- reports -----------------------------------------------------------------

@dataclass
class SequenceMetrics:
    name: str
    mpr: float
    msr: float
    accuracy: float = math.nan
    robustness: int = 0
    failure_rate: float = 0.0
    failure_frames: list[int] = field(default_factory=list)
    attributes: tuple[str, ...] = ()


@dataclass
class EvalReport:
    tracker: str
    sequences: list[SequenceMetrics]
    mpr: float
    msr: float
    accuracy: float
    robustness: float  # mean failure rate
    eao: float
    eao_curve: np.ndarray
    attributes: dict[str, dict[str, float] | None]

    def rows(self) -> list[tuple[str, str, float]]:
        out = []
        for s in self.sequences:
            out += [(s.name, "MPR", s.mpr), (s.name, "MSR", s.msr), (s.name, "Accuracy", s.accuracy),
                    (s.name, "Robustness", float(s.robustness)), (s.name, "FailureRate", s.failure_rate)]
        out += [("ALL", "MPR", self.mpr), ("ALL", "MSR", self.msr), ("ALL", "Accuracy", self.accuracy),
                ("ALL", "Robustness", self.robustness), ("ALL", "EAO", self.eao)]
        for code, vals in self.attributes.items():
            if vals is not None:
                out += [(code, "MPR", vals["MPR"]), (code, "MSR", vals["MSR"])]
        return out


def _nanmean(values: Iterable[float]) -> float:
    arr = np.array([v for v in values if not math.isnan(v)], dtype=float)
    return float(arr.mean()) if arr.size else math.nan


def attribute_table(sequences: Sequence[SequenceMetrics]) -> dict[str, dict[str, float] | None]:
    """Mean MPR/MSR per attribute over the sequences tagged with it; None
    for attributes no sequence carries."""
    for s in sequences:
        for code in s.attributes:
            if code not in ATTRIBUTE_CODES:
                raise DatasetError(f"sequence {s.name}: unknown attribute code {code!r}")
    table: dict[str, dict[str, float] | None] = {}
    for code in ATTRIBUTE_CODES:
        tagged = [s for s in sequences if code in s.attributes]
        table[code] = ({"MPR": _nanmean(s.mpr for s in tagged), "MSR": _nanmean(s.msr for s in tagged),
                        "count": float(len(tagged))} if tagged else None)
    return table


def attribute_report(reports: Sequence[SequenceMetrics], manifests, tracker: str = "tracker",
                     eao_value: float = math.nan, eao_curve: np.ndarray | None = None) -> EvalReport:
    """Aggregate per-sequence metrics, taking attribute tags from `manifests`
    (a mapping or list of SequenceManifest keyed by sequence name)."""
    by_name = manifests if isinstance(manifests, dict) else {m.name: m for m in manifests}
    tagged = []
    for r in reports:
        if r.name not in by_name:
            raise DatasetError(f"no manifest for sequence {r.name!r}")
        tags = tuple(by_name[r.name].attribute_tags)
        tagged.append(SequenceMetrics(r.name, r.mpr, r.msr, r.accuracy, r.robustness, r.failure_rate,
                                      list(r.failure_frames), tags))
    return EvalReport(
        tracker=tracker,
        sequences=tagged,
        mpr=_nanmean(s.mpr for s in tagged),
        msr=_nanmean(s.msr for s in tagged),
        accuracy=_nanmean(s.accuracy for s in tagged),
        robustness=_nanmean(s.failure_rate for s in tagged),
        eao=eao_value,
        eao_curve=np.array([]) if eao_curve is None else eao_curve,
        attributes=attribute_table(tagged),
    )


def _fmt(v: float) -> str:
    return "-" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.3f}"


def format_report(report: EvalReport) -> str:
    buf = io.StringIO()
    buf.write(f"tracker: {report.tracker}\n\n")
    buf.write(f"{'sequence':<24}{'MPR':>8}{'MSR':>8}{'Acc':>8}{'Fail':>6}{'Rate':>8}\n")
    for s in report.sequences:
        buf.write(f"{s.name:<24}{_fmt(s.mpr):>8}{_fmt(s.msr):>8}{_fmt(s.accuracy):>8}"
                  f"{s.robustness:>6d}{_fmt(s.failure_rate):>8}\n")
    buf.write(f"{'ALL':<24}{_fmt(report.mpr):>8}{_fmt(report.msr):>8}{_fmt(report.accuracy):>8}"
              f"{'':>6}{_fmt(report.robustness):>8}\n")
    buf.write(f"\nEAO: {_fmt(report.eao)}\n\n")
    buf.write("attribute      MPR/MSR\n")
    for code, vals in report.attributes.items():
        cell = "absent" if vals is None else f"{100 * vals['MPR']:.1f}/{100 * vals['MSR']:.1f}"
        buf.write(f"{code:<15}{cell}\n")
    return buf.getvalue()


def _atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_report(report: EvalReport, text_path, csv_path) -> None:
    _atomic_write(text_path, format_report(report))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sequence", "metric", "value"])
    for name, metric, value in report.rows():
        w.writerow([name, metric, repr(float(value))])
    _atomic_write(csv_path, buf.getvalue())


def evaluate_sequence(name: str, results, gt_per_modality, attributes=(),
                      run: ResetRun | None = None) -> SequenceMetrics:
    m = SequenceMetrics(name, mpr(results, gt_per_modality), msr(results, gt_per_modality),
                        attributes=tuple(attributes))
    if run is not None:
        m.accuracy, m.robustness, m.failure_rate = run.accuracy, run.failures, run.failure_rate
        m.failure_frames = list(run.failure_frames)
    return m

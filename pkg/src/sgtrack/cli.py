"""Command-line front end.

    sgtrack synth --out DIR [--set rgb_contrast=0.1 ...] [--seed N]
    sgtrack track --manifest M --out DIR [--set sigma=37 ...] [--overlay] [--plot]
    sgtrack eval  --manifest M [--manifest M2] --results LABEL=PATH [...] --out DIR [--plot] [--reset]
    sgtrack plot  --convergence CSV [--convergence CSV2] --out DIR

Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import evaluation as ev
from .dataset_io import (BoundingBox, DatasetError, MotionPath, SyntheticConfig, generate_synthetic,
                         load_sequence, read_groundtruth, write_results)
from .graph_learning import SolverConfig
from .tracker import SGTracker, TrackerParams

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- parameter overrides ---------------------------------------------------

def _convert(text: str, default):
    if isinstance(default, bool):
        if text.lower() in ("1", "true", "yes"):
            return True
        if text.lower() in ("0", "false", "no"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, frozenset):
        return frozenset(p.strip() for p in text.split(",") if p.strip())
    if isinstance(default, tuple):
        parts = [p for p in text.replace(",", " ").split() if p]
        return tuple(type(default[0])(p) if default else float(p) for p in parts)
    return text


def parse_overrides(pairs: list[str]) -> dict[str, str]:
    out = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"--set expects key=value, got {pair!r}")
        out[key.strip()] = value.strip()
    return out


def apply_overrides(overrides: dict[str, str], *configs):
    """Return copies of the dataclass `configs` with matching fields replaced.
    A key unknown to every config is a usage error."""
    remaining = dict(overrides)
    out = []
    for cfg in configs:
        changes = {}
        for f in dataclasses.fields(cfg):
            if f.name in remaining:
                try:
                    changes[f.name] = _convert(remaining[f.name], getattr(cfg, f.name))
                except ValueError as exc:
                    raise UsageError(f"--set {f.name}: {exc}") from None
        for k in changes:
            remaining.pop(k, None)
        try:
            out.append(dataclasses.replace(cfg, **changes))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    if remaining:
        raise UsageError(f"unknown parameter(s): {', '.join(sorted(remaining))}")
    return out


# -- output helpers ----------------------------------------------------------

def _atomic_text(path: Path, text: str) -> None:
    ev._atomic_write(path, text)


def _frame_log_csv(logs) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["frame", "x", "y", "w", "h", "score", "scale", "confidence", "updated", "r", "s_hat"])
    for log in logs:
        w.writerow([log.index, *[repr(float(v)) for v in log.box.as_tuple()], repr(float(log.score)),
                    repr(float(log.scale)), repr(float(log.confidence)), int(log.updated),
                    " ".join(repr(float(v)) for v in log.r), " ".join(repr(float(v)) for v in log.s_hat)])
    return buf.getvalue()


def _convergence_csv(logs) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["frame", "iteration", "objective"])
    for log in logs:
        for it, val in enumerate(log.objective_trace):
            w.writerow([log.index, it, repr(float(val))])
    return buf.getvalue()


def read_convergence_csv(path) -> dict[int, list[float]]:
    traces: dict[int, list[float]] = {}
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            traces.setdefault(int(row["frame"]), []).append(float(row["objective"]))
    return traces


def _draw_overlay(frame, boxes: list[tuple[BoundingBox, tuple[int, int, int]]], path: Path) -> None:
    from PIL import Image, ImageDraw

    img = frame.images[0]
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=2)
    pil = Image.fromarray(np.clip(np.rint(img), 0, 255).astype(np.uint8), "RGB")
    draw = ImageDraw.Draw(pil)
    for box, color in boxes:
        draw.rectangle([box.x, box.y, box.x + box.w - 1, box.y + box.h - 1], outline=color, width=2)
    pil.save(path)


def _save_figure(fig, png_path: Path, legend: list[str], extra: dict | None = None) -> None:
    import matplotlib.pyplot as plt

    png_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(png_path, dpi=100)
    plt.close(fig)
    meta = {"image": png_path.name, "legend": legend}
    meta.update(extra or {})
    _atomic_text(png_path.with_suffix(".json"), json.dumps(meta, indent=2) + "\n")


def _figure():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt.subplots(figsize=(5, 4))


def plot_curves(curves: dict[str, tuple[np.ndarray, np.ndarray]], xlabel: str, ylabel: str,
                title: str, png_path: Path) -> None:
    fig, ax = _figure()
    for label, (x, y) in curves.items():
        ax.plot(x, y, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.set_ylim(0, 1.02)
    ax.legend(loc="best")
    fig.tight_layout()
    _save_figure(fig, png_path, list(curves))


def plot_convergence(traces: dict[str, list[float]], png_path: Path) -> None:
    fig, ax = _figure()
    for label, trace in traces.items():
        ax.plot(np.arange(len(trace)), trace, marker=".", label=label)
    ax.set_xlabel("outer iteration")
    ax.set_ylabel("objective")
    ax.set_title("joint solver convergence")
    if traces:
        ax.legend(loc="best", fontsize="small")
    fig.tight_layout()
    _save_figure(fig, png_path, list(traces))


# -- commands ------------------------------------------------------------------

def cmd_synth(args) -> int:
    overrides = parse_overrides(args.set)
    path_keys = {k: overrides.pop(k) for k in ("start_x", "start_y", "vx", "vy", "growth") if k in overrides}
    base = SyntheticConfig(rng_seed=args.seed if args.seed is not None else 0)
    (cfg,) = apply_overrides(overrides, base)
    if path_keys:
        mp = cfg.motion_path
        cfg = dataclasses.replace(cfg, motion_path=MotionPath(
            (float(path_keys.get("start_x", mp.start[0])), float(path_keys.get("start_y", mp.start[1]))),
            (float(path_keys.get("vx", mp.velocity[0])), float(path_keys.get("vy", mp.velocity[1]))),
            float(path_keys.get("growth", mp.growth))))
    seq = generate_synthetic(cfg)
    manifest = seq.save(args.out)
    print(manifest)
    return EXIT_OK


def cmd_track(args) -> int:
    if not args.manifest or len(args.manifest) != 1:
        raise UsageError("track needs exactly one --manifest")
    solver, params = apply_overrides(parse_overrides(args.set), SolverConfig(), TrackerParams())
    manifest, frames, gts = load_sequence(args.manifest[0])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tracker = SGTracker(params, solver)
    results = []
    overlay_dir = out / "overlay"
    if args.overlay:
        overlay_dir.mkdir(exist_ok=True)
    for k, frame in enumerate(frames):
        if k == 0:
            tracker.initialize(frame, gts[0][0])
            box = gts[0][0]
        else:
            box = tracker.update(frame)
        results.append(box)
        if args.overlay:
            _draw_overlay(frame, [(gts[0][k], (0, 255, 0)), (box, (255, 0, 0))], overlay_dir / f"{k:05d}.png")
    write_results(out / f"{manifest.name}.txt", results)
    _atomic_text(out / f"{manifest.name}_log.csv", _frame_log_csv(tracker.logs))
    _atomic_text(out / f"{manifest.name}_convergence.csv", _convergence_csv(tracker.logs))
    if args.plot:
        traces = {f"frame {log.index}": log.objective_trace for log in tracker.logs[:5] if log.objective_trace}
        plot_convergence(traces, out / f"{manifest.name}_convergence.png")
    print(out / f"{manifest.name}.txt")
    return EXIT_OK


def _parse_result_specs(specs: list[str]) -> list[tuple[str, Path]]:
    out = []
    for k, spec in enumerate(specs):
        label, sep, path = spec.partition("=")
        out.append((label, Path(path)) if sep else (f"run{k + 1}" if len(specs) > 1 else "tracker", Path(spec)))
    return out


def _result_file(path: Path, name: str, single: bool) -> Path:
    if path.is_dir():
        path = path / f"{name}.txt"
    elif not single:
        raise UsageError(f"{path} must be a directory when evaluating several sequences")
    if not path.exists():
        raise DatasetError(f"missing result file: {path}")
    return path


def cmd_eval(args) -> int:
    if not args.manifest:
        raise UsageError("eval needs at least one --manifest")
    if not args.results:
        raise UsageError("eval needs at least one --results")
    solver, params = apply_overrides(parse_overrides(args.set), SolverConfig(), TrackerParams())
    protocol = ev.ReinitProtocol(args.protocol_skip, args.protocol_burnin)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    runs = _parse_result_specs(args.results)
    sequences = []
    for mpath in args.manifest:
        manifest, frames, gts = load_sequence(mpath)
        sequences.append((manifest, frames, gts))
    single = len(sequences) == 1
    precision_curves, success_curves = {}, {}
    thresholds = np.arange(0, 51)
    for label, rpath in runs:
        per_seq, overlap_curves, all_res, all_gt = [], [], [], [[] for _ in range(len(sequences[0][2]))]
        for manifest, frames, gts in sequences:
            results = read_groundtruth(_result_file(rpath, manifest.name, single))
            if len(results) != len(gts[0]):
                raise DatasetError(f"{rpath}: {len(results)} result boxes but {len(gts[0])} frames "
                                   f"in {manifest.name}")
            run = None
            if args.reset:
                run = ev.reset_run(SGTracker(params, solver), list(frames), gts, protocol)
            per_seq.append(ev.evaluate_sequence(manifest.name, results, gts, manifest.attribute_tags, run))
            overlap_curves.append(ev.max_overlaps(results, gts))
            all_res += results
            for m, g in enumerate(gts):
                all_gt[m] += g
        eao_value, eao_curve, _ = ev.eao(overlap_curves)
        report = ev.attribute_report(per_seq, [m for m, _, _ in sequences], label, eao_value, eao_curve)
        ev.write_report(report, out / f"report_{label}.txt", out / f"report_{label}.csv")
        print(f"{label}: MPR {report.mpr:.3f} MSR {report.msr:.3f} EAO {report.eao:.3f}")
        precision_curves[label] = (thresholds, ev.precision_curve(all_res, all_gt, thresholds))
        success_curves[label] = (ev.SUCCESS_GRID, ev.success_curve(all_res, all_gt))
    if args.plot:
        plot_curves(precision_curves, "location error threshold (px)", "maximum precision rate",
                    "precision", out / "precision.png")
        plot_curves(success_curves, "overlap threshold", "maximum success rate", "success",
                    out / "success.png")
        if args.convergence:
            plot_convergence(_convergence_traces(args.convergence), out / "convergence.png")
    return EXIT_OK


def _convergence_traces(paths: list[str]) -> dict[str, list[float]]:
    traces = {}
    for p in paths:
        p = Path(p)
        if not p.exists():
            raise DatasetError(f"missing convergence file: {p}")
        for frame, trace in read_convergence_csv(p).items():
            traces[f"{p.stem} frame {frame}" if len(paths) > 1 else f"frame {frame}"] = trace
    return traces


def cmd_plot(args) -> int:
    if not args.convergence:
        raise UsageError("plot needs at least one --convergence CSV")
    traces = _convergence_traces(args.convergence)
    if args.frames:
        wanted = {int(f) for f in args.frames.split(",")}
        traces = {k: v for k, v in traces.items() if int(k.rsplit(" ", 1)[1]) in wanted}
    out = Path(args.out)
    plot_convergence(traces, out if out.suffix == ".png" else out / "convergence.png")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sgtrack", description="RGB-thermal tracking and benchmark evaluation")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp):
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a solver/tracker/generator parameter (repeatable)")
        sp.add_argument("--seed", type=int, default=None,
                        help="random seed (synthetic noise; tracking itself is deterministic)")

    s = sub.add_parser("synth", help="render a synthetic sequence")
    common(s)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("track", help="track one sequence")
    common(t)
    t.add_argument("--manifest", action="append", default=[])
    t.add_argument("--overlay", action="store_true", help="write frames with predicted/true boxes")
    t.add_argument("--plot", action="store_true", help="plot solver convergence for the first frames")
    t.set_defaults(func=cmd_track)

    e = sub.add_parser("eval", help="evaluate result files")
    common(e)
    e.add_argument("--manifest", action="append", default=[])
    e.add_argument("--results", action="append", default=[], metavar="[LABEL=]PATH",
                   help="result file, or directory of <sequence>.txt files (repeatable)")
    e.add_argument("--plot", action="store_true", help="write precision and success plots")
    e.add_argument("--convergence", action="append", default=[], help="convergence CSV to plot")
    e.add_argument("--reset", action="store_true",
                   help="rerun the tracker with restarts to measure accuracy and robustness")
    e.add_argument("--protocol-skip", type=int, default=5)
    e.add_argument("--protocol-burnin", type=int, default=10)
    e.set_defaults(func=cmd_eval)

    pl = sub.add_parser("plot", help="plot exported solver convergence traces")
    pl.add_argument("--out", required=True, help="output directory or .png path")
    pl.add_argument("--convergence", action="append", default=[])
    pl.add_argument("--frames", default="", help="comma-separated frame indices to include")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if not getattr(args, "command", None):
            raise UsageError("a command is required: synth, track, eval or plot")
        return args.func(args)
    except UsageError as exc:
        print(f"sgtrack: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetError, FileNotFoundError, OSError) as exc:
        print(f"sgtrack: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        print(f"sgtrack: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

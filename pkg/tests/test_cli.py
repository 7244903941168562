import json

import pytest

from sgtrack import cli
from sgtrack.dataset_io import read_groundtruth


@pytest.fixture(scope="module")
def seq_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("seq")
    assert cli.main(["synth", "--out", str(out), "--set", "frame_count=10"]) == 0
    return out


@pytest.fixture(scope="module")
def tracked(seq_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert cli.main(["track", "--manifest", str(seq_dir / "manifest.txt"), "--out", str(out), "--overlay"]) == 0
    return out


def test_track_writes_one_line_per_frame(tracked):
    assert len(read_groundtruth(tracked / "synthetic.txt")) == 10
    assert len(list((tracked / "overlay").glob("*.png"))) == 10
    log = (tracked / "synthetic_log.csv").read_text().splitlines()
    assert log[0].startswith("frame,x,y,w,h,score,scale,confidence,updated,r,s_hat")
    assert len(log) == 11
    conv = (tracked / "synthetic_convergence.csv").read_text().splitlines()
    assert conv[0] == "frame,iteration,objective" and len(conv) > 1


def test_track_is_deterministic(seq_dir, tracked, tmp_path):
    assert cli.main(["track", "--manifest", str(seq_dir / "manifest.txt"), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "synthetic.txt").read_bytes() == (tracked / "synthetic.txt").read_bytes()


def test_sigma_override_changes_patch_weight_log(seq_dir, tracked, tmp_path):
    args = ["track", "--manifest", str(seq_dir / "manifest.txt"), "--out", str(tmp_path), "--set", "sigma=1"]
    assert cli.main(args) == 0

    def s_hat_column(path):
        return [line.rsplit(",", 1)[1] for line in path.read_text().splitlines()[1:]]

    assert s_hat_column(tmp_path / "synthetic_log.csv") != s_hat_column(tracked / "synthetic_log.csv")


def test_eval_ground_truth_against_itself(seq_dir, tmp_path):
    args = ["eval", "--manifest", str(seq_dir / "manifest.txt"), "--results",
            f"gt={seq_dir / 'visible.txt'}", "--out", str(tmp_path)]
    assert cli.main(args) == 0
    assert "ALL,MPR,1.0" in (tmp_path / "report_gt.csv").read_text().splitlines()


def test_eval_two_runs_gives_two_legend_entries(seq_dir, tracked, tmp_path):
    args = ["eval", "--manifest", str(seq_dir / "manifest.txt"), "--results", f"sgt={tracked}",
            "--results", f"gt={seq_dir / 'visible.txt'}", "--out", str(tmp_path), "--plot",
            "--convergence", str(tracked / "synthetic_convergence.csv")]
    assert cli.main(args) == 0
    for name in ("precision", "success"):
        assert (tmp_path / f"{name}.png").stat().st_size > 0
        assert json.loads((tmp_path / f"{name}.json").read_text())["legend"] == ["sgt", "gt"]
    assert (tmp_path / "convergence.png").exists()


def test_eval_with_reset_protocol(seq_dir, tracked, tmp_path):
    args = ["eval", "--manifest", str(seq_dir / "manifest.txt"), "--results", f"sgt={tracked}",
            "--out", str(tmp_path), "--reset", "--protocol-skip", "5", "--protocol-burnin", "0"]
    assert cli.main(args) == 0
    rows = (tmp_path / "report_sgt.csv").read_text().splitlines()
    assert "synthetic,Robustness,0.0" in rows


def test_plot_command(tracked, tmp_path):
    out = tmp_path / "conv.png"
    assert cli.main(["plot", "--convergence", str(tracked / "synthetic_convergence.csv"), "--out", str(out),
                     "--frames", "0,1"]) == 0
    assert json.loads(out.with_suffix(".json").read_text())["legend"] == ["frame 0", "frame 1"]


def test_missing_result_file_names_path(seq_dir, tmp_path, capsys):
    code = cli.main(["eval", "--manifest", str(seq_dir / "manifest.txt"), "--results",
                     str(tmp_path / "absent.txt"), "--out", str(tmp_path)])
    assert code == cli.EXIT_DATA
    assert "absent.txt" in capsys.readouterr().err


def test_usage_errors(seq_dir, tmp_path):
    assert cli.main([]) == cli.EXIT_USAGE
    assert cli.main(["track", "--out", str(tmp_path)]) == cli.EXIT_USAGE
    assert cli.main(["track", "--manifest", str(seq_dir / "manifest.txt"), "--out", str(tmp_path),
                     "--set", "nonsense=1"]) == cli.EXIT_USAGE
    assert cli.main(["track", "--manifest", str(seq_dir / "manifest.txt"), "--out", str(tmp_path),
                     "--set", "nu=7"]) == cli.EXIT_USAGE
    assert cli.main(["bogus"]) == cli.EXIT_USAGE


def test_missing_manifest_is_data_error(tmp_path):
    assert cli.main(["track", "--manifest", str(tmp_path / "none.txt"), "--out", str(tmp_path)]) == cli.EXIT_DATA


def test_synth_overrides_motion(tmp_path):
    assert cli.main(["synth", "--out", str(tmp_path), "--seed", "3", "--set", "frame_count=3",
                     "--set", "vx=5", "--set", "attributes=LI,PO"]) == 0
    boxes = read_groundtruth(tmp_path / "visible.txt")
    assert boxes[1].x - boxes[0].x == 5
    assert "attributes = LI,PO" in (tmp_path / "manifest.txt").read_text()


def test_failed_track_leaves_no_partial_result(seq_dir, tmp_path, monkeypatch):
    from sgtrack import tracker

    calls = {"n": 0}
    real = tracker.track_frame

    def flaky(*a, **k):
        calls["n"] += 1
        if calls["n"] == 3:
            raise RuntimeError("boom")
        return real(*a, **k)

    monkeypatch.setattr(tracker, "track_frame", flaky)
    code = cli.main(["track", "--manifest", str(seq_dir / "manifest.txt"), "--out", str(tmp_path)])
    assert code == cli.EXIT_RUNTIME
    assert not (tmp_path / "synthetic.txt").exists()

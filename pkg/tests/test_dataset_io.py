import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgtrack.dataset_io import (BoundingBox, DatasetError, FramePair, MotionPath, SequenceManifest,
                                SyntheticConfig, format_results, generate_synthetic, load_sequence,
                                parse_groundtruth, read_manifest, write_manifest, write_results)


def test_box_center_and_validation():
    assert BoundingBox(1, 2, 4, 6).center() == (3.0, 5.0)
    with pytest.raises(ValueError):
        BoundingBox(0, 0, 0, 1)
    with pytest.raises(ValueError):
        BoundingBox(0, float("nan"), 1, 1)


def test_rescaled_keeps_center():
    b = BoundingBox(10, 10, 20, 10).rescaled(1.5)
    assert b.center() == (20.0, 15.0)
    assert (b.w, b.h) == (30.0, 15.0)


def test_parse_single_and_multiple_lines():
    assert parse_groundtruth("10,20,30,40") == [BoundingBox(10, 20, 30, 40)]
    assert parse_groundtruth("0,0,1,1\n5,5,2,2\n") == [BoundingBox(0, 0, 1, 1), BoundingBox(5, 5, 2, 2)]


def test_parse_rejects_bad_sizes_and_names_the_line():
    with pytest.raises(ValueError, match="line 1"):
        parse_groundtruth("10,20,-3,40")
    with pytest.raises(DatasetError, match="line 2"):
        parse_groundtruth("1,1,1,1\n1,1,1\n")
    with pytest.raises(DatasetError, match="line 1"):
        parse_groundtruth("a,1,1,1")


def test_write_results_formats(tmp_path):
    write_results(tmp_path / "empty.txt", [])
    assert (tmp_path / "empty.txt").read_text() == ""
    write_results(tmp_path / "one.txt", [BoundingBox(1, 2, 3, 4)])
    assert (tmp_path / "one.txt").read_text() == "1,2,3,4\n"
    assert not list(tmp_path.glob("*.tmp"))


ints = st.integers(-500, 500)
sizes = st.integers(1, 500)


@settings(max_examples=100)
@given(st.lists(st.tuples(ints, ints, sizes, sizes), max_size=20))
def test_integer_boxes_round_trip_exactly(rows):
    boxes = [BoundingBox(*r) for r in rows]
    assert parse_groundtruth(format_results(boxes)) == boxes


@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(0.01, 1e3),
                          st.floats(0.01, 1e3)), max_size=10))
def test_fractional_boxes_round_trip(rows):
    boxes = [BoundingBox(*r) for r in rows]
    back = parse_groundtruth(format_results(boxes))
    for a, b in zip(boxes, back):
        np.testing.assert_allclose(a.as_tuple(), b.as_tuple(), atol=1e-6)


def test_manifest_rejects_unknown_attribute(tmp_path):
    with pytest.raises(DatasetError, match="XX"):
        SequenceManifest("s", [tmp_path], [tmp_path / "g.txt"], frozenset({"XX"}))


def test_manifest_round_trip(tmp_path):
    m = SequenceManifest("seq", [tmp_path / "v", tmp_path / "t"], [tmp_path / "v.txt", tmp_path / "t.txt"],
                         frozenset({"LI", "PO"}))
    write_manifest(tmp_path / "manifest.txt", m)
    back = read_manifest(tmp_path / "manifest.txt")
    assert back.name == "seq" and back.attribute_tags == {"LI", "PO"}
    assert back.modality_dirs == m.modality_dirs and back.groundtruth_paths == m.groundtruth_paths


def test_frame_pair_rejects_mismatched_sizes():
    with pytest.raises(DatasetError):
        FramePair([np.zeros((4, 5, 3)), np.zeros((4, 6))], 0)


def test_load_three_frame_sequence(tmp_path):
    seq = generate_synthetic(SyntheticConfig(frame_count=3, image_size=(120, 80),
                                             motion_path=MotionPath((40, 40), (1, 0))))
    path = seq.save(tmp_path)
    manifest, frames, gts = load_sequence(path)
    frames = list(frames)
    assert len(frames) == 3 and all(len(f.images) == 2 for f in frames)
    assert [f.index for f in frames] == [0, 1, 2]
    assert gts[0] == seq.groundtruth[0]
    np.testing.assert_array_equal(frames[1].images[1], seq.frames[1].images[1])
    np.testing.assert_array_equal(frames[2].images[0], seq.frames[2].images[0])


def test_load_detects_groundtruth_length_mismatch(tmp_path):
    seq = generate_synthetic(SyntheticConfig(frame_count=3, image_size=(120, 80),
                                             motion_path=MotionPath((40, 40), (1, 0))))
    path = seq.save(tmp_path)
    write_results(tmp_path / "infrared.txt", seq.groundtruth[1][:2])
    with pytest.raises(DatasetError, match="2 ground-truth lines but 3 frames"):
        load_sequence(path)


def test_load_single_modality(tmp_path):
    seq = generate_synthetic(SyntheticConfig(frame_count=2, image_size=(120, 80),
                                             motion_path=MotionPath((40, 40), (1, 0))))
    seq.save(tmp_path)
    (tmp_path / "single.txt").write_text("name = single\nmodality_dir.0 = visible\ngroundtruth.0 = visible.txt\n")
    manifest, frames, gts = load_sequence(tmp_path / "single.txt")
    assert manifest.num_modalities == 1 and len(gts) == 1
    assert len(next(frames).images) == 1


def test_load_missing_directory(tmp_path):
    (tmp_path / "m.txt").write_text("modality_dir.0 = nowhere\ngroundtruth.0 = g.txt\n")
    with pytest.raises(DatasetError, match="nowhere"):
        load_sequence(tmp_path / "m.txt")


def test_synthetic_is_deterministic():
    cfg = SyntheticConfig(frame_count=4)
    a, b = generate_synthetic(cfg), generate_synthetic(cfg)
    for fa, fb in zip(a.frames, b.frames):
        for ia, ib in zip(fa.images, fb.images):
            np.testing.assert_array_equal(ia, ib)


def test_synthetic_zero_rgb_contrast_carries_no_target():
    seq = generate_synthetic(SyntheticConfig(frame_count=2, rgb_contrast=0.0, noise_sigma=0.0))
    rgb, thermal = seq.frames[0].images
    assert np.all(rgb == 128)
    box = seq.groundtruth[1][0]
    cx, cy = (int(v) for v in box.center())
    assert thermal[cy, cx] != thermal[0, 0]


def test_synthetic_linear_path_moves_three_pixels():
    seq = generate_synthetic(SyntheticConfig())
    cx = np.array([b.center()[0] for b in seq.groundtruth[0]])
    np.testing.assert_allclose(np.diff(cx), 3.0)
    assert seq.groundtruth[0] == seq.groundtruth[1]


def test_synthetic_occlusion_keeps_true_box():
    seq = generate_synthetic(SyntheticConfig(frame_count=6, occlusion_intervals=[(2, 3)], noise_sigma=0.0))
    free = generate_synthetic(SyntheticConfig(frame_count=6, noise_sigma=0.0))
    assert seq.groundtruth == free.groundtruth
    assert not np.array_equal(seq.frames[2].images[1], free.frames[2].images[1])
    np.testing.assert_array_equal(seq.frames[1].images[1], free.frames[1].images[1])


def test_synthetic_rejects_target_leaving_image():
    with pytest.raises(ValueError, match="leaves"):
        generate_synthetic(SyntheticConfig(frame_count=200))
    with pytest.raises(ValueError):
        generate_synthetic(SyntheticConfig(rgb_contrast=1.5))

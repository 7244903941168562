import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgtrack import features as feat
from sgtrack.dataset_io import BoundingBox, FramePair


def _frame(rng, size=(60, 50)):
    W, H = size
    return FramePair([rng.uniform(0, 255, size=(H, W, 3)), rng.uniform(0, 255, size=(H, W))], 0)


def test_grid_for_64_box_has_4px_patches():
    g = feat.build_patch_grid(BoundingBox(0, 0, 64, 64))
    assert g.scale == 0.5 and (g.width, g.height) == (32, 32)
    assert set(g.col_widths) == {4} and set(g.row_heights) == {4}


def test_grid_for_canonical_box_is_identity():
    g = feat.build_patch_grid(BoundingBox(3, 4, 32, 32))
    assert g.scale == 1.0 and g.n == 64


def test_remainder_goes_to_last_column():
    g = feat.build_patch_grid(BoundingBox(0, 0, 33, 32))
    assert tuple(g.col_widths) == (4, 4, 4, 4, 4, 4, 4, 5)


@given(st.floats(8, 300), st.floats(8, 300))
def test_patches_tile_the_scaled_box(w, h):
    g = feat.build_patch_grid(BoundingBox(0, 0, w, h))
    rects = g.patch_rects()
    assert len(rects) == 64
    assert sum(rw * rh for _, _, rw, rh in rects) == g.width * g.height
    assert min(g.width, g.height) == 32


def test_uniform_patch_gives_one_hot_histograms():
    img = np.full((40, 40, 3), 100.0)
    frame = FramePair([img, np.full((40, 40), 250.0)], 0)
    box = BoundingBox(4, 4, 32, 32)
    X_rgb, X_t = feat.extract_features(frame, feat.build_patch_grid(box), box)
    assert X_rgb.shape == (32, 64) and X_t.shape == (16, 64)
    bin100 = int(100 * 8 / 256)
    for c in range(3):
        np.testing.assert_array_equal(X_rgb[c * 8 + bin100], 1.0)
    np.testing.assert_array_equal(X_rgb[24], 1.0)  # gradient bin 0
    np.testing.assert_array_equal(X_t[7], 1.0)
    np.testing.assert_array_equal(X_t[8], 1.0)


def test_histograms_are_normalized_and_deterministic(rng):
    frame = _frame(rng)
    box = BoundingBox(10.3, 5.7, 30.2, 36.9)
    grid = feat.build_patch_grid(box)
    a = feat.extract_features(frame, grid, box)
    b = feat.extract_features(frame, grid, box)
    for Xa, Xb in zip(a, b):
        np.testing.assert_array_equal(Xa, Xb)
        sums = Xa.reshape(-1, 8, 64).sum(axis=1)
        np.testing.assert_allclose(sums, 1.0, atol=1e-9)
        assert np.all(Xa >= 0)


def test_gradient_histogram_matches_direct_computation(rng):
    img = rng.integers(0, 256, size=(32, 32)).astype(float)
    frame = FramePair([img], 0)
    box = BoundingBox(0, 0, 32, 32)
    X = feat.extract_features(frame, feat.build_patch_grid(box), box)[0]
    # patch 9 = row 1, col 1, pixels [4:8, 4:8]
    p = img[4:8, 4:8]
    padded = np.pad(p, 1, mode="edge")
    gx = (padded[1:-1, 2:] - padded[1:-1, :-2]) / 2
    gy = (padded[2:, 1:-1] - padded[:-2, 1:-1]) / 2
    mag = np.hypot(gx, gy)
    bins = np.minimum(np.floor(mag / mag.max() * 8), 7).astype(int)
    expected = np.bincount(bins.ravel(), minlength=8) / 16
    np.testing.assert_allclose(X[8:16, 9], expected)
    expected_color = np.bincount((p // 32).astype(int).ravel(), minlength=8) / 16
    np.testing.assert_allclose(X[:8, 9], expected_color)


def test_box_outside_frame_is_rejected(rng):
    frame = _frame(rng)
    box = BoundingBox(100, 100, 10, 10)
    with pytest.raises(ValueError, match="outside"):
        feat.extract_features(frame, feat.build_patch_grid(box), box)


def test_partly_outside_box_uses_edge_replication():
    img = np.zeros((20, 20))
    img[:, -1] = 200.0
    frame = FramePair([img], 0)
    box = BoundingBox(12, 0, 16, 16)
    X = feat.extract_features(frame, feat.build_patch_grid(box), box)[0]
    # right-most patch column lies beyond the image and replicates the last column
    assert X[int(200 * 8 / 256), 7] == 1.0


@settings(max_examples=15, deadline=None)
@given(st.lists(st.tuples(st.integers(-6, 6), st.integers(-6, 6)), min_size=1, max_size=5))
def test_batched_translations_match_single_extraction(offsets):
    rng = np.random.default_rng(3)
    frame = _frame(rng, (80, 70))
    box = BoundingBox(20.0, 18.0, 24.0, 28.0)
    grid = feat.build_patch_grid(box)
    offsets = np.array(offsets)
    batch = feat.extract_translation_features(frame, grid, box, offsets)
    sx, sy = grid.width / box.w, grid.height / box.h
    for k, (dx, dy) in enumerate(offsets):
        single = feat.extract_features(frame, grid, box.translated(dx / sx, dy / sy))
        for m in range(2):
            np.testing.assert_allclose(batch[m][k], single[m].T, atol=1e-12)


def test_descriptor_identity_weights_concatenates(rng):
    X = [rng.uniform(size=(32, 64)), rng.uniform(size=(16, 64))]
    psi = feat.assemble_descriptor(X, np.ones(64), np.ones(2))
    assert psi.shape == (3072,)
    np.testing.assert_array_equal(psi, np.concatenate([X[0].T.ravel(), X[1].T.ravel()]))


def test_descriptor_zero_thermal_weight(rng):
    X = [rng.uniform(size=(32, 64)), rng.uniform(size=(16, 64))]
    psi = feat.assemble_descriptor(X, np.ones(64), np.array([1.0, 0.0]))
    np.testing.assert_array_equal(psi[64 * 32:], 0.0)


def test_descriptor_halves_one_patch_in_both_modalities(rng):
    X = [rng.uniform(size=(32, 64)), rng.uniform(size=(16, 64))]
    s = np.ones(64)
    s[3] = 0.5
    base = feat.assemble_descriptor(X, np.ones(64), np.ones(2))
    psi = feat.assemble_descriptor(X, s, np.ones(2))
    changed = np.flatnonzero(psi != base)
    expected = np.concatenate([np.arange(3 * 32, 4 * 32), 64 * 32 + np.arange(3 * 16, 4 * 16)])
    np.testing.assert_array_equal(changed, expected)
    np.testing.assert_allclose(psi[expected], base[expected] / 2)


def test_descriptor_batch_matches_single(rng):
    X = [rng.uniform(size=(3, 64, 32)), rng.uniform(size=(3, 64, 16))]
    s, r = rng.uniform(size=64), np.array([0.7, 0.4])
    batch = feat.assemble_descriptor(X, s, r)
    for k in range(3):
        np.testing.assert_allclose(batch[k], feat.assemble_descriptor([X[0][k].T, X[1][k].T], s, r))


def test_descriptor_dimension_mismatch(rng):
    X = [rng.uniform(size=(32, 64))]
    with pytest.raises(ValueError):
        feat.assemble_descriptor(X, np.ones(63), np.ones(1))
    with pytest.raises(ValueError):
        feat.assemble_descriptor(X, np.ones(64), np.ones(2))

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from offroadnav.errors import BadKernelSchedule, DimensionMismatch, EmptyCorpus, NoTraversableRegion, UnknownLabel
from offroadnav.perception import (
    LabelMask,
    ScoreMap,
    argmax_mask,
    components,
    coverage_bin,
    coverage_report,
    denoise,
    detect_landmark,
    dice,
    pool_scores,
    select_goal_pixel,
)
from tests import oracles

LABELS = ("other", "road", "grass")


def mask(ids, labels=LABELS):
    return LabelMask(labels, np.asarray(ids))


def random_scores(rng, n, h, w):
    raw = rng.random((n, h, w))
    return ScoreMap(tuple(f"c{i}" if i else "other" for i in range(n)), raw / raw.sum(axis=0))


# argmax_mask

def test_argmax_uniform_road():
    sm = ScoreMap.from_class_ids(("other", "road"), np.ones((8, 8), int))
    assert np.all(argmax_mask(sm).class_ids == 1)


def test_argmax_tie_goes_to_background():
    sm = ScoreMap(("other", "road"), np.full((2, 8, 8), 0.5))
    assert np.all(argmax_mask(sm).class_ids == 0)


def test_argmax_matches_per_pixel_scan():
    rng = np.random.default_rng(3)
    sm = random_scores(rng, 4, 16, 16)
    ids = argmax_mask(sm).class_ids
    for i in range(16):
        for j in range(16):
            column = list(sm.scores[:, i, j])
            assert ids[i, j] == column.index(max(column))


def test_score_map_validation():
    with pytest.raises(ValueError):
        ScoreMap(("other", "road"), np.full((2, 8, 8), 0.6))
    with pytest.raises(ValueError):
        ScoreMap(("other", "road"), np.full((2, 4, 8), 0.5))
    with pytest.raises(ValueError):
        ScoreMap(("other", "other"), np.full((2, 8, 8), 0.5))


# denoise

@pytest.mark.parametrize("kernels", [(9, 5, 3), (5,), (3,), (7, 3)])
def test_constant_field_is_fixed_point(kernels):
    sm = ScoreMap.from_class_ids(LABELS, np.ones((12, 12), int))
    assert np.all(denoise(sm, kernels).class_ids == 1)


def test_speckle_removed_matches_nested_loop_oracle():
    ids = np.ones((64, 64), int)
    for r, c in [(3, 4), (20, 50), (33, 33), (60, 1), (45, 12)]:
        ids[r, c] = 0
    sm = ScoreMap.from_class_ids(("other", "road"), ids)
    out = denoise(sm, (9, 5, 3), 0.0).class_ids
    assert np.all(out == 1)
    assert np.array_equal(out, oracles.denoise_nested(sm.scores, (9, 5, 3), 0.0))


@pytest.mark.parametrize("kernels", [(3, 5), (9, 9), (4,), (1,), ()])
def test_bad_kernel_schedule(kernels):
    sm = ScoreMap.from_class_ids(LABELS, np.ones((8, 8), int))
    with pytest.raises(BadKernelSchedule):
        denoise(sm, kernels)


def test_bad_confidence_floor():
    sm = ScoreMap.from_class_ids(LABELS, np.ones((8, 8), int))
    with pytest.raises(BadKernelSchedule):
        denoise(sm, (3,), 1.0)


@pytest.mark.parametrize("seed", range(3))
def test_pooling_matches_nested_loops(seed):
    rng = np.random.default_rng(seed)
    sm = random_scores(rng, 3, 12, 10)
    np.testing.assert_allclose(pool_scores(sm, (5, 3)), oracles.pool_nested(oracles.pool_nested(sm.scores, 5), 3),
                               rtol=0, atol=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_denoise_with_floor_matches_oracle(seed):
    rng = np.random.default_rng(10 + seed)
    sm = random_scores(rng, 3, 14, 14)
    got = denoise(sm, (5, 3), 0.36).class_ids
    assert np.array_equal(got, oracles.denoise_nested(sm.scores, (5, 3), 0.36))


@given(arrays(np.int64, (16, 16), elements=st.integers(0, 2)))
def test_schedule_3_is_majority_vote(ids):
    sm = ScoreMap.from_class_ids(LABELS, ids)
    assert np.array_equal(denoise(sm, (3,), 0.0).class_ids, oracles.majority3(ids, 3))


# dice

def test_dice_identity():
    m = mask(np.random.default_rng(0).integers(0, 3, (8, 8)))
    assert dice(m, m, "road") == 1.0


def test_dice_disjoint_blobs():
    a = np.zeros((8, 8), int)
    b = np.zeros((8, 8), int)
    a[0:2, 0:2] = 1
    b[5:7, 5:7] = 1
    assert dice(mask(a), mask(b), "road") == 0.0


def test_dice_half_overlap():
    a = np.zeros((8, 8), int)
    b = np.zeros((8, 8), int)
    a[0, 0:4] = 1
    b[0, 2:6] = 1
    assert dice(mask(a), mask(b), "road") == oracles.dice_sets(a, b, 1) == 0.5


def test_dice_both_empty_is_one():
    z = mask(np.zeros((8, 8), int))
    assert dice(z, z, "road") == 1.0


def test_dice_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        dice(mask(np.zeros((8, 8), int)), mask(np.zeros((8, 9), int)), "road")
    with pytest.raises(DimensionMismatch):
        dice(mask(np.zeros((8, 8), int)), mask(np.zeros((8, 8), int), ("other", "road", "sand")), "road")


_masks = arrays(np.int64, (6, 6), elements=st.integers(0, 2))


@given(_masks, _masks, st.sampled_from(LABELS))
def test_dice_symmetric_and_bounded(a, b, label):
    d = dice(mask(a), mask(b), label)
    assert d == dice(mask(b), mask(a), label)
    assert 0.0 <= d <= 1.0
    cls = LABELS.index(label)
    assert (d == 1.0) == np.array_equal(a == cls, b == cls)
    assert d == oracles.dice_sets(a, b, cls)


# coverage_report

def test_identity_corpus_at_quarter_coverage():
    ids = np.zeros((8, 8), int)
    ids[:4, :4] = 1  # 16 of 64 pixels
    m = mask(ids)
    rep = coverage_report([(m, m)] * 7, "road")
    assert rep.counts[2] == 7 and sum(rep.counts) == 7
    assert rep.dice_mean[2] == 1.0 and rep.dice_variance[2] == 0.0
    assert math.isnan(rep.dice_mean[0])


def test_single_pair_low_coverage():
    truth = np.zeros((10, 10), int)
    pred = np.zeros((10, 10), int)
    truth[0, 0:4] = 1  # coverage 0.04
    pred[0, 2:6] = 1
    rep = coverage_report([(mask(truth), mask(pred))], "road")
    assert oracles.dice_sets(truth, pred, 1) == 0.5
    assert rep.counts[0] == 1
    assert rep.dice_mean[0] == 0.5 and rep.dice_variance[0] == 0.0


def test_empty_corpus():
    with pytest.raises(EmptyCorpus):
        coverage_report([], "road")


def test_bin_edges_and_full_coverage():
    assert [coverage_bin(x) for x in (0.0, 0.0999, 0.1, 0.5, 0.95, 1.0)] == [0, 0, 1, 5, 9, 9]


@given(st.lists(st.tuples(_masks, _masks), min_size=1, max_size=6))
def test_report_counts_and_variance(pairs):
    rep = coverage_report([(mask(a), mask(b)) for a, b in pairs], "road")
    assert sum(rep.counts) == len(pairs)
    assert rep.edges == tuple(i / 10 for i in range(11))
    for count, var in zip(rep.counts, rep.dice_variance):
        assert (count == 0 and math.isnan(var)) or var >= 0.0


# components, landmarks, goal selection

@given(arrays(bool, (12, 12)))
def test_components_match_flood_fill(binary):
    labelled, sizes = components(binary)
    ref_labels, ref_sizes = oracles.components_bfs(binary)
    assert np.array_equal(labelled, ref_labels)
    assert list(sizes[1:]) == ref_sizes[1:]


def _blob_mask(h, w, blobs, labels=("other", "road", "car")):
    ids = np.zeros((h, w), int)
    for cls, r0, r1, c0, c1 in blobs:
        ids[r0:r1, c0:c1] = cls
    return LabelMask(labels, ids)


def test_detect_landmark_size():
    m = _blob_mask(20, 20, [(2, 3, 8, 4, 10), (2, 15, 17, 0, 3)])  # 30-pixel and 6-pixel blobs
    ref_labels, ref_sizes = oracles.components_bfs(m.class_ids == 2)
    region = detect_landmark(m, "car", 20)
    assert region is not None and region.pixel_count == max(ref_sizes) == 30
    r0, c0, r1, c1 = region.bbox
    assert r0 <= region.centroid[0] <= r1 and c0 <= region.centroid[1] <= c1


def test_detect_landmark_below_threshold():
    m = _blob_mask(20, 20, [(2, 0, 2, 0, 5)])
    assert detect_landmark(m, "car", 20) is None


def test_detect_landmark_unknown_label():
    with pytest.raises(UnknownLabel):
        detect_landmark(_blob_mask(8, 8, []), "tree", 1)


def test_goal_on_rectangular_blob():
    m = _blob_mask(100, 80, [(1, 60, 91, 30, 51)])
    rows, cols = np.nonzero(m.class_ids == 1)
    assert select_goal_pixel(m, "road", (60, 90)) == (75, 40)
    in_band = rows < 90
    # centroid rounded half up: rows 60..89 average to 74.5
    assert (math.floor(rows[in_band].mean() + 0.5), math.floor(cols[in_band].mean() + 0.5)) == (75, 40)


def test_goal_picks_larger_component():
    m = _blob_mask(40, 40, [(1, 20, 30, 2, 12), (1, 20, 24, 25, 35)])  # 100 and 40 pixels
    labelled, sizes = oracles.components_bfs(m.class_ids == 1)
    big = int(np.argmax(sizes[1:])) + 1
    rows, cols = np.nonzero(labelled == big)
    assert select_goal_pixel(m, "road", (10, 40)) == (int(rows.mean() + 0.5), int(cols.mean() + 0.5))


def test_goal_missing_terrain():
    m = _blob_mask(20, 20, [(1, 0, 5, 0, 20)])
    with pytest.raises(NoTraversableRegion):
        select_goal_pixel(m, "road", (10, 20))


def test_goal_centroid_off_component_snaps_to_nearest():
    # U shape: centroid falls in the hole
    m = _blob_mask(20, 20, [(1, 5, 15, 2, 5), (1, 5, 15, 15, 18), (1, 12, 15, 2, 18)])
    r, c = select_goal_pixel(m, "road", (0, 20))
    assert m.class_ids[r, c] == 1
    rows, cols = np.nonzero(m.class_ids == 1)
    cr, cc = int(rows.mean() + 0.5), int(cols.mean() + 0.5)
    assert m.class_ids[cr, cc] == 0
    assert (r - cr) ** 2 + (c - cc) ** 2 == np.min((rows - cr) ** 2 + (cols - cc) ** 2)


@given(arrays(np.int64, (12, 12), elements=st.integers(0, 2)), st.integers(0, 11), st.integers(1, 12))
def test_goal_pixel_is_preferred_terrain(ids, lo, span):
    hi = min(12, lo + span)
    m = mask(ids)
    try:
        r, c = select_goal_pixel(m, "road", (lo, hi))
    except NoTraversableRegion:
        assert not np.any(ids[lo:hi] == 1)
        return
    assert ids[r, c] == 1 and lo <= r < hi

import numpy as np
import pytest

from embdiff.diffusion.unet import AttentionMap, AttentionStack
from embdiff.errors import ConfigError, ContractError
from embdiff.seg import (
    FAILURE_BUBBLES,
    FAILURE_INCOMPLETE,
    FAILURE_OVERSEGMENTATION,
    AggregatedAttention,
    SegmentSet,
    SegParams,
    aggregate,
    anchor_cells,
    diagnose_failure_modes,
    grid_search,
    iterative_merge,
    kl_sym,
    masks_to_image,
    match_and_score,
    random_partition,
)


def two_block_attention(grid=8, rng=None, jitter=0.0):
    """Cells attend uniformly within their (left|right) half; optional noise."""
    cells = np.arange(grid * grid)
    block = (cells % grid) >= grid // 2
    probs = np.zeros((grid * grid, grid * grid))
    for i in range(grid * grid):
        same = block == block[i]
        probs[i, same] = 1.0 / same.sum()
    if jitter:
        probs = probs + rng.uniform(0, jitter, size=probs.shape)
        probs /= probs.sum(axis=1, keepdims=True)
    return AggregatedAttention(probs=probs.reshape(grid, grid, grid * grid), grid=grid), block


def segments_cross_boundary(segs, block):
    crossing = 0
    for mask in segs.grid_masks:
        if len(set(block[mask.ravel()])) > 1:
            crossing += 1
    return crossing


class TestKlSym:
    def test_equal_is_zero(self):
        p = np.array([0.2, 0.3, 0.5])
        assert kl_sym(p, p) == 0.0

    def test_symmetry(self):
        rng = np.random.default_rng(0)
        p = rng.dirichlet(np.ones(10))
        q = rng.dirichlet(np.ones(10))
        assert abs(kl_sym(p, q) - kl_sym(q, p)) < 1e-12

    def test_floored_hand_value(self):
        p = np.array([1.0, 0.0])
        q = np.array([0.5, 0.5])
        floor = 1e-12
        pf = np.maximum(p, floor)
        expected = (
            pf[0] * np.log(pf[0] / q[0])
            + pf[1] * np.log(pf[1] / q[1])
            + q[0] * np.log(q[0] / pf[0])
            + q[1] * np.log(q[1] / pf[1])
        )
        assert abs(kl_sym(p, q) - expected) < 1e-9

    def test_nonnegative(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            p = rng.dirichlet(np.ones(6))
            q = rng.dirichlet(np.ones(6))
            assert kl_sym(p, q) >= 0.0


class TestAggregate:
    def test_single_block_at_grid_is_identity(self):
        rng = np.random.default_rng(2)
        probs = rng.dirichlet(np.ones(16), size=16)
        stack = AttentionStack(timestep=0, maps=[AttentionMap("b", 4, 4, probs)])
        agg = aggregate(stack, 4)
        assert np.allclose(agg.probs.reshape(16, 16), probs, atol=1e-6)

    def test_two_identical_blocks(self):
        rng = np.random.default_rng(3)
        probs = rng.dirichlet(np.ones(16), size=16)
        stack = AttentionStack(
            timestep=0,
            maps=[AttentionMap("a", 4, 4, probs), AttentionMap("b", 4, 4, probs)],
        )
        agg = aggregate(stack, 4)
        assert np.allclose(agg.probs.reshape(16, 16), probs, atol=1e-6)

    def test_resolution_weighting_arithmetic(self):
        # an 8x8-native uniform map and a 16x16-native one-hot-ish map: the
        # blend must be (16*map16 + 8*uniform) / 24 row by row
        g = 16
        rng = np.random.default_rng(4)
        map16 = rng.dirichlet(np.ones(g * g), size=g * g)
        uniform8 = np.full((64, 64), 1.0 / 64)
        stack = AttentionStack(
            timestep=0,
            maps=[AttentionMap("fine", g, g, map16), AttentionMap("coarse", 8, 8, uniform8)],
        )
        agg = aggregate(stack, g)
        expected = (16 * map16 + 8 * np.full((g * g, g * g), 1.0 / (g * g))) / 24
        assert np.allclose(agg.probs.reshape(g * g, g * g), expected, atol=1e-6)

    def test_rows_remain_distributions(self):
        rng = np.random.default_rng(5)
        maps = [
            AttentionMap("a", 8, 8, rng.dirichlet(np.ones(64), size=64)),
            AttentionMap("b", 4, 4, rng.dirichlet(np.ones(16), size=16)),
        ]
        agg = aggregate(AttentionStack(timestep=0, maps=maps), 8)
        sums = agg.probs.sum(axis=-1)
        assert np.allclose(sums, 1.0, atol=1e-5)
        assert (agg.probs >= 0).all()

    def test_empty_stack_rejected(self):
        with pytest.raises(ContractError):
            aggregate(AttentionStack(timestep=0, maps=[]), 8)


class TestAnchors:
    def test_full_grid(self):
        assert anchor_cells(4, 4).tolist() == list(range(16))

    def test_half_grid_even_spacing(self):
        cells = anchor_cells(16, 8)
        rows = cells // 16
        assert sorted(set(rows)) == [1, 3, 5, 7, 9, 11, 13, 15]

    def test_anchor_exceeds_grid(self):
        with pytest.raises(ContractError):
            anchor_cells(8, 9)


class TestIterativeMerge:
    def test_exact_partition_recovered(self):
        agg, block = two_block_attention(8)
        for tau in (1e-3, 0.05, 0.5, 5.0):
            segs = iterative_merge(agg, SegParams(tau=tau, timestep=0, anchor_side=4))
            assert segs.n_segments == 2
            assert segments_cross_boundary(segs, block) == 0

    def test_tiny_tau_never_crosses(self):
        rng = np.random.default_rng(6)
        agg, block = two_block_attention(8, rng=rng, jitter=1e-4)
        segs = iterative_merge(agg, SegParams(tau=1e-9, timestep=0, anchor_side=4))
        assert segs.n_segments >= 2
        assert segments_cross_boundary(segs, block) == 0

    def test_huge_tau_single_segment(self):
        agg, _ = two_block_attention(8)
        segs = iterative_merge(agg, SegParams(tau=1e9, timestep=0, anchor_side=4))
        assert segs.n_segments == 1
        assert segs.grid_masks[0].all()

    def test_monotone_in_tau(self):
        rng = np.random.default_rng(7)
        agg, _ = two_block_attention(8, rng=rng, jitter=2e-3)
        taus = np.logspace(-6, 3, 10)
        counts = [
            iterative_merge(agg, SegParams(tau=float(t), timestep=0, anchor_side=4)).n_segments
            for t in taus
        ]
        assert all(a >= b for a, b in zip(counts, counts[1:]))

    def test_disjoint_cover(self):
        rng = np.random.default_rng(8)
        probs = rng.dirichlet(np.ones(64), size=64)
        agg = AggregatedAttention(probs=probs.reshape(8, 8, 64), grid=8)
        segs = iterative_merge(agg, SegParams(tau=0.3, timestep=0, anchor_side=8))
        union = np.zeros((8, 8), dtype=int)
        for mask in segs.grid_masks:
            union += mask.astype(int)
        assert (union == 1).all()

    def test_deterministic(self):
        rng = np.random.default_rng(9)
        probs = rng.dirichlet(np.ones(64), size=64)
        agg = AggregatedAttention(probs=probs.reshape(8, 8, 64), grid=8)
        p = SegParams(tau=0.4, timestep=0, anchor_side=4)
        a = iterative_merge(agg, p)
        b = iterative_merge(agg, p)
        assert len(a.grid_masks) == len(b.grid_masks)
        for ma, mb in zip(a.grid_masks, b.grid_masks):
            assert np.array_equal(ma, mb)


class TestMasksToImage:
    def test_cell_becomes_block(self):
        mask = np.zeros((16, 16), dtype=bool)
        mask[3, 5] = True
        segs = SegmentSet(grid=16, grid_masks=[mask, ~mask])
        lifted = masks_to_image(segs, 64)
        assert lifted.image_masks[0].sum() == 16  # one cell -> 4x4 pixels
        assert lifted.image_masks[0][12:16, 20:24].all()

    def test_full_grid_single_segment(self):
        segs = SegmentSet(grid=8, grid_masks=[np.ones((8, 8), dtype=bool)])
        lifted = masks_to_image(segs, 32)
        assert lifted.image_masks[0].all()

    def test_checkerboard(self):
        cb = np.indices((4, 4)).sum(axis=0) % 2 == 0
        lifted = masks_to_image(SegmentSet(grid=4, grid_masks=[cb, ~cb]), 8)
        expected = np.kron(cb, np.ones((2, 2), dtype=bool))
        assert np.array_equal(lifted.image_masks[0], expected)

    def test_disjointness_preserved(self):
        rng = np.random.default_rng(10)
        labels = rng.integers(0, 3, size=(8, 8))
        segs = SegmentSet(grid=8, grid_masks=[labels == i for i in range(3)])
        lifted = masks_to_image(segs, 24)
        total = sum(m.astype(int) for m in lifted.image_masks)
        assert (total == 1).all()


class TestMatchAndScore:
    def test_perfect_candidates(self):
        gt = {"left": np.zeros((8, 8), dtype=bool), "right": np.zeros((8, 8), dtype=bool)}
        gt["left"][2:6, 0:3] = True
        gt["right"][2:6, 5:8] = True
        segs = SegmentSet(grid=8, grid_masks=[gt["left"].copy(), gt["right"].copy()])
        result = match_and_score(segs, gt)
        assert result.per_structure == {"left": 1.0, "right": 1.0}
        assert result.mean_dice == 1.0

    def test_full_frame_candidate_matches_one_lung(self):
        side = 20
        gt = {}
        for name, col in (("l", 0), ("r", 10)):
            m = np.zeros((side, side), dtype=bool)
            m[0:4, col : col + 10] = True  # 40 px = 10% of the frame
            gt[name] = m
        full = np.ones((side, side), dtype=bool)
        segs = SegmentSet(grid=side, grid_masks=[full])
        result = match_and_score(segs, gt)
        expected = 2 * 40 / (40 + 400)
        matched = [v for v in result.per_structure.values() if v > 0]
        assert len(matched) == 1
        assert abs(matched[0] - expected) < 1e-12
        assert result.mean_dice == pytest.approx(expected / 2)

    def test_greedy_assignment_no_reuse(self):
        gt = {"a": np.zeros((6, 6), dtype=bool), "b": np.zeros((6, 6), dtype=bool)}
        gt["a"][:3] = True
        gt["b"][3:] = True
        good = gt["a"] | np.zeros((6, 6), dtype=bool)
        segs = SegmentSet(grid=6, grid_masks=[good, gt["b"].copy()])
        result = match_and_score(segs, gt)
        assert result.pairs["a"] == 0 and result.pairs["b"] == 1

    def test_combined_union_of_two_best(self):
        gt = {"a": np.zeros((6, 6), dtype=bool), "b": np.zeros((6, 6), dtype=bool)}
        gt["a"][:2] = True
        gt["b"][4:] = True
        segs = SegmentSet(
            grid=6,
            grid_masks=[gt["a"].copy(), gt["b"].copy(), np.zeros((6, 6), dtype=bool)],
        )
        result = match_and_score(segs, gt)
        assert result.combined == 1.0

    def test_errors(self):
        with pytest.raises(ContractError):
            match_and_score(SegmentSet(grid=4, grid_masks=[]), {"a": np.ones((4, 4), dtype=bool)})
        segs = SegmentSet(grid=4, grid_masks=[np.ones((4, 4), dtype=bool)])
        with pytest.raises(ContractError):
            match_and_score(segs, {})


class TestGridSearch:
    class _Record:
        def __init__(self, masks):
            self.masks = masks
            self.side = 8

    def _fixture_records(self):
        agg, block = two_block_attention(8)
        left = (~block).reshape(8, 8)
        right = block.reshape(8, 8)
        rec = self._Record({"left": left, "right": right})
        return [rec], agg

    def test_single_point_grid(self):
        records, agg = self._fixture_records()
        segmenter = lambda rec, params: iterative_merge(agg, params)
        params = SegParams(tau=0.5, timestep=100, anchor_side=4)
        best, table = grid_search(records, [params], segmenter)
        assert best == params and len(table) == 1

    def test_fixture_optimum_found(self):
        records, agg = self._fixture_records()
        segmenter = lambda rec, params: iterative_merge(agg, params)
        grid = [
            SegParams(tau=1e9, timestep=0, anchor_side=4),  # all-merge: one segment
            SegParams(tau=0.5, timestep=0, anchor_side=4),  # recovers the partition
        ]
        best, table = grid_search(records, grid, segmenter)
        assert best.tau == 0.5
        assert max(r["mean_dice"] for r in table) == 1.0

    def test_empty_grid_rejected(self):
        with pytest.raises(ConfigError):
            grid_search([], [], lambda r, p: None)


def test_random_partition_properties():
    rng = np.random.default_rng(11)
    segs = random_partition(8, 5, rng)
    union = sum(m.astype(int) for m in segs.grid_masks)
    assert (union == 1).all()
    assert 1 <= segs.n_segments <= 5


class TestFailureModeDiagnosis:
    """Fixtures for the known failure taxonomy: each class must be detected
    and reported, not assumed absent."""

    def _gt(self, side=32):
        gt = np.zeros((side, side), dtype=bool)
        gt[8:24, 4:28] = True
        return {"organ": gt}

    def test_incomplete_segmentation_detected(self):
        side = 32
        tiny = np.zeros((side, side), dtype=bool)
        tiny[10:12, 10:12] = True
        segs = SegmentSet(grid=side, grid_masks=[tiny])
        failures = diagnose_failure_modes(segs, self._gt(side))
        assert FAILURE_INCOMPLETE in failures

    def test_oversegmentation_detected(self):
        side = 32
        labels = np.arange(side * side).reshape(side, side) % 8
        masks = [labels == i for i in range(8)]
        failures = diagnose_failure_modes(SegmentSet(grid=side, grid_masks=masks), self._gt(side))
        assert FAILURE_OVERSEGMENTATION in failures

    def test_bubble_artifacts_detected(self):
        side = 32
        bubbles = np.zeros((side, side), dtype=bool)
        for r in range(2, side, 6):
            for c in range(2, side, 6):
                bubbles[r : r + 2, c : c + 2] = True
        rest = ~bubbles
        failures = diagnose_failure_modes(
            SegmentSet(grid=side, grid_masks=[bubbles, rest]), self._gt(side)
        )
        assert FAILURE_BUBBLES in failures

    def test_clean_segmentation_reports_nothing(self):
        side = 32
        gt = self._gt(side)
        good = gt["organ"].copy()
        segs = SegmentSet(grid=side, grid_masks=[good, ~good])
        assert diagnose_failure_modes(segs, gt) == set()

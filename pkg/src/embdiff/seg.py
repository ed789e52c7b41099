"""Zero-shot segmentation from captured UNet self-attention.

Per-block attention maps are lifted to a common grid (bilinear in both query
and key dimensions, rows renormalized, blocks weighted by native resolution).
Anchor-cell distributions seed proposals that merge greedily, lowest
symmetric KL first, while any pair falls under the threshold. Cells are then
assigned to the proposal giving them the largest probability, which yields
disjoint masks covering the grid.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from .diffusion.unet import AttentionStack
from .errors import ConfigError, ContractError
from .metrics import dice

log = logging.getLogger(__name__)

KL_FLOOR = 1e-12


@dataclass(frozen=True)
class SegParams:
    tau: float  # merge threshold on symmetric KL
    timestep: int  # capture timestep
    anchor_side: int  # A: anchors form an A x A grid
    checkpoint: str | None = None

    def __post_init__(self):
        if self.tau <= 0:
            raise ContractError("tau must be positive")
        if self.anchor_side < 1:
            raise ContractError("anchor_side must be >= 1")


@dataclass
class AggregatedAttention:
    """(G, G, G*G): one distribution over all cells per spatial cell."""

    probs: np.ndarray
    grid: int


@dataclass
class SegmentSet:
    """Disjoint masks covering the grid, plus optional image-resolution lift."""

    grid: int
    grid_masks: list[np.ndarray]
    image_masks: list[np.ndarray] = field(default_factory=list)

    @property
    def n_segments(self) -> int:
        return len(self.grid_masks)


def aggregate(stack: AttentionStack, target_grid: int) -> AggregatedAttention:
    """Lift every captured map to the target grid and average them.

    Each block is weighted proportionally to its native side length, so finer
    maps dominate. Rows are renormalized after each interpolation.
    """
    if not stack.maps:
        raise ContractError("attention stack is empty")
    g = target_grid
    total = np.zeros((g, g, g * g), dtype=np.float64)
    weight_sum = 0.0
    for amap in stack.maps:
        h, w = amap.h, amap.w
        arr = torch.from_numpy(amap.probs.astype(np.float32)).reshape(h, w, h, w)
        # key dimensions -> (g, g)
        t = arr.reshape(h * w, 1, h, w)
        t = F.interpolate(t, size=(g, g), mode="bilinear", align_corners=False)
        # query dimensions -> (g, g)
        t = t.reshape(h, w, g * g).permute(2, 0, 1)[:, None]
        t = F.interpolate(t, size=(g, g), mode="bilinear", align_corners=False)
        probs = t[:, 0].permute(1, 2, 0).numpy().astype(np.float64)  # (g, g, g*g)
        probs /= probs.sum(axis=-1, keepdims=True)
        weight = float(h)
        total += weight * probs
        weight_sum += weight
    total /= weight_sum
    return AggregatedAttention(probs=total, grid=g)


def kl_sym(p: np.ndarray, q: np.ndarray, floor: float = KL_FLOOR) -> float:
    """KL(p||q) + KL(q||p) on floor-clamped distributions."""
    p = np.maximum(np.asarray(p, dtype=np.float64), floor)
    q = np.maximum(np.asarray(q, dtype=np.float64), floor)
    if p.shape != q.shape:
        raise ContractError("distributions must have the same length")
    return float(np.sum(p * np.log(p / q)) + np.sum(q * np.log(q / p)))


def _pairwise_kl_sym(P: np.ndarray) -> np.ndarray:
    """All-pairs symmetric KL: sum_d (p_i - p_j) (log p_i - log p_j)."""
    P = np.maximum(P, KL_FLOOR)
    L = np.log(P)
    s = np.sum(P * L, axis=1)
    cross = P @ L.T
    d = s[:, None] + s[None, :] - cross - cross.T
    return np.maximum(d, 0.0)


def anchor_cells(grid: int, anchor_side: int) -> np.ndarray:
    """Flat indices of an anchor_side x anchor_side evenly spaced cell grid."""
    if anchor_side > grid:
        raise ContractError("anchor grid cannot exceed the attention grid")
    pos = np.floor((np.arange(anchor_side) + 0.5) * grid / anchor_side).astype(int)
    rows, cols = np.meshgrid(pos, pos, indexing="ij")
    return (rows * grid + cols).ravel()


def iterative_merge(agg: AggregatedAttention, params: SegParams) -> SegmentSet:
    """Merge anchor distributions under the KL threshold, then label cells.

    Merge order is lowest divergence first with lexicographic tie-breaks;
    merging replaces a pair by its elementwise average. Every grid cell joins
    the surviving proposal that assigns it the highest probability.
    """
    g = agg.grid
    flat = agg.probs.reshape(g * g, g * g)
    proposals = flat[anchor_cells(g, params.anchor_side)].copy()

    d = _pairwise_kl_sym(proposals)
    np.fill_diagonal(d, np.inf)
    active = list(range(len(proposals)))
    while len(active) > 1:
        sub = d[np.ix_(active, active)]
        k = int(np.argmin(sub))
        i_loc, j_loc = divmod(k, len(active))
        if sub[i_loc, j_loc] >= params.tau:
            break
        if i_loc > j_loc:
            i_loc, j_loc = j_loc, i_loc
        i, j = active[i_loc], active[j_loc]
        proposals[i] = (proposals[i] + proposals[j]) / 2.0
        active.remove(j)
        floored = np.maximum(proposals[i], KL_FLOOR)
        li = np.log(floored)
        for other in active:
            if other == i:
                continue
            po = np.maximum(proposals[other], KL_FLOOR)
            val = float(np.sum((floored - po) * (li - np.log(po))))
            d[i, other] = d[other, i] = max(val, 0.0)

    survivors = proposals[active]
    # cell -> proposal with the max probability for that cell (ties: lowest index)
    assignment = np.argmax(survivors, axis=0)
    masks = []
    for idx in range(len(active)):
        cells = assignment == idx
        if cells.any():
            masks.append(cells.reshape(g, g))
    return SegmentSet(grid=g, grid_masks=masks)


def masks_to_image(segments: SegmentSet, image_side: int) -> SegmentSet:
    """Nearest-neighbor lift of the grid assignment to image resolution."""
    g = segments.grid
    ys = (np.arange(image_side) * g) // image_side
    image_masks = [m[np.ix_(ys, ys)] for m in segments.grid_masks]
    return SegmentSet(grid=g, grid_masks=segments.grid_masks, image_masks=image_masks)


@dataclass
class MatchResult:
    per_structure: dict[str, float]
    mean_dice: float
    combined: float  # union of the two best candidates vs the merged ground truth
    pairs: dict[str, int]  # structure -> matched candidate index


def match_and_score(
    candidates: SegmentSet,
    gt_masks: dict[str, np.ndarray],
    oracle_selection: bool = True,
) -> MatchResult:
    """Greedy one-to-one matching of candidates to structures by Dice.

    With oracle_selection every candidate is eligible and pairs are taken in
    descending Dice order. Without it, only the len(gt_masks) largest
    candidates after dropping the largest one (taken as background) compete.
    Unmatched structures score 0.
    """
    if not candidates.grid_masks:
        raise ContractError("need at least one candidate segment")
    if not gt_masks:
        raise ContractError("need at least one ground-truth mask")
    masks = candidates.image_masks or candidates.grid_masks

    eligible = list(range(len(masks)))
    if not oracle_selection and len(masks) > 1:
        by_area = sorted(eligible, key=lambda i: (-int(masks[i].sum()), i))
        eligible = sorted(by_area[1 : 1 + len(gt_masks)])

    scored = []
    for name in sorted(gt_masks):
        for ci in eligible:
            scored.append((dice(masks[ci], gt_masks[name]), name, ci))
    scored.sort(key=lambda item: (-item[0], item[1], item[2]))

    per_structure = {name: 0.0 for name in gt_masks}
    pairs: dict[str, int] = {}
    used_candidates: set[int] = set()
    for score, name, ci in scored:
        if name in pairs or ci in used_candidates:
            continue
        pairs[name] = ci
        used_candidates.add(ci)
        per_structure[name] = score

    gt_union = np.zeros_like(next(iter(gt_masks.values())), dtype=bool)
    for m in gt_masks.values():
        gt_union |= m.astype(bool)
    union_scores = sorted(
        ((dice(masks[ci], gt_union), ci) for ci in eligible), key=lambda x: (-x[0], x[1])
    )
    top = [ci for _, ci in union_scores[:2]]
    cand_union = np.zeros_like(gt_union)
    for ci in top:
        cand_union |= masks[ci].astype(bool)
    combined = dice(cand_union, gt_union)

    return MatchResult(
        per_structure=per_structure,
        mean_dice=float(np.mean(list(per_structure.values()))),
        combined=combined,
        pairs=pairs,
    )


FAILURE_INCOMPLETE = "incomplete_segmentation"
FAILURE_OVERSEGMENTATION = "oversegmentation"
FAILURE_BUBBLES = "bubble_artifacts"


def diagnose_failure_modes(
    candidates: SegmentSet, gt_masks: dict[str, np.ndarray]
) -> set[str]:
    """Heuristic taxonomy of known failure classes, for reporting.

    - incomplete_segmentation: no candidate recovers even half of the merged
      ground truth (typical of too-high thresholds or early checkpoints);
    - oversegmentation: at least four candidates per structure (too-low
      thresholds fragment the grid);
    - bubble_artifacts: some sizable candidate is scattered into many small
      connected components instead of one region.
    """
    from scipy import ndimage

    masks = candidates.image_masks or candidates.grid_masks
    failures: set[str] = set()

    gt_union = np.zeros_like(next(iter(gt_masks.values())), dtype=bool)
    for m in gt_masks.values():
        gt_union |= m.astype(bool)
    gt_area = max(int(gt_union.sum()), 1)
    best_recall = max(int((m & gt_union).sum()) / gt_area for m in masks)
    if best_recall < 0.5:
        failures.add(FAILURE_INCOMPLETE)

    if len(masks) >= 4 * len(gt_masks):
        failures.add(FAILURE_OVERSEGMENTATION)

    total = masks[0].size
    for m in masks:
        area = int(m.sum())
        if area < 0.02 * total:
            continue
        labelled, n_comp = ndimage.label(m)
        if n_comp >= 4:
            sizes = ndimage.sum_labels(m, labelled, index=range(1, n_comp + 1))
            if sizes.max() < 0.5 * area:
                failures.add(FAILURE_BUBBLES)
                break
    return failures


def random_partition(grid: int, n_segments: int, rng: np.random.Generator) -> SegmentSet:
    """Uniform random cell assignment into n_segments non-empty groups."""
    n_segments = max(1, min(n_segments, grid * grid))
    labels = rng.integers(0, n_segments, size=grid * grid)
    labels[rng.permutation(grid * grid)[:n_segments]] = np.arange(n_segments)
    masks = [(labels == i).reshape(grid, grid) for i in range(n_segments)]
    return SegmentSet(grid=grid, grid_masks=[m for m in masks if m.any()])


def grid_search(records, grid_params: list[SegParams], segmenter):
    """Exhaustively score params over records; returns (best, table rows).

    segmenter(record, params) -> SegmentSet at image resolution. Score is the
    mean over records of the per-structure mean Dice. Ties keep grid order.
    """
    if not grid_params:
        raise ConfigError("parameter grid is empty")
    table = []
    best = None
    for params in grid_params:
        scores = []
        combined = []
        for rec in records:
            segs = segmenter(rec, params)
            result = match_and_score(segs, rec.masks)
            scores.append(result.mean_dice)
            combined.append(result.combined)
        row = {
            "tau": params.tau,
            "timestep": params.timestep,
            "anchor_side": params.anchor_side,
            "checkpoint": params.checkpoint,
            "mean_dice": float(np.mean(scores)),
            "sd_dice": float(np.std(scores)),
            "combined": float(np.mean(combined)),
        }
        table.append(row)
        if best is None or row["mean_dice"] > best[1]["mean_dice"]:
            best = (params, row)
    return best[0], table

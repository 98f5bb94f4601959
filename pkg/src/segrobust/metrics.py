"""Per-patient, per-target segmentation metrics: DSC, HD95, volumes.

HD95 follows the max-of-directed-percentiles convention: the 95th
percentile (linear interpolation) of surface-to-surface distances is taken
in each direction and the larger one reported. A pooled variant (single
percentile over both directions' distances) is available for sensitivity
checks. Distances are measured between voxel centers in mm.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .edt import euclidean_distance_transform, squared_distance_grid
from .label_space import LabelScheme, TargetSpec, _binarize_unchecked, check_labels
from .volume_io import BinaryMask, VoxelGrid, validate_same_grid

__all__ = [
    "MetricRecord",
    "dice",
    "euclidean_distance_transform",
    "surface_voxels",
    "hd95",
    "volume_ml",
    "evaluate_patient",
    "evaluate_pair_specs",
    "emptiness_of",
    "MAX_DIRECTED",
    "POOLED",
]

MAX_DIRECTED = "max-directed"
POOLED = "pooled"
HD95_CONVENTIONS = (MAX_DIRECTED, POOLED)

BOTH_NONEMPTY = "both-nonempty"
PRED_EMPTY = "pred-empty"
REF_EMPTY = "ref-empty"
BOTH_EMPTY = "both-empty"


@dataclass(frozen=True)
class MetricRecord:
    """One patient, one target: overlap, boundary error, volumes."""

    patient_id: str
    target: str
    dsc: Optional[float]
    hd95_mm: Optional[float]
    vol_pred_ml: float
    vol_ref_ml: float
    emptiness: str


def emptiness_of(pred: BinaryMask, ref: BinaryMask) -> str:
    p, r = bool(pred.bits.any()), bool(ref.bits.any())
    if p and r:
        return BOTH_NONEMPTY
    if not p and r:
        return PRED_EMPTY
    if p and not r:
        return REF_EMPTY
    return BOTH_EMPTY


def dice(a: BinaryMask, b: BinaryMask) -> float:
    """2|A∩B| / (|A|+|B|); two empty masks agree perfectly (1.0)."""
    validate_same_grid([a, b])
    na = int(np.count_nonzero(a.bits))
    nb = int(np.count_nonzero(b.bits))
    if na + nb == 0:
        return 1.0
    inter = int(np.count_nonzero(a.bits & b.bits))
    return 2.0 * inter / (na + nb)


def volume_ml(mask: BinaryMask) -> float:
    """Foreground volume in milliliters."""
    sx, sy, sz = mask.spacing
    return int(np.count_nonzero(mask.bits)) * (sx * sy * sz) / 1000.0


def surface_voxels(mask: BinaryMask) -> BinaryMask:
    """Foreground voxels with at least one 6-neighbor background or out of bounds."""
    bits = mask.bits
    core = bits.copy()
    for axis in range(3):
        lead = [slice(None)] * 3
        lag = [slice(None)] * 3
        lead[axis] = slice(1, None)
        lag[axis] = slice(None, -1)
        shifted = np.zeros_like(bits)
        shifted[tuple(lag)] = bits[tuple(lead)]   # neighbor at +1; border sees background
        core &= shifted
        shifted = np.zeros_like(bits)
        shifted[tuple(lead)] = bits[tuple(lag)]   # neighbor at -1
        core &= shifted
    return BinaryMask(bits & ~core, mask.spacing, mask.affine)


def _bounding_slices(bits_list: Sequence[np.ndarray]) -> tuple[slice, slice, slice]:
    # joint foreground bounding box, padded by one voxel (crop borders must
    # behave as background, which holds because nothing true lies outside)
    lo = [None] * 3
    hi = [None] * 3
    for bits in bits_list:
        idx = np.nonzero(bits)
        for ax in range(3):
            axlo, axhi = int(idx[ax].min()), int(idx[ax].max())
            lo[ax] = axlo if lo[ax] is None else min(lo[ax], axlo)
            hi[ax] = axhi if hi[ax] is None else max(hi[ax], axhi)
    shape = bits_list[0].shape
    return tuple(
        slice(max(0, lo[ax] - 1), min(shape[ax], hi[ax] + 2)) for ax in range(3)
    )


def _directed_distances(
    from_surf: np.ndarray, to_surf: np.ndarray, spacing
) -> np.ndarray:
    d2 = squared_distance_grid(to_surf, spacing)
    return np.sqrt(d2[from_surf])


def hd95(a: BinaryMask, b: BinaryMask, convention: str = MAX_DIRECTED) -> Optional[float]:
    """95th-percentile Hausdorff distance between surface voxel sets, in mm.

    Returns None when either mask is empty; no finite value is principled
    there and callers report the exclusion count instead.
    """
    if convention not in HD95_CONVENTIONS:
        raise ValueError(f"unknown hd95 convention {convention!r}")
    validate_same_grid([a, b])
    if not a.bits.any() or not b.bits.any():
        return None
    surf_a = surface_voxels(a).bits
    surf_b = surface_voxels(b).bits
    box = _bounding_slices([surf_a, surf_b])
    sa = np.ascontiguousarray(surf_a[box])
    sb = np.ascontiguousarray(surf_b[box])
    d_ab = _directed_distances(sa, sb, a.spacing)
    d_ba = _directed_distances(sb, sa, a.spacing)
    if convention == POOLED:
        return float(np.percentile(np.concatenate([d_ab, d_ba]), 95))
    return float(max(np.percentile(d_ab, 95), np.percentile(d_ba, 95)))


def evaluate_patient(
    pred: VoxelGrid,
    ref: VoxelGrid,
    specs: Sequence[TargetSpec],
    scheme: LabelScheme,
    patient_id: str = "",
    hd95_convention: str = MAX_DIRECTED,
) -> list[MetricRecord]:
    """One MetricRecord per target spec, in spec order."""
    validate_same_grid([pred, ref])
    check_labels(pred, scheme)
    check_labels(ref, scheme)
    pairs = [(spec, spec) for spec in specs]
    return evaluate_pair_specs(
        pred, ref, pairs, scheme, scheme, patient_id, hd95_convention, checked=True
    )


def evaluate_pair_specs(
    pred: VoxelGrid,
    ref: VoxelGrid,
    spec_pairs: Sequence[tuple[TargetSpec, TargetSpec]],
    pred_scheme: LabelScheme,
    ref_scheme: LabelScheme,
    patient_id: str = "",
    hd95_convention: str = MAX_DIRECTED,
    checked: bool = False,
) -> list[MetricRecord]:
    """Metrics over (pred target, ref target) pairs that may live in
    different label vocabularies (comparator-style evaluation). Records are
    named after the prediction-side target."""
    if not checked:
        validate_same_grid([pred, ref])
        check_labels(pred, pred_scheme)
        check_labels(ref, ref_scheme)
    records = []
    for pred_spec, ref_spec in spec_pairs:
        mask_p = _binarize_unchecked(pred, pred_spec, pred_scheme)
        mask_r = _binarize_unchecked(ref, ref_spec, ref_scheme)
        state = emptiness_of(mask_p, mask_r)
        records.append(
            MetricRecord(
                patient_id=patient_id,
                target=pred_spec.name,
                dsc=dice(mask_p, mask_r),
                hd95_mm=hd95(mask_p, mask_r, hd95_convention),
                vol_pred_ml=volume_ml(mask_p),
                vol_ref_ml=volume_ml(mask_r),
                emptiness=state,
            )
        )
    return records

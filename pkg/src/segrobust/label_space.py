"""Label vocabularies and the label-to-binary-target algebra.

A LabelScheme names the integer codes in a segmentation volume; a
TargetSpec names a binary target as a union of classes. Region-wise
targets are the clinical composites (whole tumor, tumor core, enhancing
tumor); label-wise targets are the individual classes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import UnknownComparator, UnknownLabel
from .volume_io import BinaryMask, VoxelGrid

LABEL_WISE = "label-wise"
REGION_WISE = "region-wise"

NCR_NET = "NCR/NET"
ED = "ED"
ET = "ET"


@dataclass(frozen=True)
class LabelScheme:
    """Map from class name to positive integer code (0 is background)."""

    name: str
    labels: dict[str, int]

    def __post_init__(self):
        codes = list(self.labels.values())
        if any(int(c) <= 0 for c in codes):
            raise ValueError(f"label codes must be > 0, got {self.labels}")
        if len(set(codes)) != len(codes):
            raise ValueError(f"label codes must be distinct, got {self.labels}")
        object.__setattr__(self, "labels", {k: int(v) for k, v in self.labels.items()})

    def codes_for(self, classes: Iterable[str]) -> list[int]:
        missing = [c for c in classes if c not in self.labels]
        if missing:
            raise UnknownLabel(f"classes {missing} not in scheme {self.name!r}")
        return [self.labels[c] for c in classes]


@dataclass(frozen=True)
class TargetSpec:
    """A named binary target: the union of member classes."""

    name: str
    member_classes: frozenset[str]
    encoding: str

    def __post_init__(self):
        members = frozenset(self.member_classes)
        if not members:
            raise ValueError("a target needs at least one member class")
        if self.encoding not in (LABEL_WISE, REGION_WISE):
            raise ValueError(f"unknown encoding {self.encoding!r}")
        object.__setattr__(self, "member_classes", members)


BRATS_SCHEME = LabelScheme("brats", {NCR_NET: 1, ED: 2, ET: 4})
HD_GLIO_SCHEME = LabelScheme("hd-glio", {"NE": 1, "CE": 2})

# Region-wise composites: WT = NCR/NET + ED + ET, TC = NCR/NET + ET.
WT_SPEC = TargetSpec("WT", frozenset({NCR_NET, ED, ET}), REGION_WISE)
TC_SPEC = TargetSpec("TC", frozenset({NCR_NET, ET}), REGION_WISE)
ET_SPEC = TargetSpec("ET", frozenset({ET}), REGION_WISE)

REGION_SPECS = (WT_SPEC, TC_SPEC, ET_SPEC)


def label_specs(scheme: LabelScheme) -> tuple[TargetSpec, ...]:
    """One singleton label-wise target per class, in scheme order."""
    return tuple(TargetSpec(name, frozenset({name}), LABEL_WISE) for name in scheme.labels)


def load_scheme(path) -> LabelScheme:
    """Load a scheme definition file: {"name": ..., "labels": {...}}."""
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    return LabelScheme(str(obj["name"]), {str(k): int(v) for k, v in obj["labels"].items()})


def _present_codes(data: np.ndarray) -> np.ndarray:
    # bincount beats unique by a wide margin on u1/i2 volumes
    if data.dtype == np.uint8:
        counts = np.bincount(data.ravel(), minlength=256)
        return np.flatnonzero(counts)
    flat = data.ravel()
    if data.dtype == np.int16:
        counts = np.bincount(flat.astype(np.int32) + 32768, minlength=65536)
        return np.flatnonzero(counts) - 32768
    return np.unique(flat)


def check_labels(labels: VoxelGrid, scheme: LabelScheme) -> None:
    """Raise UnknownLabel if the volume holds a code outside scheme + {0}."""
    if labels.data.dtype.kind not in "iu":
        raise UnknownLabel(
            f"label volume must hold integers, got dtype {labels.data.dtype}"
        )
    allowed = set(scheme.labels.values()) | {0}
    present = _present_codes(labels.data)
    unknown = [int(c) for c in present if int(c) not in allowed]
    if unknown:
        raise UnknownLabel(f"codes {unknown} absent from scheme {scheme.name!r}")


def _binarize_unchecked(labels: VoxelGrid, spec: TargetSpec, scheme: LabelScheme) -> BinaryMask:
    codes = scheme.codes_for(spec.member_classes)
    bits = np.zeros(labels.dims, dtype=bool)
    for code in codes:
        bits |= labels.data == code
    return BinaryMask.like(labels, bits)


def binarize(labels: VoxelGrid, spec: TargetSpec, scheme: LabelScheme) -> BinaryMask:
    """Binary mask of voxels whose code maps to a class in the target.

    The mask shares dims/spacing/affine with the input. Codes outside the
    scheme raise UnknownLabel rather than silently merging to background.
    """
    check_labels(labels, scheme)
    return _binarize_unchecked(labels, spec, scheme)


# HD-GLIO comparator: pairs of (our target, comparator target) with the
# comparator side defined over the NE/CE vocabulary.
_HD_GLIO_PAIRS = (
    (ET_SPEC, TargetSpec("CE", frozenset({"CE"}), REGION_WISE)),
    (TargetSpec(ED, frozenset({ED}), LABEL_WISE), TargetSpec("NE", frozenset({"NE"}), LABEL_WISE)),
    (WT_SPEC, TargetSpec("NE+CE", frozenset({"NE", "CE"}), REGION_WISE)),
)


def correspondence_pairs(mode: str) -> Sequence[tuple[TargetSpec, TargetSpec]]:
    """Prespecified endpoint correspondences for an external comparator."""
    if mode != "hd-glio":
        raise UnknownComparator(f"no correspondence table for {mode!r}")
    return _HD_GLIO_PAIRS

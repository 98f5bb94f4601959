"""Inference scenarios and the targeted channel dropout transform.

The two inference scenarios are identity (all four channels provided) and
zero-fill of the FLAIR channel. Training-time targeted dropout replaces
one fixed channel with zeros at a configured probability per sample, drawn
from a counter-based stream so decisions replay exactly under any worker
layout.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import MissingChannel
from .rng import unit_uniform
from .volume_io import FLOAT_INTENSITY, Study, VoxelGrid

REQUIRED_WITHOUT_FLAIR = ("T1", "T1CE", "T2")


class Scenario(str, enum.Enum):
    FLAIR_PRESENT = "flair-present"
    FLAIR_ABSENT = "flair-absent"


@dataclass(frozen=True)
class DropoutConfig:
    """Targeted dropout of one channel at probability ``rate`` per sample."""

    rate: float
    channel: str = "FLAIR"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError(f"rate must be in [0, 1], got {self.rate}")


def _zero_grid_like(grid: VoxelGrid) -> VoxelGrid:
    zeros = np.zeros(grid.dims, dtype=np.float32)
    return VoxelGrid(zeros, grid.spacing, grid.affine, FLOAT_INTENSITY)


def zero_fill(study: Study, channel: str) -> Study:
    """Replace one channel's voxels with zeros; all other channels are shared."""
    if channel not in study.channels:
        raise MissingChannel(f"{study.patient_id}: channel {channel!r} not in study")
    grid = study.channels[channel]
    zeroed = grid.with_data(np.zeros(grid.dims, dtype=grid.data.dtype))
    return study.with_channel(channel, zeroed)


def dropout_decision(cfg: DropoutConfig, sample_index: int) -> bool:
    """The drop draw for one sample: pure in (cfg.seed, sample_index, cfg.rate)."""
    return unit_uniform(cfg.seed, sample_index) < cfg.rate


def sample_dropout(study: Study, cfg: DropoutConfig, sample_index: int) -> tuple[Study, bool]:
    """Deterministically drop (zero-fill) the configured channel for one sample.

    The decision is a pure function of (cfg.seed, sample_index, cfg.rate);
    channels other than cfg.channel are returned untouched for every draw.
    """
    if cfg.channel not in study.channels:
        raise MissingChannel(f"{study.patient_id}: channel {cfg.channel!r} not in study")
    if dropout_decision(cfg, sample_index):
        return zero_fill(study, cfg.channel), True
    return study, False


def apply_scenario(study: Study, scenario: Scenario) -> Study:
    """Prepare a study for one of the two prespecified inference scenarios.

    flair-present is the identity (all four channels must be there);
    flair-absent zero-fills FLAIR, synthesizing an all-zero FLAIR grid when
    the channel is physically missing from the study.
    """
    scenario = Scenario(scenario)
    if scenario is Scenario.FLAIR_PRESENT:
        missing = [c for c in ("T1", "T1CE", "T2", "FLAIR") if c not in study.channels]
        if missing:
            raise MissingChannel(f"{study.patient_id}: flair-present needs {missing}")
        return study
    missing = [c for c in REQUIRED_WITHOUT_FLAIR if c not in study.channels]
    if missing:
        raise MissingChannel(f"{study.patient_id}: flair-absent still needs {missing}")
    if "FLAIR" not in study.channels:
        template = study.channels[REQUIRED_WITHOUT_FLAIR[0]]
        return study.with_channel("FLAIR", _zero_grid_like(template))
    return zero_fill(study, "FLAIR")

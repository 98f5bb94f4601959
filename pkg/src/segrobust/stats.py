"""Cohort summaries, paired bootstrap, TOST equivalence, non-inferiority,
and Bland-Altman volume agreement.

All quantiles (medians, IQRs, bootstrap percentiles) use linear
interpolation between closest order statistics at positions (n-1)*q. The
equivalence and non-inferiority p-values are defined through the bootstrap
distribution of the median paired difference; boundary comparisons are
inclusive, so a replicate median sitting exactly on a margin counts
against equivalence. Zero bootstrap exceedances are displayed as "< 1/B".

DSC enters this module already converted to percentage points; the one
0-1 -> percent conversion lives at the caller's boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import AllMissing, LengthMismatch, TooFewPairs
from .rng import stream

Z_95 = 1.96  # normal quantile for 95% limits of agreement


@dataclass(frozen=True)
class StatConfig:
    """Equivalence margin (DSC percentage points), alpha, bootstrap size, seed."""

    margin_pp: float = 1.5
    alpha: float = 0.05
    replicates: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.margin_pp <= 0:
            raise ValueError(f"margin_pp must be > 0, got {self.margin_pp}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.replicates < 100:
            raise ValueError(f"replicates must be >= 100, got {self.replicates}")


@dataclass(frozen=True)
class CohortSummary:
    target: str
    n: int
    n_missing: int
    median: float
    q1: float
    q3: float


@dataclass(frozen=True)
class PairedComparison:
    target: str
    n_pairs: int
    median_diff_pp: float
    ci_low: float
    ci_high: float
    p_tost: Optional[float] = None
    p_noninferior: Optional[float] = None


@dataclass(frozen=True)
class BlandAltmanResult:
    bias_ml: float
    sd_ml: float
    loa_low_ml: float
    loa_high_ml: float
    bias_ci_low_ml: float
    bias_ci_high_ml: float
    n: int


def quantile(values: np.ndarray, q: float) -> float:
    """Linear interpolation between closest order statistics."""
    return float(np.quantile(np.asarray(values, dtype=float), q, method="linear"))


def _drop_missing(values: Sequence[Optional[float]]) -> tuple[np.ndarray, int]:
    present = [float(v) for v in values if v is not None and not math.isnan(float(v))]
    return np.array(present, dtype=float), len(values) - len(present)


def summarize(values: Sequence[Optional[float]], target: str = "") -> CohortSummary:
    """Median [Q1-Q3] over the non-missing values; missing are counted."""
    present, n_missing = _drop_missing(values)
    if present.size == 0:
        raise AllMissing(f"no non-missing values for {target or 'summary'}")
    return CohortSummary(
        target=target,
        n=len(values),
        n_missing=n_missing,
        median=quantile(present, 0.5),
        q1=quantile(present, 0.25),
        q3=quantile(present, 0.75),
    )


def macro_average(
    per_patient: dict[str, dict[str, Optional[float]]], targets: Sequence[str]
) -> dict[str, Optional[float]]:
    """Per-patient unweighted mean across a fixed target set.

    A patient missing any component (e.g. HD95 on an empty mask) gets a
    missing macro value; renormalizing over fewer targets would silently
    change the endpoint definition.
    """
    out: dict[str, Optional[float]] = {}
    for pid, by_target in per_patient.items():
        vals = [by_target.get(t) for t in targets]
        if any(v is None or math.isnan(float(v)) for v in vals):
            out[pid] = None
        else:
            out[pid] = float(np.mean([float(v) for v in vals]))
    return out


def replicate_medians(diffs: Sequence[float], cfg: StatConfig) -> np.ndarray:
    """Bootstrap medians, one per replicate, resampling pairs with replacement.

    Replicate r draws its indices from the (cfg.seed, r) counter stream, so
    any execution order produces the same replicate set bit for bit.
    """
    diffs = np.asarray(diffs, dtype=float)
    n = diffs.size
    if n < 2:
        raise TooFewPairs(f"paired bootstrap needs >= 2 pairs, got {n}")
    meds = np.empty(cfg.replicates, dtype=float)
    for r in range(cfg.replicates):
        idx = stream(cfg.seed, r).integers(0, n, size=n)
        meds[r] = np.median(diffs[idx])
    return meds


def paired_bootstrap_median(
    diffs: Sequence[float], cfg: StatConfig, meds: Optional[np.ndarray] = None
) -> tuple[float, float, float]:
    """Median of the paired differences with a 95% percentile bootstrap CI."""
    diffs = np.asarray(diffs, dtype=float)
    if meds is None:
        meds = replicate_medians(diffs, cfg)
    elif diffs.size < 2:
        raise TooFewPairs(f"paired bootstrap needs >= 2 pairs, got {diffs.size}")
    return (
        float(np.median(diffs)),
        quantile(meds, 0.025),
        quantile(meds, 0.975),
    )


def tost_equivalence(
    diffs: Sequence[float], cfg: StatConfig, meds: Optional[np.ndarray] = None
) -> float:
    """Two one-sided tests against ±margin, via bootstrap replicate medians.

    p1 is the replicate mass at or below -margin, p2 at or above +margin;
    the TOST p-value is their maximum. Equivalent when p < alpha.
    """
    if meds is None:
        meds = replicate_medians(diffs, cfg)
    p1 = float(np.count_nonzero(meds <= -cfg.margin_pp)) / meds.size
    p2 = float(np.count_nonzero(meds >= cfg.margin_pp)) / meds.size
    return max(p1, p2)


def noninferiority(
    diffs: Sequence[float], cfg: StatConfig, meds: Optional[np.ndarray] = None
) -> float:
    """One-sided test of (model - comparator) against the -margin bound."""
    if meds is None:
        meds = replicate_medians(diffs, cfg)
    return float(np.count_nonzero(meds <= -cfg.margin_pp)) / meds.size


def format_p(p: float, replicates: int) -> str:
    """Report p-values below bootstrap resolution as '< 1/B'."""
    if p == 0.0:
        return f"<{1.0 / replicates:g}"
    return f"{p:.3g}"


def bland_altman(
    vol_pred_ml: Sequence[float], vol_ref_ml: Sequence[float], cfg: StatConfig
) -> BlandAltmanResult:
    """Mean bias and 95% limits of agreement of predicted - reference volumes."""
    pred = np.asarray(vol_pred_ml, dtype=float)
    ref = np.asarray(vol_ref_ml, dtype=float)
    if pred.size != ref.size:
        raise LengthMismatch(f"{pred.size} predicted vs {ref.size} reference volumes")
    if pred.size < 2:
        raise TooFewPairs(f"Bland-Altman needs >= 2 pairs, got {pred.size}")
    d = pred - ref
    bias = float(np.mean(d))
    sd = float(np.std(d, ddof=1))
    n = d.size
    means = np.empty(cfg.replicates, dtype=float)
    for r in range(cfg.replicates):
        idx = stream(cfg.seed, r).integers(0, n, size=n)
        means[r] = np.mean(d[idx])
    return BlandAltmanResult(
        bias_ml=bias,
        sd_ml=sd,
        loa_low_ml=bias - Z_95 * sd,
        loa_high_ml=bias + Z_95 * sd,
        bias_ci_low_ml=quantile(means, 0.025),
        bias_ci_high_ml=quantile(means, 0.975),
        n=n,
    )

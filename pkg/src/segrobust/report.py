"""Report serialization: records CSV, JSON/Markdown summaries, SVG plots.

records.csv is the ground truth; the JSON summary is the machine-readable
report of record, and Markdown tables are a rendering of the JSON, never
an independent computation. DSC is printed to 1 decimal (already in %),
HD95 to 2 decimals, matching the cohort table format.
"""

from __future__ import annotations

import csv
import json
from typing import Optional, Sequence

from .metrics import MetricRecord
from .stats import BlandAltmanResult, CohortSummary, PairedComparison, format_p

RECORD_COLUMNS = (
    "patient_id",
    "target",
    "dsc",
    "hd95_mm",
    "vol_pred_ml",
    "vol_ref_ml",
    "emptiness",
)


def _fmt(value: Optional[float]) -> str:
    # repr() gives the shortest exact decimal; empty cell means missing
    return "" if value is None else repr(float(value))


def write_records_csv(records: Sequence[MetricRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RECORD_COLUMNS)
        for rec in records:
            writer.writerow(
                [
                    rec.patient_id,
                    rec.target,
                    _fmt(rec.dsc),
                    _fmt(rec.hd95_mm),
                    _fmt(rec.vol_pred_ml),
                    _fmt(rec.vol_ref_ml),
                    rec.emptiness,
                ]
            )


def read_records_csv(path) -> list[MetricRecord]:
    records = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            records.append(
                MetricRecord(
                    patient_id=row["patient_id"],
                    target=row["target"],
                    dsc=float(row["dsc"]) if row["dsc"] else None,
                    hd95_mm=float(row["hd95_mm"]) if row["hd95_mm"] else None,
                    vol_pred_ml=float(row["vol_pred_ml"]),
                    vol_ref_ml=float(row["vol_ref_ml"]),
                    emptiness=row["emptiness"],
                )
            )
    return records


def write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def summary_cell_dsc(s: Optional[CohortSummary]) -> str:
    if s is None:
        return "n/a"
    return f"{s.median:.1f} [{s.q1:.1f}-{s.q3:.1f}]"


def summary_cell_hd95(s: Optional[CohortSummary]) -> str:
    if s is None:
        return "n/a"
    return f"{s.median:.2f} [{s.q1:.2f}-{s.q3:.2f}]"


def render_summary_md(
    title: str,
    rows: Sequence[tuple[str, int, Optional[CohortSummary], Optional[CohortSummary]]],
    meta: dict,
) -> str:
    """Cohort table: one row per target, median [Q1-Q3] cells."""
    lines = [f"# {title}", ""]
    lines.append(
        f"Scenario: {meta.get('scenario', 'n/a')}; encoding: {meta.get('encoding', 'n/a')}; "
        f"patients evaluated: {meta.get('n_patients', 'n/a')}."
    )
    lines.append("Values are median [Q1-Q3] across patients; DSC in %, HD95 in mm.")
    lines.append("")
    lines.append("| Target | n | DSC med [Q1-Q3] | HD95 med [Q1-Q3] |")
    lines.append("|---|---|---|---|")
    for target, n, dsc_s, hd_s in rows:
        lines.append(
            f"| {target} | {n} | {summary_cell_dsc(dsc_s)} | {summary_cell_hd95(hd_s)} |"
        )
    lines.append("")
    return "\n".join(lines)


def render_compare_md(
    title: str, mode: str, rows: Sequence[PairedComparison], replicates: int
) -> str:
    p_name = "TOST p-Value" if mode == "equivalence" else "Non-inferior p-Value"
    lines = [f"# {title}", ""]
    lines.append("| Target | n pairs | Median Δ DSC (pp) [95% CI] | " + p_name + " |")
    lines.append("|---|---|---|---|")
    for row in rows:
        p = row.p_tost if mode == "equivalence" else row.p_noninferior
        lines.append(
            f"| {row.target} | {row.n_pairs} | "
            f"{row.median_diff_pp:.3f} [{row.ci_low:.3f}, {row.ci_high:.3f}] | "
            f"{format_p(p, replicates)} |"
        )
    lines.append("")
    return "\n".join(lines)


def bland_altman_caption(res: BlandAltmanResult) -> str:
    return (
        f"Bias: {res.bias_ml:.2f} mL; "
        f"Limits of Agreement: {res.loa_low_ml:.2f}, {res.loa_high_ml:.2f} mL"
    )


def render_bland_altman_svg(
    mean_ml: Sequence[float],
    diff_ml: Sequence[float],
    res: BlandAltmanResult,
    title: str = "Bland-Altman",
) -> str:
    """Scatter of per-patient mean volume vs difference with one solid bias
    line and two dashed limits-of-agreement lines. Guide lines are the only
    <line> elements so they stay machine-checkable; the frame is a <path>.
    """
    width, height = 640, 480
    ml, mt, mr, mb = 60, 44, 20, 48
    plot_w, plot_h = width - ml - mr, height - mt - mb

    xs = [float(v) for v in mean_ml]
    ys = [float(v) for v in diff_ml]
    x_lo, x_hi = min(xs), max(xs)
    y_candidates = ys + [res.bias_ml, res.loa_low_ml, res.loa_high_ml]
    y_lo, y_hi = min(y_candidates), max(y_candidates)
    x_pad = (x_hi - x_lo) * 0.05 or 1.0
    y_pad = (y_hi - y_lo) * 0.08 or 1.0
    x_lo, x_hi = x_lo - x_pad, x_hi + x_pad
    y_lo, y_hi = y_lo - y_pad, y_hi + y_pad

    def px(x: float) -> float:
        return ml + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y: float) -> float:
        return mt + (y_hi - y) / (y_hi - y_lo) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{title}</text>',
        f'<path d="M {ml} {mt} H {ml + plot_w} V {mt + plot_h} H {ml} Z" '
        f'fill="none" stroke="black" stroke-width="1"/>',
    ]
    for x, y in zip(xs, ys):
        parts.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="3" fill="#1f77b4" fill-opacity="0.6"/>')
    parts.append(
        f'<line class="bias" x1="{ml}" y1="{py(res.bias_ml):.2f}" '
        f'x2="{ml + plot_w}" y2="{py(res.bias_ml):.2f}" stroke="black" stroke-width="1.5"/>'
    )
    for loa in (res.loa_low_ml, res.loa_high_ml):
        parts.append(
            f'<line class="loa" x1="{ml}" y1="{py(loa):.2f}" '
            f'x2="{ml + plot_w}" y2="{py(loa):.2f}" stroke="black" stroke-width="1" '
            f'stroke-dasharray="6 4"/>'
        )
    parts.append(
        f'<text x="{width / 2:.1f}" y="{height - 10}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">{bland_altman_caption(res)}</text>'
    )
    parts.append(
        f'<text x="{width / 2:.1f}" y="{height - 26}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">Mean of predicted and reference volume (mL) '
        f"vs difference (mL)</text>"
    )
    parts.append("</svg>")
    return "\n".join(parts)

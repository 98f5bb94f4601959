"""Command-line front end.

Subcommands: ``evaluate`` (per-patient metrics and cohort summary),
``compare`` (paired equivalence / non-inferiority between two record
sets), ``bland-altman`` (volume agreement plot), ``transform`` (channel
dropout / zero-fill of studies on disk).

Exit codes: 0 when at least one patient succeeded and the configuration
was valid, 2 on configuration or manifest errors, 3 when zero patients
succeeded.
"""

from __future__ import annotations

import argparse
import os
import shutil
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .errors import (
    AllMissing,
    MissingChannel,
    NoCommonPatients,
    SegRobustError,
    TargetMismatch,
    TooFewPairs,
    UnknownLabel,
)
from .label_space import (
    BRATS_SCHEME,
    HD_GLIO_SCHEME,
    REGION_SPECS,
    LabelScheme,
    correspondence_pairs,
    label_specs,
    load_scheme,
)
from .manifest import Manifest, ManifestRow, ingest_manifest
from .metrics import MAX_DIRECTED, HD95_CONVENTIONS, MetricRecord, evaluate_pair_specs
from .report import (
    read_records_csv,
    render_bland_altman_svg,
    render_compare_md,
    render_summary_md,
    bland_altman_caption,
    write_json,
    write_records_csv,
)
from .scenario import DropoutConfig, Scenario, dropout_decision
from .stats import (
    PairedComparison,
    StatConfig,
    bland_altman,
    format_p,
    macro_average,
    noninferiority,
    paired_bootstrap_median,
    replicate_medians,
    summarize,
    tost_equivalence,
)
from .volume_io import (
    FLOAT_INTENSITY,
    INTEGER_LABEL,
    VoxelGrid,
    read_volume,
    write_volume,
)

SEED_ENV_VAR = "SEGROBUST_SEED"
OVERALL = "Overall"

# Table-4-style display names for comparison rows
_DISPLAY = {"ED": "Edema"}


def _default_seed() -> int:
    return int(os.environ.get(SEED_ENV_VAR, "0"))


def as_label_grid(grid: VoxelGrid) -> VoxelGrid:
    """Coerce a float-encoded mask/label volume to integer labels."""
    if grid.value_kind != FLOAT_INTENSITY:
        return grid
    data = grid.data
    if not np.array_equal(data, np.floor(data)):
        raise UnknownLabel("prediction/reference volume holds non-integer values")
    lo, hi = float(data.min()), float(data.max())
    if lo < np.iinfo(np.int16).min or hi > np.iinfo(np.int16).max:
        raise UnknownLabel(f"label values [{lo}, {hi}] out of int16 range")
    return grid.with_data(data.astype(np.int16), INTEGER_LABEL)


def _evaluate_row(
    row: ManifestRow,
    spec_pairs,
    pred_scheme: LabelScheme,
    ref_scheme: LabelScheme,
    convention: str,
) -> list[MetricRecord]:
    pred = as_label_grid(read_volume(row.pred_path))
    ref = as_label_grid(read_volume(row.ref_path))
    return evaluate_pair_specs(
        pred, ref, spec_pairs, pred_scheme, ref_scheme, row.patient_id, convention
    )


def _summary_payload(
    records: list[MetricRecord], target_order: Sequence[str]
) -> tuple[list[dict], list[tuple]]:
    """Per-target + Overall cohort summaries (DSC in %, HD95 in mm)."""
    dsc_by_patient: dict[str, dict[str, Optional[float]]] = {}
    hd_by_patient: dict[str, dict[str, Optional[float]]] = {}
    for rec in records:
        dsc_by_patient.setdefault(rec.patient_id, {})[rec.target] = (
            None if rec.dsc is None else rec.dsc * 100.0
        )
        hd_by_patient.setdefault(rec.patient_id, {})[rec.target] = rec.hd95_mm

    def _maybe_summary(values):
        try:
            return summarize(values)
        except AllMissing:
            return None

    rows_json: list[dict] = []
    rows_md: list[tuple] = []
    pids = sorted(dsc_by_patient)

    overall_dsc = macro_average(dsc_by_patient, target_order)
    overall_hd = macro_average(hd_by_patient, target_order)
    ordered: list[tuple[str, list, list]] = [
        (OVERALL, [overall_dsc[p] for p in pids], [overall_hd[p] for p in pids])
    ]
    for target in target_order:
        ordered.append(
            (
                target,
                [dsc_by_patient[p].get(target) for p in pids],
                [hd_by_patient[p].get(target) for p in pids],
            )
        )

    for name, dsc_vals, hd_vals in ordered:
        dsc_s = _maybe_summary(dsc_vals)
        hd_s = _maybe_summary(hd_vals)
        n = len(pids)
        rows_md.append((name, n, dsc_s, hd_s))
        rows_json.append(
            {
                "target": name,
                "n": n,
                "dsc_pct": None
                if dsc_s is None
                else {
                    "median": dsc_s.median,
                    "q1": dsc_s.q1,
                    "q3": dsc_s.q3,
                    "n_missing": dsc_s.n_missing,
                },
                "hd95_mm": None
                if hd_s is None
                else {
                    "median": hd_s.median,
                    "q1": hd_s.q1,
                    "q3": hd_s.q3,
                    "n_missing": hd_s.n_missing,
                },
            }
        )
    return rows_json, rows_md


def cmd_evaluate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = ingest_manifest(args.manifest)
    scenario = Scenario(args.scenario)

    ref_scheme = load_scheme(args.scheme) if args.scheme else BRATS_SCHEME
    if args.comparator:
        pairs = correspondence_pairs(args.comparator)
        # prediction side speaks the comparator vocabulary
        spec_pairs = [(comp, ours) for ours, comp in pairs]
        pred_scheme = load_scheme(args.pred_scheme) if args.pred_scheme else HD_GLIO_SCHEME
    else:
        specs = REGION_SPECS if args.encoding == "region" else label_specs(ref_scheme)
        spec_pairs = [(s, s) for s in specs]
        pred_scheme = ref_scheme

    if scenario is Scenario.FLAIR_PRESENT and manifest.has_channel_columns:
        missing = [r.patient_id for r in manifest.rows if "FLAIR" not in r.channel_paths]
        if missing:
            raise MissingChannel(
                f"flair-present run but manifest rows lack a flair path: {missing}"
            )

    def task(row: ManifestRow):
        try:
            return row.patient_id, _evaluate_row(
                row, spec_pairs, pred_scheme, ref_scheme, args.hd95_convention
            ), None
        except (SegRobustError, OSError) as exc:
            return row.patient_id, None, f"{type(exc).__name__}: {exc}"

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(task, manifest.rows))
    else:
        results = [task(row) for row in manifest.rows]
    results.sort(key=lambda item: item[0])

    records: list[MetricRecord] = []
    errors: list[dict] = []
    for pid, recs, err in results:
        if err is None:
            records.extend(recs)
        else:
            errors.append({"patient_id": pid, "error": err})

    target_order = [pred_spec.name for pred_spec, _ in spec_pairs]
    rows_json, rows_md = (
        _summary_payload(records, target_order) if records else ([], [])
    )
    n_ok = len({r.patient_id for r in records})

    meta = {
        "tool": "segrobust",
        "version": __version__,
        "command": "evaluate",
        "scenario": scenario.value,
        "encoding": "comparator" if args.comparator else args.encoding,
        "scheme": ref_scheme.name,
        "pred_scheme": pred_scheme.name,
        "hd95_convention": args.hd95_convention,
        "seed": args.seed,
        "n_patients": n_ok,
        "n_failed": len(errors),
    }
    write_records_csv(records, out / "records.csv")
    write_json(
        {"meta": meta, "targets": rows_json, "errors": errors}, out / "summary.json"
    )
    md = render_summary_md("Cohort summary", rows_md, meta)
    (out / "summary.md").write_text(md, encoding="utf-8")

    for err in errors:
        print(f"warning: {err['patient_id']}: {err['error']}", file=sys.stderr)
    return 0 if n_ok > 0 else 3


def _records_dsc_by_target(records: list[MetricRecord]) -> dict[str, dict[str, float]]:
    out: dict[str, dict[str, float]] = {}
    for rec in records:
        if rec.dsc is not None:
            out.setdefault(rec.target, {})[rec.patient_id] = rec.dsc * 100.0
    return out


def _ordered_targets(records: list[MetricRecord]) -> list[str]:
    seen: list[str] = []
    for rec in records:
        if rec.target not in seen:
            seen.append(rec.target)
    return seen


def cmd_compare(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = StatConfig(
        margin_pp=args.margin_pp,
        alpha=args.alpha,
        replicates=args.replicates,
        seed=args.seed,
    )
    records_a = read_records_csv(args.records_a)
    records_b = read_records_csv(args.records_b)
    dsc_a = _records_dsc_by_target(records_a)
    dsc_b = _records_dsc_by_target(records_b)

    if args.pairing == "hd-glio":
        name_pairs = [
            (ours.name, comp.name) for ours, comp in correspondence_pairs("hd-glio")
        ]
        missing_a = [a for a, _ in name_pairs if a not in dsc_a]
        missing_b = [b for _, b in name_pairs if b not in dsc_b]
        if missing_a or missing_b:
            raise TargetMismatch(
                f"hd-glio pairing needs targets {missing_a} in records A and "
                f"{missing_b} in records B"
            )
        row_defs = [
            (f"{_DISPLAY.get(a, a)}/{b}", a, b) for a, b in name_pairs
        ]
        include_overall = False
    else:
        targets_a = _ordered_targets(records_a)
        common = [t for t in targets_a if t in dsc_b]
        if not common:
            raise TargetMismatch("record sets share no targets")
        row_defs = [(t, t, t) for t in common]
        include_overall = len(common) > 1

    patients_a = {p for by in dsc_a.values() for p in by}
    patients_b = {p for by in dsc_b.values() for p in by}
    if not patients_a & patients_b:
        raise NoCommonPatients("record sets share no patients")
    unpaired = sorted(patients_a ^ patients_b)

    def compare_values(vals_a: dict[str, float], vals_b: dict[str, float], label: str):
        common_pids = sorted(set(vals_a) & set(vals_b))
        if len(common_pids) < 2:
            raise TooFewPairs(f"target {label}: {len(common_pids)} paired patients")
        diffs = np.array([vals_a[p] - vals_b[p] for p in common_pids])
        meds = replicate_medians(diffs, cfg)
        med, lo, hi = paired_bootstrap_median(diffs, cfg, meds)
        p_t = tost_equivalence(diffs, cfg, meds) if args.mode == "equivalence" else None
        p_n = noninferiority(diffs, cfg, meds) if args.mode == "noninferiority" else None
        return PairedComparison(label, len(common_pids), med, lo, hi, p_t, p_n)

    rows: list[PairedComparison] = []
    if include_overall:
        names = [a for _, a, _ in row_defs]
        macro_a = {
            p: v
            for p, v in macro_average(
                _pivot(dsc_a, patients_a), names
            ).items()
            if v is not None
        }
        macro_b = {
            p: v
            for p, v in macro_average(
                _pivot(dsc_b, patients_b), [b for _, _, b in row_defs]
            ).items()
            if v is not None
        }
        rows.append(compare_values(macro_a, macro_b, OVERALL))
    for label, target_a, target_b in row_defs:
        rows.append(compare_values(dsc_a[target_a], dsc_b[target_b], label))

    meta = {
        "tool": "segrobust",
        "version": __version__,
        "command": "compare",
        "mode": args.mode,
        "pairing": args.pairing,
        "margin_pp": cfg.margin_pp,
        "alpha": cfg.alpha,
        "replicates": cfg.replicates,
        "seed": cfg.seed,
        "ci_method": "bootstrap percentile",
    }
    rows_json = []
    for row in rows:
        p = row.p_tost if args.mode == "equivalence" else row.p_noninferior
        rows_json.append(
            {
                "target": row.target,
                "n_pairs": row.n_pairs,
                "median_diff_pp": row.median_diff_pp,
                "ci_low_pp": row.ci_low,
                "ci_high_pp": row.ci_high,
                "p": p,
                "p_display": format_p(p, cfg.replicates),
            }
        )
    write_json(
        {"meta": meta, "rows": rows_json, "unpaired_patients": unpaired},
        out / "compare.json",
    )
    title = (
        "Paired equivalence (TOST)"
        if args.mode == "equivalence"
        else "Paired non-inferiority"
    )
    md = render_compare_md(title, args.mode, rows, cfg.replicates)
    (out / "compare.md").write_text(md, encoding="utf-8")
    return 0


def _pivot(
    by_target: dict[str, dict[str, float]], patients: set[str]
) -> dict[str, dict[str, Optional[float]]]:
    out: dict[str, dict[str, Optional[float]]] = {p: {} for p in patients}
    for target, by_pid in by_target.items():
        for pid, val in by_pid.items():
            out[pid][target] = val
    return out


def cmd_bland_altman(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = StatConfig(
        margin_pp=args.margin_pp,
        alpha=args.alpha,
        replicates=args.replicates,
        seed=args.seed,
    )
    records = [r for r in read_records_csv(args.records) if r.target == args.target]
    if not records:
        raise TargetMismatch(f"no records for target {args.target!r}")
    records.sort(key=lambda r: r.patient_id)
    pred = [r.vol_pred_ml for r in records]
    ref = [r.vol_ref_ml for r in records]
    result = bland_altman(pred, ref, cfg)
    means = [(p + q) / 2.0 for p, q in zip(pred, ref)]
    diffs = [p - q for p, q in zip(pred, ref)]
    svg = render_bland_altman_svg(
        means, diffs, result, title=f"Bland-Altman: {args.target} volume (mL)"
    )
    (out / "bland_altman.svg").write_text(svg, encoding="utf-8")
    write_json(
        {
            "meta": {
                "tool": "segrobust",
                "version": __version__,
                "command": "bland-altman",
                "target": args.target,
                "replicates": cfg.replicates,
                "seed": cfg.seed,
                "ci_method": "bootstrap percentile",
            },
            "n": result.n,
            "bias_ml": result.bias_ml,
            "sd_ml": result.sd_ml,
            "loa_low_ml": result.loa_low_ml,
            "loa_high_ml": result.loa_high_ml,
            "bias_ci_low_ml": result.bias_ci_low_ml,
            "bias_ci_high_ml": result.bias_ci_high_ml,
            "caption": bland_altman_caption(result),
        },
        out / "bland_altman.json",
    )
    return 0


def cmd_transform(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = ingest_manifest(args.manifest)

    dropout_mode = args.dropout_rate is not None
    if dropout_mode:
        cfg = DropoutConfig(rate=args.dropout_rate, channel=args.channel, seed=args.seed)
    scenario = Scenario(args.scenario) if args.scenario else None

    decisions = []
    for index, row in enumerate(manifest.rows):
        row_dir = out / row.patient_id
        row_dir.mkdir(parents=True, exist_ok=True)
        if dropout_mode:
            if cfg.channel not in row.channel_paths:
                raise MissingChannel(
                    f"{row.patient_id}: no {cfg.channel} path in manifest"
                )
            dropped = dropout_decision(cfg, index)
            decisions.append(
                {"patient_id": row.patient_id, "sample_index": index, "dropped": dropped}
            )
            for channel, src in sorted(row.channel_paths.items()):
                dst = row_dir / Path(src).name
                if channel == cfg.channel and dropped:
                    grid = read_volume(src)
                    write_volume(grid.with_data(np.zeros(grid.dims, grid.data.dtype)), dst)
                else:
                    shutil.copyfile(src, dst)
        else:
            for channel, src in sorted(row.channel_paths.items()):
                dst = row_dir / Path(src).name
                if scenario is Scenario.FLAIR_ABSENT and channel == "FLAIR":
                    grid = read_volume(src)
                    write_volume(grid.with_data(np.zeros(grid.dims, grid.data.dtype)), dst)
                else:
                    shutil.copyfile(src, dst)
            if scenario is Scenario.FLAIR_ABSENT and "FLAIR" not in row.channel_paths:
                template_path = next(iter(sorted(row.channel_paths.values())), None)
                if template_path is None:
                    raise MissingChannel(f"{row.patient_id}: no channels to transform")
                grid = read_volume(template_path)
                zeros = VoxelGrid(
                    np.zeros(grid.dims, np.float32), grid.spacing, grid.affine, FLOAT_INTENSITY
                )
                write_volume(zeros, row_dir / f"{row.patient_id}_FLAIR_zeros.nii.gz")

    sidecar = {
        "tool": "segrobust",
        "version": __version__,
        "command": "transform",
        "mode": "dropout" if dropout_mode else "scenario",
    }
    if dropout_mode:
        sidecar.update(
            {
                "seed": cfg.seed,
                "rate": cfg.rate,
                "channel": cfg.channel,
                "decisions": decisions,
            }
        )
    else:
        sidecar["scenario"] = scenario.value
    write_json(sidecar, out / "decisions.json")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segrobust",
        description="Batch evaluation of brain tumor segmentations under "
        "missing-FLAIR scenarios",
    )
    parser.add_argument("--version", action="version", version=f"segrobust {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_stat_flags(p):
        p.add_argument("--margin-pp", type=float, default=1.5,
                       help="equivalence / non-inferiority margin in DSC percentage points")
        p.add_argument("--alpha", type=float, default=0.05)
        p.add_argument("--replicates", type=int, default=2000,
                       help="bootstrap replicate count")

    def add_seed(p):
        p.add_argument("--seed", type=int, default=None,
                       help=f"master seed (default: ${SEED_ENV_VAR} or 0)")

    ev = sub.add_parser("evaluate", help="per-patient metrics and cohort summary")
    ev.add_argument("--manifest", required=True)
    ev.add_argument("--out", required=True)
    ev.add_argument("--scenario", choices=[s.value for s in Scenario],
                    default=Scenario.FLAIR_PRESENT.value)
    ev.add_argument("--encoding", choices=["label", "region"], default="region")
    ev.add_argument("--scheme", default=None, help="label scheme JSON path")
    ev.add_argument("--comparator", choices=["hd-glio"], default=None,
                    help="evaluate comparator-exported masks against the reference "
                    "using prespecified target correspondences")
    ev.add_argument("--pred-scheme", default=None,
                    help="scheme JSON for prediction volumes (comparator runs)")
    ev.add_argument("--hd95-convention", choices=list(HD95_CONVENTIONS),
                    default=MAX_DIRECTED)
    ev.add_argument("--jobs", type=int, default=1)
    add_seed(ev)
    ev.set_defaults(func=cmd_evaluate)

    cp = sub.add_parser("compare", help="paired statistical comparison of two record sets")
    cp.add_argument("--records-a", required=True, help="records.csv of the model arm")
    cp.add_argument("--records-b", required=True, help="records.csv of the baseline/comparator arm")
    cp.add_argument("--out", required=True)
    cp.add_argument("--mode", choices=["equivalence", "noninferiority"], required=True)
    cp.add_argument("--pairing", choices=["same-labels", "hd-glio"], default="same-labels")
    add_stat_flags(cp)
    add_seed(cp)
    cp.set_defaults(func=cmd_compare)

    ba = sub.add_parser("bland-altman", help="volume agreement analysis and SVG plot")
    ba.add_argument("--records", required=True)
    ba.add_argument("--target", required=True)
    ba.add_argument("--out", required=True)
    add_stat_flags(ba)
    add_seed(ba)
    ba.set_defaults(func=cmd_bland_altman)

    tr = sub.add_parser("transform", help="write dropout/zero-fill transformed studies")
    tr.add_argument("--manifest", required=True)
    tr.add_argument("--out", required=True)
    group = tr.add_mutually_exclusive_group(required=True)
    group.add_argument("--dropout-rate", type=float, default=None)
    group.add_argument("--scenario", choices=[s.value for s in Scenario], default=None)
    tr.add_argument("--channel", default="FLAIR")
    add_seed(tr)
    tr.set_defaults(func=cmd_transform)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "seed", None) is None:
        args.seed = _default_seed()
    try:
        return args.func(args)
    except (SegRobustError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()

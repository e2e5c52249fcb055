"""Manifest-driven batch pipeline.

Each ``cmd_*`` function is one CLI subcommand. Cases are processed by a
bounded thread pool; results are always assembled in manifest order so
outputs are byte-identical between runs (apart from ``created_utc`` /
``timestamps`` fields).

Run directory layout::

    cohort/manifest.tsv, cohort/*.nii       (synth)
    sweep_curve.csv, model.json             (sweep, calibrate)
    predictions/<split>/<case>_status.nii   (predict)
    metrics_<split>.csv, predict_<split>.json
    validation.json, threshold.json, ...    (validate)
    report.json, report.csv                 (report)
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io as vio
from .clustering import category_counts, categorize, kmeans_1d_2
from .conformal import CalibrationModel, classify, conformal_rank, nonconformity, select_ncst
from .config import ConfigError, RunConfig
from .io.artifacts import read_created_utc, utc_now
from .io.manifest import SPLITS, CohortManifest, ManifestEntry
from .metrics import case_metrics
from .normalization import (
    SWEEP_THRESHOLDS,
    NormalizationParams,
    case_dice_curve,
    normalize,
)
from .report import (
    dump_json,
    read_metrics_csv,
    scatter_svg,
    write_metrics_csv,
    write_rows,
)
from .stats import descriptives, mann_whitney_u, pearson, spearman
from .synth import PhiloxStream, generate_case
from .volume import ConformalVolume, geometry_match

log = logging.getLogger(__name__)

_SPLIT_STREAM = 1 << 62


class DataError(ValueError):
    """Problem with input data rather than with usage or configuration."""


def _map(fn, items, workers):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _load_manifest(path) -> CohortManifest:
    try:
        return vio.read_manifest(path)
    except vio.ManifestError as exc:
        raise DataError(str(exc)) from exc


def _cases(manifest, split, *, need_labels):
    entries = manifest.select(split)
    if not entries:
        raise DataError(f"manifest has no cases in split {split!r}")
    if need_labels:
        missing = [e.case_id for e in entries if e.label_path is None]
        if missing:
            raise DataError(f"split {split!r} has cases without labels: {', '.join(missing)}")
    return entries


def _load_pair(entry: ManifestEntry):
    try:
        pv = vio.load_prob_volume(entry.prob_path)
        lv = vio.load_label_volume(entry.label_path) if entry.label_path else None
    except (ValueError, OSError) as exc:
        raise DataError(f"case {entry.case_id!r}: {exc}") from exc
    if lv is not None and not geometry_match(pv, lv):
        raise DataError(
            f"case {entry.case_id!r}: label dims {lv.geometry.dims} != "
            f"probability dims {pv.geometry.dims}"
        )
    return pv, lv


def _eval_mask(entry, pv, mask_mode):
    if mask_mode == "all_voxels":
        return None
    if mask_mode == "nonzero_prob_support":
        return pv.values > 0.0
    if entry.mask_path is None:
        raise DataError(f"case {entry.case_id!r}: mask_mode=external_mask but no mask_path")
    try:
        mask = vio.load_label_volume(entry.mask_path)
    except (ValueError, OSError) as exc:
        raise DataError(f"case {entry.case_id!r}: {exc}") from exc
    if not geometry_match(mask, pv):
        raise DataError(f"case {entry.case_id!r}: mask geometry mismatch")
    return mask.values.astype(bool)


def assign_splits(case_ids, fractions: dict, seed: int) -> dict:
    """Deterministic seeded shuffle into splits (largest-remainder sizing)."""
    n = len(case_ids)
    names = [s for s in SPLITS if fractions.get(s, 0) > 0]
    total = sum(fractions[s] for s in names)
    exact = [fractions[s] / total * n for s in names]
    sizes = [int(np.floor(x)) for x in exact]
    order = sorted(range(len(names)), key=lambda i: (-(exact[i] - sizes[i]), i))
    for i in order[: n - sum(sizes)]:
        sizes[i] += 1
    perm = np.argsort(PhiloxStream(seed, _SPLIT_STREAM).uniform(n), kind="stable")
    out, start = {}, 0
    for name, size in zip(names, sizes):
        for j in perm[start:start + size]:
            out[case_ids[j]] = name
        start += size
    return out


def cmd_synth(cfg: RunConfig, out_dir=None) -> Path:
    """Write a synthetic cohort plus manifest; returns the manifest path."""
    out = Path(out_dir) if out_dir else cfg.manifest_path.parent
    out.mkdir(parents=True, exist_ok=True)
    syn = cfg.synth
    ids = [f"case{i:04d}" for i in range(syn.n_cases)]
    splits = assign_splits(ids, cfg.split.fractions, cfg.split.seed)

    def make(i):
        pv, lv, _ = generate_case(syn, i)
        prob_path = out / f"{ids[i]}_prob.nii"
        label_path = out / f"{ids[i]}_label.nii"
        vio.save_prob_volume(pv, prob_path)
        vio.save_label_volume(lv, label_path)
        return ManifestEntry(ids[i], splits[ids[i]], prob_path, label_path)

    entries = _map(make, range(syn.n_cases), cfg.workers)
    manifest_path = out / "manifest.tsv"
    vio.write_manifest(CohortManifest(entries), manifest_path)
    log.info("wrote %d synthetic cases to %s", len(entries), out)
    return manifest_path


def cmd_split(cfg: RunConfig, manifest_path, out_path) -> Path:
    manifest = _load_manifest(manifest_path)
    ids = [e.case_id for e in manifest.entries]
    splits = assign_splits(ids, cfg.split.fractions, cfg.split.seed)
    entries = [replace(e, split=splits[e.case_id]) for e in manifest.entries]
    vio.write_manifest(CohortManifest(entries), out_path)
    return Path(out_path)


def cmd_sweep(cfg: RunConfig, manifest_path, out_dir, split="validation") -> float:
    """Choose the BMOT on ``split``; write the curve and a draft model file."""
    manifest = _load_manifest(manifest_path)
    entries = _cases(manifest, split, need_labels=True)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def one(entry):
        pv, lv = _load_pair(entry)
        return case_dice_curve(pv.values, lv.values, SWEEP_THRESHOLDS), pv.values.min(), pv.values.max()

    results = _map(one, entries, cfg.workers)
    total = np.zeros(SWEEP_THRESHOLDS.size)
    for curve, _, _ in results:
        total += curve
    mean = total / len(results)
    bmot = float(SWEEP_THRESHOLDS[int(np.argmax(mean))])
    write_rows(out / "sweep_curve.csv", ("threshold", "mean_dsc"),
               [(f"{t:.2f}", m) for t, m in zip(SWEEP_THRESHOLDS, mean)])
    if cfg.bmot is not None:
        log.info("sweep picked %.2f but config pins bmot=%s", bmot, cfg.bmot)
        bmot = float(cfg.bmot)
    y_min, y_max = 0.0, 1.0
    if cfg.range_mode == "empirical_global":
        y_min = float(min(r[1] for r in results))
        y_max = float(max(r[2] for r in results))
    norm = NormalizationParams(bmot, cfg.epsilon, cfg.range_mode, y_min, y_max)
    vio.write_calibration(cfg.model_path, norm, alpha=cfg.alpha)
    return bmot


def cmd_calibrate(cfg: RunConfig, manifest_path, split="calibration") -> CalibrationModel:
    """Pool hinge scores over ``split`` and complete the model file."""
    manifest = _load_manifest(manifest_path)
    entries = _cases(manifest, split, need_labels=True)
    if cfg.bmot is not None and not Path(cfg.model_path).is_file():
        norm = NormalizationParams(cfg.bmot, cfg.epsilon, cfg.range_mode)
    else:
        norm = vio.read_norm_params(cfg.model_path)

    def one(entry):
        pv, lv = _load_pair(entry)
        scores = nonconformity(normalize(pv.values, norm).ravel(), lv.values.ravel())
        mask = _eval_mask(entry, pv, cfg.mask_mode)
        if mask is not None:
            scores = scores[mask.ravel()]
        return scores

    scores = np.concatenate(_map(one, entries, cfg.workers))
    if scores.size == 0:
        raise DataError("calibration split contributes no voxels")
    ncst = select_ncst(scores, cfg.alpha)
    if conformal_rank(scores.size, cfg.alpha) > scores.size:
        log.warning("calibration set too small for alpha=%s; ncst falls back to 1.0", cfg.alpha)
    model = CalibrationModel(cfg.alpha, ncst, int(scores.size), norm,
                             [e.case_id for e in entries])
    vio.write_calibration(cfg.model_path, norm, model)
    return model


def cmd_predict(cfg: RunConfig, manifest_path, out_dir, split="test"):
    """Classify every case of ``split``; write status volumes and metrics.

    Returns ``(metrics, summary)``. Cases that fail (e.g. geometry
    mismatch) are logged and listed in the summary; the run continues.
    """
    manifest = _load_manifest(manifest_path)
    entries = _cases(manifest, split, need_labels=False)
    model = vio.read_calibration(cfg.model_path)
    out = Path(out_dir)
    status_dir = out / "predictions" / split
    status_dir.mkdir(parents=True, exist_ok=True)

    def one(entry):
        try:
            pv, lv = _load_pair(entry)
            ref = None
            if entry.ref_seg_path is not None:
                ref = vio.load_label_volume(entry.ref_seg_path)
                if not geometry_match(ref, pv):
                    raise DataError(f"case {entry.case_id!r}: reference mask geometry mismatch")
            p = normalize(pv.values, model.norm)
            status = classify(p, model.ncst)
            cv = ConformalVolume(pv.geometry, status)
            vio.save_conformal_volume(cv, status_dir / f"{entry.case_id}_status.nii")
            m = case_metrics(entry.case_id, cv, lv, split=split, ref_seg=ref)
            hits = total = 0
            if lv is not None:
                covered = np.where(lv.values == 1, 1.0 - p <= model.ncst, p <= model.ncst)
                mask = _eval_mask(entry, pv, cfg.mask_mode)
                if mask is not None:
                    covered = covered[mask]
                hits, total = int(np.count_nonzero(covered)), int(covered.size)
            return m, hits, total, None
        except (DataError, vio.NiftiError, OSError, ValueError) as exc:
            log.error("case %s skipped: %s", entry.case_id, exc)
            return None, 0, 0, str(exc)

    results = _map(one, entries, cfg.workers)
    metrics = [r[0] for r in results if r[0] is not None]
    failures = [{"case_id": e.case_id, "error": r[3]} for e, r in zip(entries, results) if r[3]]
    hits = sum(r[1] for r in results)
    total = sum(r[2] for r in results)
    write_metrics_csv(out / f"metrics_{split}.csv", metrics)
    summary = {
        "split": split,
        "alpha": model.alpha,
        "ncst": model.ncst,
        "mask_mode": cfg.mask_mode,
        "n_cases": len(metrics),
        "n_failed": len(failures),
        "failures": failures,
        "coverage": hits / total if total else None,
        "n_coverage_voxels": total,
    }
    dump_json(summary, out / f"predict_{split}.json")
    return metrics, summary


def _correlations(urs, values):
    finite = [(u, v) for u, v in zip(urs, values) if v is not None and np.isfinite(u)]
    res = {"n_excluded_undefined": sum(1 for u, v in zip(urs, values)
                                       if v is not None and not np.isfinite(u))}
    if len(finite) < 3:
        raise DataError(f"need at least 3 cases with a defined UR and DSC, got {len(finite)}")
    x = [u for u, _ in finite]
    y = [v for _, v in finite]
    for name, fn in (("pearson", pearson), ("spearman", spearman)):
        try:
            r = fn(x, y)
            res[name] = {"r": r.r, "p_value": r.p_value, "n": r.n}
        except ValueError as exc:
            res[name] = {"error": str(exc)}
    return res


def _category_table(metrics, threshold, attr="dsc"):
    """Rows ``UR > t`` / ``UR ≤ t`` with group summaries, plus a Mann-Whitney test."""
    counts = category_counts(metrics)
    rows = []
    groups = {}
    for cat, label in (("uncertain", f"UR > {threshold:.6g}"),
                       ("certain", f"UR ≤ {threshold:.6g}")):
        vals = [getattr(m, attr) for m in metrics
                if m.category == cat and getattr(m, attr) is not None]
        groups[cat] = vals
        row = {"label": label, "category": cat, "n": counts[cat][0],
               "percent": counts[cat][1], "mean": None, "median": None,
               "q1": None, "q3": None}
        if vals:
            mean, med, q1, q3 = descriptives(vals)
            row.update(mean=mean, median=med, q1=q1, q3=q3)
        rows.append(row)
    test = None
    if groups["uncertain"] and groups["certain"]:
        r = mann_whitney_u(groups["uncertain"], groups["certain"])
        test = {"u_statistic": r.u_statistic, "p_value": r.p_value, "exact": r.exact,
                "n_uncertain": r.n1, "n_certain": r.n2}
    return {"rows": rows, "mann_whitney": test}


def _write_table_csv(path, table):
    p = table["mann_whitney"]["p_value"] if table["mann_whitney"] else None
    rows = []
    for i, r in enumerate(table["rows"]):
        rows.append([r["label"], str(r["n"]), r["percent"], r["mean"], r["median"],
                     r["q1"], r["q3"], p if i == 0 else None])
    write_rows(path, ("ur_group", "n", "percent", "mean_dsc", "median_dsc", "q1", "q3",
                      "p_value"), rows)


def cmd_validate(cfg: RunConfig, metrics_path, out_dir, *, calibration_metrics=None,
                 threshold_path=None) -> dict:
    """Case-level validation: UR/DSC correlation, UR threshold, group comparison."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        test = read_metrics_csv(metrics_path)
    except (FileNotFoundError, ValueError) as exc:
        raise DataError(str(exc)) from exc
    labelled = [m for m in test if m.dsc is not None]
    if len(labelled) < 3:
        raise DataError(f"validation needs >= 3 cases with DSC, got {len(labelled)}")

    result = {"n_cases": len(test),
              "correlation": _correlations([m.ur for m in labelled], [m.dsc for m in labelled])}
    write_rows(out / "scatter_ur_dsc.csv", ("case_id", "ur", "dsc"),
               [(m.case_id, m.ur, m.dsc) for m in labelled])

    if threshold_path is not None:
        th = vio.read_threshold(threshold_path)
    elif calibration_metrics is not None:
        try:
            cal = read_metrics_csv(calibration_metrics)
        except (FileNotFoundError, ValueError) as exc:
            raise DataError(str(exc)) from exc
        urs = [m.ur for m in cal if np.isfinite(m.ur)]
        try:
            th = kmeans_1d_2(urs, source_cohort=Path(calibration_metrics).name)
        except ValueError as exc:
            raise DataError(f"cannot derive UR threshold: {exc}") from exc
        write_rows(out / "kmeans_calibration.csv", ("case_id", "ur", "cluster"),
                   [(m.case_id, m.ur, "high" if m.ur > th.threshold else "low") for m in cal])
    else:
        raise DataError("missing calibration metrics (or a threshold file) for threshold derivation")
    vio.write_threshold(out / "threshold.json", th)
    result["threshold"] = {"centroid_low": th.centroid_low, "centroid_high": th.centroid_high,
                           "threshold": th.threshold, "n_points": th.n_points,
                           "source_cohort": th.source_cohort}

    categorized = categorize(test, th)
    write_metrics_csv(out / f"{Path(metrics_path).stem}_categorized.csv", categorized)
    result["categories"] = _category_table(categorized, th.threshold)
    _write_table_csv(out / "category_table.csv", result["categories"])

    with_ref = [m for m in categorized if m.ref_dsc is not None]
    if with_ref:
        result["reference"] = {
            "correlation": _correlations([m.ur for m in with_ref], [m.ref_dsc for m in with_ref]),
            "categories": _category_table(with_ref, th.threshold, attr="ref_dsc"),
        }
        _write_table_csv(out / "category_table_reference.csv",
                         result["reference"]["categories"])

    if "svg" in cfg.report_formats:
        finite = [m for m in labelled if np.isfinite(m.ur)]
        (out / "scatter_ur_dsc.svg").write_text(scatter_svg(
            [m.ur for m in finite], [m.dsc for m in finite], title="UR vs DSC",
            xlabel="uncertainty ratio", ylabel="DSC", vline=th.threshold), encoding="utf-8")
    dump_json(result, out / "validation.json")
    return result


REPORT_INPUTS = ("model.json", "predict_test.json", "metrics_test.csv", "validation.json")


def cmd_report(cfg: RunConfig, run_dir) -> dict:
    """Consolidate a finished run into ``report.json`` (+ CSV / SVG)."""
    run = Path(run_dir)
    missing = [name for name in REPORT_INPUTS if not (run / name).is_file()]
    if missing:
        raise DataError(f"missing inputs in {run}: {', '.join(missing)}")
    model = vio.read_calibration(run / "model.json")
    predict = json.loads((run / "predict_test.json").read_text(encoding="utf-8"))
    validation = json.loads((run / "validation.json").read_text(encoding="utf-8"))
    metrics = read_metrics_csv(run / "metrics_test.csv")
    dscs = [m.dsc for m in metrics if m.dsc is not None]
    cohort = None
    if dscs:
        mean, med, q1, q3 = descriptives(dscs)
        cohort = {"n": len(dscs), "mean": mean, "median": med, "q1": q1, "q3": q3}
    report = {
        "alpha": model.alpha,
        "bmot": model.norm.bmot,
        "epsilon": model.norm.epsilon,
        "range_mode": model.norm.range_mode,
        "ncst": model.ncst,
        "n_calibration_voxels": model.n_cal,
        "ncst_fallback": model.rank_overflow,
        "coverage": predict["coverage"],
        "mask_mode": predict["mask_mode"],
        "n_test_cases": predict["n_cases"],
        "n_failed_cases": predict["n_failed"],
        "cohort_dsc": cohort,
        "threshold": validation["threshold"]["threshold"],
        "correlation": validation["correlation"],
        "category_table": validation["categories"],
        "timestamps": {"generated_utc": utc_now(),
                       "model_created_utc": read_created_utc(run / "model.json")},
    }
    if "reference" in validation:
        report["reference"] = validation["reference"]
    dump_json(report, run / "report.json")
    if "csv" in cfg.report_formats:
        rows = [(k, report[k]) for k in ("alpha", "bmot", "ncst", "n_calibration_voxels",
                                         "coverage", "threshold", "n_test_cases")]
        if cohort:
            rows += [(f"dsc_{k}", cohort[k]) for k in ("mean", "median", "q1", "q3")]
        write_rows(run / "report.csv", ("key", "value"),
                   [(k, "" if v is None else v) for k, v in rows])
    if "svg" in cfg.report_formats:
        finite = [m for m in metrics if m.dsc is not None and np.isfinite(m.ur)]
        (run / "report_scatter.svg").write_text(scatter_svg(
            [m.ur for m in finite], [m.dsc for m in finite], title="UR vs DSC (test)",
            xlabel="uncertainty ratio", ylabel="DSC", vline=report["threshold"]),
            encoding="utf-8")
    return report


__all__ = [
    "ConfigError",
    "DataError",
    "assign_splits",
    "cmd_calibrate",
    "cmd_predict",
    "cmd_report",
    "cmd_split",
    "cmd_sweep",
    "cmd_synth",
    "cmd_validate",
]

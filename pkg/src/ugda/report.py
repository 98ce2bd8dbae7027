"""Evaluation reports: per-volume scores, aggregates, tables, box plots.

Reports use population standard deviation (divide by N) and
linear-interpolation quantiles; both choices are recorded in the report
metadata.  The table renderer also carries the published full-scale
reference numbers so desk-scale runs can be eyeballed against them.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from jsonschema import validate as _validate_schema

from . import audit
from .errors import EmptyMaskError, InvalidArgumentError
from .metrics import dice_score, mxa
from .points import extract_extreme_points, load_points
from .volume import load_mask


@dataclass
class VolumeScore:
    study_id: str
    dsc: float
    mxa_mm: float | None
    empty_pred: bool = False


@dataclass
class RunReport:
    variant: str
    ps_fraction: float
    per_volume: list[VolumeScore]
    aggregates: dict
    dsc_quartiles: dict
    empty_pred_count: int = 0
    errors: list[str] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)


REPORT_SCHEMA = {
    "type": "object",
    "required": [
        "variant", "ps_fraction", "per_volume", "aggregates",
        "dsc_quartiles", "empty_pred_count", "errors", "metadata",
    ],
    "properties": {
        "variant": {"type": "string"},
        "ps_fraction": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "per_volume": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["study_id", "dsc", "mxa_mm", "empty_pred"],
                "properties": {
                    "study_id": {"type": "string"},
                    "dsc": {"type": "number", "minimum": 0, "maximum": 1},
                    "mxa_mm": {"type": ["number", "null"], "minimum": 0},
                    "empty_pred": {"type": "boolean"},
                },
            },
        },
        "aggregates": {
            "type": "object",
            "required": ["dsc_mean", "dsc_std", "dsc_min", "mxa_mean", "mxa_std"],
        },
        "dsc_quartiles": {
            "type": "object",
            "required": ["min", "q1", "median", "q3", "max"],
        },
        "empty_pred_count": {"type": "integer", "minimum": 0},
        "errors": {"type": "array", "items": {"type": "string"}},
        "metadata": {"type": "object"},
    },
}


def boxwhisker_stats(dscs) -> dict:
    """Five-number summary with linear-interpolation quantiles."""
    values = np.asarray(list(dscs), dtype=np.float64)
    if values.size == 0:
        raise InvalidArgumentError("cannot summarize an empty list")
    q = np.quantile(values, [0.0, 0.25, 0.5, 0.75, 1.0], method="linear")
    return {
        "min": float(q[0]), "q1": float(q[1]), "median": float(q[2]),
        "q3": float(q[3]), "max": float(q[4]),
    }


def compute_aggregates(rows: list[VolumeScore]) -> dict:
    """Population-std aggregates over non-flagged rows."""
    kept = [r for r in rows if not r.empty_pred]
    dscs = np.array([r.dsc for r in kept], dtype=np.float64)
    mxas = np.array(
        [r.mxa_mm for r in kept if r.mxa_mm is not None], dtype=np.float64
    )
    def stats(x):
        if x.size == 0:
            return float("nan"), float("nan")
        return float(x.mean()), float(x.std())
    dsc_mean, dsc_std = stats(dscs)
    mxa_mean, mxa_std = stats(mxas)
    return {
        "dsc_mean": dsc_mean,
        "dsc_std": dsc_std,
        "dsc_min": float(dscs.min()) if dscs.size else float("nan"),
        "mxa_mean": mxa_mean,
        "mxa_std": mxa_std,
    }


def _study_ids(directory: Path, suffixes=(".nii.gz", ".nii", ".json")) -> dict:
    out = {}
    for p in sorted(Path(directory).iterdir()):
        name = p.name
        for sfx in suffixes:
            if name.endswith(sfx):
                out[name[: -len(sfx)]] = p
                break
    return out


def evaluate_run(
    pred_dir: str | Path,
    hidden_mask_dir: str | Path,
    ps_dir: str | Path,
    *,
    variant: str = "",
    ps_fraction: float = 1.0,
    metadata: dict | None = None,
) -> RunReport:
    """Score predictions against hidden masks and ground-truth points.

    MXA uses the PS JSON for a study when present, otherwise points
    derived from the hidden mask.  Studies missing a prediction are noted
    in the errors section and excluded from the aggregates.
    """
    preds = _study_ids(Path(pred_dir))
    masks = _study_ids(Path(hidden_mask_dir))
    ps_files = _study_ids(Path(ps_dir)) if Path(ps_dir).is_dir() else {}

    rows: list[VolumeScore] = []
    errors: list[str] = []
    empty_count = 0
    for study_id, mask_path in masks.items():
        if study_id not in preds:
            errors.append(f"missing prediction for {study_id}")
            continue
        gt_mask = load_mask(mask_path, study_id)
        pred_mask = load_mask(preds[study_id], study_id)
        if pred_mask.shape != gt_mask.shape:
            errors.append(f"shape mismatch for {study_id}")
            continue
        dsc = dice_score(pred_mask, gt_mask)
        if study_id in ps_files:
            gt_points = load_points(ps_files[study_id])
        else:
            gt_points = extract_extreme_points(gt_mask)
        try:
            m = mxa(pred_mask, gt_points)
            rows.append(VolumeScore(study_id, dsc, m))
        except EmptyMaskError:
            empty_count += 1
            rows.append(VolumeScore(study_id, dsc, None, empty_pred=True))

    kept = [r for r in rows if not r.empty_pred]
    meta = dict(metadata or {})
    meta.setdefault("std_convention", "population")
    meta.setdefault("quantile_method", "linear")
    return RunReport(
        variant=variant,
        ps_fraction=ps_fraction,
        per_volume=rows,
        aggregates=compute_aggregates(rows),
        dsc_quartiles=boxwhisker_stats([r.dsc for r in kept]) if kept else {
            "min": float("nan"), "q1": float("nan"), "median": float("nan"),
            "q3": float("nan"), "max": float("nan"),
        },
        empty_pred_count=empty_count,
        errors=errors,
        metadata=meta,
    )


def report_to_dict(rep: RunReport) -> dict:
    return asdict(rep)


def report_from_dict(d: dict) -> RunReport:
    rows = [VolumeScore(**r) for r in d["per_volume"]]
    return RunReport(
        variant=d["variant"],
        ps_fraction=d["ps_fraction"],
        per_volume=rows,
        aggregates=d["aggregates"],
        dsc_quartiles=d["dsc_quartiles"],
        empty_pred_count=d["empty_pred_count"],
        errors=list(d["errors"]),
        metadata=dict(d["metadata"]),
    )


def save_report(path: str | Path, rep: RunReport) -> None:
    d = report_to_dict(rep)
    _validate_schema(d, REPORT_SCHEMA)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(d, indent=2, sort_keys=True) + "\n")


def load_report(path: str | Path) -> RunReport:
    audit.record_read(path)
    d = json.loads(Path(path).read_text())
    _validate_schema(d, REPORT_SCHEMA)
    return report_from_dict(d)


def save_per_volume_csv(path: str | Path, rep: RunReport) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["study_id", "dsc", "mxa_mm", "empty_pred"])
        for r in rep.per_volume:
            w.writerow([r.study_id, repr(r.dsc), "" if r.mxa_mm is None else repr(r.mxa_mm),
                        int(r.empty_pred)])


# --- tables -------------------------------------------------------------------


@dataclass(frozen=True)
class TableRow:
    model: str
    ps_fraction: float | None  # None renders as n/a
    dsc_mean: float
    dsc_std: float
    mxa_mean: float
    mxa_std: float


# Published full-scale reference results (percent DSC / mm MXA) for context.
REFERENCE_RESULTS = (
    TableRow("Dual FCN", None, 93.0, 3.2, 4.3, 1.2),
    TableRow("DEXTR", 1.0, 93.1, 2.4, 3.9, 1.2),
    TableRow("Mask-ADA (no PS)", 0.0, 94.8, 1.8, 3.4, 1.6),
    TableRow("Mask-ADA (w PS)", 1.0, 95.5, 1.0, 2.5, 1.0),
    TableRow("UGDA", 0.25, 95.8, 0.8, 1.7, 0.8),
    TableRow("UGDA", 0.5, 96.0, 0.9, 1.4, 0.9),
    TableRow("UGDA", 1.0, 96.1, 0.8, 1.1, 0.9),
)


def rows_from_reports(reports: list[RunReport], dsc_as_percent: bool = True) -> list[TableRow]:
    scale = 100.0 if dsc_as_percent else 1.0
    rows = []
    for rep in reports:
        agg = rep.aggregates
        fraction = None if rep.variant == "supervised_dual" else rep.ps_fraction
        if rep.variant == "ada_mask_no_ps":
            fraction = 0.0
        rows.append(
            TableRow(
                rep.variant,
                fraction,
                agg["dsc_mean"] * scale,
                agg["dsc_std"] * scale,
                agg["mxa_mean"],
                agg["mxa_std"],
            )
        )
    return rows


def _fraction_label(fraction: float | None) -> str:
    if fraction is None:
        return "n/a"
    return f"{round(fraction * 100):d}%"


def make_table(rows: list[TableRow]) -> tuple[str, str]:
    """Render (csv_text, aligned_text) with one row per (model, fraction)."""
    if not rows:
        raise InvalidArgumentError("need at least one row")
    seen = set()
    for r in rows:
        key = (r.model, r.ps_fraction)
        if key in seen:
            raise InvalidArgumentError(f"duplicate table row {key}")
        seen.add(key)

    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["model", "ps_fraction", "dsc_mean", "dsc_std", "mxa_mean", "mxa_std"])
    for r in rows:
        w.writerow([
            r.model,
            "" if r.ps_fraction is None else repr(r.ps_fraction),
            repr(r.dsc_mean), repr(r.dsc_std), repr(r.mxa_mean), repr(r.mxa_std),
        ])
    csv_text = buf.getvalue()

    header = ("Model", "%PSs", "Mean DSC", "Mean MXA (mm)")
    body = [
        (
            r.model,
            _fraction_label(r.ps_fraction),
            f"{r.dsc_mean:.1f} ± {r.dsc_std:.1f}",
            f"{r.mxa_mean:.1f} ± {r.mxa_std:.1f}",
        )
        for r in rows
    ]
    widths = [max(len(h), *(len(row[i]) for row in body)) for i, h in enumerate(header)]
    lines = [
        "  ".join(h.ljust(w) for h, w in zip(header, widths)),
        "  ".join("-" * w for w in widths),
    ]
    lines += ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)) for row in body]
    return csv_text, "\n".join(lines) + "\n"


def parse_table_csv(text: str) -> list[TableRow]:
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        rows.append(
            TableRow(
                rec["model"],
                None if rec["ps_fraction"] == "" else float(rec["ps_fraction"]),
                float(rec["dsc_mean"]), float(rec["dsc_std"]),
                float(rec["mxa_mean"]), float(rec["mxa_std"]),
            )
        )
    return rows


def render_box_plot(groups: dict[str, list[float]], path: str | Path, title: str = "DSC") -> None:
    """Box-and-whisker plot of per-volume DSC distributions, written to file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(1.8 + 1.2 * len(groups), 4.0))
    labels = list(groups)
    ax.boxplot([groups[k] for k in labels], tick_labels=labels, whis=(0, 100))
    ax.set_ylabel(title)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)

"""
Report export module.

Writes the evaluation artifacts: report.json, confusion and ablation CSVs,
the per-phase group-trend and raincloud tables with their SVG figures, and
the Excel evaluation workbook.
"""

import io
import json
import logging
import math
from pathlib import Path
from typing import Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
from openpyxl import Workbook
from openpyxl.styles import Alignment, Border, Font, PatternFill, Side

from core.evaluation import METRIC_NAMES, EvalReport
from core.models import PHASE_ORDER, Label, feature_columns
from core.ocular_features import phase_feature_summary
from core.statistics import compare_groups

logger = logging.getLogger(__name__)

# Stable SVG element ids across runs
matplotlib.rcParams["svg.hashsalt"] = "physiopred"

# Morandi palette
GROUP_COLORS = {
    "win": "#8B9DC3",   # Morandi Blue
    "loss": "#D4B896",  # Morandi Apricot
}
CHART_COLORS = {
    "axis_text": "#5A5A6A",
    "grid": "#E8E4E0",
}

PathLike = Union[str, Path]


def _jsonable(value):
    """Replace NaN/inf with None and numpy scalars with Python numbers."""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_json(data: dict, path: PathLike) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def write_csv(table: pd.DataFrame, path: PathLike) -> Path:
    path = Path(path)
    table.to_csv(path, index=False, encoding="utf-8", lineterminator="\n")
    return path


def report_payload(reports: dict[str, EvalReport], seed: int, settings: Optional[dict] = None) -> dict:
    """report.json content: per-modality metrics, subjects and folds."""
    return {
        "seed": seed,
        "settings": settings or {},
        "reports": {name: report.to_dict() for name, report in sorted(reports.items())},
    }


def confusion_table(reports: dict[str, EvalReport]) -> pd.DataFrame:
    rows = []
    for name, report in sorted(reports.items()):
        c = report.confusion
        rows.append({"modality": name, "tn": c.tn, "fp": c.fp, "fn": c.fn, "tp": c.tp})
    return pd.DataFrame(rows, columns=["modality", "tn", "fp", "fn", "tp"])


def group_trends(
    table: pd.DataFrame,
    labels: dict[str, int],
    features: Optional[Sequence[str]] = None,
    alpha: float = 0.05,
) -> pd.DataFrame:
    """
    Per-phase group means with SEM and the win/loss test p-value.

    The test per feature and phase is a t-test when both groups pass
    Shapiro-Wilk at alpha, otherwise Mann-Whitney U, on participant means.
    A phase absent from the table is left out with a warning.

    Args:
        table: Window feature table covering the session phases
        labels: participant -> 0/1 (1 = win)
        features: Columns to report (default: all feature columns)
        alpha: Normality level driving the test choice

    Returns:
        DataFrame [feature, phase, group, mean, sem, n, test, p]; one row per
        feature x present phase x group
    """
    features = list(features) if features is not None else feature_columns(table)
    present = set(table["phase"])
    missing = [phase.value for phase in PHASE_ORDER if phase.value not in present]
    if missing:
        logger.warning("trend table is partial: no windows for phase(s) %s", ", ".join(missing))

    summary = phase_feature_summary(table, labels, features)
    per_subject = table.groupby(["participant", "phase"], sort=True)[features].mean().reset_index()
    per_subject["group"] = per_subject["participant"].map(lambda pid: Label(labels[pid]).text)

    tests = {}
    for phase in [p.value for p in PHASE_ORDER if p.value in present]:
        rows = per_subject[per_subject["phase"] == phase]
        for feature in features:
            win = rows.loc[rows["group"] == "win", feature].dropna().to_numpy()
            loss = rows.loc[rows["group"] == "loss", feature].dropna().to_numpy()
            if len(win) and len(loss):
                result = compare_groups(win, loss, alpha).test
                tests[(feature, phase)] = (result.method.value, result.p_value)
            else:
                tests[(feature, phase)] = (None, np.nan)

    summary["test"] = [tests.get((f, p), (None, np.nan))[0] for f, p in zip(summary["feature"], summary["phase"])]
    summary["p"] = [tests.get((f, p), (None, np.nan))[1] for f, p in zip(summary["feature"], summary["phase"])]
    order = {phase.value: i for i, phase in enumerate(PHASE_ORDER)}
    summary = summary.assign(_order=summary["phase"].map(order))
    summary = summary.sort_values(["feature", "_order", "group"], kind="mergesort").drop(columns="_order")
    return summary.reset_index(drop=True)


def trend_figure(trends: pd.DataFrame, feature: str) -> plt.Figure:
    """
    Group mean lines with +/-1 SEM bands across the session phases.

    Args:
        trends: Output of group_trends
        feature: Feature to draw

    Returns:
        Matplotlib Figure
    """
    rows = trends[trends["feature"] == feature]
    if rows.empty:
        raise ValueError(f"no trend rows for feature {feature!r}")
    phases = [p.value for p in PHASE_ORDER if p.value in set(rows["phase"])]
    x = np.arange(len(phases))

    fig, ax = plt.subplots(figsize=(6, 4))
    for group in ("win", "loss"):
        part = rows[rows["group"] == group].set_index("phase").reindex(phases)
        mean = part["mean"].to_numpy(dtype=float)
        sem = np.nan_to_num(part["sem"].to_numpy(dtype=float))
        ax.plot(x, mean, marker="o", color=GROUP_COLORS[group], linewidth=2, label=group)
        ax.fill_between(x, mean - sem, mean + sem, color=GROUP_COLORS[group], alpha=0.25, linewidth=0)

    ax.set_xticks(x)
    ax.set_xticklabels(phases)
    ax.set_ylabel(feature, color=CHART_COLORS["axis_text"])
    ax.set_title(feature)
    ax.grid(True, color=CHART_COLORS["grid"], linewidth=0.5)
    ax.legend(loc="best", frameon=False)
    fig.tight_layout()
    return fig


def raincloud_data(
    table: pd.DataFrame,
    labels: dict[str, int],
    features: Optional[Sequence[str]] = None,
) -> pd.DataFrame:
    """
    Participant means per phase, the points behind a raincloud plot.

    Args:
        table: Window feature table
        labels: participant -> 0/1 (1 = win)
        features: Columns to report (default: all feature columns)

    Returns:
        DataFrame [feature, phase, group, participant, value] in phase
        order; participants without a finite mean are left out
    """
    features = list(features) if features is not None else feature_columns(table)
    unknown = sorted(set(table["participant"]) - set(labels))
    if unknown:
        raise ValueError(f"participants without labels: {unknown}")

    per_subject = table.groupby(["participant", "phase"], sort=True)[features].mean().reset_index()
    long = per_subject.melt(id_vars=["participant", "phase"], value_vars=features, var_name="feature")
    long = long.dropna(subset=["value"])
    long["group"] = long["participant"].map(lambda pid: Label(labels[pid]).text)
    order = {phase.value: i for i, phase in enumerate(PHASE_ORDER)}
    long = long.assign(_order=long["phase"].map(order))
    long = long.sort_values(["feature", "_order", "group", "participant"], kind="mergesort")
    return long[["feature", "phase", "group", "participant", "value"]].reset_index(drop=True)


def raincloud_figure(data: pd.DataFrame, feature: str) -> plt.Figure:
    """
    Half violin, box and jittered participant points per phase and group.

    Args:
        data: Output of raincloud_data
        feature: Feature to draw

    Returns:
        Matplotlib Figure
    """
    rows = data[data["feature"] == feature]
    if rows.empty:
        raise ValueError(f"no raincloud rows for feature {feature!r}")
    phases = [p.value for p in PHASE_ORDER if p.value in set(rows["phase"])]
    rng = np.random.default_rng(0)

    fig, ax = plt.subplots(figsize=(7, 4))
    for i, phase in enumerate(phases):
        for offset, group in ((-0.2, "win"), (0.2, "loss")):
            values = rows.loc[(rows["phase"] == phase) & (rows["group"] == group), "value"].to_numpy(dtype=float)
            if len(values) == 0:
                continue
            center = i + offset
            color = GROUP_COLORS[group]
            if len(values) >= 2 and np.ptp(values) > 0:
                parts = ax.violinplot([values], positions=[center], widths=0.35, showextrema=False)
                for body in parts["bodies"]:
                    verts = body.get_paths()[0].vertices
                    verts[:, 0] = np.clip(verts[:, 0], center, np.inf)
                    body.set_facecolor(color)
                    body.set_edgecolor("none")
                    body.set_alpha(0.5)
            ax.boxplot(
                [values], positions=[center], widths=0.06, showfliers=False,
                medianprops={"color": CHART_COLORS["axis_text"]},
            )
            jitter = rng.uniform(-0.08, -0.02, len(values))
            ax.scatter(center + jitter, values, s=12, color=color, alpha=0.9,
                       label=group if i == 0 else None)

    ax.set_xticks(np.arange(len(phases)))
    ax.set_xticklabels(phases)
    ax.set_ylabel(feature, color=CHART_COLORS["axis_text"])
    ax.set_title(feature)
    ax.grid(True, axis="y", color=CHART_COLORS["grid"], linewidth=0.5)
    ax.legend(loc="best", frameon=False)
    fig.tight_layout()
    return fig


def figure_to_svg_bytes(fig: plt.Figure) -> bytes:
    buf = io.BytesIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()


def _export_figures(data: pd.DataFrame, out_dir: PathLike, prefix: str, draw) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for feature in sorted(data["feature"].unique()):
        path = out_dir / f"{prefix}_{feature}.svg"
        path.write_bytes(figure_to_svg_bytes(draw(data, feature)))
        paths.append(path)
    return paths


def export_trend_svgs(trends: pd.DataFrame, out_dir: PathLike) -> list[Path]:
    return _export_figures(trends, out_dir, "trend", trend_figure)


def export_raincloud_svgs(data: pd.DataFrame, out_dir: PathLike) -> list[Path]:
    return _export_figures(data, out_dir, "raincloud", raincloud_figure)


def export_excel_report(reports: dict[str, EvalReport], seed: int) -> bytes:
    """
    Excel evaluation report.

    Sheets:
    - "Summary": metrics and confusion counts per modality
    - "Subjects": p, tau, y_hat and y_true per participant and modality

    Returns:
        Excel file as bytes
    """
    wb = Workbook()
    wb.remove(wb.active)

    header_font = Font(bold=True, size=12)
    title_font = Font(bold=True, size=14, color="FFFFFF")
    normal_font = Font(size=11)
    center_align = Alignment(horizontal="center", vertical="center")
    border_thin = Border(
        left=Side(style="thin"),
        right=Side(style="thin"),
        top=Side(style="thin"),
        bottom=Side(style="thin"),
    )
    header_fill = PatternFill(start_color="8B9DC3", end_color="8B9DC3", fill_type="solid")

    def header_row(ws, row: int, headers: list[str]) -> None:
        for col, header in enumerate(headers, 1):
            cell = ws.cell(row, col, header)
            cell.font = header_font
            cell.alignment = center_align
            cell.border = border_thin

    def value_row(ws, row: int, values: list) -> None:
        for col, value in enumerate(values, 1):
            cell = ws.cell(row, col, value)
            cell.font = normal_font
            cell.alignment = center_align
            cell.border = border_thin

    # Sheet 1: Summary
    ws1 = wb.create_sheet("Summary")
    ws1.merge_cells("A1:J1")
    ws1["A1"] = "LOSO evaluation report"
    ws1["A1"].font = title_font
    ws1["A1"].alignment = center_align
    ws1["A1"].fill = header_fill
    ws1["A2"] = "Seed"
    ws1["A2"].font = header_font
    ws1["B2"] = seed

    headers = ["Modality", *METRIC_NAMES, "TN", "FP", "FN", "TP"]
    header_row(ws1, 4, headers)
    for i, (name, report) in enumerate(sorted(reports.items()), 1):
        metrics = report.metrics.as_dict()
        c = report.confusion
        value_row(ws1, 4 + i, [name, *(round(metrics[m], 4) for m in METRIC_NAMES), c.tn, c.fp, c.fn, c.tp])
    ws1.column_dimensions["A"].width = 24

    # Sheet 2: Subjects
    ws2 = wb.create_sheet("Subjects")
    header_row(ws2, 1, ["Participant", "Modality", "p", "tau", "y_hat", "y_true"])
    row = 2
    for name, report in sorted(reports.items()):
        for s in report.scores:
            value_row(ws2, row, [s.participant_id, name, round(s.p, 6), round(s.tau, 6), s.y_hat, s.y_true])
            row += 1
    ws2.column_dimensions["A"].width = 14
    ws2.column_dimensions["B"].width = 24

    buf = io.BytesIO()
    wb.save(buf)
    return buf.getvalue()

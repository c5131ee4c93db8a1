"""Report writing: tab-delimited tables with matplotlib figures alongside.

Evaluation reports carry one case per line (case_id, dice, iou,
hd95-or-"inf") followed by an aggregate footer in comment lines,
including the "x/N failures (p%)" tally for infinite boundary
distances. Number formatting is fixed so repeated runs are
byte-identical.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .metrics import AggregateReport, CaseMetrics

_FLOAT_FMT = "{:.6f}"


def _fmt(value: float | None) -> str:
    if value is None:
        return "n/a"
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    return _FLOAT_FMT.format(value)


def format_case_report(cases: Sequence[CaseMetrics], agg: AggregateReport) -> str:
    lines = ["case_id\tdice\tiou\thd95"]
    for case in cases:
        lines.append(
            f"{case.case_id}\t{_fmt(case.dice)}\t{_fmt(case.iou)}\t{_fmt(case.hd95)}"
        )
    pct = 100.0 * agg.infinite_hd95_count / agg.total_cases
    lines += [
        f"# cases\t{agg.total_cases}",
        f"# mean_dice\t{_fmt(agg.mean_dice)}",
        f"# mean_iou\t{_fmt(agg.mean_iou)}",
        f"# mean_hd95_finite\t{_fmt(agg.mean_hd95_finite)}",
        f"# hd95_failures\t{agg.infinite_hd95_count}/{agg.total_cases} ({pct:.2f}%)",
    ]
    return "\n".join(lines) + "\n"


def write_case_report(
    path: str | Path, cases: Sequence[CaseMetrics], agg: AggregateReport
) -> None:
    Path(path).write_text(format_case_report(cases, agg), encoding="utf-8")


def parse_report_footer(path: str | Path) -> dict[str, str]:
    """Footer key -> raw value string from a case report."""
    out: dict[str, str] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("# "):
            key, _, value = line[2:].partition("\t")
            out[key] = value
    return out


def write_rows_report(
    path: str | Path, header: Sequence[str], rows: Sequence[Sequence[object]]
) -> None:
    """Generic tab-delimited table (ablation, sweeps, learning curves)."""
    lines = ["\t".join(header)]
    for row in rows:
        cells = []
        for value in row:
            if value is None:
                cells.append("n/a")
            elif isinstance(value, float):
                cells.append("inf" if math.isinf(value) else _FLOAT_FMT.format(value))
            else:
                cells.append(str(value))
        lines.append("\t".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def plot_dice_distribution(path: str | Path, cases: Sequence[CaseMetrics]) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist([c.dice for c in cases], bins=min(20, max(5, len(cases) // 2)),
            color="#4878a8", edgecolor="black")
    ax.set_xlabel("Dice")
    ax.set_ylabel("cases")
    ax.set_title("Per-case Dice distribution")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_ablation(path: str | Path, labels: Sequence[str], delta_dsc: Sequence[float]) -> None:
    fig, ax = plt.subplots(figsize=(7, 0.5 * len(labels) + 1.5))
    colors = ["#4878a8" if d >= 0 else "#b24745" for d in delta_dsc]
    ax.barh(range(len(labels)), delta_dsc, color=colors, edgecolor="black")
    ax.set_yticks(range(len(labels)))
    ax.set_yticklabels(labels)
    ax.invert_yaxis()
    ax.axvline(0.0, color="black", linewidth=0.8)
    ax.set_xlabel("Dice delta vs full configuration")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_learning_curve(
    path: str | Path,
    k_values: Sequence[int],
    mean_dice: Sequence[float],
    std_dice: Sequence[float],
    reference: float | None = None,
) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(k_values, mean_dice, yerr=std_dice, marker="o", capsize=3,
                color="#4878a8", label="sampled patients")
    if reference is not None:
        ax.axhline(reference, linestyle="--", color="#555555", label="reference")
    ax.set_xlabel("labeled patients (K)")
    ax.set_ylabel("mean test Dice")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_zsweep(
    path: str | Path,
    sigmas: Sequence[float],
    dice_values: Sequence[float],
    hd95_values: Sequence[float | None],
) -> None:
    fig, ax1 = plt.subplots(figsize=(6, 4))
    ax1.plot(sigmas, dice_values, marker="o", color="#4878a8", label="Dice")
    ax1.set_xlabel("z-smoothing sigma (slices)")
    ax1.set_ylabel("Dice", color="#4878a8")
    ax2 = ax1.twinx()
    hd = [math.nan if v is None else v for v in hd95_values]
    ax2.plot(sigmas, hd, marker="s", color="#b24745", label="HD95")
    ax2.set_ylabel("HD95 (finite mean)", color="#b24745")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)

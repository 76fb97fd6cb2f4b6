"""CSV tables and static SVG figures.

All writers are deterministic: rows come out in a fixed order, floats use a
fixed format, and SVG files carry no timestamps or random ids.
"""

from __future__ import annotations

import csv
import io
import math
import os
from pathlib import Path
from typing import Iterable, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from featrend.detect import FeatureKind  # noqa: E402
from featrend.metrics import AdoptionSummary, IntroductionMoment, NormalizedUsage  # noqa: E402
from featrend.trendfit import Bucket, FitResult, TrendLabel, TrendRow  # noqa: E402

__all__ = [
    "ADOPTION_HEADER",
    "INTRODUCTION_HEADER",
    "NORMALIZED_HEADER",
    "TRENDS_HEADER",
    "adoption_rows",
    "fmt_float",
    "fmt_pct",
    "introduction_rows",
    "normalized_rows",
    "plot_adoption",
    "plot_adoption_timeline",
    "plot_introduction",
    "plot_normalized",
    "plot_series",
    "plot_trend_table",
    "read_csv",
    "trend_table_header",
    "trend_table_rows",
    "trends_row",
    "write_csv",
]

TRENDS_HEADER = ("repo", "kind", "n_commits", "family", "coefficients", "r2", "label", "bucket")
ADOPTION_HEADER = ("kind", "apps_using", "total_apps", "pct_apps", "last_commit_total",
                   "median_ratio", "q1_ratio", "q3_ratio", "excluded")
NORMALIZED_HEADER = ("repo", "kind", "numerator", "denominator", "ratio")
INTRODUCTION_HEADER = ("repo", "kind", "days", "first_commit")

_BUCKETS = (Bucket.INC, Bucket.DEC, Bucket.UNSTABLE, Bucket.STABLE)


def fmt_float(value: float | None, digits: int = 10) -> str:
    """Stable text form of a float; empty for None, NaN or infinity."""
    if value is None or not math.isfinite(value):
        return ""
    if value == 0:
        return "0"
    return format(value, f".{digits}g")


def fmt_pct(value: float) -> str:
    return f"{value:.0f}"


def write_csv(path: str | os.PathLike, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Write an RFC 4180 CSV file (UTF-8, CRLF, header row)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(["" if v is None else v for v in row])
    Path(path).write_bytes(buf.getvalue().encode("utf-8"))


def read_csv(path: str | os.PathLike) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def trends_row(repo: str, kind: FeatureKind, n: int, label: TrendLabel, best: FitResult | None) -> list:
    if best is None:
        family, coef, r2 = "", "", ""
    else:
        family = best.family.value
        coef = ";".join(fmt_float(c) for c in best.coefficients)
        r2 = fmt_float(best.r2)
    return [repo, kind.value, n, family, coef, r2, label.value, label.bucket.value]


def adoption_rows(summary: AdoptionSummary) -> list[list]:
    rows = []
    for kind, entry in summary.kinds.items():
        q = entry.quartiles
        rows.append([
            kind.value,
            entry.apps_using,
            summary.total_apps,
            fmt_pct(summary.pct_apps(kind)),
            entry.instances_last_commit,
            fmt_float(q[1]) if q else "",
            fmt_float(q[0]) if q else "",
            fmt_float(q[2]) if q else "",
            entry.excluded,
        ])
    return rows


def normalized_rows(repo: str, usages: Iterable[NormalizedUsage]) -> list[list]:
    return [[repo, u.kind.value, u.numerator, u.denominator, fmt_float(u.ratio)] for u in usages]


def introduction_rows(repo: str, moments: Iterable[IntroductionMoment]) -> list[list]:
    return [[repo, m.kind.value, "" if m.days is None else m.days, m.first_commit_id or ""] for m in moments]


def trend_table_header() -> list[str]:
    head = ["kind", "total"]
    for lab in TrendLabel:
        head += [lab.value, f"{lab.value}_pct"]
    for b in _BUCKETS:
        head += [b.value, f"{b.value}_pct"]
    return head


def trend_table_rows(table: dict[FeatureKind, TrendRow]) -> list[list]:
    rows = []
    for kind, row in table.items():
        out: list = [kind.value, row.total]
        for lab in TrendLabel:
            out += [row.counts.get(lab, 0), fmt_pct(row.pct(lab))]
        for b in _BUCKETS:
            out += [row.bucket_count(b), fmt_pct(row.bucket_pct(b))]
        rows.append(out)
    return rows


# --------------------------------------------------------------------------
# SVG figures
# --------------------------------------------------------------------------

_RC = {
    "svg.hashsalt": "featrend",
    "svg.fonttype": "none",
    "font.family": "DejaVu Sans",
    "font.size": 8,
}


def _save(fig, path: str | os.PathLike) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None}, bbox_inches="tight")
    plt.close(fig)


def plot_adoption(summary: AdoptionSummary, path: str | os.PathLike) -> None:
    """Horizontal bars: percentage of repositories using each kind."""
    with plt.rc_context(_RC):
        kinds = list(summary.kinds)
        pct = [summary.pct_apps(k) for k in kinds]
        fig, ax = plt.subplots(figsize=(6, 0.22 * len(kinds) + 1))
        pos = np.arange(len(kinds))
        ax.barh(pos, pct, color="#4c72b0")
        ax.set_yticks(pos, [k.value for k in kinds])
        ax.invert_yaxis()
        ax.set_xlim(0, 100)
        ax.set_xlabel("% of repositories using the feature")
        _save(fig, path)


def plot_normalized(summary: AdoptionSummary, path: str | os.PathLike) -> None:
    """Box plot of last-commit normalized usage per kind."""
    with plt.rc_context(_RC):
        kinds = [k for k, e in summary.kinds.items() if e.ratios]
        fig, ax = plt.subplots(figsize=(6, 0.22 * max(len(kinds), 1) + 1))
        if kinds:
            ax.boxplot([summary.kinds[k].ratios for k in kinds], orientation="horizontal",
                       tick_labels=[k.value for k in kinds], whis=1.5)
            ax.invert_yaxis()
        ax.set_xlabel("normalized instances (last commit)")
        _save(fig, path)


def plot_introduction(moments: dict[FeatureKind, list[int]], path: str | os.PathLike) -> None:
    """Box plot of introduction moments (days after the first Kotlin commit)."""
    with plt.rc_context(_RC):
        kinds = [k for k in FeatureKind if moments.get(k)]
        fig, ax = plt.subplots(figsize=(6, 0.22 * max(len(kinds), 1) + 1))
        if kinds:
            ax.boxplot([moments[k] for k in kinds], orientation="horizontal",
                       tick_labels=[k.value for k in kinds], whis=1.5)
            ax.invert_yaxis()
        ax.set_xlabel("days after the first Kotlin commit")
        _save(fig, path)


def plot_adoption_timeline(moments: dict[FeatureKind, list[int]], total_apps: int, path: str | os.PathLike) -> None:
    """Lines: share of repositories that introduced each kind within d days."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 4))
        horizon = max((max(v) for v in moments.values() if v), default=0)
        days = np.arange(horizon + 1)
        for kind in FeatureKind:
            vals = moments.get(kind)
            if not vals or total_apps == 0:
                continue
            arr = np.sort(np.asarray(vals))
            share = 100.0 * np.searchsorted(arr, days, side="right") / total_apps
            ax.step(days, share, where="post", linewidth=0.8, label=kind.value)
        ax.set_xlabel("days after the first Kotlin commit")
        ax.set_ylabel("% of repositories")
        ax.set_ylim(0, 100)
        if ax.get_legend_handles_labels()[0]:
            ax.legend(fontsize=5, ncol=2, loc="lower right")
        _save(fig, path)


def plot_trend_table(table: dict[FeatureKind, TrendRow], path: str | os.PathLike) -> None:
    """Stacked bars: share of each trend bucket per kind."""
    with plt.rc_context(_RC):
        kinds = list(table)
        fig, ax = plt.subplots(figsize=(6, 0.22 * max(len(kinds), 1) + 1))
        pos = np.arange(len(kinds))
        left = np.zeros(len(kinds))
        colors = {Bucket.INC: "#55a868", Bucket.DEC: "#c44e52", Bucket.UNSTABLE: "#8172b2", Bucket.STABLE: "#999999"}
        for b in _BUCKETS:
            vals = np.array([table[k].bucket_pct(b) for k in kinds])
            ax.barh(pos, vals, left=left, color=colors[b], label=b.value)
            left += vals
        ax.set_yticks(pos, [k.value for k in kinds])
        ax.invert_yaxis()
        ax.set_xlim(0, 100)
        ax.set_xlabel("% of repositories")
        if kinds:
            ax.legend(fontsize=6, loc="lower right")
        _save(fig, path)


def plot_series(values: Sequence[float], best: FitResult | None, title: str, path: str | os.PathLike) -> None:
    """Series points with the selected curve."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4, 3))
        x = np.arange(len(values))
        ax.plot(x, values, "o", markersize=3, color="#333333")
        if best is not None:
            xs = np.linspace(0, max(len(values) - 1, 1), 200)
            ax.plot(xs, best.predict(xs), color="#c44e52", linewidth=1)
        ax.set_title(title)
        ax.set_xlabel("commit index")
        ax.set_ylabel("instances")
        _save(fig, path)

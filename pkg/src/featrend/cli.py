"""Command-line entry point: ``featrend scan|history|trends|summarize``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from collections import Counter, defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from featrend import report
from featrend.config import ConfigError, RunConfig, load_config, parse_kinds
from featrend.detect import DenominatorCounts, FeatureKind, FileFeatureReport, detect
from featrend.metrics import (
    NoKotlinCommit,
    introduction_moment,
    normalize,
    summarize,
)
from featrend.miner import (
    KOTLIN_SUFFIXES,
    MalformedInput,
    MinerError,
    RepositoryHistory,
    SchemaVersionMismatch,
    commit_totals,
    mine,
    read_history,
    write_history,
)
from featrend.syntax import DecodeError, parse_source
from featrend.trendfit import EvolutionSeries, FitConfig, SeriesTrend, classify_series, extract_series, tabulate

__all__ = ["main", "scan", "ScanResult", "PathNotFound", "InputMismatch"]

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_WARNINGS = 2

log = logging.getLogger("featrend")


class PathNotFound(FileNotFoundError):
    pass


class InputMismatch(ValueError):
    pass


def _warn(source: str, message: str) -> None:
    # one machine-parseable line per warning, on stderr
    print(f"featrend: warning: {source}: {message}", file=sys.stderr)


# --------------------------------------------------------------------------
# scan
# --------------------------------------------------------------------------


@dataclass
class ScanResult:
    files: list[FileFeatureReport] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def totals(self) -> tuple[Counter, DenominatorCounts]:
        totals: Counter = Counter()
        den = DenominatorCounts()
        for rep in self.files:
            totals.update(rep.counts())
            den = den + rep.denominators
        return totals, den


def _kotlin_files(root: Path) -> list[Path]:
    if root.is_file():
        return [root]
    found = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames[:] = sorted(d for d in dirnames if d != ".git")
        found.extend(Path(dirpath) / f for f in sorted(filenames) if f.endswith(KOTLIN_SUFFIXES))
    return sorted(found)


def scan(path: str | os.PathLike, config: RunConfig = RunConfig()) -> ScanResult:
    """Detect features in a file or every Kotlin file below a directory."""
    root = Path(path)
    if not root.exists():
        raise PathNotFound(f"{root}: no such file or directory")
    result = ScanResult()
    for file in _kotlin_files(root):
        rel = file.name if root.is_file() else file.relative_to(root).as_posix()
        try:
            tree = parse_source(file.read_bytes(), rel)
        except DecodeError as exc:
            result.warnings.append(f"{rel}: decode error at byte {exc.offset}")
            continue
        except OSError as exc:
            result.warnings.append(f"{rel}: {exc.strerror}")
            continue
        result.files.append(detect(tree, config.detector))
    return result


def cmd_scan(args: argparse.Namespace, config: RunConfig) -> int:
    result = scan(args.path, config)
    totals, den = result.totals()
    rows = report.normalized_rows(Path(args.path).name or str(args.path),
                                  normalize(totals, den, [k for k in FeatureKind if k in config.features]))
    if args.out:
        report.write_csv(args.out, report.NORMALIZED_HEADER, rows)
    else:
        import csv
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(report.NORMALIZED_HEADER)
        w.writerows(rows)
    if args.instances:
        report.write_csv(args.instances, ("path", "line", "kind"),
                         [[i.path, i.line, i.kind.value] for rep in result.files for i in rep.instances])
    for w_ in result.warnings:
        _warn(str(args.path), w_)
    return EXIT_WARNINGS if result.warnings else EXIT_OK


# --------------------------------------------------------------------------
# history
# --------------------------------------------------------------------------


def cmd_history(args: argparse.Namespace, config: RunConfig) -> int:
    history = mine(args.repo, args.branch or config.branch, config=config.detector,
                   use_cache=not args.no_cache, jobs=config.jobs)
    if args.out:
        write_history(history, args.out)
    else:
        write_history(history, sys.stdout)
    warned = False
    for rec in history.commits:
        for w in rec.warnings:
            _warn(f"{history.repo_id}@{rec.commit_id[:12]}", w)
            warned = True
    return EXIT_WARNINGS if warned else EXIT_OK


# --------------------------------------------------------------------------
# trends
# --------------------------------------------------------------------------


def _load_histories(paths: Sequence[str]) -> tuple[list[RepositoryHistory], bool]:
    histories = []
    warned = False
    seen: set[str] = set()
    for p in paths:
        try:
            h = read_history(p)
        except (MalformedInput, SchemaVersionMismatch) as exc:
            _warn(p, f"skipped: {exc}")
            warned = True
            continue
        except OSError as exc:
            _warn(p, f"skipped: {exc.strerror}")
            warned = True
            continue
        if h.repo_id in seen:
            _warn(p, f"duplicate repo id {h.repo_id!r}; skipped")
            warned = True
            continue
        seen.add(h.repo_id)
        histories.append(h)
    return histories, warned


def _classify(args: tuple[tuple[int, ...], FitConfig]) -> SeriesTrend:
    values, cfg = args
    return classify_series(values, cfg)


def classify_histories(
    histories: Sequence[RepositoryHistory], config: RunConfig
) -> list[tuple[EvolutionSeries, SeriesTrend]]:
    kinds = [k for k in FeatureKind if k in config.features]
    series = [s for h in histories for s in extract_series(h, kinds)]
    work = [(s.values, config.fit) for s in series]
    if config.jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(_classify, work, chunksize=8))
    else:
        results = [_classify(w) for w in work]
    return list(zip(series, results))


def _plot_name(repo: str, kind: FeatureKind) -> str:
    safe = "".join(c if c.isalnum() or c in "-_." else "_" for c in repo)
    return f"{safe}__{kind.value}.svg"


def cmd_trends(args: argparse.Namespace, config: RunConfig) -> int:
    histories, warned = _load_histories(args.histories)
    if not histories:
        print("featrend: error: no readable history file", file=sys.stderr)
        return EXIT_ERROR
    if args.delta is not None:
        config = config.with_overrides(delta=args.delta)
    classified = classify_histories(histories, config)
    rows = [report.trends_row(s.repo_id, s.kind, len(s.values), t.label, t.best) for s, t in classified]
    out = args.out or "trends.csv"
    report.write_csv(out, report.TRENDS_HEADER, rows)
    if args.plots:
        plot_dir = Path(args.plots)
        plot_dir.mkdir(parents=True, exist_ok=True)
        for s, t in classified:
            report.plot_series(s.values, t.best, f"{s.repo_id}: {s.kind.value} ({t.label.value})",
                               plot_dir / _plot_name(s.repo_id, s.kind))
    return EXIT_WARNINGS if warned else EXIT_OK


# --------------------------------------------------------------------------
# summarize
# --------------------------------------------------------------------------

NOTES = """\
Kotlin files: paths ending in .kt and .kts are analyzed alike.
Commit order: first-parent chain of the analyzed branch, oldest first.
Dates: author timestamps, UTC, whole days by floor division.
SmartCast: syntactic approximation (receiver guarded by an `is` check).
Coroutine: keyword strategy; constructs outside the keyword set are missed.
SuperDelegation: normalized by the number of inheritances (supertype entries).
Zero denominators: ratio left empty and excluded from distributions.
"""


def cmd_summarize(args: argparse.Namespace, config: RunConfig) -> int:
    histories, warned = _load_histories(args.histories)
    if not histories:
        print("featrend: error: no readable history file", file=sys.stderr)
        return EXIT_ERROR
    kinds = [k for k in FeatureKind if k in config.features]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    known = {h.repo_id for h in histories}

    labels = []
    if args.trends:
        for row in report.read_csv(args.trends):
            if row.get("repo") not in known:
                raise InputMismatch(f"{args.trends}: unknown repo {row.get('repo')!r}")
            try:
                from featrend.trendfit import TrendLabel
                labels.append((row["repo"], FeatureKind(row["kind"]), TrendLabel(row["label"])))
            except (KeyError, ValueError) as exc:
                raise InputMismatch(f"{args.trends}: bad row {row}: {exc}") from None
    else:
        labels = [(s.repo_id, s.kind, t.label) for s, t in classify_histories(histories, config)]
    labels = [lab for lab in labels if lab[1] in config.features]

    summary = summarize(histories, kinds)
    report.write_csv(out / "adoption.csv", report.ADOPTION_HEADER, report.adoption_rows(summary))

    norm_rows = []
    intro_rows = []
    moments: dict[FeatureKind, list[int]] = defaultdict(list)
    for h in histories:
        if h.commits:
            totals, den = commit_totals(h.commits[-1])
            norm_rows += report.normalized_rows(h.repo_id, normalize(totals, den, kinds))
        try:
            im = introduction_moment(h, kinds)
        except NoKotlinCommit as exc:
            _warn(h.repo_id, str(exc))
            warned = True
            continue
        intro_rows += report.introduction_rows(h.repo_id, im)
        for m in im:
            if m.days is not None:
                moments[m.kind].append(m.days)
    report.write_csv(out / "normalized.csv", report.NORMALIZED_HEADER, norm_rows)
    report.write_csv(out / "introduction.csv", report.INTRODUCTION_HEADER, intro_rows)

    table = tabulate(labels)
    report.write_csv(out / "trend_table.csv", report.trend_table_header(), report.trend_table_rows(table))

    report.plot_adoption(summary, out / "adoption.svg")
    report.plot_normalized(summary, out / "normalized.svg")
    report.plot_introduction(moments, out / "introduction.svg")
    report.plot_adoption_timeline(moments, summary.total_apps, out / "introduction_timeline.svg")
    report.plot_trend_table(table, out / "trend_table.svg")
    (out / "NOTES.txt").write_text(NOTES, encoding="utf-8")
    return EXIT_WARNINGS if warned else EXIT_OK


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------


def _common_options(default) -> argparse.ArgumentParser:
    # subcommands suppress their defaults so flags given before the subcommand survive
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE", default=default, help="key=value configuration file")
    common.add_argument("--jobs", type=int, metavar="N", default=default, help="worker processes (default 1)")
    common.add_argument("--quiet", action="store_true", default=default or False,
                        help="only print warnings and errors")
    common.add_argument("--features", metavar="LIST", default=default,
                        help="comma-separated feature kinds to analyze")
    return common


def build_parser() -> argparse.ArgumentParser:
    top, common = _common_options(None), _common_options(argparse.SUPPRESS)
    parser = argparse.ArgumentParser(prog="featrend", parents=[top],
                                     description="Detect Kotlin feature usage and classify its evolution.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scan", parents=[common], help="count features in a file or directory")
    p.add_argument("path")
    p.add_argument("--out", metavar="FILE", help="normalized usage CSV (default: stdout)")
    p.add_argument("--instances", metavar="FILE", help="also write every instance location to a CSV")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("history", parents=[common], help="mine per-commit feature counts of a git repository")
    p.add_argument("repo")
    p.add_argument("--branch", metavar="NAME")
    p.add_argument("--out", metavar="FILE", help="history JSON (default: stdout)")
    p.add_argument("--no-cache", action="store_true", help="re-analyze every file of every commit")
    p.set_defaults(func=cmd_history)

    p = sub.add_parser("trends", parents=[common], help="fit and label feature evolution series")
    p.add_argument("histories", nargs="+", metavar="HISTORY")
    p.add_argument("--delta", type=float, help="R² tolerance favouring simpler models (default 0.01)")
    p.add_argument("--out", metavar="FILE", help="trends CSV (default: trends.csv)")
    p.add_argument("--plots", metavar="DIR", help="write one SVG per series")
    p.set_defaults(func=cmd_trends)

    p = sub.add_parser("summarize", parents=[common], help="aggregate histories into tables and figures")
    p.add_argument("histories", nargs="+", metavar="HISTORY")
    p.add_argument("--trends", metavar="FILE", help="trends CSV from `featrend trends` (computed if omitted)")
    p.add_argument("--out", metavar="DIR", default="report")
    p.set_defaults(func=cmd_summarize)
    return parser


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    config = load_config(args.config)
    changes = {}
    if args.jobs is not None:
        changes["jobs"] = args.jobs
    if args.features:
        changes["features"] = parse_kinds(args.features)
    return config.with_overrides(**changes)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="featrend: %(levelname)s: %(message)s", stream=sys.stderr)
    try:
        config = _resolve_config(args)
        return args.func(args, config)
    except (ConfigError, PathNotFound, InputMismatch, MinerError, NoKotlinCommit) as exc:
        print(f"featrend: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

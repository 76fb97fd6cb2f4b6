"""Command-line tests: scan, history, trends, summarize and determinism."""

import csv
import io
from collections import Counter
from pathlib import Path

import pytest
from matplotlib import cbook

from corpus_labels import CORPUS_DIR, read_labels
from fixtures import synthetic_history
from generators import integer_series
from featrend.cli import main
from featrend.detect import FeatureKind
from featrend.miner import mine, read_history, write_history

K = FeatureKind
DATA = Path(__file__).parent / "data"

# repo -> kind -> per-commit totals from the introducing commit on
FIXTURE_SERIES = {
    "alpha": {K.Lambda: [1, 2, 3, 4], K.SafeCall: integer_series("SR", 30), K.WhenExpr: integer_series("PSR", 12)},
    "beta": {K.Lambda: integer_series("PGD", 30), K.DataClass: integer_series("I", 30), K.StringTemplate: [2] * 8},
    "gamma": {K.TypeInference: integer_series("SRP", 30), K.SmartCast: [3, 1], K.Coroutine: integer_series("SD", 30)},
}


def write_fixture_histories(directory: Path) -> list[str]:
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, (repo, series) in enumerate(FIXTURE_SERIES.items()):
        n = max(len(v) for v in series.values())
        history = synthetic_history(repo, series, n=n, days=[d * (i + 1) for d in range(n)])
        path = directory / f"{repo}.json"
        write_history(history, path)
        paths.append(str(path))
    return paths


def rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def run(capsys, *argv):
    code = main(list(map(str, argv)))
    out, err = capsys.readouterr()
    return code, out, err


class TestScan:
    def test_single_declaration(self, capsys, kotlin_dir):
        (kotlin_dir / "A.kt").write_text("val a = 1\n")
        code, out, _ = run(capsys, "scan", kotlin_dir)
        assert code == 0
        table = {r["kind"]: r for r in csv.DictReader(io.StringIO(out))}
        assert (table["TypeInference"]["numerator"], table["TypeInference"]["denominator"]) == ("1", "1")
        assert table["TypeInference"]["ratio"] == "1"

    def test_empty_directory(self, capsys, kotlin_dir):
        code, out, err = run(capsys, "scan", kotlin_dir)
        assert code == 0
        assert all(r["numerator"] == "0" for r in csv.DictReader(io.StringIO(out)))
        assert err == ""

    def test_corpus_counts_equal_labels(self, capsys, tmp_path):
        expected = Counter()
        for path in CORPUS_DIR.glob("*.kt"):
            for (kind, _), n in read_labels(path)[0].items():
                expected[kind.value] += n
        out = tmp_path / "scan.csv"
        assert run(capsys, "scan", CORPUS_DIR, "--out", out)[0] == 0
        got = {r["kind"]: int(r["numerator"]) for r in rows(out)}
        assert got == {k.value: expected[k.value] for k in FeatureKind}

    def test_single_file_and_feature_filter(self, capsys, kotlin_dir):
        f = kotlin_dir / "A.kt"
        f.write_text("val a = listOf(1).map { it }\n")
        code, out, _ = run(capsys, "scan", f, "--features", "Lambda")
        assert code == 0
        assert [r["kind"] for r in csv.DictReader(io.StringIO(out))] == ["Lambda"]

    def test_instances_file(self, capsys, kotlin_dir, tmp_path):
        (kotlin_dir / "A.kt").write_text("\nval a = 1\n")
        run(capsys, "scan", kotlin_dir, "--instances", tmp_path / "i.csv")
        assert rows(tmp_path / "i.csv") == [{"path": "A.kt", "line": "2", "kind": "TypeInference"}]

    def test_decode_error_exits_2(self, capsys, kotlin_dir):
        (kotlin_dir / "A.kt").write_text("val a = 1\n")
        (kotlin_dir / "B.kt").write_bytes(b"\xff")
        code, out, err = run(capsys, "scan", kotlin_dir)
        assert code == 2
        assert err.startswith("featrend: warning: ")
        assert "B.kt: decode error at byte 0" in err
        assert "TypeInference" in out

    def test_missing_path(self, capsys, tmp_path):
        code, _, err = run(capsys, "scan", tmp_path / "absent")
        assert code == 1
        assert err.startswith("featrend: error: ")


class TestHistory:
    def test_matches_library(self, capsys, fixture_repo, fixture_history, tmp_path):
        out = tmp_path / "h.json"
        assert run(capsys, "history", fixture_repo.path, "--out", out)[0] == 0
        assert read_history(out) == fixture_history

    def test_no_cache_is_byte_identical(self, capsys, fixture_repo, tmp_path):
        run(capsys, "history", fixture_repo.path, "--out", tmp_path / "a.json")
        run(capsys, "history", fixture_repo.path, "--no-cache", "--jobs", 2, "--out", tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_stdout(self, capsys, fixture_repo):
        code, out, _ = run(capsys, "history", fixture_repo.path, "--branch", "side")
        assert code == 0
        assert read_history(io.StringIO(out)).branch == "side"

    def test_lambda_series(self, capsys, tmp_path):
        from fixtures import build_linear_repo
        build_linear_repo(tmp_path / "r", [{"a.kt": "val f = { 1 }\n"}, {"b.kt": "val g = { 2 }\n"}])
        code, out, _ = run(capsys, "history", tmp_path / "r", "--features", "Lambda")
        history = read_history(io.StringIO(out))
        assert [sum(f.counts()[K.Lambda] for f in c.files.values()) for c in history.commits] == [1, 2]

    def test_bad_branch(self, capsys, fixture_repo):
        code, _, err = run(capsys, "history", fixture_repo.path, "--branch", "nope")
        assert code == 1
        assert "nope" in err

    def test_not_a_repo(self, capsys, tmp_path):
        assert run(capsys, "history", tmp_path)[0] == 1


class TestTrends:
    def test_golden(self, capsys, tmp_path):
        paths = write_fixture_histories(tmp_path / "h")
        out = tmp_path / "trends.csv"
        assert run(capsys, "trends", *paths, "--out", out)[0] == 0
        cols = ["repo", "kind", "n_commits", "family", "label", "bucket"]
        assert [{c: r[c] for c in cols} for r in rows(out)] == rows(DATA / "trends_golden.csv")

    def test_header_and_crlf(self, capsys, tmp_path):
        paths = write_fixture_histories(tmp_path / "h")
        run(capsys, "trends", *paths, "--out", tmp_path / "t.csv")
        raw = (tmp_path / "t.csv").read_bytes()
        assert raw.startswith(b"repo,kind,n_commits,family,coefficients,r2,label,bucket\r\n")
        assert raw.count(b"\n") == raw.count(b"\r\n")

    def test_absent_kind_has_no_row(self, capsys, tmp_path):
        paths = write_fixture_histories(tmp_path / "h")
        run(capsys, "trends", *paths, "--out", tmp_path / "t.csv")
        assert not [r for r in rows(tmp_path / "t.csv") if r["kind"] == "TailrecFunction"]

    def test_malformed_file_is_skipped(self, capsys, tmp_path):
        paths = write_fixture_histories(tmp_path / "h")
        bad = tmp_path / "bad.json"
        bad.write_text('{"schema": "featrend-history/1"}')
        code, _, err = run(capsys, "trends", bad, paths[0], "--out", tmp_path / "t.csv")
        assert code == 2
        assert f"featrend: warning: {bad}: skipped" in err
        assert {r["repo"] for r in rows(tmp_path / "t.csv")} == {"alpha"}

    def test_no_readable_input(self, capsys, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("nope")
        assert run(capsys, "trends", bad, "--out", tmp_path / "t.csv")[0] == 1

    def test_parallel_and_plots(self, capsys, tmp_path):
        paths = write_fixture_histories(tmp_path / "h")
        run(capsys, "trends", *paths, "--out", tmp_path / "a.csv")
        run(capsys, "--jobs", 3, "trends", *paths, "--out", tmp_path / "b.csv", "--plots", tmp_path / "p")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        plots = sorted(p.name for p in (tmp_path / "p").iterdir())
        assert len(plots) == len(rows(tmp_path / "a.csv"))
        assert "alpha__Lambda.svg" in plots

    def test_delta_flag(self, capsys, tmp_path):
        paths = write_fixture_histories(tmp_path / "h")
        run(capsys, "trends", *paths, "--delta", 0.5, "--out", tmp_path / "t.csv")
        families = {r["family"] for r in rows(tmp_path / "t.csv")}
        assert families <= {"Linear", ""}


class TestSummarize:
    @pytest.fixture
    def bundle(self, capsys, tmp_path):
        paths = write_fixture_histories(tmp_path / "h")
        run(capsys, "trends", *paths, "--out", tmp_path / "trends.csv")
        code, _, err = run(capsys, "summarize", *paths, "--trends", tmp_path / "trends.csv", "--out", tmp_path / "r")
        assert code == 0, err
        return tmp_path / "r"

    def test_outputs(self, bundle):
        names = {p.name for p in bundle.iterdir()}
        assert {"adoption.csv", "normalized.csv", "introduction.csv", "trend_table.csv", "NOTES.txt",
                "adoption.svg", "normalized.svg", "introduction.svg", "introduction_timeline.svg",
                "trend_table.svg"} <= names

    def test_adoption_percentages(self, bundle):
        table = {r["kind"]: r for r in rows(bundle / "adoption.csv")}
        assert table["Lambda"]["apps_using"] == "2"
        assert table["Lambda"]["pct_apps"] == "67"
        assert table["Coroutine"]["pct_apps"] == "33"
        assert table["Lambda"]["total_apps"] == "3"

    def test_feature_in_both_repos(self, capsys, tmp_path):
        paths = []
        for repo in ("a", "b"):
            path = tmp_path / f"{repo}.json"
            write_history(synthetic_history(repo, {K.Lambda: [1, 2, 3]}), path)
            paths.append(path)
        run(capsys, "summarize", *paths, "--out", tmp_path / "r")
        table = {r["kind"]: r for r in rows(tmp_path / "r" / "adoption.csv")}
        assert table["Lambda"]["pct_apps"] == "100"

    def test_trend_table_partition(self, bundle):
        for row in rows(bundle / "trend_table.csv"):
            labels = ["CR", "CD", "S", "SR", "SD", "SRP", "PGR", "PGD", "PSR", "PSD", "I"]
            assert sum(int(row[lab]) for lab in labels) == int(row["total"])
            assert sum(int(row[b]) for b in ("Inc", "Dec", "Unstable", "Stable")) == int(row["total"])

    def test_introduction_quartiles(self, bundle):
        from test_metrics import spreadsheet_quartile
        days = {}
        for r in rows(bundle / "introduction.csv"):
            if r["days"]:
                days.setdefault(r["kind"], []).append(int(r["days"]))
        assert days["Lambda"] == [26, 0]
        for kind, values in days.items():
            stats = cbook.boxplot_stats(values)[0]
            assert stats["q1"] == pytest.approx(float(spreadsheet_quartile(values, 1)))
            assert stats["med"] == pytest.approx(float(spreadsheet_quartile(values, 2)))
            assert stats["q3"] == pytest.approx(float(spreadsheet_quartile(values, 3)))

    def test_notes(self, bundle):
        text = (bundle / "NOTES.txt").read_text()
        assert ".kts" in text
        assert "SmartCast" in text
        assert "inheritances" in text
        assert "author" in text

    def test_unknown_repo_in_trends(self, capsys, tmp_path):
        paths = write_fixture_histories(tmp_path / "h")
        run(capsys, "trends", *paths, "--out", tmp_path / "trends.csv")
        code, _, err = run(capsys, "summarize", paths[0], "--trends", tmp_path / "trends.csv", "--out", tmp_path / "r")
        assert code == 1
        assert "unknown repo" in err

    def test_without_trends_file(self, capsys, bundle, tmp_path):
        paths = sorted(str(p) for p in (tmp_path / "h").iterdir())
        run(capsys, "summarize", *paths, "--out", tmp_path / "r2")
        assert (tmp_path / "r2" / "trend_table.csv").read_bytes() == (bundle / "trend_table.csv").read_bytes()


class TestGlobalFlags:
    def test_config_file(self, capsys, tmp_path, kotlin_dir):
        (kotlin_dir / "A.kt").write_text("val a = 1\nval f = { 2 }\n")
        conf = tmp_path / "c.conf"
        conf.write_text("features = Lambda\n")
        code, out, _ = run(capsys, "--config", conf, "scan", kotlin_dir)
        assert code == 0
        assert [r["kind"] for r in csv.DictReader(io.StringIO(out))] == ["Lambda"]

    def test_bad_config(self, capsys, tmp_path, kotlin_dir):
        conf = tmp_path / "c.conf"
        conf.write_text("delta = 7\n")
        code, _, err = run(capsys, "--config", conf, "scan", kotlin_dir)
        assert code == 1
        assert "delta" in err

    def test_quiet_keeps_warnings(self, capsys, kotlin_dir):
        (kotlin_dir / "B.kt").write_bytes(b"\xff")
        code, _, err = run(capsys, "scan", kotlin_dir, "--quiet")
        assert code == 2
        assert "decode error" in err

    def test_usage_error(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["bogus"])
        assert info.value.code == 2


def full_pipeline(root: Path, repo: Path) -> dict[str, bytes]:
    hist = root / "h"
    hist.mkdir(parents=True)
    paths = write_fixture_histories(hist)
    main(["history", str(repo), "--out", str(hist / "fx.json")])
    paths.append(str(hist / "fx.json"))
    main(["trends", *paths, "--out", str(root / "trends.csv"), "--plots", str(root / "plots")])
    main(["summarize", *paths, "--trends", str(root / "trends.csv"), "--out", str(root / "report")])
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


class TestDeterminism:
    def test_two_runs_are_byte_identical(self, capsys, fixture_repo, tmp_path):
        first = full_pipeline(tmp_path / "one", fixture_repo.path)
        second = full_pipeline(tmp_path / "two", fixture_repo.path)
        assert first.keys() == second.keys()
        assert any(k.endswith(".svg") for k in first)
        assert [k for k in first if first[k] != second[k]] == []

    def test_library_mine_matches_cli(self, capsys, fixture_repo, tmp_path):
        run(capsys, "history", fixture_repo.path, "--out", tmp_path / "a.json")
        buf = io.StringIO()
        write_history(mine(fixture_repo.path), buf)
        assert (tmp_path / "a.json").read_text(encoding="utf-8") == buf.getvalue()

"""Scripted git repositories and synthetic histories for the test-suite.

Every commit carries fixed author and committer identities and dates, so
commit ids are identical on every run.
"""

from __future__ import annotations

import os
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from featrend.detect import DenominatorCounts, FeatureKind, FileFeatureReport
from featrend.miner import CommitRecord, RepositoryHistory

DAY = 86400
T0 = 1614556800  # 2021-03-01T00:00:00Z

A_V1 = """\
package demo

val doubled = listOf(1, 2).map { it * 2 }
"""

A_V2 = """\
package demo

val doubled = listOf(1, 2).map { it * 2 }
val size = doubled?.size
"""

B_V1 = """\
package demo

data class Point(val x: Int, val y: Int)

fun shift(p: Point) = listOf(p).filter { it.x > 0 }
"""

C_V1 = """\
package demo

fun name(n: Int): String = when (n) {
    0 -> "zero"
    else -> "many"
}
"""

C_V2 = """\
package demo

fun name(n: Int): String = when (n) {
    0 -> "zero"
    1 -> "one"
    else -> "n=$n"
}
"""

D_V1 = """\
tailrec fun gcd(a: Int, b: Int): Int = if (b == 0) a else gcd(b, a % b)
"""


def git(repo: Path, *args: str, day: float = 0, stdin: bytes | None = None) -> str:
    stamp = f"@{T0 + int(day * DAY)} +0000"
    env = dict(
        os.environ,
        GIT_AUTHOR_NAME="Fixture",
        GIT_AUTHOR_EMAIL="fixture@example.org",
        GIT_COMMITTER_NAME="Fixture",
        GIT_COMMITTER_EMAIL="fixture@example.org",
        GIT_AUTHOR_DATE=stamp,
        # committer date stays fixed so back-dating only affects author dates
        GIT_COMMITTER_DATE=f"@{T0 + 30 * DAY} +0000",
        GIT_CONFIG_NOSYSTEM="1",
        GIT_CONFIG_GLOBAL=os.devnull,
        LC_ALL="C",
    )
    res = subprocess.run(["git", "-C", str(repo), *args], env=env, input=stdin,
                         capture_output=True, check=True)
    return res.stdout.decode().strip()


def _write(repo: Path, rel: str, text: str | bytes) -> None:
    p = repo / rel
    p.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(text, bytes):
        p.write_bytes(text)
    else:
        p.write_text(text, encoding="utf-8")


def _commit(repo: Path, message: str, day: float) -> str:
    git(repo, "add", "-A", day=day)
    git(repo, "commit", "-q", "--allow-empty", "-m", message, day=day)
    return git(repo, "rev-parse", "HEAD")


@dataclass
class FixtureRepo:
    path: Path
    mainline: list[str] = field(default_factory=list)
    side: list[str] = field(default_factory=list)
    days: list[float] = field(default_factory=list)


def build_repo(path: Path) -> FixtureRepo:
    """Ten-commit history with adds, edits, a deletion, a rename and a merge.

    Mainline (first-parent) commits and author days::

        0   README only (no Kotlin)          day 0
        1   add a.kt (Lambda, TypeInference) day 0.25
        2   add b.kt (DataClass, Lambda)     day 2
        3   edit a.kt (SafeCall)             day 5.25
        4   delete b.kt                      day 6
        5   merge side branch (c.kt, When)   day 8
        6   rename a.kt -> src/a.kt          day 10
        7   add d.kts (Tailrec)              day 12.25

    Measured from the first Kotlin commit, Lambda appears after 0 days,
    SafeCall after 5 and TailrecFunction after 12, which is also the span n.
    The side branch forks at commit 3 with two commits (days 6.5 and 7)
    that add and then edit c.kt.
    """
    path.mkdir(parents=True, exist_ok=True)
    git(path, "init", "-q", "-b", "main")
    fx = FixtureRepo(path)

    def main_commit(msg: str, day: float) -> None:
        fx.mainline.append(_commit(path, msg, day))
        fx.days.append(day)

    _write(path, "README.md", "demo\n")
    main_commit("readme", 0)
    _write(path, "a.kt", A_V1)
    main_commit("add a", 0.25)
    _write(path, "b.kt", B_V1)
    main_commit("add b", 2)
    _write(path, "a.kt", A_V2)
    main_commit("edit a", 5.25)

    git(path, "checkout", "-q", "-b", "side")
    _write(path, "c.kt", C_V1)
    fx.side.append(_commit(path, "add c", 6.5))
    _write(path, "c.kt", C_V2)
    fx.side.append(_commit(path, "edit c", 7))
    git(path, "checkout", "-q", "main")

    (path / "b.kt").unlink()
    main_commit("delete b", 6)
    git(path, "merge", "-q", "--no-ff", "--no-edit", "side", day=8)
    fx.mainline.append(git(path, "rev-parse", "HEAD"))
    fx.days.append(8)
    (path / "src").mkdir()
    (path / "a.kt").rename(path / "src" / "a.kt")
    main_commit("move a", 10)
    _write(path, "d.kts", D_V1)
    main_commit("add d", 12.25)
    return fx


def build_linear_repo(path: Path, files: Sequence[Mapping[str, str | bytes | None]]) -> list[str]:
    """One commit per mapping; a None value deletes the path."""
    path.mkdir(parents=True, exist_ok=True)
    git(path, "init", "-q", "-b", "main")
    ids = []
    for i, change in enumerate(files):
        for rel, text in change.items():
            if text is None:
                (path / rel).unlink()
            else:
                _write(path, rel, text)
        ids.append(_commit(path, f"c{i}", i))
    return ids


def synthetic_history(
    repo_id: str,
    series: Mapping[FeatureKind, Sequence[int]],
    n: int | None = None,
    days: Sequence[int] | None = None,
    denominators: DenominatorCounts | None = None,
) -> RepositoryHistory:
    """History whose single file carries the given per-commit counts.

    Series shorter than ``n`` are right-aligned: the feature is introduced
    ``n - len(values)`` commits after the first one.
    """
    n = n or max(len(v) for v in series.values())
    den = denominators or DenominatorCounts(lloc=1000, variable_declarations=100, named_functions=100,
                                            classes=50, function_calls=500, strings=100, properties=50,
                                            object_declarations=20, inheritances=20, constructors=50)
    history = RepositoryHistory(repo_id, "main")
    for i in range(n):
        counts = {}
        for kind, values in series.items():
            j = i - (n - len(values))
            if j >= 0:
                counts[kind] = int(values[j])
        rep = FileFeatureReport("Main.kt", [], den, 0, declared_counts=counts)
        ts = T0 + (days[i] if days is not None else i) * DAY
        history.commits.append(CommitRecord(f"{repo_id}-{i:04d}".ljust(40, "0"), ts, {"Main.kt": rep}))
    return history

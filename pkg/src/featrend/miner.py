"""Walk a git branch oldest-first and detect features in every Kotlin file.

Git is driven through its plumbing commands via subprocess. Detection
results are cached by blob id, so a file that did not change between
commits is only analyzed once.
"""

from __future__ import annotations

import json
import logging
import multiprocessing
import os
import subprocess
import threading
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable

from featrend.detect import (
    DenominatorCounts,
    DetectorConfig,
    FeatureInstance,
    FeatureKind,
    FileFeatureReport,
    detect,
)
from featrend.syntax import DecodeError, parse_source

__all__ = [
    "BranchNotFound",
    "CommitRecord",
    "EmptyRepository",
    "KOTLIN_SUFFIXES",
    "MalformedInput",
    "RepoNotFound",
    "RepositoryHistory",
    "SCHEMA",
    "SchemaVersionMismatch",
    "commit_totals",
    "linearize",
    "mine",
    "read_history",
    "write_history",
]

log = logging.getLogger(__name__)

SCHEMA = "featrend-history/1"
KOTLIN_SUFFIXES = (".kt", ".kts")


class MinerError(Exception):
    """Base class for repository mining errors."""


class RepoNotFound(MinerError):
    pass


class BranchNotFound(MinerError):
    pass


class EmptyRepository(MinerError):
    pass


class SchemaVersionMismatch(ValueError):
    pass


class MalformedInput(ValueError):
    pass


@dataclass
class CommitRecord:
    commit_id: str
    author_timestamp: int
    files: dict[str, FileFeatureReport] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    @property
    def has_kotlin(self) -> bool:
        return bool(self.files)


@dataclass
class RepositoryHistory:
    repo_id: str
    branch: str
    commits: list[CommitRecord] = field(default_factory=list)


def commit_totals(record: CommitRecord) -> tuple[Counter, DenominatorCounts]:
    """Sum feature counts and denominators over every file of one commit."""
    totals: Counter = Counter()
    den = DenominatorCounts()
    for report in record.files.values():
        totals.update(report.counts())
        den = den + report.denominators
    return totals, den


# --------------------------------------------------------------------------
# git plumbing
# --------------------------------------------------------------------------


def _git(repo: Path, *args: str, check: bool = True) -> subprocess.CompletedProcess:
    env = dict(os.environ, LC_ALL="C", GIT_TERMINAL_PROMPT="0")
    return subprocess.run(
        ["git", "-C", str(repo), *args],
        capture_output=True,
        env=env,
        check=check,
    )


def _open_repo(repo: str | os.PathLike) -> Path:
    path = Path(repo)
    if not path.exists():
        raise RepoNotFound(f"{path}: no such directory")
    res = _git(path, "rev-parse", "--show-toplevel", check=False)
    if res.returncode != 0:
        bare = _git(path, "rev-parse", "--is-bare-repository", check=False)
        if bare.returncode == 0 and bare.stdout.strip() == b"true":
            return path.resolve()
        raise RepoNotFound(f"{path}: not a git repository")
    return Path(res.stdout.decode("utf-8", "replace").strip())


def _resolve_branch(repo: Path, branch: str | None) -> tuple[str, str]:
    """Return (branch name, tip revision)."""
    head = _git(repo, "rev-parse", "--verify", "--quiet", "HEAD^{commit}", check=False)
    refs = _git(repo, "for-each-ref", "--count=1", "refs/heads", check=False)
    if head.returncode != 0 and not refs.stdout.strip():
        raise EmptyRepository(f"{repo}: repository has no commits")
    if branch is None:
        sym = _git(repo, "symbolic-ref", "--quiet", "--short", "HEAD", check=False)
        name = sym.stdout.decode().strip() if sym.returncode == 0 else "HEAD"
        if head.returncode != 0:
            raise EmptyRepository(f"{repo}: branch {name} has no commits")
        return name, "HEAD"
    for candidate in (f"refs/heads/{branch}", branch):
        res = _git(repo, "rev-parse", "--verify", "--quiet", f"{candidate}^{{commit}}", check=False)
        if res.returncode == 0:
            return branch, res.stdout.decode().strip()
    raise BranchNotFound(f"{repo}: no branch named {branch!r}")


def _first_parent_log(repo: Path, tip: str) -> list[tuple[str, int]]:
    res = _git(repo, "log", "--first-parent", "--reverse", "--format=%H %at", tip, "--")
    out = []
    for line in res.stdout.decode().splitlines():
        sha, ts = line.split()
        out.append((sha, int(ts)))
    return out


def linearize(repo: str | os.PathLike, branch: str | None = None) -> list[str]:
    """First-parent chain from the root commit to the branch tip, oldest first.

    Raises:
        RepoNotFound: ``repo`` is not a readable git repository.
        BranchNotFound: ``branch`` does not name a commit.
        EmptyRepository: the repository has no commits.
    """
    path = _open_repo(repo)
    _, tip = _resolve_branch(path, branch)
    return [sha for sha, _ in _first_parent_log(path, tip)]


def _kotlin_blobs(repo: Path, commit: str) -> list[tuple[str, str]]:
    """(path, blob id) of every Kotlin file in a commit, sorted by path."""
    res = _git(repo, "ls-tree", "-r", "-z", "--full-tree", commit)
    out = []
    for entry in res.stdout.split(b"\0"):
        if not entry:
            continue
        meta, _, raw_path = entry.partition(b"\t")
        parts = meta.split()
        if len(parts) != 3 or parts[1] != b"blob":
            continue
        name = raw_path.decode("utf-8", "replace")
        if name.endswith(KOTLIN_SUFFIXES):
            out.append((name, parts[2].decode()))
    out.sort()
    return out


class _BlobReader:
    """Persistent ``git cat-file --batch`` process."""

    def __init__(self, repo: Path) -> None:
        self._proc = subprocess.Popen(
            ["git", "-C", str(repo), "cat-file", "--batch"],
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            env=dict(os.environ, LC_ALL="C"),
        )

    def read(self, sha: str) -> bytes:
        assert self._proc.stdin is not None and self._proc.stdout is not None
        self._proc.stdin.write(sha.encode() + b"\n")
        self._proc.stdin.flush()
        header = self._proc.stdout.readline().split()
        if len(header) != 3:
            raise MinerError(f"cat-file: unexpected reply for {sha}")
        size = int(header[2])
        data = self._proc.stdout.read(size)
        self._proc.stdout.read(1)
        return data

    def close(self) -> None:
        if self._proc.stdin:
            self._proc.stdin.close()
        self._proc.wait()

    def __enter__(self) -> _BlobReader:
        return self

    def __exit__(self, *exc) -> None:
        self.close()


# --------------------------------------------------------------------------
# analysis and cache
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class _BlobResult:
    """Path-independent detection outcome for one blob."""

    instances: tuple[tuple[FeatureKind, int], ...] = ()
    denominators: DenominatorCounts | None = None
    warnings: int = 0
    error: str | None = None

    def report(self, path: str) -> FileFeatureReport:
        return FileFeatureReport(
            path=path,
            instances=[FeatureInstance(k, path, line) for k, line in self.instances],
            denominators=self.denominators or DenominatorCounts(),
            warnings=self.warnings,
        )


def _analyze_blob(data: bytes, config: DetectorConfig) -> _BlobResult:
    try:
        tree = parse_source(data)
    except DecodeError as exc:
        return _BlobResult(error=f"decode error at byte {exc.offset}")
    rep = detect(tree, config)
    return _BlobResult(tuple((i.kind, i.line) for i in rep.instances), rep.denominators, rep.warnings)


class BlobCache:
    """Thread-safe map from blob id to detection result."""

    def __init__(self) -> None:
        self._data: dict[str, _BlobResult] = {}
        self._lock = threading.Lock()

    def get(self, sha: str) -> _BlobResult | None:
        with self._lock:
            return self._data.get(sha)

    def put(self, sha: str, result: _BlobResult) -> None:
        with self._lock:
            self._data.setdefault(sha, result)

    def __len__(self) -> int:
        with self._lock:
            return len(self._data)


def mine(
    repo: str | os.PathLike,
    branch: str | None = None,
    *,
    config: DetectorConfig | None = None,
    use_cache: bool = True,
    jobs: int = 1,
    repo_id: str | None = None,
) -> RepositoryHistory:
    """Detect features in every Kotlin file of every first-parent commit.

    Args:
        repo: Path to the repository (work tree or bare).
        branch: Branch to walk. Defaults to the branch HEAD points to.
        config: Detector settings.
        use_cache: Reuse results for unchanged blobs. Disabling it re-scans
            every file of every commit and exists mainly as a test oracle.
        jobs: Worker processes for per-commit file detection.
        repo_id: Identifier stored in the history. Defaults to the
            repository directory name.
    """
    cfg = config or DetectorConfig()
    path = _open_repo(repo)
    name, tip = _resolve_branch(path, branch)
    log_entries = _first_parent_log(path, tip)
    history = RepositoryHistory(repo_id=repo_id or path.name, branch=name)
    cache = BlobCache()
    pool = None
    if jobs > 1:
        # forked workers would inherit the cat-file pipe and keep git from exiting
        pool = ProcessPoolExecutor(max_workers=jobs, mp_context=multiprocessing.get_context("spawn"))
    try:
        with _BlobReader(path) as reader:
            for sha, ts in log_entries:
                record = CommitRecord(sha, ts)
                blobs = _kotlin_blobs(path, sha)
                results: dict[str, _BlobResult] = {}
                todo: list[tuple[str, bytes]] = []
                for _, blob in blobs:
                    hit = cache.get(blob) if use_cache else None
                    if hit is not None:
                        results[blob] = hit
                    elif blob not in results and all(blob != b for b, _ in todo):
                        todo.append((blob, reader.read(blob)))
                if pool is not None and len(todo) > 1:
                    computed = list(pool.map(_analyze_blob, [d for _, d in todo], [cfg] * len(todo)))
                else:
                    computed = [_analyze_blob(d, cfg) for _, d in todo]
                for (blob, _), res in zip(todo, computed):
                    results[blob] = res
                    if use_cache:
                        cache.put(blob, res)
                for file_path, blob in blobs:
                    res = results[blob]
                    if res.error is not None:
                        record.warnings.append(f"{file_path}: {res.error}")
                        log.warning("%s@%s: %s", file_path, sha[:12], res.error)
                        continue
                    record.files[file_path] = res.report(file_path)
                history.commits.append(record)
    finally:
        if pool is not None:
            pool.shutdown()
    return history


# --------------------------------------------------------------------------
# JSON
# --------------------------------------------------------------------------

_KIND_ORDER = {k: i for i, k in enumerate(FeatureKind)}
_DEN_FIELDS = tuple(DenominatorCounts().as_dict())


def _history_to_json(history: RepositoryHistory) -> dict:
    commits = []
    for rec in history.commits:
        files = {}
        for file_path in sorted(rec.files):
            rep = rec.files[file_path]
            counts = rep.counts()
            entry = {
                "features": {k.value: counts[k] for k in sorted(counts, key=_KIND_ORDER.__getitem__)},
                "denominators": rep.denominators.as_dict(),
            }
            if rep.declared_counts is None:
                entry["instances"] = [{"kind": i.kind.value, "line": i.line} for i in rep.instances]
            if rep.warnings:
                entry["parse_warnings"] = rep.warnings
            files[file_path] = entry
        doc = {"id": rec.commit_id, "timestamp": rec.author_timestamp, "files": files}
        if rec.warnings:
            doc["warnings"] = list(rec.warnings)
        commits.append(doc)
    return {"schema": SCHEMA, "repo_id": history.repo_id, "branch": history.branch, "commits": commits}


def write_history(history: RepositoryHistory, sink: str | os.PathLike | IO[str]) -> None:
    """Serialize ``history`` as a featrend-history/1 JSON document."""
    text = json.dumps(_history_to_json(history), indent=1, ensure_ascii=False) + "\n"
    if hasattr(sink, "write"):
        sink.write(text)
    else:
        Path(sink).write_text(text, encoding="utf-8")


def _require(obj: dict, key: str, types: type | tuple, where: str):
    if not isinstance(obj, dict) or key not in obj:
        raise MalformedInput(f"{where}: missing required key {key!r}")
    value = obj[key]
    if not isinstance(value, types) or isinstance(value, bool):
        raise MalformedInput(f"{where}: {key!r} has the wrong type")
    return value


def _count(value, where: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value < 0:
        raise MalformedInput(f"{where}: expected a non-negative integer")
    return value


def _kind(name, where: str) -> FeatureKind:
    try:
        return FeatureKind(name)
    except ValueError:
        raise MalformedInput(f"{where}: unknown feature kind {name!r}") from None


def _file_from_json(file_path: str, doc: dict, where: str) -> FileFeatureReport:
    features = _require(doc, "features", dict, where)
    declared = {_kind(k, where): _count(v, f"{where}.features.{k}") for k, v in features.items()}
    den_doc = _require(doc, "denominators", dict, where)
    den = DenominatorCounts(**{f: _count(den_doc.get(f, 0), f"{where}.denominators.{f}") for f in _DEN_FIELDS})
    warnings = _count(doc.get("parse_warnings", 0), f"{where}.parse_warnings")
    if "instances" not in doc:
        return FileFeatureReport(file_path, [], den, warnings, declared_counts=declared)
    raw = doc["instances"]
    if not isinstance(raw, list):
        raise MalformedInput(f"{where}: 'instances' must be a list")
    instances = []
    for i, item in enumerate(raw):
        iw = f"{where}.instances[{i}]"
        kind = _kind(_require(item, "kind", str, iw), iw)
        line = _count(_require(item, "line", int, iw), iw)
        instances.append(FeatureInstance(kind, file_path, line))
    rep = FileFeatureReport(file_path, instances, den, warnings)
    if {k: v for k, v in declared.items() if v} != dict(rep.counts()):
        raise MalformedInput(f"{where}: feature counts disagree with instances")
    return rep


def history_from_json(doc) -> RepositoryHistory:
    if not isinstance(doc, dict):
        raise MalformedInput("top level must be an object")
    schema = doc.get("schema")
    if schema != SCHEMA:
        raise SchemaVersionMismatch(f"expected schema {SCHEMA!r}, found {schema!r}")
    repo_id = _require(doc, "repo_id", str, "document")
    branch = _require(doc, "branch", str, "document")
    commits_doc = _require(doc, "commits", list, "document")
    history = RepositoryHistory(repo_id, branch)
    seen: set[str] = set()
    for idx, c in enumerate(commits_doc):
        where = f"commits[{idx}]"
        cid = _require(c, "id", str, where)
        if cid in seen:
            raise MalformedInput(f"{where}: duplicate commit id {cid}")
        seen.add(cid)
        ts = _require(c, "timestamp", int, where)
        files_doc = _require(c, "files", dict, where)
        warnings = c.get("warnings", [])
        if not isinstance(warnings, list) or not all(isinstance(w, str) for w in warnings):
            raise MalformedInput(f"{where}: 'warnings' must be a list of strings")
        rec = CommitRecord(cid, ts, warnings=list(warnings))
        for file_path, fdoc in files_doc.items():
            rec.files[file_path] = _file_from_json(file_path, fdoc, f"{where}.files[{file_path!r}]")
        history.commits.append(rec)
    return history


def read_history(source: str | os.PathLike | IO[str]) -> RepositoryHistory:
    """Load a featrend-history/1 JSON document.

    Raises:
        SchemaVersionMismatch: the ``schema`` field is absent or different.
        MalformedInput: the document is not valid JSON or breaks the schema.
    """
    try:
        if hasattr(source, "read"):
            doc = json.load(source)
        else:
            with open(source, encoding="utf-8") as fh:
                doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise MalformedInput(f"invalid JSON: {exc}") from None
    return history_from_json(doc)


def iter_series_totals(history: RepositoryHistory) -> Iterable[tuple[CommitRecord, Counter, DenominatorCounts]]:
    for rec in history.commits:
        totals, den = commit_totals(rec)
        yield rec, totals, den

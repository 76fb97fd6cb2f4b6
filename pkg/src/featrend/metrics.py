"""Normalized usage, adoption summaries and feature introduction moments."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from featrend.detect import DenominatorCounts, FeatureKind
from featrend.miner import RepositoryHistory, commit_totals

__all__ = [
    "AdoptionSummary",
    "IntroductionMoment",
    "KindAdoption",
    "NORMALIZATION",
    "NoKotlinCommit",
    "NormalizedUsage",
    "SECONDS_PER_DAY",
    "introduction_moment",
    "kotlin_span_days",
    "normalize",
    "quartiles",
    "summarize",
]

SECONDS_PER_DAY = 86400

K = FeatureKind

# Denominator population of each kind (fields of DenominatorCounts, summed).
NORMALIZATION: dict[FeatureKind, tuple[str, ...]] = {
    K.TypeInference: ("variable_declarations",),
    K.Lambda: ("lloc",),
    K.InlineFunction: ("named_functions",),
    K.SafeCall: ("lloc",),
    K.UnsafeCall: ("lloc",),
    K.WhenExpr: ("lloc",),
    K.FuncWithDefaultValue: ("named_functions", "constructors"),
    K.FuncCallWithNamedArg: ("function_calls",),
    K.SmartCast: ("lloc",),
    K.DataClass: ("classes",),
    K.RangeExpr: ("lloc",),
    K.ExtensionFunction: ("named_functions",),
    K.StringTemplate: ("strings",),
    K.SuperDelegation: ("inheritances",),
    K.PropertyDelegation: ("properties",),
    K.OperatorOverloading: ("named_functions",),
    K.Singleton: ("object_declarations",),
    K.CompanionObject: ("object_declarations",),
    K.DestructuringDecl: ("variable_declarations",),
    K.InfixFunction: ("named_functions",),
    K.TailrecFunction: ("named_functions",),
    K.SealedClass: ("classes",),
    K.TypeAlias: ("lloc",),
    K.Coroutine: ("lloc",),
    K.Contract: ("lloc",),
    K.InlineClass: ("classes",),
}


class NoKotlinCommit(ValueError):
    """The history has no commit containing a Kotlin file."""


@dataclass(frozen=True)
class NormalizedUsage:
    kind: FeatureKind
    numerator: int
    denominator: int

    @property
    def ratio(self) -> float | None:
        """numerator / denominator, or None when the denominator is zero."""
        if self.denominator == 0:
            return None
        return self.numerator / self.denominator


def denominator_for(kind: FeatureKind, den: DenominatorCounts) -> int:
    return sum(getattr(den, f) for f in NORMALIZATION[kind])


def normalize(
    totals: Mapping[FeatureKind, int],
    denominators: DenominatorCounts,
    kinds: Iterable[FeatureKind] = FeatureKind,
) -> list[NormalizedUsage]:
    """One NormalizedUsage per kind for a single snapshot."""
    return [NormalizedUsage(k, int(totals.get(k, 0)), denominator_for(k, denominators)) for k in kinds]


@dataclass(frozen=True)
class IntroductionMoment:
    kind: FeatureKind
    days: int | None
    first_commit_id: str | None


def _first_kotlin_index(history: RepositoryHistory) -> int:
    for i, rec in enumerate(history.commits):
        if rec.files:
            return i
    raise NoKotlinCommit(f"{history.repo_id}: no commit contains a Kotlin file")


def kotlin_span_days(history: RepositoryHistory) -> int:
    """Whole days between the first Kotlin commit and the last commit (n)."""
    first = history.commits[_first_kotlin_index(history)]
    last = history.commits[-1]
    return max(0, (last.author_timestamp - first.author_timestamp) // SECONDS_PER_DAY)


def introduction_moment(
    history: RepositoryHistory, kinds: Iterable[FeatureKind] = FeatureKind
) -> list[IntroductionMoment]:
    """Days from the first Kotlin commit to the first commit using each kind.

    Author timestamps need not be monotone along the first-parent chain, so
    the result is clamped to ``[0, n]``.

    Raises:
        NoKotlinCommit: no commit contains a Kotlin file.
    """
    start = _first_kotlin_index(history)
    t0 = history.commits[start].author_timestamp
    n = kotlin_span_days(history)
    first_use: dict[FeatureKind, tuple[str, int]] = {}
    for rec in history.commits[start:]:
        totals, _ = commit_totals(rec)
        for k, v in totals.items():
            if v > 0 and k not in first_use:
                first_use[k] = (rec.commit_id, rec.author_timestamp)
    out = []
    for k in kinds:
        if k not in first_use:
            out.append(IntroductionMoment(k, None, None))
            continue
        cid, ts = first_use[k]
        days = min(max((ts - t0) // SECONDS_PER_DAY, 0), n)
        out.append(IntroductionMoment(k, int(days), cid))
    return out


def quartiles(values: Sequence[float]) -> tuple[float, float, float] | None:
    """(Q1, median, Q3) with linear interpolation, as spreadsheet QUARTILE.INC."""
    if not values:
        return None
    q = np.percentile(np.asarray(values, dtype=float), [25, 50, 75])
    return float(q[0]), float(q[1]), float(q[2])


@dataclass
class KindAdoption:
    kind: FeatureKind
    apps_using: int = 0
    instances_last_commit: int = 0
    normalized: list[tuple[str, float]] = field(default_factory=list)
    excluded: int = 0

    @property
    def ratios(self) -> list[float]:
        return [r for _, r in self.normalized]

    @property
    def quartiles(self) -> tuple[float, float, float] | None:
        return quartiles(self.ratios)

    @property
    def median(self) -> float | None:
        q = self.quartiles
        return None if q is None else q[1]


@dataclass
class AdoptionSummary:
    total_apps: int
    kinds: dict[FeatureKind, KindAdoption]

    def pct_apps(self, kind: FeatureKind) -> float:
        if self.total_apps == 0:
            return 0.0
        return 100.0 * self.kinds[kind].apps_using / self.total_apps


def summarize(histories: Sequence[RepositoryHistory], kinds: Iterable[FeatureKind] = FeatureKind) -> AdoptionSummary:
    """Per-kind adoption facts across repositories.

    ``apps_using`` counts repositories with an instance in any commit. The
    instance totals and the normalized distribution come from each
    repository's last commit. Repositories whose denominator is zero there
    are left out of the distribution and counted in ``excluded``.
    """
    kinds = list(kinds)
    result = {k: KindAdoption(k) for k in kinds}
    for hist in histories:
        ever: set[FeatureKind] = set()
        for rec in hist.commits:
            totals, _ = commit_totals(rec)
            ever.update(k for k, v in totals.items() if v > 0)
        if hist.commits:
            last_totals, last_den = commit_totals(hist.commits[-1])
        else:
            last_totals, last_den = {}, DenominatorCounts()
        for usage in normalize(last_totals, last_den, kinds):
            entry = result[usage.kind]
            if usage.kind in ever:
                entry.apps_using += 1
            entry.instances_last_commit += usage.numerator
            if usage.ratio is None:
                entry.excluded += 1
            else:
                entry.normalized.append((hist.repo_id, usage.ratio))
    return AdoptionSummary(len(histories), result)

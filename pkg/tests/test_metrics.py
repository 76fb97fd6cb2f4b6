"""Normalization, adoption summary and introduction moment tests."""

from collections import Counter
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fixtures import synthetic_history
from featrend.detect import DenominatorCounts, FeatureKind
from featrend.metrics import (
    NoKotlinCommit,
    introduction_moment,
    kotlin_span_days,
    normalize,
    quartiles,
    summarize,
)
from featrend.miner import CommitRecord, RepositoryHistory

K = FeatureKind


def spreadsheet_quartile(values, q):
    """QUARTILE.INC by hand: linear interpolation at rank (n - 1) * q / 4."""
    xs = sorted(Fraction(v) for v in values)
    pos = Fraction(len(xs) - 1) * q / 4
    lo = int(pos)
    frac = pos - lo
    if lo + 1 < len(xs):
        return xs[lo] + (xs[lo + 1] - xs[lo]) * frac
    return xs[lo]


def moments(history, kinds=FeatureKind):
    return {m.kind: m.days for m in introduction_moment(history, kinds)}


class TestNormalize:
    def test_type_inference_ratio(self):
        [u] = normalize({K.TypeInference: 3}, DenominatorCounts(variable_declarations=4), [K.TypeInference])
        assert u.ratio == 0.75

    def test_zero_denominator_is_undefined(self):
        [u] = normalize({}, DenominatorCounts(), [K.DataClass])
        assert (u.numerator, u.denominator, u.ratio) == (0, 0, None)

    def test_object_declarations(self):
        usages = normalize({K.Singleton: 2, K.CompanionObject: 2}, DenominatorCounts(object_declarations=4),
                           [K.Singleton, K.CompanionObject])
        assert [u.ratio for u in usages] == [0.5, 0.5]

    def test_super_delegation_uses_inheritances(self):
        [u] = normalize({K.SuperDelegation: 1}, DenominatorCounts(classes=10, inheritances=2), [K.SuperDelegation])
        assert u.denominator == 2

    def test_default_values_cover_constructors(self):
        den = DenominatorCounts(named_functions=3, constructors=1)
        [u] = normalize({K.FuncWithDefaultValue: 2}, den, [K.FuncWithDefaultValue])
        assert u.denominator == 4

    @pytest.mark.parametrize("kind", [K.SafeCall, K.UnsafeCall, K.WhenExpr, K.SmartCast, K.RangeExpr,
                                      K.TypeAlias, K.Coroutine, K.Contract, K.Lambda])
    def test_lloc_kinds(self, kind):
        [u] = normalize({kind: 5}, DenominatorCounts(lloc=50, classes=1), [kind])
        assert u.denominator == 50

    def test_one_row_per_kind(self):
        assert [u.kind for u in normalize({}, DenominatorCounts())] == list(FeatureKind)


class TestIntroductionMoment:
    def test_fixture_cases(self, fixture_history):
        got = moments(fixture_history)
        assert got[K.Lambda] == 0
        assert got[K.SafeCall] == 5
        assert got[K.TailrecFunction] == 12
        assert kotlin_span_days(fixture_history) == 12
        assert got[K.Coroutine] is None

    def test_first_commit_ids(self, fixture_repo, fixture_history):
        by_kind = {m.kind: m.first_commit_id for m in introduction_moment(fixture_history)}
        assert by_kind[K.Lambda] == fixture_repo.mainline[1]
        assert by_kind[K.TailrecFunction] == fixture_repo.mainline[-1]
        assert by_kind[K.Coroutine] is None

    def test_no_kotlin(self):
        history = RepositoryHistory("r", "main", [CommitRecord("a" * 40, 0)])
        with pytest.raises(NoKotlinCommit):
            introduction_moment(history)

    def test_leading_commits_without_kotlin_are_skipped(self):
        history = synthetic_history("r", {K.Lambda: [1, 1]}, days=[10, 13])
        history.commits.insert(0, CommitRecord("0" * 40, history.commits[0].author_timestamp - 99 * 86400))
        assert moments(history, [K.Lambda]) == {K.Lambda: 0}

    def test_back_dated_author_clamps_to_zero(self):
        # a rebased commit may carry an author date older than the first Kotlin commit
        history = synthetic_history("r", {K.Lambda: [0, 0, 1], K.WhenExpr: [1, 1, 1]}, days=[10, 20, 3])
        assert moments(history, [K.Lambda]) == {K.Lambda: 0}

    def test_clamped_to_span(self):
        history = synthetic_history("r", {K.Lambda: [0, 1, 1], K.WhenExpr: [1, 1, 1]}, days=[0, 9, 4])
        assert kotlin_span_days(history) == 4
        assert moments(history, [K.Lambda]) == {K.Lambda: 4}

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 5)), min_size=1, max_size=12),
           st.integers(1, 12))
    def test_monotone_under_truncation(self, steps, keep):
        days, total = [], 0
        for gap, _ in steps:
            total += gap
            days.append(total)
        counts = [c for _, c in steps]
        full = synthetic_history("r", {K.Lambda: counts, K.WhenExpr: [1] * len(counts)}, days=days)
        cut = RepositoryHistory("r", "main", full.commits[: max(1, min(keep, len(counts)))])
        before, after = moments(full, [K.Lambda]), moments(cut, [K.Lambda])
        if after[K.Lambda] is not None:
            assert before[K.Lambda] is not None
            assert after[K.Lambda] >= before[K.Lambda]


class TestQuartiles:
    @pytest.mark.parametrize("values", [[1], [1, 2], [1, 2, 3, 4], [0.1, 0.5, 0.25, 0.9, 0.3], [5, 1, 4, 1, 3, 9, 2]])
    def test_matches_spreadsheet(self, values):
        got = quartiles(values)
        for q, value in zip((1, 2, 3), got):
            assert value == pytest.approx(float(spreadsheet_quartile(values, q)), rel=1e-12)

    def test_empty(self):
        assert quartiles([]) is None


class TestSummarize:
    def test_apps_using(self):
        a = synthetic_history("a", {K.Lambda: [1, 2]})
        b = synthetic_history("b", {K.WhenExpr: [1, 1]})
        summary = summarize([a, b])
        assert summary.kinds[K.Lambda].apps_using == 1
        assert summary.pct_apps(K.Lambda) == 50

    def test_used_in_both(self):
        summary = summarize([synthetic_history(r, {K.Lambda: [1]}) for r in "ab"])
        assert summary.pct_apps(K.Lambda) == 100

    def test_removed_before_last_commit(self):
        summary = summarize([synthetic_history("a", {K.Lambda: [3, 0]})])
        entry = summary.kinds[K.Lambda]
        assert entry.apps_using == 1
        assert entry.instances_last_commit == 0

    def test_medians_match_hand_computation(self):
        # Lambda over 1000 lloc: ratios 0.004, 0.010, 0.001
        histories = [synthetic_history(r, {K.Lambda: [n]}) for r, n in (("a", 4), ("b", 10), ("c", 1))]
        entry = summarize(histories).kinds[K.Lambda]
        assert entry.quartiles == pytest.approx((0.0025, 0.004, 0.007))
        assert entry.instances_last_commit == 15

    def test_zero_denominator_excluded(self):
        empty = DenominatorCounts(lloc=10)
        histories = [synthetic_history("a", {K.Lambda: [1]}),
                     synthetic_history("b", {K.Lambda: [1]}, denominators=empty)]
        entry = summarize(histories).kinds[K.DataClass]
        assert entry.excluded == 1
        assert len(entry.ratios) == 1

    def test_single_history_matches_own_facts(self, fixture_history):
        from featrend.miner import commit_totals
        summary = summarize([fixture_history])
        totals, den = commit_totals(fixture_history.commits[-1])
        ever = Counter()
        for rec in fixture_history.commits:
            ever.update(k for k, v in commit_totals(rec)[0].items() if v)
        for usage in normalize(totals, den):
            entry = summary.kinds[usage.kind]
            assert entry.instances_last_commit == usage.numerator
            assert entry.apps_using == (1 if ever[usage.kind] else 0)
            assert entry.ratios == ([] if usage.ratio is None else [usage.ratio])

"""Run configuration and its line-oriented ``key=value`` file format.

Blank lines and lines starting with ``#`` are ignored. List-valued keys may
repeat; each occurrence adds comma-separated entries::

    disable = SmartCast
    coroutine_keywords = launch, async, produce
    range_infix = step
    delta = 0.01
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path

from featrend.detect import DEFAULT_COROUTINE_KEYWORDS, DEFAULT_RANGE_INFIX, DetectorConfig, FeatureKind
from featrend.trendfit import FitConfig

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config", "parse_kinds"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Everything a CLI run can tune.

    ``coroutine_keywords`` replaces the default keyword set when given;
    ``range_infix`` names are added to ``until`` and ``downTo``.
    """

    features: frozenset[FeatureKind] = frozenset(FeatureKind)
    coroutine_keywords: frozenset[str] = DEFAULT_COROUTINE_KEYWORDS
    range_infix: frozenset[str] = DEFAULT_RANGE_INFIX
    delta: float = 0.01
    poly_threshold: float = 1e-4
    sudden_width: float = 2.0
    branch: str | None = None
    jobs: int = 1
    extra: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in ("delta", "poly_threshold", "sudden_width"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not self.delta < 1:
            raise ConfigError("delta must be below 1")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")

    @property
    def detector(self) -> DetectorConfig:
        return DetectorConfig(self.features, self.coroutine_keywords, self.range_infix)

    @property
    def fit(self) -> FitConfig:
        return FitConfig(delta=self.delta, poly_threshold=self.poly_threshold, sudden_width=self.sudden_width)

    def with_overrides(self, **changes) -> RunConfig:
        return replace(self, **{k: v for k, v in changes.items() if v is not None})


def parse_kinds(text: str) -> frozenset[FeatureKind]:
    """Parse a comma-separated list of feature kind names (case-insensitive)."""
    lookup = {k.value.lower(): k for k in FeatureKind}
    kinds = set()
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if item.lower() == "all":
            kinds.update(FeatureKind)
            continue
        try:
            kinds.add(lookup[item.lower()])
        except KeyError:
            raise ConfigError(f"unknown feature kind {item!r}") from None
    return frozenset(kinds)


def _split(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _number(key: str, value: str, kind=float):
    try:
        return kind(value)
    except ValueError:
        raise ConfigError(f"{key}: not a number: {value!r}") from None


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    enabled: set[FeatureKind] | None = None
    disabled: set[FeatureKind] = set()
    coroutine: set[str] | None = None
    infix: set[str] = set(DEFAULT_RANGE_INFIX)
    values: dict = {}
    extra: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected key=value")
        key = key.strip().lower().replace("-", "_")
        value = value.strip()
        try:
            if key in ("features", "feature", "enable"):
                enabled = (enabled or set()) | parse_kinds(value)
            elif key == "disable":
                disabled |= parse_kinds(value)
            elif key in ("coroutine_keywords", "coroutine_keyword"):
                coroutine = (coroutine or set()) | set(_split(value))
            elif key == "range_infix":
                infix |= set(_split(value))
            elif key in ("delta", "poly_threshold", "sudden_width"):
                values[key] = _number(key, value)
            elif key == "jobs":
                values["jobs"] = _number(key, value, int)
            elif key == "branch":
                values["branch"] = value or None
            else:
                extra[key] = value
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
    features = frozenset((enabled if enabled is not None else set(FeatureKind)) - disabled)
    return RunConfig(
        features=features,
        coroutine_keywords=frozenset(coroutine) if coroutine is not None else DEFAULT_COROUTINE_KEYWORDS,
        range_infix=frozenset(infix),
        extra=extra,
        **values,
    )


def load_config(path: str | os.PathLike | None) -> RunConfig:
    if path is None:
        return RunConfig()
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{p}: {exc.strerror}") from None
    return parse_config(text, str(p))

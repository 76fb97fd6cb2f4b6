"""Kotlin feature usage detection and feature-evolution trend analysis."""

from featrend.detect import FeatureKind, detect
from featrend.syntax import parse_source

__all__ = ["FeatureKind", "detect", "parse_source", "__version__"]

__version__ = "0.1.0"

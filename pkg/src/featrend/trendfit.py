"""Curve fitting, model selection and trend labelling of evolution series.

Each series is fitted with five model families. Linear, Logarithmic and
Polynomial are linear in their coefficients and are solved exactly;
Exponential and Sigmoid use a damped least-squares (Levenberg-Marquardt)
solver. The best family by R² is picked with a small tolerance that
favours simpler families, and its shape is mapped to one of 11 trends.
"""

from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.polynomial import Polynomial

from featrend.detect import FeatureKind
from featrend.miner import RepositoryHistory, commit_totals

__all__ = [
    "Bucket",
    "ConstantSeries",
    "EvolutionSeries",
    "FitConfig",
    "FitResult",
    "ModelFamily",
    "SeriesTrend",
    "TrendLabel",
    "TrendRow",
    "classify",
    "classify_series",
    "extract_series",
    "fit",
    "fit_all",
    "interior_extrema",
    "levenberg_marquardt",
    "postprocess",
    "residual_sum",
    "select",
    "tabulate",
]


class ConstantSeries(ValueError):
    """The series has zero variance, so R² is undefined."""


class AllDiscarded(ValueError):
    """No candidate fit survived post-processing and no Linear fit was given."""


class ModelFamily(str, enum.Enum):
    LINEAR = "Linear"
    EXPONENTIAL = "Exponential"
    LOGARITHMIC = "Logarithmic"
    SIGMOID = "Sigmoid"
    POLYNOMIAL = "Polynomial"

    @property
    def priority(self) -> int:
        """Lower wins when R² values are within the selection tolerance."""
        return _PRIORITY[self]


_PRIORITY = {f: i for i, f in enumerate(ModelFamily)}


class Bucket(str, enum.Enum):
    INC = "Inc"
    DEC = "Dec"
    UNSTABLE = "Unstable"
    STABLE = "Stable"


class TrendLabel(str, enum.Enum):
    CR = "CR"
    CD = "CD"
    S = "S"
    SR = "SR"
    SD = "SD"
    SRP = "SRP"
    PGR = "PGR"
    PGD = "PGD"
    PSR = "PSR"
    PSD = "PSD"
    I = "I"  # noqa: E741

    @property
    def bucket(self) -> Bucket:
        if self in _INC:
            return Bucket.INC
        if self in _DEC:
            return Bucket.DEC
        if self is TrendLabel.I:
            return Bucket.UNSTABLE
        return Bucket.STABLE


_INC = frozenset({TrendLabel.CR, TrendLabel.SR, TrendLabel.SRP, TrendLabel.PGR, TrendLabel.PSR})
_DEC = frozenset({TrendLabel.CD, TrendLabel.SD, TrendLabel.PGD, TrendLabel.PSD})


@dataclass(frozen=True)
class FitConfig:
    """Thresholds of the fitting pipeline.

    Attributes:
        delta: R² tolerance within which a simpler family wins.
        poly_threshold: Leading coefficients below this magnitude are
            dropped and the polynomial is re-fitted one degree lower.
        sudden_width: Sigmoid transitions spanning at most this many
            commits are sudden, wider ones gradual.
        max_iter: Iteration cap of the nonlinear solver.
        rtol: Relative SS_res change that counts as converged.
        restarts: Jittered sigmoid restarts on top of the base start.
        seed: Seed of the restart jitter.
    """

    delta: float = 0.01
    poly_threshold: float = 1e-4
    sudden_width: float = 2.0
    max_iter: int = 200
    rtol: float = 1e-10
    restarts: int = 5
    seed: int = 0
    poly_degrees: tuple[int, ...] = (2, 3, 4)


DEFAULT_CONFIG = FitConfig()


@dataclass
class FitResult:
    """One fitted candidate.

    Coefficients per family: Linear (a, b); Exponential (a, b, c);
    Logarithmic (a, b, c); Sigmoid (L, k, x0, b); Polynomial highest power
    first, (a_d, ..., a_0).
    """

    family: ModelFamily
    coefficients: tuple[float, ...]
    r2: float
    converged: bool = True
    discarded: bool = False
    reason: str | None = None
    ss_res: float = math.nan

    @property
    def degree(self) -> int | None:
        if self.family is ModelFamily.POLYNOMIAL:
            return len(self.coefficients) - 1
        return None

    @property
    def arity(self) -> int:
        return len(self.coefficients)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return predict(self.family, self.coefficients, x)

    def describe(self) -> str:
        if self.family is ModelFamily.POLYNOMIAL:
            return f"Polynomial{self.degree}"
        return self.family.value


def predict(family: ModelFamily, coef: Sequence[float], x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if family is ModelFamily.LINEAR:
        a, b = coef
        return a * x + b
    if family is ModelFamily.EXPONENTIAL:
        a, b, c = coef
        return a * np.exp(np.clip(x * math.log(b), -700, 700)) + c
    if family is ModelFamily.LOGARITHMIC:
        a, b, c = coef
        return a * np.log(b * (x + 1)) + c
    if family is ModelFamily.SIGMOID:
        L, k, x0, b = coef
        return L * _logistic(k * (x - x0)) + b
    return np.polyval(np.asarray(coef, dtype=float), x)


def _logistic(z: np.ndarray) -> np.ndarray:
    # tanh form avoids overflow for large |z|
    return 0.5 * (1.0 + np.tanh(0.5 * z))


# --------------------------------------------------------------------------
# goodness of fit
# --------------------------------------------------------------------------


def residual_sum(series: Sequence[float], prediction: Sequence[float]) -> tuple[float, float, float]:
    """Return (ss_res, ss_tot, r2).

    Raises:
        ConstantSeries: the series has zero variance.
        ValueError: lengths differ or are below 2.
    """
    y = np.asarray(series, dtype=float)
    f = np.asarray(prediction, dtype=float)
    if y.shape != f.shape or y.size < 2:
        raise ValueError("series and prediction must have equal length >= 2")
    ss_res = float(np.sum((y - f) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise ConstantSeries("series is constant")
    return ss_res, ss_tot, 1.0 - ss_res / ss_tot


def _r2(y: np.ndarray, f: np.ndarray) -> tuple[float, float]:
    ss_res, _, r2 = residual_sum(y, f)
    if not math.isfinite(r2):
        return math.inf, -math.inf
    return ss_res, r2


# --------------------------------------------------------------------------
# nonlinear solver
# --------------------------------------------------------------------------


@dataclass
class LMResult:
    params: np.ndarray
    ss_res: float
    converged: bool
    iterations: int
    history: list[float] = field(default_factory=list)


def levenberg_marquardt(
    model: Callable[[np.ndarray], np.ndarray],
    jacobian: Callable[[np.ndarray], np.ndarray],
    y: np.ndarray,
    p0: Sequence[float],
    *,
    max_iter: int = 200,
    rtol: float = 1e-10,
) -> LMResult:
    """Minimize sum((y - model(p))**2) from ``p0``.

    Steps are only accepted when they lower SS_res, so the recorded
    ``history`` of accepted SS_res values is non-increasing. Converges when
    an accepted step changes SS_res by less than ``rtol`` relative, when
    SS_res reaches zero, or when no damping level yields an improvement
    (a local minimum).
    """
    p = np.asarray(p0, dtype=float).copy()
    r = y - model(p)
    ss = float(r @ r)
    if not math.isfinite(ss):
        return LMResult(p, math.inf, False, 0, [])
    history = [ss]
    lam = 1e-3
    for it in range(1, max_iter + 1):
        if ss == 0.0:
            return LMResult(p, ss, True, it - 1, history)
        J = jacobian(p)
        if not np.all(np.isfinite(J)):
            return LMResult(p, ss, False, it, history)
        JtJ = J.T @ J
        Jtr = J.T @ r
        scale = np.diag(JtJ).copy()
        scale[scale <= 0] = 1.0
        improved = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(JtJ + np.diag(lam * scale), Jtr)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            cand = p + step
            with np.errstate(over="ignore", invalid="ignore"):
                # an overshooting trial step is rejected below, not reported
                r_new = y - model(cand)
                ss_new = float(r_new @ r_new)
            if math.isfinite(ss_new) and ss_new < ss:
                rel = (ss - ss_new) / ss
                p, r, ss = cand, r_new, ss_new
                history.append(ss)
                lam = max(lam / 10.0, 1e-12)
                improved = True
                if rel < rtol:
                    return LMResult(p, ss, True, it, history)
                break
            lam *= 10.0
        if not improved:
            return LMResult(p, ss, True, it, history)
    return LMResult(p, ss, False, max_iter, history)


# --------------------------------------------------------------------------
# per-family fitting
# --------------------------------------------------------------------------

_ARITY = {
    ModelFamily.LINEAR: 2,
    ModelFamily.EXPONENTIAL: 3,
    ModelFamily.LOGARITHMIC: 3,
    ModelFamily.SIGMOID: 4,
}


def _too_short(family: ModelFamily, arity: int, coef_len: int) -> FitResult:
    return FitResult(family, (math.nan,) * coef_len, -math.inf, converged=False, discarded=True,
                     reason=f"too short for {arity} coefficients")


def _fit_polynomial(x: np.ndarray, y: np.ndarray, degree: int) -> tuple[float, ...]:
    poly = Polynomial.fit(x, y, degree).convert()
    coef = np.zeros(degree + 1)
    coef[: poly.coef.size] = poly.coef
    return tuple(float(c) for c in coef[::-1])


def _fit_exponential(x: np.ndarray, y: np.ndarray, cfg: FitConfig) -> FitResult:
    def model(p: np.ndarray) -> np.ndarray:
        return p[0] * np.exp(np.clip(p[1] * x, -700, 700)) + p[2]

    def jac(p: np.ndarray) -> np.ndarray:
        e = np.exp(np.clip(p[1] * x, -700, 700))
        return np.column_stack([e, p[0] * x * e, np.ones_like(x)])

    # log-linear start for the convex shape (a > 0); falling series also try the
    # mirrored concave start, so accelerating declines fit while saturating rises
    # are left to the logarithm
    starts = [(1.0, y.min())]
    if y[-1] < y[0]:
        starts.append((-1.0, y.max()))
    res: LMResult | None = None
    for sign, anchor in starts:
        z = np.maximum(sign * (y - anchor) + 1.0, 1.0)
        slope, intercept = np.polyfit(x, np.log(z), 1)
        p0 = [sign * math.exp(intercept), slope, anchor - sign]
        cur = levenberg_marquardt(model, jac, y, p0, max_iter=cfg.max_iter, rtol=cfg.rtol)
        if res is None or cur.ss_res < res.ss_res:
            res = cur
    assert res is not None
    a, beta, c = res.params
    ss_res, r2 = _r2(y, model(res.params))
    return FitResult(ModelFamily.EXPONENTIAL, (float(a), float(math.exp(beta)), float(c)), r2,
                     converged=res.converged, ss_res=ss_res)


def _fit_logarithmic(x: np.ndarray, y: np.ndarray) -> FitResult:
    # a*ln(b*x') + c == a*ln(x') + (a*ln(b) + c): b is absorbed, fixed to 1
    a, c = np.polyfit(np.log(x + 1.0), y, 1)
    coef = (float(a), 1.0, float(c))
    ss_res, r2 = _r2(y, predict(ModelFamily.LOGARITHMIC, coef, x))
    return FitResult(ModelFamily.LOGARITHMIC, coef, r2, ss_res=ss_res)


def _sigmoid_start(y: np.ndarray) -> list[float]:
    n = y.size
    lo, hi = float(y.min()), float(y.max())
    L = hi - lo
    net = 1.0 if y[-1] >= y[0] else -1.0
    jump = int(np.argmax(np.abs(np.diff(y)))) if n > 1 else 0
    s = (y - lo) / L if L > 0 else np.zeros(n)
    if net < 0:
        s = 1.0 - s
    # distance between the last low-plateau point and the first high-plateau point
    above = np.nonzero(s >= 0.88)[0]
    end = int(above[0]) if above.size else n - 1
    below = np.nonzero(s[: end + 1] <= 0.12)[0]
    start = int(below[-1]) if below.size else 0
    width = max(1.0, float(end - start))
    return [L, net * 4.0 / width, jump + 0.5, lo]


def _fit_sigmoid(x: np.ndarray, y: np.ndarray, cfg: FitConfig) -> FitResult:
    n = y.size

    def model(p: np.ndarray) -> np.ndarray:
        return p[0] * _logistic(p[1] * (x - p[2])) + p[3]

    def jac(p: np.ndarray) -> np.ndarray:
        s = _logistic(p[1] * (x - p[2]))
        ds = s * (1.0 - s)
        return np.column_stack([s, p[0] * ds * (x - p[2]), -p[0] * ds * p[1], np.ones_like(x)])

    base = _sigmoid_start(y)
    rng = np.random.default_rng(cfg.seed)
    starts = [base]
    for _ in range(cfg.restarts):
        starts.append([base[0], base[1] * math.exp(rng.normal()), base[2] + rng.normal() * n / 10.0, base[3]])
    best: LMResult | None = None
    for p0 in starts:
        res = levenberg_marquardt(model, jac, y, p0, max_iter=cfg.max_iter, rtol=cfg.rtol)
        if best is None or res.ss_res < best.ss_res:
            best = res
    assert best is not None
    ss_res, r2 = _r2(y, model(best.params))
    return FitResult(ModelFamily.SIGMOID, tuple(float(v) for v in best.params), r2,
                     converged=best.converged, ss_res=ss_res)


def fit(
    series: Sequence[float],
    family: ModelFamily,
    degree: int | None = None,
    config: FitConfig = DEFAULT_CONFIG,
) -> FitResult:
    """Fit one model family to ``series`` indexed by commit position 0..n-1.

    Series shorter than the family's coefficient count plus one come back
    discarded with a "too short" reason.

    Raises:
        ConstantSeries: the series has zero variance.
    """
    y = np.asarray(series, dtype=float)
    x = np.arange(y.size, dtype=float)
    if family is ModelFamily.POLYNOMIAL:
        deg = 2 if degree is None else degree
        if y.size < deg + 2:
            return _too_short(family, deg + 1, deg + 1)
        coef = _fit_polynomial(x, y, deg)
        ss_res, r2 = _r2(y, np.polyval(coef, x))
        return FitResult(family, coef, r2, ss_res=ss_res)
    arity = _ARITY[family]
    if y.size < arity + 1:
        return _too_short(family, arity, arity)
    if family is ModelFamily.LINEAR:
        coef = _fit_polynomial(x, y, 1)
        ss_res, r2 = _r2(y, np.polyval(coef, x))
        return FitResult(family, coef, r2, ss_res=ss_res)
    if family is ModelFamily.EXPONENTIAL:
        return _fit_exponential(x, y, config)
    if family is ModelFamily.LOGARITHMIC:
        return _fit_logarithmic(x, y)
    return _fit_sigmoid(x, y, config)


def fit_all(series: Sequence[float], config: FitConfig = DEFAULT_CONFIG) -> list[FitResult]:
    fits = [fit(series, f, config=config) for f in
            (ModelFamily.LINEAR, ModelFamily.EXPONENTIAL, ModelFamily.LOGARITHMIC, ModelFamily.SIGMOID)]
    fits.extend(fit(series, ModelFamily.POLYNOMIAL, d, config) for d in config.poly_degrees)
    return fits


# --------------------------------------------------------------------------
# post-processing, selection, labelling
# --------------------------------------------------------------------------


def interior_extrema(coefficients: Sequence[float], n: int) -> int:
    """Number of local extrema of a polynomial strictly inside (0, n-1)."""
    deriv = np.polyder(np.asarray(coefficients, dtype=float))
    if deriv.size == 0 or not np.any(deriv):
        return 0
    roots = np.roots(deriv)
    hi = n - 1
    crit = sorted({float(r.real) for r in roots if abs(r.imag) <= 1e-9 * max(1.0, abs(r)) and 0 < r.real < hi})
    points = [0.0, *crit, float(hi)]
    signs = []
    for a, b in zip(points, points[1:]):
        v = np.polyval(deriv, 0.5 * (a + b))
        if v != 0:
            signs.append(v > 0)
    return sum(1 for s, t in zip(signs, signs[1:]) if s != t)


def postprocess(
    fits: Sequence[FitResult],
    series: Sequence[float] | None = None,
    n: int | None = None,
    config: FitConfig = DEFAULT_CONFIG,
) -> list[FitResult]:
    """Apply the family-specific validity rules.

    Polynomials whose leading coefficient is below ``poly_threshold`` in
    magnitude are re-fitted one degree lower (needs ``series``) until the
    leading term survives; reaching degree 1 discards the candidate.
    Polynomials with fewer than two interior extrema, sigmoids whose
    midpoint lies outside the commit range, and decreasing logarithms are
    marked discarded.
    """
    if n is None:
        if series is None:
            raise ValueError("postprocess needs the series or its length")
        n = len(series)
    out: list[FitResult] = []
    for f in fits:
        if f.discarded:
            out.append(f)
            continue
        if f.family is ModelFamily.POLYNOMIAL:
            cur = f
            while cur.degree is not None and cur.degree >= 2 and abs(cur.coefficients[0]) < config.poly_threshold:
                if cur.degree - 1 < 2:
                    cur = FitResult(cur.family, cur.coefficients, cur.r2, cur.converged, True,
                                    "simplified to a line", cur.ss_res)
                    break
                if series is None:
                    raise ValueError("polynomial simplification needs the series")
                cur = fit(series, ModelFamily.POLYNOMIAL, cur.degree - 1, config)
            if not cur.discarded and interior_extrema(cur.coefficients, n) < 2:
                cur = FitResult(cur.family, cur.coefficients, cur.r2, cur.converged, True,
                                "fewer than two interior extrema", cur.ss_res)
            out.append(cur)
        elif f.family is ModelFamily.SIGMOID:
            x0 = f.coefficients[2]
            if not (0 <= x0 <= n - 1):
                out.append(FitResult(f.family, f.coefficients, f.r2, f.converged, True,
                                     "midpoint outside commit range", f.ss_res))
            else:
                out.append(f)
        elif f.family is ModelFamily.LOGARITHMIC and not f.coefficients[0] > 0:
            out.append(FitResult(f.family, f.coefficients, f.r2, f.converged, True,
                                 "non-increasing logarithm", f.ss_res))
        else:
            out.append(f)
    return out


def select(fits: Sequence[FitResult], delta: float = 0.01) -> FitResult:
    """Pick the fit with the best R², preferring simpler families within ``delta``.

    Raises:
        AllDiscarded: no usable candidate (and no Linear fit to fall back to).
    """
    live = [f for f in fits if not f.discarded and math.isfinite(f.r2)]
    if not live:
        linear = [f for f in fits if f.family is ModelFamily.LINEAR and math.isfinite(f.r2)]
        if linear:
            return linear[0]
        raise AllDiscarded("no candidate fit")
    best = max(f.r2 for f in live)
    # a hair of slack so that a gap of exactly delta counts as within
    contenders = [f for f in live if best - f.r2 <= delta + 1e-12]
    return min(contenders, key=lambda f: (f.family.priority, f.arity, -f.r2))


def classify(
    best: FitResult,
    series: Sequence[float],
    config: FitConfig = DEFAULT_CONFIG,
) -> TrendLabel:
    """Map the selected fit to a trend label."""
    y = np.asarray(series, dtype=float)
    fam = best.family
    c = best.coefficients
    if fam is ModelFamily.LINEAR:
        eps = 1e-6 * max(1.0, float(np.mean(np.abs(y)))) if y.size else 1e-6
        if c[0] > eps:
            return TrendLabel.CR
        if c[0] < -eps:
            return TrendLabel.CD
        return TrendLabel.S
    if fam is ModelFamily.EXPONENTIAL:
        return TrendLabel.SR if c[0] * math.log(c[1]) > 0 else TrendLabel.SD
    if fam is ModelFamily.LOGARITHMIC:
        return TrendLabel.SRP
    if fam is ModelFamily.SIGMOID:
        L, k = c[0], c[1]
        rising = k * L > 0
        sudden = k != 0 and 4.0 / abs(k) <= config.sudden_width
        if sudden:
            return TrendLabel.PSR if rising else TrendLabel.PSD
        return TrendLabel.PGR if rising else TrendLabel.PGD
    return TrendLabel.I


@dataclass
class SeriesTrend:
    label: TrendLabel
    best: FitResult | None
    fits: list[FitResult] = field(default_factory=list)
    note: str | None = None


def classify_series(series: Sequence[float], config: FitConfig = DEFAULT_CONFIG) -> SeriesTrend:
    """Run fit, post-processing, selection and labelling on one series."""
    y = [float(v) for v in series]
    if len(y) == 0:
        raise ValueError("empty series")
    if len(y) == 1:
        return SeriesTrend(TrendLabel.S, None, note="single commit")
    if all(v == y[0] for v in y):
        return SeriesTrend(TrendLabel.S, None, note="constant")
    if len(y) == 2:
        label = TrendLabel.CR if y[1] > y[0] else TrendLabel.CD
        return SeriesTrend(label, None, note="two commits")
    fits = postprocess(fit_all(y, config), y, config=config)
    best = select(fits, config.delta)
    return SeriesTrend(classify(best, y, config), best, fits)


# --------------------------------------------------------------------------
# series and tables
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EvolutionSeries:
    repo_id: str
    kind: FeatureKind
    values: tuple[int, ...]
    commit_ids: tuple[str, ...] = ()


def extract_series(history: RepositoryHistory, kinds: Iterable[FeatureKind] = FeatureKind) -> list[EvolutionSeries]:
    """Per-kind totals from the introducing commit to the tip.

    Kinds that never appear yield no series.
    """
    totals = [commit_totals(rec)[0] for rec in history.commits]
    ids = [rec.commit_id for rec in history.commits]
    out = []
    for k in kinds:
        start = next((i for i, t in enumerate(totals) if t.get(k, 0) > 0), None)
        if start is None:
            continue
        out.append(EvolutionSeries(history.repo_id, k, tuple(int(t.get(k, 0)) for t in totals[start:]),
                                   tuple(ids[start:])))
    return out


@dataclass
class TrendRow:
    kind: FeatureKind
    counts: Counter
    total: int

    def pct(self, label: TrendLabel) -> float:
        return 100.0 * self.counts.get(label, 0) / self.total if self.total else 0.0

    def bucket_count(self, bucket: Bucket) -> int:
        return sum(v for lab, v in self.counts.items() if lab.bucket is bucket)

    def bucket_pct(self, bucket: Bucket) -> float:
        return 100.0 * self.bucket_count(bucket) / self.total if self.total else 0.0


def tabulate(labels: Iterable[tuple[str, FeatureKind, TrendLabel]]) -> dict[FeatureKind, TrendRow]:
    """Count labels per kind across repositories, in FeatureKind order."""
    per_kind: dict[FeatureKind, Counter] = {}
    for _, kind, label in labels:
        per_kind.setdefault(kind, Counter())[label] += 1
    return {k: TrendRow(k, per_kind[k], sum(per_kind[k].values())) for k in FeatureKind if k in per_kind}

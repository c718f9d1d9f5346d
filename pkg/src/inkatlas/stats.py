"""Rating statistics: Wilcoxon signed-rank, paired t-test, Cronbach's alpha.

Conventions (documented, not configurable): zero differences are dropped
before ranking; ties in absolute difference receive average ranks; all
p-values are two-sided. Normality pre-checks are out of scope and must be
run externally if desired.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence


class StatsError(Exception):
    pass


class PMethod(str, Enum):
    EXACT_ENUMERATION = "exact_enumeration"
    NORMAL_APPROXIMATION = "normal_approximation"
    STUDENT_T = "student_t"


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    method_detail: PMethod
    n_effective: int
    z_value: float | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p_value out of range: {self.p_value}")


EXACT_LIMIT = 20  # at most 2^20 sign assignments enumerated exactly


def _signed_rank_parts(pairs: Sequence[tuple[float, float]]):
    diffs = [float(a) - float(b) for a, b in pairs]
    nonzero = [d for d in diffs if d != 0.0]
    if not nonzero:
        raise StatsError("no nonzero differences")
    ranks = _average_ranks([abs(d) for d in nonzero])
    w_plus = sum(r for d, r in zip(nonzero, ranks) if d > 0)
    w_minus = sum(r for d, r in zip(nonzero, ranks) if d < 0)
    n = len(nonzero)
    total = n * (n + 1) / 2
    if abs((w_plus + w_minus) - total) > 1e-9:
        raise AssertionError(f"rank-sum identity violated: {w_plus}+{w_minus} != {total}")
    return nonzero, ranks, w_plus, w_minus


def _average_ranks(values: Sequence[float]) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2 + 1  # ranks are 1-based
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def wilcoxon_signed_rank(pairs: Sequence[tuple[float, float]]) -> TestResult:
    """Two-sided Wilcoxon signed-rank test on paired samples.

    W = min(W+, W-). For n <= 20 the p-value enumerates all 2^n sign
    assignments (via the rank-sum distribution); beyond that a normal
    approximation with tie and continuity corrections is used.
    """
    nonzero, ranks, w_plus, w_minus = _signed_rank_parts(pairs)
    n = len(nonzero)
    w = min(w_plus, w_minus)
    if n <= EXACT_LIMIT:
        p = _exact_two_sided_p(ranks, w)
        return TestResult(statistic=w, p_value=p, method_detail=PMethod.EXACT_ENUMERATION, n_effective=n)

    mean = n * (n + 1) / 4
    var = n * (n + 1) * (2 * n + 1) / 24
    # tie correction over groups of equal |d|
    counts: dict[float, int] = {}
    for d in nonzero:
        counts[abs(d)] = counts.get(abs(d), 0) + 1
    var -= sum(t**3 - t for t in counts.values()) / 48
    if var <= 0:
        raise StatsError("degenerate variance in normal approximation (all |d| tied?)")
    sd = math.sqrt(var)
    cc = 0.5 * _sign(w - mean)
    z = (w - mean - cc) / sd
    p = min(1.0, 2.0 * _norm_cdf(-abs(z)))
    return TestResult(statistic=w, p_value=p, method_detail=PMethod.NORMAL_APPROXIMATION, n_effective=n, z_value=z)


def _sign(x: float) -> float:
    return 0.0 if x == 0 else math.copysign(1.0, x)


def _exact_two_sided_p(ranks: Sequence[float], w_obs: float) -> float:
    """P-value from the exact distribution of W+ over all sign assignments.

    Ranks are doubled so tied (half-integer) average ranks become integers,
    then the distribution of 2*W+ is built by polynomial convolution.
    """
    doubled = [int(round(2 * r)) for r in ranks]
    if any(abs(2 * r - d) > 1e-9 for r, d in zip(ranks, doubled)):
        raise AssertionError("average ranks are not half-integers")
    size = sum(doubled)
    counts = [0] * (size + 1)
    counts[0] = 1
    for d in doubled:
        for s in range(size, d - 1, -1):
            if counts[s - d]:
                counts[s] += counts[s - d]
    total = 2 ** len(doubled)
    w2 = int(round(2 * w_obs))
    below = sum(counts[: min(w2, size) + 1])
    return min(1.0, 2.0 * below / total)


def _norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def paired_t_test(pairs: Sequence[tuple[float, float]]) -> TestResult:
    """Two-sided paired t-test: t = mean(d) / (sd(d)/sqrt(n)), df = n-1."""
    diffs = [float(a) - float(b) for a, b in pairs]
    n = len(diffs)
    if n < 2:
        raise StatsError("need at least 2 pairs")
    mean = sum(diffs) / n
    ss = sum((d - mean) ** 2 for d in diffs)
    if ss == 0.0:
        raise StatsError("degenerate variance")
    sd = math.sqrt(ss / (n - 1))
    t = mean / (sd / math.sqrt(n))
    df = n - 1
    p = student_t_two_sided_p(t, df)
    return TestResult(statistic=t, p_value=p, method_detail=PMethod.STUDENT_T, n_effective=n)


def student_t_two_sided_p(t: float, df: int) -> float:
    """Two-sided tail probability of Student's t via the regularized
    incomplete beta function: p = I_{df/(df+t^2)}(df/2, 1/2)."""
    if df < 1:
        raise StatsError(f"invalid degrees of freedom: {df}")
    if t == 0.0:
        return 1.0
    x = df / (df + t * t)
    return min(1.0, _betainc_reg(df / 2.0, 0.5, x))


def _betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b), continued-fraction evaluation."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, 1.0 - x) / b


def _beta_cf(a: float, b: float, x: float, max_iter: int = 300, eps: float = 1e-15) -> float:
    # modified Lentz's method
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise StatsError(f"incomplete beta did not converge for a={a}, b={b}, x={x}")


@dataclass(frozen=True)
class RatingMatrix:
    """Rectangular raters x items score grid; no missing entries."""

    raters: tuple[str, ...]
    items: tuple[str, ...]
    scores: tuple[tuple[float, ...], ...]  # indexed [rater][item]

    def __post_init__(self) -> None:
        if len(self.scores) != len(self.raters):
            raise ValueError("one score row per rater required")
        for row in self.scores:
            if len(row) != len(self.items):
                raise ValueError("score rows must match the item count")
            for v in row:
                if not math.isfinite(v):
                    raise ValueError(f"non-finite score: {v}")


def cronbach_alpha(matrix: RatingMatrix, item_axis: str = "raters") -> float:
    """Cronbach's alpha with the chosen axis playing the "items" role.

    alpha = k/(k-1) * (1 - sum(var_item) / var(total)), sample variances
    (n-1 denominator). item_axis="raters" measures inter-rater agreement
    (raters are the items, summed per rated object); item_axis="items"
    is the classical scale-consistency orientation. May be negative.
    """
    if item_axis not in ("raters", "items"):
        raise ValueError(f"item_axis must be 'raters' or 'items', got {item_axis!r}")
    rows = [list(r) for r in matrix.scores]
    if item_axis == "items":
        grid = rows  # observations are raters, items are columns
        grid = [list(col) for col in zip(*grid)]  # item-major
    else:
        grid = rows  # rater-major: each rater's scores across objects
    k = len(grid)
    n_obs = len(grid[0]) if grid else 0
    if k < 2:
        raise StatsError(f"need at least 2 along item_axis, got {k}")
    if n_obs < 2:
        raise StatsError(f"need at least 2 observations, got {n_obs}")
    item_vars = [_sample_var(series) for series in grid]
    totals = [sum(series[j] for series in grid) for j in range(n_obs)]
    total_var = _sample_var(totals)
    if total_var == 0.0:
        raise StatsError("zero total-score variance")
    return (k / (k - 1)) * (1.0 - sum(item_vars) / total_var)


def _sample_var(values: Sequence[float]) -> float:
    n = len(values)
    mean = sum(values) / n
    return sum((v - mean) ** 2 for v in values) / (n - 1)


# -- rating-sheet CSV (set_id,item,rater,score) --

@dataclass(frozen=True)
class RatingRow:
    set_id: str
    item: str
    rater: str
    score: float


def load_rating_sheet(path: str | Path) -> list[RatingRow]:
    rows: list[RatingRow] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"set_id", "item", "rater", "score"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise StatsError(f"rating sheet must have columns {sorted(required)}")
        for rec in reader:
            if rec["score"] in (None, ""):
                continue  # skeleton rows awaiting scores
            rows.append(RatingRow(rec["set_id"], rec["item"], rec["rater"], float(rec["score"])))
    return rows


def matrix_for_item(rows: Iterable[RatingRow], item: str) -> RatingMatrix:
    """Assemble the raters x sets matrix for one rated item."""
    cells: dict[tuple[str, str], float] = {}
    raters: list[str] = []
    sets: list[str] = []
    for row in rows:
        if row.item != item:
            continue
        if row.rater not in raters:
            raters.append(row.rater)
        if row.set_id not in sets:
            sets.append(row.set_id)
        cells[(row.rater, row.set_id)] = row.score
    if not cells:
        raise StatsError(f"no rows for item {item!r}")
    missing = [(r, s) for r in raters for s in sets if (r, s) not in cells]
    if missing:
        raise StatsError(f"rating matrix for {item!r} has missing cells: {missing[:5]}")
    scores = tuple(tuple(cells[(r, s)] for s in sets) for r in raters)
    return RatingMatrix(raters=tuple(raters), items=tuple(sets), scores=scores)

"""Paired signed-rank testing and effect sizes over per-sentence score vectors.

Differences are second-pass minus first-pass. Zero differences are dropped
before ranking (the classic treatment); the reported median gain is taken
over ALL differences, zeros included, so the headline number reflects the
full sample.

The two-sided p-value is exact (full sign-assignment distribution, computed
by subset-sum counting) for tie-free samples up to n = 25, and a normal
approximation with tie and continuity corrections beyond that.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from typing import Sequence

from .errors import AllZeroDifferences, LengthMismatch

EXACT_LIMIT = 25


@dataclass(frozen=True)
class PairedSample:
    first_pass: tuple[float, ...]
    second_pass: tuple[float, ...]
    metric_name: str

    def __post_init__(self) -> None:
        if len(self.first_pass) != len(self.second_pass):
            raise LengthMismatch(
                f"first pass has {len(self.first_pass)} entries, "
                f"second pass has {len(self.second_pass)}"
            )
        if len(self.first_pass) < 1:
            raise ValueError("paired sample must not be empty")
        object.__setattr__(self, "first_pass", tuple(float(x) for x in self.first_pass))
        object.__setattr__(self, "second_pass", tuple(float(x) for x in self.second_pass))


@dataclass(frozen=True)
class WilcoxonResult:
    n_used: int
    w_plus: float
    w_minus: float
    p_value: float
    median_gain: float
    effect_size_r: float
    method: str  # "exact" or "normal-approx"


@dataclass(frozen=True)
class GainSummary:
    n: int
    mean_gain: float
    median_gain: float
    fraction_improved: float
    fraction_regressed: float
    fraction_unchanged: float


def _average_ranks(values: Sequence[float]) -> list[float]:
    """1-based ranks with ties sharing their average rank."""
    order = sorted(range(len(values)), key=values.__getitem__)
    ranks = [0.0] * len(values)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        shared = (i + j + 2) / 2.0
        for k in range(i, j + 1):
            ranks[order[k]] = shared
        i = j + 1
    return ranks


def exact_two_sided_p(w_plus: float, n: int) -> float:
    """Exact two-sided p-value for tie-free ranks 1..n.

    Counts, over all 2^n sign assignments, the assignments whose positive
    rank sum deviates from the null mean n(n+1)/4 at least as much as the
    observed one. Integer arithmetic throughout.
    """
    total = n * (n + 1) // 2
    counts = [0] * (total + 1)
    counts[0] = 1
    for rank in range(1, n + 1):
        for w in range(total, rank - 1, -1):
            counts[w] += counts[w - rank]
    observed = int(round(w_plus))
    # compare |2w - total| >= |2*observed - total| to stay in integers
    deviation = abs(2 * observed - total)
    favorable = sum(c for w, c in enumerate(counts) if abs(2 * w - total) >= deviation)
    return favorable / (2 ** n)


def _normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def _approx_two_sided_p(w_plus: float, n: int, tie_sizes: Sequence[int]) -> float:
    mean = n * (n + 1) / 4.0
    variance = n * (n + 1) * (2 * n + 1) / 24.0
    variance -= sum(t ** 3 - t for t in tie_sizes) / 48.0
    se = math.sqrt(variance)
    correction = 0.5 * _sign(w_plus - mean)
    z = (w_plus - mean - correction) / se
    return min(1.0, 2.0 * _normal_sf(abs(z)))


def _sign(x: float) -> float:
    if x > 0:
        return 1.0
    if x < 0:
        return -1.0
    return 0.0


def wilcoxon_signed_rank(sample: PairedSample) -> WilcoxonResult:
    """Two-sided paired signed-rank test with rank-biserial effect size."""
    diffs = [s - f for f, s in zip(sample.first_pass, sample.second_pass)]
    median_gain = float(statistics.median(diffs))
    nonzero = [d for d in diffs if d != 0.0]
    if not nonzero:
        raise AllZeroDifferences(f"all {len(diffs)} paired differences are zero")
    n = len(nonzero)
    magnitudes = [abs(d) for d in nonzero]
    ranks = _average_ranks(magnitudes)
    w_plus = sum((r for d, r in zip(nonzero, ranks) if d > 0), 0.0)
    w_minus = sum((r for d, r in zip(nonzero, ranks) if d < 0), 0.0)

    tie_groups = [count for count in _group_sizes(magnitudes) if count > 1]
    if n <= EXACT_LIMIT and not tie_groups:
        p_value = exact_two_sided_p(w_plus, n)
        method = "exact"
    else:
        p_value = _approx_two_sided_p(w_plus, n, tie_groups)
        method = "normal-approx"

    return WilcoxonResult(
        n_used=n,
        w_plus=w_plus,
        w_minus=w_minus,
        p_value=p_value,
        median_gain=median_gain,
        effect_size_r=(w_plus - w_minus) / (w_plus + w_minus),
        method=method,
    )


def _group_sizes(values: Sequence[float]) -> list[int]:
    counts: dict[float, int] = {}
    for value in values:
        counts[value] = counts.get(value, 0) + 1
    return list(counts.values())


def summarize_gains(sample: PairedSample) -> GainSummary:
    """Descriptive summary of the paired differences."""
    diffs = [s - f for f, s in zip(sample.first_pass, sample.second_pass)]
    n = len(diffs)
    improved = sum(1 for d in diffs if d > 0)
    regressed = sum(1 for d in diffs if d < 0)
    return GainSummary(
        n=n,
        mean_gain=sum(diffs) / n,
        median_gain=float(statistics.median(diffs)),
        fraction_improved=improved / n,
        fraction_regressed=regressed / n,
        fraction_unchanged=(n - improved - regressed) / n,
    )

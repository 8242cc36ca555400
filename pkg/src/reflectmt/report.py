"""Aggregation of record logs into score tables and figure-ready CSV data.

Rendering never computes anything new: every number in a table comes from a
record-log field or a stats-module output, formatted here. All emitted files
start with a provenance comment carrying the run-config hash.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

from .pipeline import SweepResult, TranslationRecord, _metric_scores, _record_metrics
from .stats import GainSummary, PairedSample, WilcoxonResult, summarize_gains, wilcoxon_signed_rank

SIGNIFICANCE_COLUMNS = ("Metric", "N", "Median Gain", "p-value", "Effect Size (r)")


@dataclass(frozen=True)
class MetricAggregate:
    strategy: str
    metric: str
    n: int
    first_mean: float
    second_mean: float
    mean_gain: float


@dataclass(frozen=True)
class SignificanceRow:
    metric: str
    n: int
    median_gain: float
    p_value: float
    effect_size_r: float


@dataclass
class ScoreReport:
    aggregates: list[MetricAggregate] = field(default_factory=list)
    significance: list[SignificanceRow] = field(default_factory=list)
    wilcoxon: dict[str, WilcoxonResult] = field(default_factory=dict)
    gains: dict[str, GainSummary] = field(default_factory=dict)
    sweep: list[SweepResult] = field(default_factory=list)
    provenance: str = ""


def _paired_scores(records: list[TranslationRecord], metric: str) -> tuple[list[float], list[float]]:
    """Per-sentence (draft, revision) scores where both exist for ``metric``.

    A record drops out of a metric only when that metric is uncomputable for
    it (parse failure, no revision, scorer missing); other metrics keep it.
    """
    firsts: list[float] = []
    seconds: list[float] = []
    for record in records:
        before, after = _metric_scores(record, metric)
        if before is not None and after is not None:
            firsts.append(before)
            seconds.append(after)
    return firsts, seconds


def build_score_report(
    records: list[TranslationRecord],
    *,
    sweep: list[SweepResult] | None = None,
    provenance: str = "",
) -> ScoreReport:
    report = ScoreReport(sweep=list(sweep) if sweep else [], provenance=provenance)
    if not records:
        return report
    metrics = _record_metrics(records)
    strategies = sorted({r.strategy for r in records})
    for strategy in strategies:
        subset = [r for r in records if r.strategy == strategy]
        for metric in metrics:
            firsts, seconds = _paired_scores(subset, metric)
            if not firsts:
                continue
            n = len(firsts)
            first_mean = sum(firsts) / n
            second_mean = sum(seconds) / n
            report.aggregates.append(
                MetricAggregate(
                    strategy=strategy,
                    metric=metric,
                    n=n,
                    first_mean=first_mean,
                    second_mean=second_mean,
                    mean_gain=second_mean - first_mean,
                )
            )
    for metric in metrics:
        firsts, seconds = _paired_scores(records, metric)
        if not firsts:
            continue
        sample = PairedSample(tuple(firsts), tuple(seconds), metric)
        report.gains[metric] = summarize_gains(sample)
        if any(s != f for f, s in zip(firsts, seconds)):
            result = wilcoxon_signed_rank(sample)
            report.wilcoxon[metric] = result
            report.significance.append(
                SignificanceRow(
                    metric=metric,
                    n=len(firsts),
                    median_gain=result.median_gain,
                    p_value=result.p_value,
                    effect_size_r=result.effect_size_r,
                )
            )
    return report


# --- rendering ---------------------------------------------------------------


def format_significance_row(row: SignificanceRow) -> tuple[str, str, str, str, str]:
    return (
        row.metric,
        str(row.n),
        f"{row.median_gain:+.4f}",
        f"{row.p_value:.2e}",
        f"{row.effect_size_r:.2f}",
    )


def _provenance_line(report: ScoreReport) -> str:
    return f"# provenance={report.provenance or 'unknown'}"


def _csv_text(header: tuple[str, ...] | list[str], rows: list, provenance_line: str) -> str:
    buffer = io.StringIO()
    buffer.write(provenance_line + "\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def render_significance_table(report: ScoreReport) -> tuple[str, str]:
    """Render the paired-test summary as (fixed-width text, CSV)."""
    formatted = [format_significance_row(row) for row in report.significance]
    widths = [
        max(len(column), *(len(r[i]) for r in formatted)) if formatted else len(column)
        for i, column in enumerate(SIGNIFICANCE_COLUMNS)
    ]
    lines = [_provenance_line(report)]
    lines.append("  ".join(col.ljust(w) for col, w in zip(SIGNIFICANCE_COLUMNS, widths)).rstrip())
    for row in formatted:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
    text = "\n".join(lines) + "\n"
    csv_text = _csv_text(SIGNIFICANCE_COLUMNS, formatted, _provenance_line(report))
    return text, csv_text


def render_figure_data(report: ScoreReport) -> dict[str, str]:
    """CSV payloads for the two figures, keyed by file name.

    strategy_comparison.csv: one row per (strategy, metric, pass) mean.
    threshold_ablation.csv: one row per (threshold, metric) with coverage
    and the before/after averages among refined sentences.
    Numbers keep full float precision so reloading reproduces the report.
    """
    files: dict[str, str] = {}
    comparison_rows = []
    for aggregate in report.aggregates:
        comparison_rows.append((aggregate.strategy, aggregate.metric, 1, repr(aggregate.first_mean)))
        comparison_rows.append((aggregate.strategy, aggregate.metric, 2, repr(aggregate.second_mean)))
    files["strategy_comparison.csv"] = _csv_text(
        ("strategy", "metric", "pass", "mean"), comparison_rows, _provenance_line(report)
    )
    ablation_rows = []
    for result in report.sweep:
        for metric in sorted(result.avg_before):
            before = result.avg_before[metric]
            after = result.avg_after[metric]
            ablation_rows.append(
                (
                    repr(result.threshold),
                    metric,
                    repr(result.coverage),
                    "" if before is None else repr(before),
                    "" if after is None else repr(after),
                )
            )
    files["threshold_ablation.csv"] = _csv_text(
        ("threshold", "metric", "coverage", "avg_before", "avg_after"),
        ablation_rows,
        _provenance_line(report),
    )
    return files


def read_csv_rows(text: str) -> list[dict[str, str]]:
    """Parse a rendered CSV back into dict rows, skipping comment lines."""
    lines = [line for line in text.splitlines() if not line.startswith("#")]
    reader = csv.DictReader(lines)
    return list(reader)

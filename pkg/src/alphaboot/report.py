"""Percentile tables, CDF emission, coefficient summaries, and pipeline composition.

Tables print t-values and percentages at 2 decimals; the CSV artifacts keep
full precision (shortest round-trip repr), so re-emitting identical inputs is
byte-identical.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass
from typing import IO, TYPE_CHECKING, Sequence, Union

import numpy as np

from .panel import AlignedSample, FactorPanel, FundSeries, align
from .regress import RegressionResult, batch_fit
from .screen import ScreenConfig, ScreenOutcome, run_screen, size_group_label

if TYPE_CHECKING:
    from .boot import SimulationOutput, TStatCrossSection

__all__ = [
    "percentile",
    "PercentileRow",
    "PercentileReport",
    "CoefficientRow",
    "CoefficientSummary",
    "GroupData",
    "build_percentile_report",
    "build_coefficient_summary",
    "emit_cdf",
    "assemble_group",
    "format_percentile_table",
    "write_percentile_csv",
    "write_report_sidecar",
    "write_coefficient_csv",
]

PCT_BELOW_MODES = ("pooled", "per-run")
COEF_QUANTILES = (10.0, 25.0, 50.0, 75.0, 90.0)


def percentile(values: np.ndarray, p: float) -> float:
    """Linear-interpolation percentile of a sorted vector.

    Rank h = (n-1) * p / 100; the value interpolates between the order
    statistics bracketing h.
    """
    values = np.asarray(values)
    n = values.size
    if n == 0:
        raise ValueError("percentile of an empty vector")
    if not 0.0 < p < 100.0:
        raise ValueError(f"percentile must lie in (0, 100), got {p}")
    h = (n - 1) * (p / 100.0)
    lo = math.floor(h)
    frac = h - lo
    if lo + 1 >= n:
        return float(values[-1])
    return float(values[lo] + frac * (values[lo + 1] - values[lo]))


@dataclass(frozen=True)
class PercentileRow:
    pct: float
    sim: float
    act: float
    pct_below_pooled: float
    pct_below_per_run: float


@dataclass(frozen=True)
class PercentileReport:
    """One group x model x period table of Sim / Act / %<Act rows."""

    rows: tuple[PercentileRow, ...]
    group_label: str
    model_label: str
    period_label: str
    fund_count: int
    pct_below_mode: str
    seed: int
    n_sims: int


def build_percentile_report(
    output: "SimulationOutput",
    *,
    group_label: str = "",
    period_label: str = "",
    pct_below_mode: str = "pooled",
) -> PercentileReport:
    """Turn a SimulationOutput into table rows.

    Per percentile p: Act is the percentile of the actual cross-section, Sim
    the mean over runs of the run-level percentile, and %<Act the share of
    pooled simulated values (pooled mode) or of runs' percentile values
    (per-run mode) strictly below Act. Both modes are always computed; the
    mode only selects which one the printable table shows.
    """
    if pct_below_mode not in PCT_BELOW_MODES:
        raise ValueError(f"pct_below_mode must be one of {PCT_BELOW_MODES}")
    if output.actual.fund_count == 0:
        raise ValueError("empty actual cross-section")
    n_valid = output.per_run_percentiles.shape[0] - output.empty_run_count
    if n_valid == 0:
        raise ValueError("no successful simulation runs")
    pooled = output.pooled_sim

    rows = []
    for j, p in enumerate(output.pct_grid):
        act = percentile(output.actual.values, p)
        column = output.per_run_percentiles[:, j]
        sim = float(np.nanmean(column))
        below_pooled = 100.0 * float(np.searchsorted(pooled, act, side="left")) / pooled.size
        below_per_run = 100.0 * float(np.count_nonzero(column < act)) / n_valid
        rows.append(PercentileRow(p, sim, act, below_pooled, below_per_run))
    return PercentileReport(
        rows=tuple(rows),
        group_label=group_label,
        model_label=output.config.model,
        period_label=period_label,
        fund_count=output.actual.fund_count,
        pct_below_mode=pct_below_mode,
        seed=output.config.base_seed,
        n_sims=output.config.n_sims,
    )


@dataclass(frozen=True)
class CoefficientRow:
    label: str
    quantiles: tuple[float, ...]
    mean: float


@dataclass(frozen=True)
class CoefficientSummary:
    group_label: str
    quantile_grid: tuple[float, ...]
    rows: tuple[CoefficientRow, ...]


def build_coefficient_summary(fits: Sequence[RegressionResult], group_label: str = "") -> CoefficientSummary:
    """Cross-fund quantiles and mean for every coefficient and t-statistic."""
    if not fits:
        raise ValueError("no fits to summarize")
    factor_names = fits[0].factor_names
    if any(f.factor_names != factor_names for f in fits):
        raise ValueError("fits mix models")
    labels = ["alpha", *factor_names, "t_alpha", *(f"t_{name}" for name in factor_names)]
    stacked = np.array([np.concatenate((f.coefficients, f.tstats)) for f in fits])
    rows = []
    for i, label in enumerate(labels):
        values = np.sort(stacked[:, i])
        quantiles = tuple(percentile(values, q) for q in COEF_QUANTILES)
        rows.append(CoefficientRow(label=label, quantiles=quantiles, mean=float(values.mean())))
    return CoefficientSummary(group_label=group_label, quantile_grid=COEF_QUANTILES, rows=tuple(rows))


def emit_cdf(
    actual: "TStatCrossSection",
    pooled_sim: np.ndarray,
    dest: Union[str, os.PathLike, IO[str]],
) -> None:
    """Plot-ready CDF data on the merged support of both series.

    Each row holds a t value and the fraction of each series at or below it.
    """
    if actual.fund_count == 0 or pooled_sim.size == 0:
        raise ValueError("emit_cdf needs nonempty actual and simulated values")
    support = np.unique(np.concatenate([actual.values, pooled_sim]))
    cdf_act = np.searchsorted(actual.values, support, side="right") / actual.values.size
    cdf_sim = np.searchsorted(pooled_sim, support, side="right") / pooled_sim.size
    own = isinstance(dest, (str, os.PathLike))
    out = open(dest, "w", encoding="utf-8", newline="") if own else dest
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["t_value", "cdf_actual", "cdf_simulated"])
        for t, ca, cs in zip(support, cdf_act, cdf_sim):
            writer.writerow([repr(float(t)), repr(float(ca)), repr(float(cs))])
    finally:
        if own:
            out.close()


@dataclass(frozen=True, eq=False)
class GroupData:
    """Screened, aligned, and fitted funds of one size group under one model."""

    group_label: str
    model: str
    outcomes: list[ScreenOutcome]
    samples: list[AlignedSample]
    fits: list[RegressionResult]
    dropped: int  # admitted funds whose full-sample fit failed or was degenerate


def assemble_group(
    panel: FactorPanel,
    funds: Sequence[FundSeries],
    screen_cfg: ScreenConfig,
    model: str,
    group_label: str,
) -> GroupData:
    """Compose filter -> align -> fit for one size group."""
    panel.check_model(model)
    labels = [size_group_label(c) for c in screen_cfg.size_cutoffs]
    if group_label not in labels:
        raise ValueError(f"unknown size group {group_label!r}, expected one of {labels}")
    outcomes = run_screen(funds, panel, screen_cfg)
    picked = [o for o in outcomes if o.admitted and group_label in o.size_groups]
    aligned = [align(o.trimmed, panel, model) for o in picked]
    slots = batch_fit(aligned)
    samples, fits, dropped = [], [], 0
    for sample, slot in zip(aligned, slots):
        if isinstance(slot, RegressionResult) and not slot.degenerate:
            samples.append(sample)
            fits.append(slot)
        else:
            dropped += 1
    return GroupData(
        group_label=group_label,
        model=model,
        outcomes=outcomes,
        samples=samples,
        fits=fits,
        dropped=dropped,
    )


def format_percentile_table(report: PercentileReport) -> str:
    """Printable table: Pct / Sim / Act / %<Act at 2 decimals."""
    below = {
        "pooled": lambda r: r.pct_below_pooled,
        "per-run": lambda r: r.pct_below_per_run,
    }[report.pct_below_mode]
    lines = [
        f"{report.group_label} | {report.model_label} | {report.period_label} | {report.fund_count} funds"
        f" | {report.n_sims} sims | %<Act mode: {report.pct_below_mode}",
        f"{'Pct':>4} {'Sim':>8} {'Act':>8} {'%<Act':>8}",
    ]
    for row in report.rows:
        lines.append(f"{row.pct:>4g} {row.sim:>8.2f} {row.act:>8.2f} {below(row):>8.2f}")
    return "\n".join(lines) + "\n"


def write_percentile_csv(report: PercentileReport, dest: Union[str, os.PathLike, IO[str]]) -> None:
    own = isinstance(dest, (str, os.PathLike))
    out = open(dest, "w", encoding="utf-8", newline="") if own else dest
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["pct", "sim", "act", "pct_below_act_pooled", "pct_below_act_per_run"])
        for row in report.rows:
            writer.writerow(
                [repr(float(row.pct)), repr(row.sim), repr(row.act), repr(row.pct_below_pooled), repr(row.pct_below_per_run)]
            )
    finally:
        if own:
            out.close()


def write_report_sidecar(report: PercentileReport, dest: Union[str, os.PathLike, IO[str]]) -> None:
    """JSON provenance sidecar for one percentile table."""
    payload = {
        "group": report.group_label,
        "model": report.model_label,
        "period": report.period_label,
        "fund_count": report.fund_count,
        "seed": report.seed,
        "n_sims": report.n_sims,
        "pct_below_mode": report.pct_below_mode,
        "pct_grid": [row.pct for row in report.rows],
    }
    own = isinstance(dest, (str, os.PathLike))
    out = open(dest, "w", encoding="utf-8", newline="") if own else dest
    try:
        json.dump(payload, out, indent=2, sort_keys=True)
        out.write("\n")
    finally:
        if own:
            out.close()


def write_coefficient_csv(summary: CoefficientSummary, dest: Union[str, os.PathLike, IO[str]]) -> None:
    own = isinstance(dest, (str, os.PathLike))
    out = open(dest, "w", encoding="utf-8", newline="") if own else dest
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["coefficient", *(f"p{q:g}" for q in summary.quantile_grid), "mean"])
        for row in summary.rows:
            writer.writerow([row.label, *(repr(v) for v in row.quantiles), repr(row.mean)])
    finally:
        if own:
            out.close()

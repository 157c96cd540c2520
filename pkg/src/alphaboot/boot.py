"""Zero-alpha bootstrap of t(alpha) cross-sections.

Each run draws one joint month-index vector with replacement over the whole
panel (preserving cross-fund correlation), keeps per fund the drawn months it
actually observed, refits the model on the alpha-stripped returns, and
collects the cross-section of t(alpha). Runs are pure functions of
(base_seed, run_index), so results are independent of execution order and
thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .panel import MODEL_FACTORS, AlignedSample, FactorPanel
from .regress import DesignOperator, RegressionError, RegressionResult
from .report import percentile

__all__ = [
    "SimConfig",
    "TStatCrossSection",
    "SimulationOutput",
    "mix_run_seed",
    "zero_alpha_adjust",
    "draw_months",
    "run_simulation",
]

DEFAULT_PCT_GRID = (1, 2, 3, 4, 5, 10, 20, 30, 40, 50, 60, 70, 80, 90, 95, 96, 97, 98, 99)

_MASK64 = 0xFFFFFFFFFFFFFFFF
_GOLDEN = 0x9E3779B97F4A7C15


def mix_run_seed(base_seed: int, run_index: int) -> int:
    """Child seed for one run: SplitMix64 avalanche of base_seed + stream step.

    The finalizer (xor-shift / multiply twice) decorrelates consecutive run
    indices; run_index + 1 keeps the (0, 0) input away from SplitMix64's zero
    fixed point.
    """
    z = (base_seed + (run_index + 1) * _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class SimConfig:
    """Bootstrap definition; identical configs give bit-identical outputs."""

    n_sims: int = 10_000
    base_seed: int = 0
    min_resampled_obs: int = 12
    model: str = "ff5"
    pct_grid: tuple[float, ...] = DEFAULT_PCT_GRID
    # optional cap on the stored pooled t(alpha) values (rank-thinned, see
    # run_simulation); None keeps the pool exact
    pooled_cap: int | None = None

    def __post_init__(self) -> None:
        if self.n_sims < 1:
            raise ValueError("n_sims must be >= 1")
        if self.min_resampled_obs < 1:
            raise ValueError("min_resampled_obs must be >= 1")
        if self.model not in MODEL_FACTORS:
            raise ValueError(f"unknown model {self.model!r}, expected one of {sorted(MODEL_FACTORS)}")
        grid = tuple(float(p) for p in self.pct_grid)
        if not grid or any(not 0.0 < p < 100.0 for p in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("pct_grid must be strictly increasing within (0, 100)")
        object.__setattr__(self, "pct_grid", grid)
        if self.pooled_cap is not None and self.pooled_cap < 1:
            raise ValueError("pooled_cap must be >= 1 when set")


@dataclass(frozen=True, eq=False)
class TStatCrossSection:
    """Sorted t(alpha) values across one fund group."""

    values: np.ndarray
    fund_count: int

    @classmethod
    def from_values(cls, values) -> "TStatCrossSection":
        arr = np.sort(np.asarray(values, dtype=np.float64))
        arr.setflags(write=False)
        return cls(values=arr, fund_count=arr.size)


@dataclass(frozen=True, eq=False)
class SimulationOutput:
    """Actual cross-section plus per-run percentile rows and the pooled simulated values."""

    actual: TStatCrossSection
    per_run_percentiles: np.ndarray  # (n_sims, len(pct_grid)); NaN rows for empty runs
    pooled_sim: np.ndarray           # sorted
    config: SimConfig
    empty_run_count: int

    @property
    def pct_grid(self) -> tuple[float, ...]:
        return self.config.pct_grid


def zero_alpha_adjust(sample: AlignedSample, fit: RegressionResult) -> np.ndarray:
    """Excess returns with the fund's own estimated alpha removed.

    Refitting the same design on the adjusted series gives alpha 0 and
    unchanged betas (exact intercept algebra, up to rounding).
    """
    if fit.n_obs != sample.n_obs:
        raise ValueError(
            f"fit/sample mismatch for {sample.fund_id}: fit has {fit.n_obs} months, sample {sample.n_obs}"
        )
    return sample.y - fit.alpha


def draw_months(run_index: int, cfg: SimConfig, n_panel_months: int) -> np.ndarray:
    """The run's joint month draw: n uniform i.i.d. indices with replacement."""
    if n_panel_months < 1:
        raise ValueError("n_panel_months must be >= 1")
    rng = np.random.Generator(np.random.PCG64(mix_run_seed(cfg.base_seed, run_index)))
    return rng.integers(0, n_panel_months, size=n_panel_months, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class _MaskGroup:
    # funds sharing one observation mask solve against one resampled design
    pos: np.ndarray       # panel row -> sample row, -1 where unobserved
    adjusted: np.ndarray  # (n_sample_rows, n_funds) zero-alpha returns


def _build_groups(
    group: Sequence[tuple[AlignedSample, RegressionResult]],
    n_panel_months: int,
) -> list[_MaskGroup]:
    by_mask: dict[bytes, list[int]] = {}
    for i, (sample, _) in enumerate(group):
        by_mask.setdefault(sample.panel_rows.tobytes(), []).append(i)
    groups = []
    for indices in by_mask.values():
        rows = group[indices[0]][0].panel_rows
        pos = np.full(n_panel_months, -1, dtype=np.int64)
        pos[rows] = np.arange(rows.size)
        adjusted = np.column_stack([zero_alpha_adjust(group[i][0], group[i][1]) for i in indices])
        groups.append(_MaskGroup(pos=pos, adjusted=adjusted))
    return groups


def run_simulation(
    group: Sequence[tuple[AlignedSample, RegressionResult]],
    panel: FactorPanel,
    cfg: SimConfig,
    *,
    threads: int = 1,
) -> SimulationOutput:
    """Bootstrap a fund group under cfg.model.

    group pairs each admitted fund's aligned sample with its full-sample fit
    (non-degenerate, same model). Funds with fewer than min_resampled_obs
    usable rows in a run, or whose resampled fit is degenerate or singular,
    are excluded from that run; runs where every fund is excluded contribute
    a NaN percentile row and are tallied in empty_run_count.
    """
    if not group:
        raise ValueError("empty fund group")
    expected_factors = MODEL_FACTORS[cfg.model]
    for sample, fit in group:
        if sample.factor_names != expected_factors:
            raise ValueError(f"sample {sample.fund_id} not aligned under model {cfg.model!r}")
        if fit.degenerate:
            raise ValueError(f"fund {sample.fund_id} has a degenerate full-sample fit")

    actual = TStatCrossSection.from_values([fit.tstats[0] for _, fit in group])
    design = panel.design_matrix(cfg.model)
    n_months = panel.n_months
    n_coef = design.shape[1]
    min_rows = max(cfg.min_resampled_obs, n_coef + 1)
    groups = _build_groups(group, n_months)
    grid = cfg.pct_grid

    def one_run(run_index: int) -> tuple[np.ndarray, np.ndarray]:
        drawn = draw_months(run_index, cfg, n_months)
        collected = []
        for g in groups:
            sel = g.pos[drawn]
            keep = sel >= 0
            if int(keep.sum()) < min_rows:
                continue
            try:
                op = DesignOperator(design[drawn[keep]])
            except RegressionError:
                continue
            sol = op.solve_many(g.adjusted[sel[keep]])
            usable = ~sol.degenerate
            if usable.any():
                collected.append(sol.tstats[0, usable])
        if not collected:
            return np.full(len(grid), np.nan), np.empty(0)
        tvals = np.sort(np.concatenate(collected))
        row = np.array([percentile(tvals, p) for p in grid])
        return row, tvals

    # The per-run matrices are small enough that BLAS-internal threading only
    # adds synchronization cost; parallelism belongs to the run level, where
    # every run is an independent pure function of (base_seed, run_index).
    with threadpool_limits(limits=1, user_api="blas"):
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(one_run, range(cfg.n_sims)))
        else:
            results = [one_run(r) for r in range(cfg.n_sims)]

    per_run = np.vstack([row for row, _ in results])
    pooled = np.sort(np.concatenate([tvals for _, tvals in results]))
    if cfg.pooled_cap is not None and pooled.size > cfg.pooled_cap:
        # deterministic rank thinning: evenly spaced order statistics of the
        # sorted pool; shifts any pooled count by at most one thinning stride
        ranks = np.linspace(0, pooled.size - 1, cfg.pooled_cap).round().astype(np.int64)
        pooled = pooled[ranks]
    empty = int(np.isnan(per_run[:, 0]).sum())
    per_run.setflags(write=False)
    pooled.setflags(write=False)
    return SimulationOutput(
        actual=actual,
        per_run_percentiles=per_run,
        pooled_sim=pooled,
        config=cfg,
        empty_run_count=empty,
    )

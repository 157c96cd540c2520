"""Fund filtration pipeline and AuM size groups.

Order is incubation trim, minimum history, money-market screen, index/leverage
screen; evaluation short-circuits at the first failure and every evaluated
rule is recorded with the statistic that drove it.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import IO, Sequence, Union

import numpy as np

from .panel import AlignmentError, FactorPanel, FactorUnavailableError, FundSeries, MonthId
from .regress import DesignOperator, RegressionError

__all__ = [
    "ScreenConfig",
    "RuleDecision",
    "ScreenOutcome",
    "FundRejected",
    "size_group_label",
    "trim_incubation",
    "screen_money_market",
    "screen_index_leverage",
    "screen_min_history",
    "assign_size_groups",
    "run_screen",
    "write_screen_csv",
]


class FundRejected(Exception):
    """A fund failed a screen outright (no statistic could be measured)."""

    def __init__(self, rule: str, reason: str):
        super().__init__(reason)
        self.rule = rule
        self.reason = reason


@dataclass(frozen=True)
class ScreenConfig:
    """Thresholds for the filtration rules. Defaults match the study setup.

    rf_tstat_max / index_tstat_max / leverage_beta_max_excess accept
    math.inf, and index_beta_band / market_tstat_min / min_history_months
    accept 0, so individual screens can be disabled cleanly.
    """

    incubation_threshold_aum: float = 2.5
    rf_tstat_max: float = 8.0
    index_beta_band: float = 0.05
    index_tstat_max: float = 8.0
    leverage_beta_max_excess: float = 5.0
    market_tstat_min: float = 1.95
    min_history_months: int = 24
    size_cutoffs: tuple[float, ...] = (5.0, 250.0, 1000.0)

    def __post_init__(self) -> None:
        for name in ("incubation_threshold_aum", "rf_tstat_max", "index_tstat_max", "leverage_beta_max_excess"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.index_beta_band < 0 or self.market_tstat_min < 0 or self.min_history_months < 0:
            raise ValueError("index_beta_band, market_tstat_min and min_history_months must be >= 0")
        cutoffs = tuple(float(c) for c in self.size_cutoffs)
        if any(c <= 0 for c in cutoffs) or any(b <= a for a, b in zip(cutoffs, cutoffs[1:])):
            raise ValueError("size_cutoffs must be strictly positive and strictly increasing")
        object.__setattr__(self, "size_cutoffs", cutoffs)


@dataclass(frozen=True)
class RuleDecision:
    rule: str
    passed: bool
    statistics: dict[str, float] = field(default_factory=dict)
    note: str | None = None


@dataclass(frozen=True)
class ScreenOutcome:
    """Auditable per-fund screening result; admitted iff every rule passed."""

    fund_id: str
    trimmed_start: MonthId | None
    decisions: tuple[RuleDecision, ...]
    admitted: bool
    size_groups: tuple[str, ...]
    trimmed: FundSeries | None
    n_obs: int
    last_aum: float | None

    @property
    def failing_rule(self) -> str | None:
        for decision in self.decisions:
            if not decision.passed:
                return decision.rule
        return None

    def decision_for(self, rule: str) -> RuleDecision | None:
        for decision in self.decisions:
            if decision.rule == rule:
                return decision
        return None


def size_group_label(cutoff: float) -> str:
    if cutoff >= 1000.0:
        return f"{cutoff / 1000.0:g}B"
    return f"{cutoff:g}M"


def trim_incubation(fund: FundSeries, cfg: ScreenConfig) -> FundSeries:
    """Drop history before AuM first reaches the incubation threshold.

    The cut is permanent: later dips below the threshold do not re-trim.
    Funds whose AuM never reaches it are rejected.
    """
    qualifying = np.flatnonzero(fund.aum >= cfg.incubation_threshold_aum)
    if qualifying.size == 0:
        raise FundRejected("incubation", "never incubated out")
    return fund.tail_from(int(qualifying[0]))


def screen_min_history(fund: FundSeries, cfg: ScreenConfig) -> RuleDecision:
    """Pass iff the fund has at least min_history_months observations."""
    return RuleDecision(
        rule="min_history",
        passed=fund.n_obs >= cfg.min_history_months,
        statistics={"n_obs": float(fund.n_obs)},
    )


def _fit_two_column(fund: FundSeries, panel: FactorPanel, y: np.ndarray, column: np.ndarray, rule: str):
    rows = np.array([panel.row_of(m) for m in fund.months], dtype=np.intp)
    X = np.column_stack([np.ones(rows.size), column[rows]])
    try:
        op = DesignOperator(X)
    except RegressionError as err:
        raise FundRejected(rule, str(err)) from None
    return op.solve_many(y[:, None] if y.ndim == 1 else y)


def screen_money_market(fund: FundSeries, panel: FactorPanel, cfg: ScreenConfig) -> RuleDecision:
    """Regress net returns on the risk-free rate; a tight fit marks a money-market fund.

    Fails iff |t(rf coefficient)| >= rf_tstat_max; a degenerate fit (returns
    exactly tracking rf) counts as infinite t and fails.
    """
    sol = _fit_two_column(fund, panel, fund.net_returns, panel.rf, "money_market")
    t_rf = math.inf if sol.degenerate[0] else float(sol.tstats[1, 0])
    return RuleDecision(
        rule="money_market",
        passed=abs(t_rf) < cfg.rf_tstat_max,
        statistics={"t_rf": t_rf},
    )


def screen_index_leverage(fund: FundSeries, panel: FactorPanel, cfg: ScreenConfig) -> RuleDecision:
    """Market regression screen rejecting index trackers and leveraged funds.

    With b = market beta, d = ||b| - 1| its deviation from one, and t = the
    beta's t-statistic, pass iff (d > index_beta_band or |t| < index_tstat_max)
    and |b| - 1 < leverage_beta_max_excess and |t| > market_tstat_min.
    An index tracker (d ~ 0, huge t) fails the first part; a leveraged fund
    fails the second.
    """
    rows = np.array([panel.row_of(m) for m in fund.months], dtype=np.intp)
    y = fund.net_returns - panel.rf[rows]
    sol = _fit_two_column(fund, panel, y, panel.mkt_rf, "index_leverage")
    beta = float(sol.coef[1, 0])
    t_beta = math.inf if sol.degenerate[0] else float(sol.tstats[1, 0])
    excess = abs(beta) - 1.0
    not_index = abs(excess) > cfg.index_beta_band or abs(t_beta) < cfg.index_tstat_max
    equity_not_leveraged = excess < cfg.leverage_beta_max_excess and abs(t_beta) > cfg.market_tstat_min
    return RuleDecision(
        rule="index_leverage",
        passed=not_index and equity_not_leveraged,
        statistics={"beta": beta, "t_beta": t_beta},
    )


def assign_size_groups(fund: FundSeries, cfg: ScreenConfig) -> tuple[str, ...]:
    """Labels of every cutoff the fund's last reported AuM reaches (nested)."""
    last = fund.last_aum()
    if last is None:
        raise FundRejected("size_groups", "no AuM observation")
    return tuple(size_group_label(c) for c in cfg.size_cutoffs if last >= c)


def run_screen(
    funds: Sequence[FundSeries],
    panel: FactorPanel,
    cfg: ScreenConfig | None = None,
) -> list[ScreenOutcome]:
    """Apply the full filtration pipeline, one auditable outcome per fund.

    Per-fund failures (including alignment problems) become outcomes, never
    aborts; output order matches input order.
    """
    cfg = cfg or ScreenConfig()
    outcomes = []
    for fund in funds:
        outcomes.append(_screen_one(fund, panel, cfg))
    return outcomes


def _screen_one(fund: FundSeries, panel: FactorPanel, cfg: ScreenConfig) -> ScreenOutcome:
    decisions: list[RuleDecision] = []
    aum_seen = fund.aum[~np.isnan(fund.aum)]
    max_aum = float(aum_seen.max()) if aum_seen.size else math.nan

    try:
        trimmed = trim_incubation(fund, cfg)
    except FundRejected as rej:
        decisions.append(RuleDecision("incubation", False, {"max_aum": max_aum}, note=rej.reason))
        return ScreenOutcome(
            fund_id=fund.fund_id,
            trimmed_start=None,
            decisions=tuple(decisions),
            admitted=False,
            size_groups=(),
            trimmed=None,
            n_obs=fund.n_obs,
            last_aum=fund.last_aum(),
        )
    decisions.append(RuleDecision("incubation", True, {"max_aum": max_aum}))

    size_groups: tuple[str, ...] = ()
    try:
        size_groups = assign_size_groups(trimmed, cfg)
    except FundRejected:
        pass  # no AuM cannot happen past incubation, but stay defensive

    admitted = False
    checks = (
        lambda: screen_min_history(trimmed, cfg),
        lambda: screen_money_market(trimmed, panel, cfg),
        lambda: screen_index_leverage(trimmed, panel, cfg),
    )
    for check in checks:
        try:
            decision = check()
        except FundRejected as rej:
            decisions.append(RuleDecision(rej.rule, False, note=rej.reason))
            break
        except (AlignmentError, FactorUnavailableError) as err:
            decisions.append(RuleDecision("alignment", False, note=str(err)))
            break
        decisions.append(decision)
        if not decision.passed:
            break
    else:
        admitted = True

    return ScreenOutcome(
        fund_id=fund.fund_id,
        trimmed_start=trimmed.months[0],
        decisions=tuple(decisions),
        admitted=admitted,
        size_groups=size_groups,
        trimmed=trimmed,
        n_obs=trimmed.n_obs,
        last_aum=trimmed.last_aum(),
    )


def write_screen_csv(outcomes: Sequence[ScreenOutcome], dest: Union[str, os.PathLike, IO[str]]) -> None:
    """Emit the filter audit CSV."""

    def stat(outcome: ScreenOutcome, rule: str, key: str) -> str:
        decision = outcome.decision_for(rule)
        if decision is None or key not in decision.statistics:
            return ""
        return repr(decision.statistics[key])

    own = isinstance(dest, (str, os.PathLike))
    out = open(dest, "w", encoding="utf-8", newline="") if own else dest
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(
            ["fund_id", "admitted", "failing_rule", "beta", "t_beta", "t_rf", "n_obs", "last_aum", "size_groups"]
        )
        for o in outcomes:
            writer.writerow(
                [
                    o.fund_id,
                    "true" if o.admitted else "false",
                    o.failing_rule or "",
                    stat(o, "index_leverage", "beta"),
                    stat(o, "index_leverage", "t_beta"),
                    stat(o, "money_market", "t_rf"),
                    o.n_obs,
                    "" if o.last_aum is None else repr(o.last_aum),
                    ";".join(o.size_groups),
                ]
            )
    finally:
        if own:
            out.close()

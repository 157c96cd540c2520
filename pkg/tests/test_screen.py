import math

import numpy as np
import pytest

from alphaboot.panel import AlignedSample, FactorPanel, FundSeries, MonthId
from alphaboot.screen import (
    FundRejected,
    ScreenConfig,
    assign_size_groups,
    run_screen,
    screen_index_leverage,
    screen_min_history,
    screen_money_market,
    size_group_label,
    trim_incubation,
)
from alphaboot.synth import oracle_fit


def months_from(start_year, n):
    out = [MonthId(start_year, 1)]
    for _ in range(n - 1):
        out.append(out[-1].next())
    return tuple(out)


def make_panel(n=120, seed=0):
    rng = np.random.default_rng(seed)
    return FactorPanel(
        months=months_from(1990, n),
        mkt_rf=rng.normal(0.005, 0.045, n),
        smb=rng.normal(0.001, 0.03, n),
        hml=rng.normal(0.002, 0.03, n),
        rf=rng.normal(0.002, 0.0005, n),
    )


def fund_on(panel, net, aum=3.0, fund_id="A"):
    n = panel.n_months
    aum_arr = np.full(n, aum) if np.isscalar(aum) else np.asarray(aum, float)
    return FundSeries(fund_id, panel.months, np.asarray(net, float), aum_arr)


def oracle_two_column(fund, panel, y, column):
    """Independent screen regression: [1, column] via the brute-force solver."""
    rows = [panel.row_of(m) for m in fund.months]
    X = np.column_stack([np.ones(len(rows)), column[rows]])
    return oracle_fit(AlignedSample(fund.fund_id, "capm", fund.months, y, X, ("c",), np.array(rows)))


class TestTrimIncubation:
    def test_first_crossing_is_permanent(self):
        panel = make_panel(4)
        fund = fund_on(panel, [0.01] * 4, aum=[1.0, 2.0, 3.0, 2.0])
        trimmed = trim_incubation(fund, ScreenConfig())
        assert trimmed.months == panel.months[2:]  # month 3 first >= 2.5; month 4 kept
        assert trimmed.n_obs == 2

    def test_boundary_inclusive(self):
        panel = make_panel(3)
        fund = fund_on(panel, [0.01] * 3, aum=[2.5, 1.0, 1.0])
        trimmed = trim_incubation(fund, ScreenConfig())
        assert trimmed.months == fund.months

    def test_never_reaching_threshold(self):
        panel = make_panel(3)
        fund = fund_on(panel, [0.01] * 3, aum=[1.0, 2.0, 2.4])
        with pytest.raises(FundRejected, match="never incubated out"):
            trim_incubation(fund, ScreenConfig())

    def test_all_missing_aum(self):
        panel = make_panel(3)
        fund = fund_on(panel, [0.01] * 3, aum=[math.nan] * 3)
        with pytest.raises(FundRejected, match="never incubated out"):
            trim_incubation(fund, ScreenConfig())

    def test_trim_is_suffix(self):
        rng = np.random.default_rng(13)
        panel = make_panel(36)
        for _ in range(100):
            aum = rng.uniform(0.0, 6.0, 36)
            fund = fund_on(panel, rng.normal(0, 0.02, 36), aum=aum)
            try:
                trimmed = trim_incubation(fund, ScreenConfig())
            except FundRejected:
                assert not (aum >= 2.5).any()
                continue
            k = fund.n_obs - trimmed.n_obs
            assert trimmed.months == fund.months[k:]
            np.testing.assert_array_equal(trimmed.net_returns, fund.net_returns[k:])
            assert aum[k] >= 2.5 and not (aum[:k] >= 2.5).any()


class TestMoneyMarketScreen:
    def test_exact_rf_tracker_fails(self):
        panel = make_panel()
        fund = fund_on(panel, panel.rf.copy())
        decision = screen_money_market(fund, panel, ScreenConfig())
        assert not decision.passed
        assert decision.statistics["t_rf"] == math.inf

    def test_independent_noise_passes(self):
        panel = make_panel(seed=21)
        rng = np.random.default_rng(42)
        fund = fund_on(panel, rng.normal(0.005, 0.03, panel.n_months))
        decision = screen_money_market(fund, panel, ScreenConfig())
        ref = oracle_two_column(fund, panel, fund.net_returns, panel.rf)
        assert decision.statistics["t_rf"] == pytest.approx(ref.tstats[1], rel=1e-10)
        assert abs(ref.tstats[1]) < 8
        assert decision.passed

    def test_boundary_just_below_eight_passes(self):
        # noise scale solved against the oracle so |t(rf)| lands at 7.9
        panel = make_panel(seed=5)
        rng = np.random.default_rng(7)
        shape = rng.standard_normal(panel.n_months)

        def t_at(scale):
            fund = fund_on(panel, panel.rf + scale * shape)
            return abs(oracle_two_column(fund, panel, fund.net_returns, panel.rf).tstats[1])

        lo, hi = 1e-6, 1.0
        assert t_at(lo) > 7.9 > t_at(hi)
        for _ in range(200):
            mid = math.sqrt(lo * hi)
            if t_at(mid) > 7.9:
                lo = mid
            else:
                hi = mid
        scale = math.sqrt(lo * hi)
        fund = fund_on(panel, panel.rf + scale * shape)
        decision = screen_money_market(fund, panel, ScreenConfig())
        assert decision.statistics["t_rf"] == pytest.approx(7.9, abs=1e-3)
        assert decision.passed  # strict <: fails only at >= 8

    def test_insufficient_observations(self):
        panel = make_panel(2)
        fund = fund_on(panel, [0.01, 0.02])
        with pytest.raises(FundRejected, match="insufficient"):
            screen_money_market(fund, panel, ScreenConfig())


class TestIndexLeverageScreen:
    def build(self, panel, beta, idio, seed=0):
        rng = np.random.default_rng(seed)
        net = panel.rf + beta * panel.mkt_rf + idio * rng.standard_normal(panel.n_months)
        return fund_on(panel, net)

    def test_pure_tracker_fails(self):
        panel = make_panel()
        decision = screen_index_leverage(self.build(panel, 1.0, 1e-7), panel, ScreenConfig())
        assert not decision.passed
        assert decision.statistics["beta"] == pytest.approx(1.0, abs=1e-3)
        assert abs(decision.statistics["t_beta"]) >= 8

    def test_leveraged_fails(self):
        panel = make_panel()
        decision = screen_index_leverage(self.build(panel, 7.0, 0.02), panel, ScreenConfig())
        assert not decision.passed
        assert abs(decision.statistics["beta"]) - 1 >= 5

    def test_active_point_two_above_passes(self):
        panel = make_panel()
        decision = screen_index_leverage(self.build(panel, 1.2, 0.02), panel, ScreenConfig())
        assert decision.passed
        assert abs(decision.statistics["beta"]) - 1 > 0.05
        assert abs(decision.statistics["t_beta"]) > 1.95

    def test_statistics_match_oracle(self):
        panel = make_panel(seed=3)
        fund = self.build(panel, 0.8, 0.03, seed=9)
        decision = screen_index_leverage(fund, panel, ScreenConfig())
        rows = [panel.row_of(m) for m in fund.months]
        y = fund.net_returns - panel.rf[np.array(rows)]
        ref = oracle_two_column(fund, panel, y, panel.mkt_rf)
        assert decision.statistics["beta"] == pytest.approx(ref.betas[0], rel=1e-10)
        assert decision.statistics["t_beta"] == pytest.approx(ref.tstats[1], rel=1e-10)


class TestMinHistoryAndGroups:
    @pytest.mark.parametrize("n,expected", [(24, True), (23, False), (0, False)])
    def test_min_history_boundary(self, n, expected):
        panel = make_panel(max(n, 1))
        months = panel.months[:n]
        fund = FundSeries("A", months, np.full(n, 0.01), np.full(n, 3.0))
        assert screen_min_history(fund, ScreenConfig()).passed is expected

    @pytest.mark.parametrize(
        "last,expected",
        [(6.0, ("5M",)), (300.0, ("5M", "250M")), (2000.0, ("5M", "250M", "1B")), (4.0, ())],
    )
    def test_group_assignment(self, last, expected):
        panel = make_panel(2)
        fund = fund_on(panel, [0.01, 0.01], aum=[3.0, last])
        assert assign_size_groups(fund, ScreenConfig()) == expected

    def test_groups_use_last_reported_aum(self):
        panel = make_panel(3)
        fund = fund_on(panel, [0.01] * 3, aum=[3.0, 600.0, math.nan])
        assert assign_size_groups(fund, ScreenConfig()) == ("5M", "250M")

    def test_no_aum_rejected(self):
        panel = make_panel(2)
        fund = fund_on(panel, [0.01, 0.01], aum=[math.nan, math.nan])
        with pytest.raises(FundRejected, match="no AuM"):
            assign_size_groups(fund, ScreenConfig())

    def test_nesting_property(self):
        rng = np.random.default_rng(17)
        panel = make_panel(2)
        cfg = ScreenConfig()
        labels = [size_group_label(c) for c in cfg.size_cutoffs]
        for _ in range(100):
            fund = fund_on(panel, [0.01, 0.01], aum=[3.0, float(rng.uniform(0, 5000))])
            groups = assign_size_groups(fund, cfg)
            ranks = [labels.index(g) for g in groups]
            assert ranks == list(range(len(ranks)))  # membership is a prefix of the cutoffs

    def test_labels(self):
        assert size_group_label(5) == "5M"
        assert size_group_label(250) == "250M"
        assert size_group_label(1000) == "1B"
        assert size_group_label(2500) == "2.5B"


class TestRunScreen:
    def active_noise(self, panel, rng, beta=1.25):
        return panel.rf + beta * panel.mkt_rf + rng.normal(0, 0.02, panel.n_months)

    def test_empty_universe(self):
        assert run_screen([], make_panel()) == []

    def test_short_circuit_stops_after_failure(self):
        panel = make_panel()
        fund = fund_on(panel, panel.rf.copy())  # money-market tracker
        (outcome,) = run_screen([fund], panel)
        assert not outcome.admitted
        assert outcome.failing_rule == "money_market"
        assert [d.rule for d in outcome.decisions] == ["incubation", "min_history", "money_market"]

    def test_outcomes_preserve_input_order_and_are_pure(self):
        panel = make_panel()
        rng = np.random.default_rng(2)
        funds = [fund_on(panel, self.active_noise(panel, rng), fund_id=f"F{i}") for i in range(5)]
        first = run_screen(funds, panel)
        second = run_screen(funds, panel)
        assert [o.fund_id for o in first] == [f.fund_id for f in funds]
        for a, b in zip(first, second):
            assert (a.fund_id, a.admitted, a.failing_rule, a.trimmed_start, a.size_groups) == (
                b.fund_id, b.admitted, b.failing_rule, b.trimmed_start, b.size_groups
            )
            assert a.decisions == b.decisions

    def test_disabled_screens_admit_everything_past_incubation(self):
        panel = make_panel()
        rng = np.random.default_rng(3)
        off = ScreenConfig(
            rf_tstat_max=math.inf,
            index_beta_band=0.0,
            index_tstat_max=math.inf,
            leverage_beta_max_excess=math.inf,
            market_tstat_min=0.0,
            min_history_months=0,
        )
        funds = [
            fund_on(panel, self.active_noise(panel, rng, beta=float(rng.uniform(-2, 8))), fund_id=f"F{i}")
            for i in range(30)
        ]
        funds.append(fund_on(panel, self.active_noise(panel, rng), aum=1.0, fund_id="incubating"))
        outcomes = run_screen(funds, panel, off)
        for o in outcomes[:-1]:
            assert o.admitted, o.failing_rule
        assert not outcomes[-1].admitted
        assert outcomes[-1].failing_rule == "incubation"

    def test_ten_fund_universe_admits_exactly_four(self):
        # each rule decided independently with the brute-force solver below
        panel = make_panel(seed=11)
        rng = np.random.default_rng(23)
        n = panel.n_months
        funds = [
            fund_on(panel, self.active_noise(panel, rng, 1.2), fund_id="act0"),
            fund_on(panel, self.active_noise(panel, rng, 0.8), fund_id="act1"),
            fund_on(panel, self.active_noise(panel, rng, 1.3), fund_id="act2"),
            fund_on(panel, self.active_noise(panel, rng, 0.7), fund_id="act3"),
            fund_on(panel, panel.rf + 1e-6 * rng.standard_normal(n), fund_id="mm0"),
            fund_on(panel, panel.rf + 1.0 * panel.mkt_rf + 1e-6 * rng.standard_normal(n), fund_id="idx0"),
            fund_on(panel, panel.rf + 7.0 * panel.mkt_rf + rng.normal(0, 0.02, n), fund_id="lev0"),
            fund_on(panel, self.active_noise(panel, rng), aum=2.0, fund_id="inc0"),
            FundSeries("short0", panel.months[:20], self.active_noise(panel, rng)[:20], np.full(20, 3.0)),
            fund_on(panel, panel.rf + 1e-6 * rng.standard_normal(n), fund_id="mm1"),
        ]
        outcomes = run_screen(funds, panel)
        admitted = {o.fund_id for o in outcomes if o.admitted}
        assert len(outcomes) == 10
        assert admitted == {"act0", "act1", "act2", "act3"}

        by_id = {o.fund_id: o for o in outcomes}
        assert by_id["mm0"].failing_rule == "money_market"
        assert by_id["mm1"].failing_rule == "money_market"
        assert by_id["idx0"].failing_rule == "index_leverage"
        assert by_id["lev0"].failing_rule == "index_leverage"
        assert by_id["inc0"].failing_rule == "incubation"
        assert by_id["short0"].failing_rule == "min_history"

        cfg = ScreenConfig()
        for fund in funds:
            outcome = by_id[fund.fund_id]
            # independent per-rule evaluation via the oracle solver
            if not (fund.aum >= cfg.incubation_threshold_aum).any():
                assert outcome.failing_rule == "incubation"
                continue
            start = int(np.flatnonzero(fund.aum >= cfg.incubation_threshold_aum)[0])
            trimmed = FundSeries(fund.fund_id, fund.months[start:], fund.net_returns[start:], fund.aum[start:])
            if trimmed.n_obs < cfg.min_history_months:
                assert outcome.failing_rule == "min_history"
                continue
            mm = oracle_two_column(trimmed, panel, trimmed.net_returns, panel.rf)
            t_rf = math.inf if mm.degenerate else abs(mm.tstats[1])
            if not t_rf < cfg.rf_tstat_max:
                assert outcome.failing_rule == "money_market"
                continue
            rows = np.array([panel.row_of(m) for m in trimmed.months])
            capm = oracle_two_column(trimmed, panel, trimmed.net_returns - panel.rf[rows], panel.mkt_rf)
            beta, t_b = capm.betas[0], (math.inf if capm.degenerate else abs(capm.tstats[1]))
            dev = abs(abs(beta) - 1.0)
            ok = (dev > cfg.index_beta_band or t_b < cfg.index_tstat_max) and (
                abs(beta) - 1.0 < cfg.leverage_beta_max_excess and t_b > cfg.market_tstat_min
            )
            assert outcome.admitted == bool(ok)

    def test_fund_outside_panel_becomes_outcome(self):
        panel = make_panel(30)
        stray_months = months_from(2015, 30)
        fund = FundSeries("stray", stray_months, np.full(30, 0.01), np.full(30, 3.0))
        cfg = ScreenConfig(min_history_months=0)
        (outcome,) = run_screen([fund], panel, cfg)
        assert not outcome.admitted
        assert outcome.failing_rule == "alignment"

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ScreenConfig(incubation_threshold_aum=0.0)
        with pytest.raises(ValueError):
            ScreenConfig(size_cutoffs=(5.0, 5.0))
        with pytest.raises(ValueError):
            ScreenConfig(min_history_months=-1)

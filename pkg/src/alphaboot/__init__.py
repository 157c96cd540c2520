"""Mutual-fund alpha cross-sections: screening, batched factor regressions,
zero-alpha bootstrap simulation, and percentile/CDF reporting."""

from .panel import (
    MODEL_FACTORS,
    AlignedSample,
    AlignmentError,
    FactorPanel,
    FactorUnavailableError,
    FundSeries,
    MonthId,
    PanelFormatError,
    align,
    ingest_factor_panel,
    ingest_funds,
    write_factor_csv,
    write_funds_csv,
)
from .regress import (
    BatchDesignCache,
    DegenerateFitError,
    DesignOperator,
    InsufficientObservationsError,
    RegressionError,
    RegressionResult,
    SingularDesignError,
    batch_fit,
    ols_fit,
    tstat_of_alpha,
)
from .report import (
    assemble_group,
    build_coefficient_summary,
    build_percentile_report,
    emit_cdf,
    percentile,
)
from .screen import (
    FundRejected,
    RuleDecision,
    ScreenConfig,
    ScreenOutcome,
    assign_size_groups,
    run_screen,
    screen_index_leverage,
    screen_min_history,
    screen_money_market,
    size_group_label,
    trim_incubation,
)
from .boot import (
    SimConfig,
    SimulationOutput,
    TStatCrossSection,
    draw_months,
    mix_run_seed,
    run_simulation,
    zero_alpha_adjust,
)
from .synth import SynthConfig, TruthRecord, generate_universe, oracle_fit

__version__ = "0.1.0"

"""Synthetic fund universes with known ground truth, plus a brute-force OLS oracle.

Every pipeline stage is verified against universes generated here: factor
draws are Gaussian, fund returns follow rf + alpha + X.beta + noise, and the
archetype funds are constructed to deterministically trip the screen that
targets them.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import IO, Mapping, Sequence, Union

import numpy as np

from .panel import MODEL_FACTORS, AlignedSample, FactorPanel, FundSeries, MonthId
from .regress import (
    InsufficientObservationsError,
    RegressionResult,
    SingularDesignError,
    _DEGENERATE_REL,
)

__all__ = ["SynthConfig", "TruthRecord", "generate_universe", "oracle_fit", "write_truth_csv"]

ARCHETYPES = ("active", "index", "money_market", "leveraged", "incubating")

_DEFAULT_MEANS = {
    "mkt_rf": 0.005, "smb": 0.001, "hml": 0.002, "mom": 0.004,
    "rmw": 0.002, "cma": 0.002, "rf": 0.002,
}
_DEFAULT_VOLS = {
    "mkt_rf": 0.045, "smb": 0.030, "hml": 0.030, "mom": 0.040,
    "rmw": 0.020, "cma": 0.020, "rf": 0.0005,
}


@dataclass(frozen=True)
class SynthConfig:
    """Pinned parameters for one synthetic universe; fully determined by seed."""

    n_months: int = 240
    n_funds: int = 50
    seed: int = 0
    model: str = "ff5"
    start_month: MonthId = MonthId(1990, 1)
    factor_means: Mapping[str, float] = field(default_factory=lambda: dict(_DEFAULT_MEANS))
    factor_vols: Mapping[str, float] = field(default_factory=lambda: dict(_DEFAULT_VOLS))
    # identity correlation keeps the oracles simple; hook for experiments
    factor_correlation: np.ndarray | None = None
    archetype_mix: Mapping[str, float] = field(default_factory=lambda: {"active": 1.0})
    true_alpha: float = 0.0
    alpha_overrides: Mapping[int, float] = field(default_factory=dict)
    idio_vol: float = 0.02
    tracker_idio_vol: float = 1e-6
    # default sits well past the screen's 5.0 excess-beta bound so the
    # estimated beta cannot fall back inside it
    leveraged_beta: float = 7.0
    # log-space AuM start spread puts funds across the size cutoffs
    aum_log_mean: float = math.log(60.0)
    aum_log_sigma: float = 1.8
    # month at which incubating funds first cross the AuM threshold; None = never
    incubation_breakout_month: int | None = None

    def __post_init__(self) -> None:
        if self.n_months < 1 or self.n_funds < 0:
            raise ValueError("n_months and n_funds must be positive")
        if self.model not in MODEL_FACTORS:
            raise ValueError(f"unknown model {self.model!r}")
        total = sum(self.archetype_mix.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"archetype fractions must sum to 1, got {total}")
        for name in self.archetype_mix:
            if name not in ARCHETYPES:
                raise ValueError(f"unknown archetype {name!r}")
        if self.idio_vol < 0 or self.tracker_idio_vol < 0:
            raise ValueError("volatilities must be >= 0")


@dataclass(frozen=True)
class TruthRecord:
    fund_id: str
    archetype: str
    alpha: float
    betas: dict[str, float]
    idio_vol: float


def _archetype_counts(cfg: SynthConfig) -> list[str]:
    # largest-remainder apportionment keeps counts deterministic
    fractions = [(name, cfg.archetype_mix.get(name, 0.0)) for name in ARCHETYPES]
    counts = {name: int(frac * cfg.n_funds) for name, frac in fractions}
    remainders = sorted(
        ((frac * cfg.n_funds - counts[name], name) for name, frac in fractions),
        key=lambda t: (-t[0], ARCHETYPES.index(t[1])),
    )
    short = cfg.n_funds - sum(counts.values())
    for _, name in remainders[:short]:
        counts[name] += 1
    labels: list[str] = []
    for name in ARCHETYPES:
        labels.extend([name] * counts[name])
    return labels


def _draw_factors(cfg: SynthConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    names = ["mkt_rf", "smb", "hml", "mom", "rmw", "cma"]
    means = np.array([cfg.factor_means[n] for n in names])
    vols = np.array([cfg.factor_vols[n] for n in names])
    shocks = rng.standard_normal((cfg.n_months, len(names)))
    if cfg.factor_correlation is not None:
        chol = np.linalg.cholesky(np.asarray(cfg.factor_correlation, dtype=np.float64))
        shocks = shocks @ chol.T
    data = means + shocks * vols
    columns = {name: data[:, j] for j, name in enumerate(names)}
    columns["rf"] = cfg.factor_means["rf"] + cfg.factor_vols["rf"] * rng.standard_normal(cfg.n_months)
    return columns


def _active_market_beta(rng: np.random.Generator) -> float:
    # keep true betas several standard errors clear of the index screen's
    # 0.05 band around |beta| = 1 so estimated betas never straddle it
    lo, hi, gap = 0.70, 1.30, 0.15
    width = (hi - lo) - 2 * gap
    u = rng.uniform(0.0, width)
    beta = lo + u
    if beta > 1.0 - gap:
        beta += 2 * gap
    return float(beta)


def generate_universe(cfg: SynthConfig) -> tuple[FactorPanel, list[FundSeries], list[TruthRecord]]:
    """Build (panel, funds, truth) deterministically from cfg.seed.

    The panel always carries all six factor columns so any model can be fit
    against it. Non-incubating funds start above the 2.5M AuM threshold.
    """
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    columns = _draw_factors(cfg, rng)

    months = [cfg.start_month]
    for _ in range(cfg.n_months - 1):
        months.append(months[-1].next())
    panel = FactorPanel(
        months=tuple(months),
        mkt_rf=columns["mkt_rf"],
        smb=columns["smb"],
        hml=columns["hml"],
        rf=columns["rf"],
        mom=columns["mom"],
        rmw=columns["rmw"],
        cma=columns["cma"],
    )

    factor_names = MODEL_FACTORS[cfg.model]
    factor_matrix = np.column_stack([columns[f] for f in factor_names])
    width = len(str(max(cfg.n_funds - 1, 0)))

    funds: list[FundSeries] = []
    truths: list[TruthRecord] = []
    for i, archetype in enumerate(_archetype_counts(cfg)):
        fund_id = f"F{i:0{width}d}"
        alpha = float(cfg.alpha_overrides.get(i, cfg.true_alpha))
        betas = dict.fromkeys(factor_names, 0.0)
        if archetype == "active" or archetype == "incubating":
            betas["mkt_rf"] = _active_market_beta(rng)
            for name in factor_names[1:]:
                betas[name] = float(rng.uniform(-0.3, 0.3))
            idio = cfg.idio_vol
        elif archetype == "index":
            betas["mkt_rf"] = 1.0
            alpha = 0.0
            idio = cfg.tracker_idio_vol
        elif archetype == "money_market":
            alpha = 0.0
            idio = cfg.tracker_idio_vol
        else:  # leveraged
            betas["mkt_rf"] = cfg.leveraged_beta
            idio = cfg.idio_vol

        beta_vec = np.array([betas[f] for f in factor_names])
        noise = idio * rng.standard_normal(cfg.n_months)
        net = columns["rf"] + alpha + factor_matrix @ beta_vec + noise

        if archetype == "incubating":
            aum = rng.uniform(0.5, 2.4, size=cfg.n_months)
            if cfg.incubation_breakout_month is not None:
                b = cfg.incubation_breakout_month
                aum[b:] = 5.0 * math.exp(rng.normal(0.0, 0.5)) + rng.uniform(0.0, 1.0, size=max(cfg.n_months - b, 0))
        else:
            start = max(3.0, float(np.exp(rng.normal(cfg.aum_log_mean, cfg.aum_log_sigma))))
            drift = np.cumprod(1.0 + rng.normal(0.003, 0.01, size=cfg.n_months))
            aum = np.maximum(start * drift, 3.0)

        funds.append(FundSeries(fund_id=fund_id, months=tuple(months), net_returns=net, aum=aum))
        truths.append(TruthRecord(fund_id=fund_id, archetype=archetype, alpha=alpha, betas=betas, idio_vol=idio))
    return panel, funds, truths


def oracle_fit(sample: AlignedSample) -> RegressionResult:
    """Reference OLS: explicit normal equations, long-form Gauss-Jordan inverse.

    Deliberately naive and independent of the production kernel; exists to
    cross-check it. Raises the same error classes.
    """
    X = [[float(v) for v in row] for row in sample.X]
    y = [float(v) for v in sample.y]
    n = len(y)
    p = len(X[0]) if X else 0
    if n < p + 1:
        raise InsufficientObservationsError(
            f"insufficient observations: n={n}, need at least {p + 1} for {p} coefficients"
        )

    gram = [[sum(X[t][i] * X[t][j] for t in range(n)) for j in range(p)] for i in range(p)]
    rhs = [sum(X[t][i] * y[t] for t in range(n)) for i in range(p)]

    # Gauss-Jordan with partial pivoting on [gram | identity]
    scale = max(abs(gram[i][j]) for i in range(p) for j in range(p))
    aug = [gram[i][:] + [1.0 if i == j else 0.0 for j in range(p)] for i in range(p)]
    for col in range(p):
        pivot_row = max(range(col, p), key=lambda r: abs(aug[r][col]))
        pivot = aug[pivot_row][col]
        if abs(pivot) <= scale * 1e-13:
            raise SingularDesignError("singular design (zero pivot in normal equations)")
        aug[col], aug[pivot_row] = aug[pivot_row], aug[col]
        inv_pivot = 1.0 / pivot
        aug[col] = [v * inv_pivot for v in aug[col]]
        for r in range(p):
            if r == col:
                continue
            factor = aug[r][col]
            if factor != 0.0:
                aug[r] = [a - factor * b for a, b in zip(aug[r], aug[col])]
    inv = [row[p:] for row in aug]

    coef = [sum(inv[i][j] * rhs[j] for j in range(p)) for i in range(p)]
    fitted = [sum(X[t][j] * coef[j] for j in range(p)) for t in range(n)]
    residuals = [y[t] - fitted[t] for t in range(n)]
    ssr = sum(r * r for r in residuals)
    yy = sum(v * v for v in y)
    degenerate = ssr <= yy * _DEGENERATE_REL
    dof = n - p
    sigma2 = ssr / dof
    se = [math.sqrt(max(sigma2 * inv[j][j], 0.0)) for j in range(p)]
    tstats = [
        math.nan if degenerate else (coef[j] / se[j] if se[j] > 0 else math.nan)
        for j in range(p)
    ]
    return RegressionResult(
        alpha=coef[0],
        betas=np.array(coef[1:]),
        se=np.array(se),
        tstats=np.array(tstats),
        sigma2=sigma2,
        residuals=np.array(residuals),
        n_obs=n,
        dof=dof,
        degenerate=degenerate,
        factor_names=sample.factor_names,
    )


def write_truth_csv(
    truths: Sequence[TruthRecord],
    model: str,
    dest: Union[str, os.PathLike, IO[str]],
) -> None:
    factor_names = MODEL_FACTORS[model]
    own = isinstance(dest, (str, os.PathLike))
    out = open(dest, "w", encoding="utf-8", newline="") if own else dest
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["fund_id", "archetype", "true_alpha", *(f"beta_{f}" for f in factor_names), "idio_vol"])
        for t in truths:
            writer.writerow(
                [t.fund_id, t.archetype, repr(t.alpha), *(repr(t.betas.get(f, 0.0)) for f in factor_names), repr(t.idio_vol)]
            )
    finally:
        if own:
            out.close()

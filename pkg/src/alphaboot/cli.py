"""Command-line interface: filter, fit, simulate, report, synth.

Every subcommand accepts --config pointing at a key=value file (keys are the
flag names with dashes or underscores); explicit command-line flags override
file values. Exit codes: 0 success, 2 bad usage or configuration, 1 runtime
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import Sequence

from .boot import SimConfig, run_simulation
from .panel import FactorUnavailableError, MODEL_FACTORS, align, ingest_factor_panel, ingest_funds, write_factor_csv, write_funds_csv
from .regress import batch_fit
from .report import (
    assemble_group,
    build_coefficient_summary,
    build_percentile_report,
    emit_cdf,
    format_percentile_table,
    write_coefficient_csv,
    write_percentile_csv,
    write_report_sidecar,
)
from .screen import ScreenConfig, run_screen, size_group_label, write_screen_csv
from .synth import SynthConfig, generate_universe, write_truth_csv

__all__ = ["main", "entrypoint"]


class _ConfigError(Exception):
    """User-facing configuration problem; maps to exit code 2."""


def _screen_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--incubation-aum", type=float, default=2.5, help="AuM (millions) ending incubation")
    sub.add_argument("--rf-tstat-max", type=float, default=8.0, help="money-market screen |t(rf)| bound ('inf' disables)")
    sub.add_argument("--index-beta-band", type=float, default=0.05, help="index screen |beta|-1 band")
    sub.add_argument("--index-tstat-max", type=float, default=8.0, help="index screen |t(beta)| bound")
    sub.add_argument("--leverage-beta-max", type=float, default=5.0, help="leverage screen |beta|-1 bound")
    sub.add_argument("--market-tstat-min", type=float, default=1.95, help="minimum market |t(beta)|")
    sub.add_argument("--min-history", type=int, default=24, help="minimum observation count")
    sub.add_argument("--size-cutoffs", default="5,250,1000", help="comma-separated AuM cutoffs in millions")


def _sim_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--model", choices=sorted(MODEL_FACTORS), default="ff5")
    sub.add_argument("--sims", type=int, default=10_000, help="number of bootstrap runs")
    sub.add_argument("--seed", type=int, default=0, help="base seed; runs derive child seeds from it")
    sub.add_argument("--min-resampled-obs", type=int, default=12)
    sub.add_argument("--group", default="5m", help="size group label, e.g. 5m / 250m / 1b")
    sub.add_argument("--threads", type=int, default=1, help="worker threads; output is identical for any value")
    sub.add_argument("--pooled-cap", type=int, default=None, help="optional cap on stored pooled t values")


def _io_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--factors", required=True, help="factor CSV path")
    sub.add_argument("--funds", required=True, help="fund CSV path")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="alphaboot",
        description="Screen mutual funds, fit factor models, bootstrap zero-alpha t(alpha) cross-sections.",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    subs: dict[str, argparse.ArgumentParser] = {}

    sub = commands.add_parser("filter", help="run the screening pipeline, write the audit CSV")
    _io_flags(sub)
    _screen_flags(sub)
    sub.add_argument("--output", required=True, help="audit CSV path")
    sub.set_defaults(func=_cmd_filter)
    subs["filter"] = sub

    sub = commands.add_parser("fit", help="fit every fund under one model, write coefficients")
    _io_flags(sub)
    sub.add_argument("--model", choices=sorted(MODEL_FACTORS), default="ff5")
    sub.add_argument("--output", required=True, help="coefficient CSV path")
    sub.set_defaults(func=_cmd_fit)
    subs["fit"] = sub

    sub = commands.add_parser("simulate", help="bootstrap one size group, write line-oriented artifacts")
    _io_flags(sub)
    _screen_flags(sub)
    _sim_flags(sub)
    sub.add_argument("--outdir", required=True)
    sub.set_defaults(func=_cmd_simulate)
    subs["simulate"] = sub

    sub = commands.add_parser("report", help="filter, fit, simulate and emit percentile/CDF tables")
    _io_flags(sub)
    _screen_flags(sub)
    _sim_flags(sub)
    sub.add_argument("--pct-below-mode", choices=["pooled", "per-run"], default="pooled")
    sub.add_argument("--period-label", default=None, help="defaults to the panel's month range")
    sub.add_argument("--outdir", required=True)
    sub.set_defaults(func=_cmd_report)
    subs["report"] = sub

    sub = commands.add_parser("synth", help="generate a synthetic universe with known truth")
    sub.add_argument("--months", type=int, default=240)
    sub.add_argument("--funds", type=int, default=50)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--model", choices=sorted(MODEL_FACTORS), default="ff5")
    sub.add_argument("--alpha", type=float, default=0.0, help="true monthly alpha for active funds")
    sub.add_argument("--mix", default="active=1.0", help="archetype fractions, e.g. active=0.6,index=0.2,leveraged=0.2")
    sub.add_argument("--breakout-month", type=int, default=None, help="month incubating funds cross the AuM threshold")
    sub.add_argument("--outdir", required=True)
    sub.set_defaults(func=_cmd_synth)
    subs["synth"] = sub

    for name, sub in subs.items():
        sub.add_argument("--config", default=None, help="key=value file; flags override file values")
    return parser, subs


def load_config_file(path: str) -> dict[str, str]:
    """Parse a flat key=value config file (# comments, optional quotes)."""
    p = Path(path)
    if not p.is_file():
        raise _ConfigError(f"config file not found: {path}")
    values: dict[str, str] = {}
    for lineno, raw in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise _ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        value = value.strip()
        if len(value) >= 2 and value[0] == value[-1] and value[0] in "'\"":
            value = value[1:-1]
        values[key.strip().replace("-", "_")] = value
    return values


def _apply_config_defaults(sub: argparse.ArgumentParser, path: str, command: str) -> None:
    values = load_config_file(path)
    actions = {a.dest: a for a in sub._actions}
    for key, raw in values.items():
        action = actions.get(key)
        if action is None or key in ("help", "config", "func", "command"):
            raise _ConfigError(f"unknown config key {key!r} for subcommand {command}")
        try:
            action.default = action.type(raw) if action.type else raw
        except ValueError:
            raise _ConfigError(f"bad value for config key {key!r}: {raw!r}") from None
        action.required = False
        if action.choices is not None and action.default not in action.choices:
            raise _ConfigError(f"bad value for config key {key!r}: {raw!r} (choose from {sorted(action.choices)})")


def _require_file(path: str, what: str) -> str:
    if not Path(path).is_file():
        raise _ConfigError(f"{what} file not found: {path}")
    return path


def _build_screen_config(args: argparse.Namespace) -> ScreenConfig:
    try:
        cutoffs = tuple(float(c) for c in str(args.size_cutoffs).split(",") if c.strip())
        return ScreenConfig(
            incubation_threshold_aum=args.incubation_aum,
            rf_tstat_max=args.rf_tstat_max,
            index_beta_band=args.index_beta_band,
            index_tstat_max=args.index_tstat_max,
            leverage_beta_max_excess=args.leverage_beta_max,
            market_tstat_min=args.market_tstat_min,
            min_history_months=args.min_history,
            size_cutoffs=cutoffs,
        )
    except ValueError as err:
        raise _ConfigError(str(err)) from None


def _build_sim_config(args: argparse.Namespace) -> SimConfig:
    try:
        return SimConfig(
            n_sims=args.sims,
            base_seed=args.seed,
            min_resampled_obs=args.min_resampled_obs,
            model=args.model,
            pooled_cap=args.pooled_cap,
        )
    except ValueError as err:
        raise _ConfigError(str(err)) from None


def _resolve_group(label: str, cfg: ScreenConfig) -> str:
    known = {size_group_label(c).lower(): size_group_label(c) for c in cfg.size_cutoffs}
    resolved = known.get(label.strip().lower())
    if resolved is None:
        raise _ConfigError(f"unknown size group {label!r}, expected one of {sorted(known.values())}")
    return resolved


def _load_inputs(args: argparse.Namespace):
    panel = ingest_factor_panel(_require_file(args.factors, "factor"))
    funds = ingest_funds(_require_file(args.funds, "fund"))
    return panel, funds


def _cmd_filter(args: argparse.Namespace) -> int:
    panel, funds = _load_inputs(args)
    cfg = _build_screen_config(args)
    outcomes = run_screen(funds, panel, cfg)
    write_screen_csv(outcomes, args.output)
    admitted = sum(o.admitted for o in outcomes)
    print(f"screened {len(outcomes)} funds, admitted {admitted} -> {args.output}")
    return 0


def _cmd_fit(args: argparse.Namespace) -> int:
    panel, funds = _load_inputs(args)
    factor_names = panel.check_model(args.model)
    samples, errors = [], {}
    for fund in funds:
        try:
            samples.append(align(fund, panel, args.model))
        except ValueError as err:
            errors[fund.fund_id] = str(err)
    slots = dict(zip((s.fund_id for s in samples), batch_fit(samples)))

    with open(args.output, "w", encoding="utf-8", newline="") as out:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(
            ["fund_id", "n_obs", "status", "alpha", "t_alpha",
             *(f"beta_{f}" for f in factor_names), *(f"t_{f}" for f in factor_names), "sigma2"]
        )
        for fund in funds:
            slot = slots.get(fund.fund_id)
            if fund.fund_id in errors or isinstance(slot, Exception):
                message = errors.get(fund.fund_id) or str(slot)
                writer.writerow([fund.fund_id, fund.n_obs, message] + [""] * (2 * len(factor_names) + 3))
                continue
            writer.writerow(
                [fund.fund_id, slot.n_obs, "degenerate" if slot.degenerate else "ok",
                 repr(slot.alpha), repr(float(slot.tstats[0])),
                 *(repr(float(b)) for b in slot.betas),
                 *(repr(float(t)) for t in slot.tstats[1:]),
                 repr(slot.sigma2)]
            )
    print(f"fit {len(funds)} funds under {args.model} -> {args.output}")
    return 0


def _simulate(args: argparse.Namespace):
    panel, funds = _load_inputs(args)
    screen_cfg = _build_screen_config(args)
    sim_cfg = _build_sim_config(args)
    group_label = _resolve_group(args.group, screen_cfg)
    panel.check_model(args.model)
    data = assemble_group(panel, funds, screen_cfg, args.model, group_label)
    if not data.samples:
        raise RuntimeError(f"no admitted funds with valid fits in group {group_label}")
    output = run_simulation(list(zip(data.samples, data.fits)), panel, sim_cfg, threads=max(args.threads, 1))
    return panel, data, output


def _write_simulation_artifacts(outdir: Path, data, output, period_label: str) -> None:
    with open(outdir / "actual_tstats.csv", "w", encoding="utf-8", newline="") as out:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["fund_id", "t_alpha"])
        for sample, fit in zip(data.samples, data.fits):
            writer.writerow([sample.fund_id, repr(float(fit.tstats[0]))])
    grid = output.pct_grid
    with open(outdir / "per_run_percentiles.csv", "w", encoding="utf-8", newline="") as out:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["run", *(f"p{g:g}" for g in grid)])
        for r in range(output.per_run_percentiles.shape[0]):
            writer.writerow([r, *(repr(float(v)) for v in output.per_run_percentiles[r])])
    meta = {
        "group": data.group_label,
        "model": output.config.model,
        "period": period_label,
        "fund_count": output.actual.fund_count,
        "seed": output.config.base_seed,
        "n_sims": output.config.n_sims,
        "min_resampled_obs": output.config.min_resampled_obs,
        "empty_run_count": output.empty_run_count,
        "dropped_fits": data.dropped,
        "pct_grid": list(grid),
    }
    with open(outdir / "meta.json", "w", encoding="utf-8") as out:
        json.dump(meta, out, indent=2, sort_keys=True)
        out.write("\n")


def _period_label(args: argparse.Namespace, panel) -> str:
    label = getattr(args, "period_label", None)
    return label if label else f"{panel.months[0]}-{panel.months[-1]}"


def _cmd_simulate(args: argparse.Namespace) -> int:
    panel, data, output = _simulate(args)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    _write_simulation_artifacts(outdir, data, output, _period_label(args, panel))
    print(
        f"simulated {output.config.n_sims} runs over {output.actual.fund_count} funds "
        f"({data.group_label}, {output.config.model}) -> {outdir}"
    )
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    panel, data, output = _simulate(args)
    period = _period_label(args, panel)
    rep = build_percentile_report(
        output, group_label=data.group_label, period_label=period, pct_below_mode=args.pct_below_mode
    )
    summary = build_coefficient_summary(data.fits, group_label=data.group_label)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    stem = f"{output.config.model}_{data.group_label.lower()}"
    write_percentile_csv(rep, outdir / f"table_{stem}.csv")
    write_report_sidecar(rep, outdir / f"table_{stem}.json")
    emit_cdf(output.actual, output.pooled_sim, outdir / f"cdf_{stem}.csv")
    write_coefficient_csv(summary, outdir / f"coefficients_{stem}.csv")
    sys.stdout.write(format_percentile_table(rep))
    return 0


def _cmd_synth(args: argparse.Namespace) -> int:
    mix: dict[str, float] = {}
    for part in str(args.mix).split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise _ConfigError(f"bad --mix entry {part!r}, expected name=fraction")
        name, frac = part.split("=", 1)
        try:
            mix[name.strip()] = float(frac)
        except ValueError:
            raise _ConfigError(f"bad --mix fraction {frac!r}") from None
    try:
        cfg = SynthConfig(
            n_months=args.months,
            n_funds=args.funds,
            seed=args.seed,
            model=args.model,
            true_alpha=args.alpha,
            archetype_mix=mix,
            incubation_breakout_month=args.breakout_month,
        )
    except ValueError as err:
        raise _ConfigError(str(err)) from None
    panel, funds, truths = generate_universe(cfg)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    write_factor_csv(panel, outdir / "factors.csv")
    write_funds_csv(funds, outdir / "funds.csv")
    write_truth_csv(truths, cfg.model, outdir / "truth.csv")
    print(f"generated {cfg.n_funds} funds x {cfg.n_months} months (seed {cfg.seed}) -> {outdir}")
    return 0


def _scan_config_flag(argv: Sequence[str]) -> str | None:
    for i, token in enumerate(argv):
        if token == "--config":
            return argv[i + 1] if i + 1 < len(argv) else None
        if token.startswith("--config="):
            return token.split("=", 1)[1]
    return None


def main(argv: Sequence[str] | None = None) -> int:
    parser, subs = build_parser()
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    try:
        # config defaults must land before parsing so they can satisfy
        # required flags; explicit flags still override them
        command = argv[0] if argv and not argv[0].startswith("-") else None
        if command in subs:
            config_path = _scan_config_flag(argv[1:])
            if config_path:
                _apply_config_defaults(subs[command], config_path, command)
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    except _ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (_ConfigError, FactorUnavailableError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # runtime failure
        print(f"error: {err}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()

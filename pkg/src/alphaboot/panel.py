"""Month-indexed factor panels, fund return series, and fund/panel alignment.

Returns are monthly decimals throughout (0.01 = 1%). Percent formatting is a
report-time concern only.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass
from typing import IO, Iterable, Union

import numpy as np

__all__ = [
    "MODEL_FACTORS",
    "MonthId",
    "FactorPanel",
    "FundSeries",
    "AlignedSample",
    "PanelFormatError",
    "AlignmentError",
    "FactorUnavailableError",
    "ingest_factor_panel",
    "ingest_funds",
    "align",
    "write_factor_csv",
    "write_funds_csv",
]

# Design-matrix column order per model, after the leading intercept column.
MODEL_FACTORS: dict[str, tuple[str, ...]] = {
    "capm": ("mkt_rf",),
    "ff3": ("mkt_rf", "smb", "hml"),
    "carhart4": ("mkt_rf", "smb", "hml", "mom"),
    "ff5": ("mkt_rf", "smb", "hml", "rmw", "cma"),
}

_FACTOR_ORDER = ("mkt_rf", "smb", "hml", "mom", "rmw", "cma")
_MANDATORY = ("mkt_rf", "smb", "hml", "rf")

Source = Union[str, os.PathLike, bytes, IO]


class PanelFormatError(ValueError):
    """Malformed factor or fund CSV input."""


class AlignmentError(ValueError):
    """A fund observation month is not covered by the factor panel."""


class FactorUnavailableError(ValueError):
    """A model requires a factor column the panel does not carry."""


@dataclass(frozen=True, order=True)
class MonthId:
    """Calendar month, totally ordered by (year, month)."""

    year: int
    month: int

    def __post_init__(self) -> None:
        if not 1 <= self.month <= 12:
            raise ValueError(f"month must be in 1..12, got {self.month}")

    @classmethod
    def from_yyyymm(cls, text: str) -> "MonthId":
        text = text.strip()
        if len(text) != 6 or not text.isdigit():
            raise PanelFormatError(f"invalid date {text!r}, expected YYYYMM")
        year, month = int(text[:4]), int(text[4:6])
        if not 1 <= month <= 12:
            raise PanelFormatError(f"invalid date {text!r}, month out of range")
        return cls(year, month)

    @property
    def index(self) -> int:
        """Months since 0000-01; consecutive months differ by exactly 1."""
        return self.year * 12 + self.month - 1

    def next(self) -> "MonthId":
        if self.month == 12:
            return MonthId(self.year + 1, 1)
        return MonthId(self.year, self.month + 1)

    def __str__(self) -> str:
        return f"{self.year:04d}{self.month:02d}"


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.asarray(arr, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class FactorPanel:
    """Gap-free monthly factor returns plus the risk-free rate.

    mom/rmw/cma may be individually absent (None); requesting a model that
    needs an absent column raises FactorUnavailableError.
    """

    months: tuple[MonthId, ...]
    mkt_rf: np.ndarray
    smb: np.ndarray
    hml: np.ndarray
    rf: np.ndarray
    mom: np.ndarray | None = None
    rmw: np.ndarray | None = None
    cma: np.ndarray | None = None

    def __post_init__(self) -> None:
        if not self.months:
            raise ValueError("panel must contain at least one month")
        for prev, cur in zip(self.months, self.months[1:]):
            if cur.index != prev.index + 1:
                raise ValueError(f"months must be consecutive, break after {prev}")
        n = len(self.months)
        for name in _FACTOR_ORDER + ("rf",):
            col = getattr(self, name)
            if col is None:
                continue
            col = _freeze(col)
            if col.shape != (n,):
                raise ValueError(f"column {name} has length {col.shape}, expected {n}")
            object.__setattr__(self, name, col)
        object.__setattr__(self, "_row", {m: i for i, m in enumerate(self.months)})

    @property
    def n_months(self) -> int:
        return len(self.months)

    def has_factor(self, name: str) -> bool:
        return getattr(self, name, None) is not None

    def column(self, name: str) -> np.ndarray:
        col = getattr(self, name, None)
        if col is None:
            raise FactorUnavailableError(f"factor {name.upper()} unavailable")
        return col

    def row_of(self, month: MonthId) -> int:
        try:
            return self._row[month]  # type: ignore[attr-defined]
        except KeyError:
            raise AlignmentError(f"month {month} not covered by the factor panel") from None

    def check_model(self, model: str) -> tuple[str, ...]:
        """Validate a model identifier against the available columns."""
        try:
            factors = MODEL_FACTORS[model]
        except KeyError:
            raise ValueError(f"unknown model {model!r}, expected one of {sorted(MODEL_FACTORS)}") from None
        for name in factors:
            if not self.has_factor(name):
                raise FactorUnavailableError(f"factor {name.upper()} unavailable")
        return factors

    def design_matrix(self, model: str) -> np.ndarray:
        """Full-panel design matrix: leading intercept column, then the model's factors."""
        factors = self.check_model(model)
        cols = [np.ones(self.n_months)] + [self.column(f) for f in factors]
        return np.column_stack(cols)


@dataclass(frozen=True, eq=False)
class FundSeries:
    """A fund's net monthly returns and AuM history; months may have gaps."""

    fund_id: str
    months: tuple[MonthId, ...]
    net_returns: np.ndarray
    aum: np.ndarray  # millions; NaN where unreported

    def __post_init__(self) -> None:
        for prev, cur in zip(self.months, self.months[1:]):
            if cur <= prev:
                raise ValueError(f"fund {self.fund_id}: months must be strictly increasing")
        n = len(self.months)
        for name in ("net_returns", "aum"):
            col = _freeze(getattr(self, name))
            if col.shape != (n,):
                raise ValueError(f"fund {self.fund_id}: {name} has length {col.shape}, expected {n}")
            object.__setattr__(self, name, col)

    @property
    def n_obs(self) -> int:
        return len(self.months)

    def last_aum(self) -> float | None:
        """Last reported AuM, or None if the fund never reported one."""
        reported = np.flatnonzero(~np.isnan(self.aum))
        if reported.size == 0:
            return None
        return float(self.aum[reported[-1]])

    def tail_from(self, start: int) -> "FundSeries":
        """The suffix of the series starting at observation index `start`."""
        return FundSeries(
            fund_id=self.fund_id,
            months=self.months[start:],
            net_returns=self.net_returns[start:],
            aum=self.aum[start:],
        )


@dataclass(frozen=True, eq=False)
class AlignedSample:
    """A fund joined to the panel under one model: excess returns y and design X.

    X carries a leading column of ones (the intercept slot); panel_rows maps
    each sample row back to its row in the panel.
    """

    fund_id: str
    model: str
    months: tuple[MonthId, ...]
    y: np.ndarray
    X: np.ndarray
    factor_names: tuple[str, ...]
    panel_rows: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "y", _freeze(self.y))
        X = np.asarray(self.X, dtype=np.float64)
        X.setflags(write=False)
        object.__setattr__(self, "X", X)
        rows = np.asarray(self.panel_rows, dtype=np.intp)
        rows.setflags(write=False)
        object.__setattr__(self, "panel_rows", rows)
        if not (len(self.months) == self.y.shape[0] == self.X.shape[0] == rows.shape[0]):
            raise ValueError("aligned sample rows out of sync")

    @property
    def n_obs(self) -> int:
        return self.y.shape[0]


def _text_stream(source: Source) -> Iterable[str]:
    if isinstance(source, bytes):
        return io.StringIO(source.decode("utf-8"))
    if isinstance(source, (str, os.PathLike)):
        return open(source, "r", encoding="utf-8", newline="")
    raw = source.read()
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8")
    return io.StringIO(raw)


def _parse_cell(text: str, what: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise PanelFormatError(f"non-numeric {what}: {text!r}") from None


def ingest_factor_panel(source: Source) -> FactorPanel:
    """Read a factor CSV into a validated FactorPanel.

    Header: date,MKT_RF,SMB,HML[,MOM][,RMW][,CMA],RF -- column order after
    `date` is free, names matched case-insensitively. Rows may arrive in any
    order; the panel is sorted and must be gap-free.
    """
    stream = _text_stream(source)
    try:
        reader = csv.reader(stream)
        try:
            header = next(reader)
        except StopIteration:
            raise PanelFormatError("empty factor CSV") from None
        names = [h.strip().lower() for h in header]
        if not names or names[0] != "date":
            raise PanelFormatError("factor CSV must start with a 'date' column")
        positions: dict[str, int] = {}
        for i, name in enumerate(names[1:], start=1):
            if name in positions:
                raise PanelFormatError(f"duplicate column {name.upper()}")
            positions[name] = i
        for name in _MANDATORY:
            if name not in positions:
                raise PanelFormatError(f"missing mandatory column {name.upper()}")
        present = [f for f in _FACTOR_ORDER + ("rf",) if f in positions]

        rows: list[tuple[MonthId, list[float]]] = []
        for line in reader:
            if not line or all(not c.strip() for c in line):
                continue
            if len(line) != len(names):
                raise PanelFormatError(f"row has {len(line)} cells, expected {len(names)}")
            month = MonthId.from_yyyymm(line[0])
            values = [_parse_cell(line[positions[f]], f"{f.upper()} at {month}") for f in present]
            rows.append((month, values))
    finally:
        if hasattr(stream, "close"):
            stream.close()

    if not rows:
        raise PanelFormatError("factor CSV contains no data rows")
    rows.sort(key=lambda r: r[0])
    for (prev, _), (cur, _) in zip(rows, rows[1:]):
        if cur == prev:
            raise PanelFormatError(f"duplicate month {cur}")
        if cur.index != prev.index + 1:
            raise PanelFormatError(f"month gap at {prev.next()}")

    months = tuple(m for m, _ in rows)
    data = np.array([v for _, v in rows], dtype=np.float64)
    columns = {name: data[:, j] for j, name in enumerate(present)}
    return FactorPanel(
        months=months,
        mkt_rf=columns["mkt_rf"],
        smb=columns["smb"],
        hml=columns["hml"],
        rf=columns["rf"],
        mom=columns.get("mom"),
        rmw=columns.get("rmw"),
        cma=columns.get("cma"),
    )


def ingest_funds(source: Source) -> list[FundSeries]:
    """Read a long-format fund CSV (fund_id,date,net_return,aum) into FundSeries.

    One series per distinct fund_id, in order of first appearance; per-fund
    rows are sorted by date, gaps permitted, empty aum cells kept as missing.
    """
    stream = _text_stream(source)
    per_fund: dict[str, list[tuple[MonthId, float, float]]] = {}
    try:
        reader = csv.reader(stream)
        try:
            header = next(reader)
        except StopIteration:
            raise PanelFormatError("empty fund CSV") from None
        names = [h.strip().lower() for h in header]
        if names != ["fund_id", "date", "net_return", "aum"]:
            raise PanelFormatError("fund CSV header must be fund_id,date,net_return,aum")
        for line in reader:
            if not line or all(not c.strip() for c in line):
                continue
            if len(line) != 4:
                raise PanelFormatError(f"row has {len(line)} cells, expected 4")
            fund_id = line[0].strip()
            if not fund_id:
                raise PanelFormatError("empty fund_id")
            month = MonthId.from_yyyymm(line[1])
            ret = _parse_cell(line[2], f"net_return for fund {fund_id} at {month}")
            aum = math.nan if not line[3].strip() else _parse_cell(line[3], f"aum for fund {fund_id} at {month}")
            per_fund.setdefault(fund_id, []).append((month, ret, aum))
    finally:
        if hasattr(stream, "close"):
            stream.close()

    funds = []
    for fund_id, obs in per_fund.items():
        obs.sort(key=lambda o: o[0])
        for (prev, _, _), (cur, _, _) in zip(obs, obs[1:]):
            if cur == prev:
                raise PanelFormatError(f"duplicate observation for fund {fund_id} at {cur}")
        funds.append(
            FundSeries(
                fund_id=fund_id,
                months=tuple(o[0] for o in obs),
                net_returns=np.array([o[1] for o in obs]),
                aum=np.array([o[2] for o in obs]),
            )
        )
    return funds


def align(fund: FundSeries, panel: FactorPanel, model: str) -> AlignedSample:
    """Join a fund to the panel under a model: y = net return - rf, X = [1, factors].

    Pure function of its inputs; fund months absent from the panel raise
    AlignmentError, absent factor columns raise FactorUnavailableError.
    """
    factors = panel.check_model(model)
    rows = np.array([panel.row_of(m) for m in fund.months], dtype=np.intp)
    y = fund.net_returns - panel.rf[rows]
    design = panel.design_matrix(model)
    return AlignedSample(
        fund_id=fund.fund_id,
        model=model,
        months=fund.months,
        y=y,
        X=design[rows],
        factor_names=factors,
        panel_rows=rows,
    )


def _fmt(value: float) -> str:
    # repr round-trips float64 exactly, keeping emit/ingest bit-stable
    if math.isnan(value):
        return "nan"
    return repr(float(value))


def write_factor_csv(panel: FactorPanel, dest: Union[str, os.PathLike, IO[str]]) -> None:
    """Emit a panel in the factor CSV format; re-ingesting reproduces it exactly."""
    present = [f for f in _FACTOR_ORDER if panel.has_factor(f)]
    header = ["date"] + [f.upper() for f in present] + ["RF"]
    own = isinstance(dest, (str, os.PathLike))
    out = open(dest, "w", encoding="utf-8", newline="") if own else dest
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(header)
        for i, month in enumerate(panel.months):
            row = [str(month)] + [_fmt(panel.column(f)[i]) for f in present] + [_fmt(panel.rf[i])]
            writer.writerow(row)
    finally:
        if own:
            out.close()


def write_funds_csv(funds: Iterable[FundSeries], dest: Union[str, os.PathLike, IO[str]]) -> None:
    """Emit fund series in the long fund CSV format."""
    own = isinstance(dest, (str, os.PathLike))
    out = open(dest, "w", encoding="utf-8", newline="") if own else dest
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["fund_id", "date", "net_return", "aum"])
        for fund in funds:
            for i, month in enumerate(fund.months):
                aum = fund.aum[i]
                writer.writerow(
                    [fund.fund_id, str(month), _fmt(fund.net_returns[i]), "" if math.isnan(aum) else _fmt(aum)]
                )
    finally:
        if own:
            out.close()

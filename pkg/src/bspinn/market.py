"""File-based market data: quote/yield ingestion, midpoint prices,
risk-free-rate derivation, and model-vs-market evaluation.

CSV schemas
-----------
quotes: ``trade_date,expiry_date,bid,ask,strike,implied_vol,spot`` with
ISO-8601 dates and decimal numbers.
yields: ``date,yield`` with the yield as a decimal fraction (0.05 = 5%).
"""
from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass

import numpy as np

from .baselines import PriceSurface
from .conditions import OptionSpec
from .network import NetworkParams, forward_values

DAYS_PER_YEAR = 365.25

QUOTE_FIELDS = ("trade_date", "expiry_date", "bid", "ask", "strike",
                "implied_vol", "spot")


class MarketDataError(ValueError):
    """Malformed or invariant-violating market data; message carries the
    offending line numbers."""


@dataclass(frozen=True)
class QuoteRecord:
    trade_date: dt.date
    expiry_date: dt.date
    bid: float
    ask: float
    strike: float
    implied_vol: float
    spot: float

    def __post_init__(self):
        if not (0.0 <= self.bid <= self.ask):
            raise ValueError(f"need 0 <= bid <= ask, got bid={self.bid}, ask={self.ask}")
        if self.expiry_date <= self.trade_date:
            raise ValueError("expiry_date must be after trade_date")
        if self.implied_vol <= 0:
            raise ValueError("implied_vol must be positive")
        if self.spot <= 0:
            raise ValueError("spot must be positive")

    @property
    def years_to_expiry(self) -> float:
        return (self.expiry_date - self.trade_date).days / DAYS_PER_YEAR


@dataclass
class YieldSeries:
    dates: list
    yields: np.ndarray

    def __post_init__(self):
        self.yields = np.asarray(self.yields, dtype=float)
        if len(self.dates) != len(self.yields):
            raise ValueError("dates and yields must have equal length")
        for a, b in zip(self.dates, self.dates[1:]):
            if b <= a:
                raise ValueError("yield dates must be strictly ascending")
        if not np.all(np.isfinite(self.yields)):
            raise ValueError("yields must be finite")


@dataclass
class EvalReport:
    rmse_pinn: float
    rmse_benchmark: float
    corr_pinn: float
    n_quotes: int
    n_excluded: int = 0

    @property
    def corr_defined(self) -> bool:
        return math.isfinite(self.corr_pinn)

    def table_text(self) -> str:
        corr = f"{self.corr_pinn:.3f}" if self.corr_defined else "undefined (flagged)"
        return "\n".join([
            "metric                 value",
            f"RMSE(model, market)    {self.rmse_pinn:.6g}",
            f"RMSE(bench, market)    {self.rmse_benchmark:.6g}",
            f"corr(model, market)    {corr}",
            f"quotes used            {self.n_quotes}",
            f"quotes excluded        {self.n_excluded}",
        ])

    def csv_text(self) -> str:
        return ("rmse_pinn,rmse_benchmark,corr_pinn,n_quotes,n_excluded\n"
                f"{self.rmse_pinn!r},{self.rmse_benchmark!r},{self.corr_pinn!r},"
                f"{self.n_quotes},{self.n_excluded}\n")


def midpoint(bid: float, ask: float) -> float:
    """Market-price proxy: the bid/ask arithmetic mean."""
    if not (0.0 <= bid <= ask):
        raise ValueError(f"need 0 <= bid <= ask, got bid={bid}, ask={ask}")
    return 0.5 * (bid + ask)


def derive_rate(series: YieldSeries, start: dt.date, end: dt.date) -> float:
    """Average treasury yield over [start, end]."""
    inside = [y for d, y in zip(series.dates, series.yields) if start <= d <= end]
    if not inside:
        raise ValueError(f"no yield observations between {start} and {end}")
    return float(np.mean(inside))


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------

def _parse_quote_row(row: dict) -> QuoteRecord:
    return QuoteRecord(
        trade_date=dt.date.fromisoformat(row["trade_date"].strip()),
        expiry_date=dt.date.fromisoformat(row["expiry_date"].strip()),
        bid=float(row["bid"]),
        ask=float(row["ask"]),
        strike=float(row["strike"]),
        implied_vol=float(row["implied_vol"]),
        spot=float(row["spot"]),
    )


def load_quotes(path) -> list[QuoteRecord]:
    """Parse and validate a quote file; any bad row fails the load with
    per-row line numbers in the error message."""
    records = []
    problems = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in QUOTE_FIELDS if c not in (reader.fieldnames or [])]
        if missing:
            raise MarketDataError(f"{path}: missing columns {missing}")
        for line_no, row in enumerate(reader, start=2):
            try:
                records.append(_parse_quote_row(row))
            except (ValueError, KeyError, TypeError) as exc:
                problems.append(f"line {line_no}: {exc}")
    if problems:
        raise MarketDataError(f"{path}: {len(problems)} invalid row(s)\n  "
                              + "\n  ".join(problems))
    return records


def load_yields(path) -> YieldSeries:
    dates, values = [], []
    problems = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or {"date", "yield"} - set(reader.fieldnames):
            raise MarketDataError(f"{path}: expected columns date,yield")
        for line_no, row in enumerate(reader, start=2):
            try:
                dates.append(dt.date.fromisoformat(row["date"].strip()))
                values.append(float(row["yield"]))
            except (ValueError, KeyError, TypeError) as exc:
                problems.append(f"line {line_no}: {exc}")
    if problems:
        raise MarketDataError(f"{path}: {len(problems)} invalid row(s)\n  "
                              + "\n  ".join(problems))
    try:
        return YieldSeries(dates, np.array(values))
    except ValueError as exc:
        raise MarketDataError(f"{path}: {exc}") from exc


def write_quotes_csv(path, records) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(QUOTE_FIELDS)
        for q in records:
            writer.writerow([q.trade_date.isoformat(), q.expiry_date.isoformat(),
                             format(q.bid, ".17g"), format(q.ask, ".17g"),
                             format(q.strike, ".17g"), format(q.implied_vol, ".17g"),
                             format(q.spot, ".17g")])


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def quote_model_inputs(spec: OptionSpec, quotes) -> tuple[np.ndarray, np.ndarray]:
    """Map quotes to (S, t) model inputs: spot, and maturity minus time to
    expiry on a 365.25-day year."""
    S = np.array([q.spot for q in quotes], dtype=float)
    t = np.array([spec.maturity - q.years_to_expiry for q in quotes], dtype=float)
    return S, t


def evaluate(params: NetworkParams, spec: OptionSpec, quotes,
             benchmark) -> EvalReport:
    """Score the trained model and a benchmark pricer against quote midpoints.

    `benchmark` is either a callable (S, t) -> price or a tabulated
    :class:`~bspinn.baselines.PriceSurface`. Quotes falling outside the
    trained (S, t) domain are excluded and counted.
    """
    if not quotes:
        raise ValueError("no quotes to evaluate")
    S, t = quote_model_inputs(spec, quotes)
    mids = np.array([midpoint(q.bid, q.ask) for q in quotes])
    in_domain = ((S >= spec.s_min) & (S <= spec.s_max)
                 & (t >= 0.0) & (t <= spec.maturity))
    n_excluded = int(np.sum(~in_domain))
    if not np.any(in_domain):
        raise ValueError("all quotes fall outside the trained domain")
    S, t, mids = S[in_domain], t[in_domain], mids[in_domain]

    pred = np.asarray(forward_values(params, S, t), dtype=float)
    if isinstance(benchmark, PriceSurface):
        bench = np.asarray(benchmark.value_at(S, t), dtype=float)
    else:
        bench = np.asarray(benchmark(S, t), dtype=float)

    rmse_pinn = float(np.sqrt(np.mean((pred - mids) ** 2)))
    rmse_benchmark = float(np.sqrt(np.mean((bench - mids) ** 2)))
    if len(mids) < 2 or np.std(pred) == 0.0 or np.std(mids) == 0.0:
        corr = float("nan")  # flagged via corr_defined, never silently 0
    else:
        corr = float(np.corrcoef(pred, mids)[0, 1])
    return EvalReport(rmse_pinn=rmse_pinn, rmse_benchmark=rmse_benchmark,
                      corr_pinn=corr, n_quotes=int(len(mids)),
                      n_excluded=n_excluded)


# ---------------------------------------------------------------------------
# synthetic quotes (stand-in for proprietary feeds)
# ---------------------------------------------------------------------------

def make_synthetic_quotes(spec: OptionSpec, pricer, n_quotes: int,
                          noise_sigma: float, seed: int,
                          s_range: tuple, t_range: tuple,
                          base_date: dt.date = dt.date(2021, 1, 4)) -> list[QuoteRecord]:
    """Quotes whose midpoints are `pricer` values plus centered noise.

    `pricer` is a callable (S, t) -> price (typically a tabulated
    reference surface). Dates are synthesized so that the quote's
    time-to-expiry maps back to the sampled model time.
    """
    rng = np.random.default_rng(seed)
    records = []
    for _ in range(n_quotes):
        S = float(rng.uniform(*s_range))
        t = float(rng.uniform(*t_range))
        days = max(int(round((spec.maturity - t) * DAYS_PER_YEAR)), 1)
        t_actual = spec.maturity - days / DAYS_PER_YEAR
        price = float(pricer(np.array([S]), np.array([t_actual]))[0])
        mid = max(price + float(rng.normal(0.0, noise_sigma)), 0.0)
        half_spread = min(0.05 + 0.005 * mid, mid)
        records.append(QuoteRecord(
            trade_date=base_date,
            expiry_date=base_date + dt.timedelta(days=days),
            bid=mid - half_spread,
            ask=mid + half_spread,
            strike=spec.strike,
            implied_vol=spec.sigma,
            spot=S,
        ))
    return records

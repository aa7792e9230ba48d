"""Option contracts and their terminal/boundary conditions."""
from __future__ import annotations

import enum
from dataclasses import dataclass, asdict

import numpy as np


class OptionStyle(str, enum.Enum):
    EUROPEAN_CALL = "european_call"
    AMERICAN_PUT = "american_put"


@dataclass(frozen=True)
class OptionSpec:
    """Contract and model parameters for one pricing problem.

    Attributes
    ----------
    style : OptionStyle
    strike : strike price K
    rate : risk-free rate, per year
    sigma : volatility, per sqrt(year)
    maturity : expiry T in years; the payoff applies at t = T
    s_min, s_max : spot-price domain edges
    """

    style: OptionStyle
    strike: float
    rate: float
    sigma: float
    maturity: float
    s_min: float = 0.0
    s_max: float = 160.0

    def __post_init__(self):
        if not (0.0 <= self.s_min < self.strike < self.s_max):
            raise ValueError(
                f"domain must satisfy 0 <= s_min < strike < s_max, got "
                f"s_min={self.s_min}, strike={self.strike}, s_max={self.s_max}")
        if self.maturity <= 0.0:
            raise ValueError(f"maturity must be positive, got {self.maturity}")
        if self.sigma <= 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    @property
    def is_call(self) -> bool:
        return self.style == OptionStyle.EUROPEAN_CALL

    def to_dict(self) -> dict:
        d = asdict(self)
        d["style"] = self.style.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "OptionSpec":
        d = dict(d)
        d["style"] = OptionStyle(d["style"])
        return cls(**d)


def payoff(spec: OptionSpec, S):
    """Intrinsic value: max(S-K, 0) for a call, max(K-S, 0) for a put."""
    S = np.asarray(S, dtype=float) if not np.isscalar(S) else S
    if np.any(np.asarray(S) < 0):
        raise ValueError("spot price must be non-negative")
    if spec.is_call:
        return np.maximum(S - spec.strike, 0.0)
    return np.maximum(spec.strike - S, 0.0)


def boundary_value(spec: OptionSpec, which: str, t):
    """Dirichlet value on the lower or upper spot edge at calendar time t.

    Call: 0 on the lower edge and ``s_max - K*exp(-r*(T-t))`` on the
    upper edge (worth the forward-adjusted intrinsic once exercise is
    certain). Put: K on the lower edge, 0 on the upper.
    """
    if which not in ("lower", "upper"):
        raise ValueError(f"which must be 'lower' or 'upper', got {which!r}")
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > spec.maturity):
        raise ValueError(f"t must lie in [0, {spec.maturity}]")
    if spec.is_call:
        if which == "lower":
            return np.zeros_like(t_arr) if not np.isscalar(t) else 0.0
        val = spec.s_max - spec.strike * np.exp(-spec.rate * (spec.maturity - t_arr))
        return val if not np.isscalar(t) else float(val)
    if which == "lower":
        return np.full_like(t_arr, spec.strike) if not np.isscalar(t) else spec.strike
    return np.zeros_like(t_arr) if not np.isscalar(t) else 0.0


def terminal_value(spec: OptionSpec, S):
    """Option value at expiry: the payoff."""
    S_arr = np.asarray(S)
    if np.any(S_arr < spec.s_min) or np.any(S_arr > spec.s_max):
        raise ValueError(f"S must lie in [{spec.s_min}, {spec.s_max}]")
    return payoff(spec, S)

"""Black-Scholes differential operator, early-exercise residuals, Greeks."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .autodiff import Jet2, maximum, value_of
from .conditions import OptionSpec, payoff


@dataclass
class ResidualReport:
    """Pointwise residual terms.

    `f` is the parabolic operator value. The remaining fields are the
    early-exercise terms for an American put; they are identically zero
    for a European call. Entries may be scalars, arrays or tape variables.
    """

    f: object
    complementarity: object = 0.0
    hinge_f: object = 0.0
    hinge_v: object = 0.0


class Greeks(NamedTuple):
    delta: object
    gamma: object
    theta: object


def bs_operator(spec: OptionSpec, V: Jet2, S):
    """dV/dt + 0.5*sigma^2*S^2*d2V/dS2 + r*S*dV/dS - r*V at spot S.

    `V` must carry exact spot/time derivatives (a network or analytic
    jet); the result is zero wherever the no-arbitrage PDE holds.
    """
    vals = [value_of(V.value), value_of(V.d_dS), value_of(V.d2_dS2), value_of(V.d_dt)]
    for v in vals:
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite jet passed to the pricing operator")
    s2 = S * S
    return (V.d_dt + (0.5 * spec.sigma**2) * (s2 * V.d2_dS2)
            + spec.rate * (S * V.d_dS) - spec.rate * V.value)


def complementarity_residual(spec: OptionSpec, V: Jet2, S) -> ResidualReport:
    """Early-exercise residual terms for an American put.

    The product `f * (payoff - V)` vanishes when either the PDE holds or
    the value sits on the payoff; the two hinges measure violation of
    `f <= 0` and `V >= payoff` respectively.
    """
    if spec.is_call:
        raise ValueError("complementarity residual is defined for the American put only")
    f = bs_operator(spec, V, S)
    intrinsic = payoff(spec, S)
    gap = intrinsic - V.value
    return ResidualReport(
        f=f,
        complementarity=f * gap,
        hinge_f=maximum(f, 0.0),
        hinge_v=maximum(gap, 0.0),
    )


def greeks(V: Jet2) -> Greeks:
    """Delta, gamma, theta read straight off the jet."""
    return Greeks(delta=V.d_dS, gamma=V.d2_dS2, theta=V.d_dt)

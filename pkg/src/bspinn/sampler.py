"""Per-epoch collocation sampling: interior, boundary and terminal points."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conditions import OptionSpec


@dataclass(frozen=True)
class SamplerConfig:
    n_interior: int = 1000
    n_boundary: int = 128   # per edge
    n_terminal: int = 256
    seed: int = 0

    def __post_init__(self):
        if min(self.n_interior, self.n_boundary, self.n_terminal) < 1:
            raise ValueError("all sample counts must be >= 1")

    def to_dict(self) -> dict:
        return {"n_interior": self.n_interior, "n_boundary": self.n_boundary,
                "n_terminal": self.n_terminal, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "SamplerConfig":
        return cls(**d)


@dataclass
class CollocationBatch:
    interior_S: np.ndarray
    interior_t: np.ndarray
    boundary_lower_t: np.ndarray
    boundary_upper_t: np.ndarray
    terminal_S: np.ndarray


def sample(config: SamplerConfig, spec: OptionSpec, epoch: int) -> CollocationBatch:
    """Draw one collocation batch, a pure function of (seed, epoch).

    Interior points are uniform on the open spot interval and [0, T);
    boundary points are uniform times on each spot edge; terminal points
    are uniform spots at expiry. Each epoch resamples afresh.
    """
    rng = np.random.default_rng([config.seed, epoch])
    lo, hi, T = spec.s_min, spec.s_max, spec.maturity

    S = rng.uniform(lo, hi, config.n_interior)
    while np.any(S <= lo):  # keep the interior open at the lower edge
        n_bad = int(np.sum(S <= lo))
        S[S <= lo] = rng.uniform(lo, hi, n_bad)
    t = rng.uniform(0.0, T, config.n_interior)

    return CollocationBatch(
        interior_S=S,
        interior_t=t,
        boundary_lower_t=rng.uniform(0.0, T, config.n_boundary),
        boundary_upper_t=rng.uniform(0.0, T, config.n_boundary),
        terminal_S=rng.uniform(lo, hi, config.n_terminal),
    )

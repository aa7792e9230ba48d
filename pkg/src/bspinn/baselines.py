"""Reference pricers: closed form, CRR binomial, Crank-Nicolson FDM, Monte
Carlo, plus exercise-boundary extraction from a price surface.

These never share code with the network path; they are the oracles the
trained model is judged against.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded
from scipy.special import erfc

from .autodiff import Jet2
from .conditions import OptionSpec, OptionStyle, boundary_value

SQRT2 = math.sqrt(2.0)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def norm_cdf(x):
    """Standard normal CDF via the complementary error function."""
    return 0.5 * erfc(-np.asarray(x, dtype=float) / SQRT2)


def norm_pdf(x):
    x = np.asarray(x, dtype=float)
    return INV_SQRT_2PI * np.exp(-0.5 * x * x)


# ---------------------------------------------------------------------------
# price surfaces
# ---------------------------------------------------------------------------

@dataclass
class PriceSurface:
    """Option values on a rectangular (S, t) mesh; values[i, j] = V(S_i, t_j)."""

    S_grid: np.ndarray
    t_grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.S_grid = np.asarray(self.S_grid, dtype=float)
        self.t_grid = np.asarray(self.t_grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if np.any(np.diff(self.S_grid) <= 0) or (len(self.t_grid) > 1
                                                 and np.any(np.diff(self.t_grid) <= 0)):
            raise ValueError("surface grids must be strictly ascending")
        if self.values.shape != (len(self.S_grid), len(self.t_grid)):
            raise ValueError(f"values shape {self.values.shape} does not match grids "
                             f"({len(self.S_grid)}, {len(self.t_grid)})")

    def value_at(self, S, t):
        """Bilinear interpolation, clamped to the mesh hull."""
        S = np.clip(np.asarray(S, dtype=float), self.S_grid[0], self.S_grid[-1])
        t = np.clip(np.asarray(t, dtype=float), self.t_grid[0], self.t_grid[-1])
        i = np.clip(np.searchsorted(self.S_grid, S, side="right") - 1,
                    0, max(len(self.S_grid) - 2, 0))
        j = np.clip(np.searchsorted(self.t_grid, t, side="right") - 1,
                    0, max(len(self.t_grid) - 2, 0))
        if len(self.S_grid) == 1:
            wS = np.zeros_like(S)
            i1 = i
        else:
            i1 = i + 1
            wS = (S - self.S_grid[i]) / (self.S_grid[i1] - self.S_grid[i])
        if len(self.t_grid) == 1:
            wt = np.zeros_like(t)
            j1 = j
        else:
            j1 = j + 1
            wt = (t - self.t_grid[j]) / (self.t_grid[j1] - self.t_grid[j])
        v = ((1 - wS) * (1 - wt) * self.values[i, j]
             + wS * (1 - wt) * self.values[i1, j]
             + (1 - wS) * wt * self.values[i, j1]
             + wS * wt * self.values[i1, j1])
        return v if v.shape else float(v)

    def to_csv(self, path, greeks: dict | None = None) -> None:
        """One row per grid node; 17 significant digits round-trip exactly."""
        cols = ["S", "t", "V"] + (list(greeks) if greeks else [])
        with open(path, "w", newline="") as fh:
            fh.write(",".join(cols) + "\n")
            for i, s in enumerate(self.S_grid):
                for j, t in enumerate(self.t_grid):
                    row = [s, t, self.values[i, j]]
                    if greeks:
                        row += [greeks[k][i, j] for k in greeks]
                    fh.write(",".join(format(x, ".17g") for x in row) + "\n")

    @classmethod
    def from_csv(cls, path) -> "PriceSurface":
        S_vals, t_vals, v_vals = [], [], []
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            if header[:3] != ["S", "t", "V"]:
                raise ValueError(f"unexpected surface header {header!r}")
            for line in fh:
                parts = line.strip().split(",")
                if not parts or parts == [""]:
                    continue
                S_vals.append(float(parts[0]))
                t_vals.append(float(parts[1]))
                v_vals.append(float(parts[2]))
        S_grid = np.unique(S_vals)
        t_grid = np.unique(t_vals)
        values = np.full((len(S_grid), len(t_grid)), np.nan)
        i = np.searchsorted(S_grid, S_vals)
        j = np.searchsorted(t_grid, t_vals)
        values[i, j] = v_vals
        if np.any(np.isnan(values)):
            raise ValueError("surface csv does not cover a full rectangular mesh")
        return cls(S_grid, t_grid, values)


def surface_from_fn(fn, s_grid, t_grid) -> PriceSurface:
    """Tabulate any pricer fn(S, t) on a rectangular mesh."""
    s_grid = np.asarray(s_grid, dtype=float)
    t_grid = np.asarray(t_grid, dtype=float)
    SS, TT = np.meshgrid(s_grid, t_grid, indexing="ij")
    vals = np.asarray(fn(SS.ravel(), TT.ravel()), dtype=float).reshape(SS.shape)
    return PriceSurface(s_grid, t_grid, vals)


@dataclass
class ExerciseBoundary:
    """Critical spot per time: exercise is optimal at or below S_f(t)."""

    t_grid: np.ndarray
    S_f: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("t,S_f\n")
            for t, s in zip(self.t_grid, self.S_f):
                fh.write(f"{format(t, '.17g')},{format(s, '.17g')}\n")


# ---------------------------------------------------------------------------
# closed-form European call
# ---------------------------------------------------------------------------

def closed_form_call(spec: OptionSpec, S, t):
    """Black-Scholes value of the European call at spot S, calendar time t."""
    if not spec.is_call:
        raise ValueError("closed form applies to the European call")
    S_arr = np.asarray(S, dtype=float)
    t_arr = np.asarray(t, dtype=float)
    if np.any(S_arr < 0):
        raise ValueError("negative spot")
    if np.any(t_arr < 0) or np.any(t_arr > spec.maturity):
        raise ValueError(f"t must lie in [0, {spec.maturity}]")
    tau = spec.maturity - t_arr
    out = np.empty(np.broadcast(S_arr, t_arr).shape, dtype=float)
    S_b, tau_b = np.broadcast_arrays(S_arr, tau)
    expired = tau_b <= 0
    degenerate = (S_b <= 0) & ~expired
    live = ~expired & ~degenerate
    out[expired] = np.maximum(S_b[expired] - spec.strike, 0.0)
    out[degenerate] = 0.0
    if np.any(live):
        s, tt = S_b[live], tau_b[live]
        sig_rt = spec.sigma * np.sqrt(tt)
        d1 = (np.log(s / spec.strike) + (spec.rate + 0.5 * spec.sigma**2) * tt) / sig_rt
        d2 = d1 - sig_rt
        out[live] = s * norm_cdf(d1) - spec.strike * np.exp(-spec.rate * tt) * norm_cdf(d2)
    if out.shape == ():
        return float(out)
    return out


def closed_form_call_jet(spec: OptionSpec, S, t) -> Jet2:
    """Closed-form call as a jet: value with analytic delta/gamma/theta.

    Interior only (S > 0, t < T); the analytic solution satisfies the
    pricing PDE exactly, which makes this the reference input for
    residual checks.
    """
    S = np.asarray(S, dtype=float)
    t = np.asarray(t, dtype=float)
    tau = spec.maturity - t
    if np.any(S <= 0) or np.any(tau <= 0):
        raise ValueError("jet form needs S > 0 and t < maturity")
    sig_rt = spec.sigma * np.sqrt(tau)
    d1 = (np.log(S / spec.strike) + (spec.rate + 0.5 * spec.sigma**2) * tau) / sig_rt
    d2 = d1 - sig_rt
    disc = np.exp(-spec.rate * tau)
    value = S * norm_cdf(d1) - spec.strike * disc * norm_cdf(d2)
    delta = norm_cdf(d1)
    gamma = norm_pdf(d1) / (S * sig_rt)
    theta = (-S * norm_pdf(d1) * spec.sigma / (2.0 * np.sqrt(tau))
             - spec.rate * spec.strike * disc * norm_cdf(d2))
    return Jet2(value, delta, gamma, theta)


def european_put(spec: OptionSpec, S, t):
    """European put via put-call parity on the closed-form call."""
    call_spec = OptionSpec(style=OptionStyle.EUROPEAN_CALL, strike=spec.strike,
                           rate=spec.rate, sigma=spec.sigma, maturity=spec.maturity,
                           s_min=spec.s_min, s_max=spec.s_max)
    tau = spec.maturity - np.asarray(t, dtype=float)
    c = closed_form_call(call_spec, S, t)
    return c - np.asarray(S, dtype=float) + spec.strike * np.exp(-spec.rate * tau)


# ---------------------------------------------------------------------------
# CRR binomial tree
# ---------------------------------------------------------------------------

def _crr_factors(spec: OptionSpec, n_steps: int):
    dt = spec.maturity / n_steps
    u = math.exp(spec.sigma * math.sqrt(dt))
    d = 1.0 / u
    p = (math.exp(spec.rate * dt) - d) / (u - d)
    if not (0.0 < p < 1.0):
        raise ValueError(f"risk-neutral probability {p:.6g} outside (0, 1); "
                         "increase n_steps or adjust parameters")
    return dt, u, d, p


def binomial_put(spec: OptionSpec, n_steps: int, s_grid=None, t_grid=None) -> PriceSurface:
    """American put surface by CRR backward induction with early exercise.

    One tree is rooted at each requested spot. At every even step the
    central node's spot equals the root, so each tree yields an exact
    time section V(S_i, t_k) on a fine time ladder, which is then
    interpolated onto `t_grid`. (The subtree hanging off any node is
    itself a CRR tree for that node's spot and the remaining life.)
    """
    if spec.is_call:
        raise ValueError("binomial solver covers the American put")
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    s_grid = (np.linspace(spec.s_min, spec.s_max, 51) if s_grid is None
              else np.asarray(s_grid, dtype=float))
    t_grid = (np.linspace(0.0, spec.maturity, 51) if t_grid is None
              else np.asarray(t_grid, dtype=float))
    dt, u, d, p = _crr_factors(spec, n_steps)
    disc = math.exp(-spec.rate * dt)
    K = spec.strike

    pos = s_grid > 0
    S_pos = s_grid[pos][:, None]
    n = n_steps
    sig_dt = spec.sigma * math.sqrt(dt)

    rec_times = []
    rec_values = []

    lattice = np.exp(sig_dt * (2.0 * np.arange(n + 1) - n))
    V = np.maximum(K - S_pos * lattice, 0.0)
    if n % 2 == 0:
        rec_times.append(n * dt)
        rec_values.append(V[:, n // 2].copy())
    for k in range(n - 1, -1, -1):
        V = disc * (p * V[:, 1:k + 2] + (1.0 - p) * V[:, 0:k + 1])
        lattice = np.exp(sig_dt * (2.0 * np.arange(k + 1) - k))
        V = np.maximum(V, K - S_pos * lattice)
        if k % 2 == 0:
            rec_times.append(k * dt)
            rec_values.append(V[:, k // 2].copy())

    rec_times = np.array(rec_times[::-1])
    rec = np.stack(rec_values[::-1], axis=1)  # (n_pos_spots, n_recorded_times)
    # anchor the terminal slice exactly at the payoff
    if rec_times[-1] < spec.maturity:
        rec_times = np.append(rec_times, spec.maturity)
        rec = np.concatenate([rec, np.maximum(K - S_pos, 0.0)], axis=1)

    values = np.empty((len(s_grid), len(t_grid)))
    values[~pos, :] = K  # a worthless underlying pins the put at the strike
    rows = np.where(pos)[0]
    for out_i, row in enumerate(rows):
        values[row, :] = np.interp(t_grid, rec_times, rec[out_i])
    return PriceSurface(s_grid, t_grid, values)


def binomial_put_value(spec: OptionSpec, S: float, n_steps: int) -> float:
    """Root value of a single CRR tree (price at calendar time 0)."""
    surf = binomial_put(spec, n_steps, s_grid=np.array([S]), t_grid=np.array([0.0]))
    return float(surf.values[0, 0])


# ---------------------------------------------------------------------------
# Crank-Nicolson finite differences with projection
# ---------------------------------------------------------------------------

def fdm_put(spec: OptionSpec, n_S: int, n_t: int, rannacher_steps: int = 2) -> PriceSurface:
    """American put on a uniform mesh; implicit-weighted first steps, then
    Crank-Nicolson, with the early-exercise constraint enforced by
    projection after every time step."""
    if spec.is_call:
        raise ValueError("finite-difference solver covers the American put")
    if n_S < 3 or n_t < 3:
        raise ValueError("need at least a 3x3 mesh")
    S = np.linspace(spec.s_min, spec.s_max, n_S)
    t = np.linspace(0.0, spec.maturity, n_t)
    h = S[1] - S[0]
    dt = t[1] - t[0]
    K = spec.strike

    Si = S[1:-1]
    a = 0.5 * spec.sigma**2 * Si**2
    b = spec.rate * Si
    lower = a / h**2 - b / (2 * h)
    diag = -2.0 * a / h**2 - spec.rate
    upper = a / h**2 + b / (2 * h)

    intrinsic = np.maximum(K - S, 0.0)
    values = np.empty((n_S, n_t))
    values[:, -1] = intrinsic

    def step(v_next, t_now, theta):
        """Advance one step backward in time with the given implicitness."""
        # (I - theta*dt*L) v_now = (I + (1-theta)*dt*L) v_next + edge terms
        w_exp = (1.0 - theta) * dt
        w_imp = theta * dt
        rhs = v_next[1:-1] + w_exp * (lower * v_next[:-2] + diag * v_next[1:-1]
                                      + upper * v_next[2:])
        lo_b = boundary_value(spec, "lower", t_now)
        hi_b = boundary_value(spec, "upper", t_now)
        rhs[0] += w_imp * lower[0] * lo_b
        rhs[-1] += w_imp * upper[-1] * hi_b
        ab = np.zeros((3, n_S - 2))
        ab[0, 1:] = -w_imp * upper[:-1]
        ab[1, :] = 1.0 - w_imp * diag
        ab[2, :-1] = -w_imp * lower[1:]
        sol = solve_banded((1, 1), ab, rhs)
        out = np.empty(n_S)
        out[0], out[-1] = lo_b, hi_b
        out[1:-1] = np.maximum(sol, intrinsic[1:-1])
        return out

    for j in range(n_t - 2, -1, -1):
        steps_done = (n_t - 2) - j
        theta = 1.0 if steps_done < rannacher_steps else 0.5
        values[:, j] = step(values[:, j + 1], t[j], theta)
    return PriceSurface(S, t, values)


# ---------------------------------------------------------------------------
# boundary extraction and surface derivatives
# ---------------------------------------------------------------------------

def extract_boundary(surface: PriceSurface, K: float, tol: float | None = None) -> ExerciseBoundary:
    """Largest spot per time column where the surface sits on the payoff.

    A grid value never matches K - S exactly in floating point, hence the
    tolerance (default 1e-4*K). Columns with no matching node report 0.
    """
    if tol is None:
        tol = 1e-4 * K
    gap = np.abs(surface.values - (K - surface.S_grid[:, None]))
    on_payoff = gap <= tol
    S_f = np.zeros(len(surface.t_grid))
    for j in range(len(surface.t_grid)):
        idx = np.where(on_payoff[:, j])[0]
        if idx.size:
            S_f[j] = surface.S_grid[idx[-1]]
    return ExerciseBoundary(np.asarray(surface.t_grid).copy(), S_f)


def surface_fd_jets(surface: PriceSurface):
    """Central finite-difference jets at the interior mesh nodes.

    Returns (S_mesh, t_mesh, Jet2) with array components, for feeding a
    tabulated surface through the PDE operator.
    """
    S, t, V = surface.S_grid, surface.t_grid, surface.values
    hS = np.diff(S)
    ht = np.diff(t)
    if not (np.allclose(hS, hS[0]) and np.allclose(ht, ht[0])):
        raise ValueError("finite-difference jets need uniform grids")
    hS, ht = hS[0], ht[0]
    core = V[1:-1, 1:-1]
    d_dS = (V[2:, 1:-1] - V[:-2, 1:-1]) / (2 * hS)
    d2 = (V[2:, 1:-1] - 2 * core + V[:-2, 1:-1]) / hS**2
    d_dt = (V[1:-1, 2:] - V[1:-1, :-2]) / (2 * ht)
    SS, TT = np.meshgrid(S[1:-1], t[1:-1], indexing="ij")
    return SS, TT, Jet2(core, d_dS, d2, d_dt)


# ---------------------------------------------------------------------------
# Monte Carlo check
# ---------------------------------------------------------------------------

def mc_european_call(spec: OptionSpec, S: float, n_paths: int, seed: int,
                     t: float = 0.0, chunk: int = 1_000_000):
    """Discounted-payoff Monte Carlo for the European call.

    Terminal spots are drawn directly from the lognormal law of geometric
    Brownian motion. Returns (estimate, standard_error).
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    tau = spec.maturity - t
    rng = np.random.default_rng(seed)
    drift = (spec.rate - 0.5 * spec.sigma**2) * tau
    vol = spec.sigma * math.sqrt(tau)
    disc = math.exp(-spec.rate * tau)

    total = 0.0
    total_sq = 0.0
    remaining = n_paths
    while remaining > 0:
        m = min(chunk, remaining)
        Z = rng.standard_normal(m)
        ST = S * np.exp(drift + vol * Z)
        pay = np.maximum(ST - spec.strike, 0.0)
        total += float(pay.sum())
        total_sq += float((pay * pay).sum())
        remaining -= m
    mean = total / n_paths
    if n_paths > 1:
        var = max((total_sq - n_paths * mean**2) / (n_paths - 1), 0.0)
        se = disc * math.sqrt(var / n_paths)
    else:
        se = float("inf")
    return disc * mean, se

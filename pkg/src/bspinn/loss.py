"""Composite training objective over one collocation batch.

Three mean-squared terms: terminal-payoff mismatch, boundary mismatch
(both spot edges pooled), and the PDE residual, the last scaled by a
penalty strength `beta`. For the American put the residual term combines
the complementarity product with hinge penalties on the two
inequalities, since the product alone is satisfied by degenerate
surfaces.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Jet2, ParamTape, Var, mean, value_of
from .conditions import OptionSpec, boundary_value, terminal_value
from .network import NetworkParams, forward, forward_values, wrap_params
from .residual import bs_operator, complementarity_residual
from .sampler import CollocationBatch


@dataclass
class LossReport:
    mse_ivp: float
    mse_bvp: float
    mse_pde: float
    total: float
    beta: float
    total_node: Var | None = field(default=None, repr=False, compare=False)


def collocation_loss(jet_fn, value_fn, batch: CollocationBatch, spec: OptionSpec,
                     beta: float, product_weight: float = 1.0,
                     hinge_weight: float = 1.0) -> LossReport:
    """Assemble the objective for any pricer exposing jet and value evaluation.

    `jet_fn(S, t)` must return the price jet at interior points;
    `value_fn(S, t)` plain values for boundary/terminal points. Summation
    order is fixed by the batch layout, so results are reproducible
    bit-for-bit.
    """
    if beta < 0:
        raise ValueError("beta must be >= 0")
    for name in ("interior_S", "boundary_lower_t", "boundary_upper_t", "terminal_S"):
        if len(getattr(batch, name)) == 0:
            raise ValueError(f"empty collocation region: {name}")

    # interior: PDE residual
    S_i, t_i = batch.interior_S, batch.interior_t
    V = jet_fn(S_i, t_i)
    if spec.is_call:
        f = bs_operator(spec, V, S_i)
        per_point = f * f
    else:
        rep = complementarity_residual(spec, V, S_i)
        per_point = (product_weight * (rep.complementarity * rep.complementarity)
                     + hinge_weight * (rep.hinge_f * rep.hinge_f)
                     + hinge_weight * (rep.hinge_v * rep.hinge_v))
    mse_pde = mean(per_point)

    # boundary and terminal: one pooled value pass
    n_b = len(batch.boundary_lower_t)
    t_term = np.full(len(batch.terminal_S), spec.maturity)
    S_all = np.concatenate([np.full(n_b, spec.s_min),
                            np.full(len(batch.boundary_upper_t), spec.s_max),
                            batch.terminal_S])
    t_all = np.concatenate([batch.boundary_lower_t, batch.boundary_upper_t, t_term])
    v_all = value_fn(S_all, t_all)

    targets_bvp = np.concatenate([
        np.asarray(boundary_value(spec, "lower", batch.boundary_lower_t), dtype=float),
        np.asarray(boundary_value(spec, "upper", batch.boundary_upper_t), dtype=float)])
    targets_ivp = np.asarray(terminal_value(spec, batch.terminal_S), dtype=float)
    dt = np.asarray(value_of(v_all)).dtype
    n_pool = 2 * n_b

    err_b = v_all[:n_pool] - targets_bvp.astype(dt)
    err_t = v_all[n_pool:] - targets_ivp.astype(dt)
    mse_bvp = mean(err_b * err_b)
    mse_ivp = mean(err_t * err_t)

    pde_term = mse_pde * beta
    total = (mse_ivp + mse_bvp) + pde_term

    return LossReport(
        mse_ivp=float(value_of(mse_ivp)),
        mse_bvp=float(value_of(mse_bvp)),
        mse_pde=float(value_of(mse_pde)),
        total=float(value_of(total)),
        beta=beta,
        total_node=total if isinstance(total, Var) else None,
    )


def compute_loss(params: NetworkParams, batch: CollocationBatch, spec: OptionSpec,
                 beta: float, tape: ParamTape | None = None,
                 product_weight: float = 1.0, hinge_weight: float = 1.0) -> LossReport:
    """Objective of the network at `params` on `batch`.

    Pass a fresh :class:`ParamTape` to make the result differentiable:
    the report's `total_node` can then be fed to
    :func:`~bspinn.autodiff.tape_gradient`.
    """
    p = wrap_params(params, tape) if tape is not None else params

    def jet_fn(S, t):
        return forward(p, Jet2.seed_spot(S), Jet2.seed_time(t))

    def value_fn(S, t):
        return forward_values(p, S, t)

    return collocation_loss(jet_fn, value_fn, batch, spec, beta,
                            product_weight=product_weight, hinge_weight=hinge_weight)

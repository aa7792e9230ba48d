"""Adam training loop with tracing, checkpointing and divergence guards."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .autodiff import ParamTape, tape_gradient
from .conditions import OptionSpec
from .loss import LossReport, compute_loss
from .network import NetworkConfig, NetworkParams, init_params, load_params, save_params
from .sampler import SamplerConfig, sample

log = logging.getLogger("bspinn.trainer")


class TrainingDiverged(RuntimeError):
    """Raised when a loss component stops being finite; never clipped over."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 5000
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    beta_pde: float = 1.0
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    checkpoint_every: int = 0      # 0: only the final checkpoint
    seed: int = 0
    # American-put residual weighting (unit by default)
    product_weight: float = 1.0
    hinge_weight: float = 1.0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        for name in ("adam_beta1", "adam_beta2"):
            b = getattr(self, name)
            if not (0.0 <= b < 1.0):
                raise ValueError(f"{name} must lie in [0, 1)")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in
             ("epochs", "learning_rate", "adam_beta1", "adam_beta2", "adam_eps",
              "beta_pde", "checkpoint_every", "seed", "product_weight", "hinge_weight")}
        d["sampler"] = self.sampler.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["sampler"] = SamplerConfig.from_dict(d.get("sampler", {}))
        return cls(**d)


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0

    @classmethod
    def zeros(cls, arrays) -> "AdamState":
        return cls(m=[np.zeros_like(a) for a in arrays],
                   v=[np.zeros_like(a) for a in arrays], step=0)


@dataclass
class TrainingTrace:
    reports: list = field(default_factory=list)
    seconds: list = field(default_factory=list)

    def totals(self) -> np.ndarray:
        return np.array([r.total for r in self.reports])

    def curve_csv_text(self) -> str:
        lines = ["epoch,mse_ivp,mse_bvp,mse_pde,total"]
        for i, r in enumerate(self.reports, start=1):
            lines.append(f"{i},{r.mse_ivp!r},{r.mse_bvp!r},{r.mse_pde!r},{r.total!r}")
        return "\n".join(lines) + "\n"

    def timing_csv_text(self) -> str:
        lines = ["epoch,seconds"]
        for i, s in enumerate(self.seconds, start=1):
            lines.append(f"{i},{s:.6f}")
        return "\n".join(lines) + "\n"


def smoothed_totals(trace: TrainingTrace, window: int = 50) -> np.ndarray:
    """Moving average of the per-epoch total loss."""
    totals = trace.totals()
    if len(totals) < window:
        raise ValueError("trace shorter than the smoothing window")
    kernel = np.full(window, 1.0 / window)
    return np.convolve(totals, kernel, mode="valid")


def adam_step(arrays: list, grads: list, state: AdamState, step_index: int,
              config: TrainConfig) -> tuple[list, AdamState]:
    """One bias-corrected Adam update; pure function of its inputs."""
    if len(arrays) != len(grads) or len(arrays) != len(state.m):
        raise ValueError("parameter/gradient/state length mismatch")
    if step_index < 1:
        raise ValueError("step_index starts at 1")
    b1, b2, eps, lr = (config.adam_beta1, config.adam_beta2,
                       config.adam_eps, config.learning_rate)
    c1 = 1.0 - b1**step_index
    c2 = 1.0 - b2**step_index
    new_arrays, new_m, new_v = [], [], []
    for a, g, m, v in zip(arrays, grads, state.m, state.v):
        if np.shape(a) != np.shape(g):
            raise ValueError(f"gradient shape {np.shape(g)} != parameter shape {np.shape(a)}")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        new_arrays.append(a - lr * (m / c1) / (np.sqrt(v / c2) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_arrays, AdamState(new_m, new_v, step_index)


def _check_finite(report: LossReport, epoch: int):
    for name in ("mse_ivp", "mse_bvp", "mse_pde", "total"):
        if not np.isfinite(getattr(report, name)):
            raise TrainingDiverged(f"{name} became non-finite at epoch {epoch}")


def train(spec: OptionSpec, net_config: NetworkConfig, train_config: TrainConfig,
          checkpoint_path=None, resume_from=None,
          log_every: int = 0) -> tuple[NetworkParams, TrainingTrace]:
    """Minimize the composite objective by resampled-batch Adam.

    Each epoch draws a fresh collocation batch, records the loss on a new
    tape, backpropagates to every parameter and applies one Adam update.
    Fully deterministic given the seeds in the configs; aborts on the
    first non-finite loss component.
    """
    if resume_from is not None:
        params, extra, meta = load_params(resume_from)
        state = AdamState(m=[extra[f"adam_m_{i}"] for i in range(len(params.flatten()))],
                          v=[extra[f"adam_v_{i}"] for i in range(len(params.flatten()))],
                          step=int(extra["adam_step"]))
        start_epoch = int(extra["epoch"])
    else:
        params = init_params(net_config)
        state = AdamState.zeros(params.flatten())
        start_epoch = 0

    trace = TrainingTrace()
    for epoch in range(start_epoch + 1, train_config.epochs + 1):
        t0 = time.perf_counter()
        batch = sample(train_config.sampler, spec, epoch)
        tape = ParamTape()
        report = compute_loss(params, batch, spec, train_config.beta_pde, tape,
                              product_weight=train_config.product_weight,
                              hinge_weight=train_config.hinge_weight)
        _check_finite(report, epoch)
        grads = tape_gradient(tape, report.total_node)
        arrays, state = adam_step([p.value for p in tape.parameters], grads,
                                  state, state.step + 1, train_config)
        params = params.replace_arrays(arrays)
        report.total_node = None  # drop the tape
        trace.reports.append(report)
        trace.seconds.append(time.perf_counter() - t0)
        if log_every and (epoch % log_every == 0 or epoch == train_config.epochs):
            log.info("epoch %d: total=%.6g ivp=%.4g bvp=%.4g pde=%.4g",
                     epoch, report.total, report.mse_ivp, report.mse_bvp, report.mse_pde)
        if (checkpoint_path is not None and train_config.checkpoint_every
                and epoch % train_config.checkpoint_every == 0
                and epoch < train_config.epochs):
            _save_checkpoint(checkpoint_path, params, state, epoch, train_config)

    if checkpoint_path is not None:
        _save_checkpoint(checkpoint_path, params, state, train_config.epochs, train_config)
    return params, trace


def _save_checkpoint(path, params: NetworkParams, state: AdamState, epoch: int,
                     train_config: TrainConfig):
    extra = {"adam_step": np.asarray(state.step), "epoch": np.asarray(epoch)}
    for i, (m, v) in enumerate(zip(state.m, state.v)):
        extra[f"adam_m_{i}"] = m
        extra[f"adam_v_{i}"] = v
    save_params(path, params, extra=extra,
                meta={"epoch": epoch, "train_config": train_config.to_dict()})

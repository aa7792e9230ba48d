"""Gated price approximator: a wide shallow branch plus a deeper branch.

The option surface is ramp-like: nearly linear away from the strike with
localized curvature near it. The network mirrors that structure - a
shallow branch for the coarse shape, a deeper branch for the detail, and
a learned linear combination of the two. Evaluating the layers over
:class:`~bspinn.autodiff.Jet2` inputs produces the exact spot/time
derivatives alongside the value.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .autodiff import Jet2, ParamTape, Var, tanh, value_of
from .conditions import OptionSpec


@dataclass(frozen=True)
class NetworkConfig:
    width: int = 64
    deep_layers: int = 4
    shallow_layers: int = 1
    activation: str = "tanh"
    residual_connections: bool = True
    input_scale: tuple = (1.0, 1.0)   # (s_scale, t_scale), applied before layer 1
    output_scale: float = 1.0
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if self.width < 1:
            raise ValueError("width must be >= 1")
        if not (0 < self.shallow_layers < self.deep_layers):
            raise ValueError("need 0 < shallow_layers < deep_layers")
        if self.activation != "tanh":
            raise ValueError("only the tanh activation is supported")
        if min(self.input_scale) <= 0 or self.output_scale <= 0:
            raise ValueError("scales must be positive")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be 'float32' or 'float64'")

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    def to_dict(self) -> dict:
        return {"width": self.width, "deep_layers": self.deep_layers,
                "shallow_layers": self.shallow_layers, "activation": self.activation,
                "residual_connections": self.residual_connections,
                "input_scale": list(self.input_scale),
                "output_scale": self.output_scale, "seed": self.seed,
                "dtype": self.dtype}

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        d = dict(d)
        d["input_scale"] = tuple(d.get("input_scale", (1.0, 1.0)))
        return cls(**d)


def default_config(spec: OptionSpec, seed: int = 0, **overrides) -> NetworkConfig:
    """Desk-scale defaults: inputs scaled to strike/maturity units, output
    scaled back to currency by the strike."""
    base = dict(input_scale=(spec.strike, spec.maturity),
                output_scale=spec.strike, seed=seed)
    base.update(overrides)
    return NetworkConfig(**base)


@dataclass
class NetworkParams:
    """Weights of both branches plus the scalar combination head.

    Entries are numpy arrays, or tape variables while a loss is being
    recorded. `combine_w` holds (w_shallow, w_deep); `combine_b` is the
    output bias.
    """

    config: NetworkConfig
    deep_w: list
    deep_b: list
    shallow_w: list
    shallow_b: list
    combine_w: object
    combine_b: object

    @property
    def w_shallow(self):
        return value_of(self.combine_w)[0]

    @property
    def w_deep(self):
        return value_of(self.combine_w)[1]

    @property
    def bias_out(self):
        return value_of(self.combine_b)

    def flatten(self) -> list:
        return (list(self.deep_w) + list(self.deep_b)
                + list(self.shallow_w) + list(self.shallow_b)
                + [self.combine_w, self.combine_b])

    def replace_arrays(self, arrays: list) -> "NetworkParams":
        nd, ns = len(self.deep_w), len(self.shallow_w)
        it = iter(arrays)
        deep_w = [next(it) for _ in range(nd)]
        deep_b = [next(it) for _ in range(nd)]
        shallow_w = [next(it) for _ in range(ns)]
        shallow_b = [next(it) for _ in range(ns)]
        return NetworkParams(self.config, deep_w, deep_b, shallow_w, shallow_b,
                             next(it), next(it))

    def n_parameters(self) -> int:
        return int(sum(np.size(value_of(a)) for a in self.flatten()))

    def validate(self):
        for a in self.flatten():
            if not np.all(np.isfinite(value_of(a))):
                raise ValueError("non-finite network parameter")


def _layer_shapes(n_layers: int, width: int) -> list[tuple[int, int]]:
    return [(2, width)] + [(width, width)] * (n_layers - 1) + [(width, 1)]


def init_params(config: NetworkConfig) -> NetworkParams:
    """Xavier-uniform weights, zero biases; deterministic in the seed."""
    rng = np.random.default_rng(config.seed)
    dt = config.np_dtype

    def xavier(shape):
        bound = np.sqrt(6.0 / (shape[0] + shape[1]))
        return rng.uniform(-bound, bound, shape).astype(dt)

    deep_shapes = _layer_shapes(config.deep_layers, config.width)
    shallow_shapes = _layer_shapes(config.shallow_layers, config.width)
    deep_w = [xavier(s) for s in deep_shapes]
    shallow_w = [xavier(s) for s in shallow_shapes]
    deep_b = [np.zeros(s[1], dtype=dt) for s in deep_shapes]
    shallow_b = [np.zeros(s[1], dtype=dt) for s in shallow_shapes]
    # the combination head is a 2-in 1-out linear layer
    combine_w = rng.uniform(-np.sqrt(2.0), np.sqrt(2.0), 2).astype(dt)
    combine_b = np.zeros((), dtype=dt)
    return NetworkParams(config, deep_w, deep_b, shallow_w, shallow_b,
                         combine_w, combine_b)


def wrap_params(params: NetworkParams, tape: ParamTape) -> NetworkParams:
    """Re-register every weight as a tape parameter, in flatten() order."""
    return params.replace_arrays([tape.parameter(a) for a in params.flatten()])


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def _affine(x: Jet2, W, b) -> Jet2:
    # the map is linear, so each jet component transforms independently
    return Jet2(x.value @ W + b, x.d_dS @ W, x.d2_dS2 @ W, x.d_dt @ W)


def _check_inputs(config: NetworkConfig, *arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite network input")


def _stack_jets(S: Jet2, t: Jet2, config: NetworkConfig) -> Jet2:
    """Scale both inputs and stack them on a trailing feature axis,
    componentwise (the map is linear)."""
    dt = config.np_dtype
    s_scale, t_scale = config.input_scale
    shape = np.shape(np.asarray(value_of(S.value)))

    def comp(cs, ct):
        cs = np.broadcast_to(np.asarray(cs, dtype=dt) / s_scale, shape)
        ct = np.broadcast_to(np.asarray(ct, dtype=dt) / t_scale, shape)
        return np.stack([cs, ct], axis=-1)

    return Jet2(comp(S.value, t.value), comp(S.d_dS, t.d_dS),
                comp(S.d2_dS2, t.d2_dS2), comp(S.d_dt, t.d_dt))


def forward(params: NetworkParams, S: Jet2, t: Jet2) -> Jet2:
    """Evaluate the network on seeded jets.

    Returns the price jet: value, d/dS, d2/dS2 and d/dt. When `params`
    entries are tape variables the output components are tape variables
    too, so any scalar built from them is parameter-differentiable.
    """
    if not isinstance(S, Jet2) or not isinstance(t, Jet2):
        raise TypeError("forward expects Jet2-seeded inputs; see price()")
    config = params.config
    params.validate()
    _check_inputs(config, value_of(S.value), value_of(t.value))
    x = _stack_jets(S, t, config)

    def branch(ws, bs, residual: bool) -> Jet2:
        h = tanh(_affine(x, ws[0], bs[0]))
        for W, b in zip(ws[1:-1], bs[1:-1]):
            z = tanh(_affine(h, W, b))
            h = z + h if residual else z
        return _affine(h, ws[-1], bs[-1])

    b_deep = branch(params.deep_w, params.deep_b, config.residual_connections)
    b_shallow = branch(params.shallow_w, params.shallow_b, False)
    w_s = params.combine_w[0]
    w_d = params.combine_w[1]
    out = b_shallow * w_s + b_deep * w_d + params.combine_b
    out = out * config.output_scale
    tail = np.shape(value_of(out.value))[:-1]
    return Jet2(*(_reshape_c(c, tail) for c in out.astuple()))


def _reshape_c(c, shape):
    if isinstance(c, Var):
        return c.reshape(*shape)
    return np.reshape(c, shape)


def price(params: NetworkParams, S, t) -> Jet2:
    """Seed raw spot/time inputs as jets and evaluate the network."""
    return forward(params, Jet2.seed_spot(S), Jet2.seed_time(t))


def forward_values(params: NetworkParams, S, t):
    """Value-only evaluation (no derivative components); same math as
    the value lane of :func:`forward`."""
    config = params.config
    dt = config.np_dtype
    sv = np.asarray(S, dtype=dt)
    tv = np.asarray(t, dtype=dt)
    _check_inputs(config, sv, tv)
    s_scale, t_scale = config.input_scale
    x = np.stack([sv / s_scale, tv / t_scale], axis=-1)

    def branch(ws, bs, residual: bool):
        h = tanh(x @ ws[0] + bs[0])
        for W, b in zip(ws[1:-1], bs[1:-1]):
            z = tanh(h @ W + b)
            h = z + h if residual else z
        return h @ ws[-1] + bs[-1]

    b_deep = branch(params.deep_w, params.deep_b, config.residual_connections)
    b_shallow = branch(params.shallow_w, params.shallow_b, False)
    out = (b_shallow * params.combine_w[0] + b_deep * params.combine_w[1]
           + params.combine_b)
    out = out * config.output_scale
    return _reshape_c(out, np.shape(value_of(out))[:-1])


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

_GROUPS = ("deep_w", "deep_b", "shallow_w", "shallow_b")


def save_params(path, params: NetworkParams, extra: dict | None = None,
                meta: dict | None = None) -> None:
    """Write a checkpoint; load_params(save_params(p)) is bit-exact."""
    payload = {"config_json": np.frombuffer(
        json.dumps({"config": params.config.to_dict(), "meta": meta or {}}).encode(),
        dtype=np.uint8)}
    for group in _GROUPS:
        for i, a in enumerate(getattr(params, group)):
            payload[f"{group}_{i}"] = value_of(a)
    payload["combine_w"] = value_of(params.combine_w)
    payload["combine_b"] = value_of(params.combine_b)
    for k, v in (extra or {}).items():
        payload[f"extra_{k}"] = v
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_params(path):
    """Read a checkpoint; returns (params, extra, meta)."""
    with np.load(path) as data:
        header = json.loads(bytes(data["config_json"]).decode())
        config = NetworkConfig.from_dict(header["config"])
        groups = {g: [] for g in _GROUPS}
        for g in _GROUPS:
            i = 0
            while f"{g}_{i}" in data:
                groups[g].append(data[f"{g}_{i}"])
                i += 1
        extra = {k[len("extra_"):]: data[k] for k in data.files if k.startswith("extra_")}
        params = NetworkParams(config, groups["deep_w"], groups["deep_b"],
                               groups["shallow_w"], groups["shallow_b"],
                               data["combine_w"], data["combine_b"])
    return params, extra, header["meta"]

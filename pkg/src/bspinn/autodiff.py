"""Differentiable scalars for PDE-constrained training.

Two cooperating mechanisms:

* ``Jet2`` — forward-mode truncated Taylor carrier. A jet holds a value
  together with its first and second derivative w.r.t. the spot input and
  its first derivative w.r.t. the time input. Propagating jets through a
  computation yields exact spot/time derivatives of the output.

* ``ParamTape`` / ``Var`` — reverse-mode tape over (batched) numpy arrays.
  Any scalar produced from taped values can be differentiated w.r.t. every
  registered parameter in a single backward sweep.

The two compose: jet components may themselves be tape variables, so a
PDE residual built from jet derivatives remains differentiable w.r.t.
network parameters.
"""
from __future__ import annotations

from typing import Callable, Sequence, Union

import numpy as np

Arrayish = Union[float, np.ndarray, "Var"]

__all__ = [
    "ParamTape",
    "Var",
    "Jet2",
    "jet_apply",
    "tape_gradient",
    "tanh",
    "exp",
    "log",
    "maximum",
    "mean",
    "value_of",
]


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` over axes that were broadcast to reach its shape."""
    if np.shape(grad) == shape:
        return grad
    grad = np.asarray(grad)
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad.reshape(shape)


class Var:
    """A value recorded on a :class:`ParamTape`.

    Supports the arithmetic needed by the pricing network and losses.
    Instances are immutable; building expressions appends nodes to the
    owning tape in topological order.
    """

    __slots__ = ("tape", "index", "value", "parents")
    __array_ufunc__ = None  # let ndarray defer binary ops to us

    def __init__(self, tape: "ParamTape", index: int, value, parents: tuple):
        self.tape = tape
        self.index = index
        self.value = value
        self.parents = parents

    # -- helpers ---------------------------------------------------------
    def _rec(self, value, parents) -> "Var":
        return self.tape._record(value, parents)

    @property
    def shape(self):
        return np.shape(self.value)

    def __repr__(self):
        return f"Var(index={self.index}, shape={np.shape(self.value)})"

    # -- arithmetic ------------------------------------------------------
    def __add__(self, other):
        ss = np.shape(self.value)
        if isinstance(other, Var):
            os = np.shape(other.value)
            return self._rec(self.value + other.value,
                             ((self, lambda g: _unbroadcast(g, ss)),
                              (other, lambda g: _unbroadcast(g, os))))
        return self._rec(self.value + other, ((self, lambda g: _unbroadcast(g, ss)),))

    __radd__ = __add__

    def __sub__(self, other):
        ss = np.shape(self.value)
        if isinstance(other, Var):
            os = np.shape(other.value)
            return self._rec(self.value - other.value,
                             ((self, lambda g: _unbroadcast(g, ss)),
                              (other, lambda g: _unbroadcast(-g, os))))
        return self._rec(self.value - other, ((self, lambda g: _unbroadcast(g, ss)),))

    def __rsub__(self, other):
        ss = np.shape(self.value)
        return self._rec(other - self.value, ((self, lambda g: _unbroadcast(-g, ss)),))

    def __neg__(self):
        return self._rec(-self.value, ((self, lambda g: -g),))

    def __mul__(self, other):
        ss = np.shape(self.value)
        sv = self.value
        if isinstance(other, Var):
            os = np.shape(other.value)
            ov = other.value
            return self._rec(sv * ov,
                             ((self, lambda g: _unbroadcast(g * ov, ss)),
                              (other, lambda g: _unbroadcast(g * sv, os))))
        return self._rec(sv * other, ((self, lambda g: _unbroadcast(g * other, ss)),))

    __rmul__ = __mul__

    def __truediv__(self, other):
        ss = np.shape(self.value)
        sv = self.value
        ov = other.value if isinstance(other, Var) else other
        if np.any(np.asarray(ov) == 0):
            raise ZeroDivisionError("division by a zero value on the tape")
        if isinstance(other, Var):
            os = np.shape(other.value)
            q = sv / ov
            return self._rec(q,
                             ((self, lambda g: _unbroadcast(g / ov, ss)),
                              (other, lambda g: _unbroadcast(-g * q / ov, os))))
        return self._rec(sv / ov, ((self, lambda g: _unbroadcast(g / ov, ss)),))

    def __rtruediv__(self, other):
        ss = np.shape(self.value)
        sv = self.value
        if np.any(np.asarray(sv) == 0):
            raise ZeroDivisionError("division by a zero value on the tape")
        q = other / sv
        return self._rec(q, ((self, lambda g: _unbroadcast(-g * q / sv, ss)),))

    def __matmul__(self, other):
        sv = self.value
        if isinstance(other, Var):
            ov = other.value
            return self._rec(sv @ ov,
                             ((self, lambda g: g @ ov.T),
                              (other, lambda g: sv.T @ g)))
        return self._rec(sv @ other, ((self, lambda g: g @ other.T),))

    def __rmatmul__(self, other):
        sv = self.value
        return self._rec(other @ sv, ((self, lambda g: other.T @ g),))

    def __getitem__(self, key):
        sv = self.value
        shape = np.shape(sv)
        dtype = np.asarray(sv).dtype

        def vjp(g):
            out = np.zeros(shape, dtype=dtype)
            out[key] = g
            return out

        return self._rec(sv[key], ((self, vjp),))

    # -- elementary functions ---------------------------------------------
    def tanh(self) -> "Var":
        y = np.tanh(self.value)
        return self._rec(y, ((self, lambda g: g * (1.0 - y * y)),))

    def exp(self) -> "Var":
        y = np.exp(self.value)
        return self._rec(y, ((self, lambda g: g * y),))

    def log(self) -> "Var":
        if np.any(np.asarray(self.value) <= 0):
            raise ValueError("log of a non-positive value on the tape")
        sv = self.value
        return self._rec(np.log(sv), ((self, lambda g: g / sv),))

    def maximum(self, c: float) -> "Var":
        """Elementwise max with a constant; zero slope exactly at the kink."""
        sv = self.value
        mask = sv > c
        return self._rec(np.maximum(sv, c), ((self, lambda g: g * mask),))

    def reshape(self, *shape) -> "Var":
        old = np.shape(self.value)
        return self._rec(np.reshape(self.value, shape), ((self, lambda g: np.reshape(g, old)),))

    def mean(self) -> "Var":
        """Mean reduction; accumulates in float64 for a stable scalar head."""
        sv = np.asarray(self.value)
        n = sv.size
        shape, dtype = sv.shape, sv.dtype

        def vjp(g):
            return np.full(shape, g / n, dtype=dtype)

        return self._rec(np.mean(sv, dtype=np.float64), ((self, vjp),))


class ParamTape:
    """Append-only record of elementary operations on :class:`Var` values.

    Construction is single-writer: one tape per loss evaluation. Nodes are
    stored in creation order, which is automatically topological because
    an operation's operands must exist before it.
    """

    __slots__ = ("nodes", "parameters")

    def __init__(self):
        self.nodes: list[Var] = []
        self.parameters: list[Var] = []

    def _record(self, value, parents: tuple) -> Var:
        var = Var(self, len(self.nodes), value, parents)
        self.nodes.append(var)
        return var

    def parameter(self, value) -> Var:
        """Register a leaf whose gradient :func:`tape_gradient` will report."""
        var = self._record(value, ())
        self.parameters.append(var)
        return var

    def watch(self, value) -> Var:
        """Record a leaf without registering it as a parameter."""
        return self._record(value, ())

    def __len__(self) -> int:
        return len(self.nodes)

    def gradient(self, output: Var, wrt: Sequence[Var]) -> list[np.ndarray]:
        """Backward sweep: d(output)/d(w) for each w in `wrt`.

        Touches each tape node at most once; nodes that do not influence
        `output` are skipped and their leaves get zero gradients.
        """
        if not isinstance(output, Var) or output.tape is not self:
            raise ValueError("output is not a node on this tape")
        if np.size(output.value) != 1:
            raise ValueError("gradient target must be a scalar node")
        for w in wrt:
            if not isinstance(w, Var) or w.tape is not self:
                raise ValueError("gradient requested w.r.t. a non-tape value")

        grads: list = [None] * len(self.nodes)
        grads[output.index] = np.ones_like(output.value)
        for node in reversed(self.nodes[: output.index + 1]):
            g = grads[node.index]
            if g is None:
                continue
            for parent, vjp in node.parents:
                pg = vjp(g)
                acc = grads[parent.index]
                grads[parent.index] = pg if acc is None else acc + pg
        out = []
        for w in wrt:
            g = grads[w.index]
            out.append(np.zeros_like(w.value) if g is None else np.asarray(g))
        return out


def tape_gradient(tape: ParamTape, output: Var) -> list[np.ndarray]:
    """Gradient of a scalar tape node w.r.t. every registered parameter."""
    return tape.gradient(output, tape.parameters)


# ---------------------------------------------------------------------------
# forward-mode jets
# ---------------------------------------------------------------------------

def value_of(x):
    """Underlying numeric value of a Var, jet, or plain number/array."""
    if isinstance(x, Var):
        return x.value
    if isinstance(x, Jet2):
        return value_of(x.value)
    return x


def _tanh_c(x):
    return x.tanh() if isinstance(x, Var) else np.tanh(x)


def _exp_c(x):
    return x.exp() if isinstance(x, Var) else np.exp(x)


def _log_c(x):
    if isinstance(x, Var):
        return x.log()
    if np.any(np.asarray(x) <= 0):
        raise ValueError("log of a non-positive value")
    return np.log(x)


def _max_c(x, c):
    return x.maximum(c) if isinstance(x, Var) else np.maximum(x, c)


class Jet2:
    """Truncated Taylor carrier: value, d/dS, d2/dS2, d/dt.

    Seeds: the spot input is ``(S, 1, 0, 0)``, the time input ``(t, 0, 0,
    1)``, constants ``(c, 0, 0, 0)``. Arithmetic follows the usual
    truncated-Taylor propagation rules, so composing jet operations gives
    the jet of the composite function. Components may be scalars, arrays
    (batched evaluation) or tape variables (parameter-differentiable
    evaluation).
    """

    __slots__ = ("value", "d_dS", "d2_dS2", "d_dt")

    def __init__(self, value, d_dS=0.0, d2_dS2=0.0, d_dt=0.0):
        self.value = value
        self.d_dS = d_dS
        self.d2_dS2 = d2_dS2
        self.d_dt = d_dt

    @classmethod
    def seed_spot(cls, S) -> "Jet2":
        if np.isscalar(S):
            return cls(float(S), 1.0, 0.0, 0.0)
        S = np.asarray(S)
        return cls(S, np.ones_like(S), np.zeros_like(S), np.zeros_like(S))

    @classmethod
    def seed_time(cls, t) -> "Jet2":
        if np.isscalar(t):
            return cls(float(t), 0.0, 0.0, 1.0)
        t = np.asarray(t)
        return cls(t, np.zeros_like(t), np.zeros_like(t), np.ones_like(t))

    @classmethod
    def constant(cls, c) -> "Jet2":
        if np.isscalar(c):
            return cls(float(c), 0.0, 0.0, 0.0)
        c = np.asarray(c)
        z = np.zeros_like(c)
        return cls(c, z, z, z)

    def astuple(self):
        return (self.value, self.d_dS, self.d2_dS2, self.d_dt)

    def __repr__(self):
        return (f"Jet2(value={self.value!r}, d_dS={self.d_dS!r}, "
                f"d2_dS2={self.d2_dS2!r}, d_dt={self.d_dt!r})")

    # -- arithmetic ------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, Jet2):
            return Jet2(self.value + other.value, self.d_dS + other.d_dS,
                        self.d2_dS2 + other.d2_dS2, self.d_dt + other.d_dt)
        return Jet2(self.value + other, self.d_dS, self.d2_dS2, self.d_dt)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Jet2):
            return Jet2(self.value - other.value, self.d_dS - other.d_dS,
                        self.d2_dS2 - other.d2_dS2, self.d_dt - other.d_dt)
        return Jet2(self.value - other, self.d_dS, self.d2_dS2, self.d_dt)

    def __rsub__(self, other):
        return Jet2(other - self.value, -self.d_dS, -self.d2_dS2, -self.d_dt)

    def __neg__(self):
        return Jet2(-self.value, -self.d_dS, -self.d2_dS2, -self.d_dt)

    def __mul__(self, other):
        if isinstance(other, Jet2):
            return Jet2(
                self.value * other.value,
                self.d_dS * other.value + self.value * other.d_dS,
                (self.d2_dS2 * other.value + 2.0 * (self.d_dS * other.d_dS)
                 + self.value * other.d2_dS2),
                self.d_dt * other.value + self.value * other.d_dt,
            )
        return Jet2(self.value * other, self.d_dS * other,
                    self.d2_dS2 * other, self.d_dt * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet2):
            if np.any(np.asarray(value_of(other)) == 0):
                raise ZeroDivisionError("jet division by zero")
            inv = 1.0 / other
            return Jet2(self.value * inv, self.d_dS * inv,
                        self.d2_dS2 * inv, self.d_dt * inv)
        if np.any(np.asarray(value_of(other.value)) == 0):
            raise ZeroDivisionError("jet division by a zero-valued jet")
        q = self.value / other.value
        d1 = (self.d_dS - q * other.d_dS) / other.value
        d2 = (self.d2_dS2 - 2.0 * (d1 * other.d_dS) - q * other.d2_dS2) / other.value
        dt = (self.d_dt - q * other.d_dt) / other.value
        return Jet2(q, d1, d2, dt)

    def __rtruediv__(self, other):
        return Jet2.constant(other).__truediv__(self)


def _jet_unary(x: Jet2, y, g1, g2) -> Jet2:
    """Chain rule for y = f(x) given precomputed f(x), f'(x), f''(x)."""
    return Jet2(
        y,
        g1 * x.d_dS,
        g2 * (x.d_dS * x.d_dS) + g1 * x.d2_dS2,
        g1 * x.d_dt,
    )


def _tanh_jet_taped(x: Jet2) -> Jet2:
    """Fused taped tanh of a jet: one tape node per output component.

    Equivalent to composing elementary taped ops but with shared
    intermediates, which matters on the batched training path.
    """
    v = x.value
    tape = v.tape
    vv = v.value
    y = np.tanh(vv)
    g1 = 1.0 - y * y
    g2 = -2.0 * (y * g1)

    ds, dss, dt = x.d_dS, x.d2_dS2, x.d_dt
    ds_v = value_of(ds)
    dss_v = value_of(dss)
    dt_v = value_of(dt)

    y_o = tape._record(y, ((v, lambda g: g * g1),))

    ps = [(v, lambda g: g * (ds_v * g2))]
    if isinstance(ds, Var):
        ps.append((ds, lambda g: g * g1))
    ds_o = tape._record(g1 * ds_v, tuple(ps))

    def vjp_v_dss(g):
        g3 = -2.0 * (g1 * g1 + y * g2)
        return g * (ds_v * ds_v * g3 + dss_v * g2)

    ps = [(v, vjp_v_dss)]
    if isinstance(ds, Var):
        ps.append((ds, lambda g: g * (2.0 * (g2 * ds_v))))
    if isinstance(dss, Var):
        ps.append((dss, lambda g: g * g1))
    dss_o = tape._record(g2 * (ds_v * ds_v) + g1 * dss_v, tuple(ps))

    ps = [(v, lambda g: g * (dt_v * g2))]
    if isinstance(dt, Var):
        ps.append((dt, lambda g: g * g1))
    dt_o = tape._record(g1 * dt_v, tuple(ps))

    return Jet2(y_o, ds_o, dss_o, dt_o)


def tanh(x):
    if isinstance(x, Jet2):
        if isinstance(x.value, Var):
            return _tanh_jet_taped(x)
        y = np.tanh(x.value)
        g1 = 1.0 - y * y
        return _jet_unary(x, y, g1, -2.0 * (y * g1))
    return _tanh_c(x)


def exp(x):
    if isinstance(x, Jet2):
        y = _exp_c(x.value)
        return _jet_unary(x, y, y, y)
    return _exp_c(x)


def log(x):
    if isinstance(x, Jet2):
        v = value_of(x.value)
        if np.any(np.asarray(v) <= 0):
            raise ValueError("log of a non-positive jet value")
        y = _log_c(x.value)
        g1 = 1.0 / v
        return _jet_unary(x, y, g1, -g1 * g1)
    return _log_c(x)


def maximum(x, c: float):
    """Max with a constant; derivative components use subgradient 0 at the kink."""
    if isinstance(x, Jet2):
        v = value_of(x.value)
        mask = np.asarray(v) > c
        if np.isscalar(x.value):
            mask = float(mask)
        y = _max_c(x.value, c)
        return Jet2(y, mask * x.d_dS, mask * x.d2_dS2, mask * x.d_dt)
    return _max_c(x, c)


def mean(x):
    if isinstance(x, Var):
        return x.mean()
    return np.mean(np.asarray(x), dtype=np.float64)


_BINARY = {"+", "-", "*", "/"}
_UNARY: dict[str, Callable] = {"tanh": tanh, "exp": exp, "ln": log}


def jet_apply(op: str, args: Sequence[Jet2]) -> Jet2:
    """Apply one elementary operation to jets.

    `op` is one of ``+ - * / tanh exp ln max``; `max` takes the operand
    jet followed by a constant jet (the kink threshold).
    """
    if op in _BINARY:
        if len(args) != 2:
            raise ValueError(f"operation {op!r} expects 2 arguments, got {len(args)}")
        a, b = args
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        return a / b
    if op in _UNARY:
        if len(args) != 1:
            raise ValueError(f"operation {op!r} expects 1 argument, got {len(args)}")
        return _UNARY[op](args[0])
    if op == "max":
        if len(args) != 2:
            raise ValueError("operation 'max' expects the operand and a constant jet")
        c = value_of(args[1].value)
        return maximum(args[0], float(c))
    raise ValueError(f"unsupported elementary operation {op!r}")

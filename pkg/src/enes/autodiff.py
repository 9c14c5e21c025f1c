"""Differentiation substrate.

Input gradients (grad_s T, grad_r T) are obtained by forward-mode tangent
propagation: one pass carries a block of k directional derivatives alongside
the value, with k = dim(s) + dim(r) <= 6.  Parameter and latent gradients of
the loss come from reverse-mode accumulation over that augmented forward
computation (reverse-over-forward), backed by jax.

A standalone DualScalar type implements the exact dual-number rules; it is
deliberately independent of the jax path and serves as a cross-check oracle
in the test suite.

All numerics are float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import jax
import jax.numpy as jnp
import numpy as np

_DIV_GUARD = 1e-12


class NumericDomainError(ArithmeticError):
    """Guard violation in a primitive (division / sqrt near zero)."""


# ---------------------------------------------------------------------------
# Primitive set (jax-traceable; value, tangent and adjoint rules come from
# jvp/vjp and are exercised by the dot-product tests)

def affine(x, w, b):
    return x @ w + b


def gelu(x):
    # tanh approximation; closed-form derivative, adequate at desk scale
    c = jnp.sqrt(2.0 / jnp.pi)
    return 0.5 * x * (1.0 + jnp.tanh(c * (x + 0.044715 * x**3)))


def gaussian_adaptive(x, alpha):
    """exp(-(alpha x)^2) with one learnable alpha per neuron."""
    return jnp.exp(-((alpha * x) ** 2))


def sigmoid(x):
    return jax.nn.sigmoid(x)


def softmax(x, axis=-1):
    return jax.nn.softmax(x, axis=axis)


def layer_norm(x, axis=-1, eps=1e-6):
    mu = jnp.mean(x, axis=axis, keepdims=True)
    var = jnp.var(x, axis=axis, keepdims=True)
    return (x - mu) / jnp.sqrt(var + eps)


def guarded_div(a, b):
    if isinstance(b, (float, int)) or (isinstance(b, np.ndarray) and not isinstance(b, jax.core.Tracer)):
        if np.any(np.abs(b) < _DIV_GUARD):
            raise NumericDomainError("division denominator below guard")
    return a / b


def guarded_sqrt(x):
    if isinstance(x, (float, int)) or (isinstance(x, np.ndarray) and not isinstance(x, jax.core.Tracer)):
        if np.any(np.asarray(x) < 0):
            raise NumericDomainError("sqrt of negative value")
    return jnp.sqrt(x)


PRIMITIVES = {
    "affine": affine,
    "gelu": gelu,
    "gaussian_adaptive": gaussian_adaptive,
    "sigmoid": sigmoid,
    "softmax": softmax,
    "layer_norm": layer_norm,
    "sin": jnp.sin,
    "cos": jnp.cos,
    "exp": jnp.exp,
    "mul": jnp.multiply,
    "div": guarded_div,
    "sqrt": guarded_sqrt,
    "sum": jnp.sum,
}


# ---------------------------------------------------------------------------
# Gradient drivers

def grad_wrt_inputs(f, s, r):
    """Value plus gradients of f(s, r) via one forward-mode tangent pass.

    The tangent block has one column per input coordinate; a single jvp per
    column propagates exact directional derivatives through the computation.
    """
    s = jnp.asarray(s, dtype=jnp.float64)
    r = jnp.asarray(r, dtype=jnp.float64)
    ks, kr = s.shape[-1], r.shape[-1]

    def with_seed(es, er):
        return jax.jvp(f, (s, r), (es, er))

    value = None
    gs = np.zeros(ks)
    gr = np.zeros(kr)
    eye_s = jnp.eye(ks)
    eye_r = jnp.eye(kr)
    zs = jnp.zeros(ks)
    zr = jnp.zeros(kr)
    for i in range(ks):
        value, gs_i = with_seed(eye_s[i], zr)
        gs[i] = gs_i
    for i in range(kr):
        value, gr_i = with_seed(zs, eye_r[i])
        gr[i] = gr_i
    return float(value), gs, gr


def grad_wrt_params(loss_fn, params, latents):
    """Loss value plus reverse-mode adjoints for parameters and latents."""
    value, grads = jax.value_and_grad(loss_fn, argnums=(0, 1))(params, latents)
    return float(value), grads[0], grads[1]


# ---------------------------------------------------------------------------
# Recorded computations

class Tape:
    """A recorded computation: the traced primitive graph of one evaluation
    plus its inputs.  Replaying re-executes the graph and reproduces the
    recorded value bit-exactly."""

    def __init__(self, f, *args):
        self._jaxpr = jax.make_jaxpr(f)(*args)
        self._flat_args = [jnp.asarray(a) for a in jax.tree_util.tree_leaves(args)]
        self.value = f(*args)

    def replay(self):
        out = jax.core.eval_jaxpr(self._jaxpr.jaxpr, self._jaxpr.consts, *self._flat_args)
        return out[0] if len(out) == 1 else out


# ---------------------------------------------------------------------------
# Dual numbers (independent forward-mode cross-check)

@dataclass(frozen=True)
class DualScalar:
    """Value paired with a fixed-width block of directional derivatives."""

    value: float
    tangents: np.ndarray

    @staticmethod
    def seed(value: float, width: int, index: int | None = None) -> "DualScalar":
        t = np.zeros(width)
        if index is not None:
            t[index] = 1.0
        return DualScalar(float(value), t)

    @staticmethod
    def lift(other, width: int) -> "DualScalar":
        if isinstance(other, DualScalar):
            return other
        return DualScalar(float(other), np.zeros(width))

    def _binary(self, other, value, dself, dother):
        o = DualScalar.lift(other, self.tangents.shape[0])
        return DualScalar(value, dself * self.tangents + dother * o.tangents)

    def __add__(self, other):
        o = DualScalar.lift(other, self.tangents.shape[0])
        return self._binary(o, self.value + o.value, 1.0, 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        o = DualScalar.lift(other, self.tangents.shape[0])
        return self._binary(o, self.value - o.value, 1.0, -1.0)

    def __rsub__(self, other):
        return DualScalar.lift(other, self.tangents.shape[0]).__sub__(self)

    def __mul__(self, other):
        o = DualScalar.lift(other, self.tangents.shape[0])
        return self._binary(o, self.value * o.value, o.value, self.value)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = DualScalar.lift(other, self.tangents.shape[0])
        if abs(o.value) < _DIV_GUARD:
            raise NumericDomainError("dual division denominator below guard")
        return self._binary(o, self.value / o.value, 1.0 / o.value, -self.value / o.value**2)

    def __neg__(self):
        return DualScalar(-self.value, -self.tangents)

    def apply(self, fn_value: float, fn_derivative: float) -> "DualScalar":
        """Elementwise chain rule through a scalar function."""
        return DualScalar(fn_value, fn_derivative * self.tangents)


def dual_sin(x: DualScalar) -> DualScalar:
    return x.apply(np.sin(x.value), np.cos(x.value))


def dual_cos(x: DualScalar) -> DualScalar:
    return x.apply(np.cos(x.value), -np.sin(x.value))


def dual_exp(x: DualScalar) -> DualScalar:
    e = np.exp(x.value)
    return x.apply(e, e)


def dual_sqrt(x: DualScalar) -> DualScalar:
    if x.value < _DIV_GUARD:
        raise NumericDomainError("dual sqrt argument below guard")
    v = np.sqrt(x.value)
    return x.apply(v, 0.5 / v)


def dual_gelu(x: DualScalar) -> DualScalar:
    c = np.sqrt(2.0 / np.pi)
    inner = c * (x.value + 0.044715 * x.value**3)
    t = np.tanh(inner)
    val = 0.5 * x.value * (1.0 + t)
    dinner = c * (1.0 + 3 * 0.044715 * x.value**2)
    deriv = 0.5 * (1.0 + t) + 0.5 * x.value * (1.0 - t**2) * dinner
    return x.apply(val, deriv)


def dual_sigmoid(x: DualScalar) -> DualScalar:
    s = 1.0 / (1.0 + np.exp(-x.value))
    return x.apply(s, s * (1.0 - s))


def dual_gaussian_adaptive(x: DualScalar, alpha: float) -> DualScalar:
    v = np.exp(-((alpha * x.value) ** 2))
    return x.apply(v, -2.0 * alpha**2 * x.value * v)

"""First-order optimizers.

Hyperbolic prototypes follow Riemannian SGD: the ambient Euclidean gradient
is metric-scaled (inverse metric negates the time component), projected onto
the tangent space, and the step is retracted with the exponential map plus a
final manifold projection.  Euclidean parameters use Adam with decoupled
weight decay.  Gradient clipping scales the whole gradient collection by a
single global-norm factor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .errors import DimensionError, ParameterError


def riemannian_step(x, ambient_grad, lr: float) -> np.ndarray:
    """One RSGD step on the hyperboloid from point x.

    ambient_grad is the plain Euclidean gradient dL/dx in ambient
    coordinates.  The result satisfies the manifold constraint.
    """
    x = np.asarray(x, dtype=np.float64)
    g = np.asarray(ambient_grad, dtype=np.float64).copy()
    g[0] = -g[0]                       # inverse-metric scaling g_l^{-1} grad
    u = geometry.tangent_project(x, g)
    return geometry.exp_map_at(x, -lr * u, check=False)


def clip_gradients(grads: dict, max_norm: float) -> dict:
    """Jointly rescale a named gradient collection to global L2 norm <= max_norm."""
    if max_norm <= 0:
        raise ParameterError("max_norm must be > 0")
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total <= max_norm:
        return grads
    scale = max_norm / total
    return {k: g * scale for k, g in grads.items()}


@dataclass
class OptimizerState:
    """Adam-with-decoupled-weight-decay state for named Euclidean parameters."""

    learning_rate: float
    weight_decay: float = 0.0
    grad_clip_norm: float | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)
    param_steps: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ParameterError("learning_rate must be > 0")
        if self.weight_decay < 0:
            raise ParameterError("weight_decay must be >= 0")
        if self.grad_clip_norm is not None and self.grad_clip_norm <= 0:
            raise ParameterError("grad_clip_norm must be > 0")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay,
            "grad_clip_norm": self.grad_clip_norm,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "step_count": self.step_count,
            "first_moment": {k: v.tolist() for k, v in self.first_moment.items()},
            "second_moment": {k: v.tolist() for k, v in self.second_moment.items()},
            "param_steps": dict(self.param_steps),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerState":
        st = cls(
            learning_rate=d["learning_rate"],
            weight_decay=d["weight_decay"],
            grad_clip_norm=d["grad_clip_norm"],
            beta1=d["beta1"],
            beta2=d["beta2"],
            eps=d["eps"],
            step_count=d["step_count"],
        )
        st.first_moment = {k: np.asarray(v, dtype=np.float64) for k, v in d["first_moment"].items()}
        st.second_moment = {k: np.asarray(v, dtype=np.float64) for k, v in d["second_moment"].items()}
        st.param_steps = {k: int(v) for k, v in d["param_steps"].items()}
        return st


def euclidean_step(param, grad, state: OptimizerState, name: str = "param") -> np.ndarray:
    """One Adam step (decoupled weight decay, bias correction) for one
    named parameter tensor.  Parameters named differently never interact."""
    p = np.asarray(param, dtype=np.float64)
    g = np.asarray(grad, dtype=np.float64)
    if p.shape != g.shape:
        raise DimensionError(f"param shape {p.shape} vs grad shape {g.shape}")
    if name not in state.first_moment:
        state.first_moment[name] = np.zeros_like(p)
        state.second_moment[name] = np.zeros_like(p)
        state.param_steps[name] = 0
    state.param_steps[name] += 1
    state.step_count += 1
    t = state.param_steps[name]
    m = state.first_moment[name]
    v = state.second_moment[name]
    m[...] = state.beta1 * m + (1.0 - state.beta1) * g
    v[...] = state.beta2 * v + (1.0 - state.beta2) * g * g
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    out = p - state.learning_rate * (
        m_hat / (np.sqrt(v_hat) + state.eps) + state.weight_decay * p
    )
    return out

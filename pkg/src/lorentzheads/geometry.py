"""Lorentz (hyperboloid) model of hyperbolic space.

Points live on the upper sheet of the unit two-sheeted hyperboloid embedded
in Minkowski space R^{n,1} with signature (-, +, ..., +):

    H^n = { x in R^{n+1} : <x, x>_l = -1, x_0 > 0 }

where <x, y>_l = -x0*y0 + sum_i xi*yi.  Curvature is fixed at -1.  All
operations are closed-form and run in float64; small-argument branches guard
the removable singularities of sinh(t)/t and the log map.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, DimensionError

# Tolerance for the manifold constraint |<x,x>_l + 1|.
EPS_MANIFOLD = 1e-9
# Tolerance for tangency |<x,u>_l|.
EPS_TANGENT = 1e-8
# Below this Lorentz norm a tangent vector is treated as zero.
_EPS_SMALL = 1e-6
# Default slack when validating inputs that may carry accumulated drift.
_CHECK_ATOL = 1e-6


def _as_vector(a, name: str) -> np.ndarray:
    v = np.asarray(a, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError(f"{name} must be a 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ContractError(f"{name} contains non-finite entries")
    return v


def origin(n: int) -> np.ndarray:
    """The hyperboloid origin (1, 0, ..., 0) in R^{n+1}."""
    o = np.zeros(n + 1)
    o[0] = 1.0
    return o


def lorentz_inner(x, y) -> float:
    """Lorentzian scalar product -x0*y0 + sum_{i>=1} xi*yi."""
    x = _as_vector(x, "x")
    y = _as_vector(y, "y")
    if x.shape != y.shape or x.shape[0] < 2:
        raise DimensionError(f"incompatible shapes {x.shape} vs {y.shape}")
    return float(-x[0] * y[0] + x[1:] @ y[1:])


def manifold_violation(x) -> float:
    """|<x,x>_l + 1|, zero for exact hyperboloid points."""
    x = np.asarray(x, dtype=np.float64)
    return abs(-x[0] * x[0] + x[1:] @ x[1:] + 1.0)


def assert_on_manifold(x, atol: float = _CHECK_ATOL) -> None:
    x = _as_vector(x, "x")
    if x[0] <= 0.0:
        raise ContractError("point is not on the upper sheet (x0 <= 0)")
    v = manifold_violation(x)
    # the constraint residual scales like x0^2 * machine eps for far points
    if v > atol * max(1.0, x[0] * x[0]):
        raise ContractError(f"point is off the hyperboloid: |<x,x>_l + 1| = {v:.3e}")


def assert_tangent(x, u, atol: float = EPS_TANGENT) -> None:
    ip = lorentz_inner(x, u)
    if abs(ip) > atol:
        raise ContractError(f"vector is not tangent at base point: <x,u>_l = {ip:.3e}")


def project_to_manifold(raw) -> np.ndarray:
    """Repair numerical drift: keep the spatial part, recompute x0."""
    raw = _as_vector(raw, "raw")
    out = raw.copy()
    out[0] = np.sqrt(1.0 + out[1:] @ out[1:])
    return out


def tangent_project(x, g) -> np.ndarray:
    """Lorentz-orthogonal projection of an ambient vector onto T_x H^n:
    proj_x(g) = g + <x,g>_l * x."""
    x = _as_vector(x, "x")
    g = _as_vector(g, "g")
    if x.shape != g.shape:
        raise DimensionError(f"incompatible shapes {x.shape} vs {g.shape}")
    return g + lorentz_inner(x, g) * x


def _sinh_over_t(t: np.ndarray) -> np.ndarray:
    """sinh(t)/t with the series branch near zero."""
    t = np.asarray(t, dtype=np.float64)
    small = np.abs(t) < _EPS_SMALL
    safe = np.where(small, 1.0, t)
    return np.where(small, 1.0 + t * t / 6.0, np.sinh(safe) / safe)


def exp_map_origin(v) -> np.ndarray:
    """Map an n-vector of tangent coordinates at the origin onto H^n.

    Spatial part sinh(||v||) * v/||v||, time coordinate cosh(||v||); the
    zero vector maps to the origin.
    """
    v = _as_vector(v, "v")
    r = np.linalg.norm(v)
    out = np.empty(v.shape[0] + 1)
    out[0] = np.cosh(r)
    out[1:] = _sinh_over_t(r) * v
    return out


def exp_map_at(x, u, check: bool = True) -> np.ndarray:
    """Exponential map at x applied to a tangent vector u:
    cosh(||u||_l) x + sinh(||u||_l) u/||u||_l, re-projected to the manifold."""
    x = _as_vector(x, "x")
    u = _as_vector(u, "u")
    if check:
        assert_on_manifold(x)
        assert_tangent(x, u)
    sq = lorentz_inner(u, u)
    nrm = np.sqrt(max(sq, 0.0))
    if nrm < _EPS_SMALL:
        # series: cosh ~ 1 + t^2/2, sinh(t)/t ~ 1 + t^2/6
        out = (1.0 + sq / 2.0) * x + (1.0 + sq / 6.0) * u
    else:
        out = np.cosh(nrm) * x + (np.sinh(nrm) / nrm) * u
    return project_to_manifold(out)


def hyperbolic_distance(x, y, check: bool = True) -> float:
    """Geodesic distance arccosh(-<x,y>_l); the argument is clamped to >= 1
    so coincident points round to exactly zero."""
    x = _as_vector(x, "x")
    y = _as_vector(y, "y")
    if check:
        assert_on_manifold(x)
        assert_on_manifold(y)
    if x.shape != y.shape:
        raise DimensionError(f"incompatible shapes {x.shape} vs {y.shape}")
    arg = max(-lorentz_inner(x, y), 1.0)
    return float(np.arccosh(arg))


def log_map_at(x, y, check: bool = True) -> np.ndarray:
    """Inverse of exp_map_at: the tangent vector at x pointing to y with
    Lorentz norm d(x, y).  Returns the zero vector for y = x."""
    x = _as_vector(x, "x")
    y = _as_vector(y, "y")
    if check:
        assert_on_manifold(x)
        assert_on_manifold(y)
    if np.array_equal(x, y):
        return np.zeros_like(x)
    alpha = max(-lorentz_inner(x, y), 1.0)
    d = float(np.arccosh(alpha))
    if d < 1e-9:
        return np.zeros_like(x)
    # ||y - alpha*x||_l = sqrt(alpha^2 - 1) = sinh(d)
    u = (d / np.sqrt(alpha * alpha - 1.0)) * (y - alpha * x)
    return tangent_project(x, u)


# ---------------------------------------------------------------------------
# Batched helpers used by the classification heads and the training loop.
# The row layout is (m, n) for tangent coordinates and (m, n+1) for points.
# ---------------------------------------------------------------------------


def batch_exp_map_origin(V: np.ndarray) -> np.ndarray:
    """Row-wise exp_map_origin for an (m, n) matrix; returns (m, n+1)."""
    V = np.asarray(V, dtype=np.float64)
    r = np.linalg.norm(V, axis=1)
    out = np.empty((V.shape[0], V.shape[1] + 1))
    out[:, 0] = np.cosh(r)
    out[:, 1:] = _sinh_over_t(r)[:, None] * V
    return out


def batch_minkowski_inner(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """All-pairs Lorentzian products: (m, n+1) x (C, n+1) -> (m, C)."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    return -np.outer(X[:, 0], Y[:, 0]) + X[:, 1:] @ Y[:, 1:].T


def batch_distance(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """All-pairs geodesic distances between point sets."""
    arg = np.maximum(-batch_minkowski_inner(X, Y), 1.0)
    return np.arccosh(arg)


def grad_exp_map_origin(V: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Pull an ambient cotangent back through exp_map_origin (rows).

    For x = exp0(v), computes J(v)^T g for each row pair (v, g) where
    J is the (n+1, n) Jacobian of exp_map_origin.  V is (m, n), G is
    (m, n+1); returns (m, n).
    """
    V = np.asarray(V, dtype=np.float64)
    G = np.asarray(G, dtype=np.float64)
    r = np.linalg.norm(V, axis=1)
    f = _sinh_over_t(r)                       # sinh(r)/r
    small = r < _EPS_SMALL
    safe = np.where(small, 1.0, r)
    # h = (r*cosh(r) - sinh(r)) / r^3, series 1/3 + r^2/30 near zero
    h = np.where(
        small,
        1.0 / 3.0 + r * r / 30.0,
        (safe * np.cosh(safe) - np.sinh(safe)) / safe**3,
    )
    g0 = G[:, 0]
    Gs = G[:, 1:]
    dot = np.einsum("ij,ij->i", V, Gs)
    # d(x0)/dv = sinh(r) v / r;  d(xs)/dv = f I + h v v^T
    return (g0 * f)[:, None] * V + f[:, None] * Gs + (h * dot)[:, None] * V

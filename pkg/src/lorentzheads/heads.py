"""Distance-based classification heads.

The hyperbolic head maps a feature vector onto the hyperboloid via the
exponential map at the origin, measures geodesic distances to per-class
prototypes, and converts distances to logits via

    s_c = delta - (delta / d_min) * d_c

so that s = delta at distance zero and sigmoid(s) = 0.5 exactly at
d = d_min.  Training uses a sigmoid focal loss.  A matched Euclidean head
(plain linear logits W^T v, or temperature-scaled cosine similarities)
serves as the baseline for controlled comparisons.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .errors import ContractError, ParameterError

# Label used for proposals that belong to no class (all-negative targets).
BACKGROUND = -1

MODE_HYPERBOLIC = "hyperbolic"
MODE_LINEAR = "euclidean-linear"
MODE_COSINE = "euclidean-cosine"
_MODES = (MODE_HYPERBOLIC, MODE_LINEAR, MODE_COSINE)

DEFAULT_DELTA = 1.4
DEFAULT_TAU = 0.07

# Distance gradients are zeroed below this to avoid the d=0 singularity.
_EPS_DIST = 1e-7


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class FocalLossConfig:
    gamma: float = 2.0
    alpha: float = 0.25
    background_as_all_negative: bool = True

    def __post_init__(self):
        if self.gamma < 0:
            raise ParameterError("gamma must be >= 0")
        if not (0.0 < self.alpha <= 1.0):
            raise ParameterError("alpha must be in (0, 1]")


@dataclass
class PrototypeBank:
    """C class prototypes plus head configuration.

    Hyperbolic prototypes are stored as full (n+1)-coordinate hyperboloid
    points (one row each); Euclidean prototypes as plain n-vectors.  For a
    frozen bank d_min is always the recomputed minimum pairwise prototype
    distance; for a learnable bank d_min is the constant 1.
    """

    mode: str
    prototypes: np.ndarray
    class_names: list[str]
    delta: float = DEFAULT_DELTA
    d_min: float = 1.0
    frozen: bool = False

    def __post_init__(self):
        self.prototypes = np.asarray(self.prototypes, dtype=np.float64)
        self.validate()
        if self.frozen:
            self.d_min = self.min_pairwise_distance()

    @property
    def num_classes(self) -> int:
        return self.prototypes.shape[0]

    def validate(self) -> None:
        if self.mode not in _MODES:
            raise ParameterError(f"unknown mode {self.mode!r}")
        if self.prototypes.ndim != 2 or self.prototypes.shape[0] < 2:
            raise ParameterError("need at least 2 prototype rows")
        if len(self.class_names) != self.prototypes.shape[0]:
            raise ParameterError("class_names length must match prototype count")
        if len(set(self.class_names)) != len(self.class_names):
            raise ParameterError("duplicate class names")
        if self.delta <= 0:
            raise ParameterError("delta must be > 0")
        if self.d_min <= 0:
            raise ParameterError("d_min must be > 0")
        if not np.all(np.isfinite(self.prototypes)):
            raise ContractError("prototypes contain non-finite entries")
        if self.mode == MODE_HYPERBOLIC:
            for row in self.prototypes:
                geometry.assert_on_manifold(row)

    def min_pairwise_distance(self) -> float:
        """Brute-force minimum inter-class prototype distance."""
        if self.mode == MODE_HYPERBOLIC:
            D = geometry.batch_distance(self.prototypes, self.prototypes)
        else:
            diff = self.prototypes[:, None, :] - self.prototypes[None, :, :]
            D = np.linalg.norm(diff, axis=-1)
        iu = np.triu_indices(self.num_classes, k=1)
        vals = D[iu]
        # duplicated prototypes (aliasing setups) produce zero-distance pairs,
        # up to arccosh rounding near 1; exclude them from the minimum
        positive = vals[vals > 1e-7]
        if positive.size == 0:
            raise ParameterError("all prototypes coincide; d_min undefined")
        return float(positive.min())

    def renormalize(self) -> None:
        """Re-project hyperbolic prototypes onto the manifold (drift repair)."""
        if self.mode == MODE_HYPERBOLIC:
            for c in range(self.num_classes):
                self.prototypes[c] = geometry.project_to_manifold(self.prototypes[c])

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "class_names": list(self.class_names),
            "delta": self.delta,
            "d_min": self.d_min,
            "frozen": self.frozen,
            "prototypes": self.prototypes.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PrototypeBank":
        return cls(
            mode=d["mode"],
            prototypes=np.asarray(d["prototypes"], dtype=np.float64),
            class_names=list(d["class_names"]),
            delta=float(d["delta"]),
            d_min=float(d["d_min"]),
            frozen=bool(d["frozen"]),
        )

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, sort_keys=True)
            f.write("\n")

    @classmethod
    def load(cls, path) -> "PrototypeBank":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def random_hyperbolic_bank(num_classes, dim, class_names, rng, delta=DEFAULT_DELTA,
                           init_scale=0.01) -> PrototypeBank:
    """Learnable bank initialized near the origin: spatial tangent coordinates
    uniform in [-init_scale, init_scale]^n, then exp0-mapped."""
    W = rng.uniform(-init_scale, init_scale, size=(num_classes, dim))
    return PrototypeBank(
        mode=MODE_HYPERBOLIC,
        prototypes=geometry.batch_exp_map_origin(W),
        class_names=class_names,
        delta=delta,
    )


def random_euclidean_bank(mode, num_classes, dim, class_names, rng,
                          delta=DEFAULT_DELTA, init_scale=0.01) -> PrototypeBank:
    W = rng.uniform(-init_scale, init_scale, size=(num_classes, dim))
    return PrototypeBank(mode=mode, prototypes=W, class_names=class_names, delta=delta)


# ---------------------------------------------------------------------------
# Forward paths
# ---------------------------------------------------------------------------


def distances_to_prototypes(feature, bank: PrototypeBank) -> np.ndarray:
    """Geodesic distance from exp0(feature) to every class prototype."""
    if bank.mode != MODE_HYPERBOLIC:
        raise ContractError("distances_to_prototypes requires a hyperbolic bank")
    x = geometry.exp_map_origin(feature)
    return geometry.batch_distance(x[None, :], bank.prototypes)[0]


def shift_logits(distances, delta: float, d_min: float) -> np.ndarray:
    """s_c = delta - (delta / d_min) * d_c."""
    if d_min <= 0:
        raise ParameterError("d_min must be > 0")
    if delta <= 0:
        raise ParameterError("delta must be > 0")
    d = np.asarray(distances, dtype=np.float64)
    # algebraically delta - (delta/d_min) d; this form is exactly delta at
    # d = 0 and exactly 0 at d = d_min regardless of rounding
    return delta * (1.0 - d / d_min)


def baseline_logits(feature, bank: PrototypeBank, tau: float = DEFAULT_TAU) -> np.ndarray:
    """Euclidean baseline logits: W^T v (linear) or cosine similarity / tau."""
    if bank.mode not in (MODE_LINEAR, MODE_COSINE):
        raise ContractError("baseline_logits requires a euclidean bank")
    v = np.asarray(feature, dtype=np.float64)
    if bank.mode == MODE_LINEAR:
        return bank.prototypes @ v
    vn = np.linalg.norm(v)
    pn = np.linalg.norm(bank.prototypes, axis=1)
    if vn == 0.0 or np.any(pn == 0.0):
        raise ContractError("cosine mode requires nonzero vectors")
    return (bank.prototypes @ v) / (vn * pn) / tau


def bank_logits(feature, bank: PrototypeBank, tau: float = DEFAULT_TAU) -> np.ndarray:
    """Mode-dispatching logits for a single feature vector."""
    if bank.mode == MODE_HYPERBOLIC:
        return shift_logits(distances_to_prototypes(feature, bank), bank.delta, bank.d_min)
    return baseline_logits(feature, bank, tau=tau)


def batch_bank_logits(features: np.ndarray, bank: PrototypeBank,
                      tau: float = DEFAULT_TAU) -> np.ndarray:
    """Mode-dispatching logits for an (m, n) feature matrix; returns (m, C)."""
    F = np.asarray(features, dtype=np.float64)
    if bank.mode == MODE_HYPERBOLIC:
        X = geometry.batch_exp_map_origin(F)
        D = geometry.batch_distance(X, bank.prototypes)
        return shift_logits(D, bank.delta, bank.d_min)
    if bank.mode == MODE_LINEAR:
        return F @ bank.prototypes.T
    fn = np.linalg.norm(F, axis=1, keepdims=True)
    pn = np.linalg.norm(bank.prototypes, axis=1, keepdims=True)
    if np.any(fn == 0.0) or np.any(pn == 0.0):
        raise ContractError("cosine mode requires nonzero vectors")
    return ((F / fn) @ (bank.prototypes / pn).T) / tau


def classify(feature, bank: PrototypeBank, k: int | None = None, tau: float = DEFAULT_TAU):
    """Predict a class for one feature vector.

    Returns (predicted_index, confidence, top_k) where top_k is a list of
    (class_name, confidence) sorted by descending confidence.  Ties break
    toward the lower class index.  k defaults to min(3, C).
    """
    if k is None:
        k = min(3, bank.num_classes)
    if k > bank.num_classes:
        raise ParameterError(f"k={k} exceeds number of classes {bank.num_classes}")
    scores = bank_logits(feature, bank, tau=tau)
    conf = sigmoid(scores)
    pred = int(np.argmax(scores))  # first max == lowest index on ties
    order = np.argsort(-conf, kind="stable")[:k]
    top = [(bank.class_names[int(c)], float(conf[int(c)])) for c in order]
    return pred, float(conf[pred]), top


# ---------------------------------------------------------------------------
# Focal loss
# ---------------------------------------------------------------------------


def _focal_terms(logits: np.ndarray, targets_onehot: np.ndarray, cfg: FocalLossConfig):
    """Per-entry focal loss values and d(loss)/d(logit), numerically stable."""
    s = np.asarray(logits, dtype=np.float64)
    t = np.asarray(targets_onehot, dtype=np.float64)
    sign = 2.0 * t - 1.0
    # q = p_t = sigmoid(sign * s); log q = -softplus(-sign*s)
    q = sigmoid(sign * s)
    log_q = -np.logaddexp(0.0, -sign * s)
    a_t = cfg.alpha * t + (1.0 - cfg.alpha) * (1.0 - t)
    one_m_q = sigmoid(-sign * s)
    w = one_m_q**cfg.gamma
    loss = -a_t * w * log_q
    grad = sign * (a_t * cfg.gamma * q * w * log_q - a_t * one_m_q ** (cfg.gamma + 1.0))
    return loss, grad


def focal_loss(logits, target, cfg: FocalLossConfig = FocalLossConfig()):
    """Sigmoid focal loss for one logit vector, summed over classes.

    target is a class index, or BACKGROUND for all-negative targets.
    Returns (loss, gradient w.r.t. logits).
    """
    s = np.asarray(logits, dtype=np.float64)
    onehot = np.zeros_like(s)
    if target != BACKGROUND:
        onehot[int(target)] = 1.0
    loss, grad = _focal_terms(s, onehot, cfg)
    return float(loss.sum()), grad


def batch_focal_loss(logits: np.ndarray, targets: np.ndarray, cfg: FocalLossConfig):
    """Mean-over-samples focal loss for an (m, C) logit matrix.

    targets holds class indices with BACKGROUND for all-negative rows.
    Returns (mean_loss, gradient (m, C) of the mean loss).
    """
    m, C = logits.shape
    onehot = np.zeros((m, C))
    fg = targets != BACKGROUND
    onehot[np.nonzero(fg)[0], targets[fg]] = 1.0
    loss, grad = _focal_terms(logits, onehot, cfg)
    return float(loss.sum() / m), grad / m


# ---------------------------------------------------------------------------
# Loss + gradients through the full head (training path)
# ---------------------------------------------------------------------------


def hyperbolic_loss_and_grads(features: np.ndarray, bank: PrototypeBank,
                              targets: np.ndarray, cfg: FocalLossConfig):
    """Focal loss through exp0 -> distances -> shifted logits, with analytic
    gradients w.r.t. the input features and the prototypes.

    features is (m, n); returns (loss, grad_features (m, n),
    grad_prototypes (C, n+1) in ambient Euclidean coordinates).
    """
    if bank.mode != MODE_HYPERBOLIC:
        raise ContractError("hyperbolic head required")
    F = np.asarray(features, dtype=np.float64)
    T = bank.prototypes
    X = geometry.batch_exp_map_origin(F)              # (m, n+1)
    alpha = np.maximum(-geometry.batch_minkowski_inner(X, T), 1.0)
    D = np.arccosh(alpha)                             # (m, C)
    S = shift_logits(D, bank.delta, bank.d_min)
    loss, G_S = batch_focal_loss(S, targets, cfg)
    G_D = G_S * (-bank.delta / bank.d_min)
    # d(arccosh)/d(alpha) = 1/sqrt(alpha^2-1); zeroed at coincidence
    denom = np.sqrt(np.maximum(alpha * alpha - 1.0, 0.0))
    W = np.where(D < _EPS_DIST, 0.0, G_D / np.where(denom == 0.0, 1.0, denom))
    # alpha = -<x,t>_l = -x^T g_l t, so dL/dX = -g_l (W T), dL/dT = -g_l (W^T X)
    grad_X = -(W @ T)
    grad_X[:, 0] = -grad_X[:, 0]
    grad_T = -(W.T @ X)
    grad_T[:, 0] = -grad_T[:, 0]
    grad_F = geometry.grad_exp_map_origin(F, grad_X)
    return loss, grad_F, grad_T


def euclidean_loss_and_grads(features: np.ndarray, bank: PrototypeBank,
                             targets: np.ndarray, cfg: FocalLossConfig,
                             tau: float = DEFAULT_TAU):
    """Focal loss through the Euclidean baseline head with analytic gradients
    w.r.t. features (m, n) and prototypes (C, n)."""
    F = np.asarray(features, dtype=np.float64)
    P = bank.prototypes
    if bank.mode == MODE_LINEAR:
        S = F @ P.T
        loss, G_S = batch_focal_loss(S, targets, cfg)
        return loss, G_S @ P, G_S.T @ F
    if bank.mode != MODE_COSINE:
        raise ContractError("euclidean head required")
    fn = np.linalg.norm(F, axis=1, keepdims=True)
    pn = np.linalg.norm(P, axis=1, keepdims=True)
    U = F / fn
    Q = P / pn
    S = (U @ Q.T) / tau
    loss, G_S = batch_focal_loss(S, targets, cfg)
    G_U = (G_S @ Q) / tau
    G_Q = (G_S.T @ U) / tau
    # back through row normalization: d/df = (I - u u^T)/||f|| applied to g
    grad_F = (G_U - np.einsum("ij,ij->i", G_U, U)[:, None] * U) / fn
    grad_P = (G_Q - np.einsum("ij,ij->i", G_Q, Q)[:, None] * Q) / pn
    return loss, grad_F, grad_P

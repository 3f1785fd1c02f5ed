"""End-to-end experiment driver.

A small Euclidean encoder (optional 2-layer perceptron with rectified-linear
activation) feeds one of the classification heads; training minimizes the
sigmoid focal loss with Adam on Euclidean parameters and Riemannian SGD on
hyperbolic prototypes.  Evaluation reports accuracy, supercategory accuracy
(a prediction also counts if it shares the groundtruth's parent category),
per-class precision/recall, seen/unseen splits with their harmonic mean, and
per-bucket accuracy for imbalanced runs.  Runs are deterministic given the
config and seed; checkpoints round-trip bit-exactly.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import geometry, heads, optim
from .data import ClassTree, SyntheticDataset
from .errors import ContractError, NumericalError, ParameterError
from .heads import BACKGROUND, FocalLossConfig, PrototypeBank


@dataclass
class ExperimentConfig:
    dataset: str | None = None
    head_mode: str = heads.MODE_HYPERBOLIC
    delta: float = heads.DEFAULT_DELTA
    d_min_policy: str = "constant"          # "constant" (=1) or "min-inter-class"
    focal_gamma: float = 2.0
    focal_alpha: float = 0.25
    learning_rate: float = 1e-2
    prototype_learning_rate: float | None = None
    weight_decay: float = 0.0
    grad_clip_norm: float | None = None
    epochs: int = 40
    batch_size: int = 64
    seed: int = 0
    eval_every: int = 10
    encoder: bool = True
    encoder_hidden: int = 64
    embed_dim: int = 16
    cosine_tau: float = heads.DEFAULT_TAU
    unseen_classes: list = field(default_factory=list)
    imbalance_exponent: float | None = None
    prototypes_path: str | None = None

    def __post_init__(self):
        if self.head_mode not in (heads.MODE_HYPERBOLIC, heads.MODE_LINEAR, heads.MODE_COSINE):
            raise ParameterError(f"unknown head mode {self.head_mode!r}")
        if self.d_min_policy not in ("constant", "min-inter-class"):
            raise ParameterError(f"unknown d_min policy {self.d_min_policy!r}")
        if self.epochs < 1 or self.batch_size < 1 or self.eval_every < 1:
            raise ParameterError("epochs, batch_size, eval_every must be >= 1")
        if self.learning_rate <= 0:
            raise ParameterError("learning_rate must be > 0")
        if self.delta <= 0:
            raise ParameterError("delta must be > 0")

    @property
    def proto_lr(self) -> float:
        return self.prototype_learning_rate or self.learning_rate

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known
        if extra:
            raise ParameterError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))


@dataclass
class Encoder:
    """Two linear layers with rectified-linear activation in between."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    @classmethod
    def init(cls, rng, n_in: int, hidden: int, n_out: int) -> "Encoder":
        return cls(
            W1=rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_in, hidden)),
            b1=np.zeros(hidden),
            W2=rng.normal(0.0, np.sqrt(2.0 / hidden), size=(hidden, n_out)),
            b2=np.zeros(n_out),
        )

    def forward(self, X: np.ndarray):
        pre = X @ self.W1 + self.b1
        H = np.maximum(pre, 0.0)
        E = H @ self.W2 + self.b2
        return E, (X, pre, H)

    def backward(self, cache, dE: np.ndarray) -> dict:
        X, pre, H = cache
        dH = (dE @ self.W2.T) * (pre > 0.0)
        return {
            "enc.W1": X.T @ dH,
            "enc.b1": dH.sum(axis=0),
            "enc.W2": H.T @ dE,
            "enc.b2": dE.sum(axis=0),
        }

    def params(self) -> dict:
        return {"enc.W1": self.W1, "enc.b1": self.b1, "enc.W2": self.W2, "enc.b2": self.b2}

    def set_param(self, name: str, value: np.ndarray) -> None:
        setattr(self, name.split(".", 1)[1], value)

    def to_dict(self) -> dict:
        return {k.split(".", 1)[1]: v.tolist() for k, v in self.params().items()}

    @classmethod
    def from_dict(cls, d: dict) -> "Encoder":
        return cls(**{k: np.asarray(v, dtype=np.float64) for k, v in d.items()})


def embed(encoder: Encoder | None, X: np.ndarray) -> np.ndarray:
    if encoder is None:
        return np.asarray(X, dtype=np.float64)
    return encoder.forward(X)[0]


def harmonic_mean(a: float, b: float) -> float:
    if a <= 0.0 or b <= 0.0:
        return 0.0
    return 2.0 * a * b / (a + b)


@dataclass
class MetricsReport:
    train_loss: list = field(default_factory=list)   # per-epoch means
    val_accuracy: float | None = None
    supercategory_accuracy: float | None = None
    per_class: dict = field(default_factory=dict)    # name -> {precision, recall, support}
    seen_accuracy: float | None = None
    unseen_accuracy: float | None = None
    harmonic_mean: float | None = None
    bucket_accuracy: dict | None = None
    wall_clock_sec: float = 0.0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def save(self, json_path) -> None:
        json_path = str(json_path)
        with open(json_path, "w") as f:
            json.dump(self.to_dict(), f, sort_keys=True)
            f.write("\n")
        csv_path = json_path[:-5] + ".csv" if json_path.endswith(".json") else json_path + ".csv"
        rows = []
        for i, v in enumerate(self.train_loss):
            rows.append((i, "train_loss", v))
        last = max(len(self.train_loss) - 1, 0)
        for key in ("val_accuracy", "supercategory_accuracy", "seen_accuracy",
                    "unseen_accuracy", "harmonic_mean", "wall_clock_sec"):
            v = getattr(self, key)
            if v is not None:
                rows.append((last, key, v))
        with open(csv_path, "w") as f:
            f.write("epoch,metric,value\n")
            for e, m, v in rows:
                f.write(f"{e},{m},{v!r}\n")


def evaluate(bank: PrototypeBank, encoder: Encoder | None, features: np.ndarray,
             labels: np.ndarray, tree: ClassTree, tau: float = heads.DEFAULT_TAU,
             unseen_classes=(), buckets=None) -> MetricsReport:
    """Score a labeled split.

    Foreground rows count as correct when the argmax class is right;
    background rows count as correct when no class exceeds confidence 0.5.
    Supercategory accuracy accepts any prediction sharing the groundtruth's
    parent.  Per-class precision/recall use confidence-gated predictions
    (max confidence <= 0.5 predicts background).
    """
    t0 = time.perf_counter()
    labels = np.asarray(labels)
    emb = embed(encoder, features)
    S = heads.batch_bank_logits(emb, bank, tau=tau)
    conf = heads.sigmoid(S)
    pred = np.argmax(S, axis=1)
    max_conf = conf[np.arange(len(pred)), pred]
    gated = np.where(max_conf > 0.5, pred, BACKGROUND)

    fg = labels != BACKGROUND
    parents = np.asarray(tree.parents)
    correct = np.where(fg, pred == labels, max_conf <= 0.5)
    sup_correct = np.where(
        fg, parents[pred] == parents[np.where(fg, labels, 0)], max_conf <= 0.5
    )

    per_class = {}
    for c, name in enumerate(tree.leaf_classes):
        tp = int(np.sum((gated == c) & (labels == c)))
        fp = int(np.sum((gated == c) & (labels != c)))
        fn = int(np.sum((gated != c) & (labels == c)))
        per_class[name] = {
            "precision": tp / (tp + fp) if tp + fp else 0.0,
            "recall": tp / (tp + fn) if tp + fn else 0.0,
            "support": int(np.sum(labels == c)),
        }

    report = MetricsReport(
        val_accuracy=float(correct.mean()),
        supercategory_accuracy=float(sup_correct.mean()),
        per_class=per_class,
    )

    unseen_classes = sorted(int(u) for u in unseen_classes)
    if unseen_classes:
        unseen_mask = np.isin(labels, unseen_classes)
        seen_fg = fg & ~unseen_mask
        report.seen_accuracy = float(correct[seen_fg].mean()) if seen_fg.any() else 0.0
        report.unseen_accuracy = float(correct[unseen_mask].mean()) if unseen_mask.any() else 0.0
        report.harmonic_mean = harmonic_mean(report.seen_accuracy, report.unseen_accuracy)

    if buckets:
        name_to_idx = {n: i for i, n in enumerate(tree.leaf_classes)}
        acc = {}
        for bucket in ("frequent", "common", "rare"):
            members = [name_to_idx[n] for n, b in buckets.items() if b == bucket]
            rows = np.isin(labels, members)
            acc[bucket] = float(correct[rows].mean()) if rows.any() else 0.0
        report.bucket_accuracy = acc

    report.wall_clock_sec = time.perf_counter() - t0
    return report


def evaluate_split(bank, encoder, dataset: SyntheticDataset, split: str = "val",
                   tau: float = heads.DEFAULT_TAU) -> MetricsReport:
    idx = dataset.val_idx if split == "val" else dataset.train_idx
    return evaluate(
        bank, encoder, dataset.features[idx], dataset.labels[idx], dataset.tree,
        tau=tau, unseen_classes=dataset.unseen_classes, buckets=dataset.buckets or None,
    )


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(path, config: ExperimentConfig, epoch: int, encoder: Encoder | None,
                    bank: PrototypeBank, opt: optim.OptimizerState, rng: np.random.Generator,
                    train_loss: list) -> None:
    payload = {
        "config": config.to_dict(),
        "epoch": epoch,
        "encoder": encoder.to_dict() if encoder is not None else None,
        "bank": bank.to_dict(),
        "optimizer": opt.to_dict(),
        "rng_state": rng.bit_generator.state,
        "train_loss": train_loss,
    }
    with open(path, "w") as f:
        json.dump(payload, f, sort_keys=True)
        f.write("\n")


def load_checkpoint(path):
    with open(path) as f:
        payload = json.load(f)
    config = ExperimentConfig.from_dict(payload["config"])
    encoder = Encoder.from_dict(payload["encoder"]) if payload["encoder"] else None
    bank = PrototypeBank.from_dict(payload["bank"])
    opt = optim.OptimizerState.from_dict(payload["optimizer"])
    rng = np.random.default_rng(0)
    rng.bit_generator.state = payload["rng_state"]
    return config, payload["epoch"], encoder, bank, opt, rng, payload.get("train_loss", [])


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def _init_bank(config: ExperimentConfig, class_names, rng) -> PrototypeBank:
    if config.head_mode == heads.MODE_HYPERBOLIC:
        return heads.random_hyperbolic_bank(
            len(class_names), config.embed_dim, class_names, rng, delta=config.delta
        )
    return heads.random_euclidean_bank(
        config.head_mode, len(class_names), config.embed_dim, class_names, rng,
        delta=config.delta,
    )


def _loss_and_grads(config, bank, targets, emb):
    cfg = FocalLossConfig(gamma=config.focal_gamma, alpha=config.focal_alpha)
    if bank.mode == heads.MODE_HYPERBOLIC:
        return heads.hyperbolic_loss_and_grads(emb, bank, targets, cfg)
    return heads.euclidean_loss_and_grads(emb, bank, targets, cfg, tau=config.cosine_tau)


def _nan_diagnostics(batch_idx, encoder, bank):
    norms = {"prototypes": float(np.linalg.norm(bank.prototypes))}
    if encoder is not None:
        norms.update({k: float(np.linalg.norm(v)) for k, v in encoder.params().items()})
    return {"last_batch": [int(i) for i in batch_idx], "param_norms": norms}


def train(config: ExperimentConfig, dataset: SyntheticDataset, bank: PrototypeBank | None = None,
          out_dir=None, resume=None, checkpoint_name: str = "checkpoint.json"):
    """Run the full training loop.

    If `bank` is a frozen prototype bank its prototypes stay fixed (zero-shot
    setting) and only the encoder trains.  Returns (bank, encoder, report,
    checkpoint_paths).
    """
    import os

    t0 = time.perf_counter()
    n_in = dataset.num_features
    if not config.encoder and config.embed_dim != n_in:
        raise ParameterError("without an encoder, embed_dim must equal the feature dim")

    if resume is not None:
        config, start_epoch, encoder, bank, opt, rng, loss_hist = load_checkpoint(resume)
    else:
        rng = np.random.default_rng(config.seed)
        encoder = (
            Encoder.init(rng, n_in, config.encoder_hidden, config.embed_dim)
            if config.encoder else None
        )
        if bank is None:
            bank = _init_bank(config, list(dataset.tree.leaf_classes), rng)
        opt = optim.OptimizerState(
            learning_rate=config.learning_rate,
            weight_decay=config.weight_decay,
            grad_clip_norm=config.grad_clip_norm,
        )
        start_epoch, loss_hist = 0, []

    if bank.num_classes != dataset.num_classes:
        raise ParameterError("bank class count does not match dataset")
    train_prototypes = not bank.frozen
    checkpoints = []

    for epoch in range(start_epoch, config.epochs):
        perm = rng.permutation(dataset.train_idx)
        total, seen = 0.0, 0
        for lo in range(0, len(perm), config.batch_size):
            batch = perm[lo:lo + config.batch_size]
            X = dataset.features[batch]
            y = dataset.labels[batch]
            if encoder is not None:
                emb, cache = encoder.forward(X)
            else:
                emb = X
            try:
                loss, grad_emb, grad_proto = _loss_and_grads(config, bank, y, emb)
            except ContractError as e:
                # inputs were validated before the loop; a contract violation
                # here means the iterates overflowed
                raise NumericalError(
                    f"numerical breakdown at epoch {epoch}: {e}; "
                    f"{_nan_diagnostics(batch, encoder, bank)}"
                ) from e
            if not np.isfinite(loss):
                raise NumericalError(
                    f"non-finite loss at epoch {epoch}: "
                    f"{_nan_diagnostics(batch, encoder, bank)}"
                )
            grads = {}
            if encoder is not None:
                grads.update(encoder.backward(cache, grad_emb))
            if train_prototypes:
                grads["prototypes"] = grad_proto
            if config.grad_clip_norm is not None:
                grads = optim.clip_gradients(grads, config.grad_clip_norm)
            if encoder is not None:
                for name, p in encoder.params().items():
                    encoder.set_param(name, optim.euclidean_step(p, grads[name], opt, name))
            if train_prototypes:
                if bank.mode == heads.MODE_HYPERBOLIC:
                    try:
                        for c in range(bank.num_classes):
                            bank.prototypes[c] = optim.riemannian_step(
                                bank.prototypes[c], grads["prototypes"][c], config.proto_lr
                            )
                    except ContractError as e:
                        raise NumericalError(
                            f"numerical breakdown at epoch {epoch}: {e}; "
                            f"{_nan_diagnostics(batch, encoder, bank)}"
                        ) from e
                else:
                    bank.prototypes = optim.euclidean_step(
                        bank.prototypes, grads["prototypes"], opt, "prototypes"
                    )
            if not np.all(np.isfinite(bank.prototypes)) or (
                encoder is not None
                and any(not np.all(np.isfinite(p)) for p in encoder.params().values())
            ):
                raise NumericalError(
                    f"non-finite parameters after update at epoch {epoch}: "
                    f"{_nan_diagnostics(batch, encoder, bank)}"
                )
            total += loss * len(batch)
            seen += len(batch)
        loss_hist.append(total / seen)

        last = epoch == config.epochs - 1
        if out_dir is not None and ((epoch + 1) % config.eval_every == 0 or last):
            path = os.path.join(out_dir, checkpoint_name)
            save_checkpoint(path, config, epoch + 1, encoder, bank, opt, rng, loss_hist)
            checkpoints.append(path)

    report = evaluate_split(bank, encoder, dataset, "val", tau=config.cosine_tau)
    report.train_loss = list(loss_hist)
    report.wall_clock_sec = time.perf_counter() - t0
    if out_dir is not None:
        report.save(os.path.join(out_dir, "metrics.json"))
    return bank, encoder, report, checkpoints


def zero_shot_eval(config: ExperimentConfig, dataset: SyntheticDataset,
                   bank: PrototypeBank, out_dir=None):
    """Train the encoder against a frozen prototype bank with unseen classes
    held out of the train split, then evaluate seen/unseen accuracy and HM."""
    from .data import holdout_unseen

    if not bank.frozen:
        raise ParameterError("zero-shot evaluation requires a frozen bank")
    if bank.num_classes != dataset.num_classes:
        raise ParameterError("prototype file must contain every class (seen + unseen)")
    if not config.unseen_classes:
        held, _ = dataset, None
    else:
        held, _ = holdout_unseen(dataset, config.unseen_classes)
    bank, encoder, report, ckpts = train(config, held, bank=bank, out_dir=out_dir)
    return bank, encoder, report, ckpts

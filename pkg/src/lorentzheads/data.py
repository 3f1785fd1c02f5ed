"""Synthetic hierarchical datasets.

Samples stand in for detector proposal features: supercategory means are
drawn from a broad isotropic Gaussian, leaf-class means scatter around their
parent mean, and individual samples scatter around their leaf mean.  An
optional fraction of background samples comes from a diffuse Gaussian
covering the feature range.  Generation is a pure function of the parameters
and the seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, ParameterError
from .heads import BACKGROUND


@dataclass
class ClassTree:
    """Depth-2 hierarchy: leaf classes grouped under supercategories."""

    supercategories: list[str]
    leaf_classes: list[str]
    parents: list[int]  # parent supercategory index per leaf

    def __post_init__(self):
        S, C = len(self.supercategories), len(self.leaf_classes)
        if S < 2:
            raise ParameterError("need at least 2 supercategories")
        if C < S:
            raise ParameterError("need at least as many leaf classes as supercategories")
        if len(self.parents) != C or any(not (0 <= p < S) for p in self.parents):
            raise ParameterError("invalid parent assignment")

    def to_dict(self) -> dict:
        return {
            "supercategories": list(self.supercategories),
            "leaf_classes": list(self.leaf_classes),
            "parents": list(self.parents),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClassTree":
        return cls(list(d["supercategories"]), list(d["leaf_classes"]), list(d["parents"]))


@dataclass
class SyntheticDataset:
    features: np.ndarray          # (N, n)
    labels: np.ndarray            # (N,) int, BACKGROUND for background rows
    train_idx: np.ndarray
    val_idx: np.ndarray
    tree: ClassTree
    seed: int
    params: dict = field(default_factory=dict)
    buckets: dict = field(default_factory=dict)   # class name -> frequent/common/rare
    unseen_classes: list[int] = field(default_factory=list)

    @property
    def num_classes(self) -> int:
        return len(self.tree.leaf_classes)

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    def validate(self) -> None:
        N = self.features.shape[0]
        if not np.all(np.isfinite(self.features)):
            raise ContractError("features contain non-finite entries")
        tr, va = set(self.train_idx.tolist()), set(self.val_idx.tolist())
        if tr & va:
            raise ContractError("train/val split must be disjoint")
        # holdout/imbalance datasets deliberately drop train rows
        subsampled = bool(self.unseen_classes) or "power_law_exponent" in self.params
        if not subsampled and len(tr) + len(va) != N:
            raise ContractError("train/val split must cover the dataset")
        counts = np.bincount(
            self.labels[self.train_idx][self.labels[self.train_idx] != BACKGROUND],
            minlength=self.num_classes,
        )
        active = [c for c in range(self.num_classes) if c not in self.unseen_classes]
        low = [c for c in active if counts[c] < 10]
        if low:
            raise ContractError(f"classes with fewer than 10 train samples: {low}")

    def class_counts(self, split: str = "train") -> np.ndarray:
        idx = self.train_idx if split == "train" else self.val_idx
        lab = self.labels[idx]
        return np.bincount(lab[lab != BACKGROUND], minlength=self.num_classes)

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "params": self.params,
            "tree": self.tree.to_dict(),
            "seed": self.seed,
            "features": self.features.tolist(),
            "labels": self.labels.tolist(),
            "splits": {"train": self.train_idx.tolist(), "val": self.val_idx.tolist()},
            "buckets": self.buckets,
            "unseen_classes": list(self.unseen_classes),
        }

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, sort_keys=True)
            f.write("\n")

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticDataset":
        ds = cls(
            features=np.asarray(d["features"], dtype=np.float64),
            labels=np.asarray(d["labels"], dtype=np.int64),
            train_idx=np.asarray(d["splits"]["train"], dtype=np.int64),
            val_idx=np.asarray(d["splits"]["val"], dtype=np.int64),
            tree=ClassTree.from_dict(d["tree"]),
            seed=int(d["seed"]),
            params=d.get("params", {}),
            buckets=d.get("buckets", {}),
            unseen_classes=list(d.get("unseen_classes", [])),
        )
        ds.validate()
        return ds

    @classmethod
    def load(cls, path) -> "SyntheticDataset":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def generate(
    num_features: int = 16,
    num_super: int = 4,
    num_classes: int = 16,
    num_samples: int = 8000,
    sigma_super: float = 4.0,
    sigma_leaf: float = 1.0,
    sigma_x: float = 0.5,
    background_fraction: float = 0.2,
    background_sigma: float | None = None,
    train_fraction: float = 0.8,
    seed: int = 0,
) -> SyntheticDataset:
    """Deterministically generate a labeled hierarchical dataset."""
    if num_classes < num_super:
        raise ParameterError("num_classes must be >= num_super")
    if not (0.0 <= background_fraction < 1.0):
        raise ParameterError("background_fraction must be in [0, 1)")
    if not (0.0 < train_fraction < 1.0):
        raise ParameterError("train_fraction must be in (0, 1)")
    if sigma_leaf < 0 or sigma_super <= 0 or sigma_x < 0:
        raise ParameterError("sigmas must be non-negative (sigma_super > 0)")
    if background_sigma is None:
        background_sigma = sigma_super

    rng = np.random.default_rng(seed)
    super_means = rng.normal(0.0, sigma_super, size=(num_super, num_features))
    parents = [c * num_super // num_classes for c in range(num_classes)]
    leaf_means = super_means[parents] + rng.normal(
        0.0, sigma_leaf, size=(num_classes, num_features)
    )

    n_bg = int(round(num_samples * background_fraction))
    n_fg = num_samples - n_bg
    base, extra = divmod(n_fg, num_classes)
    counts = [base + (1 if c < extra else 0) for c in range(num_classes)]

    feats, labels = [], []
    for c, cnt in enumerate(counts):
        feats.append(leaf_means[c] + rng.normal(0.0, sigma_x, size=(cnt, num_features)))
        labels.append(np.full(cnt, c, dtype=np.int64))
    if n_bg:
        feats.append(rng.normal(0.0, background_sigma, size=(n_bg, num_features)))
        labels.append(np.full(n_bg, BACKGROUND, dtype=np.int64))
    features = np.concatenate(feats)
    labels = np.concatenate(labels)

    # stratified split so every class keeps its share of train samples
    train_parts, val_parts = [], []
    for lab in list(range(num_classes)) + [BACKGROUND]:
        idx = np.nonzero(labels == lab)[0]
        if idx.size == 0:
            continue
        perm = rng.permutation(idx)
        cut = int(round(train_fraction * idx.size))
        train_parts.append(perm[:cut])
        val_parts.append(perm[cut:])
    train_idx = np.sort(np.concatenate(train_parts))
    val_idx = np.sort(np.concatenate(val_parts))

    tree = ClassTree(
        supercategories=[f"super_{s}" for s in range(num_super)],
        leaf_classes=[f"leaf_{c}" for c in range(num_classes)],
        parents=parents,
    )
    ds = SyntheticDataset(
        features=features,
        labels=labels,
        train_idx=train_idx,
        val_idx=val_idx,
        tree=tree,
        seed=seed,
        params={
            "num_features": num_features,
            "num_super": num_super,
            "num_classes": num_classes,
            "num_samples": num_samples,
            "sigma_super": sigma_super,
            "sigma_leaf": sigma_leaf,
            "sigma_x": sigma_x,
            "background_fraction": background_fraction,
            "background_sigma": background_sigma,
            "train_fraction": train_fraction,
        },
    )
    ds.validate()
    return ds


def imbalance_profile(dataset: SyntheticDataset, power_law_exponent: float) -> SyntheticDataset:
    """Subsample train classes to a discrete power-law frequency profile.

    Class ranked r (0-based, by class index) keeps round(n_max * (r+1)^-a)
    train samples.  Classes are bucketed into frequent/common/rare by
    frequency terciles of the resulting counts.
    """
    if power_law_exponent <= 0:
        raise ParameterError("power_law_exponent must be > 0")
    counts = dataset.class_counts("train")
    n_max = counts.max()
    targets = [int(round(n_max * (r + 1) ** (-power_law_exponent)))
               for r in range(dataset.num_classes)]
    if any(t < 1 for t in targets):
        raise ParameterError("exponent subsamples a class below 1 sample")

    rng = np.random.default_rng(dataset.seed + 1)
    keep = []
    train_labels = dataset.labels[dataset.train_idx]
    for c in range(dataset.num_classes):
        idx = dataset.train_idx[train_labels == c]
        perm = rng.permutation(idx)
        keep.append(perm[: min(targets[c], idx.size)])
    keep.append(dataset.train_idx[train_labels == BACKGROUND])
    new_train = np.sort(np.concatenate(keep))

    new_counts = np.bincount(
        dataset.labels[new_train][dataset.labels[new_train] != BACKGROUND],
        minlength=dataset.num_classes,
    )
    order = np.argsort(-new_counts, kind="stable")
    C = dataset.num_classes
    # near-equal terciles so every bucket is populated for C >= 3
    sizes = [len(part) for part in np.array_split(np.arange(C), 3)]
    cut1, cut2 = sizes[0], sizes[0] + sizes[1]
    buckets = {}
    for pos, c in enumerate(order):
        name = dataset.tree.leaf_classes[int(c)]
        buckets[name] = "frequent" if pos < cut1 else ("common" if pos < cut2 else "rare")

    out = SyntheticDataset(
        features=dataset.features,
        labels=dataset.labels,
        train_idx=new_train,
        val_idx=dataset.val_idx,
        tree=dataset.tree,
        seed=dataset.seed,
        params={**dataset.params, "power_law_exponent": power_law_exponent},
        buckets=buckets,
        unseen_classes=list(dataset.unseen_classes),
    )
    # subsampled datasets may legitimately have rare classes with < 10 samples
    return out


def holdout_unseen(dataset: SyntheticDataset, unseen_classes) -> tuple[SyntheticDataset, np.ndarray]:
    """Remove the listed classes from the train split; the val split keeps them.

    Returns the filtered dataset and a boolean mask over classes (True =
    unseen).  Class entries may be indices or leaf names.
    """
    resolved = []
    for u in unseen_classes:
        if isinstance(u, str):
            if u not in dataset.tree.leaf_classes:
                raise ParameterError(f"unknown class name {u!r}")
            resolved.append(dataset.tree.leaf_classes.index(u))
        else:
            if not (0 <= int(u) < dataset.num_classes):
                raise ParameterError(f"class index {u} out of range")
            resolved.append(int(u))
    resolved = sorted(set(resolved))
    if len(resolved) >= dataset.num_classes:
        raise ParameterError("cannot hold out every class")
    mask = np.zeros(dataset.num_classes, dtype=bool)
    mask[resolved] = True
    if not resolved:
        return dataset, mask

    train_labels = dataset.labels[dataset.train_idx]
    keep = ~np.isin(train_labels, resolved)
    out = SyntheticDataset(
        features=dataset.features,
        labels=dataset.labels,
        train_idx=dataset.train_idx[keep],
        val_idx=dataset.val_idx,
        tree=dataset.tree,
        seed=dataset.seed,
        params=dict(dataset.params),
        buckets=dict(dataset.buckets),
        unseen_classes=resolved,
    )
    out.validate()
    return out, mask

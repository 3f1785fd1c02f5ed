"""Hubness diagnostics for prototype sets.

Hubness is the tendency of some points to appear among the k nearest
neighbors of disproportionately many others.  It is quantified by the
Fisher-Pearson sample skewness of the k-occurrence distribution N_k(i)
(the in-degree of point i in the directed k-NN graph).  Reports pair a
pairwise-distance histogram with the k-occurrence statistics, for either
geodesic (hyperboloid) or cosine distances.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from . import geometry
from .errors import ContractError, ParameterError
from .heads import MODE_HYPERBOLIC, PrototypeBank

KIND_HYPERBOLIC = "hyperbolic"
KIND_COSINE = "cosine"

DEFAULT_K = 5
DEFAULT_BINS = 20


def sample_skewness(values) -> float:
    """Fisher-Pearson sample skewness m3 / m2^(3/2); 0 for zero variance."""
    v = np.asarray(values, dtype=np.float64)
    m = v.mean()
    m2 = np.mean((v - m) ** 2)
    if m2 == 0.0:
        return 0.0
    m3 = np.mean((v - m) ** 3)
    return float(m3 / m2**1.5)


def pairwise_distances(points, kind: str) -> np.ndarray:
    """Symmetric all-pairs distance matrix with zero diagonal."""
    P = np.asarray(points, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] < 2:
        raise ParameterError("need at least 2 points")
    if kind == KIND_HYPERBOLIC:
        for row in P:
            geometry.assert_on_manifold(row)
        D = geometry.batch_distance(P, P)
    elif kind == KIND_COSINE:
        norms = np.linalg.norm(P, axis=1)
        if np.any(norms == 0.0):
            raise ContractError("cosine distance requires nonzero vectors")
        U = P / norms[:, None]
        D = 1.0 - U @ U.T
    else:
        raise ContractError(f"unknown distance kind {kind!r}")
    D = 0.5 * (D + D.T)
    np.fill_diagonal(D, 0.0)
    return D


@dataclass
class KOccurrence:
    k: int
    counts: np.ndarray
    skewness: float

    def to_dict(self) -> dict:
        return {"k": self.k, "counts": self.counts.tolist(), "skewness": self.skewness}


@dataclass
class DistanceHistogram:
    kind: str
    edges: np.ndarray
    counts: np.ndarray

    def to_dict(self) -> dict:
        return {"kind": self.kind, "edges": self.edges.tolist(), "counts": self.counts.tolist()}


def k_occurrence(dist: np.ndarray, k: int) -> KOccurrence:
    """In-degree counts of the directed k-NN graph and their skewness.

    Each point emits edges to its k nearest others; ties break toward the
    lower point index.
    """
    D = np.asarray(dist, dtype=np.float64)
    N = D.shape[0]
    if k < 1:
        raise ParameterError("k must be >= 1")
    if k >= N:
        raise ParameterError(f"k={k} must be < number of points {N}")
    D = D.copy()
    np.fill_diagonal(D, np.inf)
    counts = np.zeros(N, dtype=np.int64)
    idx = np.arange(N)
    for i in range(N):
        order = np.lexsort((idx, D[i]))
        counts[order[:k]] += 1
    return KOccurrence(k=k, counts=counts, skewness=sample_skewness(counts))


def distance_histogram(dist: np.ndarray, kind: str, bins: int = DEFAULT_BINS) -> DistanceHistogram:
    """Histogram over the N(N-1)/2 unordered pairwise distances."""
    D = np.asarray(dist, dtype=np.float64)
    iu = np.triu_indices(D.shape[0], k=1)
    vals = D[iu]
    counts, edges = np.histogram(vals, bins=bins)
    return DistanceHistogram(kind=kind, edges=edges, counts=counts)


@dataclass
class HubnessReport:
    kind: str
    k: int
    histogram: DistanceHistogram
    k_occurrence: KOccurrence

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "k": self.k,
            "histogram": self.histogram.to_dict(),
            "k_occurrence": self.k_occurrence.counts.tolist(),
            "skewness": self.k_occurrence.skewness,
        }

    def save(self, json_path) -> None:
        """Write the JSON report plus a plot-ready CSV of histogram bins."""
        json_path = str(json_path)
        with open(json_path, "w") as f:
            json.dump(self.to_dict(), f, sort_keys=True)
            f.write("\n")
        csv_path = json_path[:-5] + ".csv" if json_path.endswith(".json") else json_path + ".csv"
        edges = self.histogram.edges
        centers = 0.5 * (edges[:-1] + edges[1:])
        with open(csv_path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["bin_center", "count"])
            for c, n in zip(centers, self.histogram.counts):
                w.writerow([repr(float(c)), int(n)])


def analyze_points(points, kind: str, k: int = DEFAULT_K, bins: int = DEFAULT_BINS) -> HubnessReport:
    D = pairwise_distances(points, kind)
    return HubnessReport(
        kind=kind,
        k=k,
        histogram=distance_histogram(D, kind, bins=bins),
        k_occurrence=k_occurrence(D, k),
    )


def hubness_report(bank: PrototypeBank, k: int = DEFAULT_K, bins: int = DEFAULT_BINS) -> HubnessReport:
    """Analyze a trained bank's prototypes with its native distance kind:
    geodesic for hyperbolic banks, cosine otherwise."""
    kind = KIND_HYPERBOLIC if bank.mode == MODE_HYPERBOLIC else KIND_COSINE
    return analyze_points(bank.prototypes, kind, k=k, bins=bins)

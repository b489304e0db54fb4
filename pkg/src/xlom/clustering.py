"""Joint K-means over all languages' embeddings, AIC model selection, k-sweep.

The clustering is deterministic: k-means++ seeding draws from the portable
splitmix64 stream (see :mod:`xlom.rng`), assignment ties break toward the
lowest cluster index, and centroid accumulation uses a fixed reduction
order, so a (data, seed) pair reproduces assignments and centroids exactly.
"""

from __future__ import annotations

import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin

from .embeddings import EmbeddingMatrix, load_embeddings, write_embeddings
from .errors import ClusteringError
from .rng import SplitMix64
from .validation import check_matrix

AIC_DEGENERATE = -sys.float_info.max
AIC_METHOD = "spherical-gmm-mle"

_CHUNK_ROWS = 2048


def _pairwise_sq(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Exact squared Euclidean distances (n, k), chunked to bound memory."""
    n = X.shape[0]
    if n * C.shape[0] * C.shape[1] <= _CHUNK_ROWS * 64 * 64:
        diff = X[:, None, :] - C[None, :, :]
        return np.einsum("nkd,nkd->nk", diff, diff)
    out = np.empty((n, C.shape[0]), dtype=np.float64)
    for lo in range(0, n, _CHUNK_ROWS):
        hi = min(lo + _CHUNK_ROWS, n)
        diff = X[lo:hi, None, :] - C[None, :, :]
        out[lo:hi] = np.einsum("nkd,nkd->nk", diff, diff)
    return out


def _assign(X: np.ndarray, C: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-centroid labels (ties to the lowest index) and squared distances."""
    d2 = _pairwise_sq(X, C)
    labels = np.argmin(d2, axis=1)
    return labels, d2[np.arange(X.shape[0]), labels]


def _kmeanspp(X: np.ndarray, k: int, rng: SplitMix64) -> np.ndarray:
    """k-means++ seeding with D^2 sampling on the splitmix64 stream."""
    n = X.shape[0]
    chosen = [rng.next_below(n)]
    d2 = ((X - X[chosen[0]]) ** 2).sum(axis=1)
    while len(chosen) < k:
        total = float(d2.sum())
        if total <= 0.0:
            # All remaining mass sits on already-chosen points; take the
            # lowest-index point not yet chosen to stay deterministic.
            taken = set(chosen)
            idx = next((i for i in range(n) if i not in taken), None)
            if idx is None:
                raise ClusteringError(f"cannot seed {k} centroids from {n} points")
            chosen.append(idx)
        else:
            r = rng.next_float() * total
            idx = int(np.searchsorted(np.cumsum(d2), r, side="right"))
            idx = min(idx, n - 1)
            chosen.append(idx)
        d2 = np.minimum(d2, ((X - X[chosen[-1]]) ** 2).sum(axis=1))
    return X[chosen].copy()


def _lloyd(X: np.ndarray, centroids: np.ndarray, max_iter: int, tol: float):
    """Lloyd iterations from explicit starting centroids.

    Returns (labels, centroids, inertia, n_iter, converged, history) where
    history holds the inertia after every assignment step; it is checked to
    be non-increasing, which the empty-cluster rule preserves (a re-seeded
    centroid has no members, so moving it cannot raise the objective).
    """
    k = centroids.shape[0]
    centroids = centroids.astype(np.float64).copy()
    history: list[float] = []
    labels = None
    prev_inertia = math.inf
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        new_labels, dist = _assign(X, centroids)
        inertia = float(dist.sum())
        if history and inertia > history[-1] + 1e-9 * max(1.0, history[-1]):
            raise AssertionError("Lloyd inertia increased between iterations")
        history.append(inertia)
        if labels is not None and np.array_equal(new_labels, labels):
            labels = new_labels
            converged = True
            break
        labels = new_labels

        counts = np.bincount(labels, minlength=k)
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, X)
        nonempty = counts > 0
        centroids[nonempty] = sums[nonempty] / counts[nonempty, None]
        for j in np.where(~nonempty)[0]:
            far = int(np.argmax(dist))
            if dist[far] <= 0.0:
                raise ClusteringError(
                    f"cluster {int(j)} cannot be re-seeded: fewer than {k} distinct points"
                )
            centroids[j] = X[far]
            dist = dist.copy()
            dist[far] = 0.0

        if prev_inertia < math.inf and prev_inertia > 0.0:
            if (prev_inertia - inertia) / prev_inertia < tol:
                converged = True
                break
        elif prev_inertia == 0.0:
            converged = True
            break
        prev_inertia = inertia

    final_labels, dist = _assign(X, centroids)
    inertia = float(dist.sum())
    if history and inertia > history[-1] + 1e-9 * max(1.0, history[-1]):
        raise AssertionError("Lloyd inertia increased at finalization")
    history.append(inertia)
    counts = np.bincount(final_labels, minlength=k)
    if (counts == 0).any():
        empty = int(np.where(counts == 0)[0][0])
        raise ClusteringError(
            f"cluster {empty} is empty after convergence; fewer than {k} distinct points?"
        )
    return final_labels, centroids, inertia, n_iter, converged, history


class KMeansClusterer(BaseEstimator, ClusterMixin):
    """Lloyd's K-means with k-means++ seeding on the portable RNG.

    Parameters follow the common defaults: ``n_init`` restarts (restart r
    seeds the stream with ``seed + r``), ``max_iter`` Lloyd iterations, and
    a relative-inertia-improvement stopping tolerance.  The best restart by
    inertia wins.  An empty cluster is re-seeded to the point farthest from
    its assigned centroid.
    """

    def __init__(self, n_clusters: int = 8, seed: int = 0, n_init: int = 10,
                 max_iter: int = 300, tol: float = 1e-4):
        self.n_clusters = n_clusters
        self.seed = seed
        self.n_init = n_init
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y=None, extra_inits: Sequence[np.ndarray] = ()):
        """Fit on rows of X; ``extra_inits`` adds explicit starting centroids
        as additional restarts (used by the sweep's nested seeding)."""
        X = check_matrix(X)
        k = self.n_clusters
        if k < 1:
            raise ClusteringError(f"n_clusters must be >= 1, got {k}")
        if k > X.shape[0]:
            raise ClusteringError(f"n_clusters={k} exceeds {X.shape[0]} points")
        if self.n_init < 1:
            raise ClusteringError("n_init must be >= 1")
        if self.max_iter < 1:
            raise ClusteringError("max_iter must be >= 1")
        if self.tol < 0:
            raise ClusteringError("tol must be >= 0")

        best = None
        histories = []
        for r in range(self.n_init):
            rng = SplitMix64(self.seed + r)
            init = _kmeanspp(X, k, rng)
            result = _lloyd(X, init, self.max_iter, self.tol)
            histories.append(result[5])
            if best is None or result[2] < best[2]:
                best = result
        for init in extra_inits:
            init = check_matrix(init, name="extra init")
            if init.shape != (k, X.shape[1]):
                raise ClusteringError(
                    f"extra init shape {init.shape} != ({k}, {X.shape[1]})"
                )
            result = _lloyd(X, init, self.max_iter, self.tol)
            histories.append(result[5])
            if result[2] < best[2]:
                best = result

        labels, centroids, inertia, n_iter, converged, _ = best
        self.labels_ = labels
        self.cluster_centers_ = centroids
        self.inertia_ = inertia
        self.n_iter_ = n_iter
        self.converged_ = converged
        self.inertia_histories_ = histories
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        X = check_matrix(X)
        if X.shape[1] != self.cluster_centers_.shape[1]:
            raise ClusteringError(
                f"dim mismatch: model is {self.cluster_centers_.shape[1]}-d, "
                f"points are {X.shape[1]}-d"
            )
        labels, _ = _assign(X, self.cluster_centers_)
        return labels


@dataclass
class ClusteringRun:
    """A finalized clustering for one (k, seed): centroids, assignments, scores."""

    k: int
    seed: int
    ids: list[str]
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    aic: float
    aic_degenerate: bool
    iterations: int
    converged: bool

    @property
    def assignments(self) -> dict[str, int]:
        return {sid: int(c) for sid, c in zip(self.ids, self.labels)}

    def cluster_sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k)

    def validate(self) -> None:
        if len(self.ids) != len(self.labels):
            raise ClusteringError("ids/labels length mismatch")
        if self.labels.min(initial=0) < 0 or (len(self.labels) and self.labels.max() >= self.k):
            raise ClusteringError("assignment index out of range")
        if (self.cluster_sizes() == 0).any():
            raise ClusteringError("finalized run has an empty cluster")
        if self.inertia < 0:
            raise ClusteringError("negative inertia")

    def save(self, run_dir: str | Path) -> None:
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        meta = {
            "k": self.k,
            "seed": self.seed,
            "inertia": self.inertia,
            "aic": self.aic,
            "aic_degenerate": self.aic_degenerate,
            "aic_method": AIC_METHOD,
            "iterations": self.iterations,
            "converged": self.converged,
        }
        (run_dir / "run.json").write_text(
            json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        cent = EmbeddingMatrix(
            [f"centroid-{i:04d}" for i in range(self.k)],
            self.centroids.astype(np.float32),
            normalized=False,
            encoder_tag="kmeans-centroids",
        )
        write_embeddings(cent, run_dir / "centroids.emb", run_dir / "centroids.ids")
        with open(run_dir / "assignments.jsonl", "w", encoding="utf-8") as fh:
            for sid, c in zip(self.ids, self.labels):
                fh.write(json.dumps({"sent_id": sid, "cluster": int(c)}) + "\n")

    @classmethod
    def load(cls, run_dir: str | Path) -> "ClusteringRun":
        run_dir = Path(run_dir)
        meta = json.loads((run_dir / "run.json").read_text("utf-8"))
        cent = load_embeddings(
            run_dir / "centroids.emb", run_dir / "centroids.ids", normalize=False
        )
        ids, labels = [], []
        with open(run_dir / "assignments.jsonl", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    row = json.loads(line)
                    ids.append(row["sent_id"])
                    labels.append(row["cluster"])
        run = cls(
            k=meta["k"],
            seed=meta["seed"],
            ids=ids,
            labels=np.asarray(labels, dtype=np.int64),
            centroids=cent.vectors.astype(np.float64),
            inertia=meta["inertia"],
            aic=meta["aic"],
            aic_degenerate=meta.get("aic_degenerate", False),
            iterations=meta["iterations"],
            converged=meta["converged"],
        )
        run.validate()
        return run


def aic(run: ClusteringRun, n: int, d: int) -> tuple[float, bool]:
    """AIC of a run under a spherical Gaussian mixture likelihood.

    With W the inertia, cluster sizes m_j, and the variance MLE
    sigma2 = W / (d (n - k)):

        lnL = sum_j m_j ln(m_j / n) - (n d / 2) ln(2 pi sigma2) - d (n - k) / 2
        AIC = -2 lnL + 2 p,   p = (k - 1) + k d + 1

    A perfect fit (W = 0, or n = k) has no finite likelihood; it maps to
    the smallest representable value and is flagged degenerate.
    """
    if n <= 0 or d <= 0:
        raise ClusteringError("aic needs n > 0 and d > 0")
    W = run.inertia
    k = run.k
    if W <= 0.0 or n <= k:
        return AIC_DEGENERATE, True
    sizes = run.cluster_sizes()
    sigma2 = W / (d * (n - k))
    loglik = float(sum(m * math.log(m / n) for m in sizes if m > 0))
    loglik -= 0.5 * n * d * math.log(2.0 * math.pi * sigma2)
    loglik -= 0.5 * d * (n - k)
    p = (k - 1) + k * d + 1
    return -2.0 * loglik + 2.0 * p, False


def fit_run(X: EmbeddingMatrix | np.ndarray, ids: Sequence[str] | None = None,
            *, k: int, seed: int = 0, n_init: int = 10, max_iter: int = 300,
            tol: float = 1e-4, extra_inits: Sequence[np.ndarray] = ()) -> ClusteringRun:
    """Cluster an embedding matrix into a finalized, validated run."""
    if isinstance(X, EmbeddingMatrix):
        ids = list(X.ids)
        data = X.vectors.astype(np.float64)
    else:
        data = check_matrix(X)
        ids = list(ids) if ids is not None else [str(i) for i in range(len(data))]
    if len(ids) != len(data):
        raise ClusteringError("ids/rows length mismatch")
    est = KMeansClusterer(n_clusters=k, seed=seed, n_init=n_init,
                          max_iter=max_iter, tol=tol)
    est.fit(data, extra_inits=extra_inits)
    run = ClusteringRun(
        k=k,
        seed=seed,
        ids=ids,
        labels=est.labels_,
        centroids=est.cluster_centers_,
        inertia=est.inertia_,
        aic=0.0,
        aic_degenerate=False,
        iterations=est.n_iter_,
        converged=est.converged_,
    )
    run.aic, run.aic_degenerate = aic(run, n=len(data), d=data.shape[1])
    run.validate()
    run.inertia_histories = est.inertia_histories_  # kept for diagnostics/tests
    return run


@dataclass
class SweepResult:
    runs: dict[int, ClusteringRun]
    inertia_curve: dict[int, float]
    aic_curve: dict[int, float]
    selected_k: int
    metadata: dict = field(default_factory=dict)

    def curves_json(self) -> dict:
        ks = sorted(self.runs)
        return {
            "k": ks,
            "inertia": [self.inertia_curve[k] for k in ks],
            "aic": [self.aic_curve[k] for k in ks],
            "selected_k": self.selected_k,
            "aic_method": AIC_METHOD,
            **self.metadata,
        }

    def save(self, out_dir: str | Path) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for k, run in sorted(self.runs.items()):
            run.save(out_dir / f"k{k:02d}")
        (out_dir / "curves.json").write_text(
            json.dumps(self.curves_json(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )


def sweep(X: EmbeddingMatrix | np.ndarray, ids: Sequence[str] | None = None,
          *, k_min: int = 1, k_max: int = 30, seed: int = 0, n_init: int = 10,
          max_iter: int = 300, tol: float = 1e-4,
          metadata: dict | None = None) -> SweepResult:
    """Fit one run per k in [k_min, k_max] and select the AIC minimum.

    Each k > k_min gets an additional "nested seeding" restart: the previous
    k's centroids plus the point farthest from its assigned centroid.  That
    guarantees the inertia curve is non-increasing in k.  Ties in the AIC
    minimum resolve to the smallest k.
    """
    if isinstance(X, EmbeddingMatrix):
        ids = list(X.ids)
        data = X.vectors.astype(np.float64)
    else:
        data = check_matrix(X)
        ids = list(ids) if ids is not None else [str(i) for i in range(len(data))]
    if not (1 <= k_min <= k_max):
        raise ClusteringError(f"invalid k range [{k_min}, {k_max}]")
    if k_min > len(data):
        raise ClusteringError(f"k_min={k_min} exceeds {len(data)} points")
    if k_max > len(data):
        raise ClusteringError(f"k_max={k_max} exceeds {len(data)} points")

    runs: dict[int, ClusteringRun] = {}
    prev: ClusteringRun | None = None
    for k in range(k_min, k_max + 1):
        extra = []
        if prev is not None:
            _, dist = _assign(data, prev.centroids)
            far = int(np.argmax(dist))
            extra.append(np.vstack([prev.centroids, data[far]]))
        run = fit_run(data, ids, k=k, seed=seed, n_init=n_init,
                      max_iter=max_iter, tol=tol, extra_inits=extra)
        runs[k] = run
        prev = run

    selected_k = min(runs, key=lambda k: (runs[k].aic, k))
    return SweepResult(
        runs=runs,
        inertia_curve={k: r.inertia for k, r in runs.items()},
        aic_curve={k: r.aic for k, r in runs.items()},
        selected_k=selected_k,
        metadata=metadata or {},
    )


def assign(run: ClusteringRun, X) -> np.ndarray:
    """Nearest-centroid assignment of new points, same tie-break as fitting."""
    X = check_matrix(X)
    if X.shape[1] != run.centroids.shape[1]:
        raise ClusteringError(
            f"dim mismatch: run is {run.centroids.shape[1]}-d, points are {X.shape[1]}-d"
        )
    labels, _ = _assign(X, run.centroids)
    return labels

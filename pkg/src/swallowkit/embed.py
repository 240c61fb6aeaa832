"""2-D projections of the feature space for separability inspection.

Both projections expect standardized input (see standardize); raw Hz-valued
columns would otherwise dominate every distance. PCA uses the sample
covariance (n-1 denominator) with a fixed sign convention so output is
deterministic across eigensolvers. The neighbor embedding is exact t-SNE:
per-point Gaussian bandwidths matched to a target perplexity by bisection,
symmetrized affinities, Student-t low-dimensional kernel, and plain
momentum gradient descent with early exaggeration.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParameterError, ShapeError
from .ioutil import atomic_write_text

PERPLEXITY_TOL = 1e-5
MAX_BISECTION_STEPS = 50
_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class Embedding:
    """Projected points (n x k) plus method metadata."""

    points: np.ndarray
    method: str
    explained_variance_ratio: np.ndarray | None = None


def standardize(X: np.ndarray):
    """Column-wise z-score using the population standard deviation.

    Columns with std below 1e-12 are centered only and their std recorded
    as 1. Returns (Z, means, stds).
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[0] < 2:
        raise ParameterError("standardize needs at least 2 rows")
    means = X.mean(axis=0)
    stds = X.std(axis=0)
    stds = np.where(stds < 1e-12, 1.0, stds)
    return (X - means) / stds, means, stds


def pca_fit_transform(Z: np.ndarray, k: int) -> Embedding:
    """Project onto the top-k eigenvectors of the sample covariance.

    Components are ordered by descending eigenvalue; each component is
    flipped so its largest-magnitude loading is positive. The explained
    variance ratio is eigenvalue / total variance.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    n, d = Z.shape
    if not 1 <= k <= min(n - 1, d):
        raise ParameterError(f"k={k} outside 1..min(n-1, d)={min(n - 1, d)}")
    centered = Z - Z.mean(axis=0)
    cov = centered.T @ centered / (n - 1)
    eigenvalues, vectors = np.linalg.eigh(cov)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = eigenvalues[order]
    vectors = vectors[:, order]
    for i in range(d):
        j = np.argmax(np.abs(vectors[:, i]))
        if vectors[j, i] < 0:
            vectors[:, i] = -vectors[:, i]
    total = eigenvalues.sum()
    if total > 0:
        ratios = np.clip(eigenvalues[:k] / total, 0.0, 1.0)
    else:
        ratios = np.zeros(k)
    return Embedding(centered @ vectors[:, :k], "pca", ratios)


@dataclass(frozen=True)
class TsneParams:
    """t-SNE schedule; perplexity None means min(30, (n-1)/3)."""

    perplexity: float | None = None
    iterations: int = 1000
    learning_rate: float = 200.0
    early_exaggeration: float = 12.0
    exaggeration_iters: int = 250
    momentum: float = 0.5
    final_momentum: float = 0.8
    momentum_switch: int = 250
    seed: int = 0

    def resolve_perplexity(self, n: int) -> float:
        if self.perplexity is None:
            return min(30.0, (n - 1) / 3.0)
        if not 0 < self.perplexity < n:
            raise ParameterError(f"perplexity must lie in (0, n={n})")
        return float(self.perplexity)


def _squared_distances(X: np.ndarray) -> np.ndarray:
    sq = (X * X).sum(axis=1)
    d = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.maximum(d, 0.0, out=d)
    np.fill_diagonal(d, 0.0)
    return d


def pairwise_affinities(Z: np.ndarray, perplexity: float) -> np.ndarray:
    """Conditional affinities p(j|i); each row sums to 1, diagonal is 0.

    Per point, the Gaussian bandwidth is found by bisection until the
    row's perplexity (2 to the Shannon entropy) matches the target within
    1e-5, using at most 50 steps.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    n = Z.shape[0]
    if not 0 < perplexity < n:
        raise ParameterError(f"perplexity must lie in (0, n={n})")
    D = _squared_distances(Z)
    P = np.zeros((n, n))
    for i in range(n):
        di = D[i].copy()
        di[i] = np.inf
        beta = 1.0
        lo, hi = 0.0, np.inf
        row = None
        for _ in range(MAX_BISECTION_STEPS):
            w = np.exp(-beta * di)
            s = w.sum()
            if s <= 0.0:
                row = np.zeros(n)
                row[np.argmin(di)] = 1.0
                perp = 1.0
            else:
                row = w / s
                positive = row > 0
                h = -(row[positive] * np.log2(row[positive])).sum()
                perp = 2.0**h
            if abs(perp - perplexity) <= PERPLEXITY_TOL:
                break
            if perp > perplexity:
                lo = beta
                beta = beta * 2.0 if np.isinf(hi) else 0.5 * (beta + hi)
            else:
                hi = beta
                beta = 0.5 * (lo + beta)
        P[i] = row
    return P


def joint_affinities(Z: np.ndarray, perplexity: float) -> np.ndarray:
    """Symmetrized affinities (P + P') / 2n; the matrix sums to 1."""
    P = pairwise_affinities(Z, perplexity)
    return (P + P.T) / (2.0 * P.shape[0])


def _student_t_q(Y: np.ndarray):
    num = 1.0 / (1.0 + _squared_distances(Y))
    np.fill_diagonal(num, 0.0)
    return num / num.sum(), num


def kl_divergence(P: np.ndarray, Y: np.ndarray) -> float:
    """KL divergence (nats) between affinities P and the layout's Student-t Q."""
    q, _ = _student_t_q(np.asarray(Y, dtype=np.float64))
    mask = P > 0
    return float((P[mask] * np.log(P[mask] / np.maximum(q[mask], _EPS))).sum())


def tsne(Z: np.ndarray, params: TsneParams = TsneParams()) -> Embedding:
    """Exact t-SNE to 2 dimensions; bit-deterministic given the seed.

    The layout starts from Gaussian(0, 1e-4) noise drawn from the seeded
    generator. Affinities are multiplied by early_exaggeration for the
    first exaggeration_iters iterations; momentum switches from momentum to
    final_momentum after momentum_switch iterations.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    n = Z.shape[0]
    if n < 4:
        raise ParameterError("tsne needs at least 4 points")
    perplexity = params.resolve_perplexity(n)
    P = joint_affinities(Z, perplexity)
    P = np.maximum(P, _EPS)

    rng = np.random.default_rng(params.seed)
    Y = rng.normal(0.0, 1e-2, size=(n, 2))
    velocity = np.zeros_like(Y)

    for t in range(1, params.iterations + 1):
        target = P * params.early_exaggeration if t <= params.exaggeration_iters else P
        momentum = params.momentum if t <= params.momentum_switch else params.final_momentum
        q, num = _student_t_q(Y)
        W = (target - q) * num
        grad = 4.0 * (W.sum(axis=1)[:, None] * Y - W @ Y)
        velocity = momentum * velocity - params.learning_rate * grad
        Y = Y + velocity
        Y = Y - Y.mean(axis=0)

    return Embedding(Y, "tsne", None)


def export_embedding(
    embedding: Embedding, labels, path, segment_ids=None
) -> Path:
    """Write a 2-D embedding as CSV: x,y,label,segment_id."""
    points = np.asarray(embedding.points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 2:
        raise ShapeError("export_embedding needs an n x 2 embedding")
    labels = list(labels)
    if len(labels) != points.shape[0]:
        raise ShapeError(
            f"{len(labels)} labels for {points.shape[0]} embedded points"
        )
    if segment_ids is None:
        segment_ids = [str(i) for i in range(points.shape[0])]
    segment_ids = list(segment_ids)
    if len(segment_ids) != points.shape[0]:
        raise ShapeError("segment_ids must match the point count")
    lines = ["x,y,label,segment_id"]
    for (x, y), label, sid in zip(points, labels, segment_ids):
        lines.append(f"{x:.9g},{y:.9g},{label},{sid}")
    return atomic_write_text(path, "\n".join(lines) + "\n")

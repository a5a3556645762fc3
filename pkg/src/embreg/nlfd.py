"""Normalized Lipschitz factor distribution (NLFD) smoothness diagnostics.

For a representation of a dataset, each point contributes one local roughness
factor: the objective difference to its nearest neighbor in embedding space
divided by their embedding distance. Embeddings are first standardized per
coordinate, and distances are expressed on the unit-average-norm scale (the
standardized matrix has typical row norm sqrt(d), so raw factors are
multiplied by sqrt(d)). That makes factor distributions comparable across
embedding dimensions: duplicating every coordinate leaves the distribution
unchanged, as does rescaling the whole matrix.

A distribution skewed toward zero means nearby points (as the representation
measures nearness) have similar objective values - the landscape the regressor
sees is smooth. Two representations are compared by a z-score on their factor
means; the sign convention puts the first argument's roughness first, so a
positive score means the second representation is the smoother one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .embedders import EmbeddingMatrix
from .tasks import CONTINUOUS, RegressionTask, validate_assignment

DEGENERATE_DISTANCE = 1e-10
_VARIANCE_FLOOR = 1e-12


class EmptySampleError(ValueError):
    """All nearest-neighbor pairs were degenerate; no factors to report."""


@dataclass(frozen=True)
class NlfdSample:
    """Factor sample for one (embedding, objective) pairing."""

    factors: np.ndarray
    dim: int
    excluded_pairs: int
    mu: float
    sigma: float

    @property
    def n(self) -> int:
        return int(self.factors.size)


@dataclass(frozen=True)
class NlfdComparison:
    z: float
    a_summary: tuple[float, float, int]  # (mu, sigma, n)
    b_summary: tuple[float, float, int]


def normalize_embeddings(m: EmbeddingMatrix) -> EmbeddingMatrix:
    """Shift and scale each coordinate to zero mean, unit variance over the
    batch. Near-constant coordinates are centered but left unscaled."""
    if m.rows < 2:
        raise ValueError("need at least 2 rows to normalize")
    values = m.values
    mean = values.mean(axis=0)
    var = values.var(axis=0)
    scale = np.where(var < _VARIANCE_FLOOR, 1.0, np.sqrt(var))
    return EmbeddingMatrix(values=(values - mean) / scale, provenance=m.provenance)


def lipschitz_factors(m_norm: EmbeddingMatrix, y) -> NlfdSample:
    """Nearest-neighbor roughness factors of a standardized embedding.

    For each row, the nearest other row by Euclidean distance is found (ties
    broken toward the lowest index); the factor is
    sqrt(d) * |y_i - y_j| / ||row_i - row_j||. Pairs closer than
    ``DEGENERATE_DISTANCE`` are excluded and counted rather than dropped
    silently.
    """
    labels = np.asarray(y, dtype=np.float64)
    if m_norm.rows != labels.size:
        raise ValueError(f"row count mismatch: {m_norm.rows} embeddings vs {labels.size} labels")
    if m_norm.rows < 2:
        raise ValueError("need at least 2 rows")
    values = m_norm.values
    sq_norms = np.sum(values * values, axis=1)
    # Exact O(n^2) search: determinism matters more than speed at this scale.
    d2 = sq_norms[:, None] + sq_norms[None, :] - 2.0 * (values @ values.T)
    np.fill_diagonal(d2, np.inf)
    nearest = np.argmin(d2, axis=1)  # argmin takes the lowest index on ties

    scale = math.sqrt(m_norm.dim)
    factors = []
    excluded = 0
    for i, j in enumerate(nearest):
        dist = float(np.linalg.norm(values[i] - values[j]))
        if dist < DEGENERATE_DISTANCE:
            excluded += 1
            continue
        factors.append(scale * abs(labels[i] - labels[j]) / dist)
    if not factors:
        raise EmptySampleError(f"all {excluded} nearest-neighbor pairs were degenerate")
    arr = np.array(factors, dtype=np.float64)
    return NlfdSample(
        factors=arr,
        dim=m_norm.dim,
        excluded_pairs=excluded,
        mu=float(arr.mean()),
        sigma=float(arr.std()),
    )


def nlfd_sample(m: EmbeddingMatrix, y) -> NlfdSample:
    """Standardize then compute factors; the usual entry point."""
    return lipschitz_factors(normalize_embeddings(m), y)


def nlfd_zscore(a: NlfdSample, b: NlfdSample) -> NlfdComparison:
    """Standardized gap between two factor distributions: (mu_a - mu_b) over
    the root of summed variances. Positive means b is smoother; swapping the
    arguments negates the score."""
    if a.n == 0 or b.n == 0:
        raise ValueError("both samples must be non-empty")
    denom = math.sqrt(a.sigma**2 + b.sigma**2)
    if denom == 0.0:
        raise ValueError("z-score undefined: both samples have zero variance")
    z = (a.mu - b.mu) / denom
    return NlfdComparison(
        z=z, a_summary=(a.mu, a.sigma, a.n), b_summary=(b.mu, b.sigma, b.n)
    )


def histogram(sample: NlfdSample, bins: int) -> list[tuple[tuple[float, float], int]]:
    """Equal-width bins over [0, max factor]; counts sum to the sample size."""
    if bins < 1:
        raise ValueError("bins must be positive")
    if sample.n == 0:
        raise EmptySampleError("cannot histogram an empty sample")
    top = float(sample.factors.max())
    if top == 0.0:
        top = 1.0  # all-zero factors land in the first bin
    counts, edges = np.histogram(sample.factors, bins=bins, range=(0.0, top))
    return [
        ((float(edges[k]), float(edges[k + 1])), int(counts[k])) for k in range(bins)
    ]


def ball_probe_sample(
    task: RegressionTask,
    reference: dict,
    radii: list[float],
    per_radius: int,
    seed: int,
    max_rejections: int = 1000,
) -> list[tuple[float, list[dict]]]:
    """Sample points on spheres of the given radii around a reference input.

    Directions are Gaussian-normalized; points falling outside the box are
    rejected and redrawn, up to ``max_rejections`` tries per point. Used to
    probe how a representation warps distances as one walks away from a
    reference, without the distance-concentration of plain uniform sampling.
    """
    if any(p.kind != CONTINUOUS for p in task.params):
        raise ValueError("ball probing requires a continuous-only task")
    if list(radii) != sorted(radii) or any(r <= 0 for r in radii):
        raise ValueError("radii must be positive and ascending")
    if per_radius < 1:
        raise ValueError("per_radius must be >= 1")
    validate_assignment(task, reference)
    center = np.array([reference[p.name] for p in task.params], dtype=np.float64)
    lows = np.array([p.lo for p in task.params])
    highs = np.array([p.hi for p in task.params])
    rng = np.random.default_rng(seed)

    out = []
    for r in radii:
        points = []
        for _ in range(per_radius):
            for _attempt in range(max_rejections):
                direction = rng.standard_normal(task.dof)
                norm = np.linalg.norm(direction)
                if norm == 0.0:
                    continue
                candidate = center + direction / norm * r
                if np.all(candidate >= lows) and np.all(candidate <= highs):
                    points.append(
                        {p.name: float(v) for p, v in zip(task.params, candidate)}
                    )
                    break
            else:
                raise ValueError(
                    f"radius {r} infeasible from the reference: "
                    f"{max_rejections} rejections exhausted"
                )
        out.append((float(r), points))
    return out


def pairwise_distance_export(m: EmbeddingMatrix, labels) -> list[tuple[int, int, float, float, float]]:
    """All unordered pair distances with each endpoint's label attached.

    Returns (i, j, distance, label_i, label_j) for i < j: n(n-1)/2 records,
    ready for external scatter/projection tooling.
    """
    lab = np.asarray(labels, dtype=np.float64)
    if lab.size != m.rows:
        raise ValueError(f"label count {lab.size} != row count {m.rows}")
    values = m.values
    records = []
    for i in range(m.rows - 1):
        diffs = values[i + 1 :] - values[i]
        dists = np.sqrt(np.sum(diffs * diffs, axis=1))
        for offset, dist in enumerate(dists):
            j = i + 1 + offset
            records.append((i, j, float(dist), float(lab[i]), float(lab[j])))
    return records

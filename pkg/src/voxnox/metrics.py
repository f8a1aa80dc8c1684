"""Evaluation measures: tile-pattern KL divergence, population diversity,
divergence from seeds, latent/phenotype correlation, and reconstruction-
error matrices.

Voxel diversity compares distributions of 2x2x2 material patterns slid with
stride 1 over a lattice. KL is directional, (individual || other), with
epsilon smoothing over the pair's shared support.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import VoxnoxError
from .voxel_core import MaterialLattice, N_MATERIALS

PEARSON_UNDEFINED = float("nan")


@dataclass(frozen=True)
class PatternDistribution:
    """Observed window-pattern counts for one lattice. Probabilities are
    materialized against a support (at least the observed patterns) so that
    two distributions can share the union of their supports."""

    ids: np.ndarray  # sorted unique pattern codes
    counts: np.ndarray
    total: int
    epsilon: float

    def probabilities(self, support: np.ndarray) -> np.ndarray:
        aligned = np.zeros(support.shape[0], dtype=np.float64)
        pos = np.searchsorted(support, self.ids)
        aligned[pos] = self.counts
        smoothed = (aligned + self.epsilon) / (self.total + self.epsilon * support.shape[0])
        return smoothed


def pattern_distribution(lattice: MaterialLattice, window: int = 2, epsilon: float = 1e-6) -> PatternDistribution:
    """Count all window^3 material patterns (stride 1)."""
    cells = lattice.cells
    if any(window > d for d in cells.shape):
        raise VoxnoxError(f"window {window} exceeds lattice dims {cells.shape}")
    x, y, z = cells.shape
    w = window
    sx, sy, sz = cells.strides
    view = np.lib.stride_tricks.as_strided(
        cells,
        shape=(x - w + 1, y - w + 1, z - w + 1, w, w, w),
        strides=(sx, sy, sz, sx, sy, sz),
    )
    flat = view.reshape(-1, w ** 3).astype(np.int64)
    weights = N_MATERIALS ** np.arange(w ** 3, dtype=np.int64)
    codes = flat @ weights
    ids, counts = np.unique(codes, return_counts=True)
    return PatternDistribution(ids, counts, int(codes.shape[0]), epsilon)


def kl_divergence(p: PatternDistribution, q: PatternDistribution) -> float:
    """Sum over the pair's shared support of p * ln(p/q); >= 0, and 0 iff
    the pattern counts agree."""
    support = np.union1d(p.ids, q.ids)
    pp = p.probabilities(support)
    qq = q.probabilities(support)
    return float((pp * np.log(pp / qq)).sum())


def _pairwise_kl(dists) -> np.ndarray:
    n = len(dists)
    mat = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            support = np.union1d(dists[i].ids, dists[j].ids)
            pi = dists[i].probabilities(support)
            pj = dists[j].probabilities(support)
            logs = np.log(pi / pj)
            mat[i, j] = float((pi * logs).sum())
            mat[j, i] = float(-(pj * logs).sum())
    return mat


def population_diversity(population) -> list:
    """d(i) = mean over j != i of KL(P_i || P_j)."""
    if len(population) < 2:
        raise VoxnoxError("population_diversity needs at least 2 lattices")
    dists = [pattern_distribution(l) for l in population]
    mat = _pairwise_kl(dists)
    n = len(population)
    return [float(mat[i].sum() / (n - 1)) for i in range(n)]


def divergence_from_seed(population, seed_population) -> list:
    """d(i) = mean over seeds s of KL(P_i || P_s)."""
    if not population or not seed_population:
        raise VoxnoxError("divergence_from_seed needs non-empty populations")
    pop_d = [pattern_distribution(l) for l in population]
    seed_d = [pattern_distribution(l) for l in seed_population]
    out = []
    for pd in pop_d:
        acc = 0.0
        for sd in seed_d:
            support = np.union1d(pd.ids, sd.ids)
            pp = pd.probabilities(support)
            qq = sd.probabilities(support)
            acc += float((pp * np.log(pp / qq)).sum())
        out.append(acc / len(seed_d))
    return out


def pearson(xs, ys) -> float:
    """Pearson correlation; NaN sentinel when either series has zero
    variance."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    xm = xs - xs.mean()
    ym = ys - ys.mean()
    vx = (xm * xm).sum()
    vy = (ym * ym).sum()
    if vx == 0.0 or vy == 0.0:
        return PEARSON_UNDEFINED
    return float((xm * ym).sum() / math.sqrt(vx * vy))


def latent_phenotype_correlation(population, model) -> float:
    """Pearson r between pairwise latent Euclidean distance and pairwise
    voxel KL divergence over all ordered-by-index pairs (i < j)."""
    from .autoencoder import encode_batch

    if len(population) < 3:
        raise VoxnoxError("latent_phenotype_correlation needs at least 3 individuals")
    latents = encode_batch(model, list(population)).astype(np.float64)
    dists = [pattern_distribution(l) for l in population]
    kl = _pairwise_kl(dists)
    lat_d = []
    kl_d = []
    n = len(population)
    for i in range(n):
        for j in range(i + 1, n):
            lat_d.append(float(np.sqrt(((latents[i] - latents[j]) ** 2).sum())))
            kl_d.append(kl[i, j])
    return pearson(lat_d, kl_d)


def reconstruction_matrix(models: dict, populations: dict):
    """Cross-experiment reconstruction errors.

    `models`: strategy -> model. `populations`: strategy -> list of
    populations (each a list of lattices). Cell (m, p) = (mean, std) of the
    per-population reconstruction error of model m over p's populations;
    each row gets an "overall" cell pooling every strategy's populations.
    Std is the sample standard deviation (0 for a single population).
    """
    from .autoencoder import reconstruction_error

    def mean_std(values):
        if len(values) > 1:
            return float(np.mean(values)), float(np.std(values, ddof=1))
        return float(values[0]), 0.0

    matrix = {}
    for mname, model in models.items():
        row = {}
        pooled = []
        for pname, pops in populations.items():
            errs = [reconstruction_error(model, pop) for pop in pops]
            row[pname] = mean_std(errs)
            pooled.extend(errs)
        row["overall"] = mean_std(pooled)
        matrix[mname] = row
    return matrix

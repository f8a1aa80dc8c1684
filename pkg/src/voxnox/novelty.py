"""Novelty scoring over latent vectors and per-population novelty archives.

The novelty of an individual is its mean Euclidean distance to the k
nearest neighbors in the pool formed by the feasible members of the current
population plus the archive.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatchError
from .voxel_core import MaterialLattice, lattice_from_dict, lattice_to_dict


@dataclass
class ArchiveEntry:
    lattice: MaterialLattice
    latent: np.ndarray
    phase: int = 0
    generation: int = 0


@dataclass
class NoveltyArchive:
    """Unbounded store of (lattice, latent) pairs deemed novel; no two
    entries share an identical material lattice."""

    entries: list = field(default_factory=list)
    _digests: dict = field(default_factory=dict, repr=False)

    def __len__(self):
        return len(self.entries)

    def contains_lattice(self, lattice: MaterialLattice) -> bool:
        idx = self._digests.get(lattice.digest())
        return idx is not None and self.entries[idx].lattice == lattice

    def insert(self, entry: ArchiveEntry) -> bool:
        if self.contains_lattice(entry.lattice):
            return False
        self._digests[entry.lattice.digest()] = len(self.entries)
        self.entries.append(entry)
        return True

    def latent_matrix(self) -> np.ndarray:
        if not self.entries:
            return np.zeros((0, 0), dtype=np.float32)
        return np.stack([e.latent for e in self.entries])

    def to_dict(self) -> dict:
        return {
            "entries": [
                {
                    "lattice": lattice_to_dict(e.lattice),
                    "latent": [float(v) for v in e.latent],
                    "phase": e.phase,
                    "generation": e.generation,
                }
                for e in self.entries
            ]
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NoveltyArchive":
        archive = cls()
        for e in d["entries"]:
            archive.insert(
                ArchiveEntry(
                    lattice_from_dict(e["lattice"]),
                    np.asarray(e["latent"], dtype=np.float32),
                    e["phase"],
                    e["generation"],
                )
            )
        return archive


def _knn_mean(dists: np.ndarray, k: int) -> float:
    if dists.size == 0:
        return 0.0
    dists = np.sort(dists)
    return float(dists[: min(k, dists.size)].mean())


def novelty_score(subject, population, archive: NoveltyArchive, k: int = 15) -> float:
    """Mean Euclidean distance from `subject` to its k nearest neighbors in
    population + archive. The subject is excluded from the pool by object
    identity, so callers may pass the full population. Pools smaller than k
    average over what exists; an empty pool scores 0."""
    pool = [np.asarray(v, dtype=np.float64) for v in population if v is not subject]
    subject = np.asarray(subject, dtype=np.float64)
    if archive is not None and len(archive):
        pool.extend(np.asarray(e.latent, dtype=np.float64) for e in archive.entries)
    if not pool:
        return 0.0
    mat = np.stack(pool)
    if mat.shape[1] != subject.shape[0]:
        raise ShapeMismatchError(subject.shape[0], mat.shape[1], "latent dimension")
    dists = np.sqrt(((mat - subject) ** 2).sum(axis=1))
    return _knn_mean(dists, k)


def novelty_scores(latents: np.ndarray, archive: NoveltyArchive, k: int = 15) -> np.ndarray:
    """Vectorized scores for a whole feasible population at once (each
    subject excluded from its own pool). Matches novelty_score per subject."""
    n = latents.shape[0]
    if n == 0:
        return np.zeros(0)
    pop = np.asarray(latents, dtype=np.float64)
    blocks = [pop]
    if archive is not None and len(archive):
        blocks.append(archive.latent_matrix().astype(np.float64))
    pool = np.concatenate(blocks)
    d2 = ((pop[:, None, :] - pool[None, :, :]) ** 2).sum(axis=2)
    dists = np.sqrt(np.maximum(d2, 0.0))
    dists[np.arange(n), np.arange(n)] = np.inf  # self-exclusion
    dists = np.sort(dists, axis=1)[:, : pool.shape[0] - 1]
    if dists.shape[1] == 0:
        return np.zeros(n)
    kk = min(k, dists.shape[1])
    return dists[:, :kk].mean(axis=1)


def update_archive(archive: NoveltyArchive, generation, alpha: int = 3,
                   phase_index: int = 0, generation_index: int = 0) -> NoveltyArchive:
    """Insert up to `alpha` of the highest-scoring candidates; candidates
    whose lattice already exists in the archive are skipped, not replaced.

    `generation` is a list of (lattice, latent, score) tuples.
    """
    order = sorted(range(len(generation)), key=lambda i: -generation[i][2])
    for i in order[:alpha]:
        lattice, latent, _ = generation[i]
        archive.insert(
            ArchiveEntry(
                lattice.copy(),
                np.asarray(latent, dtype=np.float32).copy(),
                phase_index,
                generation_index,
            )
        )
    return archive


def reencode_archive(archive: NoveltyArchive, model) -> NoveltyArchive:
    """Replace every entry's latent vector with the current model's encoding
    of its lattice; lattices are untouched."""
    from .autoencoder import encode_batch

    if not archive.entries:
        return archive
    latents = encode_batch(model, [e.lattice for e in archive.entries])
    for entry, latent in zip(archive.entries, latents):
        entry.latent = latent
    return archive

import numpy as np
import pytest

from voxnox.autoencoder import AutoencoderModel, encode_batch, train
from voxnox.novelty import (
    ArchiveEntry,
    NoveltyArchive,
    novelty_score,
    novelty_scores,
    reencode_archive,
    update_archive,
)
from voxnox.voxel_core import MaterialLattice

from oracles import oracle_knn_novelty
from test_autoencoder import TINY, seed_lattices


def lattice_of(value, dims=(4, 4, 4)):
    return MaterialLattice(np.full(dims, value, dtype=np.uint8))


class TestNoveltyScore:
    def test_identical_pool_zero(self):
        subject = np.ones(8, dtype=np.float32)
        pool = [subject.copy() for _ in range(5)]
        assert novelty_score(subject, pool, NoveltyArchive(), k=3) == 0.0

    def test_three_four_five(self):
        subject = np.array([0.0, 0.0])
        pool = [np.array([3.0, 4.0])]
        assert novelty_score(subject, pool, NoveltyArchive(), k=1) == pytest.approx(5.0)

    def test_empty_pool_zero(self):
        assert novelty_score(np.zeros(4), [], NoveltyArchive(), k=15) == 0.0

    def test_subject_excluded_by_identity(self):
        subject = np.zeros(2)
        twin = np.zeros(2)  # equal value, different object: stays in pool
        far = np.array([6.0, 8.0])
        score = novelty_score(subject, [subject, twin, far], NoveltyArchive(), k=2)
        assert score == pytest.approx((0.0 + 10.0) / 2)

    def test_matches_bruteforce_oracle(self):
        rng = np.random.default_rng(42)
        for trial in range(100):
            n = int(rng.integers(5, 51))
            dim = int(rng.integers(2, 40))
            pool = [rng.normal(size=dim) for _ in range(n)]
            subject = rng.normal(size=dim)
            got = novelty_score(subject, pool, NoveltyArchive(), k=15)
            want = oracle_knn_novelty(subject, pool, 15)
            assert got == pytest.approx(want, abs=1e-9)

    def test_archive_joins_pool(self):
        subject = np.zeros(2)
        archive = NoveltyArchive()
        archive.insert(ArchiveEntry(lattice_of(1), np.array([3.0, 4.0], dtype=np.float32)))
        score = novelty_score(subject, [], archive, k=1)
        assert score == pytest.approx(5.0)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(7)
        pool = [rng.normal(size=6) for _ in range(20)]
        subject = rng.normal(size=6)
        a = novelty_score(subject, pool, NoveltyArchive(), k=5)
        b = novelty_score(subject, pool[::-1], NoveltyArchive(), k=5)
        assert a == pytest.approx(b, abs=1e-12)

    def test_duplicate_of_subject_never_raises_score(self):
        rng = np.random.default_rng(8)
        pool = [rng.normal(size=4) for _ in range(10)]
        subject = rng.normal(size=4)
        base = novelty_score(subject, pool, NoveltyArchive(), k=5)
        with_dup = novelty_score(subject, pool + [subject.copy()], NoveltyArchive(), k=5)
        assert with_dup <= base + 1e-12

    def test_batch_matches_single(self):
        rng = np.random.default_rng(9)
        latents = rng.normal(size=(12, 6)).astype(np.float32)
        archive = NoveltyArchive()
        for i in range(4):
            archive.insert(ArchiveEntry(lattice_of(i), rng.normal(size=6).astype(np.float32)))
        batch = novelty_scores(latents, archive, k=5)
        vecs = list(latents)
        for i, subject in enumerate(vecs):
            single = novelty_score(subject, vecs, archive, k=5)
            assert batch[i] == pytest.approx(single, abs=1e-9)


class TestUpdateArchive:
    def entry_lattices(self, archive):
        return [e.lattice for e in archive.entries]

    def test_all_duplicates_unchanged(self):
        archive = NoveltyArchive()
        lat = lattice_of(2)
        archive.insert(ArchiveEntry(lat.copy(), np.zeros(4, dtype=np.float32)))
        cands = [(lat.copy(), np.zeros(4), 9.0) for _ in range(5)]
        update_archive(archive, cands, alpha=3)
        assert len(archive) == 1

    def test_top_alpha_inserted(self):
        archive = NoveltyArchive()
        cands = [(lattice_of(i), np.zeros(3), float(i)) for i in range(5)]
        update_archive(archive, cands, alpha=3)
        assert len(archive) == 3
        values = {int(e.lattice.cells[0, 0, 0]) for e in archive.entries}
        assert values == {2, 3, 4}

    def test_skipped_duplicates_not_replaced(self):
        archive = NoveltyArchive()
        archive.insert(ArchiveEntry(lattice_of(4), np.zeros(3, dtype=np.float32)))
        cands = [(lattice_of(i), np.zeros(3), float(i)) for i in range(5)]
        update_archive(archive, cands, alpha=3)
        # top-3 by score are 4 (dup), 3, 2; candidate 1 must not slide in.
        assert len(archive) == 3
        values = sorted(int(e.lattice.cells[0, 0, 0]) for e in archive.entries)
        assert values == [2, 3, 4]

    def test_growth_cap(self):
        rng = np.random.default_rng(3)
        archive = NoveltyArchive()
        for gen in range(10):
            cands = [
                (MaterialLattice(rng.integers(0, 5, size=(4, 4, 4)).astype(np.uint8)),
                 rng.normal(size=3), float(rng.random()))
                for _ in range(8)
            ]
            update_archive(archive, cands, alpha=3, generation_index=gen)
            assert len(archive) <= 3 * (gen + 1)

    def test_phase_and_generation_recorded(self):
        archive = NoveltyArchive()
        update_archive(archive, [(lattice_of(1), np.zeros(2), 1.0)], alpha=3,
                       phase_index=4, generation_index=17)
        assert archive.entries[0].phase == 4
        assert archive.entries[0].generation == 17

    def test_uniqueness_invariant_after_sequences(self):
        rng = np.random.default_rng(5)
        archive = NoveltyArchive()
        for gen in range(20):
            cands = [
                (MaterialLattice(rng.integers(0, 2, size=(2, 2, 2)).astype(np.uint8)),
                 rng.normal(size=2), float(rng.random()))
                for _ in range(6)
            ]
            update_archive(archive, cands, alpha=3, generation_index=gen)
        digests = [e.lattice.digest() for e in archive.entries]
        assert len(digests) == len(set(digests))


@pytest.fixture(scope="module")
def model_and_archive():
    lattices = seed_lattices(6, seed=21)
    model = AutoencoderModel(TINY, init_seed=31)
    train(model, lattices, epochs=3, batch_size=4, rng=np.random.default_rng(0))
    archive = NoveltyArchive()
    latents = encode_batch(model, lattices)
    for lat, vec in zip(lattices, latents):
        archive.insert(ArchiveEntry(lat, vec))
    return model, archive, lattices


class TestReencode:
    def test_idempotent(self, model_and_archive):
        model, archive, _ = model_and_archive
        reencode_archive(archive, model)
        first = [e.latent.copy() for e in archive.entries]
        reencode_archive(archive, model)
        for a, b in zip(first, (e.latent for e in archive.entries)):
            assert np.array_equal(a, b)

    def test_entry_count_unchanged(self, model_and_archive):
        model, archive, _ = model_and_archive
        n = len(archive)
        reencode_archive(archive, model)
        assert len(archive) == n

    def test_vectors_change_with_retrained_model(self, model_and_archive):
        model, archive, lattices = model_and_archive
        before = [e.latent.copy() for e in archive.entries]
        retrained = AutoencoderModel(TINY, init_seed=99)
        train(retrained, lattices, epochs=3, batch_size=4, rng=np.random.default_rng(1))
        reencode_archive(archive, retrained)
        changed = sum(
            not np.array_equal(a, e.latent) for a, e in zip(before, archive.entries)
        )
        assert changed == len(archive)
        assert all(np.array_equal(e.latent, v) for e, v in
                   zip(archive.entries, encode_batch(retrained, lattices)))

    def test_lattices_untouched(self, model_and_archive):
        model, archive, lattices = model_and_archive
        reencode_archive(archive, model)
        for entry, lat in zip(archive.entries, lattices):
            assert entry.lattice == lat


class TestArchiveSerialization:
    def test_round_trip(self):
        rng = np.random.default_rng(11)
        archive = NoveltyArchive()
        for i in range(5):
            archive.insert(ArchiveEntry(
                MaterialLattice(rng.integers(0, 5, size=(4, 4, 4)).astype(np.uint8)),
                rng.normal(size=8).astype(np.float32),
                phase=i % 2,
                generation=i,
            ))
        data = archive.to_dict()
        again = NoveltyArchive.from_dict(data)
        assert again.to_dict() == data
        assert len(again) == 5
        for a, b in zip(archive.entries, again.entries):
            assert a.lattice == b.lattice
            assert np.array_equal(a.latent, b.latent)

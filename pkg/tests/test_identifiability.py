import numpy as np
import pytest

from readprofiler.identifiability import (
    analyze,
    critical_read_length_scan,
    decompose_components,
    find_substring_pairs,
    is_identifiable,
    null_space_flags,
    null_space_flags_from_gram,
    partially_identifiable,
)
from readprofiler.read_matrix import build_matrix
from readprofiler.sequence_db import SequenceDatabase


def db_of(*seqs):
    return SequenceDatabase.from_sequences(list(seqs))


def dense_flags_oracle(A, tol=1e-10):
    """Whole-matrix oracle: SVD of the full augmented dense matrix."""
    dense = np.vstack([A.matrix.toarray(), np.ones(A.n_species)])
    return null_space_flags(dense, tol=tol)[0]


class TestIsIdentifiable:
    def test_single_column_identifiable(self):
        ident, rank = is_identifiable(build_matrix(db_of("ACGTTACG"), 3))
        assert ident and rank == 1

    def test_l1_five_species_not_identifiable(self):
        # base-composition rows only: rank capped at 4
        db = db_of("ACGTA", "AACCG", "GGTTA", "CCGTA", "TTGGC")
        ident, rank = is_identifiable(build_matrix(db, 1))
        assert not ident
        assert rank <= 4

    def test_disjoint_windows_identifiable(self):
        ident, rank = is_identifiable(build_matrix(db_of("ACGT", "TGCA"), 2))
        assert ident and rank == 2

    def test_identical_window_multisets_not_identifiable(self):
        ident, _ = is_identifiable(build_matrix(db_of("AACA", "ACAA"), 2))
        assert not ident


class TestPartialIdentifiability:
    def test_fully_identifiable_all_flags_true(self):
        flags = partially_identifiable(build_matrix(db_of("ACGT", "TGCA"), 2))
        assert flags.all()

    def test_shared_window_multiset_pair_flagged(self):
        # species 1 and 2 have identical window multisets {AA, AC, CA}
        A = build_matrix(db_of("AACA", "ACAA", "GGGG"), 2)
        flags = partially_identifiable(A)
        np.testing.assert_array_equal(flags, [False, False, True])

    def test_null_space_is_difference_vector(self):
        A = build_matrix(db_of("AACA", "ACAA", "GGGG"), 2)
        dense = np.vstack([A.matrix.toarray(), np.ones(3)])
        _, _, null_dim = null_space_flags(dense)
        assert null_dim == 1
        diff = np.array([1.0, -1.0, 0.0]) / np.sqrt(2)
        assert np.linalg.norm(dense @ diff) <= 1e-12

    def test_full_read_length_substring_free(self):
        db = db_of("ACGTAG", "TTGCAT", "GGATCC")
        assert not find_substring_pairs(db)
        flags = partially_identifiable(build_matrix(db, db.n_max))
        assert flags.all()

    def test_identifiable_iff_all_flags(self):
        rng = np.random.default_rng(0)
        for trial in range(15):
            n = int(rng.integers(2, 10))
            seqs = set()
            while len(seqs) < n:
                seqs.add("".join("ACGT"[d] for d in rng.integers(0, 4, 8)))
            A = build_matrix(db_of(*sorted(seqs)), int(rng.integers(2, 5)))
            ident, _ = is_identifiable(A)
            flags = partially_identifiable(A)
            assert ident == flags.all()
            np.testing.assert_array_equal(flags, dense_flags_oracle(A))

    def test_column_permutation_equivariance(self):
        seqs = ["AACA", "ACAA", "GGGG", "TTAG"]
        flags = partially_identifiable(build_matrix(db_of(*seqs), 2))
        perm = [2, 0, 3, 1]
        flags_p = partially_identifiable(build_matrix(db_of(*[seqs[i] for i in perm]), 2))
        np.testing.assert_array_equal(flags_p, flags[perm])


class TestComponents:
    def test_disjoint_databases_split(self):
        # first two share only AT/TA windows; third uses G/C only
        A = build_matrix(db_of("ATAT", "TATA", "GCGC", "CGCG"), 2)
        groups = decompose_components(A)
        as_sets = {frozenset(g.tolist()) for g in groups}
        assert as_sets == {frozenset({0, 1}), frozenset({2, 3})}

    def test_full_sharing_single_component(self):
        A = build_matrix(db_of("ACGT", "CGTA", "GTAC"), 2)
        assert len(decompose_components(A)) == 1

    def test_component_flags_match_whole_matrix_oracle(self):
        rng = np.random.default_rng(1)
        for trial in range(10):
            seqs = set()
            while len(seqs) < 12:
                seqs.add("".join("ACGT"[d] for d in rng.integers(0, 4, 10)))
            A = build_matrix(db_of(*sorted(seqs)), 4)
            np.testing.assert_array_equal(partially_identifiable(A),
                                          dense_flags_oracle(A))

    def test_gram_path_matches_svd_path(self):
        A = build_matrix(db_of("AACA", "ACAA", "GGGG", "TTAG"), 2)
        dense = np.vstack([A.matrix.toarray(), np.ones(4)])
        svd_flags, rank = null_space_flags(dense)[0], null_space_flags(dense)[1]
        gram = dense.T @ dense
        gram_flags, gram_rank = null_space_flags_from_gram(gram)
        np.testing.assert_array_equal(gram_flags, svd_flags)
        assert gram_rank == rank


class TestCriticalReadLengthScan:
    def test_hand_example_critical_length_three(self):
        result = critical_read_length_scan(db_of("AACA", "ACAA"), 2, 4)
        assert result.fully_identifiable == [False, True, True]
        assert result.critical_length == 3

    def test_substring_violation_reported(self):
        result = critical_read_length_scan(db_of("ACGTACGT", "GTAC"), 2, 3)
        assert result.substring_pairs == [(2, 1)]

    def test_fraction_monotone_for_substring_free_db(self):
        rng = np.random.default_rng(2)
        seqs = set()
        while len(seqs) < 15:
            seqs.add("".join("ACGT"[d] for d in rng.integers(0, 4, 12)))
        db = db_of(*sorted(seqs))
        assert not find_substring_pairs(db)
        result = critical_read_length_scan(db, 1, 8)
        assert result.monotonicity_violations == []
        assert result.fractions == sorted(result.fractions)

    def test_empty_range_rejected(self):
        with pytest.raises(ValueError):
            critical_read_length_scan(db_of("ACGT"), 3, 2)


class TestAnalyzeReport:
    def test_report_consistency(self):
        A = build_matrix(db_of("AACA", "ACAA", "GGGG"), 2)
        report = analyze(A)
        assert report.n_species == 3
        assert report.identifiable == (report.rank == 3)
        assert report.null_space_dim == 3 - report.rank
        assert report.identifiable == report.partial_flags.all()

    def test_identifiable_implies_all_partial(self):
        A = build_matrix(db_of("ACGT", "TGCA"), 2)
        report = analyze(A)
        assert report.identifiable
        assert report.partial_flags.all()

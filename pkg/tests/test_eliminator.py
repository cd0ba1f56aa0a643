"""Ambiguity-eliminating window matrices: algebraic invariants and dispatch."""

import math

import numpy as np
import pytest

from gnssfgo.eliminator import (
    EliminatorKind,
    EliminatorMatrix,
    build_eliminator,
    orthonormal_null_basis,
    random_unitary,
    random_unitary_eliminator,
    tdcp_difference_matrix,
)

ALL_KINDS = (
    EliminatorKind.ORTHONORMAL_BASIS_T,
    EliminatorKind.RANDOM_UNITARY_IMAG,
    EliminatorKind.TIME_DIFFERENCE,
)


class TestOrthonormalNullBasis:
    def test_two_epoch_row_is_normalized_difference(self):
        basis = orthonormal_null_basis(2)
        assert basis.rows == 1 and basis.cols == 2
        row = basis.entries[0]
        expected = np.array([1.0, -1.0]) / math.sqrt(2.0)
        assert np.abs(np.abs(row) - np.abs(expected)).max() < 1e-15
        assert abs(row.sum()) < 1e-15

    def test_five_epoch_rows_orthonormal_and_annihilating(self):
        basis = orthonormal_null_basis(5)
        assert basis.entries.shape == (4, 5)
        gram = basis.entries @ basis.entries.T
        assert np.abs(gram - np.eye(4)).max() < 1e-12
        assert np.abs(basis.entries @ np.ones(5)).max() < 1e-12

    def test_isometry_on_complement_of_constants(self):
        n = 11
        basis = orthonormal_null_basis(n)
        projector = np.eye(n) - np.full((n, n), 1.0 / n)
        # B^T B equals the projector onto the constant vector's complement,
        # so the basis preserves norms on that subspace.
        assert np.abs(basis.entries.T @ basis.entries - projector).max() < 1e-12
        rng = np.random.default_rng(7)
        v = rng.normal(size=n)
        v -= v.mean()
        assert abs(np.linalg.norm(basis.apply(v)) - np.linalg.norm(v)) < 1e-10

    def test_deterministic_across_calls(self):
        a = orthonormal_null_basis(9).entries
        b = orthonormal_null_basis(9).entries
        assert np.array_equal(a, b)


class TestRandomUnitary:
    def test_unitary_and_fixes_constant_vector(self):
        for n, seed in [(2, 0), (5, 3), (16, 1), (32, 9)]:
            u = random_unitary(n, seed)
            assert np.abs(u @ u.conj().T - np.eye(n)).max() < 1e-10
            ones = np.ones(n)
            assert np.abs(u @ ones - ones).max() < 1e-10

    def test_imaginary_part_annihilates_constants_with_full_rank(self):
        for n, seed in [(3, 0), (11, 0), (24, 5)]:
            g = random_unitary_eliminator(n, seed)
            assert g.entries.shape == (n, n)
            assert np.abs(g.entries @ np.ones(n)).max() < 1e-12
            assert np.linalg.matrix_rank(g.entries, tol=1e-9) == n - 1

    def test_same_seed_bit_identical_different_seed_differs(self):
        a = random_unitary_eliminator(8, 4).entries
        b = random_unitary_eliminator(8, 4).entries
        c = random_unitary_eliminator(8, 5).entries
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_eleven_epoch_seed_zero_is_dense_off_diagonal(self):
        g = random_unitary_eliminator(11, 0)
        off = ~np.eye(11, dtype=bool)
        dense = np.count_nonzero(np.abs(g.entries[off]) > 1e-6)
        assert dense >= 0.8 * off.sum()


class TestTimeDifference:
    def test_five_epoch_matrix_bit_exact(self):
        expected = np.zeros((5, 5))
        for i in range(4):
            expected[i, i] = -1.0
            expected[i, i + 1] = 1.0
        assert np.array_equal(tdcp_difference_matrix(5).entries, expected)

    def test_applies_as_consecutive_differences(self):
        d = tdcp_difference_matrix(5)
        out = d.apply(np.array([1.0, 2.0, 4.0, 8.0, 16.0]))
        assert np.array_equal(out, np.array([1.0, 2.0, 4.0, 8.0, 0.0]))

    def test_rank_and_nonzero_count(self):
        d = tdcp_difference_matrix(11)
        assert np.linalg.matrix_rank(d.entries) == 10
        assert np.count_nonzero(d.entries) == 20


class TestDispatchAndValidation:
    @pytest.mark.parametrize("kind", ALL_KINDS)
    @pytest.mark.parametrize("n", [2, 3, 7, 64])
    def test_every_kind_annihilates_constant_windows(self, kind, n):
        matrix = build_eliminator(kind, n, seed=2)
        assert matrix.kind is kind
        assert np.abs(matrix.apply(np.full(n, 123.456))).max() < 1e-9

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_window_size_below_two_is_rejected(self, kind):
        with pytest.raises(ValueError):
            build_eliminator(kind, 1)

    def test_non_integer_window_size_is_rejected(self):
        with pytest.raises(TypeError):
            orthonormal_null_basis(4.0)

    def test_matrix_that_keeps_constants_is_rejected(self):
        with pytest.raises(ValueError, match="annihilate"):
            EliminatorMatrix(rows=2, cols=2, entries=np.eye(2),
                             kind=EliminatorKind.TIME_DIFFERENCE)

    def test_non_orthonormal_reduced_basis_is_rejected(self):
        entries = np.array([[2.0, -2.0]]) / math.sqrt(2.0)
        with pytest.raises(ValueError, match="orthonormal"):
            EliminatorMatrix(rows=1, cols=2, entries=entries,
                             kind=EliminatorKind.ORTHONORMAL_BASIS_T)

    def test_shape_mismatch_is_rejected(self):
        with pytest.raises(ValueError, match="shape"):
            EliminatorMatrix(rows=3, cols=4, entries=np.zeros((2, 4)),
                             kind=EliminatorKind.TIME_DIFFERENCE)

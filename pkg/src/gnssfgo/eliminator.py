"""Ambiguity-eliminating matrices for windowed carrier-phase constraints.

A window of n phase measurements on one satellite shares a single unknown
ambiguity, constant along the all-ones direction. Any matrix annihilating
the ones vector removes it. Three constructions are provided:

* a deterministic orthonormal basis of the ones-complement (reduced
  (n-1) x n form whose propagated covariance stays invertible),
* the imaginary part of a seeded random unitary matrix that fixes the
  ones vector (dense n x n form, rank n-1),
* the sparse consecutive-difference matrix used by time-differenced
  carrier phase (n x n with a zero last row).

All three annihilate constants; they differ only in how the remaining
n-1 dimensions are mixed, and weighted least squares is invariant to
that choice (see the factor tests).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

__all__ = [
    "EliminatorKind",
    "EliminatorMatrix",
    "orthonormal_null_basis",
    "random_unitary",
    "random_unitary_eliminator",
    "tdcp_difference_matrix",
]


class EliminatorKind(enum.Enum):
    """Which construction produced an eliminator matrix."""

    RANDOM_UNITARY_IMAG = "random-unitary"
    ORTHONORMAL_BASIS_T = "orthonormal"
    TIME_DIFFERENCE = "tdcp"


@dataclass(frozen=True)
class EliminatorMatrix:
    """An ambiguity-eliminating matrix over a window of `cols` epochs."""

    rows: int
    cols: int
    entries: np.ndarray
    kind: EliminatorKind

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        object.__setattr__(self, "entries", entries)
        if entries.shape != (self.rows, self.cols):
            raise ValueError(
                f"entries shape {entries.shape} != ({self.rows}, {self.cols})")
        if not np.all(np.isfinite(entries)):
            raise ValueError("eliminator entries must be finite")
        ones = np.ones(self.cols)
        annihilation = np.abs(entries @ ones)
        if annihilation.max() > 1e-12:
            raise ValueError(
                f"eliminator does not annihilate constants: max |E·1| = "
                f"{annihilation.max():.3e}")
        if self.kind is EliminatorKind.ORTHONORMAL_BASIS_T:
            if self.rows != self.cols - 1:
                raise ValueError("reduced basis must have n-1 rows")
            gram = entries @ entries.T
            if np.abs(gram - np.eye(self.rows)).max() > 1e-12:
                raise ValueError("reduced basis rows are not orthonormal")

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Project a length-n window vector onto the ambiguity-free subspace."""
        return self.entries @ np.asarray(values, dtype=float)


def _check_window_size(n: int) -> None:
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool):
        raise TypeError(f"window size must be an integer, got {type(n).__name__}")
    if n < 2:
        raise ValueError(f"window size must be >= 2, got {n}")


def orthonormal_null_basis(n: int) -> EliminatorMatrix:
    """Deterministic orthonormal basis of the ones-complement, (n-1) x n.

    Built from the Householder reflection taking e1 to 1/sqrt(n): its last
    n-1 columns are an orthonormal basis of the subspace orthogonal to the
    ones vector. Pure arithmetic, so repeated calls agree bit-exactly.
    """
    _check_window_size(n)
    u = np.full(n, 1.0 / np.sqrt(n))
    v = u.copy()
    v[0] -= 1.0
    house = np.eye(n) - 2.0 * np.outer(v, v) / (v @ v)
    basis_t = house[:, 1:].T
    return EliminatorMatrix(rows=n - 1, cols=n, entries=basis_t,
                            kind=EliminatorKind.ORTHONORMAL_BASIS_T)


def random_unitary(n: int, seed: int) -> np.ndarray:
    """Seeded n x n complex unitary matrix that fixes the ones vector.

    Draws two (n-1) x (n-1) blocks of uniform [0, 1) entries from the
    counter-based Philox generator (row-major, real block first), forms the
    complex matrix H = H1 + i*H2, QR-factors H - I with the sign convention
    that R's diagonal is real non-negative, and embeds the unitary factor Q
    into the ones-complement: U = S Q S^T + (1/n) 1 1^T, where S's columns
    are the deterministic orthonormal basis of that complement. U then
    satisfies U 1 = 1 and U U^H = I.
    """
    _check_window_size(n)
    rng = np.random.Generator(np.random.Philox(seed))
    h1 = rng.random((n - 1, n - 1))
    h2 = rng.random((n - 1, n - 1))
    q, r = np.linalg.qr((h1 + 1j * h2) - np.eye(n - 1))
    diag = np.diagonal(r)
    magnitude = np.abs(diag)
    safe = np.where(magnitude > 0.0, magnitude, 1.0)
    phase = np.where(magnitude > 0.0, diag / safe, 1.0)
    q = q * phase  # column j scaled by phase[j]; R's diagonal becomes |diag|
    s = orthonormal_null_basis(n).entries.T  # n x (n-1), columns span 1-perp
    ones = np.ones(n)
    return s @ q @ s.T + np.outer(ones, ones) / n


def random_unitary_eliminator(n: int, seed: int) -> EliminatorMatrix:
    """Dense n x n eliminator: imaginary part of the seeded random unitary.

    Since U fixes the (real) ones vector, Im(U) annihilates it; the result
    has rank n-1 and densely mixes all epochs of the window.
    """
    u = random_unitary(n, seed)
    return EliminatorMatrix(rows=n, cols=n, entries=u.imag,
                            kind=EliminatorKind.RANDOM_UNITARY_IMAG)


def tdcp_difference_matrix(n: int) -> EliminatorMatrix:
    """Sparse n x n consecutive-difference matrix (zero last row).

    Row i holds -1 at column i and +1 at column i+1, forming the n-1
    time differences; the final row is identically zero so the matrix is
    square like the dense form.
    """
    _check_window_size(n)
    entries = np.zeros((n, n))
    idx = np.arange(n - 1)
    entries[idx, idx] = -1.0
    entries[idx, idx + 1] = 1.0
    return EliminatorMatrix(rows=n, cols=n, entries=entries,
                            kind=EliminatorKind.TIME_DIFFERENCE)


def build_eliminator(kind: EliminatorKind, n: int, seed: int = 0) -> EliminatorMatrix:
    """Dispatch on kind; `seed` only affects the random-unitary form."""
    if kind is EliminatorKind.ORTHONORMAL_BASIS_T:
        return orthonormal_null_basis(n)
    if kind is EliminatorKind.RANDOM_UNITARY_IMAG:
        return random_unitary_eliminator(n, seed)
    if kind is EliminatorKind.TIME_DIFFERENCE:
        return tdcp_difference_matrix(n)
    raise ValueError(f"unknown eliminator kind: {kind!r}")

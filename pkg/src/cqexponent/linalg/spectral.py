"""
Dense Hermitian matrices and spectral calculus.

Every operator function in the package (fractional powers, logarithms,
matrix entropy) goes through :func:`apply_spectral_fn`, which evaluates a
scalar function on the eigenvalues and reassembles ``V f(Λ) V^H``.
"""

from __future__ import annotations

import unittest
from unittest import mock
from dataclasses import dataclass
from typing import Callable

import numpy as np
import numpy.typing as npt
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import entr, xlogy
from scipy.stats import unitary_group

from ..common.errors import (
    DimensionError,
    NotHermitianError,
    NotPositiveSemidefiniteError,
    SpectralDomainError,
    SpectralError,
)
from ..common.lazyproperty import lazyproperty
from ..common.settings import get_settings
from ..common.strategies import psd_arrays
from ..common.utils import log

ComplexMatrix = npt.NDArray[np.complex128]
ScalarFunction = Callable[[np.ndarray], np.ndarray]


def as_complex_matrix(data: npt.ArrayLike) -> ComplexMatrix:
    """
    Validate a square matrix with finite entries and return a complex copy.
    """
    m = np.array(data, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
        raise DimensionError(f"expected a non-empty square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DimensionError("matrix has non-finite entries")
    return m


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: ComplexMatrix

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)

    def reconstruct(self, values: np.ndarray | None = None) -> ComplexMatrix:
        v = self.eigenvectors
        values = self.eigenvalues if values is None else values
        return (v * values) @ v.conj().T


@dataclass(eq=False)
class HermitianMatrix:
    """
    Immutable Hermitian operator. Construction symmetrizes with (A + A^H)/2.
    """

    data: ComplexMatrix

    def __post_init__(self):
        m = as_complex_matrix(self.data)
        m = (m + m.conj().T) * 0.5
        m.setflags(write=False)
        object.__setattr__(self, "data", m)

    @classmethod
    def from_array(cls, data: npt.ArrayLike, tol: float | None = None) -> HermitianMatrix:
        """
        Like the constructor, but reject inputs that are not Hermitian within tolerance.
        """
        m = as_complex_matrix(data)
        tol = get_settings().hermitian_tol if tol is None else tol
        residual = float(np.max(np.abs(m - m.conj().T)))
        if residual > tol * (1 + float(np.max(np.abs(m)))):
            raise NotHermitianError(residual)
        return cls(m)

    @classmethod
    def identity(cls, dim: int) -> HermitianMatrix:
        return cls(np.eye(dim))

    @classmethod
    def diagonal(cls, values: npt.ArrayLike) -> HermitianMatrix:
        return cls(np.diag(np.asarray(values, dtype=float)))

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @lazyproperty
    def spectrum(self) -> SpectralDecomposition:
        return eigh(self)

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.spectrum.eigenvalues

    def trace(self) -> float:
        return float(np.trace(self.data).real)

    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues[0])

    def is_invertible(self, floor: float | None = None) -> bool:
        floor = get_settings().eigen_floor if floor is None else floor
        return bool(np.min(np.abs(self.eigenvalues)) > floor)

    def support_projector(self, floor: float | None = None) -> HermitianMatrix:
        floor = get_settings().eigen_floor if floor is None else floor
        mask = (np.abs(self.eigenvalues) > floor).astype(float)
        return HermitianMatrix(self.spectrum.reconstruct(mask))

    def power(self, p: float, support_only: bool = False) -> HermitianMatrix:
        return apply_spectral_fn(self, lambda x: np.power(x, p), support_only)

    def log(self, support_only: bool = False) -> HermitianMatrix:
        return apply_spectral_fn(self, np.log, support_only)

    def conjugate_by(self, u: npt.ArrayLike) -> HermitianMatrix:
        u = np.asarray(u, dtype=np.complex128)
        return HermitianMatrix(u @ self.data @ u.conj().T)

    def max_abs_difference(self, other: HermitianMatrix | npt.ArrayLike) -> float:
        b = other.data if isinstance(other, HermitianMatrix) else np.asarray(other)
        return float(np.max(np.abs(self.data - b)))

    def __add__(self, other: HermitianMatrix) -> HermitianMatrix:
        return HermitianMatrix(self.data + other.data)

    def __sub__(self, other: HermitianMatrix) -> HermitianMatrix:
        return HermitianMatrix(self.data - other.data)

    def __mul__(self, c: float) -> HermitianMatrix:
        return HermitianMatrix(self.data * float(c))

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"HermitianMatrix(dim={self.dim})"


def jacobi_eigh(
    a: npt.ArrayLike, max_rotations: int, tol: float = 1e-13
) -> tuple[np.ndarray, ComplexMatrix]:
    """
    Cyclic complex Jacobi diagonalisation of a Hermitian matrix.

    Each rotation zeroes one off-diagonal pair. Raises :class:`SpectralError`
    when ``max_rotations`` rotations leave the off-diagonal Frobenius norm above
    ``tol`` times the norm of the matrix.
    """
    m = np.array(a, dtype=np.complex128)
    dim = m.shape[0]
    v = np.eye(dim, dtype=np.complex128)
    target = tol * float(np.linalg.norm(m))
    rotations = 0
    while np.linalg.norm(m - np.diag(np.diag(m))) > target:
        for p in range(dim - 1):
            for q in range(p + 1, dim):
                r = abs(m[p, q])
                if r <= target / dim:
                    continue
                if rotations >= max_rotations:
                    raise SpectralError(f"Jacobi eigensolver did not converge in {max_rotations} rotations")
                phase = np.conj(m[p, q]) / r
                theta = 0.5 * np.arctan2(2 * r, (m[q, q] - m[p, p]).real)
                c, s = np.cos(theta), np.sin(theta)
                g = np.array([[c, s], [-s * phase, c * phase]])
                pair = [p, q]
                m[:, pair] = m[:, pair] @ g
                m[pair, :] = g.conj().T @ m[pair, :]
                v[:, pair] = v[:, pair] @ g
                rotations += 1
    w = np.diag(m).real.copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def eigh(a: HermitianMatrix) -> SpectralDecomposition:
    """
    Eigendecomposition with ascending eigenvalues and orthonormal eigenvectors.

    LAPACK's divide-and-conquer driver is deterministic for identical input bits.
    When it fails, cyclic Jacobi takes over with at most
    ``eigh_sweep_factor * dim**2`` plane rotations.
    """
    try:
        w, v = np.linalg.eigh(a.data)
    except np.linalg.LinAlgError as e:
        log(f"LAPACK eigh failed ({e}); falling back to Jacobi")
        w, v = jacobi_eigh(a.data, get_settings().eigh_sweep_factor * a.dim**2)
    w.setflags(write=False)
    v.setflags(write=False)
    return SpectralDecomposition(w, v)


def spectral_values(
    a: HermitianMatrix, f: ScalarFunction, support_only: bool = False
) -> np.ndarray:
    """
    f applied to the eigenvalues of ``a``; the building block of :func:`apply_spectral_fn`.
    """
    lam = a.eigenvalues
    floor = get_settings().eigen_floor
    with np.errstate(all="ignore"):
        if support_only:
            kernel = np.abs(lam) <= floor
            values = np.where(kernel, 0.0, f(np.where(kernel, 1.0, lam)))
        else:
            values = f(lam)
    values = np.asarray(values)
    if np.iscomplexobj(values):
        bad = np.abs(values.imag) > 0
        if np.any(bad):
            raise SpectralDomainError(float(lam[np.argmax(bad)]))
        values = values.real
    bad = ~np.isfinite(values)
    if np.any(bad):
        raise SpectralDomainError(float(lam[np.argmax(bad)]))
    return values.astype(float)


def apply_spectral_fn(
    a: HermitianMatrix, f: ScalarFunction, support_only: bool = False
) -> HermitianMatrix:
    """
    Return V f(Λ) V^H.

    With ``support_only`` set, eigenvalues of magnitude at most the eigen-floor
    are mapped to 0 regardless of f. A non-finite value of f is a domain error
    naming the offending eigenvalue.
    """
    return HermitianMatrix(a.spectrum.reconstruct(spectral_values(a, f, support_only)))


def trace_of_fn(a: HermitianMatrix, f: ScalarFunction, support_only: bool = False) -> float:
    """
    Tr f(A) without reassembling the matrix.
    """
    return float(np.sum(spectral_values(a, f, support_only)))


def clipped_eigenvalues(a: HermitianMatrix, index: int | None = None) -> np.ndarray:
    """
    Eigenvalues of a numerically PSD matrix, with roundoff negatives clipped to 0.
    """
    lam = a.eigenvalues
    floor = get_settings().eigen_floor
    if lam[0] < -floor:
        raise NotPositiveSemidefiniteError(float(lam[0]), index)
    return np.clip(lam, 0.0, None)


def matrix_entropy(a: HermitianMatrix) -> HermitianMatrix:
    """
    H(A) = -A log A with 0 log 0 = 0.
    """
    lam = clipped_eigenvalues(a)
    return HermitianMatrix(a.spectrum.reconstruct(entr(lam)))


def _floor_to_zero(x: npt.ArrayLike) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) <= get_settings().eigen_floor, 0.0, x)


def x_log_x(x: npt.ArrayLike) -> np.ndarray:
    """
    x log x with 0 log 0 = 0; roundoff negatives count as 0, genuine negatives give NaN.
    """
    x = _floor_to_zero(x)
    with np.errstate(invalid="ignore"):
        return xlogy(x, x)


def x_log2_x(x: npt.ArrayLike) -> np.ndarray:
    """
    x (log x)^2, continuous at 0; NaN for genuine negatives.
    """
    x = _floor_to_zero(x)
    with np.errstate(all="ignore"):
        return np.where(x > 0, x * np.log(np.where(x > 0, x, 1.0)) ** 2, np.where(x == 0, 0.0, np.nan))


def random_hermitian(rng: np.random.Generator, dim: int) -> HermitianMatrix:
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return HermitianMatrix(g)


def random_unitary(rng: np.random.Generator, dim: int) -> ComplexMatrix:
    if dim == 1:
        return np.exp(2j * np.pi * rng.random()) * np.ones((1, 1), dtype=np.complex128)
    return unitary_group.rvs(dim, random_state=rng)


class TestEigh(unittest.TestCase):
    def test_diagonal(self):
        dec = eigh(HermitianMatrix.diagonal([3, 1, 2]))
        np.testing.assert_allclose(dec.eigenvalues, [1, 2, 3], atol=1e-15)

    def test_swap(self):
        dec = eigh(HermitianMatrix([[0, 1], [1, 0]]))
        np.testing.assert_allclose(dec.eigenvalues, [-1, 1], atol=1e-15)

    def test_reconstruction_and_orthonormality(self):
        rng = np.random.default_rng(5)
        for dim in (1, 2, 5, 9):
            a = random_hermitian(rng, dim)
            dec = eigh(a)
            v = dec.eigenvectors
            self.assertLessEqual(np.max(np.abs(v.conj().T @ v - np.eye(dim))), 1e-10)
            scale = 1 + np.max(np.abs(a.data))
            self.assertLessEqual(a.max_abs_difference(dec.reconstruct()), 1e-9 * scale)
            self.assertTrue(np.all(np.diff(dec.eigenvalues) >= 0))

    def test_deterministic(self):
        a = random_hermitian(np.random.default_rng(1), 6)
        b = HermitianMatrix(a.data.copy())
        np.testing.assert_array_equal(eigh(a).eigenvalues, eigh(b).eigenvalues)
        np.testing.assert_array_equal(eigh(a).eigenvectors, eigh(b).eigenvectors)

    def test_density_trace(self):
        rng = np.random.default_rng(2)
        g = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        rho = g @ g.conj().T
        rho /= np.trace(rho).real
        self.assertAlmostEqual(float(np.sum(eigh(HermitianMatrix(rho)).eigenvalues)), 1.0, delta=1e-10)

    @settings(max_examples=50)
    @given(psd_arrays(max_dim=5), st.integers(0, 2**32 - 1))
    def test_unitary_covariance(self, rho, seed):
        a = HermitianMatrix(rho)
        u = random_unitary(np.random.default_rng(seed), a.dim)
        np.testing.assert_allclose(a.conjugate_by(u).eigenvalues, a.eigenvalues, atol=1e-12)

    def test_jacobi_matches_lapack(self):
        rng = np.random.default_rng(7)
        for dim in range(1, 7):
            a = random_hermitian(rng, dim)
            w, v = jacobi_eigh(a.data, 100 * dim**2)
            np.testing.assert_allclose(w, np.linalg.eigvalsh(a.data), atol=1e-10)
            self.assertLessEqual(np.max(np.abs(v.conj().T @ v - np.eye(dim))), 1e-10)
            self.assertLessEqual(a.max_abs_difference(v @ np.diag(w) @ v.conj().T), 1e-10)

    def test_jacobi_rotation_cap(self):
        a = random_hermitian(np.random.default_rng(8), 5)
        with self.assertRaises(SpectralError):
            jacobi_eigh(a.data, 2)

    def test_falls_back_to_jacobi(self):
        a = random_hermitian(np.random.default_rng(9), 4)
        with mock.patch("numpy.linalg.eigh", side_effect=np.linalg.LinAlgError("no convergence")):
            dec = eigh(a)
        self.assertLessEqual(a.max_abs_difference(dec.reconstruct()), 1e-9)
        np.testing.assert_allclose(dec.eigenvalues, np.linalg.eigvalsh(a.data), atol=1e-10)

    def test_from_array_rejects_non_hermitian(self):
        with self.assertRaises(NotHermitianError):
            HermitianMatrix.from_array([[0, 1], [0, 0]])
        with self.assertRaises(DimensionError):
            HermitianMatrix([[1, 2, 3]])
        with self.assertRaises(DimensionError):
            HermitianMatrix([[np.nan]])


class TestSpectralFunctions(unittest.TestCase):
    def test_square_root(self):
        r = HermitianMatrix.diagonal([4, 1]).power(0.5)
        np.testing.assert_allclose(r.data, np.diag([2, 1]), atol=1e-14)

    def test_log_identity(self):
        r = HermitianMatrix.identity(3).log()
        np.testing.assert_allclose(r.data, np.zeros((3, 3)), atol=1e-15)

    def test_power_one_over_one_plus_s(self):
        s = 1.0
        r = HermitianMatrix.diagonal([0.9, 0.1]).power(1 / (1 + s))
        np.testing.assert_allclose(
            np.diag(r.data).real, [np.sqrt(0.9), np.sqrt(0.1)], atol=1e-14
        )

    def test_domain_violation_reports_eigenvalue(self):
        with self.assertRaises(SpectralDomainError) as ctx:
            HermitianMatrix.diagonal([-0.5, 1.0]).log()
        self.assertEqual(ctx.exception.eigenvalue, -0.5)
        with self.assertRaises(SpectralDomainError):
            HermitianMatrix.diagonal([0.0, 1.0]).log()

    def test_support_only_maps_kernel_to_zero(self):
        r = HermitianMatrix.diagonal([0.0, 1e-13, 2.0]).log(support_only=True)
        np.testing.assert_allclose(np.diag(r.data).real, [0, 0, np.log(2)], atol=1e-15)
        r = HermitianMatrix.diagonal([0.0, 4.0]).power(-0.5, support_only=True)
        np.testing.assert_allclose(np.diag(r.data).real, [0, 0.5], atol=1e-15)

    def test_identity_function(self):
        a = random_hermitian(np.random.default_rng(4), 6)
        self.assertLessEqual(apply_spectral_fn(a, lambda x: x).max_abs_difference(a), 1e-10)

    @settings(max_examples=50)
    @given(psd_arrays(), st.sampled_from([(0.5, 2.0), (1.5, 0.3), (0.25, 4.0)]))
    def test_power_composition(self, rho, pq):
        a = HermitianMatrix(rho)
        p, q = pq
        self.assertLessEqual(a.power(p).power(q).max_abs_difference(a.power(p * q)), 1e-9)

    def test_trace_of_fn(self):
        a = HermitianMatrix.diagonal([0.25, 0.75])
        self.assertAlmostEqual(trace_of_fn(a, lambda x: x**2), 0.625, delta=1e-15)

    def test_support_projector(self):
        p = HermitianMatrix.diagonal([0.0, 0.3, 0.7]).support_projector()
        np.testing.assert_allclose(np.diag(p.data).real, [0, 1, 1], atol=1e-15)
        self.assertFalse(HermitianMatrix.diagonal([0.0, 1.0]).is_invertible())
        self.assertTrue(HermitianMatrix.diagonal([0.5, 1.0]).is_invertible())


class TestMatrixEntropy(unittest.TestCase):
    def test_pure(self):
        h = matrix_entropy(HermitianMatrix.diagonal([1, 0]))
        np.testing.assert_allclose(h.data, np.zeros((2, 2)), atol=1e-15)

    def test_half_identity(self):
        h = matrix_entropy(HermitianMatrix.identity(2) * 0.5)
        np.testing.assert_allclose(h.data, np.eye(2) * np.log(2) / 2, atol=1e-15)

    def test_scalar_oracle(self):
        h = matrix_entropy(HermitianMatrix.diagonal([0.9, 0.1]))
        expected = [-0.9 * np.log(0.9), -0.1 * np.log(0.1)]
        np.testing.assert_allclose(np.diag(h.data).real, expected, atol=1e-14)
        self.assertAlmostEqual(expected[0], 0.0948, delta=1e-4)
        self.assertAlmostEqual(expected[1], 0.2303, delta=1e-4)

    def test_rejects_negative(self):
        with self.assertRaises(NotPositiveSemidefiniteError):
            matrix_entropy(HermitianMatrix.diagonal([1.1, -0.1]))

    def test_clips_roundoff(self):
        h = matrix_entropy(HermitianMatrix.diagonal([1.0, -1e-14]))
        np.testing.assert_allclose(h.data, np.zeros((2, 2)), atol=1e-15)

    def test_x_log_helpers(self):
        x = np.array([0.0, 0.5, 1.0])
        np.testing.assert_allclose(x_log_x(x), [0, 0.5 * np.log(0.5), 0], atol=1e-16)
        np.testing.assert_allclose(x_log2_x(x), [0, 0.5 * np.log(0.5) ** 2, 0], atol=1e-16)

"""Complex matrix domain types: density matrices, conditional ensembles, Kraus
bundles and their stacking onto Stiefel points.

Matrices are plain ``numpy`` ``complex128`` arrays. A Stiefel point is a tall
array ``kappa`` of shape ``(dim_o * j * m, m)`` with ``kappa^H kappa = I``.

Stacking layout is class-major then symbol: the ``m``-row block ``b`` holds
``ops[y, c]`` with ``b = c * dim_o + y`` (0-based class index ``c``). For
``k = 1`` class 0 acts on the right neighbour ``rho^(i+1)``, class 1 on
``rho^(i)`` and class 2 on the left neighbour ``rho^(i-1)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

HERMITIAN_TOL = 1e-10
STIEFEL_TOL = 1e-9


class ShapeError(ValueError):
    """Raised when array dimensions do not match the requested layout."""


def dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def as_cmatrix(a) -> np.ndarray:
    arr = np.asarray(a, dtype=np.complex128)
    if arr.ndim != 2:
        raise ShapeError(f"expected a 2-d matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix has non-finite entries")
    return arr


@dataclass(frozen=True)
class DensityReport:
    hermitian_residual: float
    min_eigenvalue: float
    trace: complex
    tol: float

    @property
    def ok(self) -> bool:
        return (
            self.hermitian_residual <= self.tol
            and self.min_eigenvalue >= -self.tol
            and abs(self.trace.real - 1.0) <= self.tol
            and abs(self.trace.imag) <= min(self.tol, 1e-12)
        )


def validate_density(mat, tol: float = HERMITIAN_TOL) -> DensityReport:
    """Report Hermiticity residual, minimum eigenvalue and trace of ``mat``.

    The report's ``ok`` flag is true iff the matrix is Hermitian, positive
    semi-definite and of unit trace, each within ``tol``.
    """
    a = np.asarray(mat, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"density matrix must be square, got shape {a.shape}")
    herm = float(np.max(np.abs(a - a.conj().T))) if a.size else 0.0
    min_eig = float(np.min(np.linalg.eigvalsh((a + a.conj().T) / 2)))
    return DensityReport(herm, min_eig, complex(np.trace(a)), tol)


@dataclass(frozen=True)
class ConditionalDensityEnsemble:
    """``n_max`` conditional density matrices whose traces sum to one.

    ``members`` has shape ``(n_max, m, m)``.
    """

    members: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.members, dtype=np.complex128)
        if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
            raise ShapeError(f"ensemble must have shape (n_max, m, m), got {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "members", arr)

    @property
    def n_max(self) -> int:
        return self.members.shape[0]

    @property
    def m(self) -> int:
        return self.members.shape[1]

    def total(self) -> np.ndarray:
        return self.members.sum(axis=0)

    def check(self, tol: float = HERMITIAN_TOL) -> None:
        """Raise ``ValueError`` if any invariant is violated."""
        for i, rho in enumerate(self.members):
            herm = np.max(np.abs(rho - rho.conj().T))
            if herm > tol:
                raise ValueError(f"member {i} not Hermitian (residual {herm:.3g})")
            lo = np.min(np.linalg.eigvalsh((rho + rho.conj().T) / 2))
            if lo < -tol:
                raise ValueError(f"member {i} not PSD (min eigenvalue {lo:.3g})")
        tr = np.trace(self.total())
        if abs(tr.real - 1.0) > tol or abs(tr.imag) > tol:
            raise ValueError(f"ensemble total trace is {tr}, expected 1")


@dataclass(frozen=True)
class KrausBundle:
    """Kraus operators ``ops[y, c]`` for symbol ``y`` and class ``c``.

    ``ops`` has shape ``(dim_o, j, m, m)`` and ``j = 2k + 1``.
    """

    ops: np.ndarray
    k: int = field(default=-1)

    def __post_init__(self):
        arr = np.asarray(self.ops, dtype=np.complex128)
        if arr.ndim != 4 or arr.shape[2] != arr.shape[3]:
            raise ShapeError(f"ops must have shape (dim_o, j, m, m), got {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "ops", arr)
        j = arr.shape[1]
        if self.k < 0:
            if j % 2 == 0:
                raise ValueError(f"class count j={j} must be odd")
            object.__setattr__(self, "k", j // 2)
        elif 2 * self.k + 1 != j:
            raise ValueError(f"j={j} inconsistent with k={self.k}")

    @property
    def dim_o(self) -> int:
        return self.ops.shape[0]

    @property
    def j(self) -> int:
        return self.ops.shape[1]

    @property
    def m(self) -> int:
        return self.ops.shape[2]

    def completeness_residual(self) -> float:
        s = np.einsum("ycab,ycad->bd", self.ops.conj(), self.ops)
        return float(np.linalg.norm(s - np.eye(self.m)))


def stack_bundle(bundle: KrausBundle) -> np.ndarray:
    """Stack a bundle into its Stiefel point (class-major, then symbol)."""
    return stack_ops(bundle.ops)


def stack_ops(ops: np.ndarray) -> np.ndarray:
    dim_o, j, m, _ = ops.shape
    return np.ascontiguousarray(np.swapaxes(ops, 0, 1)).reshape(j * dim_o * m, m)


def split_ops(kappa: np.ndarray, dim_o: int, j: int, m: int) -> np.ndarray:
    kappa = np.asarray(kappa, dtype=np.complex128)
    if kappa.shape != (dim_o * j * m, m):
        raise ShapeError(
            f"point of shape {kappa.shape} does not split into "
            f"dim_o={dim_o}, j={j}, m={m} (need {(dim_o * j * m, m)})"
        )
    return np.swapaxes(kappa.reshape(j, dim_o, m, m), 0, 1).copy()


def split_point(kappa: np.ndarray, dim_o: int, j: int, m: int) -> KrausBundle:
    """Inverse of :func:`stack_bundle`."""
    return KrausBundle(split_ops(kappa, dim_o, j, m))


def stiefel_residual(kappa: np.ndarray) -> float:
    m = kappa.shape[1]
    return float(np.linalg.norm(kappa.conj().T @ kappa - np.eye(m)))


def param_count(m: int, j: int) -> int:
    if m < 1 or j < 1 or j % 2 == 0:
        raise ValueError(f"need m >= 1 and odd j >= 1, got m={m}, j={j}")
    return m * m * j

"""
Operator core: dense complex linear algebra and truncated Fock-space operators.
Every other module builds on these constructors, the Hermitian eigendecomposition
and the matrix exponential. hbar = 1 and unit mass throughout.
"""
import json
import logging
import math
from pathlib import Path
from typing import Union

import numpy as np
import scipy.linalg

from errors import ConfigError, DimensionError, NumericalFailure, PreconditionError
from models import (
    DEFAULT_TOL,
    ComplexMatrix,
    FockSpec,
    UnperturbedSolution,
    Vector,
    as_complex_matrix,
    as_state_vector,
)

logger = logging.getLogger(__name__)

# Field names of the matrix file format (part of the CLI contract)
FIELD_ROWS = "rows"
FIELD_COLS = "cols"
FIELD_ENTRIES = "entries"


# ---------------- Fock-space constructors ----------------

def ladder_down(spec: FockSpec) -> ComplexMatrix:
    """Annihilation operator a, truncated: a[i-1, i] = sqrt(i)."""
    d = spec.dimension
    a = np.zeros((d, d), dtype=np.complex128)
    idx = np.arange(1, d)
    a[idx - 1, idx] = np.sqrt(idx)
    return a


def ladder_up(spec: FockSpec) -> ComplexMatrix:
    """Creation operator a-dagger."""
    return ladder_down(spec).conj().T


def number_operator(spec: FockSpec) -> ComplexMatrix:
    """Exact n = diag(0, 1, ..., d-1); unlike a-dagger a it needs no truncation care."""
    return np.diag(np.arange(spec.dimension, dtype=np.complex128))


def position_operator(spec: FockSpec) -> ComplexMatrix:
    """x = (a + a-dagger) / sqrt(2 w)."""
    a = ladder_down(spec)
    return (a + a.conj().T) / math.sqrt(2.0 * spec.omega)


def momentum_operator(spec: FockSpec) -> ComplexMatrix:
    """p = i sqrt(w/2) (a-dagger - a)."""
    a = ladder_down(spec)
    return 1j * math.sqrt(spec.omega / 2.0) * (a.conj().T - a)


def _quadrature_pair(spec: FockSpec) -> tuple[ComplexMatrix, ComplexMatrix]:
    a = ladder_down(spec)
    squeeze_terms = a @ a + a.conj().T @ a.conj().T
    symmetric = 2.0 * number_operator(spec) + np.eye(spec.dimension)
    return squeeze_terms, symmetric


def position_squared(spec: FockSpec) -> ComplexMatrix:
    """
    Normal-ordered x^2 = (a^2 + a-dagger^2 + 2n + 1) / (2w).
    Differs from x @ x only in the (d-1, d-1) entry, where x @ x loses the a a-dagger term.
    """
    squeeze_terms, symmetric = _quadrature_pair(spec)
    return (squeeze_terms + symmetric) / (2.0 * spec.omega)


def momentum_squared(spec: FockSpec) -> ComplexMatrix:
    """Normal-ordered p^2 = -(w/2)(a^2 + a-dagger^2 - 2n - 1)."""
    squeeze_terms, symmetric = _quadrature_pair(spec)
    return -(spec.omega / 2.0) * (squeeze_terms - symmetric)


def basis_state(dim: int, n: int) -> Vector:
    """|n> as a complex vector of length dim."""
    if not 0 <= n < dim:
        raise DimensionError(f"level {n} out of range for dimension {dim}")
    e = np.zeros(dim, dtype=np.complex128)
    e[n] = 1.0
    return e


def commutator(a: ComplexMatrix, b: ComplexMatrix) -> ComplexMatrix:
    return a @ b - b @ a


# ---------------- Checks ----------------

def _require_square(m: ComplexMatrix, name: str = "matrix") -> None:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {m.shape}")


def hermitize_check(m: ComplexMatrix, tol: float = DEFAULT_TOL) -> bool:
    """True iff max |m - m-dagger| <= tol entrywise."""
    m = np.asarray(m, dtype=np.complex128)
    _require_square(m)
    return bool(np.max(np.abs(m - m.conj().T)) <= tol)


def require_hermitian(m: ComplexMatrix, tol: float = DEFAULT_TOL, name: str = "matrix") -> None:
    """Raise PreconditionError unless m is Hermitian within tol (scaled by its magnitude)."""
    _require_square(m, name)
    scale = max(1.0, float(np.max(np.abs(m))))
    if not hermitize_check(m, tol * scale):
        raise PreconditionError(f"{name} is not Hermitian within tolerance {tol:g}")


def check_unit_norm(psi: Vector, tol: float = DEFAULT_TOL, name: str = "psi0") -> None:
    norm = float(np.linalg.norm(psi))
    if abs(norm - 1.0) > tol:
        raise PreconditionError(f"{name} must have unit norm, got {norm:.12g}")


# ---------------- Eigendecomposition ----------------

def _is_diagonal(m: ComplexMatrix) -> bool:
    return not np.any(m - np.diag(np.diag(m)))


def eigendecompose_hermitian(m: ComplexMatrix, tol: float = DEFAULT_TOL) -> UnperturbedSolution:
    """
    Ascending eigenvalues and unitary eigenvectors of a Hermitian matrix.
    Diagonal input yields exact permutation eigenvectors (stable order for ties).
    """
    m = as_complex_matrix(m, "H0")
    require_hermitian(m, tol, "H0")
    d = m.shape[0]
    if _is_diagonal(m):
        diag = np.real(np.diag(m))
        order = np.argsort(diag, kind="stable")
        energies = diag[order].astype(np.float64)
        vectors = np.eye(d, dtype=np.complex128)[:, order]
    else:
        energies, vectors = scipy.linalg.eigh(0.5 * (m + m.conj().T))
        vectors = vectors.astype(np.complex128)
    residual = float(np.max(np.abs(m @ vectors - vectors * energies))) if d else 0.0
    scale = max(1.0, float(np.max(np.abs(m))))
    logger.debug("eigendecomposition d=%d residual=%.3e", d, residual)
    if residual > tol * scale:
        raise NumericalFailure(f"eigendecomposition residual {residual:.3e} exceeds {tol * scale:.3e}")
    return UnperturbedSolution(dimension=d, energies=np.asarray(energies, dtype=np.float64), eigenvectors=vectors)


def reconstruct(sol: UnperturbedSolution) -> ComplexMatrix:
    """U diag(E) U-dagger."""
    return (sol.eigenvectors * sol.energies) @ sol.eigenvectors.conj().T


# ---------------- Exponentials ----------------

def matrix_exp(m: ComplexMatrix, scale: complex = 1.0) -> ComplexMatrix:
    """
    e^{scale * m}. Exactly Hermitian m with purely real or imaginary scale goes
    through the eigendecomposition; anything else, including the non-normal block
    matrix M with a vanishingly small V, through scipy's scaling-and-squaring Pade expm.
    """
    m = as_complex_matrix(m)
    _require_square(m)
    scale = complex(scale)
    if not (math.isfinite(scale.real) and math.isfinite(scale.imag)):
        raise PreconditionError(f"scale must be finite, got {scale}")
    if scale == 0:
        return np.eye(m.shape[0], dtype=np.complex128)
    if np.array_equal(m, m.conj().T) and (scale.real == 0.0 or scale.imag == 0.0):
        energies, vectors = scipy.linalg.eigh(m)
        return (vectors * np.exp(scale * energies)) @ vectors.conj().T
    logger.debug("expm on non-Hermitian %dx%d matrix", *m.shape)
    return scipy.linalg.expm(scale * m)


def propagate(sol: UnperturbedSolution, psi: Vector, t: float) -> Vector:
    """e^{-iHt} psi through a known eigendecomposition of H."""
    u = sol.eigenvectors
    return u @ (np.exp(-1j * t * sol.energies) * (u.conj().T @ psi))


def evolve_state(h: ComplexMatrix, psi: Vector, t: float) -> Vector:
    """e^{-iHt} psi for Hermitian H."""
    h = as_complex_matrix(h, "H")
    psi = as_state_vector(psi, h.shape[0])
    return propagate(eigendecompose_hermitian(h), psi, t)


# ---------------- Matrix files ----------------

def _require_field(doc: dict, key: str, where: str):
    if key not in doc:
        raise ConfigError(f"{where}.{key}", "missing field")
    return doc[key]


def matrix_from_document(doc: dict, where: str = "matrix") -> ComplexMatrix:
    """Build a matrix from the {rows, cols, entries: [[re, im], ...]} document."""
    if not isinstance(doc, dict):
        raise ConfigError(where, "matrix document must be an object")
    rows = _require_field(doc, FIELD_ROWS, where)
    cols = _require_field(doc, FIELD_COLS, where)
    entries = _require_field(doc, FIELD_ENTRIES, where)
    if not isinstance(rows, int) or not isinstance(cols, int) or rows < 1 or cols < 1:
        raise ConfigError(f"{where}.{FIELD_ROWS}", "rows and cols must be positive integers")
    if not isinstance(entries, list) or len(entries) != rows * cols:
        raise ConfigError(f"{where}.{FIELD_ENTRIES}", f"expected {rows * cols} [re, im] pairs")
    values = []
    for i, pair in enumerate(entries):
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise ConfigError(f"{where}.{FIELD_ENTRIES}[{i}]", "entry must be a [re, im] pair")
        try:
            z = complex(float(pair[0]), float(pair[1]))
        except (TypeError, ValueError) as e:
            raise ConfigError(f"{where}.{FIELD_ENTRIES}[{i}]", "entry must be a pair of numbers") from e
        if not (math.isfinite(z.real) and math.isfinite(z.imag)):
            raise ConfigError(f"{where}.{FIELD_ENTRIES}[{i}]", "entry must be finite")
        values.append(z)
    return np.array(values, dtype=np.complex128).reshape(rows, cols)


def matrix_to_document(m: ComplexMatrix) -> dict:
    m = np.asarray(m, dtype=np.complex128)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    return {
        FIELD_ROWS: int(m.shape[0]),
        FIELD_COLS: int(m.shape[1]),
        FIELD_ENTRIES: [[float(z.real), float(z.imag)] for z in m.reshape(-1)],
    }


def load_matrix(path: Union[str, Path]) -> ComplexMatrix:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(str(path), f"invalid JSON: {e}") from e
        except UnicodeDecodeError as e:
            raise ConfigError(str(path), "matrix file is not UTF-8 text") from e
    return matrix_from_document(doc, where=path.name)


def load_vector(path: Union[str, Path]) -> Vector:
    m = load_matrix(path)
    if m.shape[1] != 1:
        raise ConfigError(f"{Path(path).name}.{FIELD_COLS}", "a state vector file must have cols = 1")
    return m[:, 0].copy()


def save_matrix(path: Union[str, Path], m: ComplexMatrix) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(matrix_to_document(m), f, indent=2)

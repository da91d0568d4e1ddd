"""
Block-matrix method: assemble the order-m block matrix M (H0 on the diagonal,
V on the superdiagonal), exponentiate it, and read the order-k corrections
off the first block row of e^{-iMt}.

Two exponential paths:
- dense: scaling-and-squaring Pade on the full (m+1)d matrix (trusted baseline)
- structured: block upper-triangular Toeplitz arithmetic on the m+1 first-row
  blocks only, scaling and squaring with a truncated Taylor series
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from errors import CapabilityError, DimensionError, PreconditionError
from models import (
    DEFAULT_TOL,
    BlockSystem,
    ComplexMatrix,
    CorrectionSeries,
    Vector,
    as_complex_matrix,
    as_state_vector,
)
from operators import check_unit_norm, require_hermitian

logger = logging.getLogger(__name__)

# ---------------- Limits ----------------
# Dense (m+1)d exponential cost grows cubically; raise explicitly when needed.
DEFAULT_MAX_ORDER = 8
PATH_DENSE = "dense"
PATH_STRUCTURED = "structured"
BLOCK_PATHS = (PATH_DENSE, PATH_STRUCTURED)

# Structured path: scale until the 1-norm bound is at most this, then Taylor.
TAYLOR_SCALED_NORM = 0.5
TAYLOR_MAX_TERMS = 60


def assemble(
    h0: ComplexMatrix,
    v: ComplexMatrix,
    order: int,
    tol: float = DEFAULT_TOL,
    max_order: int = DEFAULT_MAX_ORDER,
) -> BlockSystem:
    """Build M for correction order m = order: (m+1) x (m+1) blocks of size d."""
    h0 = as_complex_matrix(h0, "H0")
    v = as_complex_matrix(v, "V")
    if h0.shape[0] != h0.shape[1] or v.shape[0] != v.shape[1]:
        raise DimensionError("H0 and V must be square")
    if h0.shape != v.shape:
        raise DimensionError(f"H0 {h0.shape} and V {v.shape} dimensions differ")
    require_hermitian(h0, tol, "H0")
    require_hermitian(v, tol, "V")
    if not isinstance(order, (int, np.integer)) or order < 1:
        raise PreconditionError(f"order must be an integer >= 1, got {order}")
    if order > max_order:
        raise CapabilityError(f"order {order} exceeds the configured cap {max_order}")
    n_blocks = order + 1
    matrix = np.kron(np.eye(n_blocks), h0) + np.kron(np.eye(n_blocks, k=1), v)
    logger.debug("assembled M: order=%d base_dim=%d size=%d", order, h0.shape[0], matrix.shape[0])
    return BlockSystem(order=int(order), base_dim=h0.shape[0], matrix=matrix, h0=h0, v=v)


def block_power_entry(sys: BlockSystem, n: int, col: int) -> ComplexMatrix:
    """
    (1, col) block of M^n by repeated block multiplication of the first block row.
    Oracle for the power identities; deliberately uses no Toeplitz shortcut.
    """
    if not 1 <= col <= sys.order + 1:
        raise DimensionError(f"col {col} out of range 1..{sys.order + 1}")
    if n < 0:
        raise PreconditionError(f"power must be >= 0, got {n}")
    d = sys.base_dim
    n_blocks = sys.order + 1
    row = [np.eye(d, dtype=np.complex128)] + [np.zeros((d, d), dtype=np.complex128) for _ in range(n_blocks - 1)]
    for _ in range(n):
        row = [
            sum(row[r - 1] @ sys.block(r, c) for r in range(1, n_blocks + 1))
            for c in range(1, n_blocks + 1)
        ]
    return row[col - 1]


def power_first_order_sum(h0: ComplexMatrix, v: ComplexMatrix, n: int) -> ComplexMatrix:
    """sum_{j=0}^{n-1} H0^j V H0^{n-1-j}; the (1, 2) block of M^n."""
    d = h0.shape[0]
    powers = [np.eye(d, dtype=np.complex128)]
    for _ in range(max(n - 1, 0)):
        powers.append(powers[-1] @ h0)
    return sum((powers[j] @ v @ powers[n - 1 - j] for j in range(n)), np.zeros((d, d), dtype=np.complex128))


def power_second_order_sum(h0: ComplexMatrix, v: ComplexMatrix, n: int) -> ComplexMatrix:
    """sum over a+b+c = n-2 of H0^a V H0^b V H0^c; the (1, 3) block of M^n."""
    d = h0.shape[0]
    powers = [np.eye(d, dtype=np.complex128)]
    for _ in range(max(n - 2, 0)):
        powers.append(powers[-1] @ h0)
    total = np.zeros((d, d), dtype=np.complex128)
    for a in range(n - 1):
        for b in range(n - 1 - a):
            total += powers[a] @ v @ powers[b] @ v @ powers[n - 2 - a - b]
    return total


# ---------------- Toeplitz block arithmetic ----------------

def _toeplitz_product(a: list[ComplexMatrix], b: list[ComplexMatrix]) -> list[ComplexMatrix]:
    """First block row of A @ B for block upper-triangular Toeplitz A, B."""
    return [sum(a[j] @ b[k - j] for j in range(k + 1)) for k in range(len(a))]


def _toeplitz_expm(blocks: list[ComplexMatrix]) -> list[ComplexMatrix]:
    """
    First block row of exp(X), X given by its first block row. Agreement with the
    dense path is relative: within 1e-10 of the largest block entry.
    """
    d = blocks[0].shape[0]
    bound = sum(float(np.linalg.norm(b, 1)) for b in blocks)
    squarings = max(0, math.ceil(math.log2(bound / TAYLOR_SCALED_NORM))) if bound > 0 else 0
    scaled = [b / (2.0 ** squarings) for b in blocks]
    identity = [np.eye(d, dtype=np.complex128)] + [np.zeros((d, d), dtype=np.complex128) for _ in blocks[1:]]
    result = [blk.copy() for blk in identity]
    term = identity
    for k in range(1, TAYLOR_MAX_TERMS + 1):
        term = [blk / k for blk in _toeplitz_product(term, scaled)]
        result = [r + tk for r, tk in zip(result, term)]
        # stop once the term is below round-off of the partial sum
        size = max(1.0, max(float(np.max(np.abs(r))) for r in result))
        if max(float(np.max(np.abs(tk))) for tk in term) <= np.finfo(float).eps * 1e-2 * size:
            break
    for _ in range(squarings):
        result = _toeplitz_product(result, result)
    logger.debug("structured expm: bound=%.3e squarings=%d taylor_terms=%d", bound, squarings, k)
    return result


def first_block_row(sys: BlockSystem, t: float, path: str = PATH_DENSE) -> list[ComplexMatrix]:
    """The m+1 blocks (e^{-iMt})_(1, j), j = 1..m+1."""
    if path not in BLOCK_PATHS:
        raise PreconditionError(f"unknown exponential path {path!r}; expected one of {BLOCK_PATHS}")
    d = sys.base_dim
    if path == PATH_STRUCTURED:
        generator = [-1j * t * sys.h0, -1j * t * sys.v] + [
            np.zeros((d, d), dtype=np.complex128) for _ in range(sys.order - 1)
        ]
        return _toeplitz_expm(generator)
    full = scipy.linalg.expm(-1j * t * sys.matrix)
    return [full[:d, j * d:(j + 1) * d] for j in range(sys.order + 1)]


# ---------------- Evolution ----------------

def evolve(
    sys: BlockSystem,
    psi0: Vector,
    t: float,
    path: str = PATH_DENSE,
    tol: float = DEFAULT_TOL,
) -> CorrectionSeries:
    """zeroth = e^{-iH0 t} psi0; order-k correction = (e^{-iMt})_(1,k+1) psi0 (lambda-free)."""
    psi0 = as_state_vector(psi0, sys.base_dim, "psi0")
    check_unit_norm(psi0, tol)
    row = first_block_row(sys, float(t), path)
    return CorrectionSeries(
        time=float(t),
        zeroth=row[0] @ psi0,
        corrections=tuple(block @ psi0 for block in row[1:]),
    )


def evolve_grid(
    sys: BlockSystem,
    psi0: Vector,
    times: Sequence[float],
    path: str = PATH_DENSE,
    workers: int = 1,
) -> list[CorrectionSeries]:
    """evolve over a time grid; independent times run in a thread pool, results keep input order."""
    if workers <= 1:
        return [evolve(sys, psi0, t, path) for t in times]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda t: evolve(sys, psi0, t, path), times))


def approximate_state(series: CorrectionSeries, lam: float) -> Vector:
    """zeroth + sum_k lambda^k correction_k; not renormalized."""
    if not abs(lam) < 1:
        raise PreconditionError(f"|lambda| must be < 1, got {lam}")
    state = series.zeroth.copy()
    for k, c in enumerate(series.corrections, start=1):
        state = state + lam ** k * c
    return state


def matrix_wave_column(sys: BlockSystem, psi0: Vector, t: float) -> list[Vector]:
    """
    Last block column of e^{-iMt} (I x psi0): the solution of i dX/dt = M X with
    X(0) = (0, ..., 0, psi0). Block j carries the order (m+1-j) correction.
    """
    psi0 = as_state_vector(psi0, sys.base_dim, "psi0")
    d, m = sys.base_dim, sys.order
    full = scipy.linalg.expm(-1j * float(t) * sys.matrix)
    column = full[:, m * d:(m + 1) * d] @ psi0
    return [column[j * d:(j + 1) * d] for j in range(m + 1)]


def correction_norms(series: CorrectionSeries) -> list[float]:
    return [float(np.linalg.norm(c)) for c in series.corrections]


def truncate_series(series: CorrectionSeries, order: Optional[int]) -> CorrectionSeries:
    """The same series restricted to orders 1..order."""
    if order is None or order >= series.order:
        return series
    return CorrectionSeries(time=series.time, zeroth=series.zeroth, corrections=series.corrections[:order])

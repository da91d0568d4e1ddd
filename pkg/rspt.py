"""
Rayleigh-Schrodinger reference formulas: couplings, first/second order energy and
state corrections, and the time-dependent terms that appear when the block-method
corrections are expanded in the H0 eigenbasis.

All state vectors here are coefficient vectors in the H0 eigenbasis unless a
function says otherwise; to_original_basis maps them back.
"""
import logging
from typing import Optional

import numpy as np

from errors import DegeneracyError, DimensionError
from models import (
    ComplexMatrix,
    RSCorrections,
    TimeDependentTerms,
    UnperturbedSolution,
    Vector,
    as_complex_matrix,
)

logger = logging.getLogger(__name__)

# Collision threshold relative to the spectral range of H0
RELATIVE_DEGENERACY_TOL = 1e-8
# Above this, a correction that should be real is reported
IMAGINARY_PART_WARN = 1e-12


def default_degeneracy_tol(sol: UnperturbedSolution) -> float:
    spread = sol.spectral_range
    return RELATIVE_DEGENERACY_TOL * spread if spread > 0 else RELATIVE_DEGENERACY_TOL


def _check_level(sol: UnperturbedSolution, n: int) -> None:
    if not 0 <= n < sol.dimension:
        raise DimensionError(f"level {n} out of range 0..{sol.dimension - 1}")


def _eigenbasis_v(sol: UnperturbedSolution, v: ComplexMatrix) -> ComplexMatrix:
    v = as_complex_matrix(v, "V")
    if v.shape != (sol.dimension, sol.dimension):
        raise DimensionError(f"V has shape {v.shape}, expected ({sol.dimension}, {sol.dimension})")
    return sol.to_eigenbasis(v)


def _require_nondegenerate(sol: UnperturbedSolution, n: int, tol: float) -> None:
    gaps = np.abs(sol.energies - sol.energies[n])
    gaps[n] = np.inf
    k = int(np.argmin(gaps))
    if gaps[k] <= tol:
        raise DegeneracyError(levels=(min(n, k), max(n, k)), gap=float(gaps[k]), tol=tol)


def _inverse_gaps(sol: UnperturbedSolution, n: int) -> np.ndarray:
    """1 / (E_n - E_k) for k != n, 0 at k = n."""
    diff = sol.energies[n] - sol.energies
    inv = np.zeros_like(diff)
    mask = np.arange(sol.dimension) != n
    inv[mask] = 1.0 / diff[mask]
    return inv


def coupling(sol: UnperturbedSolution, v: ComplexMatrix, k: int, n: int) -> complex:
    """V_kn = <k(0)| V |n(0)>."""
    _check_level(sol, k)
    _check_level(sol, n)
    v = as_complex_matrix(v, "V")
    if v.shape != (sol.dimension, sol.dimension):
        raise DimensionError(f"V has shape {v.shape}, expected ({sol.dimension}, {sol.dimension})")
    return complex(sol.eigenvectors[:, k].conj() @ v @ sol.eigenvectors[:, n])


def corrections(
    sol: UnperturbedSolution,
    v: ComplexMatrix,
    n: int,
    degeneracy_tol: Optional[float] = None,
) -> RSCorrections:
    """First and second order energy and state corrections for non-degenerate level n."""
    _check_level(sol, n)
    tol = default_degeneracy_tol(sol) if degeneracy_tol is None else degeneracy_tol
    _require_nondegenerate(sol, n, tol)
    vk = _eigenbasis_v(sol, v)
    inv = _inverse_gaps(sol, n)

    v_nn = vk[n, n]
    state1 = vk[:, n] * inv
    delta2 = np.sum(np.abs(vk[:, n]) ** 2 * inv)
    # intermediate normalization: no <n(0)| component
    state2 = inv * (vk @ state1) - v_nn * vk[:, n] * inv ** 2

    if abs(v_nn.imag) > IMAGINARY_PART_WARN:
        logger.warning("V_nn has imaginary part %.3e for level %d; V is not Hermitian enough", v_nn.imag, n)
    return RSCorrections(
        level=n,
        delta1=float(v_nn.real),
        delta2=float(np.real(delta2)),
        state1=state1,
        state2=state2,
    )


def interval_phase_integral(frequency: np.ndarray, t: float, tol: float) -> np.ndarray:
    """int_0^t e^{i w s} ds per frequency w; equals t where |w| <= tol."""
    frequency = np.asarray(frequency, dtype=np.float64)
    out = np.full(frequency.shape, t, dtype=np.complex128)
    mask = np.abs(frequency) > tol
    w = frequency[mask]
    out[mask] = (np.exp(1j * w * t) - 1.0) / (1j * w)
    return out


def time_dependent_terms(
    sol: UnperturbedSolution,
    v: ComplexMatrix,
    n: int,
    t: float,
    degeneracy_tol: Optional[float] = None,
) -> TimeDependentTerms:
    """
    n1_t:   sum_{k!=n} |k> V_kn / (E_n - E_k) e^{-i E_k t}
    n2_t:   the second-order state with each |k> component carrying e^{-i E_k t}
    n2_1_t: i e^{-iH0 t} int_0^t e^{iH0 s} V |n1>_s ds, inner integrals in closed form
    """
    rs = corrections(sol, v, n, degeneracy_tol)
    tol = default_degeneracy_tol(sol) if degeneracy_tol is None else degeneracy_tol
    vk = _eigenbasis_v(sol, v)
    phases = np.exp(-1j * sol.energies * t)
    pair_integrals = interval_phase_integral(np.subtract.outer(sol.energies, sol.energies), t, tol)
    return TimeDependentTerms(
        time=float(t),
        n1_t=rs.state1 * phases,
        n2_t=rs.state2 * phases,
        n2_1_t=1j * phases * ((vk * pair_integrals) @ rs.state1),
    )


def to_original_basis(sol: UnperturbedSolution, coeffs: Vector) -> Vector:
    return sol.eigenvectors @ coeffs


def first_order_assembly(
    sol: UnperturbedSolution,
    v: ComplexMatrix,
    n: int,
    t: float,
    degeneracy_tol: Optional[float] = None,
) -> Vector:
    """e^{-iE_n t}(|n1> - i t D1 |n0>) - |n1>_t, in the original basis."""
    rs = corrections(sol, v, n, degeneracy_tol)
    terms = time_dependent_terms(sol, v, n, t, degeneracy_tol)
    stationary = rs.state1.copy()
    stationary[n] -= 1j * t * rs.delta1
    coeffs = np.exp(-1j * sol.energies[n] * t) * stationary - terms.n1_t
    return to_original_basis(sol, coeffs)


def second_order_assembly(
    sol: UnperturbedSolution,
    v: ComplexMatrix,
    n: int,
    t: float,
    degeneracy_tol: Optional[float] = None,
) -> Vector:
    """
    e^{-iE_n t}[|n2> - i t D2 |n0> - (t^2/2) D1^2 |n0> - i t D1 |n1>] - |n2>_t + |n2_1>_t,
    in the original basis. The -(t^2/2) D1^2 term comes from integrating -i s D1
    against the stationary phase.
    """
    rs = corrections(sol, v, n, degeneracy_tol)
    terms = time_dependent_terms(sol, v, n, t, degeneracy_tol)
    stationary = rs.state2 - 1j * t * rs.delta1 * rs.state1
    stationary[n] += -1j * t * rs.delta2 - 0.5 * t ** 2 * rs.delta1 ** 2
    coeffs = np.exp(-1j * sol.energies[n] * t) * stationary - terms.n2_t + terms.n2_1_t
    return to_original_basis(sol, coeffs)


def perturbed_energy(rs: RSCorrections, energy0: float, lam: float) -> float:
    """E(0) + lambda D1 + lambda^2 D2."""
    return energy0 + lam * rs.delta1 + lam ** 2 * rs.delta2

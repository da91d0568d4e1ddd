"""
Quadratically perturbed harmonic oscillator: the worked case with an exact
squeezed-state solution.

H0 = (p^2 + w^2 x^2)/2 and V = w^2 x^2 / 2, so H0 + lambda V is an oscillator of
frequency w~ = w sqrt(1 + lambda). Its propagator is available two ways:
- eigen route (authoritative): eigendecomposition of the truncated H0 + lambda V
- squeeze route (secondary): e^{-itw~(n+1/2)} S_w~(lambda, t) S-dagger(lambda)
Truncated squeeze operators lose unitarity near the basis edge, so every
comparison stays EDGE_BUFFER levels below it.
"""
import logging
import math
from functools import lru_cache

import numpy as np

from errors import TruncationError
from models import ComplexMatrix, FockSpec, OscillatorProblem, UnperturbedSolution, Vector, as_state_vector
from operators import (
    check_unit_norm,
    eigendecompose_hermitian,
    ladder_down,
    ladder_up,
    matrix_exp,
    momentum_operator,
    number_operator,
    position_operator,
    position_squared,
    propagate,
)

logger = logging.getLogger(__name__)

# ---------------- Truncation ----------------
DEFAULT_DIMENSION = 32
# Levels n > d - 1 - EDGE_BUFFER are treated as contaminated by the truncation.
EDGE_BUFFER = 5
SUPPORT_WEIGHT_TOL = 1e-14
SECOND_DIFFERENCE_STEP = 1e-4


def highest_clean_level(spec: FockSpec) -> int:
    return spec.dimension - 1 - EDGE_BUFFER


def support_guard(problem: OscillatorProblem, psi0: Vector) -> None:
    """TruncationError when psi0 has weight above SUPPORT_WEIGHT_TOL on levels n > d-6."""
    psi0 = as_state_vector(psi0, problem.spec.dimension, "psi0")
    edge_weight = float(np.sum(np.abs(psi0[highest_clean_level(problem.spec) + 1:]) ** 2))
    if edge_weight > SUPPORT_WEIGHT_TOL:
        raise TruncationError(
            f"initial state has weight {edge_weight:.3e} on levels above "
            f"{highest_clean_level(problem.spec)} (dimension {problem.spec.dimension})"
        )


def _require_clean_level(problem: OscillatorProblem, n: int) -> None:
    if not 0 <= n <= highest_clean_level(problem.spec):
        raise TruncationError(
            f"level {n} outside 0..{highest_clean_level(problem.spec)} for dimension {problem.spec.dimension}"
        )


# ---------------- Hamiltonians ----------------

def hamiltonians(problem: OscillatorProblem) -> tuple[ComplexMatrix, ComplexMatrix]:
    """(H0, V) in the Fock basis: H0 = w(n + 1/2) exactly, V = (w^2/2) x^2 normal-ordered."""
    spec = problem.spec
    h0 = spec.omega * (number_operator(spec) + 0.5 * np.eye(spec.dimension))
    v = 0.5 * spec.omega ** 2 * position_squared(spec)
    return h0, v


@lru_cache(maxsize=16)
def exact_solution(problem: OscillatorProblem) -> UnperturbedSolution:
    """Eigendecomposition of the truncated H0 + lambda V (ascending)."""
    h0, v = hamiltonians(problem)
    return eigendecompose_hermitian(h0 + problem.lam * v)


def exact_evolve(problem: OscillatorProblem, psi0: Vector, t: float) -> Vector:
    """e^{-iH_w~ t} psi0 through the eigen route."""
    psi0 = as_state_vector(psi0, problem.spec.dimension, "psi0")
    check_unit_norm(psi0)
    support_guard(problem, psi0)
    return propagate(exact_solution(problem), psi0, t)


# ---------------- Squeeze route ----------------

def _squeeze_generator(problem: OscillatorProblem, phase: complex = 1.0) -> ComplexMatrix:
    """(ln(1+lambda)/8)(phase* a^2 - phase (a-dagger)^2)."""
    a = ladder_down(problem.spec)
    ad = ladder_up(problem.spec)
    return (math.log1p(problem.lam) / 8.0) * (np.conj(phase) * (a @ a) - phase * (ad @ ad))


def squeeze_operator(problem: OscillatorProblem) -> ComplexMatrix:
    """S(lambda) = exp{(ln(1+lambda)/8)(a^2 - (a-dagger)^2)}."""
    return matrix_exp(_squeeze_generator(problem))


def number_phase(problem: OscillatorProblem, t: float) -> ComplexMatrix:
    """e^{-itw~(a-dagger a + 1/2)}, diagonal in the Fock basis."""
    levels = np.arange(problem.spec.dimension) + 0.5
    return np.diag(np.exp(-1j * t * problem.tilde_omega * levels))


def time_dependent_squeeze(problem: OscillatorProblem, t: float) -> ComplexMatrix:
    """S_w~(lambda, t) = exp{(ln(1+lambda)/8)(e^{-2itw~} a^2 - e^{2itw~} (a-dagger)^2)}."""
    return matrix_exp(_squeeze_generator(problem, np.exp(2j * t * problem.tilde_omega)))


def factored_evolve(problem: OscillatorProblem, psi0: Vector, t: float) -> Vector:
    """Squeeze-route propagator e^{-itw~(n+1/2)} S_w~(lambda, t) S-dagger(lambda) psi0."""
    psi0 = as_state_vector(psi0, problem.spec.dimension, "psi0")
    check_unit_norm(psi0)
    support_guard(problem, psi0)
    s_dagger = squeeze_operator(problem).conj().T
    return number_phase(problem, t) @ (time_dependent_squeeze(problem, t) @ (s_dagger @ psi0))


def route_overlap(problem: OscillatorProblem, psi0: Vector, t: float) -> float:
    """|<eigen route | squeeze route>|; 1 means the two propagators agree."""
    return float(abs(np.vdot(exact_evolve(problem, psi0, t), factored_evolve(problem, psi0, t))))


def _perturbed_ladder(problem: OscillatorProblem) -> ComplexMatrix:
    """A = sqrt(w~/2) x + i p / sqrt(2 w~), the annihilation operator of the w~ mode."""
    w = problem.tilde_omega
    return math.sqrt(w / 2.0) * position_operator(problem.spec) + 1j * momentum_operator(problem.spec) / math.sqrt(2.0 * w)


# ---------------- Analytic first order ----------------

def first_order_coefficients(n: int) -> dict[int, float]:
    """<k|n1> for the two coupled levels k = n-2, n+2 (the n-2 entry is absent for n < 2)."""
    coeffs = {n + 2: -math.sqrt((n + 1) * (n + 2)) / 8.0}
    if n >= 2:
        coeffs[n - 2] = math.sqrt(n * (n - 1)) / 8.0
    return coeffs


def first_order_energy(problem: OscillatorProblem, n: int) -> float:
    return problem.spec.omega * (2 * n + 1) / 4.0


def second_order_energy(problem: OscillatorProblem, n: int) -> float:
    """lambda^2 coefficient of w sqrt(1+lambda)(n + 1/2)."""
    return -problem.spec.omega * (2 * n + 1) / 16.0


def first_order_reference(problem: OscillatorProblem, n: int, t: float) -> Vector:
    """
    Order-1 correction for initial state |n>:
    e^{-iE_n t}(|n1> - i t D1 |n>) - sum_k e^{-iE_k t} <k|n1> |k>.
    """
    _require_clean_level(problem, n)
    spec = problem.spec
    energies = spec.omega * (np.arange(spec.dimension) + 0.5)
    out = np.zeros(spec.dimension, dtype=np.complex128)
    out[n] = -1j * t * first_order_energy(problem, n) * np.exp(-1j * energies[n] * t)
    for k, c in first_order_coefficients(n).items():
        out[k] = c * (np.exp(-1j * energies[n] * t) - np.exp(-1j * energies[k] * t))
    return out


def first_order_operator(problem: OscillatorProblem, t: float) -> ComplexMatrix:
    """
    lambda coefficient of the squeeze-route propagator:
    e^{-itH0}[((a-dagger)^2 (1 - e^{2iwt}) + a^2 (e^{-2iwt} - 1))/8 - (itw/2)(n + 1/2)].
    """
    spec = problem.spec
    a = ladder_down(spec)
    ad = ladder_up(spec)
    w = spec.omega
    bracket = (ad @ ad * (1 - np.exp(2j * w * t)) + a @ a * (np.exp(-2j * w * t) - 1)) / 8.0
    bracket = bracket - 0.5j * t * w * (number_operator(spec) + 0.5 * np.eye(spec.dimension))
    unperturbed_phase = np.diag(np.exp(-1j * t * w * (np.arange(spec.dimension) + 0.5)))
    return unperturbed_phase @ bracket


def with_lambda(problem: OscillatorProblem, lam: float) -> OscillatorProblem:
    return OscillatorProblem(spec=problem.spec, lam=lam)


def second_order_reference(
    problem: OscillatorProblem,
    psi0: Vector,
    t: float,
    step: float = SECOND_DIFFERENCE_STEP,
) -> Vector:
    """lambda^2 coefficient of the exact state: central second difference in lambda, halved."""
    plus = exact_evolve(with_lambda(problem, step), psi0, t)
    zero = exact_evolve(with_lambda(problem, 0.0), psi0, t)
    minus = exact_evolve(with_lambda(problem, -step), psi0, t)
    return (plus - 2.0 * zero + minus) / (2.0 * step ** 2)


def first_order_difference(problem: OscillatorProblem, psi0: Vector, t: float, step: float = 1e-6) -> Vector:
    """Forward difference (exact(step) - exact(0)) / step."""
    plus = exact_evolve(with_lambda(problem, step), psi0, t)
    zero = exact_evolve(with_lambda(problem, 0.0), psi0, t)
    return (plus - zero) / step

"""
Shared data models for the block-matrix perturbation toolkit.
All record types passed between operators, block_method, rspt, dyson, oscillator and the runner.

Operators are plain complex128 numpy arrays ("ComplexMatrix"); the records below
validate their invariants once, at construction.
"""
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union

import numpy as np

from errors import ConfigError, DimensionError, PreconditionError

# ---------------- Numerical defaults ----------------
DEFAULT_TOL = 1e-10
# Smallest Fock space the operator constructors accept; perturbative use needs MIN_PERTURBATIVE_DIMENSION.
MIN_FOCK_DIMENSION = 2
MIN_PERTURBATIVE_DIMENSION = 4
MIN_QUADRATURE_NODES = 8

Vector = np.ndarray
ComplexMatrix = np.ndarray


def as_complex_matrix(data, name: str = "matrix") -> ComplexMatrix:
    """Coerce to a 2-D complex128 array with finite entries."""
    m = np.asarray(data, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise DimensionError(f"{name} must be a non-empty 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise PreconditionError(f"{name} has non-finite entries")
    return m


def as_state_vector(data, dim: Optional[int] = None, name: str = "state") -> Vector:
    """Coerce to a 1-D complex128 vector, optionally checking its dimension."""
    v = np.asarray(data, dtype=np.complex128).reshape(-1)
    if dim is not None and v.shape[0] != dim:
        raise DimensionError(f"{name} has dimension {v.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(v)):
        raise PreconditionError(f"{name} has non-finite entries")
    return v


@dataclass(frozen=True)
class FockSpec:
    """Truncated harmonic-oscillator Fock space (hbar = 1, unit mass)."""
    dimension: int
    omega: float = 1.0

    def __post_init__(self):
        if not isinstance(self.dimension, (int, np.integer)) or self.dimension < MIN_FOCK_DIMENSION:
            raise DimensionError(f"Fock dimension must be an integer >= {MIN_FOCK_DIMENSION}, got {self.dimension}")
        if not math.isfinite(self.omega) or self.omega <= 0:
            raise PreconditionError(f"omega must be positive and finite, got {self.omega}")


@dataclass(frozen=True, eq=False)
class UnperturbedSolution:
    """
    Eigen-decomposition of H0: ascending energies E_n and unitary eigenvector matrix
    whose columns are |n(0)>.
    """
    dimension: int
    energies: np.ndarray
    eigenvectors: ComplexMatrix

    def __post_init__(self):
        if self.energies.shape != (self.dimension,):
            raise DimensionError(f"energies must have shape ({self.dimension},), got {self.energies.shape}")
        if self.eigenvectors.shape != (self.dimension, self.dimension):
            raise DimensionError("eigenvector matrix must be square with the solution dimension")
        if np.any(np.diff(self.energies) < 0):
            raise PreconditionError("energies must be ascending")
        gram = self.eigenvectors.conj().T @ self.eigenvectors
        if np.max(np.abs(gram - np.eye(self.dimension))) > 1e3 * DEFAULT_TOL:
            raise PreconditionError("eigenvectors are not unitary within tolerance")

    @property
    def spectral_range(self) -> float:
        return float(self.energies[-1] - self.energies[0])

    def to_eigenbasis(self, op: ComplexMatrix) -> ComplexMatrix:
        """<k(0)| op |n(0)> for all k, n."""
        return self.eigenvectors.conj().T @ op @ self.eigenvectors


@dataclass(frozen=True, eq=False)
class BlockSystem:
    """Order-m block upper-bidiagonal Toeplitz matrix M with H0 on the diagonal and V above it."""
    order: int
    base_dim: int
    matrix: ComplexMatrix
    h0: ComplexMatrix
    v: ComplexMatrix

    @property
    def size(self) -> int:
        return (self.order + 1) * self.base_dim

    def block(self, i: int, j: int) -> ComplexMatrix:
        """(i, j) block of M, 1-based like the (1, k+1) extraction notation."""
        if not (1 <= i <= self.order + 1 and 1 <= j <= self.order + 1):
            raise DimensionError(f"block ({i}, {j}) out of range for order {self.order}")
        d = self.base_dim
        return self.matrix[(i - 1) * d:i * d, (j - 1) * d:j * d]


@dataclass(frozen=True, eq=False)
class CorrectionSeries:
    """
    Per-order corrections at time t. corrections[k-1] holds the lambda-free
    order-k vector (e^{-iMt})_(1,k+1) psi0; zeroth is e^{-iH0 t} psi0.
    """
    time: float
    zeroth: Vector
    corrections: tuple[Vector, ...]

    def __post_init__(self):
        d = self.zeroth.shape[0]
        for k, c in enumerate(self.corrections, start=1):
            if c.shape != (d,):
                raise DimensionError(f"correction of order {k} has shape {c.shape}, expected ({d},)")

    @property
    def order(self) -> int:
        return len(self.corrections)

    def correction(self, k: int) -> Vector:
        """Order-k correction, k >= 1."""
        if not 1 <= k <= self.order:
            raise DimensionError(f"order {k} not available (series holds 1..{self.order})")
        return self.corrections[k - 1]


@dataclass(frozen=True, eq=False)
class RSCorrections:
    """
    Rayleigh-Schrodinger corrections for level n. state1 and state2 are
    coefficient vectors in the H0 eigenbasis.
    """
    level: int
    delta1: float
    delta2: float
    state1: Vector
    state2: Vector


@dataclass(frozen=True, eq=False)
class TimeDependentTerms:
    """Time-dependent companions of the RS states at time t (eigenbasis coefficients)."""
    time: float
    n1_t: Vector
    n2_t: Vector
    n2_1_t: Vector


@dataclass(frozen=True)
class QuadratureScheme:
    """Composite Gauss-Legendre rule: `panels` equal panels of `nodes_per_panel` nodes each."""
    panels: int = 64
    nodes_per_panel: int = 4

    def __post_init__(self):
        if self.panels < 1 or self.nodes_per_panel < 1:
            raise PreconditionError("panels and nodes_per_panel must be positive")
        if self.panels * self.nodes_per_panel < MIN_QUADRATURE_NODES:
            raise PreconditionError(
                f"total node count {self.panels * self.nodes_per_panel} below {MIN_QUADRATURE_NODES}"
            )

    @property
    def total_nodes(self) -> int:
        return self.panels * self.nodes_per_panel


@dataclass(frozen=True)
class OscillatorProblem:
    """Quadratically perturbed oscillator: H0 = (p^2 + w^2 x^2)/2, V = w^2 x^2 / 2."""
    spec: FockSpec
    lam: float

    def __post_init__(self):
        if self.spec.dimension < MIN_PERTURBATIVE_DIMENSION:
            raise DimensionError(
                f"oscillator problems need dimension >= {MIN_PERTURBATIVE_DIMENSION} (corrections couple n to n+-2)"
            )
        if not abs(self.lam) < 1:
            raise PreconditionError(f"|lambda| must be < 1, got {self.lam}")

    @property
    def tilde_omega(self) -> float:
        return self.spec.omega * math.sqrt(1.0 + self.lam)

    def exact_energy(self, n: int) -> float:
        """Perturbed level w~(n + 1/2)."""
        return self.tilde_omega * (n + 0.5)


# ---------------- CLI records ----------------

class ProblemKind(str, Enum):
    OSCILLATOR = "oscillator"
    CUSTOM = "custom"


class Method(str, Enum):
    BLOCK = "block"
    RSPT = "rspt"
    DYSON = "dyson"
    EXACT = "exact"


@dataclass(frozen=True)
class Tolerances:
    degeneracy_tol: Optional[float] = None  # None -> 1e-8 x spectral range
    panels: int = 64
    nodes: int = 4
    exp_tol: float = DEFAULT_TOL


@dataclass(frozen=True, eq=False)
class ProblemConfig:
    """Declarative description of one batch run; built by problem_config.load_config."""
    problem: ProblemKind
    lambda_values: tuple[float, ...]
    order: int
    times: tuple[float, ...]
    methods: tuple[Method, ...]
    tolerances: Tolerances = field(default_factory=Tolerances)
    omega: float = 1.0
    dimension: int = 32
    h0_path: Optional[str] = None
    v_path: Optional[str] = None
    initial_level: Optional[int] = 0
    initial_vector_path: Optional[str] = None
    block_path: str = "dense"
    max_order: int = 8
    workers: int = 1
    required: dict[str, float] = field(default_factory=dict)
    source: Optional[str] = None  # path of the config file, for provenance

    def __post_init__(self):
        if not self.lambda_values:
            raise ConfigError("lambda_values", "must be non-empty")
        for lam in self.lambda_values:
            if not abs(lam) < 1:
                raise ConfigError("lambda_values", f"|lambda| must be < 1, got {lam}")
        if not self.times:
            raise ConfigError("times", "must be non-empty")
        if any(t < 0 for t in self.times):
            raise ConfigError("times", "must be non-negative")


@dataclass(frozen=True)
class ResultRow:
    """One line of the result table. value is a float, or "floor" for an unfittable slope."""
    lam: Optional[float]
    t: Optional[float]
    order: int
    method_a: str
    method_b: str
    metric: str
    value: Union[float, str]

    def as_record(self) -> dict:
        return {
            "lambda": self.lam,
            "t": self.t,
            "order": self.order,
            "method_a": self.method_a,
            "method_b": self.method_b,
            "metric": self.metric,
            "value": self.value,
        }

"""
Interaction-picture quadrature oracle for the time-ordered (Dyson) terms.

The order-k term (-i)^k e^{-iH0 t} int_{t>t1>...>tk>0} V(t1)...V(tk) psi0 is
computed level by level: phi_j(s) = int_0^s V(u) phi_{j-1}(u) du, sampled on a
shared composite Gauss-Legendre grid. Prefix integrals inside a panel use the
Gauss-Legendre collocation matrix, so each level costs one pass over the grid.
Later times always sit to the left (time ordering by construction).
"""
import logging
import math
from functools import lru_cache
from typing import Optional

import numpy as np

from block_method import assemble, first_block_row
from errors import CapabilityError, PreconditionError
from models import (
    DEFAULT_TOL,
    ComplexMatrix,
    QuadratureScheme,
    UnperturbedSolution,
    Vector,
    as_complex_matrix,
    as_state_vector,
)
from operators import check_unit_norm, propagate, reconstruct
from rspt import default_degeneracy_tol, interval_phase_integral

logger = logging.getLogger(__name__)

DEFAULT_DYSON_CAP = 4
DEFAULT_SCHEME = QuadratureScheme(panels=64, nodes_per_panel=4)
# Rule of thumb: panels >= PANELS_PER_PHASE_TURN * (spectral range) * t / (2 pi)
PANELS_PER_PHASE_TURN = 8
PROBE_SEED = 0
EXTRA_PROBES = 2


@lru_cache(maxsize=32)
def gauss_legendre_collocation(nodes: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Nodes c, weights b and collocation matrix a on [0, 1]:
    a[i, j] = int_0^{c_i} l_j(s) ds for the Lagrange basis l_j on the nodes.
    """
    x, w = np.polynomial.legendre.leggauss(nodes)
    c = (x + 1.0) / 2.0
    b = w / 2.0
    powers = np.arange(nodes)
    vandermonde = c[:, None] ** powers[None, :]
    antiderivative = c[:, None] ** (powers[None, :] + 1) / (powers[None, :] + 1)
    a = np.linalg.solve(vandermonde.T, antiderivative.T).T
    return c, b, a


def composite_grid(scheme: QuadratureScheme, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """Node times (panels, nodes), unit weights b, collocation matrix a and panel width h on [0, t]."""
    c, b, a = gauss_legendre_collocation(scheme.nodes_per_panel)
    h = t / scheme.panels
    starts = h * np.arange(scheme.panels)
    return starts[:, None] + h * c[None, :], b, a, h


def recommended_panels(sol: UnperturbedSolution, t: float) -> int:
    return max(1, math.ceil(PANELS_PER_PHASE_TURN * sol.spectral_range * t / (2 * math.pi)))


def interaction_v(sol: UnperturbedSolution, v: ComplexMatrix, t1: float) -> ComplexMatrix:
    """V(t1) = e^{iH0 t1} V e^{-iH0 t1}, phases applied entrywise in the eigenbasis."""
    v = as_complex_matrix(v, "V")
    vk = sol.to_eigenbasis(v)
    phase = np.exp(1j * np.subtract.outer(sol.energies, sol.energies) * t1)
    u = sol.eigenvectors
    return u @ (phase * vk) @ u.conj().T


def _nested_levels(
    sol: UnperturbedSolution,
    v: ComplexMatrix,
    psi: np.ndarray,
    t: float,
    k_max: int,
    scheme: QuadratureScheme,
) -> list[np.ndarray]:
    """
    phi_j(t) for j = 1..k_max, eigenbasis coefficients, psi of shape (d, r).
    phi_{j-1} at every grid node is kept for the next level.
    """
    vk = sol.to_eigenbasis(as_complex_matrix(v, "V"))
    times, b, a, h = composite_grid(scheme, t)
    if scheme.panels < recommended_panels(sol, t):
        logger.info(
            "quadrature may under-resolve phases: %d panels < recommended %d",
            scheme.panels, recommended_panels(sol, t),
        )
    back = np.exp(-1j * sol.energies[None, None, :] * times[:, :, None])  # e^{-iE u}
    phi = np.broadcast_to(psi, times.shape + psi.shape).astype(np.complex128)
    results = []
    for _ in range(k_max):
        integrand = np.conj(back)[..., None] * np.einsum("ab,psbr->psar", vk, back[..., None] * phi)
        panel_totals = h * np.einsum("i,pidr->pdr", b, integrand)
        running = np.cumsum(panel_totals, axis=0)
        starts = np.concatenate([np.zeros_like(running[:1]), running[:-1]], axis=0)
        phi = starts[:, None] + h * np.einsum("il,pldr->pidr", a, integrand)
        results.append(running[-1])
    return results


def _validate_order(k: int, cap: int) -> None:
    if k < 1:
        raise PreconditionError(f"Dyson order must be >= 1, got {k}")
    if k > cap:
        raise CapabilityError(f"Dyson order {k} exceeds the configured cap {cap}")


def dyson_term(
    sol: UnperturbedSolution,
    v: ComplexMatrix,
    psi0: Vector,
    t: float,
    k: int,
    scheme: QuadratureScheme = DEFAULT_SCHEME,
    cap: int = DEFAULT_DYSON_CAP,
    tol: float = DEFAULT_TOL,
) -> Vector:
    """(-i)^k e^{-iH0 t} int_0^t dt1 ... int_0^{t_{k-1}} dtk V(t1)...V(tk) psi0."""
    _validate_order(k, cap)
    psi0 = as_state_vector(psi0, sol.dimension, "psi0")
    check_unit_norm(psi0, tol)
    return dyson_terms(sol, v, psi0, t, k, scheme, cap)[-1]


def dyson_terms(
    sol: UnperturbedSolution,
    v: ComplexMatrix,
    psi0: Vector,
    t: float,
    order: int,
    scheme: QuadratureScheme = DEFAULT_SCHEME,
    cap: int = DEFAULT_DYSON_CAP,
) -> list[Vector]:
    """All terms of orders 1..order from one sweep of the grid."""
    _validate_order(order, cap)
    psi0 = as_state_vector(psi0, sol.dimension, "psi0")
    psi_e = (sol.eigenvectors.conj().T @ psi0)[:, None]
    phase = np.exp(-1j * sol.energies * t)
    levels = _nested_levels(sol, v, psi_e, float(t), order, scheme)
    return [(-1j) ** k * (sol.eigenvectors @ (phase * phi_t[:, 0])) for k, phi_t in enumerate(levels, start=1)]


def dyson_state(
    sol: UnperturbedSolution,
    v: ComplexMatrix,
    psi0: Vector,
    t: float,
    lam: float,
    order: int,
    scheme: QuadratureScheme = DEFAULT_SCHEME,
    cap: int = DEFAULT_DYSON_CAP,
) -> Vector:
    """Dyson-assembled state e^{-iH0 t} psi0 + sum_{k<=order} lambda^k term_k."""
    psi0 = as_state_vector(psi0, sol.dimension, "psi0")
    state = propagate(sol, psi0, t)
    if order == 0:
        return state
    for k, term in enumerate(dyson_terms(sol, v, psi0, t, order, scheme, cap), start=1):
        state = state + lam ** k * term
    return state


def first_order_closed_form(
    sol: UnperturbedSolution,
    v: ComplexMatrix,
    psi0: Vector,
    t: float,
    degeneracy_tol: Optional[float] = None,
) -> Vector:
    """Order-1 term with each frequency pair integrated analytically."""
    psi0 = as_state_vector(psi0, sol.dimension, "psi0")
    tol = default_degeneracy_tol(sol) if degeneracy_tol is None else degeneracy_tol
    vk = sol.to_eigenbasis(as_complex_matrix(v, "V"))
    pair = interval_phase_integral(np.subtract.outer(sol.energies, sol.energies), t, tol)
    psi_e = sol.eigenvectors.conj().T @ psi0
    coeffs = -1j * np.exp(-1j * sol.energies * t) * ((vk * pair) @ psi_e)
    return sol.eigenvectors @ coeffs


def probe_vectors(dim: int) -> np.ndarray:
    """Fixed probe set: the basis vectors plus two seeded unit complex vectors, as columns."""
    rng = np.random.default_rng(PROBE_SEED)
    extra = rng.standard_normal((dim, EXTRA_PROBES)) + 1j * rng.standard_normal((dim, EXTRA_PROBES))
    extra /= np.linalg.norm(extra, axis=0)
    return np.hstack([np.eye(dim, dtype=np.complex128), extra])


def dyson_identity_residual(
    sol: UnperturbedSolution,
    v: ComplexMatrix,
    t: float,
    order: int,
    scheme: QuadratureScheme = DEFAULT_SCHEME,
    cap: int = DEFAULT_DYSON_CAP,
    block_path: str = "dense",
) -> float:
    """
    Per-order agreement between the time-ordered quadrature terms and
    e^{iH0 t} (e^{-iMt})_(1, k+1), maximized over orders 1..order and the probe set.
    """
    if order == 0:
        return 0.0
    _validate_order(order, cap)
    system = assemble(reconstruct(sol), v, order, max_order=max(order, cap))
    row = first_block_row(system, float(t), block_path)
    probes = probe_vectors(sol.dimension)
    u = sol.eigenvectors
    undo_h0 = u @ (np.exp(1j * sol.energies * t)[:, None] * u.conj().T)
    levels = _nested_levels(sol, v, u.conj().T @ probes, float(t), order, scheme)
    residual = 0.0
    for k, phi_t in enumerate(levels, start=1):
        time_ordered = (-1j) ** k * (u @ phi_t)
        matrix_side = undo_h0 @ row[k] @ probes
        residual = max(residual, float(np.max(np.linalg.norm(time_ordered - matrix_side, axis=0))))
    logger.debug("dyson identity residual t=%g order=%d -> %.3e", t, order, residual)
    return residual

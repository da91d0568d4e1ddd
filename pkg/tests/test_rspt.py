"""Tests for the Rayleigh-Schrodinger formulas and their agreement with the block-method corrections."""
import math

import numpy as np
import pytest

from block_method import assemble, evolve
from conftest import random_hermitian, random_nondegenerate_h0
from errors import DegeneracyError, DimensionError
from models import FockSpec, OscillatorProblem
from operators import basis_state, eigendecompose_hermitian
from oscillator import hamiltonians
from rspt import (
    corrections,
    coupling,
    default_degeneracy_tol,
    first_order_assembly,
    interval_phase_integral,
    perturbed_energy,
    second_order_assembly,
    time_dependent_terms,
    to_original_basis,
)

TIMES = [0.0, 0.5, 1.0, 5.0]


@pytest.fixture(scope="module")
def oscillator_system():
    h0, v = hamiltonians(OscillatorProblem(spec=FockSpec(dimension=32, omega=1.0), lam=0.0))
    return h0, v, eigendecompose_hermitian(h0)


class TestOscillatorValues:
    @pytest.mark.parametrize("n", range(6))
    def test_first_order_energy(self, oscillator_system, n):
        _, v, sol = oscillator_system
        assert corrections(sol, v, n).delta1 == pytest.approx((2 * n + 1) / 4.0, abs=1e-12)

    @pytest.mark.parametrize("n", range(6))
    def test_second_order_energy_matches_taylor_coefficient(self, oscillator_system, n):
        _, v, sol = oscillator_system
        assert corrections(sol, v, n).delta2 == pytest.approx(-(2 * n + 1) / 16.0, abs=1e-10)

    @pytest.mark.parametrize("n", range(6))
    def test_first_order_state_coefficients(self, oscillator_system, n):
        _, v, sol = oscillator_system
        state1 = corrections(sol, v, n).state1
        expected = np.zeros(32)
        expected[n + 2] = -math.sqrt((n + 1) * (n + 2)) / 8.0
        if n >= 2:
            expected[n - 2] = math.sqrt(n * (n - 1)) / 8.0
        np.testing.assert_allclose(state1, expected, atol=1e-10)

    @pytest.mark.parametrize("n", range(6))
    def test_coefficients_recovered_from_block_method(self, oscillator_system, n):
        h0, v, sol = oscillator_system
        system = assemble(h0, v, order=1)
        state1 = corrections(sol, v, n).state1
        for t in np.linspace(0.3, 3.0, 7):
            c1 = evolve(system, basis_state(32, n), t).correction(1)
            # component k of the correction is <k|n1> (e^{-iE_n t} - e^{-iE_k t})
            for k in (n - 2, n + 2):
                if k < 0:
                    continue
                phase = np.exp(-1j * sol.energies[n] * t) - np.exp(-1j * sol.energies[k] * t)
                assert c1[k] / phase == pytest.approx(state1[k], abs=1e-10)

    def test_energy_estimate_is_third_order_accurate(self, oscillator_system):
        _, v, sol = oscillator_system
        lam = 0.01
        estimate = perturbed_energy(corrections(sol, v, 0), sol.energies[0], lam)
        assert abs(estimate - 0.5 * math.sqrt(1 + lam)) < 1e-7


class TestAssemblies:
    @pytest.mark.parametrize("n", range(4))
    def test_first_order_matches_block_on_oscillator(self, oscillator_system, n):
        h0, v, sol = oscillator_system
        system = assemble(h0, v, order=2)
        for t in TIMES:
            series = evolve(system, basis_state(32, n), t)
            np.testing.assert_allclose(first_order_assembly(sol, v, n, t), series.correction(1), atol=1e-8)
            np.testing.assert_allclose(second_order_assembly(sol, v, n, t), series.correction(2), atol=1e-8)

    def test_random_nondegenerate_systems(self, rng):
        for _ in range(10):
            h0 = random_nondegenerate_h0(rng, 5)
            v = random_hermitian(rng, 5)
            sol = eigendecompose_hermitian(h0)
            system = assemble(h0, v, order=2)
            n = int(rng.integers(0, 5))
            for t in TIMES:
                series = evolve(system, sol.eigenvectors[:, n], t)
                np.testing.assert_allclose(first_order_assembly(sol, v, n, t), series.correction(1), atol=1e-8)
                np.testing.assert_allclose(second_order_assembly(sol, v, n, t), series.correction(2), atol=1e-8)

    def test_time_dependent_terms_at_zero(self, rng):
        h0 = random_nondegenerate_h0(rng, 4)
        v = random_hermitian(rng, 4)
        sol = eigendecompose_hermitian(h0)
        rs = corrections(sol, v, 1)
        terms = time_dependent_terms(sol, v, 1, 0.0)
        np.testing.assert_allclose(terms.n1_t, rs.state1, atol=1e-15)
        np.testing.assert_allclose(terms.n2_t, rs.state2, atol=1e-15)
        np.testing.assert_allclose(terms.n2_1_t, 0.0, atol=1e-15)
        assert to_original_basis(sol, rs.state1).shape == (4,)


class TestHelpers:
    def test_coupling(self, rng):
        h0 = random_nondegenerate_h0(rng, 3)
        v = random_hermitian(rng, 3)
        sol = eigendecompose_hermitian(h0)
        vk = sol.eigenvectors.conj().T @ v @ sol.eigenvectors
        assert coupling(sol, v, 2, 0) == pytest.approx(vk[2, 0], abs=1e-12)
        with pytest.raises(DimensionError):
            coupling(sol, v, 3, 0)

    def test_phase_integral(self):
        w = np.array([0.0, 1e-20, 2.0])
        out = interval_phase_integral(w, 1.5, 1e-12)
        assert out[0] == 1.5 and out[1] == 1.5
        assert out[2] == pytest.approx((np.exp(3j) - 1) / 2j, abs=1e-15)

    def test_default_tolerance_scales_with_spectrum(self):
        sol = eigendecompose_hermitian(np.diag([0.0, 10.0]))
        assert default_degeneracy_tol(sol) == pytest.approx(1e-7)
        assert default_degeneracy_tol(eigendecompose_hermitian(np.zeros((2, 2)))) == pytest.approx(1e-8)

    def test_perturbed_energy(self, oscillator_system):
        _, v, sol = oscillator_system
        rs = corrections(sol, v, 1)
        assert perturbed_energy(rs, 1.5, 0.1) == pytest.approx(1.5 + 0.1 * 0.75 - 0.01 * 3 / 16)


class TestDegeneracy:
    def test_error_names_colliding_levels(self):
        sol = eigendecompose_hermitian(np.diag([0.0, 0.0, 1.0]))
        v = np.ones((3, 3))
        with pytest.raises(DegeneracyError) as info:
            corrections(sol, v, 1)
        assert info.value.levels == (0, 1)
        assert "0" in str(info.value) and "1" in str(info.value)

    def test_nondegenerate_level_of_partly_degenerate_spectrum(self):
        sol = eigendecompose_hermitian(np.diag([0.0, 0.0, 1.0]))
        rs = corrections(sol, np.ones((3, 3)), 2)
        assert rs.delta1 == pytest.approx(1.0)

    def test_explicit_tolerance(self):
        sol = eigendecompose_hermitian(np.diag([0.0, 1e-6, 1.0]))
        corrections(sol, np.ones((3, 3)), 0)
        with pytest.raises(DegeneracyError):
            corrections(sol, np.ones((3, 3)), 0, degeneracy_tol=1e-5)

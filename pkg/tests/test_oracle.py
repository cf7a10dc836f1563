"""
Tests for the analytic pure-dephasing solution and the exact-diagonalization backend.
"""

import numpy as np
import pytest
from scipy.integrate import quad

from chain_mapping import assemble_chain
from errors import DomainError
from oracle import DecoherenceCurve, ExactEvolution, dephasing_coherence, ed_evolve
from tebd_engine import EvolutionConfig
from units import K_B_CM, ps_to_phase


def reference_gamma(sd, temperature, t_ps):
    """γ(t) from scipy's QUADPACK on the textbook integrand"""
    phase = float(ps_to_phase(t_ps))

    def integrand(w):
        thermal = 1.0 if temperature == 0 else 1.0 / np.tanh(w / (2 * K_B_CM * temperature))
        return sd(w) * thermal * (1 - np.cos(w * phase)) / w ** 2

    points = [t.Omega for t in sd.lorentzian_terms]
    value, _ = quad(integrand, 0.0, sd.cutoff, points=points, limit=1000, epsabs=1e-13, epsrel=1e-12)
    return value


def embed(op, site, dims):
    out = np.eye(1)
    for k, d in enumerate(dims):
        out = np.kron(out, op if k == site else np.eye(d))
    return out


class TestDecoherenceFunction:
    def test_initial_value(self, wscp):
        curve = dephasing_coherence(wscp, 300.0, [0.0, 0.1])
        assert curve.gamma[0] == 0.0
        assert curve.theta[0] == 0.5
        assert len(curve) == 2

    @pytest.mark.parametrize("temperature", [0.0, 77.0, 300.0])
    def test_non_negative(self, wscp, temperature):
        curve = dephasing_coherence(wscp, temperature, np.linspace(0.0, 1.4, 15))
        assert np.all(curve.gamma >= 0)
        assert np.all(curve.theta <= 0.5)

    def test_grows_with_temperature(self, wscp):
        times = [0.05, 0.2]
        cold = dephasing_coherence(wscp, 77.0, times).gamma
        hot = dephasing_coherence(wscp, 300.0, times).gamma
        assert np.all(hot > cold)

    @pytest.mark.parametrize("temperature", [0.0, 300.0])
    def test_matches_independent_quadrature(self, wscp, temperature):
        curve = dephasing_coherence(wscp, temperature, [0.1])
        assert curve.gamma[0] == pytest.approx(reference_gamma(wscp, temperature, 0.1), abs=1e-8)

    def test_zero_temperature_continuity(self, wscp):
        times = [0.05, 0.3, 1.0]
        zero = dephasing_coherence(wscp, 0.0, times)
        tiny = dephasing_coherence(wscp, 1e-6, times)
        np.testing.assert_allclose(tiny.gamma, zero.gamma, atol=1e-8)

    def test_short_time_expansion(self, wscp):
        # T = 0, ωt ≪ 1: γ ≈ t²/2 ∫J dω
        t = 1e-4
        curve = dephasing_coherence(wscp, 0.0, [t])
        expected = 0.5 * ps_to_phase(t) ** 2 * wscp.total_mass()
        assert curve.gamma[0] == pytest.approx(expected, rel=1e-4)

    def test_refinement_within_error_estimate(self, wscp):
        times = [0.1, 0.7, 1.4]
        coarse = dephasing_coherence(wscp, 300.0, times, abs_tol=1e-10)
        fine = dephasing_coherence(wscp, 300.0, times, abs_tol=1e-11)
        bound = np.maximum(coarse.error_estimates, 1e-10)
        assert np.all(np.abs(fine.gamma - coarse.gamma) <= bound)

    def test_invalid_arguments(self, wscp):
        with pytest.raises(DomainError):
            dephasing_coherence(wscp, -5.0, [0.1])
        with pytest.raises(DomainError):
            dephasing_coherence(wscp, 300.0, [-0.1])

    def test_default_error_estimates(self):
        curve = DecoherenceCurve(np.zeros(2), np.zeros(2), np.full(2, 0.5))
        np.testing.assert_array_equal(curve.error_estimates, 0.0)


class TestExactEvolution:
    def test_hamiltonian_matches_bond_terms(self, dimer_model, toy_chain):
        model = dimer_model()
        coeffs = toy_chain.truncated(2)
        ham = assemble_chain([coeffs, coeffs], model, [3, 2])
        ed = ExactEvolution(model, [coeffs, coeffs], [3, 2])
        dims = ham.local_dims
        assert ed.dims == dims
        total = np.zeros((ed.dimension, ed.dimension), dtype=complex)
        for i, h in enumerate(ham.bond_terms):
            left = int(np.prod(dims[:i]))
            right = int(np.prod(dims[i + 2:]))
            total += np.kron(np.kron(np.eye(left), h), np.eye(right))
        np.testing.assert_allclose(ed.hamiltonian, total, atol=1e-10)

    def test_norm_and_energy_conserved(self, dephasing_model, toy_chain):
        cfg = EvolutionConfig(dt=1e-3, t_max=0.2, observables=("coherence",), stride=10)
        series = ed_evolve(dephasing_model(), toy_chain.truncated(3), [4, 4, 4], cfg, include_invariants=True)
        np.testing.assert_allclose(series.column("norm"), 1.0, atol=1e-10)
        e = series.column("energy")
        np.testing.assert_allclose(e, e[0], atol=1e-10)
        np.testing.assert_array_equal(series.discarded_weight, 0.0)

    def test_system_only(self, dephasing_model):
        cfg = EvolutionConfig(dt=1e-3, t_max=0.05, observables=("coherence", "sigma_x"))
        epsilon = 100.0
        series = ed_evolve(dephasing_model(epsilon=epsilon), None, [], cfg)
        np.testing.assert_allclose(series.column("coherence"), 0.5, atol=1e-12)
        np.testing.assert_allclose(series.column("sigma_x"), np.cos(epsilon * ps_to_phase(series.times)), atol=1e-10)
        np.testing.assert_array_equal(series.max_bond_dim, 1)

    def test_decoupled_dimer_keeps_plus_state(self, dimer_model, toy_chain):
        coeffs = toy_chain.with_system_coupling(0.0).truncated(2)
        cfg = EvolutionConfig(dt=1e-3, t_max=0.1, observables=("p_plus",), stride=10)
        series = ed_evolve(dimer_model(), [coeffs, coeffs], [2, 2], cfg)
        np.testing.assert_allclose(series.column("p_plus"), 1.0, atol=1e-10)
        assert series.max_bond_dim[0] == 2

    def test_dimension_cap(self, dimer_model, toy_chain):
        coeffs = toy_chain
        with pytest.raises(DomainError) as err:
            ExactEvolution(dimer_model(), [coeffs, coeffs], [4, 4, 4, 4])
        assert "4096" in str(err.value)

    def test_coefficient_count_checked(self, dimer_model, toy_chain):
        with pytest.raises(DomainError):
            ExactEvolution(dimer_model(), toy_chain, [2])

    def test_reduced_state_and_entropy(self, dephasing_model, toy_chain):
        model = dephasing_model()
        ed = ExactEvolution(model, toy_chain.truncated(2), [3, 3])
        psi = ed.state_at(0.05)
        rho = ed.reduced_density_matrix(psi, [0])
        assert np.trace(rho).real == pytest.approx(1.0)
        np.testing.assert_allclose(rho, rho.conj().T, atol=1e-12)
        assert ed.entanglement_entropy(psi, 1) > 0.0
        assert ed.entanglement_entropy(ed.initial_state, 1) == pytest.approx(0.0, abs=1e-12)
        sz = embed(np.diag([1.0, -1.0]), 0, ed.dims)
        assert ed.measure(psi, "sigma_z") == pytest.approx(float(np.real(np.vdot(psi, sz @ psi))))

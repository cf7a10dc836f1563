"""
Tests for the MPS state, two-site updates and TEBD time evolution.
"""

import numpy as np
import pytest
import scipy.linalg

from chain_diagnostics import estimate_chain_length, local_dimension_schedule
from chain_mapping import assemble_chain, recurrence_coefficients
from errors import DomainError, LinearAlgebraError, NumericalError
from models import BathSpec, ModelSpec
from observables import custom_observable
from oracle import ExactEvolution, dephasing_coherence, ed_evolve
from spectral_density import thermalize
from tebd_engine import (
    EvolutionConfig,
    MPSState,
    TEBDEngine,
    bond_gate,
    energy,
    init_vacuum,
    measure,
    tebd_evolve,
    truncation_rank,
)
from units import ps_to_phase


def exact_cfg(**kwargs):
    values = dict(dt=1e-4, t_max=0.02, chi_max=1000, svd_cutoff=0.0, observables=("coherence",))
    values.update(kwargs)
    return EvolutionConfig(**values)


@pytest.fixture
def small_dephasing(dephasing_model, toy_chain):
    """Two-level system plus three oscillators at d = 4, small enough for exact diagonalization"""
    model = dephasing_model()
    coeffs = toy_chain.truncated(3)
    ham = assemble_chain(coeffs, model, [4, 4, 4])
    return model, coeffs, ham


@pytest.fixture
def small_dimer(dimer_model, toy_chain):
    model = dimer_model()
    coeffs = toy_chain.truncated(2)
    ham = assemble_chain([coeffs, coeffs], model, [3, 2])
    return model, coeffs, ham


class TestEvolutionConfig:
    def test_defaults(self):
        cfg = EvolutionConfig()
        assert cfg.dt == 2.5e-4
        assert cfg.chi_max == 50
        assert cfg.svd_cutoff == 1e-12
        assert cfg.n_steps == 1200

    @pytest.mark.parametrize("field,value", [("dt", 0.0), ("chi_max", 0), ("svd_cutoff", 1.0), ("stride", 0), ("threads", 0), ("t_max", -1.0)])
    def test_invalid(self, field, value):
        with pytest.raises(DomainError):
            EvolutionConfig(**{field: value})

    def test_dict_round_trip(self):
        cfg = EvolutionConfig(dt=1e-3, observables=("coherence", "energy"), stride=5)
        data = cfg.to_dict()
        assert data["observables"] == ["coherence", "energy"]
        data["unknown"] = 1
        assert EvolutionConfig.from_dict(data) == cfg


class TestTruncation:
    def test_rank_rules(self):
        s = np.array([1.0, 0.1, 0.01])
        assert truncation_rank(s, 10, 0.0) == 3
        assert truncation_rank(s, 2, 0.0) == 2
        assert truncation_rank(s, 10, 1e-3) == 2
        assert truncation_rank(s, 10, 0.5) == 1
        assert truncation_rank(np.zeros(3), 10, 0.0) == 1

    def test_gate_unitarity(self):
        rng = np.random.default_rng(3)
        a = rng.normal(size=(16, 16)) + 1j * rng.normal(size=(16, 16))
        gate = bond_gate(a + a.conj().T, 0.37)
        assert np.linalg.norm(gate.conj().T @ gate - np.eye(16), ord=2) <= 1e-12

    def test_truncated_update_renormalizes(self, small_dimer):
        model, _, ham = small_dimer
        state = init_vacuum(model, ham)
        cfg = EvolutionConfig(dt=1e-3, t_max=0.02, chi_max=1, discarded_budget=1e-12, observables=("p_plus",))
        series = tebd_evolve(state, ham, cfg)
        assert state.max_bond_dim == 1
        assert series.discarded_weight[-1] > 0
        assert np.all(np.diff(series.discarded_weight) >= 0)
        assert len(series.warnings) == 1
        assert state.norm_squared() == pytest.approx(1.0, abs=1e-10)

    def test_svd_failure_is_numerical_error(self, small_dimer, monkeypatch):
        def no_convergence(*args, **kwargs):
            raise np.linalg.LinAlgError("SVD did not converge")

        monkeypatch.setattr(scipy.linalg, "svd", no_convergence)
        model, _, ham = small_dimer
        with pytest.raises(LinearAlgebraError) as err:
            tebd_evolve(init_vacuum(model, ham), ham, exact_cfg(t_max=1e-3))
        assert isinstance(err.value, NumericalError)


class TestVacuum:
    def test_dephasing_vacuum(self, small_dephasing):
        model, _, ham = small_dephasing
        state = init_vacuum(model, ham)
        assert state.norm_squared() == pytest.approx(1.0, abs=1e-14)
        assert state.bond_dims == [1, 1, 1]
        assert measure(state, "coherence", ham) == pytest.approx(0.5)
        for n in range(3):
            assert measure(state, f"occupation:{n}", ham) == 0.0
        for bond in range(1, 4):
            assert state.entanglement_entropy(bond) == 0.0

    def test_dimer_vacuum(self, small_dimer):
        model, _, ham = small_dimer
        state = init_vacuum(model, ham)
        assert measure(state, "p_plus", ham) == pytest.approx(1.0, abs=1e-14)
        left, right = ham.system_sites
        assert state.bond_dims[left] == 2
        assert state.max_bond_dim == 2
        assert state.entanglement_entropy(right) == pytest.approx(np.log(2.0))
        chain_bonds = [b for b in range(1, len(state)) if b != right]
        assert all(state.entanglement_entropy(b) == 0.0 for b in chain_bonds)
        assert measure(state, "occupation:L0", ham) == 0.0

    def test_product_state(self):
        state = MPSState.product_state([np.array([1.0, 1.0]), np.array([2.0, 0.0, 0.0])])
        assert state.physical_dims == [2, 3]
        assert state.norm_squared() == pytest.approx(1.0)
        other = state.copy()
        other.tensors[0][0, 0, 0] = 0.0
        assert state.tensors[0][0, 0, 0] != 0.0
        with pytest.raises(DomainError):
            state.reduced_density_matrix([0, 1, 2])

    def test_mixed_initial_state_rejected(self, dephasing_model, toy_chain):
        model = dephasing_model(initial_state=np.diag([0.5, 0.5]))
        ham = assemble_chain(toy_chain, dephasing_model(), [2])
        with pytest.raises(DomainError):
            init_vacuum(model, ham)

    def test_model_mismatch(self, dimer_model, small_dephasing):
        _, _, ham = small_dephasing
        with pytest.raises(DomainError):
            init_vacuum(dimer_model(), ham)

    def test_to_dense_matches_exact_initial_state(self, small_dimer):
        model, coeffs, ham = small_dimer
        ed = ExactEvolution(model, [coeffs, coeffs], [3, 2])
        np.testing.assert_allclose(init_vacuum(model, ham).to_dense(), ed.initial_state, atol=1e-14)


class TestMeasure:
    def test_non_adjacent_observable(self, small_dephasing):
        model, _, ham = small_dephasing
        state = init_vacuum(model, ham)
        obs = custom_observable("far", [0, 2], np.eye(8))
        with pytest.raises(DomainError):
            measure(state, obs, ham)

    def test_custom_two_site(self, small_dephasing):
        model, _, ham = small_dephasing
        state = init_vacuum(model, ham)
        obs = custom_observable("xx", [0, 1], np.eye(8))
        assert measure(state, obs, ham) == pytest.approx(1.0)

    def test_p_plus_needs_dimer(self, small_dephasing):
        model, _, ham = small_dephasing
        with pytest.raises(DomainError):
            measure(init_vacuum(model, ham), "p_plus", ham)

    def test_energy_matches_dense(self, small_dephasing):
        model, coeffs, ham = small_dephasing
        state = init_vacuum(model, ham)
        tebd_evolve(state, ham, exact_cfg(t_max=0.005))
        ed = ExactEvolution(model, coeffs, [4, 4, 4])
        psi = state.to_dense()
        assert energy(state, ham) == pytest.approx(float(np.real(np.vdot(psi, ed.hamiltonian @ psi))), abs=1e-9)


class TestEvolution:
    def test_decoupled_coherence_constant(self, dephasing_model, toy_chain):
        model = dephasing_model()
        ham = assemble_chain(toy_chain.with_system_coupling(0.0), model, [3, 3])
        series = tebd_evolve(init_vacuum(model, ham), ham, exact_cfg(dt=5e-4, t_max=0.05))
        np.testing.assert_allclose(series.column("coherence"), 0.5, atol=1e-12)

    def test_sampling_grid(self, small_dephasing):
        model, _, ham = small_dephasing
        cfg = exact_cfg(dt=2.5e-4, t_max=1e-3, stride=2, observables=("coherence", "energy"))
        series = tebd_evolve(init_vacuum(model, ham), ham, cfg)
        np.testing.assert_allclose(series.times, [0.0, 5e-4, 1e-3])
        assert series.column_names == ["coherence", "energy"]
        assert series.max_bond_dim[0] == 1

    def test_dimension_mismatch(self, small_dephasing, dephasing_model, toy_chain):
        model, _, ham = small_dephasing
        other = assemble_chain(toy_chain.truncated(3), model, [3, 3, 3])
        with pytest.raises(DomainError):
            tebd_evolve(init_vacuum(model, other), ham, exact_cfg())

    def test_matches_exact_diagonalization(self, small_dephasing):
        model, coeffs, ham = small_dephasing
        obs = ("coherence", "sigma_x", "sigma_z", "occupation:0", "occupation:2")
        cfg = exact_cfg(observables=obs, stride=20)
        series = tebd_evolve(init_vacuum(model, ham), ham, cfg)
        reference = ed_evolve(model, coeffs, [4, 4, 4], cfg)
        np.testing.assert_allclose(series.times, reference.times)
        for name in obs:
            np.testing.assert_allclose(series.column(name), reference.column(name), atol=1e-6)

    def test_dimer_matches_exact_diagonalization(self, small_dimer):
        model, coeffs, ham = small_dimer
        obs = ("p_plus", "sigma_z:L", "coherence:R", "occupation:L1")
        cfg = exact_cfg(observables=obs, stride=50)
        series = tebd_evolve(init_vacuum(model, ham), ham, cfg)
        reference = ed_evolve(model, [coeffs, coeffs], [3, 2], cfg)
        for name in obs:
            np.testing.assert_allclose(series.column(name), reference.column(name), atol=1e-6)

    def test_second_order_convergence(self, small_dephasing):
        model, coeffs, ham = small_dephasing
        ed = ExactEvolution(model, coeffs, [4, 4, 4])
        exact = ed.state_at(0.02)
        errors = []
        for dt in (4e-4, 2e-4):
            state = init_vacuum(model, ham)
            tebd_evolve(state, ham, exact_cfg(dt=dt))
            errors.append(np.linalg.norm(state.to_dense() - exact))
        assert 3.0 < errors[0] / errors[1] < 5.0

    def test_thread_count_does_not_change_result(self, small_dimer):
        model, _, ham = small_dimer
        cfg = exact_cfg(dt=2.5e-4, observables=("p_plus", "coherence:L"), stride=10)
        serial = tebd_evolve(init_vacuum(model, ham), ham, cfg)
        parallel = tebd_evolve(init_vacuum(model, ham), ham, exact_cfg(dt=2.5e-4, observables=("p_plus", "coherence:L"), stride=10, threads=4))
        for name in serial.column_names:
            np.testing.assert_allclose(parallel.column(name), serial.column(name), atol=1e-12, rtol=0)

    def test_norm_and_reduced_state(self, small_dimer):
        model, _, ham = small_dimer
        state = init_vacuum(model, ham)
        cfg = EvolutionConfig(dt=5e-4, t_max=0.05, chi_max=8, observables=("p_plus",))
        series = tebd_evolve(state, ham, cfg)
        n_sweeps = cfg.n_steps * 3
        drift = abs(1.0 - state.norm_squared())
        assert drift <= series.discarded_weight[-1] + 10 * len(state) * np.finfo(float).eps * n_sweeps
        rho = state.reduced_density_matrix(ham.system_sites)
        np.testing.assert_allclose(rho, rho.conj().T, atol=1e-10)
        assert np.min(np.linalg.eigvalsh(rho)) >= -1e-8
        assert np.all((series.column("p_plus") >= -1e-10) & (series.column("p_plus") <= 1 + 1e-10))

    def test_energy_drift(self, small_dephasing):
        model, _, ham = small_dephasing
        series = tebd_evolve(init_vacuum(model, ham), ham, exact_cfg(observables=("energy",), stride=50))
        e = series.column("energy")
        assert np.max(np.abs(e - e[0])) < 1e-3

    def test_gates_rebuilt_when_dt_changes(self, small_dephasing):
        _, _, ham = small_dephasing
        engine = TEBDEngine(ham, exact_cfg())
        first = engine.gates
        assert engine.gates is first
        engine.cfg = exact_cfg(dt=2e-4)
        assert engine.gates is not first
        tau = ps_to_phase(2e-4)
        np.testing.assert_allclose(engine.gates.full[1], bond_gate(ham.bond_terms[1], tau))


DEPHASING_D_MAX = {0.0: 8, 77.0: 10, 300.0: 12}


def dephasing_error(density, temperature, t_max, n_coefficients):
    """Largest |coherence − θ| between a TEBD run and the analytic decoherence function"""
    coeffs = recurrence_coefficients(thermalize(density, temperature), n_coefficients)
    n_sites = estimate_chain_length(coeffs, t_max)
    if n_sites > len(coeffs):
        coeffs = recurrence_coefficients(thermalize(density, temperature), n_sites)
    model = ModelSpec(kind="dephasing", baths=(BathSpec(density, temperature),))
    ham = assemble_chain(coeffs.truncated(n_sites), model, local_dimension_schedule(DEPHASING_D_MAX[temperature], n_sites))
    cfg = EvolutionConfig(dt=2.5e-4, t_max=t_max, chi_max=50, stride=40, threads=4)
    series = tebd_evolve(init_vacuum(model, ham), ham, cfg)
    curve = dephasing_coherence(density, temperature, series.times)
    return float(np.max(np.abs(series.column("coherence") - curve.theta)))


@pytest.mark.parametrize("temperature", [0.0, 77.0, 300.0])
def test_short_dephasing_run_matches_decoherence_function(wscp, temperature):
    assert dephasing_error(wscp, temperature, t_max=0.3, n_coefficients=64) < 1e-4


@pytest.mark.slow
@pytest.mark.parametrize("temperature", [0.0, 77.0, 300.0])
def test_dephasing_matches_decoherence_function(wscp, temperature):
    assert dephasing_error(wscp, temperature, t_max=1.4, n_coefficients=400) < 1e-4


@pytest.fixture(scope="module")
def dimer_populations(wscp, wscp_background):
    """P_+ at 300 K on ten-site chains for the full density, its background and a decoupled chain"""
    cfg = EvolutionConfig(dt=2.5e-4, t_max=0.2, chi_max=32, stride=40, observables=("p_plus",), threads=4)
    dims = local_dimension_schedule(5, 10)
    runs = {}
    for name, density in (("full", wscp), ("background", wscp_background)):
        coeffs = recurrence_coefficients(thermalize(density, 300.0), 10)
        model = ModelSpec(kind="dimer", baths=(BathSpec(density, 300.0), BathSpec(density, 300.0)))
        variants = {name: coeffs}
        if name == "full":
            variants["decoupled"] = coeffs.with_system_coupling(0.0)
        for label, c in variants.items():
            ham = assemble_chain([c, c], model, dims)
            runs[label] = tebd_evolve(init_vacuum(model, ham), ham, cfg).column("p_plus")
    return runs


class TestDimerDynamics:
    def test_starts_in_plus_state(self, dimer_populations):
        for populations in dimer_populations.values():
            assert populations[0] == pytest.approx(1.0, abs=1e-12)

    def test_decoupled_chain_keeps_population(self, dimer_populations):
        np.testing.assert_allclose(dimer_populations["decoupled"], 1.0, rtol=0, atol=1e-10)

    def test_full_density_relaxes_population(self, dimer_populations):
        assert np.min(dimer_populations["full"]) < 0.9

    def test_background_density_changes_dynamics(self, dimer_populations):
        difference = np.max(np.abs(dimer_populations["full"] - dimer_populations["background"]))
        assert difference > 1e-2

@pytest.mark.slow
def test_excitation_accumulates_near_system(wscp):
    coeffs = recurrence_coefficients(thermalize(wscp, 300.0), 60)
    model = ModelSpec(kind="dephasing", baths=(BathSpec(wscp, 300.0),))
    ham = assemble_chain(coeffs, model, local_dimension_schedule(8, 60))
    cfg = EvolutionConfig(dt=2.5e-4, t_max=0.5, chi_max=50, stride=40, observables=("occupation:0", "occupation:20"), threads=4)
    series = tebd_evolve(init_vacuum(model, ham), ham, cfg)
    assert np.mean(series.column("occupation:0")) > np.mean(series.column("occupation:20"))

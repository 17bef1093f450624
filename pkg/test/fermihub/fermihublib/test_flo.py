"""Tests for the fermionic linear optics engine."""

from __future__ import annotations

import numpy as np
import pytest

from fermihub.fermihublib.circuits import CircuitIR, TrotterPlan, build_trotter_circuit
from fermihub.fermihublib.defs import Spin, StateKind
from fermihub.fermihublib.flo import (
    FLOInitial,
    FLOOracle,
    amplitudes,
    collision_probability,
    compose_circuit,
    densities,
    density_density,
    enumerate_probabilities,
    propagator,
    sample_flo,
    sector_dimension,
    z_expectations,
)
from fermihub.fermihublib.gates import GateName, GateOp
from fermihub.fermihublib.model import build_initial_state, build_model
from fermihub.fermihublib.shots import indices_from_bits
from fermihub.fermihublib.statevec import StateVector, evolve_exact, initial_state_vector, run_circuit


def mode_densities(state: StateVector) -> np.ndarray:
    return state.probabilities() @ state.occupations


def mode_correlations(state: StateVector) -> np.ndarray:
    occ = state.occupations.astype(float)
    return np.einsum("s,si,sj->ij", state.probabilities(), occ, occ)


def probabilities_of(state: StateVector, bits: np.ndarray) -> np.ndarray:
    assert state.basis is not None
    return state.probabilities()[state.basis.index_of(indices_from_bits(bits))]


@pytest.fixture
def free_model():
    return build_model(3, 2, 0.0, "zero")


@pytest.fixture
def neel(free_model):
    return build_initial_state(free_model, StateKind.NEEL_WITH_HOLES, holes=[(1, 0)])


@pytest.fixture
def singlets(free_model):
    return build_initial_state(free_model, StateKind.SINGLET_COVERING_WITH_HOLES)


class TestPropagator:
    def test_zero_time_is_identity(self, free_model) -> None:
        prop = propagator(free_model, 0.0)
        np.testing.assert_allclose(prop.up, np.eye(6))
        assert prop.t == 0.0

    @pytest.mark.parametrize("mode", ["continuous", "trotter"])
    def test_unitary(self, free_model, mode: str) -> None:
        prop = propagator(free_model, 0.7, mode)
        assert prop.unitarity_error() < 1e-10
        assert prop.mode == mode
        np.testing.assert_allclose(prop.sector(Spin.DOWN), prop.down)

    def test_trotter_ignores_interaction(self, free_model) -> None:
        interacting = build_model(3, 2, 8.0, "zero")
        a = propagator(free_model, 0.5, "trotter")
        b = propagator(interacting, 0.5, "trotter")
        np.testing.assert_allclose(a.full, b.full, atol=1e-12)

    def test_trotter_approaches_continuous(self, free_model) -> None:
        exact = propagator(free_model, 0.4)
        coarse = propagator(free_model, 0.4, "trotter", plan=TrotterPlan.uniform(0.4, 1))
        fine = propagator(free_model, 0.4, "trotter", plan=TrotterPlan.uniform(0.4, 4))
        assert np.abs(fine.up - exact.up).max() < np.abs(coarse.up - exact.up).max()

    def test_compose_rejects_distant_gates(self) -> None:
        circuit = CircuitIR(n_qubits=4, layers=[[GateOp(GateName.FSIM, (0, 2), (0.1,))]])
        with pytest.raises(ValueError, match="non-adjacent"):
            compose_circuit(circuit)


class TestAgainstStateVector:
    def test_continuous_densities(self, free_model, neel) -> None:
        prop = propagator(free_model, 0.8)
        initial = FLOInitial.from_state(free_model.lattice, neel)
        exact = evolve_exact(free_model, initial_state_vector(free_model.lattice, neel), 0.8)
        np.testing.assert_allclose(densities(prop, initial), mode_densities(exact), atol=1e-9)

    def test_trotter_densities_match_circuit(self, free_model, neel) -> None:
        plan = TrotterPlan.uniform(0.6, 2)
        circuit = build_trotter_circuit(free_model, None, plan)
        prop = propagator(free_model, 0.6, "trotter", circuit=circuit)
        initial = FLOInitial.from_state(free_model.lattice, neel)
        state = run_circuit(circuit, initial_state_vector(free_model.lattice, neel))
        np.testing.assert_allclose(densities(prop, initial), mode_densities(state), atol=1e-9)

    @pytest.mark.parametrize("kind", ["neel", "singlets"])
    def test_enumerated_probabilities(self, free_model, kind: str, request) -> None:
        spec = request.getfixturevalue(kind)
        prop = propagator(free_model, 0.5)
        initial = FLOInitial.from_state(free_model.lattice, spec)
        bits, probs = enumerate_probabilities(prop, initial)
        assert len(bits) == sector_dimension(6, initial.n_up, initial.n_down)
        assert probs.sum() == pytest.approx(1.0)
        exact = evolve_exact(free_model, initial_state_vector(free_model.lattice, spec), 0.5)
        np.testing.assert_allclose(probs, probabilities_of(exact, bits), atol=1e-9)

    def test_singlet_correlations(self, free_model, singlets) -> None:
        prop = propagator(free_model, 0.9)
        initial = FLOInitial.from_state(free_model.lattice, singlets)
        assert not initial.is_slater
        exact = evolve_exact(free_model, initial_state_vector(free_model.lattice, singlets), 0.9)
        np.testing.assert_allclose(densities(prop, initial), mode_densities(exact), atol=1e-9)
        np.testing.assert_allclose(density_density(prop, initial), mode_correlations(exact), atol=1e-9)

    def test_z_expectations(self, free_model, neel) -> None:
        prop = propagator(free_model, 0.3)
        initial = FLOInitial.from_state(free_model.lattice, neel)
        z, zz = z_expectations(prop, initial)
        np.testing.assert_allclose(np.diag(zz), 1.0)
        np.testing.assert_allclose(z, 1 - 2 * densities(prop, initial))
        np.testing.assert_allclose(zz, zz.T, atol=1e-12)


class TestAmplitudes:
    def test_out_of_sector_is_zero(self, free_model, neel) -> None:
        prop = propagator(free_model, 0.4)
        initial = FLOInitial.from_state(free_model.lattice, neel)
        assert amplitudes(prop, initial, np.zeros((2, 12), dtype=np.uint8)).tolist() == [0.0, 0.0]

    def test_wrong_width_raises(self, free_model, neel) -> None:
        prop = propagator(free_model, 0.4)
        initial = FLOInitial.from_state(free_model.lattice, neel)
        with pytest.raises(ValueError):
            amplitudes(prop, initial, np.zeros((1, 5), dtype=np.uint8))

    def test_oracle_batch_matches_single_calls(self, free_model, neel) -> None:
        prop = propagator(free_model, 0.4)
        initial = FLOInitial.from_state(free_model.lattice, neel)
        oracle = FLOOracle(prop, initial)
        bits, _ = enumerate_probabilities(prop, initial)
        batch = oracle.batch(bits[:10])
        for row, value in zip(bits[:10], batch):
            assert oracle(row) == pytest.approx(value)

    def test_slater_constructor(self) -> None:
        initial = FLOInitial.slater(4, [2, 0], [5])
        assert initial.up_modes == (0, 2)
        assert (initial.n_up, initial.n_down) == (2, 1)
        np.testing.assert_allclose(np.diag(initial.gamma0()).real, [1, 0, 1, 0, 0, 1, 0, 0])


class TestSampling:
    def test_sample_means_follow_densities(self, free_model, neel) -> None:
        prop = propagator(free_model, 0.6)
        initial = FLOInitial.from_state(free_model.lattice, neel)
        shots = sample_flo(prop, initial, 4000, seed=1)
        assert shots.t == pytest.approx(0.6)
        up, down = shots.sector_counts(free_model.lattice)
        assert np.all(up == initial.n_up)
        assert np.all(down == initial.n_down)
        np.testing.assert_allclose(shots.bits.mean(axis=0), densities(prop, initial), atol=0.05)

    def test_seeded_sampling_repeats(self, free_model, neel) -> None:
        prop = propagator(free_model, 0.6)
        initial = FLOInitial.from_state(free_model.lattice, neel)
        a = sample_flo(prop, initial, 50, seed=3)
        b = sample_flo(prop, initial, 50, seed=3)
        np.testing.assert_array_equal(a.bits, b.bits)

    def test_singlets_cannot_be_sampled(self, free_model, singlets) -> None:
        prop = propagator(free_model, 0.6)
        with pytest.raises(ValueError, match="Slater"):
            sample_flo(prop, FLOInitial.from_state(free_model.lattice, singlets), 10, seed=0)

    def test_collision_probability_methods_agree(self, free_model, neel) -> None:
        prop = propagator(free_model, 0.6)
        initial = FLOInitial.from_state(free_model.lattice, neel)
        exact, exact_error = collision_probability(prop, initial)
        estimate, error = collision_probability(prop, initial, "monte_carlo", n_samples=20_000, seed=2)
        assert exact_error == 0.0
        assert abs(estimate - exact) < 5 * error

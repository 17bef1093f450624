"""Tests for the lattice, model and initial-state module."""

from __future__ import annotations

import math

import numpy as np
import pytest
from beartype.roar import BeartypeCallHintParamViolation
from hypothesis import given, settings
from hypothesis import strategies as st

from fermihub.fermihublib.defs import ConfigError, Flux, SiteClass, Spin, StateKind
from fermihub.fermihublib.model import (
    InitialStateSpec,
    LatticeSpec,
    ModelSpec,
    build_initial_state,
    build_model,
    default_singlet_pairs,
    dispersion,
    doublon_asymptote_u0,
    expected_pair_distance,
    gauge_transform,
    hopping_matrix,
    max_doublon_density,
)
from fermihub.fermihublib.pipeline import exact_table

lattice_dims = st.tuples(st.integers(min_value=2, max_value=6), st.integers(min_value=2, max_value=6))


class TestLatticeSpec:
    def test_parse_size_is_rows_by_columns(self) -> None:
        lattice = LatticeSpec.parse_size("6x5")
        assert (lattice.Lx, lattice.Ly) == (5, 6)
        assert lattice.size_label == "6x5"
        assert lattice.n_qubits == 60

    @pytest.mark.parametrize("size", ["", "5", "5x", "axb", "0x3", "1x1"])
    def test_parse_size_rejects_malformed(self, size: str) -> None:
        with pytest.raises(ValueError):
            LatticeSpec.parse_size(size)

    @given(lattice_dims)
    @settings(max_examples=30, deadline=None)
    def test_snake_round_trip(self, dims: tuple[int, int]) -> None:
        lattice = LatticeSpec(Lx=dims[0], Ly=dims[1])
        assert sorted(lattice.snake_order) == list(range(lattice.L))
        for site in range(lattice.L):
            assert lattice.snake_inverse(lattice.snake(site)) == site

    @given(lattice_dims)
    @settings(max_examples=30, deadline=None)
    def test_snake_neighbours_are_bonds(self, dims: tuple[int, int]) -> None:
        lattice = LatticeSpec(Lx=dims[0], Ly=dims[1])
        for position in range(lattice.L - 1):
            a, b = lattice.snake_inverse(position), lattice.snake_inverse(position + 1)
            assert lattice.manhattan(a, b) == 1

    def test_mode_index_round_trip(self) -> None:
        lattice = LatticeSpec(Lx=3, Ly=2)
        modes = {lattice.mode_index(s, spin) for s in range(lattice.L) for spin in Spin}
        assert modes == set(range(lattice.n_qubits))
        for mode in modes:
            site, spin = lattice.mode_site(mode)
            assert lattice.mode_index(site, spin) == mode

    def test_second_row_runs_backwards(self) -> None:
        lattice = LatticeSpec(Lx=3, Ly=2)
        # Row 1 is traversed right to left: site (2, 1) sits right after (2, 0).
        assert lattice.snake(lattice.site_index(2, 1)) == 3
        assert lattice.snake(lattice.site_index(0, 1)) == 5

    def test_edges_and_plaquettes(self) -> None:
        lattice = LatticeSpec(Lx=4, Ly=3)
        assert len(lattice.edges) == 4 * 2 + 3 * 3
        assert len(lattice.plaquettes) == 6
        assert sorted(lattice.neighbours(lattice.site_index(0, 0))) == [1, 4]

    def test_site_index_outside_raises(self) -> None:
        with pytest.raises(ValueError):
            LatticeSpec(Lx=2, Ly=2).site_index(2, 0)


class TestModel:
    @pytest.mark.parametrize("flux,expected", [(Flux.ZERO, 0.0), (Flux.PI, math.pi)])
    def test_plaquette_flux(self, flux: Flux, expected: float) -> None:
        model = build_model(4, 3, 4.0, flux)
        assert np.allclose(model.plaquette_fluxes(), expected)

    def test_too_small_lattice_raises(self) -> None:
        with pytest.raises(ValueError):
            build_model(1, 3, 0.0, "zero")

    def test_boundary_type_check(self) -> None:
        with pytest.raises(BeartypeCallHintParamViolation):
            build_model("3", 2, 0.0, "zero")  # type: ignore[arg-type]

    def test_inconsistent_phases_raise(self) -> None:
        model = build_model(2, 2, 0.0, "zero")
        phases = (math.pi,) + model.phases[1:]
        with pytest.raises(ValueError, match="flux"):
            ModelSpec(lattice=model.lattice, U=0.0, flux=Flux.ZERO, phases=phases)

    @given(st.integers(min_value=0, max_value=11), st.sampled_from(["zero", "pi"]))
    @settings(max_examples=25, deadline=None)
    def test_gauge_transform_keeps_flux(self, site: int, flux: str) -> None:
        model = build_model(4, 3, 8.0, flux)
        transformed = gauge_transform(model, site)
        assert np.allclose(
            np.exp(1j * np.array(transformed.plaquette_fluxes())), np.exp(1j * np.array(model.plaquette_fluxes()))
        )

    @pytest.mark.parametrize("flux", ["zero", "pi"])
    def test_hopping_matrix_is_hermitian(self, flux: str) -> None:
        h = hopping_matrix(build_model(3, 3, 0.0, flux))
        assert np.allclose(h, h.conj().T)
        assert abs(np.trace(h)) < 1e-12

    def test_pi_flux_spectrum_is_symmetric(self) -> None:
        energies = np.linalg.eigvalsh(hopping_matrix(build_model(4, 4, 0.0, "pi")))
        assert np.allclose(np.sort(energies), np.sort(-energies))

    def test_to_dict_round_trip(self) -> None:
        model = build_model(3, 2, 4.0, "pi")
        assert ModelSpec.from_dict(model.to_dict()) == model

    def test_dispersion_branches(self) -> None:
        assert dispersion(0.0, 0.0, "zero") == (-4.0,)
        lower, upper = dispersion(0.3, 1.1, "pi")
        assert lower == pytest.approx(-upper)


class TestInitialStates:
    def test_neel_with_hole(self) -> None:
        model = build_model(3, 2, 0.0, "zero")
        state = build_initial_state(model, StateKind.NEEL_WITH_HOLES, holes=[(1, 0)])
        assert state.hole_sites == (1,)
        assert state.Nup + state.Ndown == 5
        # Even-parity sites carry spin up.
        assert 0 in state.up_sites
        assert 3 in state.down_sites
        assert state.classification(model.lattice)[1] is SiteClass.HOLON

    def test_holes_accept_row_major_indices(self) -> None:
        model = build_model(3, 2, 0.0, "zero")
        by_index = build_initial_state(model, "neel_with_holes", holes=[4])
        by_coords = build_initial_state(model, "neel_with_holes", holes=[(1, 1)])
        assert by_index == by_coords

    def test_occupation_bits(self) -> None:
        model = build_model(2, 2, 0.0, "zero")
        state = build_initial_state(model, StateKind.NEEL_WITH_HOLES)
        bits = state.occupation_bits(model.lattice)
        assert bits.sum() == 4
        assert bits[: model.lattice.L].sum() == 2

    def test_holon_stripe(self) -> None:
        model = build_model(4, 3, 0.0, "zero")
        state = build_initial_state(model, StateKind.HOLON_STRIPE)
        assert state.stripe_column == 2
        assert sorted(state.hole_sites) == [2, 6, 10]
        # Left of the stripe the Neel pattern is flipped.
        assert model.lattice.site_index(0, 0) in state.down_sites
        assert model.lattice.site_index(3, 0) in state.down_sites

    def test_stripe_outside_raises(self) -> None:
        model = build_model(4, 3, 0.0, "zero")
        with pytest.raises(ValueError):
            build_initial_state(model, StateKind.HOLON_STRIPE, stripe_column=4)

    def test_random_holes_need_seed(self) -> None:
        model = build_model(3, 3, 0.0, "zero")
        with pytest.raises(ValueError, match="seed"):
            build_initial_state(model, StateKind.RANDOM_HOLES, n_holes=2)
        first = build_initial_state(model, StateKind.RANDOM_HOLES, n_holes=2, seed=7)
        second = build_initial_state(model, StateKind.RANDOM_HOLES, n_holes=2, seed=7)
        assert first == second
        assert len(first.hole_sites) == 2

    def test_singlet_covering_branches(self) -> None:
        model = build_model(2, 2, 0.0, "zero")
        state = build_initial_state(model, StateKind.SINGLET_COVERING_WITH_HOLES)
        assert state.singlet_pairs == default_singlet_pairs(model.lattice, ())
        assert (state.Nup, state.Ndown) == (2, 2)
        branches = state.branches(model.lattice)
        assert len(branches) == 4
        assert sum(a**2 for a, _, _ in branches) == pytest.approx(1.0)
        with pytest.raises(ValueError):
            state.occupation_bits(model.lattice)

    def test_odd_singlet_cover_raises(self) -> None:
        model = build_model(3, 2, 0.0, "zero")
        with pytest.raises(ConfigError):
            build_initial_state(model, StateKind.SINGLET_COVERING_WITH_HOLES, holes=[(1, 0)])

    def test_non_neighbour_singlet_raises(self) -> None:
        model = build_model(2, 2, 0.0, "zero")
        with pytest.raises(ValueError, match="neighbours"):
            build_initial_state(
                model, StateKind.SINGLET_COVERING_WITH_HOLES, singlet_pairs=[[(0, 0), (1, 1)], [(1, 0), (0, 1)]]
            )

    def test_duplicate_site_raises(self) -> None:
        with pytest.raises(ValueError, match="more than once"):
            InitialStateSpec(kind=StateKind.NEEL_WITH_HOLES, hole_sites=(0,), up_sites=(0,), down_sites=())

    def test_to_dict_round_trip(self) -> None:
        model = build_model(3, 2, 0.0, "zero")
        state = build_initial_state(model, StateKind.NEEL_WITH_HOLES, holes=[(2, 1)])
        assert InitialStateSpec.from_dict(state.to_dict()) == state


class TestReferences:
    def test_pair_distance_5x5(self) -> None:
        assert expected_pair_distance(5, 5) == pytest.approx(2.65, abs=0.01)

    def test_pair_distance_small_grids(self) -> None:
        assert expected_pair_distance(1, 2) == pytest.approx(1.0)
        assert expected_pair_distance(2, 2) == pytest.approx((4 + 2 * math.sqrt(2)) / 6)

    def test_asymptotes(self) -> None:
        assert doublon_asymptote_u0(3, 3, 6) == pytest.approx(1.5)
        assert max_doublon_density(5) == pytest.approx(0.16)

    def test_free_fermion_doublon_number_relaxes_to_asymptote(self) -> None:
        """At U = 0 the late-time mean doublon number of the half-filled 3x3 Neel state is N_up N_down / L."""
        model = build_model(3, 3, 0.0, "zero")
        state = build_initial_state(model, StateKind.NEEL_WITH_HOLES)
        assert (state.Nup, state.Ndown) == (5, 4)
        series = [exact_table(model, state, float(t)).doublon().sum() for t in np.linspace(5.0, 10.0, 26)]
        assert np.mean(series) == pytest.approx(doublon_asymptote_u0(5, 4, 9), rel=0.2)

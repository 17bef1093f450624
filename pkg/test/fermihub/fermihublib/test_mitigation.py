"""Tests for the error mitigation recipes."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fermihub.fermihublib.defs import MitigationError, Spin, StateKind
from fermihub.fermihublib.mitigation import (
    MESR_REGULARISATION,
    MitigationModel,
    PostselectionFilter,
    TFLOFit,
    TwirlStats,
    acceptance_curve,
    bootstrap,
    gpr_smooth,
    mesr,
    mesr_constraints,
    mesr_objective,
    observable_group,
    postselect,
    propagate_error,
    readout_untwirl,
    shot_z_expectations,
    symmetry_average,
    symmetry_group,
    tflo_apply,
    tflo_fit,
    z_products,
)
from fermihub.fermihublib.model import LatticeSpec, build_initial_state, build_model
from fermihub.fermihublib.shots import DOUBLON, HOLON, SINGLE_DOWN, SINGLE_UP, ShotTable

H, U, D, DD = HOLON, SINGLE_UP, SINGLE_DOWN, DOUBLON

# Small enumerable MESR instances: +-1 values of two observables on 4 to 10 shots.
shot_signs = st.lists(st.lists(st.sampled_from([-1.0, 1.0]), min_size=2, max_size=2), min_size=4, max_size=10)
multipliers = st.lists(st.floats(min_value=-0.8, max_value=0.8), min_size=2, max_size=2)


def tilted(values: np.ndarray, lambdas: np.ndarray) -> np.ndarray:
    weights = np.exp(values @ lambdas)
    return np.asarray(weights / weights.sum())


def make_shots(lattice: LatticeSpec, rows: list[list[int]]) -> ShotTable:
    bits = np.zeros((len(rows), lattice.n_qubits), dtype=np.uint8)
    for k, row in enumerate(rows):
        for site, code in enumerate(row):
            bits[k, lattice.mode_index(site, Spin.UP)] = code & 1
            bits[k, lattice.mode_index(site, Spin.DOWN)] = code >> 1
    return ShotTable(bits=bits)


@pytest.fixture
def square() -> LatticeSpec:
    return LatticeSpec(Lx=2, Ly=2)


class TestPostselection:
    def test_filter_validation(self) -> None:
        with pytest.raises(ValueError):
            PostselectionFilter(1, 1, max_hamming_err=-1)
        with pytest.raises(ValueError):
            PostselectionFilter(1, 1, afm_interval=(0.5, -0.5))

    def test_particle_number(self, square) -> None:
        shots = make_shots(square, [[U, H, D, U], [U, U, D, U]])
        kept, acceptance = postselect(shots, PostselectionFilter(2, 1), square)
        assert acceptance == 0.5
        np.testing.assert_array_equal(kept.bits, shots.bits[:1])
        _, relaxed = postselect(shots, PostselectionFilter(2, 1, max_hamming_err=1), square)
        assert relaxed == 1.0

    def test_doublon_and_afm(self, square) -> None:
        shots = make_shots(square, [[U, D, D, U], [H, U, D, DD]])
        _, no_doublons = postselect(shots, PostselectionFilter(2, 2, doublon_range=(0,)), square)
        assert no_doublons == 0.5
        _, ordered = postselect(shots, PostselectionFilter(2, 2, afm_interval=(-1.0, -0.5)), square)
        assert ordered == 0.5
        kept, none = postselect(shots, PostselectionFilter(2, 2, afm_interval=(0.0, 1.0)), square)
        assert none == 0.0
        assert kept.n_shots == 0

    def test_acceptance_curve_is_monotone(self, square) -> None:
        shots = make_shots(square, [[U, H, D, U], [U, U, D, U], [DD, DD, DD, DD]])
        curve = acceptance_curve(shots, 2, 1, square, max_errors=range(4))
        assert curve["accepted"].tolist() == [1, 2, 2, 3]
        assert curve["acceptance"].is_monotonic_increasing


class TestUntwirl:
    def test_masks_are_consumed_once(self) -> None:
        shots = ShotTable(bits=np.array([[1, 0, 1]]), masks=np.array([[1, 1, 0]]))
        untwirled = readout_untwirl(shots)
        assert untwirled.bits.tolist() == [[0, 1, 1]]
        assert untwirled.mask_consumed
        assert readout_untwirl(untwirled) is untwirled
        restored = readout_untwirl(untwirled, force=True)
        assert restored.bits.tolist() == [[1, 0, 1]]
        assert not restored.mask_consumed

    def test_no_masks(self) -> None:
        with pytest.raises(MitigationError):
            readout_untwirl(ShotTable(bits=np.zeros((1, 2))))


class TestZStrings:
    def test_products(self) -> None:
        values = z_products(np.array([[0, 1], [1, 1]]), [(0,), (0, 1), ()])
        assert values.tolist() == [[1, -1, 1], [-1, 1, 1]]

    def test_expectations(self) -> None:
        shots = ShotTable(bits=np.array([[0, 1], [1, 1]]))
        mean, err = shot_z_expectations(shots, [(0,), (1,)])
        np.testing.assert_allclose(mean, [0.0, -1.0])
        assert err[0] == pytest.approx(1.0)
        assert err[1] == 0.0
        weighted, _ = shot_z_expectations(shots, [(0,)], weights=np.array([1.0, 0.0]))
        assert weighted[0] == pytest.approx(1.0)

    def test_no_shots(self) -> None:
        with pytest.raises(MitigationError):
            shot_z_expectations(ShotTable(bits=np.zeros((0, 2))), [(0,)])

    def test_groups(self, square) -> None:
        up0 = square.mode_index(0, Spin.UP)
        assert observable_group((up0,), square) == "w1-same"
        assert observable_group((up0, square.mode_index(0, Spin.DOWN)), square) == "w2-same"
        assert observable_group((up0, square.mode_index(1, Spin.UP)), square) == "w2-cross"


def synthetic_series(m: float, c: float, b: float, error: float = 0.01) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Noisy series satisfying ``exact = m * noisy + c * t + b`` exactly."""
    t = np.linspace(0.1, 1.0, 8)
    noisy_rows, exact_rows = [], []
    for k, freq in enumerate((1.0, 2.0, 3.0)):
        exact = np.cos(freq * t)
        noisy = (exact - c * t - b) / m
        for ti, e, n in zip(t, exact, noisy):
            exact_rows.append({"observable": f"Z{k}", "t": ti, "value": e})
            noisy_rows.append({"observable": f"Z{k}", "t": ti, "value": n, "error": error})
    return pd.DataFrame(noisy_rows), pd.DataFrame(exact_rows)


class TestTFLO:
    @pytest.mark.parametrize("ansatz,c", [("linear", 0.0), ("linear_linear", 0.2)])
    def test_recovers_coefficients(self, ansatz: str, c: float) -> None:
        noisy, exact = synthetic_series(2.0, c, -0.04)
        fits = tflo_fit(noisy, exact, ansatz)
        assert sorted(fits) == ["Z0", "Z1", "Z2"]
        for fit in fits.values():
            assert fit.m == pytest.approx(2.0, abs=1e-4)
            assert fit.c == pytest.approx(c, abs=1e-4)
            assert fit.b == pytest.approx(-0.04, abs=1e-4)
            assert fit.residual < 1e-4

    def test_low_snr_falls_back_to_broad_prior(self) -> None:
        noisy, exact = synthetic_series(2.0, 0.0, 0.0, error=10.0)
        fits = tflo_fit(noisy, exact, "linear")
        assert all(fit.prior_mean == (1.0, 0.0) for fit in fits.values())

    def test_too_few_points(self) -> None:
        noisy, exact = synthetic_series(2.0, 0.0, 0.0)
        with pytest.raises(MitigationError, match="at least 3"):
            tflo_fit(noisy.head(2), exact, "linear")

    def test_no_overlap(self) -> None:
        noisy, exact = synthetic_series(2.0, 0.0, 0.0)
        with pytest.raises(MitigationError):
            tflo_fit(noisy.assign(t=noisy["t"] + 5.0), exact)

    def test_apply_and_clamp(self) -> None:
        fit = TFLOFit(m=2.0, b=0.1, c=0.5)
        assert tflo_apply(fit, 0.2, 0.4) == (pytest.approx(0.7), False)
        assert tflo_apply(fit, 0.6, 0.4) == (1.0, True)
        assert tflo_apply(fit, 0.6, 0.4, clamp=False)[0] == pytest.approx(1.5)
        with pytest.raises(MitigationError):
            tflo_apply({"Z0": fit}, 0.1, 0.1, observable="Z1")

    def test_fit_validation_and_dict(self) -> None:
        with pytest.raises(ValueError):
            TFLOFit(m=float("nan"), b=0.0)
        fit = TFLOFit(m=1.5, b=0.1, c=0.2, ansatz="linear_linear", group="w1-same", prior_mean=(1.0, 0.0, 0.0))
        assert TFLOFit.from_dict(fit.to_dict()) == fit


class TestMESR:
    def test_hits_feasible_target(self) -> None:
        values = np.array([[1.0], [1.0], [-1.0]])
        result = mesr(values, np.array([0.0]), c_reg=0.0)
        assert result.converged
        assert result.expectations(values)[0] == pytest.approx(0.0, abs=1e-4)
        assert result.lambdas[0] == pytest.approx(-math.log(2) / 2, abs=1e-3)
        assert result.n_eff == pytest.approx(8 / 3, abs=1e-3)

    def test_zero_multipliers_at_the_sample_mean(self) -> None:
        values = np.array([[1.0, -1.0], [-1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
        result = mesr(values, values.mean(axis=0))
        np.testing.assert_allclose(result.lambdas, 0.0, atol=1e-6)
        assert result.n_eff == pytest.approx(4.0)
        assert result.c_reg == MESR_REGULARISATION

    def test_input_validation(self) -> None:
        with pytest.raises(ValueError):
            mesr(np.ones((3, 2)), np.zeros(3))
        with pytest.raises(ValueError):
            mesr(np.ones((3, 1)), np.array([np.nan]))

    def test_constraint_set(self, square) -> None:
        constraints = mesr_constraints(square)
        assert len(constraints) == 8 + 2 * len(square.edges) + 4
        assert len(set(constraints)) == len(constraints)
        assert all(list(c) == sorted(c) for c in constraints)

    @given(shot_signs, multipliers, multipliers)
    @settings(max_examples=30, deadline=None)
    def test_objective_gap_is_relative_entropy(self, signs, optimum, other) -> None:
        """The objective above its minimum is the relative entropy of the tilted distributions."""
        values = np.array(signs)
        best, trial = np.array(optimum), np.array(other)
        p_best, p_other = tilted(values, best), tilted(values, trial)
        targets = p_best @ values
        floor = mesr_objective(best, values, targets, 0.0)
        relative_entropy = float(np.sum(p_best * np.log(p_best / p_other)))
        assert mesr_objective(trial, values, targets, 0.0) - floor == pytest.approx(relative_entropy, abs=1e-10)

        result = mesr(values, targets, c_reg=0.0, tol=1e-10)
        assert result.objective == pytest.approx(floor, abs=1e-8)
        np.testing.assert_allclose(result.expectations(values), targets, atol=1e-4)

    @given(shot_signs, multipliers)
    @settings(max_examples=30, deadline=None)
    def test_hessian_is_tilted_covariance(self, signs, point) -> None:
        values = np.array(signs)
        lam = np.array(point)
        targets = values.mean(axis=0)
        h = 1e-4
        steps = np.eye(len(lam)) * h

        def objective(shift: np.ndarray) -> float:
            return mesr_objective(lam + shift, values, targets, 0.0)

        hessian = np.array(
            [
                [
                    (objective(a + b) - objective(a - b) - objective(b - a) + objective(-a - b)) / (4 * h * h)
                    for b in steps
                ]
                for a in steps
            ]
        )
        p = tilted(values, lam)
        centred = values - p @ values
        covariance = centred.T @ (p[:, None] * centred)
        np.testing.assert_allclose(hessian, covariance, atol=1e-5)
        assert np.linalg.eigvalsh(covariance).min() >= -1e-12


class TestGPR:
    def test_interpolates_precise_data(self) -> None:
        t = np.linspace(0, 1, 6)
        result = gpr_smooth(t, np.sin(t), np.full(6, 1e-3))
        np.testing.assert_allclose(result.mean, np.sin(t), atol=1e-2)
        assert np.all(result.std < 1e-2)
        assert np.all(result.lower <= result.upper)

    def test_evaluation_grid(self) -> None:
        result = gpr_smooth([0.0, 0.5, 1.0], [0.1, 0.2, 0.3], [0.01] * 3, t_eval=np.linspace(0, 1, 11))
        assert len(result.mean) == 11

    def test_invalid_input(self) -> None:
        with pytest.raises(ValueError):
            gpr_smooth([0.0], [0.1], [0.01])
        with pytest.raises(ValueError):
            gpr_smooth([0.0, 1.0], [0.1, np.nan], [0.01, 0.01])


class TestSymmetry:
    def test_neel_group(self, square) -> None:
        model = build_model(2, 2, 4.0, "zero")
        state = build_initial_state(model, StateKind.NEEL_WITH_HOLES)
        group = symmetry_group(square, state)
        assert len(group) == 8
        assert tuple(range(8)) in group

    def test_hole_breaks_symmetry(self, square) -> None:
        model = build_model(2, 2, 4.0, "zero")
        state = build_initial_state(model, StateKind.NEEL_WITH_HOLES, holes=[(0, 0)])
        assert len(symmetry_group(square, state)) == 2

    def test_orbit_average(self, square) -> None:
        model = build_model(2, 2, 4.0, "zero")
        state = build_initial_state(model, StateKind.NEEL_WITH_HOLES)
        values = {(m,): float(m) for m in range(8)}
        averaged, orbits = symmetry_average(values, square, state)
        assert len(orbits) == 2
        # up on even-parity sites and down on odd-parity sites
        assert averaged[(0,)] == pytest.approx(np.mean([0, 2, 5, 7]))
        assert averaged[(1,)] == pytest.approx(np.mean([1, 3, 4, 6]))


class TestErrors:
    def test_propagate_error(self) -> None:
        stats = TwirlStats(means=np.array([0.0, 1.0]), variances=np.zeros(2), n_shots=10)
        assert propagate_error(stats) == pytest.approx(0.5)
        with_within = TwirlStats(means=np.array([0.5, 0.5]), variances=np.array([1.0, 1.0]), n_shots=10)
        assert propagate_error(with_within) == pytest.approx(math.sqrt(2 / 40))

    def test_twirl_stats_validation(self) -> None:
        with pytest.raises(ValueError):
            TwirlStats(means=np.array([0.0]), variances=np.array([0.0]), n_shots=1)
        stats = TwirlStats.from_samples([np.array([1.0, -1.0]), np.array([1.0, 1.0, 1.0])])
        assert stats.n_shots == 2
        assert stats.variances.tolist() == [2.0, 0.0]

    def test_bootstrap(self) -> None:
        fixed = [ShotTable(bits=np.ones((5, 2))), ShotTable(bits=np.ones((5, 2)))]
        np.testing.assert_allclose(bootstrap(fixed, lambda s: s.bits.mean(axis=0), n_resamples=20), 0.0)
        varied = [ShotTable(bits=np.array([[0], [1]] * 5)), ShotTable(bits=np.array([[1], [1]] * 5))]
        assert bootstrap(varied, lambda s: s.bits.mean(), n_resamples=50, seed=3) > 0
        with pytest.raises(ValueError):
            bootstrap(fixed, lambda s: 0.0, n_resamples=5)
        with pytest.raises(MitigationError):
            bootstrap([], lambda s: 0.0)


class TestMitigationModel:
    def test_file_round_trip(self, tmp_path: Path) -> None:
        model = MitigationModel(
            recipe="tflo+mesr",
            tflo={"Z0": TFLOFit(m=1.2, b=0.0)},
            mesr_constraints=[(0,), (0, 4)],
            mesr_lambdas=[0.1, -0.2],
        )
        path = tmp_path / "model.json"
        model.save_to_file(path)
        loaded = MitigationModel.load_from_file(path)
        assert loaded.recipe == "tflo+mesr"
        assert loaded.tflo == model.tflo
        assert loaded.mesr_constraints == [(0,), (0, 4)]
        assert loaded.mesr_lambdas == [0.1, -0.2]

    def test_malformed_fit_skipped(self) -> None:
        loaded = MitigationModel.from_dict({"tflo": {"Z0": {"m": 1.0, "b": 0.0}, "Z1": {"b": 0.0}}})
        assert list(loaded.tflo) == ["Z0"]

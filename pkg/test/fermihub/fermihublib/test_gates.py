"""Tests for the gates module."""

from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import unitary_group

from fermihub.fermihublib.gates import (
    CZ_MATRIX,
    FSWAP_MATRIX,
    H,
    I2,
    PAULIS,
    X,
    GateName,
    GateOp,
    fsim,
    native_sequence,
    onsite,
    phased_xz,
    phased_xz_params,
    rz,
    single_particle,
    twirl_partner,
    unitary,
)

angles = st.floats(min_value=-np.pi, max_value=np.pi, allow_nan=False)


def assert_equal_up_to_phase(a: np.ndarray, b: np.ndarray, atol: float = 1e-9) -> None:
    idx = np.unravel_index(np.argmax(np.abs(a)), a.shape)
    assert abs(b[idx]) > atol
    phase = b[idx] / a[idx]
    assert abs(abs(phase) - 1) < 1e-9
    np.testing.assert_allclose(a * phase, b, atol=atol)


def compose(op: GateOp) -> np.ndarray:
    """Multiply the micro operations of a two-qubit gate back into a 4x4 matrix."""
    a, b = op.qubits
    total = np.eye(4, dtype=complex)
    for micro in native_sequence(op):
        if micro[0] == "cz":
            step = CZ_MATRIX
        elif micro[1] == a:
            step = np.kron(micro[2], I2)
        else:
            assert micro[1] == b
            step = np.kron(I2, micro[2])
        total = step @ total
    return total


class TestGateOp:
    def test_rejects_three_qubits(self) -> None:
        with pytest.raises(ValueError, match="1 or 2 qubits"):
            GateOp(GateName.CZ, (0, 1, 2))

    def test_rejects_repeated_qubit(self) -> None:
        with pytest.raises(ValueError, match="distinct"):
            GateOp(GateName.FSWAP, (3, 3))

    def test_dict_round_trip_keeps_role(self) -> None:
        op = GateOp(GateName.HOP_FSWAP, (4, 5), (0.25,), role="hop_fswap")
        data = op.to_dict()
        assert data["name"] == "HopFswapMerged"
        assert GateOp.from_dict(data) == op

    def test_role_omitted_when_empty(self) -> None:
        assert "role" not in GateOp(GateName.CZ, (0, 1)).to_dict()

    def test_measure_has_no_unitary(self) -> None:
        with pytest.raises(ValueError):
            unitary(GateOp(GateName.MEASURE, (0,)))
        with pytest.raises(ValueError):
            native_sequence(GateOp(GateName.MEASURE, (0,)))


class TestUnitaries:
    @pytest.mark.parametrize("theta", [0.0, 0.3, -1.1, np.pi / 2])
    def test_fsim_is_unitary_and_number_conserving(self, theta: float) -> None:
        u = fsim(theta)
        np.testing.assert_allclose(u.conj().T @ u, np.eye(4), atol=1e-12)
        assert u[0, 0] == 1 and u[3, 3] == 1
        assert u[0, 1] == 0 and u[0, 2] == 0

    def test_fswap_swaps_and_signs_double_occupation(self) -> None:
        assert FSWAP_MATRIX[1, 2] == 1 and FSWAP_MATRIX[2, 1] == 1
        assert FSWAP_MATRIX[3, 3] == -1

    def test_hop_fswap_is_fswap_after_hop(self) -> None:
        op = GateOp(GateName.HOP_FSWAP, (0, 1), (0.4,))
        np.testing.assert_allclose(unitary(op), FSWAP_MATRIX @ fsim(0.4))

    def test_onsite_phase_only_on_double_occupation(self) -> None:
        np.testing.assert_allclose(onsite(0.7), np.diag([1, 1, 1, np.exp(-0.7j)]))

    def test_phased_xz_with_unit_x_is_pauli_x(self) -> None:
        np.testing.assert_allclose(phased_xz(1.0, 0.0, 0.0), X, atol=1e-12)


class TestNativeSequence:
    @given(theta=angles)
    @settings(max_examples=25, deadline=None)
    def test_fsim_decomposition(self, theta: float) -> None:
        op = GateOp(GateName.FSIM, (2, 5), (theta,))
        assert_equal_up_to_phase(unitary(op), compose(op))

    @given(theta=angles)
    @settings(max_examples=25, deadline=None)
    def test_hop_fswap_decomposition(self, theta: float) -> None:
        op = GateOp(GateName.HOP_FSWAP, (1, 0), (theta,))
        assert_equal_up_to_phase(unitary(op), compose(op))

    @given(phi=angles)
    @settings(max_examples=25, deadline=None)
    def test_onsite_decomposition(self, phi: float) -> None:
        op = GateOp(GateName.ONSITE, (0, 7), (phi,))
        assert_equal_up_to_phase(unitary(op), compose(op))

    def test_fswap_decomposition(self) -> None:
        op = GateOp(GateName.FSWAP, (3, 4))
        assert_equal_up_to_phase(unitary(op), compose(op))

    def test_rz_pair_decomposition(self) -> None:
        op = GateOp(GateName.RZ_PAIR, (0, 1), (0.9,))
        assert_equal_up_to_phase(unitary(op), compose(op))

    @pytest.mark.parametrize("name", [GateName.FSIM, GateName.FSWAP, GateName.HOP_FSWAP])
    def test_hopping_gates_use_two_cz(self, name: GateName) -> None:
        params = () if name is GateName.FSWAP else (0.3,)
        ops = native_sequence(GateOp(name, (0, 1), params))
        assert sum(1 for op in ops if op[0] == "cz") == 2

    def test_trivial_onsite_needs_no_cz(self) -> None:
        ops = native_sequence(GateOp(GateName.ONSITE, (0, 1), (0.0,)))
        assert all(op[0] == "u" for op in ops)

    def test_cz_and_phased_xz_pass_through(self) -> None:
        assert native_sequence(GateOp(GateName.CZ, (2, 3))) == [("cz", 2, 3)]
        (op,) = native_sequence(GateOp(GateName.PHASED_XZ, (1,), (0.5, 0.25, 0.0)))
        assert op[0] == "u" and op[1] == 1
        np.testing.assert_allclose(op[2], phased_xz(0.5, 0.25, 0.0))


class TestPhasedXZParams:
    @pytest.mark.parametrize("seed", range(20))
    def test_random_unitaries(self, seed: int) -> None:
        u = unitary_group.rvs(2, random_state=seed)
        params = phased_xz_params(u)
        assert params is not None
        assert_equal_up_to_phase(u, phased_xz(*params))

    @pytest.mark.parametrize("name", ["X", "Y", "Z"])
    def test_paulis(self, name: str) -> None:
        params = phased_xz_params(PAULIS[name])
        assert params is not None
        assert_equal_up_to_phase(PAULIS[name], phased_xz(*params))

    def test_hadamard(self) -> None:
        params = phased_xz_params(H)
        assert params is not None
        assert_equal_up_to_phase(H, phased_xz(*params))

    def test_diagonal_has_no_x_part(self) -> None:
        params = phased_xz_params(rz(0.3))
        assert params is not None
        assert params[0] == pytest.approx(0.0)
        assert_equal_up_to_phase(rz(0.3), phased_xz(*params))

    def test_identity_up_to_phase_is_none(self) -> None:
        assert phased_xz_params(I2) is None
        assert phased_xz_params(np.exp(0.8j) * I2) is None


class TestSingleParticle:
    @pytest.mark.parametrize(
        "op",
        [
            GateOp(GateName.FSIM, (0, 1), (0.35,)),
            GateOp(GateName.FSWAP, (0, 1)),
            GateOp(GateName.HOP_FSWAP, (0, 1), (-0.6,)),
        ],
    )
    def test_matches_one_particle_block(self, op: GateOp) -> None:
        u = single_particle(op)
        assert u is not None
        # mode 0 sits on the first (most significant) qubit: |10> is index 2, |01> is index 1
        block = unitary(op)[np.ix_([2, 1], [2, 1])]
        np.testing.assert_allclose(u, block, atol=1e-12)

    def test_fswap_is_exchange(self) -> None:
        u = single_particle(GateOp(GateName.FSWAP, (0, 1)))
        np.testing.assert_allclose(u, X)

    def test_onsite_without_interaction_is_trivial(self) -> None:
        assert single_particle(GateOp(GateName.ONSITE, (0, 1), (0.0,))) is None

    def test_onsite_with_interaction_is_not_gaussian(self) -> None:
        with pytest.raises(ValueError, match="not a free-fermion gate"):
            single_particle(GateOp(GateName.ONSITE, (0, 1), (0.5,)))

    def test_cz_is_not_gaussian(self) -> None:
        with pytest.raises(ValueError):
            single_particle(GateOp(GateName.CZ, (0, 1)))


@pytest.mark.parametrize("pa,pb", list(itertools.product("IXYZ", repeat=2)))
def test_twirl_partner_restores_cz(pa: str, pb: str) -> None:
    qa, qb = twirl_partner(pa, pb)
    product = np.kron(qa, qb) @ CZ_MATRIX @ np.kron(PAULIS[pa], PAULIS[pb])
    assert_equal_up_to_phase(CZ_MATRIX, product)

"""
Gate vocabulary, unitaries and native (CZ + PhasedXZ) decompositions.

Two-qubit matrices act on ``qubits[0] (x) qubits[1]`` with ``qubits[0]`` as the most significant
bit. Bit 1 is an occupied mode, so ``Z = 1 - 2n``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from beartype.typing import Any, Mapping, Optional, Union

_EPS = 1e-12


class GateName(str, Enum):
    CZ = "CZ"
    PHASED_XZ = "PhasedXZ"
    FSIM = "Fsim"
    FSWAP = "FSWAP"
    HOP_FSWAP = "HopFswapMerged"
    RZ_PAIR = "RzPair"
    ONSITE = "Onsite"
    MEASURE = "Measure"


# Gates that exchange the fermionic modes held by their two qubits.
SWAPPING_GATES = frozenset({GateName.FSWAP, GateName.HOP_FSWAP})


@dataclass(frozen=True)
class GateOp:
    """
    One gate application.

    Params: ``Fsim``/``HopFswapMerged``: (theta,) of the hopping factor ``exp(-i theta/2 (XX+YY))``;
    ``Onsite``: (phi,) for ``exp(-i phi n_a n_b)``; ``RzPair``: (angle,); ``PhasedXZ``: (x, z, a)
    exponents of ``Z^z Z^a X^x Z^-a``.
    """

    name: GateName
    qubits: tuple[int, ...]
    params: tuple[float, ...] = ()
    role: str = ""

    def __post_init__(self) -> None:
        if not 1 <= len(self.qubits) <= 2:
            raise ValueError(f"{self.name.value} acts on 1 or 2 qubits, got {self.qubits}")
        if len(set(self.qubits)) != len(self.qubits):
            raise ValueError(f"{self.name.value} needs distinct qubits, got {self.qubits}")

    @property
    def is_two_qubit(self) -> bool:
        return len(self.qubits) == 2

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {"name": self.name.value, "qubits": list(self.qubits), "params": list(self.params)}
        if self.role:
            data["role"] = self.role
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "GateOp":
        return cls(
            name=GateName(data["name"]),
            qubits=tuple(int(q) for q in data["qubits"]),
            params=tuple(float(p) for p in data.get("params", [])),
            role=str(data.get("role", "")),
        )


I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
PAULIS = {"I": I2, "X": X, "Y": Y, "Z": Z}

CZ_MATRIX = np.diag([1, 1, 1, -1]).astype(complex)
FSWAP_MATRIX = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, -1]], dtype=complex)


def rx(angle: float) -> np.ndarray:
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


def ry(angle: float) -> np.ndarray:
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rz(angle: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * angle), np.exp(0.5j * angle)])


def phased_xz(x: float, z: float, a: float) -> np.ndarray:
    def zpow(t: float) -> np.ndarray:
        return np.diag([1.0, np.exp(1j * np.pi * t)])

    xpow = np.exp(0.5j * np.pi * x) * rx(np.pi * x)
    return zpow(z + a) @ xpow @ zpow(-a)


def fsim(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[1, 0, 0, 0], [0, c, -1j * s, 0], [0, -1j * s, c, 0], [0, 0, 0, 1]], dtype=complex)


def onsite(phi: float) -> np.ndarray:
    return np.diag([1, 1, 1, np.exp(-1j * phi)])


def unitary(op: GateOp) -> np.ndarray:
    """Matrix of a gate on its own qubits."""
    name = op.name
    if name is GateName.PHASED_XZ:
        return phased_xz(*op.params)
    if name is GateName.CZ:
        return CZ_MATRIX
    if name is GateName.FSIM:
        return fsim(op.params[0])
    if name is GateName.FSWAP:
        return FSWAP_MATRIX
    if name is GateName.HOP_FSWAP:
        return FSWAP_MATRIX @ fsim(op.params[0])
    if name is GateName.RZ_PAIR:
        return np.kron(rz(op.params[0]), rz(op.params[0]))
    if name is GateName.ONSITE:
        return onsite(op.params[0])
    raise ValueError(f"{name.value} has no unitary")


def single_particle(op: GateOp) -> Optional[np.ndarray]:
    """
    Single-particle matrix ``u`` of a number-conserving Gaussian gate, with
    ``G c+_k G^dagger = sum_i u[i, k] c+_i`` over the gate's two (Jordan-Wigner adjacent) modes.

    Returns None for gates that act trivially on the single-particle space (onsite at phi = 0).
    """
    if op.name is GateName.FSIM:
        theta = op.params[0]
        return np.array([[np.cos(theta), -1j * np.sin(theta)], [-1j * np.sin(theta), np.cos(theta)]])
    if op.name is GateName.FSWAP:
        return X.copy()
    if op.name is GateName.HOP_FSWAP:
        theta = op.params[0]
        hop = np.array([[np.cos(theta), -1j * np.sin(theta)], [-1j * np.sin(theta), np.cos(theta)]])
        return X @ hop
    if op.name is GateName.ONSITE and abs(np.exp(-1j * op.params[0]) - 1) < 1e-12:
        return None
    raise ValueError(f"{op.name.value} with params {op.params} is not a free-fermion gate")


def phased_xz_params(u: np.ndarray) -> Optional[tuple[float, float, float]]:
    """
    Exponents ``(x, z, a)`` with ``phased_xz(x, z, a)`` equal to ``u`` up to global phase.

    Returns None when ``u`` is the identity up to phase.
    """
    if abs(u[0, 1]) < _EPS and abs(u[1, 0]) < _EPS and abs(u[0, 0] - u[1, 1]) < _EPS:
        return None
    b = 2 * np.arctan2(abs(u[1, 0]), abs(u[0, 0]))
    if abs(u[0, 0]) < _EPS:
        total = diff = float(np.angle(u[1, 0]) - np.angle(-u[0, 1]))
    elif abs(u[1, 0]) < _EPS:
        total = diff = float(np.angle(u[1, 1]) - np.angle(u[0, 0]))
    else:
        total = float(np.angle(u[1, 1]) - np.angle(u[0, 0]))
        diff = float(np.angle(u[1, 0]) - np.angle(-u[0, 1]))
    if abs(u[0, 0]) < _EPS or abs(u[1, 0]) < _EPS:
        a1, a2 = total, 0.0
    else:
        a1, a2 = (total + diff) / 2, (total - diff) / 2
    # Rz(a1) Ry(b) Rz(a2) == Rz(a1 + pi/2) Rx(b) Rz(a2 - pi/2)
    lam1, lam2 = a1 + np.pi / 2, a2 - np.pi / 2
    return float(b / np.pi), float((lam1 + lam2) / np.pi), float(-lam2 / np.pi)


# Micro operations produced by native decomposition: ("u", qubit, matrix) or ("cz", a, b).
MicroOp = Union[tuple[str, int, np.ndarray], tuple[str, int, int]]


def _is_diagonal(u: np.ndarray) -> bool:
    return bool(abs(u[0, 1]) < _EPS and abs(u[1, 0]) < _EPS)


def _cz_sandwich(
    a: int,
    b: int,
    pre: tuple[np.ndarray, np.ndarray],
    mid: tuple[np.ndarray, np.ndarray],
    post: tuple[np.ndarray, np.ndarray],
) -> list[MicroOp]:
    """``post . CZ . mid . CZ . pre``; the CZ pair cancels when the middle is diagonal."""
    if _is_diagonal(mid[0]) and _is_diagonal(mid[1]):
        return [("u", a, post[0] @ mid[0] @ pre[0]), ("u", b, post[1] @ mid[1] @ pre[1])]
    return [
        ("u", a, pre[0]),
        ("u", b, pre[1]),
        ("cz", a, b),
        ("u", a, mid[0]),
        ("u", b, mid[1]),
        ("cz", a, b),
        ("u", a, post[0]),
        ("u", b, post[1]),
    ]


def _fsim_sequence(a: int, b: int, theta: float) -> list[MicroOp]:
    pre = (ry(-np.pi / 2) @ rx(-np.pi / 2), rx(-np.pi / 2))
    mid = (rx(-theta), rx(theta))
    post = (rx(np.pi / 2) @ ry(np.pi / 2), rx(np.pi / 2))
    return _cz_sandwich(a, b, pre, mid, post)


def native_sequence(op: GateOp) -> list[MicroOp]:
    """Decompose one gate into single-qubit matrices and CZs."""
    q = op.qubits
    if op.name is GateName.PHASED_XZ:
        return [("u", q[0], unitary(op))]
    if op.name is GateName.CZ:
        return [("cz", q[0], q[1])]
    if op.name is GateName.FSIM:
        return _fsim_sequence(q[0], q[1], op.params[0])
    if op.name is GateName.FSWAP:
        return _fsim_sequence(q[0], q[1], np.pi / 2) + [("u", q[0], rz(np.pi / 2)), ("u", q[1], rz(np.pi / 2))]
    if op.name is GateName.HOP_FSWAP:
        theta = op.params[0] + np.pi / 2
        return _fsim_sequence(q[0], q[1], theta) + [("u", q[0], rz(np.pi / 2)), ("u", q[1], rz(np.pi / 2))]
    if op.name is GateName.RZ_PAIR:
        return [("u", q[0], rz(op.params[0])), ("u", q[1], rz(op.params[0]))]
    if op.name is GateName.ONSITE:
        phi = op.params[0]
        # exp(-i phi n n) = Rz(-phi/2) (x) Rz(-phi/2) . exp(-i phi/4 ZZ), up to phase
        pre = (ry(np.pi / 2), I2)
        mid = (rx(phi / 2), I2)
        post = (rz(-phi / 2) @ ry(-np.pi / 2), rz(-phi / 2))
        return _cz_sandwich(q[0], q[1], pre, mid, post)
    raise ValueError(f"{op.name.value} cannot be decomposed")


def twirl_partner(pa: str, pb: str) -> tuple[np.ndarray, np.ndarray]:
    """Paulis ``(Qa, Qb)`` with ``(Qa (x) Qb) CZ (Pa (x) Pb) = CZ`` up to phase."""
    qa = PAULIS[pa] @ (Z if pb in ("X", "Y") else I2)
    qb = PAULIS[pb] @ (Z if pa in ("X", "Y") else I2)
    return qa, qb

"""
Fermionic linear optics: exact non-interacting dynamics.

Conventions: a propagator ``R`` satisfies ``U c+_a U^dagger = sum_i R[i, a] c+_i``, so the one-body
matrix ``G[i, j] = <c+_i c_j>`` evolves as ``R* G0 R^T`` and occupied-mode densities are
``sum_a |R[i, a]|^2``. Singlet coverings are not Gaussian; their correlators add the exact
four-mode block correction to Wick's theorem and their amplitudes sum over the singlet branches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cache
from itertools import combinations

import numpy as np
import scipy.linalg
from beartype.typing import Literal, Optional, Sequence
from loguru import logger

from fermihub.fermihublib.circuits import CircuitIR, TrotterPlan, build_trotter_circuit
from fermihub.fermihublib.defs import MAX_SINGLETS, CapacityError, Spin
from fermihub.fermihublib.gates import single_particle
from fermihub.fermihublib.model import InitialStateSpec, LatticeSpec, ModelSpec, hopping_matrix
from fermihub.fermihublib.shots import ShotTable

# Largest sector enumerated exactly for collision probabilities and normalisation checks.
MAX_ENUMERATION = 10**7

_SAMPLE_CHUNK = 1024


@dataclass(frozen=True)
class Propagator:
    """Single-particle propagators of the two spin sectors (``L`` x ``L`` each)."""

    up: np.ndarray
    down: np.ndarray
    t: float
    mode: str = "continuous"

    @property
    def L(self) -> int:
        return int(self.up.shape[0])

    @property
    def full(self) -> np.ndarray:
        return scipy.linalg.block_diag(self.up, self.down)

    def sector(self, spin: Spin) -> np.ndarray:
        return self.up if spin is Spin.UP else self.down

    def unitarity_error(self) -> float:
        eye = np.eye(self.L)
        return float(max(np.abs(m.conj().T @ m - eye).max() for m in (self.up, self.down)))


@dataclass(frozen=True)
class FLOInitial:
    """
    Initial state for the FLO engine.

    ``branches`` lists ``(amplitude, up_modes, down_modes)`` with ascending modes and the
    reordering sign folded into the amplitude; a Slater determinant has exactly one branch.
    """

    L: int
    up_modes: tuple[int, ...]
    down_modes: tuple[int, ...]
    singlets: tuple[tuple[int, int, int, int], ...]
    branches: tuple[tuple[float, tuple[int, ...], tuple[int, ...]], ...]

    @classmethod
    def from_state(cls, lattice: LatticeSpec, state: InitialStateSpec) -> "FLOInitial":
        if len(state.singlet_pairs) > MAX_SINGLETS:
            raise CapacityError(f"{len(state.singlet_pairs)} singlets exceed the limit of {MAX_SINGLETS}")
        up, down = state.occupied_modes(lattice)
        singlets = []
        for a, b in state.singlet_pairs:
            modes = sorted(lattice.mode_index(s, spin) for spin in Spin for s in (a, b))
            singlets.append((modes[0], modes[1], modes[2], modes[3]))
        return cls(
            L=lattice.L,
            up_modes=tuple(up),
            down_modes=tuple(down),
            singlets=tuple(singlets),
            branches=tuple(state.branches(lattice)),
        )

    @classmethod
    def slater(cls, L: int, up_modes: Sequence[int], down_modes: Sequence[int]) -> "FLOInitial":
        up, down = tuple(sorted(up_modes)), tuple(sorted(down_modes))
        return cls(L=L, up_modes=up, down_modes=down, singlets=(), branches=((1.0, up, down),))

    @property
    def is_slater(self) -> bool:
        return not self.singlets

    @property
    def n_up(self) -> int:
        return len(self.branches[0][1])

    @property
    def n_down(self) -> int:
        return len(self.branches[0][2])

    def gamma0(self) -> np.ndarray:
        """Initial ``<c+_i c_j>``: ones on lonely occupied modes, one half on singlet modes."""
        diag = np.zeros(2 * self.L)
        diag[list(self.up_modes) + list(self.down_modes)] = 1.0
        for block in self.singlets:
            diag[list(block)] = 0.5
        return np.diag(diag).astype(complex)


def propagator(
    model: ModelSpec,
    t: float,
    mode: Literal["continuous", "trotter"] = "continuous",
    *,
    plan: Optional[TrotterPlan] = None,
    circuit: Optional[CircuitIR] = None,
) -> Propagator:
    """
    Single-particle propagator of the hopping part of ``model``.

    Args:
        model: Model; U is ignored.
        t: Evolution time.
        mode: ``continuous`` for ``exp(-iht)``, ``trotter`` to compose the gates of the U=0 circuit.
        plan: Trotter plan for ``trotter`` mode (defaults to ``TrotterPlan.for_time(t)``).
        circuit: Ready-built U=0 circuit for ``trotter`` mode.

    Returns:
        The propagator.
    """
    L = model.lattice.L
    if t == 0 and circuit is None:
        eye = np.eye(L, dtype=complex)
        return Propagator(up=eye, down=eye.copy(), t=0.0, mode=mode)
    if mode == "continuous":
        R = scipy.linalg.expm(-1j * t * hopping_matrix(model))
        return Propagator(up=R, down=R.copy(), t=t, mode=mode)
    if circuit is None:
        free = replace(model, U=0.0)
        circuit = build_trotter_circuit(free, None, plan if plan is not None else TrotterPlan.for_time(t))
    R = compose_circuit(circuit)
    if np.abs(R[:L, L:]).max() > 1e-12 or np.abs(R[L:, :L]).max() > 1e-12:
        raise ValueError("Circuit mixes the spin sectors")
    return Propagator(up=R[:L, :L].copy(), down=R[L:, L:].copy(), t=t, mode="trotter")


def compose_circuit(circuit: CircuitIR) -> np.ndarray:
    """Single-particle matrix of a circuit of free-fermion gates on Jordan-Wigner-adjacent qubits."""
    R = np.eye(circuit.n_qubits, dtype=complex)
    for gate in circuit.gates():
        u = single_particle(gate)
        if u is None:
            continue
        a, b = gate.qubits
        if abs(a - b) != 1:
            raise ValueError(
                f"{gate.name.value} on non-adjacent qubits {gate.qubits} has no local single-particle form"
            )
        idx = [a, b]
        R[idx, :] = u @ R[idx, :]
    return R


def one_body(prop: Propagator, initial: FLOInitial) -> np.ndarray:
    """``G[i, j] = <c+_i c_j>`` at time ``t``."""
    R = prop.full
    return R.conj() @ initial.gamma0() @ R.T


def densities(prop: Propagator, initial: FLOInitial) -> np.ndarray:
    """``<n_i(t)>`` for every mode."""
    R = prop.full
    occupation = np.real(np.diag(initial.gamma0()))
    return (np.abs(R) ** 2) @ occupation


@cache
def _singlet_block_correction() -> np.ndarray:
    """Exact minus Wick four-point function of one singlet in local order (x up, y up, x down, y down)."""
    ops = _local_annihilators(4)
    state = np.zeros(16, dtype=complex)
    state[0b1001] = state[0b0110] = 1 / math.sqrt(2)
    gamma = np.array([[state.conj() @ ops[i].conj().T @ ops[j] @ state for j in range(4)] for i in range(4)])
    exact = np.empty((4, 4, 4, 4), dtype=complex)
    for a in range(4):
        for b in range(4):
            left = ops[a].conj().T @ ops[b]
            for c in range(4):
                for d in range(4):
                    exact[a, b, c, d] = state.conj() @ left @ ops[c].conj().T @ ops[d] @ state
    eye = np.eye(4)
    wick = np.einsum("ab,cd->abcd", gamma, gamma) + np.einsum("ad,bc->abcd", gamma, eye - gamma.T)
    return exact - wick


def _local_annihilators(n: int) -> list[np.ndarray]:
    """Jordan-Wigner annihilators on ``n`` modes, mode 0 as the most significant bit."""
    lower = np.array([[0, 1], [0, 0]], dtype=complex)
    z = np.diag([1.0, -1.0]).astype(complex)
    eye = np.eye(2, dtype=complex)
    ops = []
    for k in range(n):
        factors = [z] * k + [lower] + [eye] * (n - k - 1)
        op = factors[0]
        for f in factors[1:]:
            op = np.kron(op, f)
        ops.append(op)
    return ops


def density_density(prop: Propagator, initial: FLOInitial) -> np.ndarray:
    """``<n_i n_j>`` for all mode pairs; Wick's theorem plus singlet block corrections."""
    gamma = one_body(prop, initial)
    n = np.real(np.diag(gamma))
    result = np.outer(n, n) - np.abs(gamma) ** 2 + np.diag(n)
    if initial.singlets:
        R = prop.full
        K = _singlet_block_correction()
        for block in initial.singlets:
            Rs = R[:, list(block)]
            result = result + np.real(np.einsum("ia,ib,jc,jd,abcd->ij", Rs.conj(), Rs, Rs.conj(), Rs, K))
    return np.asarray(result, dtype=float)


def z_expectations(prop: Propagator, initial: FLOInitial) -> tuple[np.ndarray, np.ndarray]:
    """All ``<Z_i>`` and ``<Z_i Z_j>`` with ``Z = 1 - 2n``."""
    n = densities(prop, initial)
    nn = density_density(prop, initial)
    z = 1 - 2 * n
    zz = 1 - 2 * n[:, None] - 2 * n[None, :] + 4 * nn
    np.fill_diagonal(zz, 1.0)
    return z, zz


def _batched_det(matrices: np.ndarray) -> np.ndarray:
    if matrices.shape[-1] == 0:
        return np.ones(matrices.shape[:-2], dtype=complex)
    return np.linalg.det(matrices)


def amplitudes(prop: Propagator, initial: FLOInitial, bits: np.ndarray) -> np.ndarray:
    """
    Output probabilities ``|<z|U|psi0>|^2`` for rows of ``bits``; shots outside the particle
    sector get zero.
    """
    bits = np.atleast_2d(np.asarray(bits, dtype=np.uint8))
    L = prop.L
    if bits.shape[1] != 2 * L:
        raise ValueError(f"Expected {2 * L} bits per shot, got {bits.shape[1]}")
    if len(initial.singlets) > MAX_SINGLETS:
        raise CapacityError(f"{len(initial.singlets)} singlets exceed the limit of {MAX_SINGLETS}")
    up_bits, down_bits = bits[:, :L], bits[:, L:]
    in_sector = (up_bits.sum(axis=1) == initial.n_up) & (down_bits.sum(axis=1) == initial.n_down)
    out = np.zeros(len(bits))
    rows = np.flatnonzero(in_sector)
    if rows.size == 0:
        return out
    up_rows = np.nonzero(up_bits[rows])[1].reshape(rows.size, initial.n_up)
    down_rows = np.nonzero(down_bits[rows])[1].reshape(rows.size, initial.n_down)
    amplitude = np.zeros(rows.size, dtype=complex)
    for coeff, up_modes, down_modes in initial.branches:
        up_cols = np.array(up_modes, dtype=np.int64)
        down_cols = np.array(down_modes, dtype=np.int64) - L
        det_up = _batched_det(prop.up[up_rows[:, :, None], up_cols[None, None, :]])
        det_down = _batched_det(prop.down[down_rows[:, :, None], down_cols[None, None, :]])
        amplitude += coeff * det_up * det_down
    out[rows] = np.abs(amplitude) ** 2
    return out


def amplitude(prop: Propagator, initial: FLOInitial, bits: np.ndarray) -> float:
    return float(amplitudes(prop, initial, np.asarray(bits)[None, :])[0])


class FLOOracle:
    """Ideal output probabilities of a free-fermion evolution, as consumed by XEB."""

    def __init__(self, prop: Propagator, initial: FLOInitial) -> None:
        self.prop = prop
        self.initial = initial

    def __call__(self, bits: np.ndarray) -> float:
        return amplitude(self.prop, self.initial, bits)

    def batch(self, bits: np.ndarray) -> np.ndarray:
        return amplitudes(self.prop, self.initial, bits)


def sector_dimension(L: int, n_up: int, n_down: int) -> int:
    return math.comb(L, n_up) * math.comb(L, n_down)


def enumerate_probabilities(prop: Propagator, initial: FLOInitial) -> tuple[np.ndarray, np.ndarray]:
    """
    Every bitstring of the particle sector with its probability.

    Returns:
        ``(bits, probs)`` with ``bits`` of shape ``(D, 2L)``.
    """
    L = prop.L
    dim = sector_dimension(L, initial.n_up, initial.n_down)
    if dim > MAX_ENUMERATION:
        raise CapacityError(f"Sector dimension {dim} exceeds the enumeration limit {MAX_ENUMERATION}")
    up_sets = np.array(list(combinations(range(L), initial.n_up)), dtype=np.int64).reshape(-1, initial.n_up)
    down_sets = np.array(list(combinations(range(L), initial.n_down)), dtype=np.int64).reshape(-1, initial.n_down)
    table = np.zeros((len(up_sets), len(down_sets)), dtype=complex)
    for coeff, up_modes, down_modes in initial.branches:
        up_cols = np.array(up_modes, dtype=np.int64)
        down_cols = np.array(down_modes, dtype=np.int64) - L
        det_up = _batched_det(prop.up[up_sets[:, :, None], up_cols[None, None, :]])
        det_down = _batched_det(prop.down[down_sets[:, :, None], down_cols[None, None, :]])
        table += coeff * np.outer(det_up, det_down)
    probs = (np.abs(table) ** 2).ravel()
    bits = np.zeros((dim, 2 * L), dtype=np.uint8)
    up_index = np.repeat(np.arange(len(up_sets)), len(down_sets))
    down_index = np.tile(np.arange(len(down_sets)), len(up_sets))
    rows = np.arange(dim)[:, None]
    bits[rows, up_sets[up_index]] = 1
    bits[rows, L + down_sets[down_index]] = 1
    return bits, probs


def _sample_sector(kernel: np.ndarray, n_shots: int, rng: np.random.Generator) -> np.ndarray:
    """Chain-rule sampling of a determinantal (Slater) distribution with one-body matrix ``kernel``."""
    L = kernel.shape[0]
    out = np.zeros((n_shots, L), dtype=np.uint8)
    for start in range(0, n_shots, _SAMPLE_CHUNK):
        size = min(_SAMPLE_CHUNK, n_shots - start)
        K = np.repeat(kernel[None, :, :], size, axis=0)
        for k in range(L):
            p = np.clip(np.real(K[:, k, k]), 0.0, 1.0)
            occupied = rng.random(size) < p
            out[start : start + size, k] = occupied
            column = K[:, :, k].copy()
            row = K[:, k, :].copy()
            denom = np.where(occupied, p, p - 1.0)
            safe = np.abs(denom) > 1e-14
            update = np.einsum("si,sj->sij", column, row) / np.where(safe, denom, 1.0)[:, None, None]
            K = K - np.where(safe[:, None, None], update, 0.0)
    return out


def sample_flo(
    prop: Propagator,
    initial: FLOInitial,
    n_shots: int,
    seed: int,
    *,
    t: Optional[float] = None,
    U: float = 0.0,
    flux: str = "zero",
) -> ShotTable:
    """
    Exact samples from a Slater-determinant evolution by sequential conditional sampling.

    Each sector is sampled independently; after fixing mode ``k`` the one-body matrix is updated by
    the rank-one Schur complement of the conditioning event.
    """
    if not initial.is_slater:
        raise ValueError("Exact FLO sampling supports Slater-determinant initial states only")
    if n_shots <= 0:
        raise ValueError(f"n_shots must be positive, got {n_shots}")
    gamma = one_body(prop, initial)
    L = prop.L
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2)]
    up = _sample_sector(gamma[:L, :L].T, n_shots, streams[0])
    down = _sample_sector(gamma[L:, L:].T, n_shots, streams[1])
    bits = np.hstack([up, down])
    logger.debug(f"Sampled {n_shots} FLO shots at t={prop.t} on {L} sites")
    return ShotTable(bits=bits, t=prop.t if t is None else t, U=U, flux=flux)


def collision_probability(
    prop: Propagator,
    initial: FLOInitial,
    method: Literal["exact_enumeration", "monte_carlo"] = "exact_enumeration",
    *,
    n_samples: int = 100_000,
    seed: int = 0,
) -> tuple[float, float]:
    """
    ``C = sum_z p(z)^2`` and its standard error (zero for exact enumeration).

    Monte Carlo averages ``p(z)`` over exact samples ``z ~ p`` and needs a Slater initial state.
    """
    if method == "exact_enumeration":
        _, probs = enumerate_probabilities(prop, initial)
        return float(np.sum(probs**2)), 0.0
    shots = sample_flo(prop, initial, n_samples, seed)
    values = amplitudes(prop, initial, shots.bits)
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(len(values)))

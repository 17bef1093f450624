"""
Exact reference engine.

This module provides:
- Dense state-vector simulation of circuits (big-endian, qubit 0 is the most significant bit)
- Sector-restricted exact dynamics ``exp(-iHt)`` via ``scipy.sparse.linalg.expm_multiply``
- Sampling, synthetic depolarizing/readout noise with trajectory sampling
- Trotter-error reports against the exact dynamics
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations

import numpy as np
import pandas as pd
from beartype.typing import Any, Iterable, Optional, Sequence, Union
from loguru import logger
from scipy import sparse
from scipy.sparse.linalg import expm_multiply

from fermihub.fermihublib.circuits import CircuitIR, TrotterPlan, TwirlRecord, build_trotter_circuit
from fermihub.fermihublib.defs import (
    MAX_DENSE_QUBITS,
    MAX_SECTOR_DIM,
    CapacityError,
    Flux,
    SectorError,
    StateKind,
)
from fermihub.fermihublib.gates import PAULIS, GateName, unitary
from fermihub.fermihublib.model import (
    InitialStateSpec,
    LatticeSpec,
    ModelSpec,
    build_initial_state,
    build_model,
    hopping_matrix,
)
from fermihub.fermihublib.shots import ShotTable, bits_from_indices

# Amplitude budget for batched trajectory simulation.
_BATCH_AMPLITUDES = 2**22

_PAULI_BY_CODE = (PAULIS["I"], PAULIS["X"], PAULIS["Y"], PAULIS["Z"])


@dataclass(frozen=True)
class SectorBasis:
    """Sorted register indices of the Fock states kept by a restricted simulation."""

    n_modes: int
    configs: np.ndarray

    @classmethod
    def full(cls, n_modes: int) -> "SectorBasis":
        if n_modes > MAX_DENSE_QUBITS:
            raise CapacityError(f"{n_modes} modes exceed the dense limit of {MAX_DENSE_QUBITS}")
        return cls(n_modes=n_modes, configs=np.arange(2**n_modes, dtype=np.int64))

    @classmethod
    def for_sector(cls, L: int, n_up: int, n_down: int) -> "SectorBasis":
        """All states with ``n_up`` particles in modes ``0..L-1`` and ``n_down`` in ``L..2L-1``."""
        dim = math.comb(L, n_up) * math.comb(L, n_down)
        if dim > MAX_SECTOR_DIM:
            raise CapacityError(f"Sector ({n_up}, {n_down}) on {L} sites has dimension {dim} > {MAX_SECTOR_DIM}")

        def patterns(n: int) -> np.ndarray:
            return np.array(
                [sum(1 << (L - 1 - m) for m in combo) for combo in combinations(range(L), n)], dtype=np.int64
            )

        up, down = patterns(n_up), patterns(n_down)
        configs = np.sort(((up[:, None] << L) | down[None, :]).ravel())
        return cls(n_modes=2 * L, configs=configs)

    @property
    def dim(self) -> int:
        return int(len(self.configs))

    @cached_property
    def occupations(self) -> np.ndarray:
        return bits_from_indices(self.configs, self.n_modes)

    def index_of(self, configs: np.ndarray) -> np.ndarray:
        configs = np.asarray(configs, dtype=np.int64)
        idx = np.searchsorted(self.configs, configs)
        idx = np.minimum(idx, self.dim - 1)
        if not np.array_equal(self.configs[idx], configs):
            raise SectorError("Configuration outside the simulated sector")
        return idx


@dataclass
class StateVector:
    """Amplitudes over the full register (``basis`` None) or over a sector basis."""

    amplitudes: np.ndarray
    n_qubits: int
    basis: Optional[SectorBasis] = None

    def __post_init__(self) -> None:
        expected = 2**self.n_qubits if self.basis is None else self.basis.dim
        if self.amplitudes.shape != (expected,):
            raise ValueError(f"Expected {expected} amplitudes, got shape {self.amplitudes.shape}")

    @property
    def configs(self) -> np.ndarray:
        return np.arange(2**self.n_qubits, dtype=np.int64) if self.basis is None else self.basis.configs

    @property
    def occupations(self) -> np.ndarray:
        return bits_from_indices(self.configs, self.n_qubits) if self.basis is None else self.basis.occupations

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def restrict(self, basis: SectorBasis, tol: float = 1e-10) -> "StateVector":
        """Project a full-register state onto ``basis``; raises if weight leaks outside it."""
        if self.basis is not None:
            if self.basis is basis:
                return self
            amplitudes = np.zeros(basis.dim, dtype=complex)
            amplitudes[basis.index_of(self.configs)] = self.amplitudes
            return StateVector(amplitudes, self.n_qubits, basis)
        amplitudes = self.amplitudes[basis.configs]
        leaked = 1.0 - float(np.sum(np.abs(amplitudes) ** 2))
        if leaked > tol * max(1.0, self.norm**2):
            raise SectorError(f"State has weight {leaked:.3e} outside the requested sector")
        return StateVector(amplitudes.copy(), self.n_qubits, basis)

    def to_dense(self) -> np.ndarray:
        if self.basis is None:
            return self.amplitudes
        if self.n_qubits > MAX_DENSE_QUBITS:
            raise CapacityError(f"{self.n_qubits} qubits exceed the dense limit of {MAX_DENSE_QUBITS}")
        dense = np.zeros(2**self.n_qubits, dtype=complex)
        dense[self.basis.configs] = self.amplitudes
        return dense

    def sector(self, tol: float = 1e-12) -> tuple[int, int]:
        """The unique ``(N_up, N_down)`` carried by the state."""
        weight = self.probabilities() > tol
        occ = self.occupations[weight]
        half = self.n_qubits // 2
        counts = {(int(u), int(d)) for u, d in zip(occ[:, :half].sum(axis=1), occ[:, half:].sum(axis=1))}
        if len(counts) != 1:
            raise SectorError(f"State spans several particle sectors: {sorted(counts)}")
        return counts.pop()


@dataclass(frozen=True)
class NoiseSpec:
    """Synthetic device noise: depolarizing after each gate and independent readout flips."""

    p2: float = 3e-3
    p1: float = 1e-4
    p_ro: float = 1e-2
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("p2", "p1", "p_ro"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")

    @classmethod
    def noiseless(cls, seed: int = 0) -> "NoiseSpec":
        return cls(p2=0.0, p1=0.0, p_ro=0.0, seed=seed)

    @property
    def has_gate_noise(self) -> bool:
        return self.p1 > 0 or self.p2 > 0

    def to_dict(self) -> dict[str, Any]:
        return {"p2": self.p2, "p1": self.p1, "p_ro": self.p_ro, "seed": self.seed}


def _mode_bit(configs: np.ndarray, n_modes: int, mode: int) -> np.ndarray:
    return (configs >> (n_modes - 1 - mode)) & 1


def one_body_operator(basis: SectorBasis, terms: Iterable[tuple[int, int, complex]]) -> sparse.csr_matrix:
    """Sparse matrix of ``sum amp c+_p c_q`` on ``basis`` with Jordan-Wigner signs."""
    n = basis.n_modes
    configs = basis.configs
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    for p, q, amp in terms:
        if amp == 0:
            continue
        if p == q:
            sel = np.flatnonzero(_mode_bit(configs, n, p))
            rows.append(sel)
            cols.append(sel)
            vals.append(np.full(len(sel), amp, dtype=complex))
            continue
        sel = np.flatnonzero((_mode_bit(configs, n, q) == 1) & (_mode_bit(configs, n, p) == 0))
        src = configs[sel]
        dst = src ^ (1 << (n - 1 - q)) ^ (1 << (n - 1 - p))
        lo, hi = min(p, q), max(p, q)
        between = ((1 << (n - 1 - lo)) - 1) & ~((1 << (n - hi)) - 1)
        parity = np.bitwise_count((src & between).astype(np.uint64)) % 2
        rows.append(basis.index_of(dst))
        cols.append(sel)
        vals.append(np.where(parity == 1, -amp, amp).astype(complex))
    if not rows:
        return sparse.csr_matrix((basis.dim, basis.dim), dtype=complex)
    matrix = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(basis.dim, basis.dim)
    )
    return matrix.tocsr()


def _hopping_terms(model: ModelSpec) -> list[tuple[int, int, complex]]:
    h = hopping_matrix(model)
    L = model.lattice.L
    terms = []
    for offset in (0, L):
        for p, q in zip(*np.nonzero(h)):
            terms.append((offset + int(p), offset + int(q), complex(h[p, q])))
    return terms


def interaction_diagonal(model: ModelSpec, basis: SectorBasis) -> np.ndarray:
    """``U * sum_i n_{i up} n_{i down}`` on every basis state."""
    L = model.lattice.L
    occ = basis.occupations
    return model.U * (occ[:, :L] * occ[:, L:]).sum(axis=1).astype(float)


def hamiltonian(model: ModelSpec, basis: SectorBasis) -> sparse.csr_matrix:
    """Fermi-Hubbard Hamiltonian restricted to ``basis``."""
    H = one_body_operator(basis, _hopping_terms(model))
    return (H + sparse.diags(interaction_diagonal(model, basis))).tocsr()


def initial_state_vector(
    lattice: LatticeSpec, state: InitialStateSpec, basis: Optional[SectorBasis] = None
) -> StateVector:
    """The initial state in its particle sector (or in ``basis`` when given)."""
    if basis is None:
        basis = SectorBasis.for_sector(lattice.L, state.Nup, state.Ndown)
    n = lattice.n_qubits
    amplitudes = np.zeros(basis.dim, dtype=complex)
    for amplitude, up, down in state.branches(lattice):
        config = sum(1 << (n - 1 - m) for m in up + down)
        amplitudes[basis.index_of(np.array([config]))[0]] += amplitude
    return StateVector(amplitudes, n, basis)


def _apply_matrix(psi: np.ndarray, matrix: np.ndarray, qubits: Sequence[int]) -> np.ndarray:
    """Apply a gate to a tensor of shape ``(2,)*n`` with optional trailing batch axes."""
    if len(qubits) == 1:
        (q,) = qubits
        return np.moveaxis(np.tensordot(matrix, psi, axes=([1], [q])), 0, q)
    a, b = qubits
    out = np.tensordot(matrix.reshape(2, 2, 2, 2), psi, axes=([2, 3], [a, b]))
    return np.moveaxis(out, [0, 1], [a, b])


def _dense_initial(n: int, initial: Any, metadata: dict[str, Any]) -> np.ndarray:
    if initial is None:
        psi = np.zeros(2**n, dtype=complex)
        psi[0] = 1.0
        return psi
    if isinstance(initial, StateVector):
        if initial.n_qubits != n:
            raise ValueError(f"State has {initial.n_qubits} qubits, circuit has {n}")
        return initial.to_dense().astype(complex)
    if isinstance(initial, InitialStateSpec):
        lattice = LatticeSpec(Lx=int(metadata["Lx"]), Ly=int(metadata["Ly"]))
        return initial_state_vector(lattice, initial).to_dense()
    bits = np.asarray(initial, dtype=np.int64)
    if bits.shape != (n,):
        raise ValueError(f"Expected {n} input occupations, got shape {bits.shape}")
    psi = np.zeros(2**n, dtype=complex)
    psi[int(np.sum(bits << np.arange(n - 1, -1, -1)))] = 1.0
    return psi


InitialInput = Union[None, StateVector, InitialStateSpec, np.ndarray, Sequence[int]]


def run_circuit(circuit: CircuitIR, initial: InitialInput = None) -> StateVector:
    """
    Simulate ``circuit`` exactly on the full register.

    Args:
        circuit: Primitive or native circuit.
        initial: Input occupations (one bit per qubit), a state vector, an initial-state spec
            (prepared ideally rather than through gates) or None for the all-zero register.

    Returns:
        The output state on the full register.
    """
    n = circuit.n_qubits
    if n > MAX_DENSE_QUBITS:
        raise CapacityError(f"{n} qubits exceed the dense limit of {MAX_DENSE_QUBITS}")
    psi = _dense_initial(n, initial, circuit.metadata).reshape((2,) * n)
    for gate in circuit.gates():
        if gate.name is GateName.MEASURE:
            continue
        psi = _apply_matrix(psi, unitary(gate), gate.qubits)
    return StateVector(np.ascontiguousarray(psi).reshape(-1), n)


def evolve_exact_series(
    model: ModelSpec, initial: Union[InitialStateSpec, StateVector], times: Sequence[float]
) -> list[StateVector]:
    """``exp(-iHt)|phi(0)>`` for increasing ``times`` within the initial particle sector."""
    lattice = model.lattice
    if isinstance(initial, InitialStateSpec):
        state = initial_state_vector(lattice, initial)
    elif initial.basis is not None:
        initial.sector()
        state = initial
    else:
        n_up, n_down = initial.sector()
        state = initial.restrict(SectorBasis.for_sector(lattice.L, n_up, n_down))
    assert state.basis is not None
    basis = state.basis
    H = hamiltonian(model, basis)
    logger.debug(f"Exact dynamics on {lattice.size_label}: sector dimension {basis.dim}, {H.nnz} nonzeros")

    results = []
    previous = 0.0
    vector = state.amplitudes
    for t in times:
        if t < previous:
            raise ValueError(f"Times must be non-decreasing, got {t} after {previous}")
        if t > previous:
            vector = expm_multiply(-1j * (t - previous) * H, vector)
            previous = t
        results.append(StateVector(np.asarray(vector, dtype=complex), lattice.n_qubits, basis))
    return results


def evolve_exact(model: ModelSpec, initial: Union[InitialStateSpec, StateVector], t: float) -> StateVector:
    """``exp(-iHt)|phi(0)>`` in the fixed ``(N_up, N_down)`` sector."""
    if t < 0:
        raise ValueError(f"Time must be non-negative, got {t}")
    return evolve_exact_series(model, initial, [t])[0]


def reference_trotter_state(
    model: ModelSpec, initial: StateVector, plan: TrotterPlan, hop_order: Sequence[Sequence[int]]
) -> StateVector:
    """
    Term-by-term second-order Trotter product on a sector state.

    Every step applies the hops of ``hop_order`` for ``t/2``, the interaction for ``t`` and the
    hops again in reverse order.
    """
    if initial.basis is None:
        raise ValueError("reference_trotter_state needs a sector-restricted state")
    basis = initial.basis
    lattice = model.lattice
    h = hopping_matrix(model)
    terms = []
    for spin, a, b in hop_order:
        p, q = lattice.snake(a), lattice.snake(b)
        offset = spin * lattice.L
        pair = [(offset + p, offset + q, complex(h[p, q])), (offset + q, offset + p, complex(h[q, p]))]
        terms.append(one_body_operator(basis, pair))
    interaction = interaction_diagonal(model, basis)
    vector = initial.amplitudes.copy()
    for t in plan.durations:
        for term in terms:
            vector = expm_multiply(-0.5j * t * term, vector)
        vector = np.exp(-1j * t * interaction) * vector
        for term in reversed(terms):
            vector = expm_multiply(-0.5j * t * term, vector)
    return StateVector(vector, initial.n_qubits, basis)


def probabilities(state: StateVector) -> np.ndarray:
    return state.probabilities()


def expectation_z(state: StateVector, qubits: Sequence[int]) -> float:
    """``<prod_q Z_q>`` with ``Z = 1 - 2n``."""
    z = 1 - 2 * state.occupations[:, list(qubits)].astype(np.int8)
    return float(np.dot(state.probabilities(), np.prod(z, axis=1)))


def energy(model: ModelSpec, state: StateVector) -> float:
    basis = state.basis if state.basis is not None else SectorBasis.full(state.n_qubits)
    H = hamiltonian(model, basis)
    return float(np.real(np.vdot(state.amplitudes, H @ state.amplitudes)))


def z_string_expectations(occupations: np.ndarray, probs: np.ndarray, subsets: np.ndarray) -> np.ndarray:
    """``<Z_S>`` for every row ``S`` of ``subsets`` (equal-weight index sets)."""
    z = 1.0 - 2.0 * occupations.astype(float)
    subsets = np.atleast_2d(subsets)
    width = max(1, subsets.shape[1])
    chunk = max(1, _BATCH_AMPLITUDES // (len(probs) * width))
    out = np.empty(len(subsets))
    for start in range(0, len(subsets), chunk):
        block = subsets[start : start + chunk]
        out[start : start + chunk] = probs @ np.prod(z[:, block], axis=2)
    return out


def _flip_readout(bits: np.ndarray, p_ro: float, rng: np.random.Generator) -> np.ndarray:
    if p_ro <= 0:
        return bits
    return bits ^ (rng.random(bits.shape) < p_ro).astype(np.uint8)


def sample(
    state: StateVector,
    n_shots: int,
    noise: Optional[NoiseSpec] = None,
    *,
    seed: int = 0,
    t: float = 0.0,
    U: float = 0.0,
    flux: str = "zero",
) -> ShotTable:
    """I.i.d. computational-basis samples; readout flips from ``noise`` are applied per bit."""
    if n_shots <= 0:
        raise ValueError(f"n_shots must be positive, got {n_shots}")
    rng = np.random.default_rng(seed if noise is None else noise.seed)
    probs = state.probabilities()
    probs = probs / probs.sum()
    picks = rng.choice(len(probs), size=n_shots, p=probs)
    bits = bits_from_indices(state.configs[picks], state.n_qubits)
    if noise is not None:
        bits = _flip_readout(bits, noise.p_ro, rng)
    return ShotTable(bits=bits, t=t, U=U, flux=flux)


def _apply_pauli_codes(psi: np.ndarray, qubit: int, codes: np.ndarray) -> np.ndarray:
    for code in (1, 2, 3):
        sel = np.flatnonzero(codes == code)
        if sel.size:
            psi[..., sel] = _apply_matrix(psi[..., sel], _PAULI_BY_CODE[code], (qubit,))
    return psi


def _noisy_batch(
    circuit: CircuitIR, psi0: np.ndarray, batch: int, noise: NoiseSpec, rng: np.random.Generator
) -> np.ndarray:
    n = circuit.n_qubits
    psi = np.repeat(psi0.reshape((2,) * n + (1,)), batch, axis=-1)
    for gate in circuit.gates():
        if gate.name is GateName.MEASURE:
            continue
        psi = _apply_matrix(psi, unitary(gate), gate.qubits)
        p = noise.p2 if gate.is_two_qubit else noise.p1
        if p <= 0:
            continue
        hit = rng.random(batch) < p
        if not hit.any():
            continue
        if gate.is_two_qubit:
            draws = np.where(hit, rng.integers(1, 16, size=batch), 0)
            codes = (draws // 4, draws % 4)
        else:
            codes = (np.where(hit, rng.integers(1, 4, size=batch), 0),)
        for qubit, code in zip(gate.qubits, codes):
            psi = _apply_pauli_codes(psi, qubit, code)
    return np.abs(psi.reshape(2**n, batch)) ** 2


def run_noisy(
    circuit: CircuitIR,
    initial: InitialInput,
    noise: NoiseSpec,
    n_shots: int,
    twirl: Optional[TwirlRecord] = None,
    *,
    shots_per_trajectory: int = 1,
) -> ShotTable:
    """
    Sample a noisy execution of ``circuit`` by Pauli trajectories.

    After every gate a uniformly random non-identity Pauli hits its qubits with probability ``p2``
    (two-qubit gates) or ``p1`` (single-qubit gates); readout bits then flip with ``p_ro``. A
    readout twirl (``twirl`` or ``circuit.metadata["twirl"]``) is recorded with the shots; the mask
    is stored, not undone.
    """
    if n_shots <= 0:
        raise ValueError(f"n_shots must be positive, got {n_shots}")
    n = circuit.n_qubits
    if n > MAX_DENSE_QUBITS:
        raise CapacityError(f"{n} qubits exceed the dense limit of {MAX_DENSE_QUBITS}")
    rng = np.random.default_rng(noise.seed)
    meta = circuit.metadata
    if not noise.has_gate_noise:
        ideal = run_circuit(circuit, initial)
        shots = sample(ideal, n_shots, noise)
    else:
        psi0 = _dense_initial(n, initial, meta)
        n_traj = math.ceil(n_shots / shots_per_trajectory)
        batch_size = max(1, min(n_traj, _BATCH_AMPLITUDES // 2**n))
        rows = []
        remaining = n_shots
        for start in range(0, n_traj, batch_size):
            batch = min(batch_size, n_traj - start)
            probs = _noisy_batch(circuit, psi0, batch, noise, rng)
            for k in range(batch):
                take = min(shots_per_trajectory, remaining)
                column = probs[:, k] / probs[:, k].sum()
                rows.append(rng.choice(2**n, size=take, p=column))
                remaining -= take
        bits = _flip_readout(bits_from_indices(np.concatenate(rows), n), noise.p_ro, rng)
        shots = ShotTable(bits=bits)
        logger.debug(f"Sampled {n_shots} noisy shots from {n_traj} trajectories on {n} qubits")

    if twirl is None and "twirl" in meta:
        record = meta["twirl"]
        twirl_id, mask = int(record["twirl_id"]), np.array(record["mask"], dtype=np.uint8)
    elif twirl is not None:
        twirl_id, mask = twirl.twirl_id, np.array(twirl.mask, dtype=np.uint8)
    else:
        twirl_id, mask = 0, None
    return ShotTable(
        bits=shots.bits,
        t=float(meta.get("t", 0.0)),
        U=float(meta.get("U", 0.0)),
        flux=str(meta.get("flux", "zero")),
        twirl_ids=np.full(n_shots, twirl_id, dtype=np.int64),
        masks=None if mask is None else np.tile(mask, (n_shots, 1)),
    )


def trotter_initial_states(model: ModelSpec) -> list[InitialStateSpec]:
    """Neel states with one hole (centre, upper-left corner, upper side, lower side) and the holon stripe."""
    lattice = model.lattice
    middle = lattice.Lx // 2
    holes = [
        lattice.center_site,
        lattice.site_index(0, 0),
        lattice.site_index(middle, 0),
        lattice.site_index(middle, lattice.Ly - 1),
    ]
    states = [build_initial_state(model, StateKind.NEEL_WITH_HOLES, holes=[h]) for h in holes]
    states.append(build_initial_state(model, StateKind.HOLON_STRIPE))
    return states


def z_subsets(n_qubits: int, weight: int) -> np.ndarray:
    return np.array(list(combinations(range(n_qubits), weight)), dtype=np.int64).reshape(-1, weight)


def _sampled_subsets(n_qubits: int, weight: int, limit: int, rng: np.random.Generator) -> np.ndarray:
    if math.comb(n_qubits, weight) <= limit:
        return z_subsets(n_qubits, weight)
    return np.sort(np.array([rng.choice(n_qubits, size=weight, replace=False) for _ in range(limit)]), axis=1)


# Scaled observable weight per lattice size for the Trotter-error report.
SCALED_WEIGHTS: dict[tuple[int, int], int] = {(2, 2): 4, (3, 2): 6, (2, 3): 6, (3, 3): 8}


def _cell_errors(
    model: ModelSpec,
    states: list[InitialStateSpec],
    t: float,
    n_layers: int,
    observable_sets: list[np.ndarray],
) -> list[tuple[float, list[np.ndarray]]]:
    """Per initial state: the state error and the observable errors for every observable set."""
    lattice = model.lattice
    plan = TrotterPlan.uniform(t, n_layers)
    circuit = build_trotter_circuit(model, None, plan)
    results: list[tuple[float, list[np.ndarray]]] = []
    for state in states:
        start = initial_state_vector(lattice, state)
        assert start.basis is not None
        exact = evolve_exact(model, start, t)
        trotter = run_circuit(circuit, start).restrict(start.basis)
        overlap = abs(np.vdot(exact.amplitudes, trotter.amplitudes))
        state_error = 2 * math.sqrt(max(0.0, 1 - overlap**2))
        occ = start.basis.occupations
        errors = [
            np.abs(
                z_string_expectations(occ, exact.probabilities(), subsets)
                - z_string_expectations(occ, trotter.probabilities(), subsets)
            )
            for subsets in observable_sets
        ]
        results.append((state_error, errors))
    return results


def trotter_error_report(
    sizes: Sequence[Union[str, LatticeSpec]],
    times: Sequence[float],
    U_list: Sequence[float],
    flux_list: Sequence[Union[Flux, str]],
    *,
    n_layers: int = 3,
    max_weight: int = 4,
    max_scaled_observables: int = 2000,
    seed: int = 0,
) -> pd.DataFrame:
    """
    Trotter error against exact dynamics over the Neel-with-hole and stripe initial states.

    Returns:
        One row per (size, t, U, flux) with mean/max state error ``2 sqrt(1 - |<phi|phi'>|^2)``,
        mean/max error of all Z observables with weight 1..``max_weight``, and the same for the
        scaled observable weight of the size (random subset when there are more than
        ``max_scaled_observables``).
    """
    rng = np.random.default_rng(seed)
    rows: list[dict[str, Any]] = []
    for size in sizes:
        lattice = LatticeSpec.parse_size(size) if isinstance(size, str) else size
        if lattice.L > 9:
            raise CapacityError(f"Trotter-error reports are limited to 3x3, got {lattice.size_label}")
        low_weight = [z_subsets(lattice.n_qubits, w) for w in range(1, max_weight + 1)]
        scaled_weight = SCALED_WEIGHTS.get((lattice.Lx, lattice.Ly), lattice.L)
        scaled = _sampled_subsets(lattice.n_qubits, scaled_weight, max_scaled_observables, rng)
        for flux in flux_list:
            for U in U_list:
                model = build_model(lattice.Lx, lattice.Ly, float(U), flux)
                states = trotter_initial_states(model)
                for t in times:
                    row: dict[str, Any] = {
                        "size": lattice.size_label,
                        "t": float(t),
                        "U": float(U),
                        "flux": Flux(flux).value,
                        "n_layers": n_layers,
                        "scaled_weight": scaled_weight,
                    }
                    if t <= 0:
                        row.update(
                            state_error_mean=0.0,
                            state_error_max=0.0,
                            obs_error_mean=0.0,
                            obs_error_max=0.0,
                            scaled_obs_error_mean=0.0,
                            scaled_obs_error_max=0.0,
                        )
                        rows.append(row)
                        continue
                    cells = _cell_errors(model, states, float(t), n_layers, low_weight + [scaled])
                    state_errors = np.array([c[0] for c in cells])
                    obs_errors = np.concatenate([e for c in cells for e in c[1][:-1]])
                    scaled_errors = np.concatenate([c[1][-1] for c in cells])
                    row.update(
                        state_error_mean=float(state_errors.mean()),
                        state_error_max=float(state_errors.max()),
                        obs_error_mean=float(obs_errors.mean()),
                        obs_error_max=float(obs_errors.max()),
                        scaled_obs_error_mean=float(scaled_errors.mean()),
                        scaled_obs_error_max=float(scaled_errors.max()),
                    )
                    rows.append(row)
                logger.info(f"Trotter error {lattice.size_label} U={U} flux={Flux(flux).value}: {len(times)} times")
    return pd.DataFrame(rows)

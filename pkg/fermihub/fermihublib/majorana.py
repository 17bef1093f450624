"""
Heisenberg-picture Majorana propagation.

Observables are polynomials in the Majorana operators ``gamma_{2j} = c_j + c+_j`` and
``gamma_{2j+1} = i (c_j - c+_j)``; a monomial is a bitset over the ``2 * n_modes`` labels, stored in
ascending label order. Hopping and FSWAP gates rotate labels without changing monomial weight,
onsite gates branch monomials that anticommute with their generators.
"""

from __future__ import annotations

import math
import re
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cache

import numpy as np
import pandas as pd
from beartype.typing import Iterable, Mapping, Optional, Sequence
from loguru import logger

from fermihub.fermihublib.circuits import CircuitIR, TrotterPlan, build_trotter_circuit
from fermihub.fermihublib.defs import MAX_SINGLETS, CapacityError, Spin
from fermihub.fermihublib.gates import GateName, GateOp, single_particle
from fermihub.fermihublib.model import InitialStateSpec, LatticeSpec, ModelSpec

_ZERO = 1e-15


@dataclass(frozen=True)
class TruncationSpec:
    """Weight and coefficient cutoffs applied after every gate; ``None`` disables the weight cut."""

    max_weight: Optional[int] = 10
    min_coeff: float = 3e-5

    def __post_init__(self) -> None:
        if self.min_coeff < 0:
            raise ValueError(f"min_coeff must be >= 0, got {self.min_coeff}")
        if self.max_weight is not None and (self.max_weight < 0 or self.max_weight % 2):
            raise ValueError(f"max_weight must be a non-negative even number, got {self.max_weight}")

    @classmethod
    def disabled(cls) -> "TruncationSpec":
        return cls(max_weight=None, min_coeff=0.0)


def _product_sign(s: int, t: int) -> int:
    """Sign of reordering ``gamma_S gamma_T`` into ascending order."""
    swaps = 0
    rest = t
    while rest:
        low = rest & -rest
        swaps += (s >> low.bit_length()).bit_count()
        rest ^= low
    return -1 if swaps % 2 else 1


def _labels(key: int) -> list[int]:
    out = []
    while key:
        low = key & -key
        out.append(low.bit_length() - 1)
        key ^= low
    return out


@dataclass
class MajoranaPolynomial:
    """Sum of Majorana monomials with complex coefficients."""

    n_modes: int
    terms: dict[int, complex] = field(default_factory=dict)
    initial_norm: float = 0.0

    def __post_init__(self) -> None:
        if not self.initial_norm:
            self.initial_norm = self.norm()

    @classmethod
    def constant(cls, n_modes: int, value: complex = 1.0) -> "MajoranaPolynomial":
        return cls(n_modes, {0: complex(value)})

    @classmethod
    def monomial(cls, n_modes: int, labels: Iterable[int], coeff: complex = 1.0) -> "MajoranaPolynomial":
        """``coeff * gamma_{l_1} ... gamma_{l_k}`` for labels in any order; repeated labels square to one."""
        key, value = 0, complex(coeff)
        for label in labels:
            if not 0 <= label < 2 * n_modes:
                raise ValueError(f"Majorana label {label} outside 0..{2 * n_modes - 1}")
            bit = 1 << label
            value *= _product_sign(key, bit)
            key ^= bit
        return cls(n_modes, {key: value})

    def norm(self) -> float:
        return math.sqrt(sum(abs(c) ** 2 for c in self.terms.values()))

    @property
    def n_monomials(self) -> int:
        return len(self.terms)

    def __len__(self) -> int:
        return len(self.terms)

    def __add__(self, other: "MajoranaPolynomial") -> "MajoranaPolynomial":
        terms = dict(self.terms)
        for key, value in other.terms.items():
            terms[key] = terms.get(key, 0) + value
        return MajoranaPolynomial(self.n_modes, {k: v for k, v in terms.items() if abs(v) > _ZERO})

    def __mul__(self, other: "MajoranaPolynomial") -> "MajoranaPolynomial":
        terms: dict[int, complex] = defaultdict(complex)
        for s, a in self.terms.items():
            for t, b in other.terms.items():
                terms[s ^ t] += _product_sign(s, t) * a * b
        return MajoranaPolynomial(self.n_modes, {k: v for k, v in terms.items() if abs(v) > _ZERO})

    def scale(self, factor: complex) -> "MajoranaPolynomial":
        return MajoranaPolynomial(self.n_modes, {k: v * factor for k, v in self.terms.items()})

    def truncate(self, trunc: TruncationSpec) -> float:
        """Drop monomials over the weight cap or under the coefficient cut; returns the discarded l2 mass."""
        discarded = 0.0
        kept = {}
        for key, value in self.terms.items():
            if (trunc.max_weight is not None and key.bit_count() > trunc.max_weight) or abs(value) < trunc.min_coeff:
                discarded += abs(value) ** 2
            else:
                kept[key] = value
        self.terms = kept
        return discarded

    def weight_histogram(self) -> dict[int, float]:
        """l2 mass per monomial weight."""
        hist: dict[int, float] = defaultdict(float)
        for key, value in self.terms.items():
            hist[key.bit_count()] += abs(value) ** 2
        return dict(sorted(hist.items()))


@dataclass(frozen=True)
class ObservableTerm:
    """``coeff`` times a product over ``modes`` of ``Z`` (kind ``Z``) or of ``n`` (kind ``N``)."""

    kind: str
    modes: tuple[int, ...]
    coeff: complex = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("Z", "N"):
            raise ValueError(f"Unsupported operator type {self.kind!r}; expected Z-strings or number operators")


Observable = Sequence[ObservableTerm]

_TERM_PATTERN = re.compile(r"([ZzNn])(\d+)")


def parse_observable(text: str) -> list[ObservableTerm]:
    """
    Parse ``"Z3"``, ``"Z0 Z5"`` or ``"n2 n7"`` style products; ``+`` separates terms and
    ``"I"`` is the identity.
    """
    terms = []
    for chunk in text.split("+"):
        chunk = chunk.strip()
        if chunk.upper() == "I":
            terms.append(ObservableTerm("Z", ()))
            continue
        factors = _TERM_PATTERN.findall(chunk)
        if not factors or _TERM_PATTERN.sub("", chunk).replace("*", "").strip():
            raise ValueError(f"Cannot parse observable term {chunk!r}")
        kinds = {k.upper() for k, _ in factors}
        if len(kinds) != 1:
            raise ValueError(f"Mixed Z and n factors in {chunk!r}")
        terms.append(ObservableTerm(kinds.pop(), tuple(int(m) for _, m in factors)))
    return terms


def _z_mode(n_modes: int, mode: int) -> MajoranaPolynomial:
    return MajoranaPolynomial.monomial(n_modes, (2 * mode, 2 * mode + 1), 1j)


def encode_observable(observable: Observable | str, n_modes: int) -> MajoranaPolynomial:
    """Exact Majorana expansion using ``Z_j = i gamma_{2j} gamma_{2j+1}`` and ``n_j = (1 - Z_j) / 2``."""
    if isinstance(observable, str):
        observable = parse_observable(observable)
    total = MajoranaPolynomial(n_modes, {})
    for term in observable:
        if not isinstance(term, ObservableTerm):
            raise TypeError(f"Unsupported operator {term!r}")
        poly = MajoranaPolynomial.constant(n_modes, term.coeff)
        for mode in term.modes:
            if not 0 <= mode < n_modes:
                raise ValueError(f"Mode {mode} outside 0..{n_modes - 1}")
            z = _z_mode(n_modes, mode)
            factor = z if term.kind == "Z" else MajoranaPolynomial.constant(n_modes, 0.5) + z.scale(-0.5)
            poly = poly * factor
        total = total + poly
    total.initial_norm = total.norm()
    return total


def staggered_magnetization(lattice: LatticeSpec) -> list[ObservableTerm]:
    """``(1/L) sum_i (-1)^(x+y) (n_up - n_down)_i`` written as ``(Z_down - Z_up) / 2``."""
    terms = []
    for site in range(lattice.L):
        sign = lattice.stagger(site) / (2 * lattice.L)
        terms.append(ObservableTerm("Z", (lattice.mode_index(site, Spin.DOWN),), sign))
        terms.append(ObservableTerm("Z", (lattice.mode_index(site, Spin.UP),), -sign))
    return terms


def _gaussian_transfer(u: np.ndarray) -> list[list[tuple[int, complex]]]:
    """
    Heisenberg images of the 16 local monomials of a two-mode Gaussian gate.

    ``u`` is the single-particle matrix in ascending mode order; the Heisenberg map uses ``v = u^dagger``
    and sends ``gamma_T`` to ``sum_U det(O[U, T]) gamma_U`` with ``O`` the real orthogonal label rotation.
    """
    v = u.conj().T
    A, B = v.real, v.imag
    O = np.zeros((4, 4))
    for i in range(2):
        for k in range(2):
            O[2 * i, 2 * k] = A[i, k]
            O[2 * i + 1, 2 * k] = -B[i, k]
            O[2 * i, 2 * k + 1] = B[i, k]
            O[2 * i + 1, 2 * k + 1] = A[i, k]
    table: list[list[tuple[int, complex]]] = []
    for t in range(16):
        cols = [j for j in range(4) if (t >> j) & 1]
        images = []
        for target in range(16):
            rows = [j for j in range(4) if (target >> j) & 1]
            if len(rows) != len(cols):
                continue
            value = 1.0 if not rows else float(np.linalg.det(O[np.ix_(rows, cols)]))
            if abs(value) > 1e-14:
                images.append((target, complex(value)))
        table.append(images)
    return table


def _apply_gaussian(poly: MajoranaPolynomial, gate: GateOp, u: np.ndarray) -> None:
    a, b = gate.qubits
    if abs(a - b) != 1:
        raise ValueError(f"{gate.name.value} on non-adjacent modes {gate.qubits}")
    if a > b:
        u = u[::-1, ::-1]
    shift = 2 * min(a, b)
    table = _gaussian_transfer(u)
    clear = ~(0xF << shift)
    terms: dict[int, complex] = defaultdict(complex)
    for key, value in poly.terms.items():
        local = (key >> shift) & 0xF
        if local == 0:
            terms[key] += value
            continue
        base = key & clear
        for image, coeff in table[local]:
            terms[base | (image << shift)] += coeff * value
    poly.terms = {k: v for k, v in terms.items() if abs(v) > _ZERO}


def _rotate(poly: MajoranaPolynomial, generator: int, generator_coeff: complex, theta: float) -> None:
    """Conjugate by ``exp(i theta P)`` with ``P = generator_coeff * gamma_generator`` an even Hermitian monomial."""
    c, s = math.cos(2 * theta), math.sin(2 * theta)
    terms: dict[int, complex] = defaultdict(complex)
    for key, value in poly.terms.items():
        if (key & generator).bit_count() % 2 == 0:
            terms[key] += value
            continue
        terms[key] += c * value
        terms[key ^ generator] += 1j * s * value * generator_coeff * _product_sign(key, generator)
    poly.terms = {k: v for k, v in terms.items() if abs(v) > _ZERO}


def _apply_onsite(poly: MajoranaPolynomial, gate: GateOp) -> None:
    """``exp(-i phi n_a n_b) = e^(-i phi/4) exp(i phi/4 Z_a) exp(i phi/4 Z_b) exp(-i phi/4 Z_a Z_b)``."""
    phi = gate.params[0]
    a, b = sorted(gate.qubits)
    za = 0b11 << (2 * a)
    zb = 0b11 << (2 * b)
    _rotate(poly, za, 1j, phi / 4)
    _rotate(poly, zb, 1j, phi / 4)
    _rotate(poly, za | zb, -1.0, -phi / 4)


def heisenberg_step(gate: GateOp, poly: MajoranaPolynomial, trunc: TruncationSpec) -> float:
    """
    Replace ``poly`` by ``G^dagger poly G`` in place and truncate.

    Returns:
        The discarded l2 mass.
    """
    if gate.name is GateName.ONSITE:
        if abs(math.remainder(gate.params[0], 2 * math.pi)) > 1e-15:
            _apply_onsite(poly, gate)
    elif gate.name in (GateName.FSIM, GateName.FSWAP, GateName.HOP_FSWAP):
        u = single_particle(gate)
        assert u is not None
        _apply_gaussian(poly, gate, u)
    else:
        raise ValueError(f"{gate.name.value} is not a fermionic gate; propagate the evolution circuit only")
    return poly.truncate(trunc)


@cache
def _singlet_block_table() -> np.ndarray:
    """``<gamma_S>`` of one singlet for all 256 subsets of its eight local labels."""
    lower = np.array([[0, 1], [0, 0]], dtype=complex)
    z = np.diag([1.0, -1.0]).astype(complex)
    eye = np.eye(2, dtype=complex)
    gammas = []
    for k in range(4):
        factors = [z] * k + [lower] + [eye] * (3 - k)
        c = factors[0]
        for f in factors[1:]:
            c = np.kron(c, f)
        gammas += [c + c.conj().T, 1j * (c - c.conj().T)]
    state = np.zeros(16, dtype=complex)
    state[0b1001] = state[0b0110] = 1 / math.sqrt(2)
    table = np.zeros(256, dtype=complex)
    for subset in range(256):
        vec = state.copy()
        for label in reversed(range(8)):
            if (subset >> label) & 1:
                vec = gammas[label] @ vec
        table[subset] = state.conj() @ vec
    return table


class InitialOverlap:
    """``<psi0| gamma_S |psi0>`` for product states with optional singlet blocks."""

    def __init__(self, lattice: LatticeSpec, state: InitialStateSpec) -> None:
        if len(state.singlet_pairs) > MAX_SINGLETS:
            raise CapacityError(f"{len(state.singlet_pairs)} singlets exceed the limit of {MAX_SINGLETS}")
        n = lattice.n_qubits
        self.z = np.ones(n)
        up, down = state.occupied_modes(lattice)
        self.z[up + down] = -1.0
        self.block_of = [-1] * n
        self.blocks: list[list[int]] = []
        for a, b in state.singlet_pairs:
            modes = sorted(lattice.mode_index(s, spin) for spin in Spin for s in (a, b))
            for m in modes:
                self.block_of[m] = len(self.blocks)
            self.blocks.append(modes)

    def __call__(self, key: int) -> complex:
        labels = _labels(key)
        value = complex(1.0)
        groups: dict[int, list[int]] = defaultdict(list)
        product_labels = []
        for label in labels:
            block = self.block_of[label // 2]
            if block < 0:
                product_labels.append(label)
            else:
                groups[block].append(label)
        k = 0
        while k < len(product_labels):
            label = product_labels[k]
            if label % 2 or k + 1 >= len(product_labels) or product_labels[k + 1] != label + 1:
                return 0.0
            value *= -1j * self.z[label // 2]
            k += 2
        if not groups:
            return value
        ordered = list(product_labels)
        table = _singlet_block_table()
        for block, block_labels in groups.items():
            modes = self.blocks[block]
            local = 0
            for label in block_labels:
                local |= 1 << (2 * modes.index(label // 2) + label % 2)
            block_value = table[local]
            if abs(block_value) < _ZERO:
                return 0.0
            value *= block_value
            ordered += block_labels
        inversions = sum(1 for i in range(len(ordered)) for j in range(i + 1, len(ordered)) if ordered[i] > ordered[j])
        return -value if inversions % 2 else value


@dataclass(frozen=True)
class MPResult:
    expectation: float
    norm_loss: float
    n_monomials: int
    discarded_mass: float
    weight_histogram: Mapping[int, float]


def run_mp(
    circuit: CircuitIR,
    observable: Observable | str | MajoranaPolynomial,
    lattice: LatticeSpec,
    initial_state: InitialStateSpec,
    trunc: Optional[TruncationSpec] = None,
) -> MPResult:
    """
    Propagate an observable backwards through a fermionic-gate circuit and overlap it with the initial state.

    Args:
        circuit: Evolution circuit in fermionic gates (Fsim, FSWAP, merged, Onsite), without preparation.
        observable: Observable terms, a parseable string or an encoded polynomial.
        lattice: Lattice fixing the mode count.
        initial_state: Product state, possibly with singlet pairs.
        trunc: Truncation; defaults to ``TruncationSpec()``.

    Returns:
        The expectation value with the relative norm loss of the truncated polynomial.
    """
    trunc = trunc if trunc is not None else TruncationSpec()
    if isinstance(observable, MajoranaPolynomial):
        poly = MajoranaPolynomial(observable.n_modes, dict(observable.terms), observable.initial_norm)
    else:
        poly = encode_observable(observable, lattice.n_qubits)
    initial_norm = poly.initial_norm
    discarded = poly.truncate(trunc)
    for gate in reversed(list(circuit.gates())):
        discarded += heisenberg_step(gate, poly, trunc)
    overlap = InitialOverlap(lattice, initial_state)
    value = sum((coeff * overlap(key) for key, coeff in poly.terms.items()), complex(0.0))
    if abs(value.imag) > 1e-8 * max(1.0, abs(value.real)):
        logger.warning(f"Majorana expectation has imaginary part {value.imag:.3e}")
    norm_loss = 1.0 - poly.norm() / initial_norm if initial_norm > 0 else 0.0
    return MPResult(
        expectation=float(value.real),
        norm_loss=float(norm_loss),
        n_monomials=poly.n_monomials,
        discarded_mass=float(discarded),
        weight_histogram=poly.weight_histogram(),
    )


def weight_histogram(poly: MajoranaPolynomial) -> dict[int, float]:
    return poly.weight_histogram()


def run_mp_series(
    model: ModelSpec,
    initial_state: InitialStateSpec,
    times: Sequence[float],
    observables: Mapping[str, Observable | str],
    trunc: Optional[TruncationSpec] = None,
    plan_for: Optional[Mapping[float, TrotterPlan]] = None,
) -> pd.DataFrame:
    """
    Majorana-propagated time series.

    Returns:
        One row per (t, observable) with columns t, U, flux, observable, value, norm_loss, n_monomials.
    """
    rows = []
    lattice = model.lattice
    for t in times:
        if t > 0:
            plan = plan_for[t] if plan_for is not None and t in plan_for else TrotterPlan.for_time(t)
            circuit = build_trotter_circuit(model, None, plan)
        else:
            circuit = CircuitIR(n_qubits=lattice.n_qubits, layers=[])
        for name, observable in observables.items():
            result = run_mp(circuit, observable, lattice, initial_state, trunc)
            rows.append(
                {
                    "t": t,
                    "U": model.U,
                    "flux": model.flux.value,
                    "observable": name,
                    "value": result.expectation,
                    "norm_loss": result.norm_loss,
                    "n_monomials": result.n_monomials,
                }
            )
            logger.debug(f"MP {name} t={t}: {result.expectation:.6f} ({result.n_monomials} monomials)")
    return pd.DataFrame(rows, columns=["t", "U", "flux", "observable", "value", "norm_loss", "n_monomials"])

"""
Second-order Trotter circuits for the Fermi-Hubbard model on a Jordan-Wigner snake.

The hopping terms are reached with a fermionic swap network: each row block of the snake
permutes its columns with alternating FSWAP sublayers (``U_L`` starting at column 0, ``U_R`` at
column 1) while the vertical bonds that sit on the snake turns are applied in between (``V``).
A horizontal hop is merged into the FSWAP that first brings its two modes together. The second
hop round replays the first in reverse and restores the layout, and the boundary ``V`` sublayers
of consecutive Trotter steps are merged.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from beartype.typing import Any, Iterable, Iterator, Mapping, Optional, Sequence
from loguru import logger

from fermihub.fermihublib.defs import MAX_TROTTER_STEP, ConfigError, Spin
from fermihub.fermihublib.gates import (
    SWAPPING_GATES,
    GateName,
    GateOp,
    H,
    MicroOp,
    PAULIS,
    native_sequence,
    phased_xz,
    phased_xz_params,
    twirl_partner,
)
from fermihub.fermihublib.model import InitialStateSpec, LatticeSpec, ModelSpec

# Extra FSWAP pairs around the Coulomb stage per (Lx, Ly): (down-chain bring-together pairs per
# step, up-chain edge pairs around the first step only). These reproduce the published two-qubit
# gate counts of the interlocking device layout.
LAYOUT_TEMPLATES: dict[tuple[int, int], tuple[int, int]] = {
    (4, 4): (7, 2),
    (5, 5): (7, 6),
    (5, 6): (8, 8),
    (6, 6): (11, 8),
}

# Upper time bound -> number of Trotter layers; longer times use three layers.
DEFAULT_LAYER_SCHEDULE: tuple[tuple[float, int], ...] = ((0.1, 1), (0.2, 2))


@dataclass(frozen=True)
class TrotterPlan:
    """Durations of the second-order Trotter steps and whether boundary hop layers merge."""

    durations: tuple[float, ...]
    merge: bool = True

    def __post_init__(self) -> None:
        if not self.durations:
            raise ValueError("A Trotter plan needs at least one layer")
        for t in self.durations:
            if t <= 0:
                raise ValueError(f"Trotter step durations must be positive, got {t}")
            if t > MAX_TROTTER_STEP + 1e-12:
                raise ValueError(f"Trotter step {t} exceeds the maximum step {MAX_TROTTER_STEP}")

    @property
    def n_layers(self) -> int:
        return len(self.durations)

    @property
    def total_time(self) -> float:
        return float(sum(self.durations))

    @classmethod
    def uniform(cls, t: float, n_layers: int, merge: bool = True) -> "TrotterPlan":
        if n_layers < 1:
            raise ValueError(f"n_layers must be >= 1, got {n_layers}")
        return cls(durations=tuple([t / n_layers] * n_layers), merge=merge)

    @classmethod
    def for_time(cls, t: float, schedule: Sequence[tuple[float, int]] = DEFAULT_LAYER_SCHEDULE) -> "TrotterPlan":
        """Plan for total time ``t`` from a time->layers schedule, never exceeding the maximum step."""
        if t <= 0:
            raise ValueError(f"Total time must be positive, got {t}")
        n_layers = 3
        for bound, layers in sorted(schedule):
            if t <= bound + 1e-12:
                n_layers = layers
                break
        n_layers = max(n_layers, math.ceil(t / MAX_TROTTER_STEP - 1e-9))
        return cls.uniform(t, n_layers)


@dataclass
class CircuitIR:
    """
    Layered circuit on ``n_qubits`` qubits.

    ``mode_maps[k][q]`` is the fermionic mode held by qubit ``q`` before layer ``k``
    (``len(layers) + 1`` entries). Native circuits do not track modes and leave it empty.
    """

    n_qubits: int
    layers: list[list[GateOp]] = field(default_factory=list)
    mode_maps: list[tuple[int, ...]] = field(default_factory=list)
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for k, layer in enumerate(self.layers):
            used: set[int] = set()
            for gate in layer:
                if used.intersection(gate.qubits):
                    raise ValueError(f"Layer {k} has overlapping gate supports")
                if max(gate.qubits) >= self.n_qubits:
                    raise ValueError(f"Gate {gate.name.value} on {gate.qubits} exceeds {self.n_qubits} qubits")
                used.update(gate.qubits)

    @classmethod
    def from_sequence(
        cls, n_qubits: int, gates: Iterable[GateOp], metadata: Optional[dict[str, Any]] = None
    ) -> "CircuitIR":
        """Pack gates into layers as soon as possible, keeping the order on every qubit."""
        front = [0] * n_qubits
        layers: list[list[GateOp]] = []
        for gate in gates:
            k = max(front[q] for q in gate.qubits)
            if k == len(layers):
                layers.append([])
            layers[k].append(gate)
            for q in gate.qubits:
                front[q] = k + 1
        circuit = cls(n_qubits=n_qubits, layers=layers, metadata=dict(metadata or {}))
        circuit.track_modes()
        return circuit

    def track_modes(self) -> None:
        modes = list(range(self.n_qubits))
        maps = [tuple(modes)]
        for layer in self.layers:
            for gate in layer:
                if gate.name in SWAPPING_GATES:
                    a, b = gate.qubits
                    modes[a], modes[b] = modes[b], modes[a]
            maps.append(tuple(modes))
        self.mode_maps = maps

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @property
    def final_mode_map(self) -> tuple[int, ...]:
        return self.mode_maps[-1] if self.mode_maps else tuple(range(self.n_qubits))

    def gates(self) -> Iterator[GateOp]:
        for layer in self.layers:
            yield from layer

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_qubits": self.n_qubits,
            "metadata": self.metadata,
            "layers": [[gate.to_dict() for gate in layer] for layer in self.layers],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "CircuitIR":
        layers = [[GateOp.from_dict(g) for g in layer] for layer in data.get("layers", [])]
        metadata = dict(data.get("metadata", {}))
        circuit = cls(n_qubits=int(data["n_qubits"]), layers=layers, metadata=metadata)
        if not metadata.get("native"):
            circuit.track_modes()
        return circuit

    def save_to_file(self, file_path: Path) -> None:
        with open(file_path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2)

    @classmethod
    def load_from_file(cls, file_path: Path) -> "CircuitIR":
        with open(file_path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def _position_qubit(lattice: LatticeSpec, spin: Spin, column: int, row: int) -> int:
    return lattice.mode_index(lattice.site_index(column, row), spin)


@dataclass(frozen=True)
class _HopTemplate:
    """A gate of the hop round; ``sites`` is set when it carries a hopping term."""

    name: GateName
    qubits: tuple[int, int]
    sites: Optional[tuple[int, int]] = None
    spin: Optional[Spin] = None


class SwapNetwork:
    """Generates the first hop round of a Trotter step for one lattice."""

    def __init__(self, lattice: LatticeSpec) -> None:
        self.lattice = lattice

    def _pairs(self, first_column: int) -> list[tuple[int, int]]:
        lat = self.lattice
        pairs = []
        for spin in Spin:
            for row in range(lat.Ly):
                for c in range(first_column, lat.Lx - 1, 2):
                    a = _position_qubit(lat, spin, c, row)
                    b = _position_qubit(lat, spin, c + 1, row)
                    pairs.append((min(a, b), max(a, b)))
        return pairs

    def _vertical_pairs(self) -> list[tuple[int, int]]:
        lat = self.lattice
        pairs = []
        for spin in Spin:
            for row in range(lat.Ly - 1):
                column = lat.Lx - 1 if row % 2 == 0 else 0
                pairs.append((_position_qubit(lat, spin, column, row), _position_qubit(lat, spin, column, row + 1)))
        return pairs

    def hop_round(self) -> list[list[_HopTemplate]]:
        """
        Sublayers of the first hop round; the first entry is the boundary ``V`` sublayer.

        Even ``Lx`` runs ``V, (U_L, V, U_R)*``, odd ``Lx`` runs ``(V, U_L, U_R)*``, each stopping as soon
        as every bond of both spin sectors has been applied once.
        """
        lat = self.lattice
        modes = list(range(lat.n_qubits))
        needed = {(spin, e.i, e.j) for spin in Spin for e in lat.edges}
        done: set[tuple[Spin, int, int]] = set()
        u_left, u_right, vertical = self._pairs(0), self._pairs(1), self._vertical_pairs()

        def sites_of(a: int, b: int) -> tuple[Spin, int, int]:
            site_a, spin = lat.mode_site(modes[a])
            site_b, _ = lat.mode_site(modes[b])
            return spin, min(site_a, site_b), max(site_a, site_b)

        def v_sublayer() -> list[_HopTemplate]:
            gates = []
            for a, b in vertical:
                key = sites_of(a, b)
                if key in done:
                    continue
                if lat.manhattan(key[1], key[2]) != 1:
                    raise RuntimeError(f"Turn qubits {a},{b} hold non-neighbouring sites {key}")
                done.add(key)
                gates.append(_HopTemplate(GateName.FSIM, (a, b), (key[1], key[2]), key[0]))
            return gates

        def u_sublayer(pairs: list[tuple[int, int]]) -> list[_HopTemplate]:
            gates = []
            for a, b in pairs:
                key = sites_of(a, b)
                if key not in done and lat.manhattan(key[1], key[2]) == 1:
                    done.add(key)
                    gates.append(_HopTemplate(GateName.HOP_FSWAP, (a, b), (key[1], key[2]), key[0]))
                else:
                    gates.append(_HopTemplate(GateName.FSWAP, (a, b)))
                modes[a], modes[b] = modes[b], modes[a]
            return gates

        if lat.Lx % 2 == 0:
            cycle = ["U_L", "V", "U_R"]
        else:
            cycle = ["U_L", "U_R", "V"]
        sublayers = [v_sublayer()]
        step = 0
        while done != needed:
            if step > 4 * (lat.Lx + 2):
                raise RuntimeError(f"Swap network did not cover all bonds of the {lat.size_label} lattice")
            kind = cycle[step % 3]
            if kind == "V":
                sublayers.append(v_sublayer())
            else:
                sublayers.append(u_sublayer(u_left if kind == "U_L" else u_right))
            step += 1
        logger.debug(f"Hop round on {lat.size_label}: {len(sublayers)} sublayers")
        return sublayers


def _coulomb_swap_pairs(lattice: LatticeSpec, spin: Spin, count: int, turns_first: bool) -> list[tuple[int, int]]:
    offset = spin.value * lattice.L
    candidates: list[tuple[int, int]] = []
    if turns_first:
        candidates.extend((k * lattice.Lx - 1, k * lattice.Lx) for k in range(1, lattice.Ly))
    candidates.extend((p, p + 1) for p in range(0, lattice.L - 1, 2))
    candidates.extend((p, p + 1) for p in range(1, lattice.L - 1, 2))
    chosen: list[tuple[int, int]] = []
    used: set[int] = set()
    for a, b in candidates:
        if len(chosen) == count:
            break
        if a in used or b in used:
            continue
        used.update((a, b))
        chosen.append((offset + a, offset + b))
    if len(chosen) < count:
        raise ValueError(
            f"Only {len(chosen)} disjoint {spin.name} swap pairs fit the {lattice.size_label} lattice, need {count}"
        )
    return chosen


class _Emitter:
    """Collects gates in program order while tracking which mode every qubit holds."""

    def __init__(self, n_qubits: int) -> None:
        self.gates: list[GateOp] = []
        self.modes = list(range(n_qubits))

    def emit(self, gate: GateOp) -> None:
        self.gates.append(gate)
        if gate.name in SWAPPING_GATES:
            a, b = gate.qubits
            self.modes[a], self.modes[b] = self.modes[b], self.modes[a]

    def position_of(self, mode: int) -> int:
        return self.modes.index(mode)


def _emit_sublayer(out: _Emitter, model: ModelSpec, sublayer: Iterable[_HopTemplate], tau: float) -> None:
    for tmpl in sublayer:
        if tmpl.sites is None:
            out.emit(GateOp(GateName.FSWAP, tmpl.qubits, role="fswap"))
            continue
        theta = -model.hop_sign(*tmpl.sites) * tau
        role = "hop" if tmpl.name is GateName.FSIM else "hop_fswap"
        out.emit(GateOp(tmpl.name, tmpl.qubits, (theta,), role=role))


def _emit_coulomb(out: _Emitter, model: ModelSpec, t: float, bring: int, edge: int) -> None:
    lattice = model.lattice
    swaps = _coulomb_swap_pairs(lattice, Spin.UP, edge, turns_first=False)
    swaps += _coulomb_swap_pairs(lattice, Spin.DOWN, bring, turns_first=True)
    for pair in swaps:
        out.emit(GateOp(GateName.FSWAP, pair, role="bring"))
    for site in range(lattice.L):
        up = out.position_of(lattice.mode_index(site, Spin.UP))
        down = out.position_of(lattice.mode_index(site, Spin.DOWN))
        out.emit(GateOp(GateName.ONSITE, (up, down), (model.U * t,), role="coulomb"))
    for pair in reversed(swaps):
        out.emit(GateOp(GateName.FSWAP, pair, role="bring"))


def build_trotter_circuit(
    model: ModelSpec,
    initial_state: Optional[InitialStateSpec],
    plan: TrotterPlan,
    *,
    include_preparation: bool = False,
    layout: Optional[tuple[int, int]] = None,
) -> CircuitIR:
    """
    Build the Trotterised evolution ``prod_j S2(t_j)`` as a primitive-gate circuit.

    Args:
        model: Model to simulate.
        initial_state: State prepared in front of the evolution when ``include_preparation`` is set.
        plan: Trotter step durations.
        include_preparation: Prepend X gates (product states) or the singlet preparation circuit.
        layout: Override of the (bring-together, edge) FSWAP pair counts; defaults to the template
            of the lattice size, or no extra swaps for sizes without a template.

    Returns:
        The circuit; ``metadata["hop_order"]`` lists ``(spin, site_a, site_b)`` in the order the first
        hop round applies them.
    """
    lattice = model.lattice
    network = SwapNetwork(lattice)
    round_one = network.hop_round()
    boundary, rest = round_one[0], round_one[1:]
    bring, edge = layout if layout is not None else LAYOUT_TEMPLATES.get((lattice.Lx, lattice.Ly), (0, 0))

    out = _Emitter(lattice.n_qubits)
    if include_preparation:
        if initial_state is None:
            raise ValueError("include_preparation needs an initial state")
        for gate in build_preparation_circuit(model, initial_state).gates():
            out.emit(gate)

    durations = plan.durations
    for j, t in enumerate(durations):
        tau = t / 2
        if j == 0 or not plan.merge:
            _emit_sublayer(out, model, boundary, tau)
        for sublayer in rest:
            _emit_sublayer(out, model, sublayer, tau)
        _emit_coulomb(out, model, t, bring, edge if j == 0 else 0)
        for sublayer in reversed(rest):
            _emit_sublayer(out, model, sublayer, tau)
        if plan.merge and j + 1 < len(durations):
            _emit_sublayer(out, model, boundary, tau + durations[j + 1] / 2)
        else:
            _emit_sublayer(out, model, boundary, tau)

    hop_order = [
        [tmpl.spin.value, tmpl.sites[0], tmpl.sites[1]]
        for sublayer in round_one
        for tmpl in sublayer
        if tmpl.sites is not None and tmpl.spin is not None
    ]
    metadata = {
        "Lx": lattice.Lx,
        "Ly": lattice.Ly,
        "U": model.U,
        "flux": model.flux.value,
        "t": plan.total_time,
        "n_layers": plan.n_layers,
        "durations": list(durations),
        "merge": plan.merge,
        "layout": [bring, edge],
        "hop_order": hop_order,
        "prepared": include_preparation,
    }
    circuit = CircuitIR.from_sequence(lattice.n_qubits, out.gates, metadata)
    if circuit.final_mode_map != tuple(range(lattice.n_qubits)):
        raise RuntimeError("Trotter circuit does not restore the initial mode layout")
    logger.debug(
        f"Trotter circuit {lattice.size_label} N={plan.n_layers}: {len(out.gates)} gates in {circuit.n_layers} layers"
    )
    return circuit


def _x_gate(qubit: int, role: str = "prep") -> GateOp:
    return GateOp(GateName.PHASED_XZ, (qubit,), (1.0, 0.0, 0.0), role=role)


_H_PARAMS = phased_xz_params(H)


def _h_gate(qubit: int) -> GateOp:
    assert _H_PARAMS is not None
    return GateOp(GateName.PHASED_XZ, (qubit,), _H_PARAMS, role="prep")


def _singlet_gates(a_up: int, a_down: int, b_up: int, b_down: int) -> list[GateOp]:
    gates = [_h_gate(q) for q in (a_up, a_down, b_up, b_down)]
    gates.append(GateOp(GateName.CZ, (a_down, b_up), role="prep"))
    gates.append(_h_gate(b_up))
    gates.append(GateOp(GateName.CZ, (a_up, a_down), role="prep"))
    gates.append(GateOp(GateName.CZ, (b_up, b_down), role="prep"))
    gates += [_h_gate(a_up), _h_gate(b_down), _x_gate(a_up), _x_gate(b_down)]
    return gates


def build_singlet_prep(lattice: LatticeSpec, state: InitialStateSpec) -> CircuitIR:
    """
    Prepare a singlet covering from the all-empty register.

    Lonely occupied modes get an X first. Singlets are prepared in order of decreasing snake span:
    the second site is FSWAPped next to the first in both chains, the four-qubit singlet circuit is
    applied, and the FSWAPs are undone.
    """
    out = _Emitter(lattice.n_qubits)
    up, down = state.occupied_modes(lattice)
    for mode in up + down:
        out.emit(_x_gate(mode))

    prepared: set[int] = set()
    ordered = sorted(state.singlet_pairs, key=lambda p: -abs(lattice.snake(p[0]) - lattice.snake(p[1])))
    for a, b in ordered:
        pa, pb = sorted((lattice.snake(a), lattice.snake(b)))
        route: list[GateOp] = []
        for spin in Spin:
            offset = spin.value * lattice.L
            for k in range(pb, pa + 1, -1):
                crossed = out.modes[offset + k - 1]
                if crossed in prepared:
                    raise ConfigError(
                        f"Singlet {lattice.coords(a)}-{lattice.coords(b)} cannot be made adjacent without "
                        "crossing an entangled pair"
                    )
                route.append(GateOp(GateName.FSWAP, (offset + k - 1, offset + k), role="route"))
        for gate in route:
            out.emit(gate)
        for gate in _singlet_gates(pa, lattice.L + pa, pa + 1, lattice.L + pa + 1):
            out.emit(gate)
        for gate in reversed(route):
            out.emit(gate)
        prepared.update(lattice.mode_index(s, spin) for s in (a, b) for spin in Spin)

    return CircuitIR.from_sequence(lattice.n_qubits, out.gates, {"Lx": lattice.Lx, "Ly": lattice.Ly, "prep": True})


def build_preparation_circuit(model: ModelSpec, state: InitialStateSpec) -> CircuitIR:
    """X gates for product states, the singlet circuit for singlet coverings."""
    lattice = model.lattice
    if state.has_singlets:
        return build_singlet_prep(lattice, state)
    gates = [_x_gate(int(q)) for q in np.flatnonzero(state.occupation_bits(lattice))]
    return CircuitIR.from_sequence(lattice.n_qubits, gates, {"Lx": lattice.Lx, "Ly": lattice.Ly, "prep": True})


def _assemble_native(n_qubits: int, ops: Sequence[MicroOp], metadata: dict[str, Any]) -> CircuitIR:
    """Lay micro operations out as alternating single-qubit and CZ layers, merging 1q runs."""
    front = [0] * n_qubits
    cz_layers: list[list[tuple[int, int]]] = []
    pending: dict[tuple[int, int], np.ndarray] = {}
    for op in ops:
        if op[0] == "cz":
            a, b = int(op[1]), int(op[2])  # type: ignore[arg-type]
            k = max(front[a], front[b])
            if k == len(cz_layers):
                cz_layers.append([])
            cz_layers[k].append((a, b))
            front[a] = front[b] = k + 1
        else:
            q, matrix = int(op[1]), op[2]
            slot = (front[q], q)
            pending[slot] = matrix @ pending.get(slot, np.eye(2, dtype=complex))  # type: ignore[operator]

    one_qubit_layers: list[list[GateOp]] = [[] for _ in range(len(cz_layers) + 1)]
    for (k, q), matrix in sorted(pending.items(), key=lambda item: item[0]):
        params = phased_xz_params(matrix)
        if params is not None:
            one_qubit_layers[k].append(GateOp(GateName.PHASED_XZ, (q,), params))

    layers: list[list[GateOp]] = []
    for k, pairs in enumerate(cz_layers):
        layers.append(one_qubit_layers[k])
        layers.append([GateOp(GateName.CZ, pair) for pair in pairs])
    layers.append(one_qubit_layers[len(cz_layers)])
    if not cz_layers and not layers[0]:
        layers = []
    return CircuitIR(n_qubits=n_qubits, layers=layers, metadata={**metadata, "native": True})


def _micro_ops(circuit: CircuitIR) -> list[MicroOp]:
    ops: list[MicroOp] = []
    for gate in circuit.gates():
        ops.extend(native_sequence(gate))
    return ops


def decompose_to_native(circuit: CircuitIR) -> CircuitIR:
    """Compile to CZ + PhasedXZ with strictly alternating layers; equal up to global phase."""
    native = _assemble_native(circuit.n_qubits, _micro_ops(circuit), circuit.metadata)
    native.metadata["final_mode_map"] = list(circuit.final_mode_map)
    return native


@dataclass(frozen=True)
class GateStats:
    two_qubit_count: int
    depth: int
    qubit_count: int

    def to_dict(self) -> dict[str, int]:
        return {"two_qubit_count": self.two_qubit_count, "depth": self.depth, "qubit_count": self.qubit_count}


def gate_stats(circuit: CircuitIR) -> GateStats:
    """Two-qubit gate count and layer depth; on native circuits the final 1q layer is counted."""
    two_qubit = sum(1 for gate in circuit.gates() if gate.is_two_qubit)
    return GateStats(two_qubit_count=two_qubit, depth=circuit.n_layers, qubit_count=circuit.n_qubits)


@dataclass(frozen=True)
class TwirlRecord:
    """Pauli frames drawn for one twirled instance of a native circuit."""

    twirl_id: int
    paulis: tuple[tuple[str, str], ...]
    mask: tuple[int, ...]

    def to_dict(self) -> dict[str, Any]:
        return {"twirl_id": self.twirl_id, "paulis": ["".join(p) for p in self.paulis], "mask": list(self.mask)}


def twirl(circuit: CircuitIR, seed: int, *, twirl_id: Optional[int] = None, identity: bool = False) -> tuple[
    CircuitIR, TwirlRecord
]:
    """
    Pauli-twirl every CZ and add a random readout X mask.

    Each CZ gets ``P`` before and the matching ``Q = CZ P CZ`` after; both are merged into the
    neighbouring single-qubit layers so the layer structure is unchanged. ``identity=True`` draws
    only identities (useful as a control).
    """
    if not circuit.metadata.get("native"):
        raise ValueError("twirl expects a native circuit")
    rng = np.random.default_rng(seed)
    letters = "IXYZ"
    ops: list[MicroOp] = []
    paulis: list[tuple[str, str]] = []
    for layer in circuit.layers:
        for gate in layer:
            if gate.name is GateName.CZ:
                a, b = gate.qubits
                pa, pb = ("I", "I") if identity else (letters[rng.integers(4)], letters[rng.integers(4)])
                qa, qb = twirl_partner(pa, pb)
                ops += [("u", a, PAULIS[pa]), ("u", b, PAULIS[pb]), ("cz", a, b), ("u", a, qa), ("u", b, qb)]
                paulis.append((pa, pb))
            else:
                ops.append(("u", gate.qubits[0], phased_xz(*gate.params)))
    if identity:
        mask = np.zeros(circuit.n_qubits, dtype=int)
    else:
        mask = rng.integers(0, 2, size=circuit.n_qubits)
    # The final X layer goes after every other op on its qubit.
    ops += [("u", int(q), PAULIS["X"]) for q in np.flatnonzero(mask)]
    metadata = copy.deepcopy(circuit.metadata)
    record = TwirlRecord(
        twirl_id=seed if twirl_id is None else twirl_id,
        paulis=tuple(paulis),
        mask=tuple(int(m) for m in mask),
    )
    metadata["twirl"] = record.to_dict()
    twirled = _assemble_native(circuit.n_qubits, ops, metadata)
    return twirled, record


def circuit_to_json(circuit: CircuitIR) -> str:
    return json.dumps(circuit.to_dict(), indent=2)


def circuit_from_json(text: str) -> CircuitIR:
    return CircuitIR.from_dict(json.loads(text))

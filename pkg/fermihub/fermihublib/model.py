"""
Lattice geometry, Hamiltonian parameters and initial states of the 2D Fermi-Hubbard model.

Sites are indexed row-major (``iy * Lx + ix``). Fermionic modes are indexed in Jordan-Wigner
order: the spin-up chain first, then the spin-down chain, each following the boustrophedon
("snake") order over the rows. The mode index of a site is therefore also the qubit that holds
it in the initial layout of every circuit.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from beartype import BeartypeConf, beartype
from beartype.typing import Any, Iterable, Mapping, Optional, Sequence
from loguru import logger

from fermihub.fermihublib.defs import HOPPING_J, ConfigError, Flux, Orientation, SiteClass, Spin, StateKind

_SIZE_PATTERN = re.compile(r"^\s*(\d+)\s*[xX]\s*(\d+)\s*$")

_boundary = beartype(conf=BeartypeConf(is_pep484_tower=True))


@dataclass(frozen=True, order=True)
class Edge:
    """A nearest-neighbour bond between row-major sites ``i < j``."""

    i: int
    j: int
    orientation: Orientation = field(compare=False)

    def __post_init__(self) -> None:
        if self.i >= self.j:
            raise ValueError(f"Edge endpoints must satisfy i < j, got ({self.i}, {self.j})")


@dataclass(frozen=True)
class LatticeSpec:
    """Open-boundary rectangular lattice of ``Ly`` rows and ``Lx`` columns."""

    Lx: int
    Ly: int

    def __post_init__(self) -> None:
        if self.Lx < 1 or self.Ly < 1:
            raise ValueError(f"Lattice dimensions must be positive, got Lx={self.Lx}, Ly={self.Ly}")
        if self.Lx * self.Ly < 2:
            raise ValueError("A lattice needs at least two sites")

    @classmethod
    def parse_size(cls, size: str) -> "LatticeSpec":
        """Parse a size string such as ``"6x5"``: rows first, then columns."""
        match = _SIZE_PATTERN.match(size)
        if match is None:
            raise ValueError(f"Invalid lattice size '{size}', expected e.g. '5x5'")
        rows, columns = int(match.group(1)), int(match.group(2))
        return cls(Lx=columns, Ly=rows)

    @property
    def size_label(self) -> str:
        return f"{self.Ly}x{self.Lx}"

    @property
    def L(self) -> int:
        return self.Lx * self.Ly

    @property
    def n_qubits(self) -> int:
        return 2 * self.L

    @cached_property
    def sites(self) -> tuple[tuple[int, int], ...]:
        return tuple((ix, iy) for iy in range(self.Ly) for ix in range(self.Lx))

    def site_index(self, ix: int, iy: int) -> int:
        if not (0 <= ix < self.Lx and 0 <= iy < self.Ly):
            raise ValueError(f"Site ({ix}, {iy}) lies outside the {self.size_label} lattice")
        return iy * self.Lx + ix

    def coords(self, site: int) -> tuple[int, int]:
        return site % self.Lx, site // self.Lx

    def snake(self, site: int) -> int:
        ix, iy = self.coords(site)
        if iy % 2 == 0:
            return iy * self.Lx + ix
        return iy * self.Lx + (self.Lx - 1 - ix)

    def snake_inverse(self, position: int) -> int:
        iy, offset = divmod(position, self.Lx)
        ix = offset if iy % 2 == 0 else self.Lx - 1 - offset
        return iy * self.Lx + ix

    @cached_property
    def snake_order(self) -> tuple[int, ...]:
        """Snake position of every row-major site."""
        return tuple(self.snake(s) for s in range(self.L))

    def mode_index(self, site: int, spin: Spin) -> int:
        return spin.value * self.L + self.snake(site)

    def mode_site(self, mode: int) -> tuple[int, Spin]:
        sector, position = divmod(mode, self.L)
        return self.snake_inverse(position), Spin(sector)

    @cached_property
    def edges(self) -> tuple[Edge, ...]:
        edges: list[Edge] = []
        for iy in range(self.Ly):
            for ix in range(self.Lx):
                s = self.site_index(ix, iy)
                if ix + 1 < self.Lx:
                    edges.append(Edge(s, s + 1, Orientation.HORIZONTAL))
                if iy + 1 < self.Ly:
                    edges.append(Edge(s, s + self.Lx, Orientation.VERTICAL))
        return tuple(edges)

    @cached_property
    def plaquettes(self) -> tuple[tuple[int, int, int, int], ...]:
        """Counter-clockwise corner sites of every unit plaquette."""
        result = []
        for iy in range(self.Ly - 1):
            for ix in range(self.Lx - 1):
                result.append(
                    (
                        self.site_index(ix, iy),
                        self.site_index(ix + 1, iy),
                        self.site_index(ix + 1, iy + 1),
                        self.site_index(ix, iy + 1),
                    )
                )
        return tuple(result)

    def neighbours(self, site: int) -> list[int]:
        ix, iy = self.coords(site)
        result = []
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nx, ny = ix + dx, iy + dy
            if 0 <= nx < self.Lx and 0 <= ny < self.Ly:
                result.append(self.site_index(nx, ny))
        return result

    def manhattan(self, a: int, b: int) -> int:
        ax, ay = self.coords(a)
        bx, by = self.coords(b)
        return abs(ax - bx) + abs(ay - by)

    def distance(self, a: int, b: int) -> float:
        ax, ay = self.coords(a)
        bx, by = self.coords(b)
        return math.hypot(ax - bx, ay - by)

    def stagger(self, site: int) -> int:
        ix, iy = self.coords(site)
        return 1 if (ix + iy) % 2 == 0 else -1

    @property
    def center_site(self) -> int:
        return self.site_index((self.Lx - 1) // 2, (self.Ly - 1) // 2)


def _edge_key(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True)
class ModelSpec:
    """
    Fermi-Hubbard Hamiltonian on a lattice with Peierls phases on the bonds.

    ``phases`` is aligned with ``lattice.edges``; the phase of an edge applies to hopping from its
    lower-indexed site to the higher one, the conjugate applies to the reverse direction.
    """

    lattice: LatticeSpec
    U: float
    flux: Flux
    phases: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.phases) != len(self.lattice.edges):
            raise ValueError(f"Expected {len(self.lattice.edges)} Peierls phases, got {len(self.phases)}")
        for plaquette, total in zip(self.lattice.plaquettes, self.plaquette_fluxes()):
            if not _angle_equal(total, self.flux.phase):
                raise ValueError(f"Plaquette {plaquette} carries flux {total:.6f}, expected {self.flux.phase:.6f}")

    @property
    def J(self) -> float:
        return HOPPING_J

    @cached_property
    def peierls(self) -> dict[tuple[int, int], float]:
        return {(e.i, e.j): phase for e, phase in zip(self.lattice.edges, self.phases)}

    def phase(self, a: int, b: int) -> float:
        """Phase picked up hopping from site ``b`` to site ``a``."""
        value = self.peierls[_edge_key(a, b)]
        return value if a < b else -value

    def hop_sign(self, a: int, b: int) -> float:
        """Real hopping sign ``cos(phi)`` for the 0/pi phases used on circuits."""
        return float(np.cos(self.phase(a, b)))

    def plaquette_fluxes(self) -> list[float]:
        fluxes = []
        for corners in self.lattice.plaquettes:
            total = 0.0
            for k in range(4):
                a, b = corners[k], corners[(k + 1) % 4]
                total += self.phase(b, a)
            fluxes.append(total % (2 * np.pi))
        return fluxes

    def to_dict(self) -> dict[str, Any]:
        return {
            "Lx": self.lattice.Lx,
            "Ly": self.lattice.Ly,
            "U": self.U,
            "flux": self.flux.value,
            "peierls": [[e.i, e.j, phase] for e, phase in zip(self.lattice.edges, self.phases)],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ModelSpec":
        lattice = LatticeSpec(Lx=int(data["Lx"]), Ly=int(data["Ly"]))
        flux = Flux(data.get("flux", "zero"))
        if "peierls" not in data:
            return build_model(lattice.Lx, lattice.Ly, float(data.get("U", 0.0)), flux)
        by_edge = {(int(i), int(j)): float(phase) for i, j, phase in data["peierls"]}
        phases = tuple(by_edge[(e.i, e.j)] for e in lattice.edges)
        return cls(lattice=lattice, U=float(data.get("U", 0.0)), flux=flux, phases=phases)


def _angle_equal(a: float, b: float, tol: float = 1e-9) -> bool:
    diff = (a - b) % (2 * np.pi)
    return bool(min(diff, 2 * np.pi - diff) < tol)


@_boundary
def build_model(Lx: int, Ly: int, U: float, flux: Flux | str) -> ModelSpec:
    """
    Build the Fermi-Hubbard model on an ``Ly`` x ``Lx`` open lattice.

    The pi-flux gauge puts phase pi on the horizontal bonds of every odd row, so each plaquette
    contains exactly one pi bond.

    Args:
        Lx: Number of columns (>= 2).
        Ly: Number of rows (>= 2).
        U: Onsite interaction in units of J.
        flux: ``Flux.ZERO``/``Flux.PI`` or their string values.

    Returns:
        The model specification.
    """
    if Lx < 2 or Ly < 2:
        raise ValueError(f"Lattice must be at least 2x2, got Lx={Lx}, Ly={Ly}")
    flux = Flux(flux)
    lattice = LatticeSpec(Lx=Lx, Ly=Ly)
    phases = []
    for edge in lattice.edges:
        _, iy = lattice.coords(edge.i)
        pi_bond = flux is Flux.PI and edge.orientation is Orientation.HORIZONTAL and iy % 2 == 1
        phases.append(float(np.pi) if pi_bond else 0.0)
    logger.debug(f"Built {lattice.size_label} model U={U} flux={flux.value} with {len(lattice.edges)} edges")
    return ModelSpec(lattice=lattice, U=float(U), flux=flux, phases=tuple(phases))


def gauge_transform(model: ModelSpec, site: int) -> ModelSpec:
    """Apply the local gauge transformation ``c_site -> -c_site`` (all incident phases shift by pi)."""
    phases = []
    for edge, phase in zip(model.lattice.edges, model.phases):
        if site in (edge.i, edge.j):
            phase = (phase + np.pi) % (2 * np.pi)
        phases.append(float(phase))
    return ModelSpec(lattice=model.lattice, U=model.U, flux=model.flux, phases=tuple(phases))


def hopping_matrix(model: ModelSpec) -> np.ndarray:
    """Single-particle hopping matrix of one spin sector, indexed by snake position."""
    lattice = model.lattice
    h = np.zeros((lattice.L, lattice.L), dtype=complex)
    for edge in lattice.edges:
        p, q = lattice.snake(edge.i), lattice.snake(edge.j)
        amplitude = -model.J * np.exp(1j * model.phase(edge.i, edge.j))
        h[p, q] += amplitude
        h[q, p] += np.conj(amplitude)
    return h


@dataclass(frozen=True)
class InitialStateSpec:
    """
    A product initial state: lonely occupied modes, holes and two-site spin singlets.

    Sites are row-major indices. A singlet on sites ``(a, b)`` is
    ``(c+_{a,up} c+_{b,down} - c+_{a,down} c+_{b,up}) / sqrt(2)``.
    """

    kind: StateKind
    hole_sites: tuple[int, ...]
    up_sites: tuple[int, ...]
    down_sites: tuple[int, ...]
    singlet_pairs: tuple[tuple[int, int], ...] = ()
    seed: Optional[int] = None
    stripe_column: Optional[int] = None

    def __post_init__(self) -> None:
        seen: set[int] = set()
        groups: list[Iterable[int]] = [self.hole_sites, self.up_sites, self.down_sites]
        groups.extend(self.singlet_pairs)
        for group in groups:
            for site in group:
                if site in seen:
                    raise ValueError(f"Site {site} appears more than once in the initial state")
                seen.add(site)
        if any(a == b for a, b in self.singlet_pairs):
            raise ValueError("A singlet needs two distinct sites")

    @property
    def Nup(self) -> int:
        return len(self.up_sites) + len(self.singlet_pairs)

    @property
    def Ndown(self) -> int:
        return len(self.down_sites) + len(self.singlet_pairs)

    @property
    def n_particles(self) -> int:
        return self.Nup + self.Ndown

    @property
    def has_singlets(self) -> bool:
        return bool(self.singlet_pairs)

    def occupied_modes(self, lattice: LatticeSpec) -> tuple[list[int], list[int]]:
        """Definitely occupied modes per sector (singlet modes excluded), in mode indices."""
        up = sorted(lattice.mode_index(s, Spin.UP) for s in self.up_sites)
        down = sorted(lattice.mode_index(s, Spin.DOWN) for s in self.down_sites)
        return up, down

    def occupation_bits(self, lattice: LatticeSpec) -> np.ndarray:
        """Bit per mode for product states; raises for singlet states."""
        if self.has_singlets:
            raise ValueError("Singlet states have no definite occupation bitstring")
        bits = np.zeros(lattice.n_qubits, dtype=np.uint8)
        up, down = self.occupied_modes(lattice)
        bits[up + down] = 1
        return bits

    def branches(self, lattice: LatticeSpec) -> list[tuple[float, tuple[int, ...], tuple[int, ...]]]:
        """
        Expand the state over its singlet branches.

        Each entry is ``(amplitude, up_modes, down_modes)`` with ascending mode lists; the amplitude
        includes the sign of reordering the creation operators into ascending mode order, so the
        state is ``sum amplitude * c+_{m_1} ... c+_{m_k} |0>`` over the sorted modes of each branch.
        Branch 0 of a singlet ``(a, b)`` is ``(a up, b down)``, branch 1 is ``(a down, b up)``.
        """
        up, down = self.occupied_modes(lattice)
        n = len(self.singlet_pairs)
        result = []
        for choice in range(2**n):
            ops = list(up) + list(down)
            amplitude = 1.0
            for k, (a, b) in enumerate(self.singlet_pairs):
                if (choice >> k) & 1:
                    ops += [lattice.mode_index(a, Spin.DOWN), lattice.mode_index(b, Spin.UP)]
                    amplitude *= -1 / math.sqrt(2)
                else:
                    ops += [lattice.mode_index(a, Spin.UP), lattice.mode_index(b, Spin.DOWN)]
                    amplitude *= 1 / math.sqrt(2)
            if _permutation_parity(ops):
                amplitude = -amplitude
            modes = sorted(ops)
            up_modes = tuple(m for m in modes if m < lattice.L)
            down_modes = tuple(m for m in modes if m >= lattice.L)
            result.append((amplitude, up_modes, down_modes))
        return result

    def classification(self, lattice: LatticeSpec) -> list[SiteClass]:
        """Site classes at t=0; singlet sites count as singly occupied with S^z = 0 on average."""
        classes = [SiteClass.HOLON] * lattice.L
        for s in self.up_sites:
            classes[s] = SiteClass.UP
        for s in self.down_sites:
            classes[s] = SiteClass.DOWN
        for a, b in self.singlet_pairs:
            classes[a] = SiteClass.UP
            classes[b] = SiteClass.DOWN
        return classes

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "hole_sites": list(self.hole_sites),
            "up_sites": list(self.up_sites),
            "down_sites": list(self.down_sites),
            "singlet_pairs": [list(p) for p in self.singlet_pairs],
            "Nup": self.Nup,
            "Ndown": self.Ndown,
            "seed": self.seed,
            "stripe_column": self.stripe_column,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "InitialStateSpec":
        return cls(
            kind=StateKind(data["kind"]),
            hole_sites=tuple(int(s) for s in data.get("hole_sites", [])),
            up_sites=tuple(int(s) for s in data.get("up_sites", [])),
            down_sites=tuple(int(s) for s in data.get("down_sites", [])),
            singlet_pairs=tuple((int(a), int(b)) for a, b in data.get("singlet_pairs", [])),
            seed=data.get("seed"),
            stripe_column=data.get("stripe_column"),
        )


def _permutation_parity(values: Sequence[int]) -> int:
    inversions = sum(1 for i in range(len(values)) for j in range(i + 1, len(values)) if values[i] > values[j])
    return inversions % 2


def _resolve_sites(lattice: LatticeSpec, sites: Iterable[int | Sequence[int]]) -> tuple[int, ...]:
    resolved = []
    for site in sites:
        if isinstance(site, int):
            if not 0 <= site < lattice.L:
                raise ValueError(f"Site {site} lies outside the {lattice.size_label} lattice")
            resolved.append(site)
        else:
            ix, iy = site
            resolved.append(lattice.site_index(int(ix), int(iy)))
    if len(set(resolved)) != len(resolved):
        raise ValueError(f"Overlapping sites: {resolved}")
    return tuple(resolved)


def _neel_spins(
    lattice: LatticeSpec, sites: Iterable[int], flip_left_of: Optional[int] = None
) -> tuple[tuple[int, ...], tuple[int, ...]]:
    up, down = [], []
    for s in sites:
        ix, iy = lattice.coords(s)
        parity = (ix + iy) % 2
        if flip_left_of is not None and ix < flip_left_of:
            parity ^= 1
        (up if parity == 0 else down).append(s)
    return tuple(up), tuple(down)


def default_singlet_pairs(lattice: LatticeSpec, holes: Iterable[int]) -> tuple[tuple[int, int], ...]:
    """Pair consecutive non-hole sites along the snake; every pair must be a lattice bond."""
    hole_set = set(holes)
    chain = [lattice.snake_inverse(p) for p in range(lattice.L) if lattice.snake_inverse(p) not in hole_set]
    if len(chain) % 2:
        raise ConfigError(f"{len(chain)} non-hole sites cannot be covered by singlets")
    pairs = []
    for k in range(0, len(chain), 2):
        a, b = chain[k], chain[k + 1]
        if lattice.manhattan(a, b) != 1:
            raise ConfigError(
                f"Snake-consecutive sites {lattice.coords(a)} and {lattice.coords(b)} are not neighbours; "
                "pass explicit singlet_pairs"
            )
        pairs.append((a, b))
    return tuple(pairs)


@_boundary
def build_initial_state(
    model: ModelSpec,
    kind: StateKind | str,
    *,
    holes: Sequence[Any] = (),
    singlet_pairs: Optional[Sequence[Sequence[Any]]] = None,
    stripe_column: Optional[int] = None,
    n_holes: int = 0,
    seed: Optional[int] = None,
) -> InitialStateSpec:
    """
    Build one of the supported initial states.

    Args:
        model: Model the state lives on.
        kind: State family.
        holes: Hole sites, as row-major indices or ``(ix, iy)`` pairs.
        singlet_pairs: Site pairs for singlet coverings; defaults to snake-consecutive pairing.
        stripe_column: Column emptied by the holon stripe (defaults to the middle column).
        n_holes: Number of holes for ``random_holes``.
        seed: Required seed for ``random_holes``.

    Returns:
        The initial state specification.
    """
    kind = StateKind(kind)
    lattice = model.lattice

    if kind is StateKind.NEEL_WITH_HOLES:
        hole_sites = _resolve_sites(lattice, holes)
        up, down = _neel_spins(lattice, (s for s in range(lattice.L) if s not in hole_sites))
        state = InitialStateSpec(kind=kind, hole_sites=hole_sites, up_sites=up, down_sites=down)

    elif kind is StateKind.HOLON_STRIPE:
        column = lattice.Lx // 2 if stripe_column is None else stripe_column
        if not 0 <= column < lattice.Lx:
            raise ValueError(f"Stripe column {column} outside lattice")
        hole_sites = tuple(lattice.site_index(column, iy) for iy in range(lattice.Ly))
        rest = (s for s in range(lattice.L) if s not in hole_sites)
        up, down = _neel_spins(lattice, rest, flip_left_of=column)
        state = InitialStateSpec(
            kind=kind, hole_sites=hole_sites, up_sites=up, down_sites=down, stripe_column=column
        )

    elif kind is StateKind.RANDOM_HOLES:
        if seed is None:
            raise ValueError("random_holes requires an explicit seed")
        if not 0 <= n_holes <= lattice.L:
            raise ValueError(f"Cannot place {n_holes} holes on {lattice.L} sites")
        rng = np.random.default_rng(seed)
        hole_sites = tuple(sorted(int(s) for s in rng.choice(lattice.L, size=n_holes, replace=False)))
        up, down = _neel_spins(lattice, (s for s in range(lattice.L) if s not in hole_sites))
        state = InitialStateSpec(kind=kind, hole_sites=hole_sites, up_sites=up, down_sites=down, seed=seed)

    else:
        hole_sites = _resolve_sites(lattice, holes)
        if singlet_pairs is None:
            pairs = default_singlet_pairs(lattice, hole_sites)
        else:
            resolved = [_resolve_sites(lattice, pair) for pair in singlet_pairs]
            if any(len(pair) != 2 for pair in resolved):
                raise ValueError(f"Singlet pairs need exactly two sites, got {resolved}")
            pairs = tuple((pair[0], pair[1]) for pair in resolved)
            for a, b in pairs:
                if lattice.manhattan(a, b) != 1:
                    raise ValueError(f"Singlet sites {lattice.coords(a)} and {lattice.coords(b)} are not neighbours")
        covered = set(hole_sites).union(*(set(p) for p in pairs))
        lonely = tuple(s for s in range(lattice.L) if s not in covered)
        up, down = _neel_spins(lattice, lonely)
        state = InitialStateSpec(
            kind=kind, hole_sites=hole_sites, up_sites=up, down_sites=down, singlet_pairs=pairs
        )

    logger.debug(
        f"Initial state {kind.value} on {lattice.size_label}: Nup={state.Nup} Ndown={state.Ndown} "
        f"holes={len(state.hole_sites)} singlets={len(state.singlet_pairs)}"
    )
    return state


def dispersion(kx: float, ky: float, flux: Flux | str) -> tuple[float, ...]:
    """Band energies at ``(kx, ky)``; the pi-flux lattice has two symmetric branches."""
    if Flux(flux) is Flux.ZERO:
        return (float(-2 * np.cos(kx) - 2 * np.cos(ky)),)
    e = float(2 * np.sqrt(np.cos(kx) ** 2 + np.cos(ky) ** 2))
    return (-e, e)


def expected_pair_distance(n: int, m: int) -> float:
    """Mean Euclidean distance between two distinct cells drawn uniformly from an ``n`` x ``m`` grid."""
    if n < 1 or m < 1 or n * m < 2:
        raise ValueError(f"Need at least two cells, got {n}x{m}")
    dx = np.arange(1, n)
    dy = np.arange(1, m)
    diagonal = 2 * np.sum(np.outer(n - dx, m - dy) * np.hypot.outer(dx, dy))
    along_x = m * np.sum(dx * (n - dx))
    along_y = n * np.sum(dy * (m - dy))
    return float((diagonal + along_x + along_y) / math.comb(n * m, 2))


def doublon_asymptote_u0(Nup: int, Ndown: int, L: int) -> float:
    """Long-time doublon number of free fermions: uncorrelated spin sectors."""
    return Nup * Ndown / L


def max_doublon_density(Lx: int) -> float:
    """Largest doublon density reachable from the holon-stripe state."""
    return 0.25 * ((Lx - 1) / Lx) ** 2

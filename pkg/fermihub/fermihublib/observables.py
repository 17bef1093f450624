"""
Physics estimators.

Expectation-based estimators read an ``ExpectationTable`` of one- and two-mode Z expectations;
those formulas are linear in the table, so a table built from shots gives the shot estimator.
Shot-only estimators (AFM order, percolation, Wilson lines, marginal IPRs, pair distances, the
staggered magnetisation distribution) work on site classifications.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cache
from itertools import combinations

import numpy as np
import pandas as pd
from beartype.typing import Literal, Mapping, Optional, Sequence, Union
from loguru import logger
from scipy import ndimage, stats

from fermihub.fermihublib.defs import Spin, UndefinedEstimate
from fermihub.fermihublib.model import LatticeSpec
from fermihub.fermihublib.shots import DOUBLON, HOLON, ShotTable
from fermihub.fermihublib.statevec import StateVector

# Per-site IPR of uniformly random local Fock states, and of its charge/spin coarse-grainings.
IPR_UNIFORM_FULL = 0.25
IPR_UNIFORM_COARSE = 0.375

MAX_IPR_REGION = 8
MIN_MS_SHOTS = 100

_CHARGE_MAP = np.array([0, 1, 1, 2])
_SPIN_MAP = np.array([0, 1, 2, 0])
_SZ = np.array([0, 1, -1, 0])


@dataclass(frozen=True)
class ExpectationTable:
    """``<Z_a>`` and ``<Z_a Z_b>`` over all modes (``zz`` has ones on the diagonal)."""

    lattice: LatticeSpec
    z: np.ndarray
    zz: np.ndarray

    def __post_init__(self) -> None:
        n = self.lattice.n_qubits
        if self.z.shape != (n,) or self.zz.shape != (n, n):
            raise ValueError(f"Expectation table shapes {self.z.shape}, {self.zz.shape} do not match {n} modes")

    @classmethod
    def from_occupations(
        cls, lattice: LatticeSpec, occupations: np.ndarray, weights: Optional[np.ndarray] = None
    ) -> "ExpectationTable":
        zvals = 1.0 - 2.0 * np.asarray(occupations, dtype=float)
        w = np.full(len(zvals), 1.0 / len(zvals)) if weights is None else np.asarray(weights, dtype=float)
        return cls(lattice, w @ zvals, zvals.T @ (w[:, None] * zvals))

    @classmethod
    def from_shots(cls, shots: ShotTable, lattice: LatticeSpec) -> "ExpectationTable":
        if shots.n_shots == 0:
            raise UndefinedEstimate("No shots")
        return cls.from_occupations(lattice, shots.bits)

    @classmethod
    def from_state(cls, state: StateVector, lattice: LatticeSpec) -> "ExpectationTable":
        return cls.from_occupations(lattice, state.occupations, state.probabilities())

    def _pair(self, spin: Spin) -> np.ndarray:
        return np.array([self.lattice.mode_index(s, spin) for s in range(self.lattice.L)])

    @property
    def up_modes(self) -> np.ndarray:
        return self._pair(Spin.UP)

    @property
    def down_modes(self) -> np.ndarray:
        return self._pair(Spin.DOWN)

    def density(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-site ``<n_up>``, ``<n_down>`` in row-major order."""
        return (1 - self.z[self.up_modes]) / 2, (1 - self.z[self.down_modes]) / 2

    def doublon(self) -> np.ndarray:
        u, d = self.up_modes, self.down_modes
        return np.asarray((1 - self.z[u] - self.z[d] + self.zz[u, d]) / 4)

    def holon(self) -> np.ndarray:
        u, d = self.up_modes, self.down_modes
        return np.asarray((1 + self.z[u] + self.z[d] + self.zz[u, d]) / 4)

    def spin(self) -> np.ndarray:
        return np.asarray((self.z[self.down_modes] - self.z[self.up_modes]) / 2)

    def spin_spin(self) -> np.ndarray:
        """``<S^z_i S^z_j>`` for all site pairs."""
        u, d = self.up_modes, self.down_modes
        zz = self.zz
        return np.asarray(
            (zz[np.ix_(d, d)] - zz[np.ix_(d, u)] - zz[np.ix_(u, d)] + zz[np.ix_(u, u)]) / 4
        )


def local_spin(table: ExpectationTable) -> np.ndarray:
    """``<n_up - n_down>`` per row-major site."""
    return table.spin()


def nn_spin_corr(table: ExpectationTable) -> dict[tuple[int, int], float]:
    """``<S^z_i S^z_j>`` for every lattice bond."""
    ss = table.spin_spin()
    return {(e.i, e.j): float(ss[e.i, e.j]) for e in table.lattice.edges}


def holon_rms(table: ExpectationTable, reference_site: Optional[int]) -> float:
    """Holon spread around ``reference_site``; undefined without a single initial hole."""
    if reference_site is None:
        raise UndefinedEstimate("holon_RMS needs the site of a single initial hole")
    lattice = table.lattice
    r2 = np.array([lattice.distance(s, reference_site) ** 2 for s in range(lattice.L)])
    return float(math.sqrt(max(float(r2 @ table.holon()), 0.0)))


def _staggered_spin_spin(table: ExpectationTable) -> float:
    lattice = table.lattice
    ss = table.spin_spin()
    signs = np.array([[(-1) ** lattice.manhattan(i, j) for j in range(lattice.L)] for i in range(lattice.L)])
    return float(np.sum(signs * ss) / lattice.L**2)


def global_suite(
    source: Union[ExpectationTable, ShotTable], lattice: LatticeSpec, reference_site: Optional[int] = None
) -> dict[str, object]:
    """
    Doublon density, holon RMS (None without a reference site), staggered magnetisation,
    staggered spin-spin correlation and the per-site holon deviation map.
    """
    table = source if isinstance(source, ExpectationTable) else ExpectationTable.from_shots(source, lattice)
    stagger = np.array([lattice.stagger(s) for s in range(lattice.L)])
    holon = table.holon()
    return {
        "n_d": float(table.doublon().mean()),
        "holon_RMS": None if reference_site is None else holon_rms(table, reference_site),
        "M_s": float(stagger @ table.spin() / lattice.L),
        "SzSz_stag": _staggered_spin_spin(table),
        "holon_deviation": holon - holon.mean(),
    }


def stripe_suite(table: ExpectationTable, stripe_column: Optional[int]) -> dict[str, float]:
    """Stripe RMS width and stripe staggered magnetisation around column ``stripe_column``."""
    if stripe_column is None:
        raise ValueError("stripe_suite needs the initial stripe column")
    lattice = table.lattice
    dx = np.array([lattice.coords(s)[0] - stripe_column for s in range(lattice.L)])
    stagger = np.array([lattice.stagger(s) for s in range(lattice.L)])
    return {
        "stripe_RMS": float(math.sqrt(max(float((dx**2) @ table.holon()), 0.0))),
        "M_stag_stripe": float(np.sum(stagger * np.sign(dx) * table.spin()) / lattice.L),
        "SzSz_stag": _staggered_spin_spin(table),
    }


def _site_grid(classes: np.ndarray, lattice: LatticeSpec) -> np.ndarray:
    return classes.reshape(len(classes), lattice.Ly, lattice.Lx)


def afm_values(shots: ShotTable, lattice: LatticeSpec) -> np.ndarray:
    """Per-shot background AFM order; NaN for shots without a single active bond."""
    sz = shots.spin_z(lattice).astype(np.int64)
    i = np.array([e.i for e in lattice.edges])
    j = np.array([e.j for e in lattice.edges])
    products = sz[:, i] * sz[:, j]
    active = (products != 0).sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(active > 0, products.sum(axis=1) / np.maximum(active, 1), np.nan)


def afm_order(shots: ShotTable, lattice: LatticeSpec) -> Optional[float]:
    """Mean AFM order over shots with active bonds; None when no shot has one."""
    values = afm_values(shots, lattice)
    values = values[np.isfinite(values)]
    return float(values.mean()) if len(values) else None


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    if trials <= 0:
        raise ValueError("Wilson interval needs at least one trial")
    z = float(stats.norm.ppf(0.5 + confidence / 2))
    p = successes / trials
    denom = 1 + z**2 / trials
    centre = (p + z**2 / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z**2 / (4 * trials**2)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


_EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


def percolates(holes: np.ndarray, axis: Literal["x", "y"] = "y") -> bool:
    """Whether an 8-connected holon cluster touches both boundaries crossed when moving along ``axis``."""
    labels, count = ndimage.label(holes, structure=_EIGHT_CONNECTED)
    if count == 0:
        return False
    first, last = (labels[0, :], labels[-1, :]) if axis == "y" else (labels[:, 0], labels[:, -1])
    return bool(np.intersect1d(first[first > 0], last[last > 0]).size)


def percolation_fraction(
    shots: ShotTable,
    lattice: LatticeSpec,
    axis: Literal["x", "y"] = "y",
    selection: Optional[np.ndarray] = None,
    confidence: float = 0.95,
) -> tuple[float, tuple[float, float], int]:
    """
    Share of accepted shots with a spanning holon path, a Wilson interval and the accepted count.

    ``axis`` ``y`` asks for a path from the first to the last row (a vertical stripe).
    """
    if selection is not None:
        shots = shots.subset(selection)
    if shots.n_shots == 0:
        raise UndefinedEstimate("No accepted shots for the percolation fraction")
    grids = _site_grid(shots.classify(lattice) == HOLON, lattice)
    hits = sum(percolates(g, axis) for g in grids)
    return hits / shots.n_shots, wilson_interval(hits, shots.n_shots, confidence), shots.n_shots


@cache
def _monotone_paths(dx: int, dy: int) -> tuple[tuple[tuple[int, int], ...], ...]:
    """All shortest lattice paths from ``(0, 0)`` to ``(dx, dy)`` as vertex sequences."""
    sx, sy = (1 if dx >= 0 else -1), (1 if dy >= 0 else -1)
    nx, ny = abs(dx), abs(dy)
    paths = []
    for x_steps in combinations(range(nx + ny), nx):
        x, y = 0, 0
        vertices = [(0, 0)]
        chosen = set(x_steps)
        for k in range(nx + ny):
            if k in chosen:
                x += sx
            else:
                y += sy
            vertices.append((x, y))
        paths.append(tuple(vertices))
    return tuple(paths)


def _path_average(sz_grid: np.ndarray, start: tuple[int, int], end: tuple[int, int]) -> float:
    (x0, y0), (x1, y1) = start, end
    total = 0.0
    paths = _monotone_paths(x1 - x0, y1 - y0)
    for path in paths:
        for (ax, ay), (bx, by) in zip(path, path[1:]):
            total += sz_grid[y0 + ay, x0 + ax] * sz_grid[y0 + by, x0 + bx]
    return total / len(paths)


_KIND_CODES = {"holon": HOLON, "doublon": DOUBLON}


def wilson_lines(
    shots: ShotTable,
    lattice: LatticeSpec,
    distances: Sequence[int],
    kinds: tuple[str, str] = ("holon", "doublon"),
    normalisation: Literal["detected", "geometric"] = "detected",
) -> pd.DataFrame:
    """
    Path-averaged spin correlations between chargon pairs at fixed Manhattan distance.

    ``detected`` averages per shot over the detected pairs and then over shots with a pair;
    ``geometric`` divides each shot's sum by the number of site pairs at that distance and averages
    over all shots.

    Returns:
        Columns ``M, value, n_shots``; ``value`` is NaN where no shot contributes.
    """
    diameter = lattice.Lx + lattice.Ly - 2
    for M in distances:
        if not 1 <= M <= diameter:
            raise ValueError(f"Manhattan distance {M} outside 1..{diameter}")
    a_code, b_code = _KIND_CODES[kinds[0]], _KIND_CODES[kinds[1]]
    classes = shots.classify(lattice)
    sz = _SZ[classes]
    coords = [lattice.coords(s) for s in range(lattice.L)]
    symmetric = a_code == b_code
    rows = []
    for M in distances:
        geometric = sum(1 for i, j in combinations(range(lattice.L), 2) if lattice.manhattan(i, j) == M)
        per_shot = []
        for k in range(shots.n_shots):
            a_sites = np.flatnonzero(classes[k] == a_code)
            b_sites = np.flatnonzero(classes[k] == b_code)
            grid = sz[k].reshape(lattice.Ly, lattice.Lx)
            values = [
                _path_average(grid, coords[i], coords[j])
                for i in a_sites
                for j in b_sites
                if (not symmetric or i < j) and lattice.manhattan(int(i), int(j)) == M
            ]
            if normalisation == "geometric":
                per_shot.append(sum(values) / geometric if geometric else 0.0)
            elif values:
                per_shot.append(float(np.mean(values)))
        value = float(np.mean(per_shot)) if per_shot else float("nan")
        rows.append({"M": M, "value": value, "n_shots": len(per_shot)})
    return pd.DataFrame(rows)


def default_region(lattice: LatticeSpec) -> list[int]:
    """The 2x2 block containing the lattice centre."""
    cx = min((lattice.Lx - 1) // 2, lattice.Lx - 2)
    cy = min((lattice.Ly - 1) // 2, lattice.Ly - 2)
    return [lattice.site_index(cx + dx, cy + dy) for dy in (0, 1) for dx in (0, 1)]


def ipr_marginal(
    shots: ShotTable,
    lattice: LatticeSpec,
    region: Optional[Sequence[int]] = None,
    basis: Literal["full", "charge", "spin"] = "full",
    *,
    unbiased: bool = False,
) -> float:
    """
    Sum of squared empirical probabilities of the region's local configurations.

    ``unbiased`` replaces squared frequencies by the pair-collision estimator ``c(c-1)/(n(n-1))``.
    """
    region = list(default_region(lattice) if region is None else region)
    if len(region) > MAX_IPR_REGION:
        raise ValueError(f"Marginal IPR regions are limited to {MAX_IPR_REGION} sites, got {len(region)}")
    classes = shots.classify(lattice)[:, region].astype(np.int64)
    if basis == "charge":
        classes = _CHARGE_MAP[classes]
    elif basis == "spin":
        classes = _SPIN_MAP[classes]
    base = 4 if basis == "full" else 3
    keys = classes @ (base ** np.arange(len(region), dtype=np.int64))
    _, counts = np.unique(keys, return_counts=True)
    n = shots.n_shots
    if n == 0:
        raise UndefinedEstimate("No shots for the marginal IPR")
    if unbiased:
        if n < 2:
            raise UndefinedEstimate("The unbiased IPR needs at least two shots")
        return float(np.sum(counts * (counts - 1)) / (n * (n - 1)))
    return float(np.sum((counts / n) ** 2))


def ipr_iid_estimates(doublon_series: Sequence[float], Nup: int, Ndown: int, L: int, m: int) -> pd.DataFrame:
    """Full, charge and spin marginal IPRs of independent identically distributed sites."""
    nd = np.asarray(doublon_series, dtype=float)
    n0 = L - Nup - Ndown + nd
    n_up, n_down = Nup - nd, Ndown - nd
    full = ((n0 / L) ** 2 + (n_up / L) ** 2 + (n_down / L) ** 2 + (nd / L) ** 2) ** m
    charge = ((n0 / L) ** 2 + ((Nup + Ndown - 2 * nd) / L) ** 2 + (nd / L) ** 2) ** m
    spin = (((n0 + nd) / L) ** 2 + (n_up / L) ** 2 + (n_down / L) ** 2) ** m
    return pd.DataFrame({"N_d": nd, "full": full, "charge": charge, "spin": spin})


def ipr_ratios(full: float, charge: float, spin: float) -> dict[str, float]:
    if charge <= 0 or spin <= 0:
        raise UndefinedEstimate("IPR ratios need positive charge and spin IPRs")
    return {"full/charge": full / charge, "full/spin": full / spin, "spin/charge": spin / charge}


def _classes_of(source: Union[ShotTable, StateVector], lattice: LatticeSpec) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(source, ShotTable):
        return source.classify(lattice), np.full(source.n_shots, 1.0 / max(source.n_shots, 1))
    occupations = source.occupations
    positions = np.array(lattice.snake_order)
    classes = occupations[:, positions] + 2 * occupations[:, lattice.L + positions]
    return classes.astype(np.int8), source.probabilities()


def pairwise_distance(
    source: Union[ShotTable, StateVector], lattice: LatticeSpec, kind: Literal["holon", "doublon"] = "holon"
) -> tuple[float, float, Optional[float]]:
    """
    Ratio-of-means pair distance ``sum r_ij <x_i x_j> / sum <x_i x_j>``.

    Returns:
        Numerator, denominator and the ratio (None when no configuration has two such sites).
    """
    classes, weights = _classes_of(source, lattice)
    present = (classes == _KIND_CODES[kind]).astype(float)
    i, j = np.triu_indices(lattice.L, k=1)
    r = np.array([lattice.distance(int(a), int(b)) for a, b in zip(i, j)])
    pairs = present[:, i] * present[:, j]
    numerator = float(weights @ (pairs @ r))
    denominator = float(weights @ pairs.sum(axis=1))
    if denominator <= 0:
        return numerator, denominator, None
    return numerator, denominator, numerator / denominator


def pairwise_distance_suite(source: Union[ShotTable, StateVector], lattice: LatticeSpec) -> dict[str, Optional[float]]:
    result: dict[str, Optional[float]] = {}
    for kind, key in (("holon", "r_h"), ("doublon", "r_d")):
        num, den, value = pairwise_distance(source, lattice, kind)
        result[key] = value
        result[f"{key}_numerator"] = num
        result[f"{key}_denominator"] = den
    if result["r_h"] is None and result["r_d"] is None:
        raise UndefinedEstimate("No configuration holds two holons or two doublons")
    return result


def staggered_magnetisation_shots(shots: ShotTable, lattice: LatticeSpec) -> np.ndarray:
    stagger = np.array([lattice.stagger(s) for s in range(lattice.L)])
    return np.asarray(shots.spin_z(lattice) @ stagger / lattice.L, dtype=float)


def ms_distribution(shots: ShotTable, lattice: LatticeSpec) -> dict[str, object]:
    """
    Histogram of the per-shot staggered magnetisation with a moment-matched Gaussian.

    Within a particle sector ``M_s`` moves in steps of ``2/L``; the Gaussian is integrated over
    bins of that width centred on the grid. A zero-variance sample, such as the Néel state at
    t = 0, has no Gaussian to match and is compared to a point mass at its mean, so its TVD is
    zero rather than undefined.
    """
    if shots.n_shots < MIN_MS_SHOTS:
        raise ValueError(f"M_s distribution needs at least {MIN_MS_SHOTS} shots, got {shots.n_shots}")
    L = lattice.L
    ticks = np.rint(staggered_magnetisation_shots(shots, lattice) * L).astype(np.int64)
    parity = int(ticks[0] % 2)
    grid_ticks = np.arange(-L + ((L + parity) % 2), L + 1, 2)
    probs = np.array([np.mean(ticks == g) for g in grid_ticks])
    grid = grid_ticks / L
    mean = float(ticks.mean() / L)
    variance = float(ticks.var() / L**2)
    if variance > 0:
        sd = math.sqrt(variance)
        gauss = stats.norm.cdf((grid + 1 / L - mean) / sd) - stats.norm.cdf((grid - 1 / L - mean) / sd)
    else:
        gauss = (np.abs(grid - mean) < 1e-12).astype(float)
    if not np.all(ticks % 2 == parity):
        logger.warning("Shots from different particle sectors mixed in the M_s distribution")
    tvd = 0.5 * float(np.sum(np.abs(probs - gauss)))
    return {"m": grid, "P": probs, "mean": mean, "variance": variance, "gaussian": gauss, "tvd": tvd}


def doublon_number(table: ExpectationTable) -> float:
    return float(table.doublon().sum())


def charge_imbalance(shots: ShotTable, lattice: LatticeSpec) -> np.ndarray:
    """Per-shot holon count minus doublon count."""
    classes = shots.classify(lattice)
    return np.asarray((classes == HOLON).sum(axis=1) - (classes == DOUBLON).sum(axis=1))


def doublon_scaling_check(
    t1: Sequence[float],
    nd1: Sequence[float],
    U1: float,
    t2: Sequence[float],
    nd2: Sequence[float],
    U2: float,
    t_max: float = 0.5,
) -> float:
    """
    Early-time collapse residual ``max |N_d^U1(t) - (U2/U1)^2 N_d^U2(U1 t / U2)|`` over ``t <= t_max``.
    """
    if U1 <= 0 or U2 <= 0:
        raise ValueError(f"Doublon scaling needs positive interactions, got U1={U1}, U2={U2}")
    times1, values1 = np.asarray(t1, dtype=float), np.asarray(nd1, dtype=float)
    times2, values2 = np.asarray(t2, dtype=float), np.asarray(nd2, dtype=float)
    rescaled = U1 * times1 / U2
    window = (times1 <= t_max + 1e-12) & (rescaled >= times2.min() - 1e-12) & (rescaled <= times2.max() + 1e-12)
    if window.sum() < 2:
        raise ValueError("Insufficient overlap between the rescaled series")
    predicted = (U2 / U1) ** 2 * np.interp(rescaled[window], times2, values2)
    return float(np.max(np.abs(values1[window] - predicted)))


RESULT_COLUMNS = ["observable", "t", "U", "flux", "value", "error", "method", "clamped"]


def results_frame(rows: Sequence[Mapping[str, object]]) -> pd.DataFrame:
    """Results table with columns ``RESULT_COLUMNS``; rows without a ``clamped`` flag are not clamped."""
    return pd.DataFrame([{"clamped": False, **row} for row in rows], columns=RESULT_COLUMNS)


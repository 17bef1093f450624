"""
Error mitigation.

This module provides:
- Post-selection on particle number, doublon count and background AFM order
- Readout untwirling of X-masked measurements
- Training-based mitigation against free-fermion (U=0) references in three stages
- Maximum-entropy shot reweighting
- Gaussian-process smoothing of time series
- Symmetry averaging, twirl error bars and nested bootstrap
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from itertools import product
from pathlib import Path

import numpy as np
import pandas as pd
from beartype.typing import Any, Callable, Literal, Mapping, Optional, Sequence, Union
from loguru import logger
from scipy.optimize import minimize
from sklearn.gaussian_process import GaussianProcessRegressor
from sklearn.gaussian_process.kernels import RBF

from fermihub.fermihublib.defs import MitigationError, ShotPipeline, Spin
from fermihub.fermihublib.model import InitialStateSpec, LatticeSpec
from fermihub.fermihublib.observables import afm_values
from fermihub.fermihublib.shots import DOUBLON, ShotTable

# Ratio of the exact series range to the mean error bar needed for a plain first-stage fit.
SNR_THRESHOLD = 3.0

MESR_REGULARISATION = 1e-3

# Multiplier lambda norm beyond which an unregularised MESR run counts as diverged.
MESR_LAMBDA_BOUND = 50.0

GPR_LENGTH_SCALE = 0.4
GPR_SIGMA = 1.5

Ansatz = Literal["linear", "linear_linear"]


@dataclass(frozen=True)
class PostselectionFilter:
    """
    Shot acceptance rule.

    ``max_hamming_err`` bounds the per-sector deviation of the particle number from the target
    (0 is strict); ``doublon_range`` lists allowed doublon counts; ``afm_interval`` bounds the
    background AFM order of the shot.
    """

    n_up: int
    n_down: int
    max_hamming_err: int = 0
    doublon_range: Optional[tuple[int, ...]] = None
    afm_interval: Optional[tuple[float, float]] = None

    def __post_init__(self) -> None:
        if self.max_hamming_err < 0:
            raise ValueError(f"max_hamming_err must be >= 0, got {self.max_hamming_err}")
        if self.afm_interval is not None:
            lo, hi = self.afm_interval
            if not -1.0 <= lo <= hi <= 1.0:
                raise ValueError(f"AFM interval {self.afm_interval} must lie within [-1, 1]")


def postselection_mask(shots: ShotTable, filt: PostselectionFilter, lattice: LatticeSpec) -> np.ndarray:
    up, down = shots.sector_counts(lattice)
    keep = (np.abs(up - filt.n_up) <= filt.max_hamming_err) & (np.abs(down - filt.n_down) <= filt.max_hamming_err)
    if filt.doublon_range is not None:
        doublons = (shots.classify(lattice) == DOUBLON).sum(axis=1)
        keep &= np.isin(doublons, np.array(filt.doublon_range))
    if filt.afm_interval is not None:
        afm = afm_values(shots, lattice)
        lo, hi = filt.afm_interval
        with np.errstate(invalid="ignore"):
            keep &= np.isfinite(afm) & (afm >= lo) & (afm <= hi)
    return keep


def postselect(shots: ShotTable, filt: PostselectionFilter, lattice: LatticeSpec) -> tuple[ShotTable, float]:
    """Keep accepted shots; returns the filtered table and the acceptance fraction."""
    keep = postselection_mask(shots, filt, lattice)
    acceptance = float(keep.mean()) if len(keep) else 0.0
    if not keep.any():
        logger.warning(f"Post-selection rejected all {shots.n_shots} shots")
    else:
        logger.debug(f"Post-selection kept {int(keep.sum())}/{shots.n_shots} shots ({acceptance:.2%})")
    return shots.subset(keep), acceptance


def acceptance_curve(
    shots: ShotTable, n_up: int, n_down: int, lattice: LatticeSpec, max_errors: Sequence[int] = range(9)
) -> pd.DataFrame:
    """Acceptance fraction as a function of the allowed per-sector particle-number error."""
    rows = []
    for err in max_errors:
        keep = postselection_mask(shots, PostselectionFilter(n_up, n_down, max_hamming_err=err), lattice)
        rows.append({"max_hamming_err": err, "accepted": int(keep.sum()), "acceptance": float(keep.mean())})
    return pd.DataFrame(rows)


def readout_untwirl(shots: ShotTable, *, force: bool = False) -> ShotTable:
    """
    XOR the recorded readout masks into the bits.

    A table whose masks were already consumed is returned unchanged unless ``force`` is set.
    """
    if shots.masks is None:
        raise MitigationError("Shots carry no readout mask to untwirl")
    if shots.mask_consumed and not force:
        logger.warning("Readout masks already consumed; leaving shots unchanged")
        return shots
    return replace(
        shots,
        bits=shots.bits ^ shots.masks,
        twirl_ids=shots.twirl_ids.copy(),
        mask_consumed=not shots.mask_consumed,
    )


def z_products(bits: np.ndarray, subsets: Sequence[Sequence[int]]) -> np.ndarray:
    """Per-shot values of ``prod Z`` (``Z = 1 - 2n``) for each mode subset, shape ``(n_shots, n_subsets)``."""
    z = 1 - 2 * np.asarray(bits, dtype=np.int8)
    out = np.ones((z.shape[0], len(subsets)), dtype=np.int8)
    for k, subset in enumerate(subsets):
        if subset:
            out[:, k] = np.prod(z[:, list(subset)], axis=1)
    return out


def shot_z_expectations(
    shots: ShotTable, subsets: Sequence[Sequence[int]], weights: Optional[np.ndarray] = None
) -> tuple[np.ndarray, np.ndarray]:
    """Means and standard errors of Z-strings over shots, optionally importance weighted."""
    values = z_products(shots.bits, subsets).astype(float)
    n = len(values)
    if n == 0:
        raise MitigationError("No shots to estimate expectations from")
    if weights is None:
        mean = values.mean(axis=0)
        err = values.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(len(subsets))
        return mean, err
    w = np.asarray(weights, dtype=float)
    mean = w @ values
    var = w @ (values - mean) ** 2
    n_eff = 1.0 / float(np.sum(w**2))
    return mean, np.sqrt(var / max(n_eff, 1.0))


def observable_group(subset: Sequence[int], lattice: LatticeSpec) -> str:
    """Observable class by qubit weight and whether it spans more than one lattice site."""
    sites = {lattice.mode_site(m)[0] for m in subset}
    return f"w{len(subset)}-{'cross' if len(sites) > 1 else 'same'}"


@dataclass(frozen=True)
class TFLOFit:
    """``O_exact = m * O_noisy + c * t + b``; ``c`` is zero for the plain linear ansatz."""

    m: float
    b: float
    c: float = 0.0
    ansatz: str = "linear"
    group: str = "all"
    prior_mean: tuple[float, ...] = ()
    residual: float = 0.0

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.m, self.b, self.c)):
            raise ValueError(f"Non-finite TFLO coefficients m={self.m}, b={self.b}, c={self.c}")

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["prior_mean"] = list(self.prior_mean)
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TFLOFit":
        return cls(
            m=float(data["m"]),
            b=float(data["b"]),
            c=float(data.get("c", 0.0)),
            ansatz=str(data.get("ansatz", "linear")),
            group=str(data.get("group", "all")),
            prior_mean=tuple(float(v) for v in data.get("prior_mean", [])),
            residual=float(data.get("residual", 0.0)),
        )


def _design(noisy: np.ndarray, t: np.ndarray, ansatz: str) -> np.ndarray:
    if ansatz == "linear":
        return np.column_stack([noisy, np.ones_like(noisy)])
    return np.column_stack([noisy, t, np.ones_like(noisy)])


def _aligned(noisy: pd.DataFrame, exact: pd.DataFrame) -> pd.DataFrame:
    merged = noisy.merge(exact[["observable", "t", "value"]], on=["observable", "t"], suffixes=("_noisy", "_exact"))
    if "error" not in merged:
        merged["error"] = 0.0
    return merged.sort_values(["observable", "t"])


def tflo_fit(
    noisy: pd.DataFrame,
    exact: pd.DataFrame,
    ansatz: Ansatz = "linear_linear",
    *,
    groups: Optional[Mapping[str, str]] = None,
    snr_threshold: float = SNR_THRESHOLD,
) -> dict[str, TFLOFit]:
    """
    Three-stage TFLO fit.

    Args:
        noisy: Columns ``observable, t, value, error`` from the U~0 training circuits.
        exact: Columns ``observable, t, value`` from the free-fermion engine.
        ansatz: ``linear`` (m, b) or ``linear_linear`` (m, c, b).
        groups: Observable -> group id for the priors; one shared group by default.
        snr_threshold: Minimum exact range over mean error bar for a first-stage fit.

    Returns:
        The fit per observable.
    """
    data = _aligned(noisy, exact)
    if data.empty:
        raise MitigationError("No overlapping (observable, t) points between noisy and exact series")
    n_params = 2 if ansatz == "linear" else 3
    series = {name: frame for name, frame in data.groupby("observable", sort=True)}
    for name, frame in series.items():
        if len(frame) < 3:
            raise MitigationError(f"Observable {name} has {len(frame)} time points; TFLO needs at least 3")
    group_of = {name: (groups or {}).get(name, "all") for name in series}

    stage_one: dict[str, np.ndarray] = {}
    for name, frame in series.items():
        exact_values = frame["value_exact"].to_numpy()
        err = float(frame["error"].mean())
        snr = np.ptp(exact_values) / err if err > 0 else (np.inf if np.ptp(exact_values) > 0 else 0.0)
        if snr >= snr_threshold:
            X = _design(frame["value_noisy"].to_numpy(), frame["t"].to_numpy(), ansatz)
            stage_one[name] = np.linalg.lstsq(X, exact_values, rcond=None)[0]
    logger.debug(f"TFLO stage one fitted {len(stage_one)}/{len(series)} observables")

    identity = np.array([1.0, 0.0] if ansatz == "linear" else [1.0, 0.0, 0.0])
    fallback = _prior(list(stage_one.values()), identity, n_params)
    priors = {}
    for group in set(group_of.values()):
        members = [stage_one[n] for n in stage_one if group_of[n] == group]
        priors[group] = _prior(members, fallback[0], n_params) if len(members) >= 2 else fallback

    fits = {}
    for name, frame in series.items():
        mean, cov = priors[group_of[name]]
        X = _design(frame["value_noisy"].to_numpy(), frame["t"].to_numpy(), ansatz)
        y = frame["value_exact"].to_numpy()
        w = 1.0 / np.maximum(frame["error"].to_numpy(), 1e-6) ** 2
        precision = np.linalg.inv(cov)
        theta = np.linalg.solve(X.T @ (w[:, None] * X) + precision, X.T @ (w * y) + precision @ mean)
        residual = float(np.sqrt(np.mean((X @ theta - y) ** 2)))
        m, rest = float(theta[0]), theta[1:]
        c, b = (0.0, float(rest[0])) if ansatz == "linear" else (float(rest[0]), float(rest[1]))
        fits[name] = TFLOFit(
            m=m,
            b=b,
            c=c,
            ansatz=ansatz,
            group=group_of[name],
            prior_mean=tuple(float(v) for v in mean),
            residual=residual,
        )
    return fits


def _prior(members: Sequence[np.ndarray], default_mean: np.ndarray, n_params: int) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of first-stage coefficients; broad around ``default_mean`` when too few."""
    if len(members) < 2:
        return np.asarray(default_mean, dtype=float), np.eye(n_params) * 1e4
    stacked = np.vstack(members)
    return stacked.mean(axis=0), np.cov(stacked, rowvar=False) + np.eye(n_params) * 1e-6


def tflo_apply(
    fit: Union[TFLOFit, Mapping[str, TFLOFit]],
    noisy_value: float,
    t: float,
    *,
    observable: Optional[str] = None,
    clamp: bool = True,
) -> tuple[float, bool]:
    """
    ``m * O + c * t + b`` for one observable.

    Returns:
        The mitigated value and whether it was clamped to ``[-1, 1]``.
    """
    if not isinstance(fit, TFLOFit):
        if observable is None or observable not in fit:
            raise MitigationError(f"No TFLO fit for observable {observable!r}")
        fit = fit[observable]
    value = fit.m * noisy_value + fit.c * t + fit.b
    if clamp and abs(value) > 1.0:
        logger.warning(f"TFLO result {value:.4f} clamped to the Pauli range")
        return float(np.clip(value, -1.0, 1.0)), True
    return float(value), False


@dataclass(frozen=True)
class MESRResult:
    lambdas: np.ndarray
    weights: np.ndarray
    n_eff: float
    converged: bool
    c_reg: float
    diverged: bool = False
    objective: float = 0.0

    def expectations(self, values: np.ndarray) -> np.ndarray:
        """Reweighted means of per-shot ``values`` (n_shots x k)."""
        return np.asarray(self.weights @ values, dtype=float)


def mesr_objective(lambdas: np.ndarray, values: np.ndarray, targets: np.ndarray, c_reg: float) -> float:
    """``log mean exp(lambda . O) - lambda . target + c |lambda|^2``."""
    logits = values @ lambdas
    top = logits.max()
    log_z = top + math.log(float(np.mean(np.exp(logits - top))))
    return float(log_z - lambdas @ targets + c_reg * lambdas @ lambdas)


def _tilted(values: np.ndarray, lambdas: np.ndarray) -> np.ndarray:
    logits = values @ lambdas
    weights = np.exp(logits - logits.max())
    return np.asarray(weights / weights.sum())


def mesr(
    values: np.ndarray,
    targets: np.ndarray,
    c_reg: float = MESR_REGULARISATION,
    *,
    max_iter: int = 500,
    tol: float = 1e-6,
) -> MESRResult:
    """
    Maximum-entropy reweighting of shots so that weighted observable means hit ``targets``.

    Args:
        values: Per-shot observable values, shape ``(n_shots, k)``.
        targets: Corrected expectation values, length ``k``.
        c_reg: Ridge on the multipliers.
        max_iter: L-BFGS-B iteration cap.
        tol: Gradient norm tolerance.

    Returns:
        Multipliers, shot weights ``p ~ exp(lambda . O)`` and the effective sample size.
    """
    values = np.asarray(values, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if values.ndim != 2 or values.shape[1] != len(targets):
        raise ValueError(f"values shape {values.shape} does not match {len(targets)} targets")
    if not np.all(np.isfinite(targets)):
        raise ValueError("MESR targets must be finite")

    def fun(lam: np.ndarray) -> tuple[float, np.ndarray]:
        weights = _tilted(values, lam)
        grad = weights @ values - targets + 2 * c_reg * lam
        return mesr_objective(lam, values, targets, c_reg), grad

    result = minimize(
        fun,
        np.zeros(len(targets)),
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": max_iter, "gtol": tol, "ftol": 1e-15},
    )
    lambdas = np.asarray(result.x)
    weights = _tilted(values, lambdas)
    grad_norm = float(np.linalg.norm(weights @ values - targets + 2 * c_reg * lambdas))
    diverged = bool(np.linalg.norm(lambdas) > MESR_LAMBDA_BOUND)
    if diverged:
        logger.warning(f"MESR multipliers diverged (|lambda| = {np.linalg.norm(lambdas):.1f}); constraints infeasible?")
    n_eff = 1.0 / float(np.sum(weights**2))
    logger.debug(f"MESR: {len(targets)} constraints, n_eff={n_eff:.1f}/{len(values)}, |grad|={grad_norm:.2e}")
    return MESRResult(
        lambdas=lambdas,
        weights=weights,
        n_eff=n_eff,
        converged=grad_norm <= 10 * tol and not diverged,
        c_reg=c_reg,
        diverged=diverged,
        objective=float(result.fun),
    )


def mesr_constraints(lattice: LatticeSpec) -> list[tuple[int, ...]]:
    """Every single-mode Z, ZZ on lattice-adjacent same-spin pairs and on-site up/down ZZ."""
    subsets: list[tuple[int, ...]] = [(m,) for m in range(lattice.n_qubits)]
    for spin in Spin:
        for edge in lattice.edges:
            a, b = lattice.mode_index(edge.i, spin), lattice.mode_index(edge.j, spin)
            subsets.append((min(a, b), max(a, b)))
    for site in range(lattice.L):
        subsets.append((lattice.mode_index(site, Spin.UP), lattice.mode_index(site, Spin.DOWN)))
    return subsets


@dataclass(frozen=True)
class GPRResult:
    t: np.ndarray
    mean: np.ndarray
    std: np.ndarray

    @property
    def lower(self) -> np.ndarray:
        return self.mean - self.std

    @property
    def upper(self) -> np.ndarray:
        return self.mean + self.std


def gpr_smooth(
    t: Sequence[float],
    values: Sequence[float],
    errors: Sequence[float],
    length_scale: float = GPR_LENGTH_SCALE,
    sigma: float = GPR_SIGMA,
    t_eval: Optional[Sequence[float]] = None,
) -> GPRResult:
    """
    Gaussian-process posterior with a unit squared-exponential kernel and per-point noise
    ``(sigma * error)^2``; the band is one posterior standard deviation.
    """
    x = np.asarray(t, dtype=float)
    y = np.asarray(values, dtype=float)
    err = np.asarray(errors, dtype=float)
    if len(x) < 2 or not len(x) == len(y) == len(err):
        raise ValueError("GPR needs at least two points with matching values and errors")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y)) and np.all(np.isfinite(err))):
        raise ValueError("GPR inputs must be finite")
    gp = GaussianProcessRegressor(
        kernel=RBF(length_scale=length_scale, length_scale_bounds="fixed"),
        alpha=np.maximum((sigma * err) ** 2, 1e-10),
        optimizer=None,
        normalize_y=False,
    )
    gp.fit(x[:, None], y)
    grid = x if t_eval is None else np.asarray(t_eval, dtype=float)
    mean, std = gp.predict(grid[:, None], return_std=True)
    return GPRResult(t=grid, mean=np.asarray(mean), std=np.asarray(std))


def _site_maps(lattice: LatticeSpec) -> list[tuple[int, ...]]:
    """Site permutations of the lattice reflections (and transposes on square lattices)."""
    Lx, Ly = lattice.Lx, lattice.Ly
    transforms: list[Callable[[int, int], tuple[int, int]]] = [
        lambda x, y: (x, y),
        lambda x, y: (Lx - 1 - x, y),
        lambda x, y: (x, Ly - 1 - y),
        lambda x, y: (Lx - 1 - x, Ly - 1 - y),
    ]
    if Lx == Ly:
        transforms += [
            lambda x, y: (y, x),
            lambda x, y: (Ly - 1 - y, Lx - 1 - x),
            lambda x, y: (Ly - 1 - y, x),
            lambda x, y: (y, Lx - 1 - x),
        ]
    maps = []
    for f in transforms:
        maps.append(tuple(lattice.site_index(*f(*lattice.coords(s))) for s in range(lattice.L)))
    return maps


def symmetry_group(lattice: LatticeSpec, state: InitialStateSpec) -> list[tuple[int, ...]]:
    """Mode permutations (reflection, optional spin flip) leaving the initial state invariant."""
    group = []
    holes = set(state.hole_sites)
    pairs = {frozenset(p) for p in state.singlet_pairs}
    for site_map, flip in product(_site_maps(lattice), (False, True)):
        up = {site_map[s] for s in state.up_sites}
        down = {site_map[s] for s in state.down_sites}
        if flip:
            up, down = down, up
        if (
            {site_map[s] for s in holes} == holes
            and up == set(state.up_sites)
            and down == set(state.down_sites)
            and {frozenset(site_map[s] for s in p) for p in pairs} == pairs
        ):
            modes = [0] * lattice.n_qubits
            for site in range(lattice.L):
                for spin in Spin:
                    target = Spin(1 - spin.value) if flip else spin
                    modes[lattice.mode_index(site, spin)] = lattice.mode_index(site_map[site], target)
            group.append(tuple(modes))
    return sorted(set(group))


def symmetry_average(
    expectations: Mapping[tuple[int, ...], float], lattice: LatticeSpec, state: InitialStateSpec
) -> tuple[dict[tuple[int, ...], float], list[list[tuple[int, ...]]]]:
    """
    Replace each Z-string expectation by the mean over its symmetry orbit.

    Returns:
        The averaged table and the orbit partition of its keys.
    """
    group = symmetry_group(lattice, state)
    averaged: dict[tuple[int, ...], float] = {}
    orbits: list[list[tuple[int, ...]]] = []
    seen: set[tuple[int, ...]] = set()
    for key in sorted(expectations):
        if key in seen:
            continue
        orbit = sorted({tuple(sorted(g[m] for m in key)) for g in group} & set(expectations))
        seen.update(orbit)
        orbits.append(orbit)
        mean = float(np.mean([expectations[k] for k in orbit]))
        for k in orbit:
            averaged[k] = mean
    logger.debug(f"Symmetry averaging: {len(group)} group elements, {len(expectations)} keys in {len(orbits)} orbits")
    return averaged, orbits


@dataclass(frozen=True)
class TwirlStats:
    """Per-twirl sample means and variances of one observable."""

    means: np.ndarray
    variances: np.ndarray
    n_shots: int

    def __post_init__(self) -> None:
        if len(self.means) < 2:
            raise ValueError(f"Error propagation needs at least 2 twirl instances, got {len(self.means)}")
        if len(self.variances) != len(self.means):
            raise ValueError("One variance per twirl instance is required")

    @property
    def n_twirls(self) -> int:
        return len(self.means)

    @classmethod
    def from_samples(cls, samples: Sequence[np.ndarray]) -> "TwirlStats":
        n_shots = min(len(s) for s in samples)
        return cls(
            means=np.array([np.mean(s) for s in samples]),
            variances=np.array([np.var(s, ddof=1) if len(s) > 1 else 0.0 for s in samples]),
            n_shots=n_shots,
        )


def propagate_error(stats: TwirlStats) -> float:
    """Standard error of the twirl-averaged mean from between- and within-twirl variances."""
    nt, ns = stats.n_twirls, stats.n_shots
    mu = float(np.mean(stats.means))
    between = float(np.sum((stats.means - mu) ** 2)) / (nt * (nt - 1))
    within = float(np.sum(stats.variances)) / (nt**2 * ns) if ns > 0 else 0.0
    return math.sqrt(between + within)


def bootstrap(
    shots_by_twirl: Mapping[int, ShotTable] | Sequence[ShotTable],
    pipeline: ShotPipeline,
    n_resamples: int = 100,
    seed: int = 0,
) -> np.ndarray:
    """
    Nested bootstrap: resample twirl instances with replacement, then shots within each.

    Returns:
        The standard deviation of the pipeline output over resamples (elementwise for arrays).
    """
    if n_resamples < 10:
        raise ValueError(f"Bootstrap needs at least 10 resamples, got {n_resamples}")
    tables = list(shots_by_twirl.values()) if isinstance(shots_by_twirl, Mapping) else list(shots_by_twirl)
    if not tables:
        raise MitigationError("No twirl instances to bootstrap")
    rng = np.random.default_rng(seed)
    outputs = []
    for _ in range(n_resamples):
        picks = rng.integers(0, len(tables), size=len(tables))
        resampled = [tables[k].subset(rng.integers(0, tables[k].n_shots, size=tables[k].n_shots)) for k in picks]
        outputs.append(np.asarray(pipeline(ShotTable.concat(resampled)), dtype=float))
    return np.asarray(np.std(np.stack(outputs), axis=0, ddof=1))


@dataclass
class MitigationModel:
    """Everything needed to replay a mitigation recipe, persisted as JSON."""

    recipe: str = "tflo"
    tflo: dict[str, TFLOFit] = field(default_factory=dict)
    mesr_constraints: list[tuple[int, ...]] = field(default_factory=list)
    mesr_lambdas: list[float] = field(default_factory=list)
    mesr_c_reg: float = MESR_REGULARISATION
    gpr_length_scale: float = GPR_LENGTH_SCALE
    gpr_sigma: float = GPR_SIGMA
    snr_threshold: float = SNR_THRESHOLD

    def to_dict(self) -> dict[str, Any]:
        return {
            "recipe": self.recipe,
            "tflo": {name: fit.to_dict() for name, fit in self.tflo.items()},
            "mesr": {
                "constraints": [list(c) for c in self.mesr_constraints],
                "lambdas": list(self.mesr_lambdas),
                "c_reg": self.mesr_c_reg,
            },
            "gpr": {"length_scale": self.gpr_length_scale, "sigma": self.gpr_sigma},
            "snr_threshold": self.snr_threshold,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "MitigationModel":
        fits = {}
        for name, raw in data.get("tflo", {}).items():
            try:
                fits[name] = TFLOFit.from_dict(raw)
            except (KeyError, ValueError, TypeError) as e:
                logger.error(f"Skipping malformed TFLO fit {name!r}: {e}")
        mesr_data = data.get("mesr", {})
        gpr_data = data.get("gpr", {})
        return cls(
            recipe=str(data.get("recipe", "tflo")),
            tflo=fits,
            mesr_constraints=[tuple(int(m) for m in c) for c in mesr_data.get("constraints", [])],
            mesr_lambdas=[float(v) for v in mesr_data.get("lambdas", [])],
            mesr_c_reg=float(mesr_data.get("c_reg", MESR_REGULARISATION)),
            gpr_length_scale=float(gpr_data.get("length_scale", GPR_LENGTH_SCALE)),
            gpr_sigma=float(gpr_data.get("sigma", GPR_SIGMA)),
            snr_threshold=float(data.get("snr_threshold", SNR_THRESHOLD)),
        )

    def save_to_file(self, file_path: Path) -> None:
        with open(file_path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2)

    @classmethod
    def load_from_file(cls, file_path: Path) -> "MitigationModel":
        with open(file_path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

"""
Experiment orchestration.

``run_pipeline`` turns an ``ExperimentConfig`` into an artifact directory: compiled-circuit statistics,
raw twirled shots per (t, U, flux) cell, exact references, mitigated expectations, observable suites,
XEB reports and a provenance manifest. Every stage records a ``StageStatus`` instead of aborting the run,
and every stage result is keyed in the content-addressed cache so an unchanged rerun recomputes nothing.

``reproduce_report`` runs the scaled-down checks of the claim registry.
"""

from __future__ import annotations

import hashlib
import importlib.metadata
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from itertools import combinations
from pathlib import Path

import numpy as np
import pandas as pd
from beartype.typing import Any, Callable, Iterable, Literal, Mapping, Optional, Sequence, Union
from loguru import logger

from fermihub.fermihublib import flo, observables
from fermihub.fermihublib.cache import Cache, ResultCache
from fermihub.fermihublib.circuits import (
    CircuitIR,
    TrotterPlan,
    build_trotter_circuit,
    decompose_to_native,
    gate_stats,
    twirl,
)
from fermihub.fermihublib.config import ExperimentConfig, config_hash
from fermihub.fermihublib.defs import FermiHubError, MitigationError, StateKind, UndefinedEstimate
from fermihub.fermihublib.mitigation import (
    MitigationModel,
    PostselectionFilter,
    TwirlStats,
    acceptance_curve,
    bootstrap,
    gpr_smooth,
    mesr,
    mesr_constraints,
    observable_group,
    postselect,
    propagate_error,
    readout_untwirl,
    shot_z_expectations,
    symmetry_average,
    tflo_apply,
    tflo_fit,
    z_products,
)
from fermihub.fermihublib.model import (
    InitialStateSpec,
    LatticeSpec,
    ModelSpec,
    build_initial_state,
    build_model,
    expected_pair_distance,
)
from fermihub.fermihublib.shots import ShotTable
from fermihub.fermihublib.statevec import evolve_exact, run_noisy, trotter_error_report
from fermihub.fermihublib.xeb import linear_xeb

Cell = tuple[str, float, float]

_VERSIONED_PACKAGES = ("numpy", "scipy", "pandas", "scikit-learn")

# Early-time window of the doublon-number collapse between interaction strengths.
DOUBLON_SCALING_WINDOW = 0.5


@dataclass
class StageStatus:
    stage: str
    ok: bool = True
    message: str = ""
    counts: dict[str, int] = field(default_factory=dict)

    def bump(self, key: str, n: int = 1) -> None:
        self.counts[key] = self.counts.get(key, 0) + n

    def fail(self, message: str) -> None:
        self.ok = False
        self.message = f"{self.message}; {message}" if self.message else message

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class PipelineResult:
    output_dir: Path
    config_hash: str
    stages: list[StageStatus] = field(default_factory=list)
    artifacts: dict[str, str] = field(default_factory=dict)

    def has_errors(self) -> bool:
        return any(not s.ok for s in self.stages)

    def stage(self, name: str) -> StageStatus:
        for status in self.stages:
            if status.stage == name:
                return status
        raise KeyError(f"No stage named {name!r}")

    def recomputed(self) -> int:
        """Number of stage cells computed in this run (zero when everything came from the cache)."""
        return sum(s.counts.get("computed", 0) for s in self.stages)


def cell_name(cell: Cell) -> str:
    flux, U, t = cell
    return f"{flux}_U{U:g}_t{t:g}"


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def write_csv(frame: pd.DataFrame, path: Path, header: Mapping[str, Any]) -> None:
    """CSV preceded by ``# key: value`` manifest lines; read back with ``read_csv``."""
    lines = "".join(f"# {key}: {value}\n" for key, value in header.items())
    _atomic_write_text(path, lines + frame.to_csv(index=False, lineterminator="\n"))


def read_csv(path: Path) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")


def package_versions(fermihub_version: str) -> dict[str, str]:
    versions = {"fermihub": fermihub_version}
    for name in _VERSIONED_PACKAGES:
        try:
            versions[name] = importlib.metadata.version(name)
        except importlib.metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


def inject_bitflip(shots: ShotTable, p: float, seed: int) -> ShotTable:
    """Flip every bit independently with probability ``p``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"Bitflip probability must lie in [0, 1], got {p}")
    if p == 0:
        return shots.with_bits(shots.bits.copy())
    flips = (np.random.default_rng(seed).random(shots.bits.shape) < p).astype(np.uint8)
    return shots.with_bits(shots.bits ^ flips)


def obs_name(subset: Sequence[int]) -> str:
    return "Z" + "_".join(str(m) for m in subset)


def native_cell_circuit(config: ExperimentConfig, model: ModelSpec, t: float) -> CircuitIR:
    """Compiled Trotter circuit of one cell; t = 0 is an empty native circuit."""
    lattice = model.lattice
    if t <= 0:
        metadata = {"Lx": lattice.Lx, "Ly": lattice.Ly, "U": model.U, "flux": model.flux.value, "t": 0.0}
        return CircuitIR(n_qubits=lattice.n_qubits, metadata={**metadata, "native": True})
    plan = TrotterPlan.for_time(t, config.layer_schedule)
    return decompose_to_native(build_trotter_circuit(model, None, plan))


class _Run:
    """State shared by the stages of one pipeline run."""

    def __init__(self, config: ExperimentConfig, cache: ResultCache, use_cache: bool, version: str) -> None:
        self.config = config
        self.cache = cache
        self.use_cache = use_cache
        self.version = version
        self.hash = config_hash(config)
        self.out = Path(config.output_dir)
        self.lattice = config.lattice
        self.result = PipelineResult(output_dir=self.out, config_hash=self.hash)
        self.shots: dict[Cell, ShotTable] = {}
        self.exact: dict[Cell, observables.ExpectationTable] = {}
        self.subsets = mesr_constraints(self.lattice)

    @property
    def header(self) -> dict[str, Any]:
        return {"fermihub": self.version, "config_hash": self.hash, "seed": self.config.seed}

    def cells(self, with_training: bool = False) -> list[Cell]:
        U_values = sorted(set(self.config.U) | ({0.0} if with_training else set()))
        return [(flux, float(U), float(t)) for flux in self.config.flux for U in U_values for t in self.config.times]

    def model(self, cell: Cell) -> ModelSpec:
        return self.config.model(cell[1], cell[0])

    def state(self, model: ModelSpec) -> InitialStateSpec:
        return self.config.initial_state(model)

    def fresh(self, stage: str, path: Path, cell: tuple[Any, ...] = ()) -> bool:
        """True if ``path`` still holds the artifact the cache recorded for this stage."""
        if not self.use_cache or not path.exists():
            return False
        payload = self.cache.fetch(self.hash, stage, cell)
        return payload is not None and payload.get("sha256") == _digest(path)

    def record(self, stage: str, path: Path, cell: tuple[Any, ...] = ()) -> None:
        self.cache.store(self.hash, stage, cell, {"path": str(path), "sha256": _digest(path)})
        self.result.artifacts[path.relative_to(self.out).as_posix()] = _digest(path)

    def note_cached(self, path: Path) -> None:
        self.result.artifacts[path.relative_to(self.out).as_posix()] = _digest(path)


def _stage_circuits(run: _Run) -> StageStatus:
    status = StageStatus("circuits")
    path = run.out / "circuits.csv"
    if run.fresh("circuits", path):
        run.note_cached(path)
        status.bump("cached")
        return status
    rows = []
    for flux in run.config.flux:
        for U in run.config.U:
            model = run.config.model(U, flux)
            for t in run.config.times:
                if t <= 0:
                    continue
                native = native_cell_circuit(run.config, model, t)
                stats = gate_stats(native)
                rows.append(
                    {
                        "size": run.lattice.size_label,
                        "t": t,
                        "U": U,
                        "flux": flux,
                        "n_layers": TrotterPlan.for_time(t, run.config.layer_schedule).n_layers,
                        **stats.to_dict(),
                    }
                )
    write_csv(pd.DataFrame(rows), path, run.header)
    run.record("circuits", path)
    status.bump("computed")
    return status


def sample_cell(config: ExperimentConfig, cell: Cell) -> ShotTable:
    """``n_twirls`` noisy twirl instances of one (flux, U, t) cell, concatenated."""
    model = config.model(cell[1], cell[0])
    state = config.initial_state(model)
    native = native_cell_circuit(config, model, cell[2])
    tables = []
    for k in range(config.n_twirls):
        twirled, record = twirl(native, config.stream_seed("twirl", *cell, k), twirl_id=k)
        noise = replace(config.noise, seed=config.stream_seed("noise", *cell, k))
        tables.append(run_noisy(twirled, state, noise, config.shots_per_twirl, record))
    shots = ShotTable.concat(tables)
    return replace(shots, t=cell[2], U=cell[1], flux=cell[0])


def _stage_sample(run: _Run) -> StageStatus:
    status = StageStatus("sample")
    shots_dir = run.out / "shots"
    shots_dir.mkdir(parents=True, exist_ok=True)
    todo = []
    for cell in run.cells(with_training=run.config.mitigation.recipe != "none"):
        path = shots_dir / f"{cell_name(cell)}.jsonl"
        if run.fresh("sample", path, cell):
            run.shots[cell] = ShotTable.load_jsonl(path)
            run.note_cached(path)
            status.bump("cached")
        else:
            todo.append(cell)

    def work(cell: Cell) -> tuple[Cell, Union[ShotTable, Exception]]:
        try:
            return cell, sample_cell(run.config, cell)
        except (FermiHubError, ValueError) as e:
            return cell, e

    with ThreadPoolExecutor(max_workers=run.config.threads) as executor:
        for cell, outcome in executor.map(work, todo):
            if isinstance(outcome, Exception):
                logger.error(f"Sampling {cell_name(cell)} failed: {outcome}")
                status.fail(f"{cell_name(cell)}: {outcome}")
                status.bump("failed")
                continue
            path = shots_dir / f"{cell_name(cell)}.jsonl"
            tmp = path.with_name(path.name + ".tmp")
            outcome.save_jsonl(tmp)
            os.replace(tmp, path)
            run.record("sample", path, cell)
            run.shots[cell] = outcome
            status.bump("computed")
    logger.info(f"Sampled {len(run.shots)} cells ({status.counts.get('cached', 0)} from cache)")
    return status


def exact_table(model: ModelSpec, state: InitialStateSpec, t: float) -> observables.ExpectationTable:
    """Noiseless Z/ZZ table: free fermions at U = 0, sector-restricted exact dynamics otherwise."""
    lattice = model.lattice
    if model.U == 0:
        prop = flo.propagator(model, t)
        z, zz = flo.z_expectations(prop, flo.FLOInitial.from_state(lattice, state))
        return observables.ExpectationTable(lattice, z, zz)
    return observables.ExpectationTable.from_state(evolve_exact(model, state, t), lattice)


def trotter_flo_table(
    model: ModelSpec, state: InitialStateSpec, t: float, schedule: Sequence[tuple[float, int]]
) -> observables.ExpectationTable:
    """Free-fermion Z/ZZ table of the Trotter circuit itself (the TFLO training reference)."""
    lattice = model.lattice
    free = replace(model, U=0.0)
    if t > 0:
        prop = flo.propagator(free, t, "trotter", plan=TrotterPlan.for_time(t, schedule))
    else:
        prop = flo.propagator(free, 0.0)
    z, zz = flo.z_expectations(prop, flo.FLOInitial.from_state(lattice, state))
    return observables.ExpectationTable(lattice, z, zz)


def _stage_exact(run: _Run) -> StageStatus:
    status = StageStatus("exact")
    for cell in sorted(run.shots):
        payload = run.cache.fetch(run.hash, "exact", cell) if run.use_cache else None
        if payload is not None:
            run.exact[cell] = observables.ExpectationTable(
                run.lattice, np.array(payload["z"]), np.array(payload["zz"])
            )
            status.bump("cached")
            continue
        model = run.model(cell)
        try:
            table = exact_table(model, run.state(model), cell[2])
        except (FermiHubError, ValueError) as e:
            logger.error(f"Exact reference for {cell_name(cell)} failed: {e}")
            status.fail(f"{cell_name(cell)}: {e}")
            status.bump("failed")
            continue
        run.exact[cell] = table
        run.cache.store(run.hash, "exact", cell, {"z": table.z.tolist(), "zz": table.zz.tolist()})
        status.bump("computed")
    return status


def prepared_shots(shots: ShotTable, lattice: LatticeSpec, state: InitialStateSpec, max_hamming_err: int) -> ShotTable:
    """Readout-untwirled and post-selected shots."""
    if shots.masks is not None and not shots.mask_consumed:
        shots = readout_untwirl(shots)
    kept, _ = postselect(shots, PostselectionFilter(state.Nup, state.Ndown, max_hamming_err), lattice)
    return kept


def raw_estimates(shots: ShotTable, subsets: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray]:
    """Means over all shots; errors from twirl-to-twirl spread when two or more twirls survive."""
    mean, err = shot_z_expectations(shots, subsets)
    groups = [g for g in shots.by_twirl().values() if g.n_shots > 1]
    if len(groups) < 2:
        return mean, err
    samples = [z_products(g.bits, subsets).astype(float) for g in groups]
    errors = np.array(
        [propagate_error(TwirlStats.from_samples([s[:, k] for s in samples])) for k in range(len(subsets))]
    )
    return mean, errors


def noisy_series(tables: Iterable[ShotTable], subsets: Sequence[Sequence[int]]) -> pd.DataFrame:
    """Columns ``observable, t, value, error`` of prepared shot tables, the noisy side of a TFLO fit."""
    names = [obs_name(s) for s in subsets]
    rows = []
    for shots in tables:
        if shots.n_shots < 2:
            continue
        mean, err = raw_estimates(shots, subsets)
        rows += [{"observable": n, "t": shots.t, "value": v, "error": e} for n, v, e in zip(names, mean, err)]
    return pd.DataFrame(rows, columns=["observable", "t", "value", "error"])


def _training_frames(run: _Run, flux: str, names: list[str]) -> tuple[pd.DataFrame, pd.DataFrame]:
    kept_tables, exact_rows = [], []
    for cell, shots in sorted(run.shots.items()):
        if cell[0] != flux or cell[1] != 0.0:
            continue
        model = run.model(cell)
        state = run.state(model)
        kept = prepared_shots(shots, run.lattice, state, run.config.mitigation.max_hamming_err)
        if kept.n_shots < 2:
            continue
        kept_tables.append(kept)
        reference = trotter_flo_table(model, state, cell[2], run.config.layer_schedule)
        exact_values = subset_values(reference, run.subsets)
        exact_rows += [{"observable": n, "t": cell[2], "value": v} for n, v in zip(names, exact_values)]
    return noisy_series(kept_tables, run.subsets), pd.DataFrame(exact_rows, columns=["observable", "t", "value"])


def subset_values(table: observables.ExpectationTable, subsets: Sequence[Sequence[int]]) -> np.ndarray:
    return np.array([table.z[s[0]] if len(s) == 1 else table.zz[s[0], s[1]] for s in subsets])


def _fit_models(run: _Run, status: StageStatus, names: list[str]) -> dict[str, MitigationModel]:
    models: dict[str, MitigationModel] = {}
    recipe = run.config.mitigation.recipe
    if recipe == "none":
        return models
    groups = {obs_name(s): observable_group(s, run.lattice) for s in run.subsets}
    for flux in run.config.flux:
        noisy, exact = _training_frames(run, flux, names)
        try:
            if noisy.empty:
                raise MitigationError("No usable U=0 training shots")
            fits = tflo_fit(noisy, exact, run.config.mitigation.ansatz, groups=groups)
        except MitigationError as e:
            logger.error(f"TFLO training for flux {flux} failed: {e}")
            status.fail(f"tflo {flux}: {e}")
            continue
        models[flux] = MitigationModel(recipe=recipe, tflo=fits, mesr_constraints=list(run.subsets))
        path = run.out / f"mitigation_{flux}.json"
        models[flux].save_to_file(path)
        run.result.artifacts[path.relative_to(run.out).as_posix()] = _digest(path)
    return models


def _mitigate_cell(
    run: _Run, cell: Cell, model: Optional[MitigationModel], names: list[str]
) -> list[dict[str, Any]]:
    state = run.state(run.model(cell))
    kept = prepared_shots(run.shots[cell], run.lattice, state, run.config.mitigation.max_hamming_err)
    base = {"t": cell[2], "U": cell[1], "flux": cell[0]}
    rows: list[dict[str, Any]] = []
    if cell in run.exact:
        exact_values = subset_values(run.exact[cell], run.subsets)
        rows += [
            {"observable": n, **base, "value": v, "error": 0.0, "method": "exact"} for n, v in zip(names, exact_values)
        ]
    if kept.n_shots < 2:
        logger.warning(f"{cell_name(cell)}: fewer than two shots survive post-selection")
        return rows
    return rows + mitigated_rows(
        kept,
        run.subsets,
        model,
        base,
        lattice=run.lattice,
        state=state,
        bootstrap_resamples=run.config.mitigation.bootstrap_resamples,
        seed=run.config.stream_seed("bootstrap", *cell),
    )


def mitigated_rows(
    kept: ShotTable,
    subsets: Sequence[Sequence[int]],
    model: Optional[MitigationModel],
    base: Mapping[str, Any],
    *,
    lattice: Optional[LatticeSpec] = None,
    state: Optional[InitialStateSpec] = None,
    bootstrap_resamples: int = 0,
    seed: int = 0,
) -> list[dict[str, Any]]:
    """
    Raw, TFLO and (for the ``tflo+mesr`` recipe) MESR rows of one cell.

    With ``lattice`` and ``state`` the TFLO values are also averaged over the symmetry orbits of
    the initial state (``tflo+sym`` rows) and MESR is constrained to those averaged values.

    Args:
        kept: Untwirled, post-selected shots of the cell.
        subsets: Z-string mode subsets; ``model`` must hold a fit for each of them.
        model: Trained mitigation model, or None for raw estimates only.
        base: Columns copied onto every row; ``t`` enters the linear-linear ansatz.
        lattice: Lattice of the symmetry group.
        state: Initial state whose symmetries are averaged over.
        bootstrap_resamples: Replace the twirl-spread errors by a nested bootstrap when non-zero.
        seed: Bootstrap seed.
    """
    names = [obs_name(s) for s in subsets]
    t = float(base["t"])
    mean, err = raw_estimates(kept, subsets)
    if bootstrap_resamples:
        err = bootstrap(kept.by_twirl(), lambda s: shot_z_expectations(s, subsets)[0], bootstrap_resamples, seed)
    rows = [{"observable": n, **base, "value": v, "error": e, "method": "raw"} for n, v, e in zip(names, mean, err)]
    if model is None:
        return rows
    applied = [tflo_apply(model.tflo, float(v), t, observable=n) for n, v in zip(names, mean)]
    tflo_values = np.array([value for value, _ in applied])
    clamped = [flag for _, flag in applied]
    tflo_errors = np.array([abs(model.tflo[n].m) * e for n, e in zip(names, err)])
    rows += [
        {"observable": n, **base, "value": v, "error": e, "method": "tflo", "clamped": c}
        for n, v, e, c in zip(names, tflo_values, tflo_errors, clamped)
    ]
    targets = tflo_values
    if lattice is not None and state is not None:
        keys = [tuple(sorted(s)) for s in subsets]
        averaged, _ = symmetry_average(dict(zip(keys, tflo_values)), lattice, state)
        averaged_errors, _ = symmetry_average(dict(zip(keys, tflo_errors)), lattice, state)
        targets = np.array([averaged[k] for k in keys])
        rows += [
            {"observable": n, **base, "value": averaged[k], "error": averaged_errors[k], "method": "tflo+sym"}
            for n, k in zip(names, keys)
        ]
    if model.recipe == "tflo+mesr":
        values = z_products(kept.bits, subsets).astype(float)
        reweighted = mesr(values, targets, model.mesr_c_reg).expectations(values)
        rows += [
            {"observable": n, **base, "value": v, "error": e, "method": "mesr"}
            for n, v, e in zip(names, reweighted, tflo_errors)
        ]
    return rows


def gpr_rows(frame: pd.DataFrame, method: str) -> list[dict[str, Any]]:
    """GPR-smoothed ``method`` series of a mitigated table, labelled ``<method>+gpr``."""
    rows: list[dict[str, Any]] = []
    series = frame[frame["method"] == method]
    for (name, U, flux), group in series.groupby(["observable", "U", "flux"], sort=True):
        if len(group) < 2:
            continue
        group = group.sort_values("t")
        smooth = gpr_smooth(group["t"], group["value"], group["error"])
        for t, v, s in zip(smooth.t, smooth.mean, smooth.std):
            rows.append(
                {"observable": name, "t": t, "U": U, "flux": flux, "value": v, "error": s, "method": f"{method}+gpr"}
            )
    return rows


def _stage_mitigate(run: _Run) -> StageStatus:
    status = StageStatus("mitigate")
    path = run.out / "mitigated.csv"
    if run.fresh("mitigate", path):
        run.note_cached(path)
        for flux in run.config.flux:
            if (run.out / f"mitigation_{flux}.json").exists():
                run.note_cached(run.out / f"mitigation_{flux}.json")
        status.bump("cached")
        return status
    names = [obs_name(s) for s in run.subsets]
    models = _fit_models(run, status, names)
    rows: list[dict[str, Any]] = []
    for cell in sorted(run.shots):
        if cell[1] not in run.config.U:
            continue
        try:
            rows += _mitigate_cell(run, cell, models.get(cell[0]), names)
        except (FermiHubError, ValueError, KeyError) as e:
            logger.error(f"Mitigation of {cell_name(cell)} failed: {e}")
            status.fail(f"{cell_name(cell)}: {e}")
            status.bump("failed")
            continue
        status.bump("computed")
    frame = observables.results_frame(rows)
    recipe = run.config.mitigation.recipe
    if run.config.mitigation.gpr and recipe != "none" and not frame.empty:
        method = "mesr" if recipe == "tflo+mesr" else "tflo"
        frame = observables.results_frame(rows + gpr_rows(frame, method))
    write_csv(frame, path, run.header)
    run.record("mitigate", path)
    return status


def _reference_site(state: InitialStateSpec) -> Optional[int]:
    return state.hole_sites[0] if len(state.hole_sites) == 1 else None


def _as_float(value: object) -> Optional[float]:
    return float(value) if isinstance(value, (int, float, np.number)) else None


def _suite_global(
    shots: ShotTable, table: observables.ExpectationTable, state: InitialStateSpec
) -> dict[str, Optional[float]]:
    suite = observables.global_suite(table, table.lattice, _reference_site(state))
    values: dict[str, Optional[float]] = {
        k: _as_float(suite[k]) for k in ("n_d", "holon_RMS", "M_s", "SzSz_stag")
    }
    for s, v in enumerate(np.asarray(suite["holon_deviation"])):
        values[f"holon_deviation[{s}]"] = float(v)
    return values


def _suite_local(
    shots: ShotTable, table: observables.ExpectationTable, state: InitialStateSpec
) -> dict[str, Optional[float]]:
    values: dict[str, Optional[float]] = {f"S[{s}]": float(v) for s, v in enumerate(observables.local_spin(table))}
    for (i, j), v in observables.nn_spin_corr(table).items():
        values[f"SzSz[{i},{j}]"] = v
    return values


def _suite_stripe(
    shots: ShotTable, table: observables.ExpectationTable, state: InitialStateSpec
) -> dict[str, Optional[float]]:
    return dict(observables.stripe_suite(table, state.stripe_column))


def _suite_pair_distance(
    shots: ShotTable, table: observables.ExpectationTable, state: InitialStateSpec
) -> dict[str, Optional[float]]:
    return dict(observables.pairwise_distance_suite(shots, table.lattice))


def _suite_afm(
    shots: ShotTable, table: observables.ExpectationTable, state: InitialStateSpec
) -> dict[str, Optional[float]]:
    return {"afm": observables.afm_order(shots, table.lattice)}


def _suite_percolation(
    shots: ShotTable, table: observables.ExpectationTable, state: InitialStateSpec
) -> dict[str, Optional[float]]:
    fraction, (lo, hi), _ = observables.percolation_fraction(shots, table.lattice)
    return {"percolation": fraction, "percolation_lo": lo, "percolation_hi": hi}


def _suite_wilson(
    shots: ShotTable, table: observables.ExpectationTable, state: InitialStateSpec
) -> dict[str, Optional[float]]:
    lattice = table.lattice
    frame = observables.wilson_lines(shots, lattice, range(1, lattice.Lx + lattice.Ly - 1))
    return {f"W_holon_doublon[{row.M}]": float(row.value) for row in frame.itertuples()}


def _suite_ipr(
    shots: ShotTable, table: observables.ExpectationTable, state: InitialStateSpec
) -> dict[str, Optional[float]]:
    bases: tuple[Literal["full", "charge", "spin"], ...] = ("full", "charge", "spin")
    return {f"IPR_{basis}": observables.ipr_marginal(shots, table.lattice, basis=basis) for basis in bases}


def _suite_ms(
    shots: ShotTable, table: observables.ExpectationTable, state: InitialStateSpec
) -> dict[str, Optional[float]]:
    result = observables.ms_distribution(shots, table.lattice)
    values: dict[str, Optional[float]] = {f"M_s_{key}": _as_float(result[key]) for key in ("mean", "variance", "tvd")}
    for m, p in zip(np.asarray(result["m"]), np.asarray(result["P"])):
        values[f"P(M_s={m:g})"] = float(p)
    return values


def _suite_ipr_baseline(
    shots: ShotTable, table: observables.ExpectationTable, state: InitialStateSpec
) -> dict[str, Optional[float]]:
    """Measured IPRs against independent sites at the measured doublon number, and the basis ratios."""
    lattice = table.lattice
    region = observables.default_region(lattice)
    n_d = float(table.doublon().sum())
    iid = observables.ipr_iid_estimates([n_d], state.Nup, state.Ndown, lattice.L, len(region)).iloc[0]
    bases: tuple[Literal["full", "charge", "spin"], ...] = ("full", "charge", "spin")
    measured = {basis: observables.ipr_marginal(shots, lattice, region, basis=basis) for basis in bases}
    values: dict[str, Optional[float]] = {}
    for basis in bases:
        values[f"IPR_iid_{basis}"] = float(iid[basis])
        values[f"IPR_excess_{basis}"] = measured[basis] / float(iid[basis])
    for name, ratio in observables.ipr_ratios(measured["full"], measured["charge"], measured["spin"]).items():
        values[f"IPR_{name}"] = ratio
    return values


SuiteFunction = Callable[[ShotTable, observables.ExpectationTable, InitialStateSpec], dict[str, Optional[float]]]

SUITES: dict[str, SuiteFunction] = {
    "global": _suite_global,
    "local": _suite_local,
    "stripe": _suite_stripe,
    "pair_distance": _suite_pair_distance,
    "afm": _suite_afm,
    "percolation": _suite_percolation,
    "wilson": _suite_wilson,
    "ipr": _suite_ipr,
    "ms": _suite_ms,
    "ipr_baseline": _suite_ipr_baseline,
}

# Suites that only need Z/ZZ expectations and are therefore also evaluated on the exact reference.
EXPECTATION_SUITES = ("global", "local", "stripe")


def _observable_rows(run: _Run, cell: Cell, status: StageStatus) -> list[dict[str, Any]]:
    state = run.state(run.model(cell))
    kept = prepared_shots(run.shots[cell], run.lattice, state, run.config.mitigation.max_hamming_err)
    base = {"t": cell[2], "U": cell[1], "flux": cell[0]}
    rows: list[dict[str, Any]] = []
    sources: list[tuple[str, observables.ExpectationTable]] = []
    if kept.n_shots > 0:
        sources.append(("raw", observables.ExpectationTable.from_shots(kept, run.lattice)))
    if cell in run.exact:
        sources.append(("exact", run.exact[cell]))
    for method, table in sources:
        suites = [s for s in run.config.observables if method != "exact" or s in EXPECTATION_SUITES]
        rows += suite_rows(kept, table, state, suites, {**base, "method": method}, status)
    return rows


def suite_rows(
    shots: ShotTable,
    table: observables.ExpectationTable,
    state: InitialStateSpec,
    suites: Iterable[str],
    base: Mapping[str, Any],
    status: Optional[StageStatus] = None,
) -> list[dict[str, Any]]:
    """One row per defined estimator of each named suite; undefined suites and estimators are logged and skipped."""
    rows: list[dict[str, Any]] = []
    where = f"t={base.get('t')} ({base.get('method')})"
    for suite in suites:
        if suite not in SUITES:
            raise ValueError(f"Unknown observable suite {suite!r}; expected one of {sorted(SUITES)}")
        try:
            values = SUITES[suite](shots, table, state)
        except (UndefinedEstimate, ValueError) as e:
            logger.warning(f"Suite {suite} undefined at {where}: {e}")
            if status is not None:
                status.bump("undefined")
            continue
        for name, value in values.items():
            if value is None or not math.isfinite(value):
                logger.warning(f"Estimator {name} of suite {suite} undefined at {where}")
                if status is not None:
                    status.bump("undefined")
                continue
            rows.append({"suite": suite, "observable": name, **base, "value": value})
    return rows


def acceptance_rows(
    shots: ShotTable, lattice: LatticeSpec, state: InitialStateSpec, base: Mapping[str, Any]
) -> list[dict[str, Any]]:
    """Post-selection acceptance of one cell's untwirled shots against the particle-number tolerance."""
    if shots.masks is not None and not shots.mask_consumed:
        shots = readout_untwirl(shots)
    curve = acceptance_curve(shots, state.Nup, state.Ndown, lattice)
    return [{**base, **row} for row in curve.to_dict("records")]


def doublon_scaling_rows(
    rows: Sequence[Mapping[str, Any]], t_max: float = DOUBLON_SCALING_WINDOW, status: Optional[StageStatus] = None
) -> list[dict[str, Any]]:
    """Early-time collapse residual of the ``n_d`` series of every pair of positive U values."""
    series = pd.DataFrame([r for r in rows if r["suite"] == "global" and r["observable"] == "n_d"])
    if series.empty:
        return []
    result: list[dict[str, Any]] = []
    for (method, flux), group in series.groupby(["method", "flux"], sort=True):
        positive = sorted(float(U) for U in group["U"].unique() if U > 0)
        for U1, U2 in combinations(positive, 2):
            a = group[group["U"] == U1].sort_values("t")
            b = group[group["U"] == U2].sort_values("t")
            try:
                residual = observables.doublon_scaling_check(a["t"], a["value"], U1, b["t"], b["value"], U2, t_max)
            except ValueError as e:
                logger.warning(f"Doublon scaling of U={U1:g} against U={U2:g} ({method}, {flux}) undefined: {e}")
                if status is not None:
                    status.bump("undefined")
                continue
            result.append(
                {
                    "suite": "doublon_scaling",
                    "observable": f"collapse_U{U1:g}_U{U2:g}",
                    "t": t_max,
                    "U": U1,
                    "flux": flux,
                    "value": residual,
                    "method": method,
                }
            )
    return result


def _stage_observables(run: _Run) -> StageStatus:
    status = StageStatus("observables")
    path = run.out / "observables.csv"
    acceptance_path = run.out / "acceptance.csv"
    if run.fresh("observables", path) and run.fresh("observables", acceptance_path, ("acceptance",)):
        run.note_cached(path)
        run.note_cached(acceptance_path)
        status.bump("cached")
        return status
    rows: list[dict[str, Any]] = []
    accepted: list[dict[str, Any]] = []
    for cell in sorted(run.shots):
        if cell[1] not in run.config.U:
            continue
        try:
            rows += _observable_rows(run, cell, status)
            base = {"t": cell[2], "U": cell[1], "flux": cell[0]}
            accepted += acceptance_rows(run.shots[cell], run.lattice, run.state(run.model(cell)), base)
        except (FermiHubError, ValueError) as e:
            logger.error(f"Observables of {cell_name(cell)} failed: {e}")
            status.fail(f"{cell_name(cell)}: {e}")
            status.bump("failed")
            continue
        status.bump("computed")
    rows += doublon_scaling_rows(rows, status=status)
    frame = pd.DataFrame(rows, columns=["suite", "observable", "t", "U", "flux", "value", "method"])
    write_csv(frame, path, run.header)
    run.record("observables", path)
    columns = ["t", "U", "flux", "max_hamming_err", "accepted", "acceptance"]
    write_csv(pd.DataFrame(accepted, columns=columns), acceptance_path, run.header)
    run.record("observables", acceptance_path, ("acceptance",))
    return status


def xeb_cell(
    model: ModelSpec,
    state: InitialStateSpec,
    shots: ShotTable,
    t: float,
    schedule: Sequence[tuple[float, int]],
    seed: int = 0,
) -> list[dict[str, Any]]:
    """Linear XEB of one U = 0 cell against the free-fermion amplitudes of its Trotter circuit."""
    lattice = model.lattice
    prop = flo.propagator(replace(model, U=0.0), t, "trotter", plan=TrotterPlan.for_time(t, schedule))
    initial = flo.FLOInitial.from_state(lattice, state)
    D = flo.sector_dimension(lattice.L, initial.n_up, initial.n_down)
    if D <= flo.MAX_ENUMERATION:
        C, C_se = flo.collision_probability(prop, initial)
    else:
        C, C_se = flo.collision_probability(prop, initial, "monte_carlo", seed=seed)
    if shots.masks is not None and not shots.mask_consumed:
        shots = readout_untwirl(shots)
    oracle = flo.FLOOracle(prop, initial)
    reports = []
    for convention in ("drop", "keep_zero"):
        report = linear_xeb(
            shots, oracle, C, D, C_se=C_se, convention=convention, n_up=initial.n_up, n_down=initial.n_down
        )
        reports.append({**report.to_dict(), "U": model.U, "flux": model.flux.value})
    return reports


def _stage_xeb(run: _Run) -> StageStatus:
    status = StageStatus("xeb")
    path = run.out / "xeb.json"
    if not run.config.xeb:
        return status
    if run.fresh("xeb", path):
        run.note_cached(path)
        status.bump("cached")
        return status
    reports: list[dict[str, Any]] = []
    for cell in sorted(run.shots):
        if cell[1] != 0.0 or cell[2] <= 0:
            continue
        model = run.model(cell)
        try:
            reports += xeb_cell(
                model, run.state(model), run.shots[cell], cell[2], run.config.layer_schedule,
                run.config.stream_seed("xeb", *cell),
            )
        except (FermiHubError, ValueError) as e:
            logger.error(f"XEB of {cell_name(cell)} failed: {e}")
            status.fail(f"{cell_name(cell)}: {e}")
            status.bump("failed")
            continue
        status.bump("computed")
    _atomic_write_text(path, json.dumps({**run.header, "reports": reports}, indent=2))
    run.record("xeb", path)
    return status


def run_pipeline(
    config: ExperimentConfig,
    *,
    cache: Optional[ResultCache] = None,
    use_cache: bool = True,
    version: str = "unknown",
) -> PipelineResult:
    """
    Run every stage of ``config`` and write the artifact directory ``config.output_dir``.

    Args:
        config: Experiment to run.
        cache: Stage cache; the application-wide ``Cache`` by default.
        use_cache: Reuse cached stage results whose artifacts are unchanged.
        version: fermihub version stamped on the outputs.

    Returns:
        Per-stage statuses, the config hash and the artifact digests.
    """
    run = _Run(config, cache if cache is not None else Cache, use_cache, version)
    run.out.mkdir(parents=True, exist_ok=True)
    logger.info(f"Pipeline {run.hash[:12]} -> {run.out}")
    stages: list[Callable[[_Run], StageStatus]] = [
        _stage_circuits,
        _stage_sample,
        _stage_exact,
        _stage_mitigate,
        _stage_observables,
        _stage_xeb,
    ]
    for stage in stages:
        try:
            status = stage(run)
        except (FermiHubError, ValueError, OSError) as e:
            status = StageStatus(stage.__name__.removeprefix("_stage_"))
            logger.error(f"Stage {status.stage} failed: {e}")
            status.fail(str(e))
        run.result.stages.append(status)
    manifest = {
        "config_hash": run.hash,
        "config": config.to_dict(),
        "versions": package_versions(version),
        "stages": [{"stage": s.stage, "ok": s.ok, "message": s.message} for s in run.result.stages],
        "artifacts": dict(sorted(run.result.artifacts.items())),
    }
    manifest["config"].pop("threads")
    manifest["config"].pop("output_dir")
    _atomic_write_text(run.out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True))
    if run.result.has_errors():
        logger.warning(f"Pipeline finished with errors in {[s.stage for s in run.result.stages if not s.ok]}")
    else:
        logger.info(f"Pipeline finished: {len(run.result.artifacts)} artifacts")
    return run.result


@dataclass(frozen=True)
class ClaimResult:
    claim_id: str
    passed: bool
    measured: Any
    expected: Any
    tolerance: str
    details: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


# Published two-qubit gate counts and depths of three second-order Trotter layers.
PUBLISHED_GATE_COSTS: dict[str, tuple[int, Optional[int]]] = {
    "4x4": (1220, 64 * 3 + 6),
    "5x5": (2626, 88 * 3 + 6),
    "6x5": (3172, None),
    "6x6": (4372, 96 * 3 + 6),
}


def _gate_count_claim(size: str) -> Callable[[], ClaimResult]:
    def check() -> ClaimResult:
        lattice = LatticeSpec.parse_size(size)
        model = build_model(lattice.Lx, lattice.Ly, 4.0, "zero")
        stats = gate_stats(decompose_to_native(build_trotter_circuit(model, None, TrotterPlan.uniform(1.2, 3))))
        count, depth = PUBLISHED_GATE_COSTS[size]
        passed = stats.two_qubit_count == count
        if depth is not None:
            passed = passed and abs(stats.depth - depth) <= 0.1 * depth
        return ClaimResult(
            claim_id=f"gate-count-{size}",
            passed=passed,
            measured={"two_qubit_count": stats.two_qubit_count, "depth": stats.depth},
            expected={"two_qubit_count": count, "depth": depth},
            tolerance="exact count, depth within 10%",
        )

    return check


def _trotter_claim() -> ClaimResult:
    times = [0.3, 0.6, 0.9, 1.2]
    report = trotter_error_report(["2x2", "2x3"], times, [0.0, 4.0], ["zero"], n_layers=3)
    worst = float(report["obs_error_mean"].max())
    return ClaimResult(
        claim_id="trotter-u0-below-10pct",
        passed=worst < 0.10,
        measured=worst,
        expected=0.10,
        tolerance="mean weight<=4 observable error below the bound for U in {0, 4}",
        details={"rows": len(report)},
    )


def _pair_distance_claim() -> ClaimResult:
    value = expected_pair_distance(5, 5)
    return ClaimResult(
        claim_id="pair-distance-5x5",
        passed=abs(value - 2.65) < 0.01,
        measured=value,
        expected=2.65,
        tolerance="0.01",
    )


def _ipr_claim(n_shots: int = 50_000, seed: int = 0) -> ClaimResult:
    lattice = LatticeSpec(Lx=4, Ly=4)
    bits = np.random.default_rng(seed).integers(0, 2, size=(n_shots, lattice.n_qubits), dtype=np.uint8)
    shots = ShotTable(bits=bits)
    region = observables.default_region(lattice)
    m = len(region)
    measured = {
        "full": observables.ipr_marginal(shots, lattice, region, "full", unbiased=True),
        "charge": observables.ipr_marginal(shots, lattice, region, "charge", unbiased=True),
    }
    expected = {"full": observables.IPR_UNIFORM_FULL**m, "charge": observables.IPR_UNIFORM_COARSE**m}
    passed = all(abs(measured[k] - expected[k]) <= 0.05 * expected[k] for k in expected)
    return ClaimResult("ipr-baselines", passed, measured, expected, "5% relative on uniform shots")


def _xeb_claim(n_shots: int = 10_000, seed: int = 0) -> ClaimResult:
    model = build_model(3, 2, 0.0, "zero")
    state = build_initial_state(model, StateKind.NEEL_WITH_HOLES, holes=[(1, 0)])
    prop = flo.propagator(model, 1.0)
    initial = flo.FLOInitial.from_state(model.lattice, state)
    shots = flo.sample_flo(prop, initial, n_shots, seed, t=1.0)
    C, _ = flo.collision_probability(prop, initial)
    D = flo.sector_dimension(model.lattice.L, initial.n_up, initial.n_down)
    report = linear_xeb(shots, flo.FLOOracle(prop, initial), C, D, n_up=initial.n_up, n_down=initial.n_down)
    passed = report.F is not None and report.F_se is not None and abs(report.F - 1.0) <= 3 * report.F_se
    return ClaimResult(
        claim_id="xeb-self-sampling",
        passed=passed,
        measured={"F": report.F, "F_se": report.F_se},
        expected=1.0,
        tolerance="3 standard errors",
    )


CLAIMS: dict[str, Callable[[], ClaimResult]] = {
    **{f"gate-count-{size}": _gate_count_claim(size) for size in PUBLISHED_GATE_COSTS},
    "trotter-u0-below-10pct": _trotter_claim,
    "pair-distance-5x5": _pair_distance_claim,
    "ipr-baselines": _ipr_claim,
    "xeb-self-sampling": _xeb_claim,
}


def reproduce_report(claim_id: str) -> ClaimResult:
    """Run one registered claim; raises KeyError for an unknown id."""
    if claim_id not in CLAIMS:
        raise KeyError(f"Unknown claim {claim_id!r}; registered claims: {sorted(CLAIMS)}")
    result = CLAIMS[claim_id]()
    logger.info(f"Claim {claim_id}: {'pass' if result.passed else 'FAIL'} (measured {result.measured})")
    return result


def reproduce_all(claim_ids: Optional[Iterable[str]] = None) -> list[ClaimResult]:
    return [reproduce_report(c) for c in (claim_ids if claim_ids is not None else CLAIMS)]

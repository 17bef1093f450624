"""
Main entry point and CLI for the fermihub toolkit.

This module sets up logging and version retrieval, and provides a Click-based command line interface for
building circuits, simulating and sampling cells, mitigating and analysing shots, scoring them with XEB,
running whole experiment configs and checking the registered claims.
"""

import importlib.metadata
import json
import sys
from contextlib import contextmanager
from pathlib import Path

import click
import pandas as pd
import toml
from beartype.typing import Any, Callable, Generator, Optional, Sequence
from click import pass_context
from loguru import logger

import fermihub.fermihublib.cache
from fermihub.fermihublib import majorana, observables, pipeline
from fermihub.fermihublib.circuits import (
    DEFAULT_LAYER_SCHEDULE,
    TrotterPlan,
    build_trotter_circuit,
    circuit_to_json,
    decompose_to_native,
    gate_stats,
)
from fermihub.fermihublib.config import (
    DEFAULT_TIMES,
    OBSERVABLE_SUITES,
    ExperimentConfig,
    StateConfig,
    config_hash,
    dump_config,
    load_config,
)
from fermihub.fermihublib.defs import LOG_FILE_PATH, FermiHubError, Flux, StateKind
from fermihub.fermihublib.mitigation import Ansatz, MitigationModel, mesr_constraints, observable_group, tflo_fit
from fermihub.fermihublib.model import InitialStateSpec, ModelSpec
from fermihub.fermihublib.shots import ShotTable
from fermihub.fermihublib.statevec import NoiseSpec, evolve_exact, trotter_error_report


def configure_logging(log_level: str = "INFO") -> None:
    logger.remove()
    logger.add(
        sys.stdout,
        level=log_level.upper(),
        filter=lambda record: record["level"].no < 40,  # 40 is ERROR
        format=(
            "<green>{time:YYYY-MM-DD HH:mm:ss}</green> | "
            "<level>{level: <7}</level> | "
            "<cyan>{name}</cyan>:<cyan>{line}</cyan> <light-magenta>{function}</light-magenta> - "
            "<level>{message}</level>"
        ),
    )
    stderr_level = "CRITICAL" if log_level.upper() == "CRITICAL" else "ERROR"
    logger.add(
        sys.stderr,
        level=stderr_level,
        format=(
            "<red>{time:YYYY-MM-DD HH:mm:ss}</red> | "
            "<level>{level: <7}</level> | "
            "<cyan>{name}</cyan>:<cyan>{line}</cyan> <light-magenta>{function}</light-magenta> - "
            "<level>{message}</level>"
        ),
    )
    logger.add(
        LOG_FILE_PATH,
        rotation="10 MB",
        retention="10 days",
        level=log_level.upper(),
        encoding="utf-8",
        format=("{time:YYYY-MM-DD HH:mm:ss} | {level: <8} | {name}:{function}:{line} - {message}"),
    )


# Get the project root path
project_path = Path(__file__).parent.parent.resolve()


def get_version() -> str:
    """
    Get the current version of the toolkit.

    First tries to get the version from the installed package metadata.
    If that fails, reads it from the pyproject.toml file.

    Returns:
        The version string
    """
    try:
        version = importlib.metadata.version("fermihub")
        return str(version)
    except importlib.metadata.PackageNotFoundError:
        pyproject_toml = toml.load(str(project_path / "pyproject.toml"))
        return str(pyproject_toml["project"]["version"])


def log_context(ctx: click.Context) -> None:
    """
    Recursively log the context and parameters for debugging CLI execution.

    Args:
        ctx (click.Context): The Click context object.
    """
    if ctx.obj is not None and "DEBUG_CLI" in ctx.obj and ctx.obj["DEBUG_CLI"]:
        if ctx.parent is not None:
            log_context(ctx.parent)
        logger.debug(f"======= {ctx.command.name} =======")
        logger.debug(f"ctx.params: {ctx.params}")
        logger.debug(f"ctx.args: {ctx.args}")
        logger.debug(f"ctx.invoked_subcommand: {ctx.invoked_subcommand}")
        logger.debug(f"ctx.parent: {ctx.parent}")
        logger.debug(f"ctx.command_path: {ctx.command_path}")
        logger.debug(f"ctx.obj: {ctx.obj}")


@contextmanager
def domain_errors() -> Generator[None, None, None]:
    """Report library failures as click errors (exit code 1) instead of tracebacks."""
    try:
        yield
    except (FermiHubError, ValueError, KeyError) as e:
        logger.error(str(e))
        raise click.ClickException(str(e)) from e


def _parse_holes(ctx: click.Context, param: click.Parameter, values: Sequence[str]) -> tuple[tuple[int, int], ...]:
    holes = []
    for value in values:
        try:
            ix, iy = (int(part) for part in value.split(","))
        except ValueError:
            raise click.BadParameter(f"expected IX,IY, got {value!r}", ctx=ctx, param=param) from None
        holes.append((ix, iy))
    return tuple(holes)


def state_options(func: Callable[..., Any]) -> Callable[..., Any]:
    """Lattice, coupling and initial-state options shared by the single-cell commands."""
    options = [
        click.option("--size", "-s", default="2x3", show_default=True, help="Lattice size as ROWSxCOLS."),
        click.option("--u", "U", type=float, default=0.0, show_default=True, help="On-site interaction U/J."),
        click.option(
            "--flux",
            type=click.Choice([f.value for f in Flux]),
            default=Flux.ZERO.value,
            show_default=True,
            help="Flux per plaquette.",
        ),
        click.option(
            "--state",
            "state_kind",
            type=click.Choice([k.value for k in StateKind]),
            default=StateKind.NEEL_WITH_HOLES.value,
            show_default=True,
            help="Initial state family.",
        ),
        click.option(
            "--hole", "holes", multiple=True, callback=_parse_holes, help="Hole site as IX,IY (repeatable)."
        ),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _cell_config(
    size: str, U: float, flux: str, state_kind: str, holes: tuple[tuple[int, int], ...], **kw: Any
) -> ExperimentConfig:
    return ExperimentConfig(
        size=size, U=(U,), flux=(flux,), state=StateConfig(kind=state_kind, holes=holes), error_bars=False, **kw
    )


def _model_and_state(config: ExperimentConfig) -> tuple[ModelSpec, InitialStateSpec]:
    model = config.model(config.U[0], config.flux[0])
    return model, config.initial_state(model)


def _header(ctx: click.Context, **extra: Any) -> dict[str, Any]:
    return {"fermihub": ctx.obj["VERSION"], "command": ctx.command_path, **extra}


def _emit_json(data: Any, out: Optional[Path]) -> None:
    text = json.dumps(data, indent=2, default=str)
    if out is None:
        click.echo(text)
    else:
        out.write_text(text + "\n", encoding="utf-8")
        logger.info(f"Wrote {out}")


@click.group()
@pass_context
@click.option(
    "--debug-cli",
    is_flag=True,
    help="Print verbose debug messages about CLI execution",
)
@click.option(
    "--log-level",
    "-l",
    type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"], case_sensitive=False),
    default="INFO",
    show_default=True,
    help="Set the logging level for stdout and file logs.",
)
def cli(ctx: click.Context, log_level: str, debug_cli: bool = False) -> None:
    """
    fermihub command line interface.

    Digital simulation of 2D Fermi-Hubbard dynamics: circuits, noisy sampling, mitigation and analysis.
    """
    # Always executed first, even for subcommands
    configure_logging(log_level)
    ctx.ensure_object(dict)
    ctx.obj["VERSION"] = get_version()
    ctx.obj["DEBUG_CLI"] = debug_cli


@cli.command()
@click.pass_context
@state_options
@click.option("--time", "-t", "t", type=float, required=True, help="Total evolution time.")
@click.option("--layers", type=int, default=None, help="Number of Trotter layers (default: the layer schedule).")
@click.option("--prep", is_flag=True, help="Prepend the initial-state preparation.")
@click.option("--native", is_flag=True, help="Emit the compiled native-gate circuit.")
@click.option("--emit", type=click.Path(dir_okay=False, path_type=Path), help="Write the circuit as JSON.")
@click.option("--stats", is_flag=True, help="Print native gate statistics as JSON.")
def circuit(
    ctx: click.Context,
    size: str,
    U: float,
    flux: str,
    state_kind: str,
    holes: tuple[tuple[int, int], ...],
    t: float,
    layers: Optional[int],
    prep: bool,
    native: bool,
    emit: Optional[Path],
    stats: bool,
) -> None:
    """Build the Trotter circuit of one cell."""
    log_context(ctx)
    with domain_errors():
        model, state = _model_and_state(_cell_config(size, U, flux, state_kind, holes))
        plan = TrotterPlan.uniform(t, layers) if layers is not None else TrotterPlan.for_time(t)
        built = build_trotter_circuit(model, state if prep else None, plan, include_preparation=prep)
        compiled = decompose_to_native(built)
        if emit is not None:
            emit.write_text(circuit_to_json(compiled if native else built), encoding="utf-8")
            logger.info(f"Wrote {plan.n_layers}-layer circuit to {emit}")
        if stats:
            report = {"size": model.lattice.size_label, "n_layers": plan.n_layers, **gate_stats(compiled).to_dict()}
            _emit_json(report, None)


def _table_rows(table: observables.ExpectationTable, subsets: list[tuple[int, ...]]) -> list[tuple[str, float]]:
    suite = observables.global_suite(table, table.lattice)
    rows = [(name, value) for name in ("n_d", "M_s", "SzSz_stag") if isinstance(value := suite[name], float)]
    return rows + [(pipeline.obs_name(s), float(v)) for s, v in zip(subsets, pipeline.subset_values(table, subsets))]


def simulate_frame(
    model: ModelSpec,
    state: InitialStateSpec,
    times: Sequence[float],
    engine: str,
    trunc: Optional[majorana.TruncationSpec] = None,
) -> pd.DataFrame:
    """Noiseless time series of one model; columns t, U, flux, observable, value."""
    if engine == "majorana":
        series = {"M_s": majorana.staggered_magnetization(model.lattice)}
        return majorana.run_mp_series(model, state, times, series, trunc)[["t", "U", "flux", "observable", "value"]]
    if engine in ("flo", "flo-trotter") and model.U != 0:
        raise ValueError(f"The free-fermion engine needs U = 0, got U = {model.U:g}")
    subsets = mesr_constraints(model.lattice)
    rows = []
    for t in times:
        if engine == "exact":
            table = observables.ExpectationTable.from_state(evolve_exact(model, state, t), model.lattice)
        elif engine == "flo":
            table = pipeline.exact_table(model, state, t)
        else:
            table = pipeline.trotter_flo_table(model, state, t, DEFAULT_LAYER_SCHEDULE)
        rows += [
            {"t": t, "U": model.U, "flux": model.flux.value, "observable": name, "value": value}
            for name, value in _table_rows(table, subsets)
        ]
    return pd.DataFrame(rows, columns=["t", "U", "flux", "observable", "value"])


@cli.command()
@click.pass_context
@state_options
@click.option("--time", "-t", "times", type=float, multiple=True, help="Evolution times (default: 0 to 1.2).")
@click.option(
    "--engine",
    type=click.Choice(["exact", "flo", "flo-trotter", "majorana"]),
    default="exact",
    show_default=True,
    help="exact dynamics, free fermions (continuous or Trotter circuit) or Majorana propagation.",
)
@click.option("--max-weight", type=int, default=10, show_default=True, help="Majorana weight cutoff.")
@click.option("--min-coeff", type=float, default=3e-5, show_default=True, help="Majorana coefficient cutoff.")
@click.option("--out", "-o", type=click.Path(dir_okay=False, path_type=Path), required=True, help="Output CSV.")
def simulate(
    ctx: click.Context,
    size: str,
    U: float,
    flux: str,
    state_kind: str,
    holes: tuple[tuple[int, int], ...],
    times: tuple[float, ...],
    engine: str,
    max_weight: int,
    min_coeff: float,
    out: Path,
) -> None:
    """Noiseless Z/ZZ and global observables of one (U, flux) series."""
    log_context(ctx)
    with domain_errors():
        model, state = _model_and_state(_cell_config(size, U, flux, state_kind, holes))
        trunc = majorana.TruncationSpec(max_weight=max_weight, min_coeff=min_coeff) if engine == "majorana" else None
        frame = simulate_frame(model, state, times or DEFAULT_TIMES, engine, trunc)
        pipeline.write_csv(frame, out, _header(ctx, engine=engine, size=model.lattice.size_label))
    logger.info(f"Wrote {len(frame)} rows to {out}")


@cli.command()
@click.pass_context
@state_options
@click.option("--time", "-t", "t", type=float, required=True, help="Evolution time.")
@click.option("--twirls", type=int, default=4, show_default=True, help="Readout-twirl instances.")
@click.option("--shots", "n_shots", type=int, default=1000, show_default=True, help="Shots per twirl instance.")
@click.option("--p2", type=float, default=3e-3, show_default=True, help="Two-qubit depolarizing probability.")
@click.option("--p1", type=float, default=1e-4, show_default=True, help="Single-qubit depolarizing probability.")
@click.option("--p-ro", type=float, default=1e-2, show_default=True, help="Readout flip probability.")
@click.option("--bitflip", type=float, default=0.0, show_default=True, help="Extra bitflip noise on the output.")
@click.option("--seed", type=int, default=0, show_default=True, help="Seed of every random stream.")
@click.option("--out", "-o", type=click.Path(dir_okay=False, path_type=Path), required=True, help="Output JSONL.")
def sample(
    ctx: click.Context,
    size: str,
    U: float,
    flux: str,
    state_kind: str,
    holes: tuple[tuple[int, int], ...],
    t: float,
    twirls: int,
    n_shots: int,
    p2: float,
    p1: float,
    p_ro: float,
    bitflip: float,
    seed: int,
    out: Path,
) -> None:
    """Sample one cell under synthetic device noise with readout twirling."""
    log_context(ctx)
    with domain_errors():
        config = _cell_config(
            size, U, flux, state_kind, holes,
            times=(t,), n_twirls=twirls, shots_per_twirl=n_shots, noise=NoiseSpec(p2, p1, p_ro), seed=seed,
        )
        shots = pipeline.sample_cell(config, (flux, U, t))
        if bitflip > 0:
            shots = pipeline.inject_bitflip(shots, bitflip, config.stream_seed("bitflip", flux, U, t))
        shots.save_jsonl(out)
    logger.info(f"Wrote {shots.n_shots} shots to {out}")


def _load_shots(paths: Sequence[Path]) -> list[ShotTable]:
    tables = [ShotTable.load_jsonl(p) for p in paths]
    for path, table in zip(paths, tables):
        logger.debug(f"{path}: {table.n_shots} shots at t={table.t} U={table.U} flux={table.flux}")
    return tables


def _train(
    training: list[ShotTable],
    exact_path: Path,
    subsets: list[tuple[int, ...]],
    recipe: str,
    ansatz: Ansatz,
    groups: dict[str, str],
) -> MitigationModel:
    if not training:
        raise FermiHubError("TFLO training needs U = 0 shot files among --shots")
    exact = pipeline.read_csv(exact_path)
    fits = tflo_fit(pipeline.noisy_series(training, subsets), exact, ansatz, groups=groups)
    return MitigationModel(recipe=recipe, tflo=fits, mesr_constraints=list(subsets))


@cli.command()
@click.pass_context
@state_options
@click.option(
    "--shots", "shot_paths", type=click.Path(exists=True, dir_okay=False, path_type=Path), multiple=True,
    required=True, help="Shot files; those at U = 0 also train the TFLO fits.",
)
@click.option(
    "--train-exact", type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help="Free-fermion reference CSV (observable, t, value), e.g. from `simulate --engine flo-trotter`.",
)
@click.option(
    "--method",
    type=click.Choice(["raw", "tflo", "tflo+mesr", "tflo+gpr", "tflo+mesr+gpr"]),
    default="tflo",
    show_default=True,
)
@click.option("--ansatz", type=click.Choice(["linear", "linear_linear"]), default="linear_linear", show_default=True)
@click.option("--max-hamming-err", type=int, default=0, show_default=True, help="Post-selection tolerance.")
@click.option(
    "--symmetry/--no-symmetry",
    default=True,
    show_default=True,
    help="Add TFLO values averaged over the symmetries of the initial state and constrain MESR to them.",
)
@click.option("--model-out", type=click.Path(dir_okay=False, path_type=Path), help="Save the mitigation model.")
@click.option("--out", "-o", type=click.Path(dir_okay=False, path_type=Path), required=True, help="Output CSV.")
def mitigate(
    ctx: click.Context,
    size: str,
    U: float,
    flux: str,
    state_kind: str,
    holes: tuple[tuple[int, int], ...],
    shot_paths: tuple[Path, ...],
    train_exact: Optional[Path],
    method: str,
    ansatz: str,
    max_hamming_err: int,
    symmetry: bool,
    model_out: Optional[Path],
    out: Path,
) -> None:
    """Untwirl, post-select and mitigate Z/ZZ expectations of sampled shots."""
    log_context(ctx)
    recipe = method.removesuffix("+gpr")
    with domain_errors():
        model, state = _model_and_state(_cell_config(size, U, flux, state_kind, holes))
        lattice = model.lattice
        subsets = mesr_constraints(lattice)
        tables = [pipeline.prepared_shots(s, lattice, state, max_hamming_err) for s in _load_shots(shot_paths)]
        mitigation: Optional[MitigationModel] = None
        if recipe != "raw":
            if train_exact is None:
                raise click.UsageError(f"--method {method} needs --train-exact")
            groups = {pipeline.obs_name(s): observable_group(s, lattice) for s in subsets}
            fit_ansatz: Ansatz = "linear" if ansatz == "linear" else "linear_linear"
            training = [s for s in tables if s.U == 0]
            mitigation = _train(training, train_exact, subsets, recipe, fit_ansatz, groups)
            if model_out is not None:
                mitigation.save_to_file(model_out)
        rows: list[dict[str, Any]] = []
        for kept in tables:
            if kept.n_shots < 2:
                logger.warning(f"t={kept.t} U={kept.U}: fewer than two shots survive post-selection")
                continue
            base = {"t": kept.t, "U": kept.U, "flux": kept.flux}
            rows += pipeline.mitigated_rows(
                kept, subsets, mitigation, base, lattice=lattice if symmetry else None, state=state
            )
        frame = observables.results_frame(rows)
        if method.endswith("+gpr") and not frame.empty:
            frame = observables.results_frame(rows + pipeline.gpr_rows(frame, recipe.split("+")[-1]))
        pipeline.write_csv(frame, out, _header(ctx, method=method))
    logger.info(f"Wrote {len(frame)} rows to {out}")


@cli.command()
@click.pass_context
@state_options
@click.option(
    "--shots", "shot_paths", type=click.Path(exists=True, dir_okay=False, path_type=Path), multiple=True,
    required=True, help="Shot files to analyse.",
)
@click.option(
    "--suite", "suites", type=click.Choice(OBSERVABLE_SUITES), multiple=True, help="Observable suites (repeatable)."
)
@click.option("--max-hamming-err", type=int, default=0, show_default=True, help="Post-selection tolerance.")
@click.option("--bitflip", type=float, default=0.0, show_default=True, help="Bitflip noise applied before analysis.")
@click.option("--seed", type=int, default=0, show_default=True, help="Bitflip seed.")
@click.option("--out", "-o", type=click.Path(dir_okay=False, path_type=Path), required=True, help="Output CSV.")
def analyze(
    ctx: click.Context,
    size: str,
    U: float,
    flux: str,
    state_kind: str,
    holes: tuple[tuple[int, int], ...],
    shot_paths: tuple[Path, ...],
    suites: tuple[str, ...],
    max_hamming_err: int,
    bitflip: float,
    seed: int,
    out: Path,
) -> None:
    """Evaluate observable suites on sampled shots."""
    log_context(ctx)
    with domain_errors():
        model, state = _model_and_state(_cell_config(size, U, flux, state_kind, holes))
        lattice = model.lattice
        rows: list[dict[str, Any]] = []
        for k, shots in enumerate(_load_shots(shot_paths)):
            if bitflip > 0:
                shots = pipeline.inject_bitflip(shots, bitflip, seed + k)
            kept = pipeline.prepared_shots(shots, lattice, state, max_hamming_err)
            if kept.n_shots == 0:
                logger.warning(f"t={shots.t} U={shots.U}: no shots survive post-selection")
                continue
            table = observables.ExpectationTable.from_shots(kept, lattice)
            base = {"t": shots.t, "U": shots.U, "flux": shots.flux, "method": "raw"}
            rows += pipeline.suite_rows(kept, table, state, suites or ("global", "local"), base)
        frame = pd.DataFrame(rows, columns=["suite", "observable", "t", "U", "flux", "value", "method"])
        pipeline.write_csv(frame, out, _header(ctx, bitflip=bitflip, seed=seed))
    logger.info(f"Wrote {len(frame)} rows to {out}")


@cli.command()
@click.pass_context
@state_options
@click.option(
    "--shots", "shot_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True,
    help="Shot file of a U = 0 circuit.",
)
@click.option("--model", "reference", type=click.Choice(["flo"]), default="flo", show_default=True)
@click.option("--time", "-t", "t", type=float, default=None, help="Circuit time (default: the time in the shots).")
@click.option("--seed", type=int, default=0, show_default=True, help="Seed for Monte Carlo collision estimates.")
@click.option("--out", "-o", type=click.Path(dir_okay=False, path_type=Path), help="Output JSON (default: stdout).")
def xeb(
    ctx: click.Context,
    size: str,
    U: float,
    flux: str,
    state_kind: str,
    holes: tuple[tuple[int, int], ...],
    shot_path: Path,
    reference: str,
    t: Optional[float],
    seed: int,
    out: Optional[Path],
) -> None:
    """Linear XEB fidelity of sampled shots against free-fermion amplitudes."""
    log_context(ctx)
    if U != 0:
        logger.warning(f"XEB scores against the U = 0 circuit; ignoring --u {U:g}")
    with domain_errors():
        model, state = _model_and_state(_cell_config(size, 0.0, flux, state_kind, holes))
        shots = ShotTable.load_jsonl(shot_path)
        time = shots.t if t is None else t
        reports = pipeline.xeb_cell(model, state, shots, time, DEFAULT_LAYER_SCHEDULE, seed)
        _emit_json({**_header(ctx, model=reference, shots=str(shot_path)), "reports": reports}, out)


@cli.command("trotter-error")
@click.pass_context
@click.option("--size", "-s", "sizes", multiple=True, help="Lattice sizes (default: 2x2, 2x3).")
@click.option("--time", "-t", "times", type=float, multiple=True, help="Times (default: 0.1 to 1.2).")
@click.option("--u", "U_list", type=float, multiple=True, help="Interactions (default: 0, 4, 8).")
@click.option("--flux", "fluxes", type=click.Choice([f.value for f in Flux]), multiple=True, help="Fluxes.")
@click.option("--layers", type=int, default=3, show_default=True, help="Trotter layers per circuit.")
@click.option("--seed", type=int, default=0, show_default=True, help="Seed for subsampled weight-3/4 observables.")
@click.option("--out", "-o", type=click.Path(dir_okay=False, path_type=Path), required=True, help="Output CSV.")
def trotter_error(
    ctx: click.Context,
    sizes: tuple[str, ...],
    times: tuple[float, ...],
    U_list: tuple[float, ...],
    fluxes: tuple[str, ...],
    layers: int,
    seed: int,
    out: Path,
) -> None:
    """Trotter error of the layered circuits against exact dynamics."""
    log_context(ctx)
    with domain_errors():
        frame = trotter_error_report(
            sizes or ("2x2", "2x3"),
            times or DEFAULT_TIMES[1:],
            U_list or (0.0, 4.0, 8.0),
            fluxes or (Flux.ZERO.value,),
            n_layers=layers,
            seed=seed,
        )
        pipeline.write_csv(frame, out, _header(ctx, layers=layers, seed=seed))
    logger.info(f"Wrote {len(frame)} rows to {out}")


@cli.command()
@click.pass_context
@click.argument("claim_ids", nargs=-1)
@click.option("--list", "list_claims", is_flag=True, help="List the registered claims and exit.")
@click.option("--out", "-o", type=click.Path(dir_okay=False, path_type=Path), help="Output JSON (default: stdout).")
def reproduce(ctx: click.Context, claim_ids: tuple[str, ...], list_claims: bool, out: Optional[Path]) -> None:
    """Run registered claims (all by default) and print a machine-readable verdict."""
    log_context(ctx)
    if list_claims:
        for claim_id in pipeline.CLAIMS:
            click.echo(claim_id)
        return
    unknown = [c for c in claim_ids if c not in pipeline.CLAIMS]
    if unknown:
        raise click.BadParameter(f"unknown claims {unknown}; see --list", param_hint="CLAIM_IDS")
    with domain_errors():
        results = pipeline.reproduce_all(claim_ids or None)
    verdict = {
        **_header(ctx),
        "passed": all(r.passed for r in results),
        "claims": [r.to_dict() for r in results],
    }
    _emit_json(verdict, out)
    if not verdict["passed"]:
        ctx.exit(1)


@cli.command()
@click.pass_context
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--threads", type=int, default=None, help="Worker threads for independent cells.")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--out", "output_dir", type=click.Path(file_okay=False, path_type=Path), help="Artifact directory.")
@click.option("--no-cache", is_flag=True, help="Recompute every stage.")
def run(
    ctx: click.Context,
    config_path: Path,
    threads: Optional[int],
    seed: Optional[int],
    output_dir: Optional[Path],
    no_cache: bool,
) -> None:
    """Run the full pipeline of an experiment config."""
    log_context(ctx)
    with domain_errors():
        config = load_config(config_path).with_overrides(
            seed=seed, threads=threads, output_dir=None if output_dir is None else str(output_dir)
        )
        result = pipeline.run_pipeline(config, use_cache=not no_cache, version=ctx.obj["VERSION"])
    summary = {
        "output_dir": str(result.output_dir),
        "config_hash": result.config_hash,
        "recomputed": result.recomputed(),
        "stages": [s.to_dict() for s in result.stages],
    }
    _emit_json(summary, None)
    if result.has_errors():
        ctx.exit(1)


@cli.command("init-config")
@click.pass_context
@click.argument("config_path", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--size", "-s", default="2x3", show_default=True, help="Lattice size as ROWSxCOLS.")
@click.option("--force", is_flag=True, help="Overwrite an existing file.")
def init_config(ctx: click.Context, config_path: Path, size: str, force: bool) -> None:
    """Write a default experiment config to edit."""
    log_context(ctx)
    if config_path.exists() and not force:
        raise click.ClickException(f"{config_path} exists; use --force to overwrite")
    with domain_errors():
        config = ExperimentConfig(size=size)
        dump_config(config, config_path)
    logger.info(f"Wrote config {config_hash(config)[:12]} to {config_path}")


@cli.group()
@click.pass_context
@click.option(
    "--file-path",
    "-f",
    type=click.Path(file_okay=True, dir_okay=False, path_type=Path),
    help="Path to the cache file to operate on",
)
def cache(ctx: click.Context, file_path: Path | None) -> None:
    """
    Stage cache management commands group.

    Args:
        ctx (click.Context): The Click context object.
        file_path (Path | None): Optional path to the cache file.
    """
    if file_path is None:
        ctx.obj["CACHE_PATH"] = fermihub.fermihublib.cache.default_cache_path()
    else:
        ctx.obj["CACHE_PATH"] = file_path


@cache.command()
@click.pass_context
def clean(ctx: click.Context) -> None:
    """
    Remove the cache file and its WAL side files if they exist.

    Args:
        ctx (click.Context): The Click context object.
    """
    # Do not go through `Cache`: the lazy singleton would open the default cache only to delete
    # a possibly different --file-path target.
    log_context(ctx)
    cache_path: Path = ctx.obj["CACHE_PATH"]
    removed = 0
    for path in (cache_path, Path(f"{cache_path}-wal"), Path(f"{cache_path}-shm")):
        if path.exists():
            logger.debug(f"Deleting {path}")
            path.unlink()
            removed += 1
    if not removed:
        logger.debug(f"Cache at {cache_path} does not exist, skipping clean")


@cache.command()
@click.pass_context
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
def invalidate(ctx: click.Context, config_path: Path) -> None:
    """
    Drop the cached stages of one experiment config.

    Args:
        ctx (click.Context): The Click context object.
        config_path (Path): The experiment config whose stages are dropped.
    """
    log_context(ctx)
    cache_path: Path = ctx.obj["CACHE_PATH"]
    with domain_errors():
        digest = config_hash(load_config(config_path))
    scoped = fermihub.fermihublib.cache.ResultCache(str(cache_path.resolve()))
    try:
        removed = scoped.invalidate(digest)
    finally:
        scoped.close()
    click.echo(f"{removed} cached stages removed")


if __name__ == "__main__":
    cli(obj={})

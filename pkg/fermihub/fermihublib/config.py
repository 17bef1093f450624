"""
Experiment configuration.

An ``ExperimentConfig`` is a frozen dataclass tree read from and written to TOML. Its hash (SHA-256
of the canonical JSON rendering) keys the stage cache and is stamped on every output.
"""

from __future__ import annotations

import hashlib
import json
import zlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import toml
from beartype import BeartypeConf, beartype
from beartype.typing import Any, Mapping, Optional, Union
from loguru import logger

from fermihub.fermihublib.circuits import DEFAULT_LAYER_SCHEDULE
from fermihub.fermihublib.defs import ConfigError, Flux, StateKind
from fermihub.fermihublib.mitigation import Ansatz
from fermihub.fermihublib.model import InitialStateSpec, LatticeSpec, ModelSpec, build_initial_state, build_model
from fermihub.fermihublib.statevec import NoiseSpec

_boundary = beartype(conf=BeartypeConf(is_pep484_tower=True))

DEFAULT_TIMES: tuple[float, ...] = tuple(round(float(t), 10) for t in np.linspace(0.0, 1.2, 13))

OBSERVABLE_SUITES = (
    "global",
    "local",
    "stripe",
    "pair_distance",
    "afm",
    "percolation",
    "wilson",
    "ipr",
    "ms",
    "ipr_baseline",
)

RECIPES = ("none", "tflo", "tflo+mesr")


@dataclass(frozen=True)
class StateConfig:
    kind: str = StateKind.NEEL_WITH_HOLES.value
    holes: tuple[tuple[int, int], ...] = ()
    singlet_pairs: Optional[tuple[tuple[tuple[int, int], tuple[int, int]], ...]] = None
    stripe_column: Optional[int] = None
    n_holes: int = 0
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        try:
            StateKind(self.kind)
        except ValueError:
            raise ConfigError(f"Unknown initial state kind {self.kind!r}") from None

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {"kind": self.kind, "holes": [list(h) for h in self.holes], "n_holes": self.n_holes}
        if self.singlet_pairs is not None:
            data["singlet_pairs"] = [[list(a), list(b)] for a, b in self.singlet_pairs]
        if self.stripe_column is not None:
            data["stripe_column"] = self.stripe_column
        if self.seed is not None:
            data["seed"] = self.seed
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "StateConfig":
        pairs = data.get("singlet_pairs")
        return cls(
            kind=str(data.get("kind", StateKind.NEEL_WITH_HOLES.value)),
            holes=tuple((int(h[0]), int(h[1])) for h in data.get("holes", [])),
            singlet_pairs=(
                None
                if pairs is None
                else tuple(((int(a[0]), int(a[1])), (int(b[0]), int(b[1]))) for a, b in pairs)
            ),
            stripe_column=None if data.get("stripe_column") is None else int(data["stripe_column"]),
            n_holes=int(data.get("n_holes", 0)),
            seed=None if data.get("seed") is None else int(data["seed"]),
        )


@dataclass(frozen=True)
class MitigationConfig:
    recipe: str = "tflo"
    ansatz: Ansatz = "linear_linear"
    max_hamming_err: int = 0
    gpr: bool = False
    bootstrap_resamples: int = 0

    def __post_init__(self) -> None:
        if self.recipe not in RECIPES:
            raise ConfigError(f"Unknown mitigation recipe {self.recipe!r}; expected one of {RECIPES}")
        if self.ansatz not in ("linear", "linear_linear"):
            raise ConfigError(f"Unknown TFLO ansatz {self.ansatz!r}")
        if self.max_hamming_err < 0:
            raise ConfigError(f"max_hamming_err must be >= 0, got {self.max_hamming_err}")
        if self.bootstrap_resamples and self.bootstrap_resamples < 10:
            raise ConfigError(f"bootstrap_resamples must be 0 or >= 10, got {self.bootstrap_resamples}")


@dataclass(frozen=True)
class ExperimentConfig:
    """
    One experiment: a lattice, a grid of (t, U, flux) cells, the noise model and the analysis.

    ``n_twirls`` twirl instances with ``shots_per_twirl`` shots each are sampled per cell.
    """

    size: str = "2x3"
    U: tuple[float, ...] = (0.0, 4.0, 8.0)
    flux: tuple[str, ...] = (Flux.ZERO.value,)
    times: tuple[float, ...] = DEFAULT_TIMES
    layer_schedule: tuple[tuple[float, int], ...] = DEFAULT_LAYER_SCHEDULE
    state: StateConfig = field(default_factory=StateConfig)
    n_twirls: int = 4
    shots_per_twirl: int = 1000
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    mitigation: MitigationConfig = field(default_factory=MitigationConfig)
    observables: tuple[str, ...] = ("global", "local")
    xeb: bool = True
    error_bars: bool = True
    seed: int = 0
    threads: int = 1
    output_dir: str = "fermihub-out"

    def __post_init__(self) -> None:
        self._validate_grid()
        if self.n_twirls < 1 or self.shots_per_twirl < 1:
            raise ConfigError("n_twirls and shots_per_twirl must be positive")
        if self.error_bars and self.n_twirls < 2:
            raise ConfigError("Error bars need at least 2 twirl instances")
        unknown = [o for o in self.observables if o not in OBSERVABLE_SUITES]
        if unknown:
            raise ConfigError(f"Unknown observable suites {unknown}; expected a subset of {OBSERVABLE_SUITES}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")

    def _validate_grid(self) -> None:
        try:
            LatticeSpec.parse_size(self.size)
        except ValueError as e:
            raise ConfigError(str(e)) from None
        if not self.times:
            raise ConfigError("The time grid is empty")
        if any(b < a for a, b in zip(self.times, self.times[1:])):
            raise ConfigError(f"The time grid must be sorted, got {list(self.times)}")
        if self.times[0] < 0:
            raise ConfigError(f"Times must be non-negative, got {self.times[0]}")
        if not self.U or not self.flux:
            raise ConfigError("U and flux lists must not be empty")
        for flux in self.flux:
            try:
                Flux(flux)
            except ValueError:
                raise ConfigError(f"Unknown flux {flux!r}") from None

    @property
    def lattice(self) -> LatticeSpec:
        return LatticeSpec.parse_size(self.size)

    def model(self, U: float, flux: str) -> ModelSpec:
        lattice = self.lattice
        return build_model(lattice.Lx, lattice.Ly, float(U), flux)

    def initial_state(self, model: ModelSpec) -> InitialStateSpec:
        return build_initial_state(
            model,
            self.state.kind,
            holes=self.state.holes,
            singlet_pairs=self.state.singlet_pairs,
            stripe_column=self.state.stripe_column,
            n_holes=self.state.n_holes,
            seed=self.state.seed,
        )

    def stream_seed(self, name: str, *cell: Union[int, float, str]) -> int:
        """Seed of a named random stream (twirl, noise, sampling, bootstrap) for one cell."""
        words = [self.seed, zlib.crc32(name.encode())] + [zlib.crc32(repr(c).encode()) for c in cell]
        return int(np.random.SeedSequence(words).generate_state(1)[0])

    def to_dict(self) -> dict[str, Any]:
        return {
            "size": self.size,
            "U": list(self.U),
            "flux": list(self.flux),
            "times": list(self.times),
            # TOML arrays are homogeneous
            "layer_schedule": [[float(bound), float(layers)] for bound, layers in self.layer_schedule],
            "state": self.state.to_dict(),
            "n_twirls": self.n_twirls,
            "shots_per_twirl": self.shots_per_twirl,
            "noise": {"p2": self.noise.p2, "p1": self.noise.p1, "p_ro": self.noise.p_ro},
            "mitigation": {f.name: getattr(self.mitigation, f.name) for f in fields(self.mitigation)},
            "observables": list(self.observables),
            "xeb": self.xeb,
            "error_bars": self.error_bars,
            "seed": self.seed,
            "threads": self.threads,
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ExperimentConfig":
        kwargs: dict[str, Any] = {}
        for key, value in data.items():
            converter = _CONVERTERS.get(key)
            if converter is None:
                logger.warning(f"Ignoring unknown config key {key!r}")
                continue
            try:
                kwargs[key] = converter(value)
            except (TypeError, ValueError, KeyError) as e:
                raise ConfigError(f"Invalid value for config key {key!r}: {e}") from e
        return cls(**kwargs)

    def with_overrides(
        self, *, seed: Optional[int] = None, threads: Optional[int] = None, output_dir: Optional[str] = None
    ) -> "ExperimentConfig":
        changes: dict[str, Any] = {}
        if seed is not None:
            changes["seed"] = seed
        if threads is not None:
            changes["threads"] = threads
        if output_dir is not None:
            changes["output_dir"] = output_dir
        return replace(self, **changes) if changes else self


def _mitigation_from(value: Mapping[str, Any]) -> MitigationConfig:
    known = {f.name for f in fields(MitigationConfig)}
    for key in value:
        if key not in known:
            logger.warning(f"Ignoring unknown mitigation key {key!r}")
    return MitigationConfig(**{k: v for k, v in value.items() if k in known})


_CONVERTERS: dict[str, Any] = {
    "size": str,
    "U": lambda v: tuple(float(u) for u in v),
    "flux": lambda v: tuple(str(f) for f in v),
    "times": lambda v: tuple(float(t) for t in v),
    "layer_schedule": lambda v: tuple((float(b), int(round(float(n)))) for b, n in v),
    "state": StateConfig.from_dict,
    "n_twirls": int,
    "shots_per_twirl": int,
    "noise": lambda v: NoiseSpec(**{k: float(x) for k, x in v.items() if k in ("p2", "p1", "p_ro")}),
    "mitigation": _mitigation_from,
    "observables": lambda v: tuple(str(o) for o in v),
    "xeb": bool,
    "error_bars": bool,
    "seed": int,
    "threads": int,
    "output_dir": str,
}


def config_hash(config: ExperimentConfig) -> str:
    """SHA-256 of the canonical JSON rendering; ``threads`` and ``output_dir`` do not change results."""
    data = config.to_dict()
    data.pop("threads")
    data.pop("output_dir")
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@_boundary
def load_config(file_path: Union[str, Path]) -> ExperimentConfig:
    """
    Read an experiment config from a TOML file.

    Raises:
        ConfigError: If the file cannot be read or holds invalid values.
    """
    path = Path(file_path)
    try:
        data = toml.load(path)
    except (OSError, toml.TomlDecodeError) as e:
        raise ConfigError(f"Cannot read config {path}: {e}") from e
    config = ExperimentConfig.from_dict(data)
    logger.info(f"Loaded config {path} ({config.size}, {len(config.times)} times, hash {config_hash(config)[:12]})")
    return config


def dump_config(config: ExperimentConfig, file_path: Union[str, Path]) -> None:
    with open(file_path, "w", encoding="utf-8") as f:
        toml.dump(config.to_dict(), f)

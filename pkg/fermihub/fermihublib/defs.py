"""
Shared definitions for the fermihub project.

This module provides:
- Application paths (data directory, log file, cache directory)
- Enums shared between modules (flux, spin sector, initial state kinds, site classes)
- The exception hierarchy used across the library
- Protocols for pluggable oracles (amplitude functions, shot pipelines)
"""

from enum import Enum, auto
from pathlib import Path

import numpy as np
import platformdirs
from beartype.typing import Any, Protocol, runtime_checkable

APP_NAME = "fermihub"

# Hopping amplitude; every energy and time in the package is in units of J.
HOPPING_J = 1.0

# Largest Trotter step used when a time is split into layers.
MAX_TROTTER_STEP = 0.4

# Dense state-vector simulation is capped here; beyond it the FLO/Majorana engines take over.
MAX_DENSE_QUBITS = 26

# Singlet expansions grow as 2^N_singlets; the 6x6 covering has 17.
MAX_SINGLETS = 18

# Sector-restricted exact dynamics; a 3x3 lattice needs at most 126^2 states.
MAX_SECTOR_DIM = 2_000_000


def get_app_data_dir(ensure_exists: bool = False) -> str:
    """
    Get the application data directory for the current user using platformdirs.

    Args:
        ensure_exists: When True, create the directory if it does not exist. Defaults to
            False so merely resolving the path (e.g. at import) has no filesystem side effect.

    Returns:
        The path to the application data directory.
    """
    return platformdirs.user_data_dir(appname=APP_NAME, ensure_exists=ensure_exists)


def default_cache_dir() -> Path:
    return Path(get_app_data_dir()) / "cache"


# Resolved at import without creating directories; the loguru file sink creates it on first write.
LOG_FILE_PATH = Path(get_app_data_dir()) / "fermihub.log"


class FermiHubError(Exception):
    """Base class for domain failures raised by the library."""


class ConfigError(FermiHubError):
    """An experiment configuration is malformed or inconsistent."""


class SectorError(FermiHubError):
    """A state or bitstring is not in the expected particle-number sector."""


class CapacityError(FermiHubError):
    """A request exceeds what the exact engines can hold (qubits, sector dimension, singlets)."""


class MitigationError(FermiHubError):
    """Mitigation inputs are missing or statistically degenerate."""


class UndefinedEstimate(FermiHubError):
    """An estimator has no defined value on its input (e.g. no contributing shots)."""


class Flux(Enum):
    ZERO = "zero"
    PI = "pi"

    @property
    def phase(self) -> float:
        return float(np.pi) if self is Flux.PI else 0.0


class Orientation(Enum):
    HORIZONTAL = "horizontal"
    VERTICAL = "vertical"


class Spin(Enum):
    UP = 0
    DOWN = 1


class StateKind(Enum):
    NEEL_WITH_HOLES = "neel_with_holes"
    HOLON_STRIPE = "holon_stripe"
    SINGLET_COVERING_WITH_HOLES = "singlet_covering_with_holes"
    RANDOM_HOLES = "random_holes"


class SiteClass(Enum):
    """Local Fock state of one lattice site."""

    HOLON = auto()
    UP = auto()
    DOWN = auto()
    DOUBLON = auto()

    @property
    def sz(self) -> int:
        if self is SiteClass.UP:
            return 1
        if self is SiteClass.DOWN:
            return -1
        return 0


@runtime_checkable
class AmplitudeOracle(Protocol):
    """
    Protocol for ideal output probabilities of a circuit or evolution.
    Used by XEB to score sampled bitstrings without knowing which engine produced them.
    """

    def __call__(self, bits: np.ndarray) -> float: ...


@runtime_checkable
class ShotPipeline(Protocol):
    """Protocol for a pure function from a shot table to an estimate or a vector of estimates."""

    def __call__(self, shots: Any) -> Any: ...

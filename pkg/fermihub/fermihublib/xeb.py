"""
Linear cross-entropy benchmarking against free-fermion reference amplitudes.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from beartype.typing import Any, Literal, Optional
from loguru import logger

from fermihub.fermihublib.defs import AmplitudeOracle
from fermihub.fermihublib.shots import ShotTable

# C - 1/D must exceed this many standard errors for F to be meaningful.
SHORT_TIME_SE_FACTOR = 10.0

SectorConvention = Literal["drop", "keep_zero"]


@dataclass(frozen=True)
class XEBReport:
    D: int
    C: float
    C_se: float
    mean_p: float
    mean_p_se: float
    F: Optional[float]
    F_se: Optional[float]
    t: float
    n_samples: int
    convention: str = "drop"
    acceptance: float = 1.0
    short_time: bool = False

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _oracle_probabilities(oracle: AmplitudeOracle, bits: np.ndarray) -> np.ndarray:
    batch = getattr(oracle, "batch", None)
    if callable(batch):
        return np.asarray(batch(bits), dtype=float)
    return np.array([oracle(row) for row in bits], dtype=float)


def linear_xeb(
    shots: ShotTable,
    oracle: AmplitudeOracle,
    C: float,
    D: int,
    *,
    C_se: float = 0.0,
    convention: SectorConvention = "drop",
    n_up: Optional[int] = None,
    n_down: Optional[int] = None,
) -> XEBReport:
    """
    ``F = (D <p_ideal> - 1) / (C D - 1)`` over the sampled bitstrings.

    Args:
        shots: Sampled bitstrings.
        oracle: Ideal output probabilities (zero outside the particle sector).
        C: Collision probability of the ideal distribution.
        D: Sector dimension.
        C_se: Standard error of ``C`` when it was estimated by sampling.
        convention: ``drop`` removes out-of-sector shots first, ``keep_zero`` scores them with p = 0.
        n_up: Up-sector particle number for ``drop`` (inferred from nonzero amplitudes otherwise).
        n_down: Down-sector particle number for ``drop``.

    Returns:
        The report; ``F`` is None when ``C D`` is indistinguishable from 1.
    """
    if shots.n_shots == 0:
        raise ValueError("XEB needs at least one shot")
    bits = shots.bits
    probs = _oracle_probabilities(oracle, bits)
    acceptance = 1.0
    if convention == "drop":
        if n_up is not None and n_down is not None:
            half = bits.shape[1] // 2
            keep = (bits[:, :half].sum(axis=1) == n_up) & (bits[:, half:].sum(axis=1) == n_down)
        else:
            keep = probs > 0
        acceptance = float(keep.mean())
        probs = probs[keep]
        if len(probs) == 0:
            raise ValueError("No shots left in the particle sector")
    n = len(probs)
    mean_p = float(probs.mean())
    mean_p_se = float(probs.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0

    denom = C * D - 1
    denom_se = C_se * D
    short_time = abs(C - 1 / D) < SHORT_TIME_SE_FACTOR * max(C_se, 1e-15) if C_se > 0 else abs(denom) < 1e-12
    if short_time:
        logger.warning(f"C - 1/D = {C - 1 / D:.3e} is within {SHORT_TIME_SE_FACTOR:g} SE of zero; XEB is unreliable")
    if abs(denom) <= max(denom_se, 1e-12):
        return XEBReport(D, C, C_se, mean_p, mean_p_se, None, None, shots.t, n, convention, acceptance, True)
    numerator = D * mean_p - 1
    F = numerator / denom
    F_se = math.sqrt((D * mean_p_se / denom) ** 2 + (numerator * denom_se / denom**2) ** 2)
    logger.debug(f"XEB t={shots.t}: F={F:.4f} +- {F_se:.4f} from {n} shots (D={D}, C={C:.3e})")
    return XEBReport(D, C, C_se, mean_p, mean_p_se, F, F_se, shots.t, n, convention, acceptance, short_time)


def xeb_both_conventions(
    shots: ShotTable, oracle: AmplitudeOracle, C: float, D: int, n_up: int, n_down: int, C_se: float = 0.0
) -> dict[str, XEBReport]:
    return {
        conv: linear_xeb(shots, oracle, C, D, C_se=C_se, convention=conv, n_up=n_up, n_down=n_down)
        for conv in ("drop", "keep_zero")
    }


@dataclass(frozen=True)
class SphericalScore:
    score: float
    upper_bound: Optional[float]


def spherical_score(
    model_probs: np.ndarray, model_l2_norm: float, reference_l2_norm: Optional[float] = None
) -> SphericalScore:
    """
    ``<p_model>_generator / ||p_model||_2``; ``reference_l2_norm`` (the FLO norm ``sqrt(C)``)
    is reported as the bound on the best achievable score.
    """
    if model_l2_norm <= 0:
        raise ValueError("Spherical score needs a model with non-zero l2 norm")
    probs = np.asarray(model_probs, dtype=float)
    if len(probs) == 0:
        raise ValueError("Spherical score needs at least one sample")
    return SphericalScore(score=float(probs.mean() / model_l2_norm), upper_bound=reference_l2_norm)


def uniform_sector_sample(L: int, n_up: int, n_down: int, n_shots: int, seed: int, *, t: float = 0.0) -> ShotTable:
    """Bitstrings drawn uniformly from the ``(n_up, n_down)`` sector, the F = 0 calibration source."""
    if n_shots <= 0:
        raise ValueError(f"n_shots must be positive, got {n_shots}")
    if not (0 <= n_up <= L and 0 <= n_down <= L):
        raise ValueError(f"Particle numbers ({n_up}, {n_down}) do not fit {L} sites")
    rng = np.random.default_rng(seed)
    bits = np.zeros((n_shots, 2 * L), dtype=np.uint8)
    rows = np.arange(n_shots)[:, None]
    if n_up:
        bits[rows, np.argsort(rng.random((n_shots, L)), axis=1)[:, :n_up]] = 1
    if n_down:
        bits[rows, L + np.argsort(rng.random((n_shots, L)), axis=1)[:, :n_down]] = 1
    return ShotTable(bits=bits, t=t)


def depolarized_mixture(ideal: ShotTable, uniform: ShotTable, fidelity: float, seed: int) -> ShotTable:
    """Each shot comes from ``ideal`` with probability ``fidelity`` and from ``uniform`` otherwise."""
    if not 0.0 <= fidelity <= 1.0:
        raise ValueError(f"fidelity must be in [0, 1], got {fidelity}")
    if ideal.bits.shape != uniform.bits.shape:
        raise ValueError(f"Shot tables differ in shape: {ideal.bits.shape} vs {uniform.bits.shape}")
    take_ideal = np.random.default_rng(seed).random(ideal.n_shots) < fidelity
    bits = np.where(take_ideal[:, None], ideal.bits, uniform.bits)
    return ShotTable(bits=bits, t=ideal.t, U=ideal.U, flux=ideal.flux)

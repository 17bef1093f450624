"""
Measured bitstrings and their JSONL persistence.

One row per shot, one column per qubit in Jordan-Wigner mode order. Twirled shots keep the raw
(masked) readout together with the mask until ``mitigation.readout_untwirl`` consumes it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from beartype.typing import Any, Iterable, Iterator, Optional
from loguru import logger

from fermihub.fermihublib.model import LatticeSpec

# Site classification codes: n_up + 2 * n_down.
HOLON, SINGLE_UP, SINGLE_DOWN, DOUBLON = 0, 1, 2, 3


@dataclass
class ShotTable:
    """
    Computational-basis samples with per-shot twirl bookkeeping.

    ``masks`` is None when no readout twirl was applied; otherwise it has the shape of ``bits``.
    """

    bits: np.ndarray
    t: float = 0.0
    U: float = 0.0
    flux: str = "zero"
    twirl_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    masks: Optional[np.ndarray] = None
    mask_consumed: bool = False

    def __post_init__(self) -> None:
        self.bits = np.asarray(self.bits, dtype=np.uint8)
        if self.bits.ndim != 2:
            raise ValueError(f"Shot bits must be a 2D array, got shape {self.bits.shape}")
        if len(self.twirl_ids) == 0 and len(self.bits) > 0:
            self.twirl_ids = np.zeros(len(self.bits), dtype=np.int64)
        self.twirl_ids = np.asarray(self.twirl_ids, dtype=np.int64)
        if len(self.twirl_ids) != len(self.bits):
            raise ValueError(f"{len(self.twirl_ids)} twirl ids for {len(self.bits)} shots")
        if self.masks is not None:
            self.masks = np.asarray(self.masks, dtype=np.uint8)
            if self.masks.shape != self.bits.shape:
                raise ValueError(f"Mask shape {self.masks.shape} does not match bits {self.bits.shape}")

    @property
    def n_shots(self) -> int:
        return int(self.bits.shape[0])

    @property
    def n_qubits(self) -> int:
        return int(self.bits.shape[1])

    def __len__(self) -> int:
        return self.n_shots

    def subset(self, selection: np.ndarray) -> "ShotTable":
        """Rows picked by a boolean mask or an index array."""
        return replace(
            self,
            bits=self.bits[selection],
            twirl_ids=self.twirl_ids[selection],
            masks=None if self.masks is None else self.masks[selection],
        )

    def with_bits(self, bits: np.ndarray) -> "ShotTable":
        return replace(self, bits=bits, twirl_ids=self.twirl_ids.copy(), masks=self.masks)

    @classmethod
    def concat(cls, tables: Iterable["ShotTable"]) -> "ShotTable":
        tables = list(tables)
        if not tables:
            raise ValueError("Nothing to concatenate")
        first = tables[0]
        has_masks = all(t.masks is not None for t in tables)
        masks = np.concatenate([t.masks for t in tables if t.masks is not None]) if has_masks else None
        return cls(
            bits=np.concatenate([t.bits for t in tables]),
            t=first.t,
            U=first.U,
            flux=first.flux,
            twirl_ids=np.concatenate([t.twirl_ids for t in tables]),
            masks=masks,
            mask_consumed=first.mask_consumed,
        )

    def by_twirl(self) -> dict[int, "ShotTable"]:
        return {int(tid): self.subset(self.twirl_ids == tid) for tid in np.unique(self.twirl_ids)}

    def sector_counts(self, lattice: LatticeSpec) -> tuple[np.ndarray, np.ndarray]:
        """Per-shot particle numbers of the up and down chains."""
        up = self.bits[:, : lattice.L].sum(axis=1)
        down = self.bits[:, lattice.L :].sum(axis=1)
        return up.astype(np.int64), down.astype(np.int64)

    def occupations(self, lattice: LatticeSpec) -> tuple[np.ndarray, np.ndarray]:
        """Per-shot ``n_up``/``n_down`` arrays indexed by row-major site."""
        positions = np.array(lattice.snake_order)
        return self.bits[:, positions], self.bits[:, lattice.L + positions]

    def classify(self, lattice: LatticeSpec) -> np.ndarray:
        """Site classes (``HOLON``, ``SINGLE_UP``, ``SINGLE_DOWN``, ``DOUBLON``) per shot and site."""
        up, down = self.occupations(lattice)
        return (up + 2 * down).astype(np.int8)

    def spin_z(self, lattice: LatticeSpec) -> np.ndarray:
        up, down = self.occupations(lattice)
        return up.astype(np.int8) - down.astype(np.int8)

    def records(self) -> Iterator[dict[str, Any]]:
        for k in range(self.n_shots):
            record: dict[str, Any] = {
                "bits": "".join(str(int(b)) for b in self.bits[k]),
                "t": self.t,
                "U": self.U,
                "flux": self.flux,
                "twirl_id": int(self.twirl_ids[k]),
                "mask": None if self.masks is None else "".join(str(int(b)) for b in self.masks[k]),
            }
            if self.mask_consumed:
                record["mask_consumed"] = True
            yield record

    def save_jsonl(self, file_path: Path) -> None:
        with open(file_path, "w", encoding="utf-8") as f:
            for record in self.records():
                f.write(json.dumps(record) + "\n")

    @classmethod
    def from_records(cls, records: Iterable[dict[str, Any]]) -> "ShotTable":
        """Build a table from JSONL records; malformed records are skipped."""
        bits, ids, masks = [], [], []
        meta: Optional[dict[str, Any]] = None
        consumed = False
        for k, record in enumerate(records):
            try:
                row = [int(c) for c in record["bits"]]
                if any(b not in (0, 1) for b in row):
                    raise ValueError(f"non-binary bits {record['bits']!r}")
                if bits and len(row) != len(bits[0]):
                    raise ValueError(f"expected {len(bits[0])} bits, got {len(row)}")
                mask = None if record.get("mask") is None else [int(c) for c in record["mask"]]
                if mask is not None and len(mask) != len(row):
                    raise ValueError("mask length differs from bits")
                twirl_id = int(record.get("twirl_id", 0))
            except (KeyError, ValueError, TypeError) as e:
                logger.error(f"Skipping malformed shot record {k}: {e}")
                continue
            if meta is None:
                meta = {
                    "t": float(record.get("t", 0.0)),
                    "U": float(record.get("U", 0.0)),
                    "flux": str(record.get("flux", "zero")),
                }
            consumed = consumed or bool(record.get("mask_consumed", False))
            bits.append(row)
            ids.append(twirl_id)
            masks.append(mask)
        if not bits:
            raise ValueError("No valid shot records")
        assert meta is not None
        has_masks = all(m is not None for m in masks)
        if not has_masks and any(m is not None for m in masks):
            logger.warning("Some shots carry a readout mask and some do not; dropping all masks")
        return cls(
            bits=np.array(bits, dtype=np.uint8),
            twirl_ids=np.array(ids, dtype=np.int64),
            masks=np.array(masks, dtype=np.uint8) if has_masks else None,
            mask_consumed=consumed,
            **meta,
        )

    @classmethod
    def load_jsonl(cls, file_path: Path) -> "ShotTable":
        def parsed() -> Iterator[dict[str, Any]]:
            with open(file_path, "r", encoding="utf-8") as f:
                for n, line in enumerate(f, start=1):
                    if not line.strip():
                        continue
                    try:
                        yield json.loads(line)
                    except json.JSONDecodeError as e:
                        logger.error(f"Skipping unreadable line {n} of {file_path}: {e}")

        return cls.from_records(parsed())


def bits_from_indices(indices: np.ndarray, n_qubits: int) -> np.ndarray:
    """Big-endian bit rows of basis-state indices (qubit 0 is the most significant bit)."""
    shifts = np.arange(n_qubits - 1, -1, -1, dtype=np.uint64)
    return ((np.asarray(indices, dtype=np.uint64)[:, None] >> shifts) & np.uint64(1)).astype(np.uint8)


def indices_from_bits(bits: np.ndarray) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.uint64)
    n_qubits = bits.shape[-1]
    weights = np.uint64(1) << np.arange(n_qubits - 1, -1, -1, dtype=np.uint64)
    return (bits * weights).sum(axis=-1).astype(np.int64)

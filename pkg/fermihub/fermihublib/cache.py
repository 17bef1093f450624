"""
Content-addressed cache of pipeline stage results.

This module provides the ResultCache class, an SQLite store of stage payloads keyed by the config hash, the
stage name and the (t, U, flux) cell. A rerun of an unchanged config finds every stage here and performs no
recomputation. It also provides a lazily constructed singleton instance `Cache` for application-wide use.
"""

import hashlib
import json
import os
import sqlite3 as sqlite
import threading
import uuid
from contextlib import contextmanager
from pathlib import Path
from typing import TYPE_CHECKING

from beartype.typing import Any, Generator, Optional, Union
from loguru import logger

import fermihub.fermihublib.defs as defs


def default_cache_path() -> Path:
    return defs.default_cache_dir() / "stages.db"


def stage_key(config_hash: str, stage: str, cell: tuple[Union[int, float, str], ...] = ()) -> str:
    """SHA-256 of the config hash, the stage name and the cell coordinates."""
    text = json.dumps([config_hash, stage, [repr(c) for c in cell]], separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class ResultCache:
    """
    SQLite store of stage payloads (JSON documents) keyed by :func:`stage_key`.

    Handles connection management, schema creation and lookups for the pipeline.
    """

    def __init__(self, cache_file_path: Optional[str] = None) -> None:
        """
        Initialize the cache and open a connection.

        Args:
            cache_file_path (str): Path to the cache file. Defaults to the application data location.
        """
        self._cache_file_path = cache_file_path if cache_file_path is not None else str(default_cache_path())
        self._cache_identifier = str(uuid.uuid4())
        logger.debug(f"Creating ResultCache {self._cache_identifier} at {self._cache_file_path}")
        self._conn: sqlite.Connection | None = None
        self._lock = threading.RLock()
        self.open()

    @property
    def path(self) -> Path:
        return Path(self._cache_file_path)

    def open(self) -> None:
        """
        Open the connection and create the table if it does not exist.

        Raises:
            sqlite.Error: If the cache cannot be opened or initialized.
        """
        with self._lock:
            if self._conn:
                return
            os.makedirs(os.path.dirname(self._cache_file_path) or ".", exist_ok=True)
            try:
                self._conn = sqlite.connect(self._cache_file_path, timeout=20, check_same_thread=False)
                self._conn.execute("PRAGMA journal_mode=WAL")
                self._conn.execute("PRAGMA busy_timeout=10000")
                self.create_tables()
            except sqlite.Error as e:
                logger.error(f"Error opening cache {self._cache_file_path}: {e}")
                raise

    def close(self) -> None:
        with self._lock:
            if self._conn:
                self._conn.close()
                self._conn = None

    @contextmanager
    def _transaction(self) -> Generator[sqlite.Connection, None, None]:
        """Serialise access across threads and wrap the body in one SQLite transaction."""
        with self._lock:
            if self._conn is None:
                raise sqlite.ProgrammingError("Cache is not open")
            with self._conn:
                yield self._conn

    def clean(self) -> None:
        """Close the connection and delete the cache file."""
        with self._lock:
            if self._conn is not None:
                self._conn.close()
                self._conn = None
            for suffix in ("", "-wal", "-shm"):
                path = Path(self._cache_file_path + suffix)
                if not path.exists():
                    continue
                logger.info(f"Deleting cache file {path}")
                try:
                    path.unlink()
                except PermissionError:
                    logger.warning(f"Could not delete cache file {path} - it may be in use")
                except OSError as e:
                    logger.error(f"Error deleting cache file {path}: {e}")

    def create_tables(self) -> None:
        with self._transaction() as conn:
            conn.execute(
                """CREATE TABLE IF NOT EXISTS stage_results (
                    key TEXT PRIMARY KEY,
                    config_hash TEXT NOT NULL,
                    stage TEXT NOT NULL,
                    cell TEXT NOT NULL,
                    payload TEXT NOT NULL,
                    created_at TEXT DEFAULT CURRENT_TIMESTAMP
                );"""
            )
            conn.execute("CREATE INDEX IF NOT EXISTS idx_stage_results_hash ON stage_results(config_hash)")

    def store(
        self, config_hash: str, stage: str, cell: tuple[Union[int, float, str], ...], payload: dict[str, Any]
    ) -> bool:
        """
        Insert or replace the payload of one stage cell.

        Returns:
            True on success, False if the payload could not be serialised or written.
        """
        key = stage_key(config_hash, stage, cell)
        try:
            text = json.dumps(payload)
            with self._transaction() as conn:
                conn.execute(
                    """INSERT OR REPLACE INTO stage_results (key, config_hash, stage, cell, payload)
                       VALUES (?, ?, ?, ?, ?)""",
                    (key, config_hash, stage, json.dumps([repr(c) for c in cell]), text),
                )
            return True
        except (TypeError, ValueError, sqlite.Error) as e:
            logger.error(f"Error caching stage {stage} {cell}: {e}")
            return False

    def fetch(
        self, config_hash: str, stage: str, cell: tuple[Union[int, float, str], ...] = ()
    ) -> Optional[dict[str, Any]]:
        """The cached payload, or None on a miss or an unreadable row."""
        key = stage_key(config_hash, stage, cell)
        try:
            with self._transaction() as conn:
                row = conn.execute("SELECT payload FROM stage_results WHERE key = ?", (key,)).fetchone()
        except sqlite.Error as e:
            logger.error(f"Error reading cached stage {stage} {cell}: {e}")
            return None
        if row is None:
            return None
        try:
            payload: dict[str, Any] = json.loads(row[0])
        except json.JSONDecodeError as e:
            logger.error(f"Skipping corrupt cache entry for stage {stage} {cell}: {e}")
            return None
        return payload

    def has(self, config_hash: str, stage: str, cell: tuple[Union[int, float, str], ...] = ()) -> bool:
        return self.fetch(config_hash, stage, cell) is not None

    def count(self, config_hash: Optional[str] = None) -> int:
        with self._transaction() as conn:
            if config_hash is None:
                row = conn.execute("SELECT COUNT(*) FROM stage_results").fetchone()
            else:
                row = conn.execute(
                    "SELECT COUNT(*) FROM stage_results WHERE config_hash = ?", (config_hash,)
                ).fetchone()
        return int(row[0])

    def invalidate(self, config_hash: str) -> int:
        """Drop every stage of one config; returns the number of removed rows."""
        try:
            with self._transaction() as conn:
                cursor = conn.execute("DELETE FROM stage_results WHERE config_hash = ?", (config_hash,))
                removed = cursor.rowcount
        except sqlite.Error as e:
            logger.error(f"Error invalidating cache for {config_hash[:12]}: {e}")
            return 0
        logger.info(f"Invalidated {removed} cached stages of config {config_hash[:12]}")
        return int(removed)


class _LazyCache:
    """Lazy proxy for the application-wide ``ResultCache`` singleton.

    The real cache (which creates directories and opens SQLite) is constructed on first use, not
    at import. Reads and writes are forwarded to the underlying instance; tests inject an isolated
    cache with ``Cache._instance = ResultCache(tmp_path)``.
    """

    def __init__(self) -> None:
        object.__setattr__(self, "_instance", None)
        object.__setattr__(self, "_lock", threading.Lock())

    def _resolve(self) -> ResultCache:
        instance: Optional[ResultCache] = object.__getattribute__(self, "_instance")
        if instance is None:
            lock = object.__getattribute__(self, "_lock")
            with lock:
                instance = object.__getattribute__(self, "_instance")
                if instance is None:
                    instance = ResultCache()
                    object.__setattr__(self, "_instance", instance)
        return instance

    def __getattr__(self, name: str) -> Any:
        return getattr(self._resolve(), name)

    def __setattr__(self, name: str, value: Any) -> None:
        if name in ("_instance", "_lock"):
            object.__setattr__(self, name, value)
        else:
            setattr(self._resolve(), name, value)

    def __delattr__(self, name: str) -> None:
        if name in ("_instance", "_lock"):
            object.__delattr__(self, name)
        else:
            delattr(self._resolve(), name)


if TYPE_CHECKING:
    Cache: ResultCache
else:
    Cache = _LazyCache()

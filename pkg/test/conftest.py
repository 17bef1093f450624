"""
Pytest configuration file.

This file contains fixtures and configuration for pytest.
"""

import os
import shutil
import tempfile
from pathlib import Path
from typing import Generator

import pytest

# Create a unique temp directory per session so parallel runs don't share state.
_XDG_DATA_HOME = tempfile.mkdtemp(prefix="fermihub-test-")
os.environ["XDG_DATA_HOME"] = _XDG_DATA_HOME


@pytest.fixture(scope="session", autouse=True)
def _cleanup_test_data_dir() -> Generator[None, None, None]:
    """Remove the per-session test data directory after the test run."""
    yield
    shutil.rmtree(_XDG_DATA_HOME, ignore_errors=True)


@pytest.fixture(autouse=True)
def _isolate_global_cache(tmp_path: Path) -> Generator[None, None, None]:
    """Point the application-wide `Cache` singleton at a fresh temp cache for every test.

    The `Cache` proxy constructs the real ResultCache (at the user data dir) on first use; on
    Windows the XDG override above does not apply, so without this fixture a pipeline test would
    read and write the real stage cache.
    """
    import fermihub.fermihublib.cache as cache

    test_cache = cache.ResultCache(str(tmp_path / "stages.db"))
    previous = cache.Cache._instance
    cache.Cache._instance = test_cache
    try:
        yield
    finally:
        test_cache.close()
        cache.Cache._instance = previous

import importlib.util
import subprocess
from pathlib import Path
from types import ModuleType
from unittest.mock import patch

import pytest
from click.testing import CliRunner

SCRIPT = Path(__file__).parent.parent.parent / "scripts" / "pre-commit.py"


@pytest.fixture(scope="module")
def pre_commit() -> ModuleType:
    spec = importlib.util.spec_from_file_location("pre_commit", SCRIPT)
    assert spec is not None and spec.loader is not None
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def _completed(returncode: int) -> subprocess.CompletedProcess:
    return subprocess.CompletedProcess(args=[], returncode=returncode, stdout="out", stderr="")


class TestPreCommit:
    def test_quick_and_claims_flags(self, pre_commit) -> None:
        with patch.object(pre_commit.subprocess, "run", return_value=_completed(0)) as run:
            result = CliRunner().invoke(pre_commit.main, ["--quick", "--claims"])

        assert result.exit_code == 0, result.output
        commands = [call.args[0] for call in run.call_args_list]
        assert ["uv", "run", "pytest", "-m", "not slow"] in commands
        assert commands[-1][-len(pre_commit.QUICK_CLAIMS) - 1 :] == ["reproduce", *pre_commit.QUICK_CLAIMS]
        assert "All pre-commit checks passed!" in result.output

    def test_default_runs_full_suite_without_claims(self, pre_commit) -> None:
        with patch.object(pre_commit.subprocess, "run", return_value=_completed(0)) as run:
            result = CliRunner().invoke(pre_commit.main, [])

        assert result.exit_code == 0, result.output
        commands = [call.args[0] for call in run.call_args_list]
        assert ["uv", "run", "pytest"] in commands
        assert len(commands) == 4

    def test_stops_at_first_failure(self, pre_commit) -> None:
        with patch.object(pre_commit.subprocess, "run", side_effect=[_completed(0), _completed(1)]) as run:
            result = CliRunner().invoke(pre_commit.main, [])

        assert result.exit_code == 1
        assert run.call_count == 2
        assert "[FAIL] Format check (ruff)" in result.output

    def test_unknown_option_is_rejected(self, pre_commit) -> None:
        result = CliRunner().invoke(pre_commit.main, ["--fast"])
        assert result.exit_code == 2

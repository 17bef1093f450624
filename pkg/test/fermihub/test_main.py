import importlib.metadata
import json
import unittest
from pathlib import Path
from unittest.mock import patch

import pytest
from click.testing import CliRunner

from fermihub.fermihublib import pipeline
from fermihub.fermihublib.cache import ResultCache
from fermihub.fermihublib.config import (
    ExperimentConfig,
    MitigationConfig,
    StateConfig,
    config_hash,
    dump_config,
    load_config,
)
from fermihub.fermihublib.shots import ShotTable
from fermihub.main import cli, get_version

CELL = ["--size", "2x2", "--hole", "1,1"]


def invoke(*args: str):
    return CliRunner().invoke(cli, ["-l", "ERROR", *args], obj={})


class TestMain(unittest.TestCase):
    """Test cases for the main module."""

    @patch("importlib.metadata.version")
    @patch("toml.load")
    def test_get_version_from_metadata(self, mock_toml_load, mock_metadata_version):
        """Test that get_version returns the version from package metadata when available."""
        mock_metadata_version.return_value = "1.0.0"

        result = get_version()

        self.assertEqual(result, "1.0.0")
        mock_metadata_version.assert_called_once_with("fermihub")
        mock_toml_load.assert_not_called()

    @patch("importlib.metadata.version")
    @patch("toml.load")
    def test_get_version_from_toml(self, mock_toml_load, mock_metadata_version):
        """Test that get_version falls back to pyproject.toml when metadata is not available."""
        mock_metadata_version.side_effect = importlib.metadata.PackageNotFoundError("Package not found")
        mock_toml_load.return_value = {"project": {"version": "1.0.0"}}

        result = get_version()

        self.assertEqual(result, "1.0.0")
        mock_metadata_version.assert_called_once_with("fermihub")
        mock_toml_load.assert_called_once()


class TestCircuit:
    def test_stats_json(self) -> None:
        result = invoke("circuit", *CELL, "--u", "4", "-t", "0.4", "--layers", "2", "--stats")

        assert result.exit_code == 0, result.output
        stats = json.loads(result.stdout)
        assert stats["size"] == "2x2"
        assert stats["n_layers"] == 2
        assert stats["qubit_count"] == 8
        assert stats["two_qubit_count"] > 0

    def test_emit_native_circuit(self, tmp_path: Path) -> None:
        out = tmp_path / "circuit.json"
        result = invoke("circuit", *CELL, "-t", "0.2", "--prep", "--native", "--emit", str(out))

        assert result.exit_code == 0, result.output
        data = json.loads(out.read_text(encoding="utf-8"))
        assert data["n_qubits"] == 8
        assert data["layers"]

    def test_bad_size_is_a_clean_error(self) -> None:
        """Invalid lattice sizes exit with status 1 instead of a traceback."""
        result = invoke("circuit", "--size", "2by2", "-t", "0.2", "--stats")
        assert result.exit_code == 1
        assert "Traceback" not in result.output

    def test_bad_hole_format(self) -> None:
        result = invoke("circuit", "--size", "2x2", "--hole", "1;1", "-t", "0.2")
        assert result.exit_code == 2
        assert "IX,IY" in result.output


class TestSimulate:
    def test_exact_series(self, tmp_path: Path) -> None:
        out = tmp_path / "exact.csv"
        result = invoke("simulate", *CELL, "--u", "4", "-t", "0", "-t", "0.2", "-o", str(out))

        assert result.exit_code == 0, result.output
        header = out.read_text(encoding="utf-8").splitlines()[0]
        assert header.startswith("# fermihub: ")
        frame = pipeline.read_csv(out)
        assert list(frame.columns) == ["t", "U", "flux", "observable", "value"]
        assert sorted(frame["t"].unique()) == [0.0, 0.2]
        start = frame[(frame["t"] == 0.0) & (frame["observable"] == "M_s")]
        assert start["value"].iloc[0] == pytest.approx(0.75)

    def test_free_fermion_engine_needs_zero_u(self, tmp_path: Path) -> None:
        result = invoke("simulate", *CELL, "--u", "4", "--engine", "flo", "-t", "0.2", "-o", str(tmp_path / "x.csv"))
        assert result.exit_code == 1
        assert not (tmp_path / "x.csv").exists()

    def test_truncation_only_checked_for_majorana(self, tmp_path: Path) -> None:
        exact = invoke("simulate", *CELL, "--max-weight", "3", "-t", "0.2", "-o", str(tmp_path / "exact.csv"))
        assert exact.exit_code == 0, exact.output
        assert (tmp_path / "exact.csv").exists()

        odd = invoke(
            "simulate", *CELL, "--engine", "majorana", "--max-weight", "3", "-t", "0.2", "-o", str(tmp_path / "mp.csv")
        )
        assert odd.exit_code == 1
        assert not (tmp_path / "mp.csv").exists()


@pytest.fixture(scope="module")
def sampled(tmp_path_factory) -> dict[float, Path]:
    """U = 0 shot files of a 2x2 lattice at three times."""
    root = tmp_path_factory.mktemp("shots")
    paths = {}
    for t in (0.2, 0.4, 0.6):
        path = root / f"shots_t{t}.jsonl"
        result = invoke(
            "sample", *CELL, "-t", str(t), "--twirls", "2", "--shots", "60", "--seed", "1", "-o", str(path)
        )
        assert result.exit_code == 0, result.output
        paths[t] = path
    return paths


class TestSample:
    def test_shot_file(self, sampled) -> None:
        shots = ShotTable.load_jsonl(sampled[0.4])
        assert shots.n_shots == 120
        assert shots.n_qubits == 8
        assert (shots.t, shots.U, shots.flux) == (0.4, 0.0, "zero")
        assert shots.masks is not None
        assert set(shots.twirl_ids.tolist()) == {0, 1}

    def test_seed_reproducible(self, sampled, tmp_path: Path) -> None:
        again = tmp_path / "again.jsonl"
        result = invoke(
            "sample", *CELL, "-t", "0.4", "--twirls", "2", "--shots", "60", "--seed", "1", "-o", str(again)
        )
        assert result.exit_code == 0, result.output
        assert again.read_text(encoding="utf-8") == sampled[0.4].read_text(encoding="utf-8")


class TestAnalyze:
    def test_suites(self, sampled, tmp_path: Path) -> None:
        out = tmp_path / "obs.csv"
        result = invoke(
            "analyze", *CELL, "--shots", str(sampled[0.2]), "--suite", "global", "--suite", "ipr", "-o", str(out)
        )

        assert result.exit_code == 0, result.output
        frame = pipeline.read_csv(out)
        assert set(frame["suite"]) <= {"global", "ipr"}
        assert "M_s" in set(frame["observable"])
        assert set(frame["method"]) == {"raw"}

    def test_distribution_and_baseline_suites(self, sampled, tmp_path: Path) -> None:
        out = tmp_path / "ms.csv"
        result = invoke(
            "analyze", *CELL, "--shots", str(sampled[0.4]), "--suite", "ms", "--suite", "ipr_baseline", "-o", str(out)
        )

        assert result.exit_code == 0, result.output
        frame = pipeline.read_csv(out)
        assert "ipr_baseline" in set(frame["suite"])
        assert set(frame["suite"]) <= {"ms", "ipr_baseline"}
        assert "IPR_full/charge" in set(frame["observable"])

    def test_unknown_suite(self, sampled, tmp_path: Path) -> None:
        result = invoke("analyze", *CELL, "--shots", str(sampled[0.2]), "--suite", "entropy", "-o", str(tmp_path / "o"))
        assert result.exit_code == 2


class TestMitigate:
    def test_raw(self, sampled, tmp_path: Path) -> None:
        out = tmp_path / "raw.csv"
        result = invoke("mitigate", *CELL, "--shots", str(sampled[0.2]), "--method", "raw", "-o", str(out))

        assert result.exit_code == 0, result.output
        frame = pipeline.read_csv(out)
        assert set(frame["method"]) == {"raw"}
        assert (frame["error"] >= 0).all()

    def test_tflo_needs_reference(self, sampled, tmp_path: Path) -> None:
        result = invoke("mitigate", *CELL, "--shots", str(sampled[0.2]), "--method", "tflo", "-o", str(tmp_path / "m"))
        assert result.exit_code == 2
        assert "--train-exact" in result.output

    def test_tflo_from_free_fermion_reference(self, sampled, tmp_path: Path) -> None:
        reference = tmp_path / "flo.csv"
        times = [arg for t in sampled for arg in ("-t", str(t))]
        result = invoke("simulate", *CELL, "--engine", "flo-trotter", *times, "-o", str(reference))
        assert result.exit_code == 0, result.output

        out = tmp_path / "tflo.csv"
        model_out = tmp_path / "model.json"
        shots = [arg for path in sampled.values() for arg in ("--shots", str(path))]
        result = invoke(
            "mitigate", *CELL, *shots, "--train-exact", str(reference), "--method", "tflo", "--ansatz", "linear",
            "--model-out", str(model_out), "-o", str(out),
        )

        assert result.exit_code == 0, result.output
        frame = pipeline.read_csv(out)
        assert {"raw", "tflo", "tflo+sym"} <= set(frame["method"])
        assert frame["clamped"].dtype == bool
        assert sorted(frame["t"].unique()) == [0.2, 0.4, 0.6]
        assert json.loads(model_out.read_text(encoding="utf-8"))["recipe"] == "tflo"

        plain = tmp_path / "plain.csv"
        result = invoke(
            "mitigate", *CELL, *shots, "--train-exact", str(reference), "--method", "tflo", "--ansatz", "linear",
            "--no-symmetry", "-o", str(plain),
        )
        assert result.exit_code == 0, result.output
        assert "tflo+sym" not in set(pipeline.read_csv(plain)["method"])


class TestXEB:
    def test_reports_both_conventions(self, sampled) -> None:
        result = invoke("xeb", *CELL, "--shots", str(sampled[0.6]))

        assert result.exit_code == 0, result.output
        data = json.loads(result.stdout)
        assert data["model"] == "flo"
        assert [r["convention"] for r in data["reports"]] == ["drop", "keep_zero"]
        assert all(r["n_samples"] <= 120 for r in data["reports"])


class TestReproduce:
    def test_list(self) -> None:
        result = invoke("reproduce", "--list")
        assert result.exit_code == 0, result.output
        assert result.stdout.split() == list(pipeline.CLAIMS)

    def test_single_claim_verdict(self, tmp_path: Path) -> None:
        out = tmp_path / "verdict.json"
        result = invoke("reproduce", "pair-distance-5x5", "-o", str(out))

        assert result.exit_code == 0, result.output
        verdict = json.loads(out.read_text(encoding="utf-8"))
        assert verdict["passed"] is True
        assert [c["claim_id"] for c in verdict["claims"]] == ["pair-distance-5x5"]

    def test_unknown_claim(self) -> None:
        result = invoke("reproduce", "free-lunch")
        assert result.exit_code == 2
        assert "--list" in result.output


def small_config(output_dir: Path) -> ExperimentConfig:
    return ExperimentConfig(
        size="2x2",
        U=(4.0,),
        times=(0.0, 0.2, 0.4),
        state=StateConfig(kind="neel_with_holes", holes=((1, 1),)),
        n_twirls=2,
        shots_per_twirl=30,
        mitigation=MitigationConfig(recipe="tflo", ansatz="linear"),
        observables=("global",),
        output_dir=str(output_dir),
    )


class TestRun:
    def test_run_then_rerun_from_cache(self, tmp_path: Path) -> None:
        config_path = tmp_path / "experiment.toml"
        dump_config(small_config(tmp_path / "ignored"), config_path)
        out = tmp_path / "out"

        first = invoke("run", str(config_path), "--out", str(out))
        assert first.exit_code == 0, first.output
        summary = json.loads(first.stdout)
        assert summary["output_dir"] == str(out)
        stages = [s["stage"] for s in summary["stages"]]
        assert stages == ["circuits", "sample", "exact", "mitigate", "observables", "xeb"]
        assert summary["recomputed"] > 0
        assert (out / "manifest.json").exists()

        second = invoke("run", str(config_path), "--out", str(out))
        assert second.exit_code == 0, second.output
        assert json.loads(second.stdout)["recomputed"] == 0
        assert json.loads(second.stdout)["config_hash"] == summary["config_hash"]

    def test_overrides_reach_the_pipeline(self, tmp_path: Path, mocker) -> None:
        config_path = tmp_path / "experiment.toml"
        dump_config(small_config(tmp_path / "out"), config_path)
        result_stub = pipeline.PipelineResult(output_dir=tmp_path / "elsewhere", config_hash="0" * 64)
        run_pipeline = mocker.patch("fermihub.fermihublib.pipeline.run_pipeline", return_value=result_stub)

        result = invoke(
            "run", str(config_path), "--seed", "7", "--threads", "3", "--out", str(tmp_path / "elsewhere"), "--no-cache"
        )

        assert result.exit_code == 0, result.output
        config = run_pipeline.call_args.args[0]
        assert (config.seed, config.threads, config.output_dir) == (7, 3, str(tmp_path / "elsewhere"))
        assert run_pipeline.call_args.kwargs["use_cache"] is False
        assert json.loads(result.stdout)["stages"] == []

    def test_missing_config(self, tmp_path: Path) -> None:
        result = invoke("run", str(tmp_path / "missing.toml"))
        assert result.exit_code == 2


class TestInitConfig:
    def test_writes_loadable_config(self, tmp_path: Path) -> None:
        path = tmp_path / "experiment.toml"
        result = invoke("init-config", str(path), "--size", "3x3")

        assert result.exit_code == 0, result.output
        assert load_config(path) == ExperimentConfig(size="3x3")

    def test_refuses_to_overwrite(self, tmp_path: Path) -> None:
        path = tmp_path / "experiment.toml"
        path.write_text("# mine\n", encoding="utf-8")

        result = invoke("init-config", str(path))
        assert result.exit_code == 1
        assert path.read_text(encoding="utf-8") == "# mine\n"

        result = invoke("init-config", str(path), "--force")
        assert result.exit_code == 0, result.output
        assert load_config(path) == ExperimentConfig()


class TestCacheCommands:
    """`cache --file-path` must act on the requested file, never on the default cache."""

    def test_clean_removes_requested_file(self, tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
        default_path = tmp_path / "default.db"
        monkeypatch.setattr("fermihub.fermihublib.cache.default_cache_path", lambda: default_path)
        custom = tmp_path / "custom.db"
        ResultCache(str(custom)).close()
        assert custom.exists()

        result = invoke("cache", "--file-path", str(custom), "clean")

        assert result.exit_code == 0, result.output
        assert not custom.exists()
        assert not default_path.exists()

    def test_clean_missing_file_is_a_no_op(self, tmp_path: Path) -> None:
        result = invoke("cache", "--file-path", str(tmp_path / "nothing.db"), "clean")
        assert result.exit_code == 0, result.output

    def test_invalidate_one_config(self, tmp_path: Path) -> None:
        config = small_config(tmp_path / "out")
        config_path = tmp_path / "experiment.toml"
        dump_config(config, config_path)
        cache_path = tmp_path / "stages.db"
        store = ResultCache(str(cache_path))
        store.store(config_hash(config), "exact", (), {"ok": True})
        store.store(config_hash(config), "sample", (0.2, 4.0, "zero"), {"ok": True})
        store.store("other", "exact", (), {"ok": True})
        store.close()

        result = invoke("cache", "--file-path", str(cache_path), "invalidate", str(config_path))

        assert result.exit_code == 0, result.output
        assert result.stdout.strip() == "2 cached stages removed"
        store.open()
        assert store.count() == 1
        store.close()

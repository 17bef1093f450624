"""Tests for experiment configuration."""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import pytest

from fermihub.fermihublib.config import (
    DEFAULT_TIMES,
    ExperimentConfig,
    MitigationConfig,
    StateConfig,
    config_hash,
    dump_config,
    load_config,
)
from fermihub.fermihublib.defs import ConfigError, StateKind
from fermihub.fermihublib.statevec import NoiseSpec


@pytest.fixture
def config() -> ExperimentConfig:
    return ExperimentConfig(
        size="2x2",
        U=(0.0, 4.0),
        flux=("zero", "pi"),
        times=(0.0, 0.2, 0.4),
        state=StateConfig(kind="neel_with_holes", holes=((1, 1),)),
        n_twirls=2,
        shots_per_twirl=50,
        mitigation=MitigationConfig(recipe="tflo+mesr", ansatz="linear"),
        observables=("global", "ipr"),
        seed=3,
    )


class TestDefaults:
    def test_default_config_is_valid(self) -> None:
        config = ExperimentConfig()
        assert config.times == DEFAULT_TIMES
        assert DEFAULT_TIMES[-1] == 1.2
        assert len(DEFAULT_TIMES) == 13
        assert (config.lattice.Lx, config.lattice.Ly) == (3, 2)

    def test_model_and_initial_state(self, config) -> None:
        model = config.model(4.0, "pi")
        assert model.U == 4.0
        state = config.initial_state(model)
        assert state.kind is StateKind.NEEL_WITH_HOLES
        assert state.hole_sites == (3,)


class TestValidation:
    @pytest.mark.parametrize(
        "changes",
        [
            {"size": "2by2"},
            {"times": ()},
            {"times": (0.4, 0.2)},
            {"times": (-0.1, 0.2)},
            {"U": ()},
            {"flux": ("half",)},
            {"observables": ("global", "entropy")},
            {"n_twirls": 1},
            {"shots_per_twirl": 0},
            {"threads": 0},
            {"seed": -1},
        ],
    )
    def test_invalid_values(self, config, changes: dict) -> None:
        with pytest.raises(ConfigError):
            replace(config, **changes)

    def test_single_twirl_without_error_bars(self, config) -> None:
        assert replace(config, n_twirls=1, error_bars=False).n_twirls == 1

    @pytest.mark.parametrize(
        "kwargs",
        [{"recipe": "magic"}, {"ansatz": "cubic"}, {"max_hamming_err": -1}, {"bootstrap_resamples": 5}],
    )
    def test_invalid_mitigation(self, kwargs: dict) -> None:
        with pytest.raises(ConfigError):
            MitigationConfig(**kwargs)

    def test_invalid_state_kind(self) -> None:
        with pytest.raises(ConfigError):
            StateConfig(kind="ferromagnet")


class TestSerialisation:
    def test_dict_round_trip(self, config) -> None:
        assert ExperimentConfig.from_dict(config.to_dict()) == config

    def test_singlet_pairs_round_trip(self) -> None:
        state = StateConfig(kind="singlet_covering_with_holes", singlet_pairs=(((0, 0), (0, 1)), ((1, 0), (1, 1))))
        assert StateConfig.from_dict(state.to_dict()) == state

    def test_toml_round_trip(self, config, tmp_path: Path) -> None:
        path = tmp_path / "experiment.toml"
        dump_config(config, path)
        assert load_config(path) == config

    def test_unknown_keys_are_ignored(self, config) -> None:
        data = config.to_dict()
        data["colour"] = "blue"
        data["mitigation"]["flavour"] = "sweet"
        assert ExperimentConfig.from_dict(data) == config

    @pytest.mark.parametrize("key,value", [("U", ["strong"]), ("noise", {"p2": 2.0}), ("n_twirls", "many")])
    def test_bad_values_raise_config_error(self, config, key: str, value) -> None:
        data = config.to_dict()
        data[key] = value
        with pytest.raises(ConfigError, match=key):
            ExperimentConfig.from_dict(data)

    def test_unreadable_files(self, tmp_path: Path) -> None:
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.toml")
        broken = tmp_path / "broken.toml"
        broken.write_text("size = [unterminated", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_config(broken)


class TestHashAndSeeds:
    def test_hash_is_stable(self, config) -> None:
        assert config_hash(config) == config_hash(ExperimentConfig.from_dict(config.to_dict()))
        assert len(config_hash(config)) == 64

    def test_hash_ignores_execution_settings(self, config) -> None:
        moved = config.with_overrides(threads=4, output_dir="/tmp/elsewhere")
        assert moved.threads == 4
        assert config_hash(moved) == config_hash(config)

    def test_hash_tracks_results(self, config) -> None:
        assert config_hash(config.with_overrides(seed=4)) != config_hash(config)
        assert config_hash(replace(config, noise=NoiseSpec(p2=0.01))) != config_hash(config)

    def test_overrides_without_changes(self, config) -> None:
        assert config.with_overrides() is config

    def test_stream_seeds(self, config) -> None:
        seed = config.stream_seed("twirl", 0.2, 4.0, "zero")
        assert seed == config.stream_seed("twirl", 0.2, 4.0, "zero")
        assert seed != config.stream_seed("noise", 0.2, 4.0, "zero")
        assert seed != config.stream_seed("twirl", 0.4, 4.0, "zero")
        assert seed != config.with_overrides(seed=4).stream_seed("twirl", 0.2, 4.0, "zero")

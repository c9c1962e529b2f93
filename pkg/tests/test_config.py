import math

import pytest

from tanksworld import ConfigError, EnvConfig, Team, load_config
from tanksworld.config import ControlSpec, config_from_lines
from tanksworld.scoring import RewardWeights


class TestControlSpec:
    def test_parse_external(self):
        assert ControlSpec.parse("external") == ControlSpec(kind="external")

    def test_parse_scripted_with_skill(self):
        spec = ControlSpec.parse("scripted:aggressive:0.7")
        assert (spec.kind, spec.name, spec.skill) == ("scripted", "aggressive", 0.7)

    def test_parse_clone_path(self):
        spec = ControlSpec.parse("clone:models/demo.twknn")
        assert spec.kind == "clone"
        assert spec.model == "models/demo.twknn"

    def test_round_trip(self):
        for text in ("external", "scripted:random", "scripted:patrol:0.25",
                     "clone:x.twknn"):
            assert ControlSpec.parse(text).to_string() == text

    def test_bad_specs_rejected(self):
        for text in ("scripted:unknown", "scripted", "pilot:bob",
                     "scripted:random:2.0", "scripted:random:nope"):
            with pytest.raises(ConfigError):
                ControlSpec.parse(text)


class TestValidation:
    def test_default_is_valid(self):
        EnvConfig().validate()

    @pytest.mark.parametrize("kwargs", [
        {"team_size": 0},
        {"neutral_count": -1},
        {"obstacle_density": 1.5},
        {"comm_range": -2.0},
        {"dt": 0.0},
        {"max_steps": 0},
        {"obstacle_radius_min": 5.0, "obstacle_radius_max": 4.0},
        {"tank_health": 0},
        {"reward_weights": RewardWeights(w_enemy=math.nan)},
    ])
    def test_bad_values_rejected(self, kwargs):
        with pytest.raises(ConfigError):
            EnvConfig(**kwargs).validate()

    def test_control_map_must_cover_both_teams(self):
        config = EnvConfig(team_size=1, control_map={0: ControlSpec("external")})
        with pytest.raises(ConfigError):
            config.validate()

    def test_control_map_rejects_neutral_ids(self):
        config = EnvConfig(
            team_size=1, neutral_count=1,
            control_map={
                0: ControlSpec("external"), 1: ControlSpec("external"),
                2: ControlSpec("external"),
            },
        )
        with pytest.raises(ConfigError):
            config.validate()


class TestDerived:
    def test_obstacle_count_rounds_half_up(self):
        assert EnvConfig(obstacle_density=0.5).obstacle_count == 10
        assert EnvConfig(obstacle_density=0.125).obstacle_count == 3
        assert EnvConfig(obstacle_density=0.0).obstacle_count == 0
        assert EnvConfig(obstacle_density=1.0).obstacle_count == 20

    def test_team_of_layout(self):
        config = EnvConfig(team_size=2, neutral_count=1)
        assert [config.team_of(i) for i in range(5)] == [
            Team.RED, Team.RED, Team.BLUE, Team.BLUE, Team.NEUTRAL,
        ]

    def test_default_control_map(self):
        mapping = EnvConfig(team_size=2).resolved_control_map()
        assert mapping[0].kind == "external"
        assert mapping[2] == ControlSpec(kind="scripted", name="aggressive")

    def test_projectile_range(self):
        assert EnvConfig().projectile_range == pytest.approx(50.0)


class TestFileFormat:
    def test_round_trip(self, tmp_path):
        config = EnvConfig(
            team_size=3, neutral_count=1, comm_range=42.5,
            reward_weights=RewardWeights(w_enemy=2.0),
            control_map=None,
        ).with_team_control(Team.BLUE, ControlSpec("scripted", "patrol", 0.5))
        path = tmp_path / "scenario.cfg"
        config.save(path)
        loaded = load_config(path)
        assert loaded == config

    def test_comments_and_blank_lines_ignored(self):
        config = config_from_lines([
            "# scenario", "", "team_size = 2  # small", "neutral_count = 0",
        ])
        assert config.team_size == 2

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            config_from_lines(["teamsize = 5"])

    def test_unknown_weight_key_rejected(self):
        with pytest.raises(ConfigError):
            config_from_lines(["reward_weights.w_bogus = 1"])

    def test_bad_value_reports_line(self):
        with pytest.raises(ConfigError) as err:
            config_from_lines(["team_size = banana"])
        assert "line 1" in str(err.value)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.cfg")

    def test_booleans(self):
        config = config_from_lines(["two_hop_only = true"])
        assert config.two_hop_only is True
        with pytest.raises(ConfigError):
            config_from_lines(["two_hop_only = maybe"])

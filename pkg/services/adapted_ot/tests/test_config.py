import pytest
from pydantic import ValidationError

from services.adapted_ot.app.core.config import (
    OutputFormat,
    RunConfig,
    Settings,
    DEFAULT_TOLERANCES,
    Tolerances,
    active_tolerances,
    find_env_file,
    get_settings,
    tolerance_scope,
)
from services.adapted_ot.app.core.errors import MalformedInputError


class TestSettings:
    def test_defaults(self):
        settings = get_settings()
        assert settings.P == 1.0
        assert settings.THREADS == 1
        assert settings.LOG_LEVEL == "WARNING"
        assert settings.OUTPUT_FORMAT == OutputFormat.HUMAN

    def test_environment_overrides(self, monkeypatch):
        monkeypatch.setenv("ADAPTED_OT_P", "2")
        monkeypatch.setenv("ADAPTED_OT_THREADS", "4")
        monkeypatch.setenv("ADAPTED_OT_OUTPUT_FORMAT", "csv")
        get_settings.cache_clear()
        settings = get_settings()
        assert settings.P == 2.0
        assert settings.THREADS == 4
        assert settings.OUTPUT_FORMAT == OutputFormat.CSV

    def test_log_level_is_normalized(self, monkeypatch):
        monkeypatch.setenv("ADAPTED_OT_LOG_LEVEL", "debug")
        assert Settings().LOG_LEVEL == "DEBUG"

    @pytest.mark.parametrize(
        "name, value",
        [("LOG_LEVEL", "chatty"), ("P", "0.5"), ("THREADS", "0"), ("MASS_TOL", "0")],
    )
    def test_rejects_invalid_values(self, monkeypatch, name, value):
        monkeypatch.setenv(f"ADAPTED_OT_{name}", value)
        with pytest.raises(ValidationError):
            Settings()

    def test_reads_an_env_file(self, tmp_path):
        env = tmp_path / ".env"
        env.write_text("ADAPTED_OT_SEED=7\nADAPTED_OT_GRAPH_TOL=1e-6\n")
        settings = Settings(_env_file=str(env))
        assert settings.SEED == 7
        assert settings.GRAPH_TOL == 1e-6

    def test_env_file_variable_wins(self, tmp_path, monkeypatch):
        env = tmp_path / "custom.env"
        env.write_text("")
        monkeypatch.setenv("ENV_FILE", str(env))
        assert find_env_file() == str(env)

    def test_env_file_is_located_when_settings_load(self, tmp_path, monkeypatch):
        env = tmp_path / "late.env"
        env.write_text("ADAPTED_OT_SEED=11\nADAPTED_OT_MASS_TOL=1e-7\n")
        monkeypatch.setenv("ENV_FILE", str(env))
        get_settings.cache_clear()
        settings = get_settings()
        assert settings.SEED == 11
        assert settings.MASS_TOL == 1e-7

    def test_missing_env_file_is_skipped(self, tmp_path, monkeypatch):
        monkeypatch.setenv("ENV_FILE", str(tmp_path / "absent.env"))
        assert find_env_file() == str(tmp_path / "absent.env")
        get_settings.cache_clear()
        assert get_settings().SEED == 0


class TestRunConfig:
    def test_takes_settings_defaults(self, monkeypatch):
        monkeypatch.setenv("ADAPTED_OT_MASS_TOL", "1e-6")
        monkeypatch.setenv("ADAPTED_OT_SEED", "5")
        config = RunConfig.from_settings(Settings())
        assert config.seed == 5
        assert config.tolerances == Tolerances(mass=1e-6)

    def test_flags_win(self):
        config = RunConfig.from_settings(
            Settings(), p=3.0, output_format="json", seed=9
        )
        assert config.p == 3.0
        assert config.output_format == OutputFormat.JSON
        assert config.seed == 9

    def test_rejects_small_exponent(self):
        with pytest.raises(MalformedInputError):
            RunConfig.from_settings(Settings(), p=0.5)


class TestToleranceScope:
    def test_defaults_outside_a_scope(self):
        assert active_tolerances() == DEFAULT_TOLERANCES

    def test_scope_sets_and_restores(self):
        loose = Tolerances(mass=1e-6)
        with tolerance_scope(loose) as active:
            assert active is loose
            assert active_tolerances().mass == 1e-6
            with tolerance_scope(Tolerances(graph=1e-3)):
                assert active_tolerances().graph == 1e-3
                assert active_tolerances().mass == 1e-9
            assert active_tolerances() is loose
        assert active_tolerances() == DEFAULT_TOLERANCES

    def test_scope_restores_on_error(self):
        with pytest.raises(RuntimeError):
            with tolerance_scope(Tolerances(mass=1e-3)):
                raise RuntimeError("boom")
        assert active_tolerances() == DEFAULT_TOLERANCES

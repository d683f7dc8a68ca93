import json
from pathlib import Path

import pytest

from cvbell.config_validation import ConfigError, load_config_file, validate_bundled_configs, validate_run_config


def _write(path: Path, payload: object) -> Path:
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


def test_valid_config_loads(tmp_path: Path) -> None:
    path = _write(tmp_path / "run.json", {"state": {"variant": "tmss", "r": 0.5}, "run": {"seed": 3}})
    assert load_config_file(path)["run"]["seed"] == 3


def test_invalid_json_reports_line_and_column(tmp_path: Path) -> None:
    path = tmp_path / "broken.json"
    path.write_text('{\n  "state": {"variant": "tmss",}\n}', encoding="utf-8")
    with pytest.raises(ConfigError, match=r"line 2, column \d+"):
        load_config_file(path)


def test_missing_file_is_config_error(tmp_path: Path) -> None:
    with pytest.raises(ConfigError, match="Cannot read config"):
        load_config_file(tmp_path / "absent.json")


def test_top_level_must_be_object(tmp_path: Path) -> None:
    path = _write(tmp_path / "list.json", [1, 2])
    with pytest.raises(ConfigError, match="top level must be an object"):
        load_config_file(path)


def test_unknown_keys_are_reported_with_path() -> None:
    with pytest.raises(ConfigError) as excinfo:
        validate_run_config({"state": {"variant": "tmss", "squeeze": 0.5}})
    message = str(excinfo.value)
    assert "state:" in message
    assert "squeeze" in message


def test_schema_rejects_out_of_range_values() -> None:
    with pytest.raises(ConfigError, match="experiment -> p_d"):
        validate_run_config({"state": {"variant": "tmss"}, "experiment": {"p_d": 1.5}})
    with pytest.raises(ConfigError, match="state -> variant"):
        validate_run_config({"state": {"variant": "cat"}})


def test_angle_literals_pass_the_schema() -> None:
    validate_run_config({"state": {"variant": "single_photon", "theta": "3pi/8", "phi": "-pi/2"}})
    with pytest.raises(ConfigError, match="theta"):
        validate_run_config({"state": {"variant": "single_photon", "theta": "quarter turn"}})


def test_error_context_names_the_file(tmp_path: Path) -> None:
    path = _write(tmp_path / "bad.json", {"state": {"variant": "tmss"}, "extra": 1})
    with pytest.raises(ConfigError, match="bad.json: <root>"):
        load_config_file(path)


def test_bundled_configs_are_valid() -> None:
    assert validate_bundled_configs() == []

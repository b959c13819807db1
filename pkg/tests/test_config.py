import json

import pytest

from mkvfit.config import ExperimentConfig, parse_config, validate_config
from mkvfit.errors import ConfigError

MINIMAL = {"model": "linear", "N": 50, "T": 50, "delta_n": 0.1, "theta": [0.5, 1, 1]}


def write(tmp_path, obj):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(obj))
    return path


def test_minimal_defaults(tmp_path):
    cfg = parse_config(write(tmp_path, MINIMAL))
    assert isinstance(cfg, ExperimentConfig)
    assert cfg.euler_step == 0.01 and cfg.starts == 8 and cfg.schema_version == 1


def test_grid_mismatch_names_both_fields(tmp_path):
    with pytest.raises(ConfigError) as info:
        parse_config(write(tmp_path, {**MINIMAL, "delta_n": 0.105, "T": 52.5}))
    assert len(info.value.violations) == 1
    msg = info.value.violations[0]
    assert "delta_n" in msg and "euler_step" in msg


def test_non_positive_diffusion_box(tmp_path):
    with pytest.raises(ConfigError) as info:
        parse_config(write(tmp_path, {**MINIMAL, "box": [[-5, 5], [-5, 5], [-1, 5]]}))
    assert any("box" in v and "theta2" in v for v in info.value.violations)


def test_every_violation_reported(tmp_path):
    bad = {**MINIMAL, "delta_n": 0.105, "theta": [0.5, 1, -1], "colour": "red", "starts": 0}
    with pytest.raises(ConfigError) as info:
        parse_config(write(tmp_path, bad))
    text = " | ".join(info.value.violations)
    for needle in ("colour", "starts", "delta_n and euler_step", "theta2"):
        assert needle in text


def test_schema_version(tmp_path):
    assert parse_config(write(tmp_path, {**MINIMAL, "schema_version": 1})).schema_version == 1
    with pytest.raises(ConfigError):
        parse_config(write(tmp_path, {**MINIMAL, "schema_version": 2}))


def test_theta_outside_box(tmp_path):
    with pytest.raises(ConfigError) as info:
        parse_config(write(tmp_path, {**MINIMAL, "box": [[0, 1], [0, 1], [0.1, 2]], "theta": [0.5, 3, 1]}))
    assert any("outside the box" in v for v in info.value.violations)


def test_unknown_model_and_theta_length():
    with pytest.raises(ConfigError):
        validate_config({**MINIMAL, "model": "nope"})
    with pytest.raises(ConfigError):
        validate_config({**MINIMAL, "theta": [0.5, 1]})


def test_grid_cells(tmp_path):
    cfg = parse_config(write(tmp_path, {**MINIMAL, "grids": [{"delta_n": 0.05, "T": 50, "N": 100}]}))
    assert cfg.grids[0].N == 100
    with pytest.raises(ConfigError) as info:
        parse_config(write(tmp_path, {**MINIMAL, "grids": [{"delta_n": 0.015, "T": 50, "N": 100}]}))
    assert "grids[0].delta_n" in info.value.violations[0]


def test_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "missing.json")
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        parse_config(path)
    path.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        parse_config(path)

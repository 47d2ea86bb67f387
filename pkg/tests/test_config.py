"""Config parsing, validation, and round-trip serialization."""

import dataclasses

import pytest

from mlsibm.config import (
    CASE_IDS,
    CaseConfig,
    config_from_dict,
    parse_config,
    serialize_config,
    write_config,
)
from mlsibm.errors import ConfigError
from mlsibm.harness import reference_config

MINIMAL = """
[case]
case = "taylor-green"

[grid]
dims = [32, 32]
h = 0.19634954084936207
origin = [0.0, 0.0]
periodic = [true, true]

[run]
t_end = 0.5
"""


def test_parse_minimal_string():
    cfg = parse_config(MINIMAL, from_string=True)
    assert cfg.case == "taylor-green"
    assert cfg.dims == (32, 32)
    assert cfg.periodic == (True, True)
    assert cfg.nu == 0.01                  # default fills in
    cfg.validate()


def test_round_trip_identity_all_reference_cases(tmp_path):
    for case in CASE_IDS:
        cfg = reference_config(case)
        path = tmp_path / f"{case}.toml"
        write_config(cfg, path)
        assert parse_config(path) == cfg
        # and the string path agrees with the file path
        assert parse_config(serialize_config(cfg), from_string=True) == cfg


def test_shipped_configs_match_reference():
    for case in CASE_IDS:
        assert parse_config(f"configs/{case.replace('-analysis', '')}.toml" if
                            case == "straight-line-analysis" else
                            f"configs/{case}.toml") == reference_config(case)


def test_unknown_table_rejected():
    with pytest.raises(ConfigError, match="unknown config table"):
        parse_config(MINIMAL + "\n[turbulence]\nmodel = 1\n", from_string=True)


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config(MINIMAL + "\nwarp = 2\n", from_string=True)


def test_key_in_wrong_table_rejected():
    bad = MINIMAL.replace('case = "taylor-green"',
                          'case = "taylor-green"\nnu = 0.5')
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config(bad, from_string=True)


def test_bad_toml_and_missing_file():
    with pytest.raises(ConfigError, match="bad TOML"):
        parse_config("[case\ncase=", from_string=True)
    with pytest.raises(ConfigError, match="not found"):
        parse_config("/no/such/file.toml")


def test_missing_case_table():
    with pytest.raises(ConfigError, match="missing"):
        config_from_dict({"grid": {"dims": [8, 8]}})


def test_scalar_where_array_expected():
    bad = MINIMAL.replace("dims = [32, 32]", "dims = 32")
    with pytest.raises(ConfigError, match="must be an array"):
        parse_config(bad, from_string=True)


def test_validate_catches_bad_values():
    base = reference_config("taylor-green")
    for change in (dict(case="lid-cavity"), dict(body_kind="torus"),
                   dict(alpha=0.0), dict(alpha=2.5), dict(basis="quadratic"),
                   dict(dims=(3, 32)), dict(steps=None, t_end=None),
                   dict(markers_per_cell=0),
                   dict(body_kind="stl", stl_path=None),
                   dict(body_kind="stl", stl_path="/no/such.stl")):
        with pytest.raises(ConfigError):
            dataclasses.replace(base, **change).validate()


def test_int_coerced_to_float_keys():
    cfg = parse_config(MINIMAL.replace("t_end = 0.5", "t_end = 2"),
                       from_string=True)
    assert isinstance(cfg.t_end, float) and cfg.t_end == 2.0


def test_serialize_rejects_exotic_values():
    cfg = dataclasses.replace(reference_config("taylor-green"),
                              output_dir=object())
    with pytest.raises(ConfigError, match="cannot serialize"):
        serialize_config(cfg)

"""Strict configuration parsing."""
from __future__ import annotations

import textwrap

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shearflow.config import dump_config, load_config_text, parse_config
from shearflow.errors import ConfigTypeError, MissingBlock, UnknownKey

MINIMAL = textwrap.dedent("""\
    geometry:
      L: 6.0
    basis:
      K: 1
      M: 2
    physics:
      nu: 1.0
      s: 1.0
      lambda: 0.2
    potential:
      name: pressure_drop
    integration:
      dt: 1.0e-3
      t_end: 1.0
    """)


def test_defaults_are_filled_in():
    cfg = load_config_text(MINIMAL)
    assert cfg["integration"]["scheme"] == "etd1"
    assert cfg["potential"]["n_mollify"] == 32
    assert cfg["attractor"]["count"] == 8
    assert cfg.potential_spec() == {"name": "pressure_drop"}


def test_round_trip(canonical_config):
    again = load_config_text(dump_config(canonical_config))
    assert again == canonical_config
    assert dump_config(again) == dump_config(canonical_config)


def test_misspelled_key_is_named_with_its_line():
    text = MINIMAL.replace("  nu: 1.0", "  viscosty: 1.0")
    with pytest.raises(UnknownKey) as exc:
        load_config_text(text)
    assert exc.value.key == "physics.viscosty"
    assert exc.value.line == 7


def test_nonpositive_dt_is_a_type_error():
    with pytest.raises(TypeError) as exc:
        load_config_text(MINIMAL.replace("dt: 1.0e-3", "dt: 0"))
    assert isinstance(exc.value, ConfigTypeError)
    assert exc.value.path == "integration.dt"
    with pytest.raises(ConfigTypeError):
        load_config_text(MINIMAL.replace("dt: 1.0e-3", "dt: -1.0e-3"))
    with pytest.raises(ConfigTypeError):
        load_config_text(MINIMAL.replace("dt: 1.0e-3", "dt: fast"))


def test_physics_keys_have_no_defaults():
    with pytest.raises(ConfigTypeError) as exc:
        load_config_text(MINIMAL.replace("  s: 1.0\n", ""))
    assert exc.value.path == "physics.s"


def test_missing_block():
    text = MINIMAL.split("potential:")[0] + "integration:\n  dt: 1.0e-3\n  t_end: 1.0\n"
    with pytest.raises(MissingBlock):
        load_config_text(text)


def test_potential_parameters_are_checked():
    with pytest.raises(UnknownKey) as exc:
        load_config_text(MINIMAL.replace("name: pressure_drop", "name: pressure_drop\n  params: {treshold: 1.0}"))
    assert exc.value.key == "potential.params.treshold"
    with pytest.raises(ConfigTypeError):
        load_config_text(MINIMAL.replace("name: pressure_drop", "name: coulomb"))


def test_initial_condition_forms():
    for v0, expect in [("zero", "zero"), ("[1.0, 2.0]", [1.0, 2.0]),
                       ("{eigenmode: {k: 3}}", {"eigenmode": {"k": 3, "amp": 1.0}}),
                       ("{random_H_ball: {r: 2, seed: 4}}", {"random_H_ball": {"r": 2.0, "seed": 4}})]:
        cfg = load_config_text(MINIMAL + f"  v0: {v0}\n")
        assert cfg["integration"]["v0"] == expect
    with pytest.raises(ConfigTypeError):
        load_config_text(MINIMAL + "  v0: {random_H_ball: {r: 2, factor: 3}}\n")
    with pytest.raises(UnknownKey):
        load_config_text(MINIMAL + "  v0: {random_H_ball: {radius: 2}}\n")


def test_unknown_top_level_block():
    with pytest.raises(UnknownKey):
        load_config_text(MINIMAL + "extras:\n  a: 1\n")


def test_invalid_yaml_reports_line():
    with pytest.raises(ConfigTypeError) as exc:
        load_config_text("geometry:\n  L: [1,\n")
    assert exc.value.line is not None


def test_seed_override_and_overrides(canonical_config):
    assert canonical_config.with_seed(7)["integration"]["seed"] == 7
    assert canonical_config["integration"]["seed"] == 2024
    cfg = canonical_config.with_overrides(integration={"t_end": 2.0})
    assert cfg["integration"]["t_end"] == 2.0
    with pytest.raises(ConfigTypeError):
        canonical_config.with_overrides(integration={"dt": -1.0})


def test_shipped_configs_parse(tmp_path):
    from conftest import CONFIGS

    for p in sorted(CONFIGS.glob("*.yaml")):
        cfg = parse_config(p)
        assert cfg.source == str(p)


@settings(max_examples=50, deadline=None)
@given(K=st.integers(0, 6), M=st.integers(1, 8), nu=st.floats(1e-3, 1e3), s=st.floats(-5, 5),
       dt=st.floats(1e-6, 1e-1), scheme=st.sampled_from(["etd1", "etd2", "imex_euler"]),
       seed=st.integers(0, 2**63))
def test_round_trip_property(K, M, nu, s, dt, scheme, seed):
    cfg = load_config_text(MINIMAL).with_overrides(basis={"K": K, "M": M}, physics={"nu": nu, "s": s},
                                                   integration={"dt": dt, "scheme": scheme, "seed": seed})
    assert load_config_text(dump_config(cfg)) == cfg

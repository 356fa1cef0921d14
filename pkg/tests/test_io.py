import dataclasses
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from semidyn import io
from semidyn.classical import PhasePoint, integrate_hamilton
from semidyn.exactqm import Grid, gaussian, well_eigenstate
from semidyn.potentials import PotentialModel
from semidyn.scenarios import ConfigError, parse_config
from semidyn.semiclassical import branch_decompose

FREE = PotentialModel.free()


def test_minimal_config_defaults():
    cfg = parse_config('scenario = "free_gaussian"\n')
    d = cfg.data
    assert d["grid"]["n"] == 1024
    assert d["engines"] == ["exact", "semiclassical", "bohm", "soliton"]
    # dt resolved from the stability rule: at least 1000 steps
    assert 0 < d["time"]["dt"] <= d["time"]["duration"] / 1000
    assert d["time"]["stride"] >= 1


def test_eigenstate_duration_is_one_period():
    cfg = parse_config('scenario = "well_eigenstate"\n')
    assert cfg.data["time"]["duration"] == pytest.approx(2 / (5 * np.pi))


def test_negative_mass_names_field_and_line():
    text = 'scenario = "free_gaussian"\n\n[model]\nmass = -1.0\n'
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert "model.mass" in str(exc.value)
    assert "line 4" in str(exc.value)


@pytest.mark.parametrize("text,needle", [
    ('scenario = "free_gaussian"\ncolour = 3\n', "colour"),
    ('scenario = "free_gaussian"\n[grid]\nsize = 3\n', "grid.size"),
    ('[grid]\nn = 256\n', "scenario"),
    ('scenario = "free_gaussian"\n[grid]\nn = 1000\n', "grid.n"),
    ('scenario = "bouncing"\n', "bouncing"),
    ('scenario = "free_gaussian"\nengines = ["exact", "magic"]\n', "engines"),
    ('scenario = "free_gaussian"\n[ensemble]\nn = 10\n', "ensemble.n"),
    ('scenario = "free_gaussian\n', "syntax"),
])
def test_config_errors(text, needle):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert needle in str(exc.value)


def test_sweep_expansion_count():
    text = 'scenario = "well_packet"\n[sweep]\n"model.hbar" = [0.02, 0.01, 0.005]\n'
    runs = parse_config(text).expand()
    assert len(runs) == 3
    assert [r.data["model"]["hbar"] for r in runs] == [0.02, 0.01, 0.005]
    assert len({str(r.out) for r in runs}) == 3


def test_sweep_product():
    cfg = parse_config('scenario = "free_gaussian"\n',
                       {"sweep": {"ensemble.seed": [1, 2], "state.sigma": [1.0, 2.0, 3.0]}})
    assert len(cfg.expand()) == 6


def test_unknown_sweep_key():
    with pytest.raises(ConfigError):
        parse_config('scenario = "free_gaussian"\n', {"sweep": {"model.spin": [1, 2]}})


def test_hash_ignores_output_directory():
    a = parse_config('scenario = "free_gaussian"\nout = "a"\n')
    b = parse_config('scenario = "free_gaussian"\nout = "b"\n')
    assert a.hash() == b.hash()


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(["model.hbar", "state.sigma", "state.momentum", "ensemble.seed",
                        "ensemble.bins", "time.duration"]),
       st.integers(2, 9))
def test_hash_changes_with_semantic_fields(key, k):
    base = parse_config('scenario = "free_gaussian"\n')
    section, name = key.split(".")
    old = base.data[section][name]
    new = old + k if isinstance(old, int) else old * (1 + 0.1 * k)
    if key == "state.momentum":
        new = 0.1 * k
    changed = parse_config('scenario = "free_gaussian"\n', {key: new})
    assert changed.hash() != base.hash()
    assert parse_config('scenario = "free_gaussian"\n', {key: old}).hash() == base.hash()


def test_binary_frame_round_trip(tmp_path):
    g = Grid(-20, 20, 512)
    psi = dataclasses.replace(gaussian(g, FREE, 0.3, 1.7, 1.2), time=0.25)
    io.write_binary_frame(tmp_path / "f.bin", psi)
    back = io.read_binary_frame(tmp_path / "f.bin")
    assert back.values.tobytes() == psi.values.tobytes()
    assert (back.grid.n, back.grid.x_min, back.grid.x_max, back.time) == (512, -20, 20, 0.25)
    assert (tmp_path / "f.bin").stat().st_size == 32 + 16 * 512


def test_frame_csv_columns(tmp_path):
    g = Grid(0, 1, 128, "dirichlet")
    psi = well_eigenstate(g, PotentialModel.infinite_well(1.0), 2)
    io.write_frame_csv(tmp_path / "f.csv", psi)
    assert (tmp_path / "f.csv").read_text().splitlines()[0] == io.FRAME_HEADER
    data = io.read_csv(tmp_path / "f.csv")
    np.testing.assert_allclose(data["re"], psi.values.real, rtol=1e-15)
    np.testing.assert_allclose(data["j"], 0, atol=1e-12)


def test_trajectory_and_branch_csv(tmp_path):
    tr = integrate_hamilton(FREE, PhasePoint(0.0, 1.0), 1.0, 0.1)
    io.write_trajectory_csv(tmp_path / "t.csv", tr)
    data = io.read_csv(tmp_path / "t.csv")
    assert data.dtype.names == tuple(io.TRAJECTORY_HEADER.split(","))
    np.testing.assert_allclose(data["x"], tr.x)
    g = Grid(-20, 20, 256)
    state = branch_decompose(gaussian(g, FREE, 0, 1, 1), FREE, 0.5)
    io.write_branch_csv(tmp_path / "b.csv", state)
    assert (tmp_path / "b.csv").read_text().startswith(io.BRANCH_HEADER + "\n")


def test_json_cleaning():
    text = io.dumps({"a": np.float64(1.5), "b": np.int64(3), "c": np.array([1.0, np.inf]),
                     "d": 1 + 2j, "e": float("nan")})
    back = json.loads(text)
    assert back == {"a": 1.5, "b": 3, "c": [1.0, "inf"], "d": [1.0, 2.0], "e": "nan"}


def test_config_hash_is_canonical():
    assert io.config_hash({"a": 1, "b": [1, 2]}) == io.config_hash({"b": [1, 2], "a": 1})
    assert io.config_hash({"a": 1}) != io.config_hash({"a": 2})

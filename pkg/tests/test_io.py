import io
import json

import numpy as np
import pytest

from hmvar import config as cfg
from hmvar.csvio import (DataError, atomic_write, design_to_panel_data, dump_panel_csv,
                         format_table, parse_panel_csv, read_panel_csv, to_json)
from hmvar.simulation import SimulationConfig, simulate_panel


def parse(text, **kw):
    return parse_panel_csv(io.StringIO(text), **kw)


def test_parse_basic_and_shift_of_periods():
    data = parse("g,t,y,x1\nB,1990,1.5,2\nA,1991,0.5,1\nA,1990,1,1\nA,1990,2,3\n")
    assert data.g_labels == ["A", "B"]
    assert data.panel.T == 2 and data.panel.G == 2
    assert data.panel.cell_counts[0, 0] == 2
    assert data.x_names == ["x1"]
    assert data.X.shape == (4, 1)


def test_numeric_labels_sorted_numerically():
    data = parse("g,t,y,x\n10,1,0,0\n9,1,0,0\n")
    assert data.g_labels == ["9", "10"]


@pytest.mark.parametrize("text, where", [
    ("g,t,y,x\n1,1,0,0\n1,2,abc,0\n", "line 3"),
    ("g,t,y,x\n1,1.5,0,0\n", "line 2"),
    ("g,t,y,x\n1,1,0\n", "line 2"),
    ("g,t,y,x\n1,1,nan,0\n", "line 2"),
    ("g,t,y,x\n,1,0,0\n", "line 2"),
    ("t,y,x\n1,0,0\n", "line 1"),
    ("g,t,y,y\n1,1,0,0\n", "line 1"),
])
def test_malformed_rows_name_their_line(text, where):
    with pytest.raises(DataError, match=where):
        parse(text)


def test_empty_inputs():
    with pytest.raises(DataError):
        parse("")
    with pytest.raises(DataError):
        parse("g,t,y,x\n")


def test_outcome_optional_for_diagnostics():
    data = parse("g,t\n1,1\n2,3\n", require_outcome=False)
    assert data.y is None and data.panel.T == 3
    with pytest.raises(DataError):
        data.design()
    with pytest.raises(DataError):
        parse("g,t\n1,1\n")


def test_roundtrip(tmp_path):
    d = simulate_panel(SimulationConfig(G=4, T=5, master_seed=9), 0)
    text = dump_panel_csv(design_to_panel_data(d))
    path = tmp_path / "p.csv"
    path.write_text(text)
    back = read_panel_csv(path)
    assert np.array_equal(back.y, d.y) and np.array_equal(back.X, d.X)
    assert np.array_equal(back.panel.g, d.panel.g) and np.array_equal(back.panel.t, d.panel.t)
    assert dump_panel_csv(back) == text


def test_atomic_write_replaces_and_leaves_no_temp(tmp_path):
    target = tmp_path / "sub" / "out.json"
    atomic_write(target, "one")
    atomic_write(target, "two")
    assert target.read_text() == "two"
    assert [p.name for p in target.parent.iterdir()] == ["out.json"]


def test_json_handles_numpy():
    doc = json.loads(to_json({"a": np.float64(1.5), "b": np.arange(2)}))
    assert doc == {"a": 1.5, "b": [0, 1]}


def test_format_table_alignment():
    out = format_table(["", "v"], [["a", "1.0"], ["bb", "10.0"]]).splitlines()
    assert out[0] == "       v" and out[2] == "a    1.0" and set(out[1]) == {"-"}


def test_bundled_campaign_layout():
    doc = cfg.load("table2")
    configs = cfg.simulation_configs(doc)
    assert len(configs) == 9
    assert [(c.G, c.T) for c in configs[:3]] == [(50, 100), (75, 75), (100, 50)]
    assert sorted({c.rho for c in configs}) == [0.25, 0.5, 0.75]
    assert all(c.replications == 1000 and c.kernel == "auto" for c in configs)


def test_config_overrides():
    doc = {"rows": [{"G": 5, "T": 6, "rho": 0.1}], "seed": 3,
           "kernel": {"kind": "uniform", "bandwidth": 2}}
    (c,) = cfg.simulation_configs(doc, replications=7, seed=11)
    assert c.replications == 7 and c.master_seed == 11 and c.kernel.bandwidth == 2
    assert cfg.simulation_configs(doc)[0].master_seed == 3


@pytest.mark.parametrize("doc", [
    {"rows": []},
    {"rows": [{"G": 5, "T": 6}]},
    {"rows": [{"G": 5, "T": 6, "rho": 0.1, "colour": 1}]},
    {"rows": [{"G": 5, "T": 6, "rho": 0.1}], "methods": ["NW"]},
    {"rows": [{"G": 5, "T": 6, "rho": 1.2}]},
    {"rows": [{"G": 5, "T": 6, "rho": 0.1}], "threads": 4},
])
def test_schema_rejects(doc):
    with pytest.raises(cfg.ConfigError):
        cfg.validate(doc)


def test_load_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(cfg.ConfigError):
        cfg.load(str(bad))
    with pytest.raises(cfg.ConfigError):
        cfg.load(str(tmp_path / "missing.json"))

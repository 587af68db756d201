import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kslab import cli_io
from kslab.cli import main
from kslab.cli_io import (
    EXIT_CONFIG,
    EXIT_INVARIANT,
    EXIT_NUMERICAL,
    Command,
    ConfigError,
    RunConfig,
    build_config,
    format_float,
    parse_nu_grid,
    read_config_file,
    sweep,
    to_csv,
    to_json,
)


def _invoke(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    out = capsys.readouterr()
    return exc.value.code, out.out, out.err


def _body(text):
    # drop the timestamp comment line
    return text.split("\n", 1)[1]


def _square(x):
    return x * x


def test_eigen_table_smoke(capsys):
    code, out, _ = _invoke(["eigen-table", "--nu", "1e-3", "--n-max", "1"], capsys)
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0].startswith("# kslab eigen-table")
    header = lines[1].split(",")
    for col in ("beta", "nu", "b", "n", "lambda_direct", "alpha_matched", "alpha_pred_o1", "alpha_pred_o2"):
        assert col in header
    rows = [dict(zip(header, line.split(","))) for line in lines[2:]]
    assert len(rows) == 2
    for row in rows:
        for col in ("lambda_direct", "alpha_matched", "alpha_pred_o1", "scaled_residual_o1", "scaled_residual_o2"):
            assert math.isfinite(float(row[col]))


def test_eigen_table_is_deterministic(tmp_path, capsys):
    outs = []
    for name in ("a.csv", "b.csv"):
        path = tmp_path / name
        code, _, _ = _invoke(["eigen-table", "--nu", "1e-3", "--n-max", "1", "--output", str(path)], capsys)
        assert code == 0
        outs.append(path.read_text())
    assert _body(outs[0]) == _body(outs[1])


def test_profiles_T0_is_psi0():
    cfg = RunConfig(Command.PROFILES, nu_list=(1e-3,), n_max=1, grid_points=401)
    res = cli_io.run(cfg)
    assert res.status == 0
    r = np.array([row["r"] for row in res.payload])
    t0 = np.array([row["T_0"] for row in res.payload])
    assert np.allclose(t0, r**2 / (1 + r**2) ** 2, rtol=1e-14, atol=0)
    assert "phi_1" in res.payload[0] and "T_1" in res.payload[0]


def test_match_json(capsys):
    code, out, _ = _invoke(["match", "--nu", "1e-4", "--n-max", "1"], capsys)
    assert code == 0
    data = json.loads(out)
    modes = data["results"][0]["modes"]
    assert [m["n"] for m in modes] == [0, 1]
    assert all(abs(m["mismatch_at_root"]) < 1e-6 for m in modes)


def test_validate_exits_zero(tmp_path, capsys):
    path = tmp_path / "v.json"
    code, _, _ = _invoke(["validate", "--output", str(path)], capsys)
    data = json.loads(path.read_text())
    assert code == 0
    assert data["passed"] and all(c["passed"] for c in data["checks"])


@pytest.mark.parametrize(
    "argv",
    [
        ["eigen-table", "--nu", "0.5"],
        ["eigen-table", "--nu", "abc"],
        ["coercivity", "--format", "csv"],
        ["eigen-table", "--nu", "1e-3", "--nu-grid", "1e-2:1e-3:2", "--n-max", "20"],
        ["eigen-table", "--beta", "-1"],
        ["no-such-command"],
    ],
)
def test_invalid_configuration_exits_one(argv, capsys):
    code, _, err = _invoke(argv, capsys)
    assert code == EXIT_CONFIG
    assert "invalid configuration" in err


def test_numerical_failure_writes_diagnostics(tmp_path, monkeypatch, capsys):
    def boom(cfg):
        raise FloatingPointError("synthetic overflow")

    monkeypatch.setattr(cli_io, "run", boom)
    out = tmp_path / "t.csv"
    code, _, err = _invoke(["eigen-table", "--output", str(out)], capsys)
    assert code == EXIT_NUMERICAL
    diag = tmp_path / "t.csv.diag"
    assert diag.exists() and "synthetic overflow" in diag.read_text()
    assert "numerical failure" in err


def test_invariant_violation_exits_three(monkeypatch, capsys):
    def failing(cfg):
        rep = cli_io.ValidationReport()
        rep.add("always_fails", 2.0, 1.0)
        return rep

    monkeypatch.setattr(cli_io, "validate", failing)
    code, out, _ = _invoke(["validate"], capsys)
    assert code == EXIT_INVARIANT
    assert json.loads(out)["passed"] is False


def test_config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\nbeta = 0.25\nn-max = 3  # trailing\n\nnu = 1e-3, 1e-2\n")
    values = read_config_file(path)
    assert values == {"beta": "0.25", "n_max": "3", "nu": "1e-3, 1e-2"}
    cfg = build_config("eigen-table", values, {"beta": 0.5})
    assert cfg.beta == 0.5 and cfg.n_max == 3
    assert cfg.nu_list == (1e-2, 1e-3)
    assert cfg.format == "csv"


def test_config_file_flag_override(tmp_path, capsys):
    path = tmp_path / "run.cfg"
    path.write_text("nu_grid = 1e-2:1e-3:2\nn_max = 0\n")
    code, out, _ = _invoke(["eigen-table", "--config", str(path), "--nu", "1e-3"], capsys)
    assert code == 0
    assert len(out.strip().splitlines()) == 3


@pytest.mark.parametrize("text", ["beta 0.5", "color = red"])
def test_config_file_errors(tmp_path, text):
    path = tmp_path / "bad.cfg"
    path.write_text(text + "\n")
    with pytest.raises(ConfigError):
        read_config_file(path)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        read_config_file(tmp_path / "absent.cfg")


def test_nu_and_grid_conflict():
    with pytest.raises(ConfigError):
        build_config("match", {"nu": "1e-3", "nu_grid": "1e-2:1e-4:3"}, {})


def test_bad_typed_value():
    with pytest.raises(ConfigError):
        build_config("match", {"n_max": "two"}, {})


@pytest.mark.parametrize(
    "kwargs",
    [
        {"nu_list": ()},
        {"n_max": 10},
        {"zeta0": 0.6},
        {"grid_points": 50},
        {"format": "xml"},
        {"K": 7},
        {"trials": 0},
        {"workers": 0},
    ],
)
def test_run_config_guards(kwargs):
    with pytest.raises(ConfigError):
        RunConfig(Command.MATCH, **kwargs)


def test_nu_list_sorted_descending():
    cfg = RunConfig(Command.MATCH, nu_list=(1e-4, 1e-2, 1e-3))
    assert cfg.nu_list == (1e-2, 1e-3, 1e-4)
    assert cfg.format == "json"


def test_parse_nu_grid():
    grid = parse_nu_grid("1e-2:1e-5:4")
    assert np.allclose(grid, [1e-2, 1e-3, 1e-4, 1e-5], rtol=1e-14)
    assert parse_nu_grid("1e-3:1e-5:1") == (1e-3,)
    for bad in ("1e-2:1e-5", "a:b:c", "-1:1e-3:3", "1e-2:1e-3:0"):
        with pytest.raises(ConfigError):
            parse_nu_grid(bad)


def test_format_float():
    assert format_float(0.1) == "0.10000000000000001"
    assert format_float(float("nan")) == "nan"
    assert format_float(float("-inf")) == "-inf"


@settings(max_examples=100, deadline=None)
@given(st.floats(allow_nan=False, allow_infinity=False))
def test_format_float_round_trips(x):
    assert float(format_float(x)) == x


def test_to_csv_layout():
    text = to_csv([{"a": 1, "b": 0.5}, {"a": 2, "c": True}], "hello")
    lines = text.splitlines()
    assert lines[0] == "# hello"
    assert lines[1] == "a,b,c"
    assert lines[2] == "1,0.5,nan"
    assert lines[3] == "2,nan,true"


def test_to_json_non_finite_becomes_null():
    data = json.loads(to_json({"x": float("nan"), "y": [1.0, float("inf")], "c": Command.MATCH, "e": {}}))
    assert data == {"x": None, "y": [1.0, None], "c": "match", "e": {}}
    with pytest.raises(TypeError):
        to_json(object())


def test_sweep_preserves_order():
    items = list(range(12, 0, -1))
    assert sweep(_square, items, workers=3) == [x * x for x in items]
    assert sweep(_square, items, workers=1) == [x * x for x in items]

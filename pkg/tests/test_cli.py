import csv
import subprocess
import sys

import pytest

from sptrade.allocator import DINKELBACH_EPS
from sptrade.cli import main
from sptrade.config import ConfigError, ExperimentConfig, load_config, parse_lines, render_defaults
from sptrade.experiment import AGGREGATE_COLUMNS, CONVERGENCE_COLUMNS, RAW_COLUMNS, fmt


def read(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def test_defaults_round_trip(tmp_path):
    p = tmp_path / "defaults.cfg"
    p.write_text(render_defaults())
    cfg = load_config(p)
    assert cfg == ExperimentConfig(grid=cfg.grid)
    sp = cfg.system_params()
    assert sp.p_max_sc == pytest.approx(1.0) and sp.r_sc_min == 1e6 and sp.mu_rate_floors[0] == 700e3


def test_bad_line_is_anchored(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("# comment\nseeds = 3\np_max_dbm = hot\n")
    with pytest.raises(ConfigError, match=r"bad\.cfg:3: .*p_max_dbm"):
        load_config(p)
    with pytest.raises(ConfigError, match=":2: unknown key"):
        parse_lines(["mode = solve", "colour = red"], "x.cfg")
    with pytest.raises(ConfigError, match=":2: duplicate"):
        parse_lines(["seed = 1", "seed = 2"], "x.cfg")


def test_value_errors_anchor_to_key_line(tmp_path):
    p = tmp_path / "neg.cfg"
    p.write_text("mode = sweep-pc\ngrid = -1, 2\n")
    with pytest.raises(ConfigError, match=r"neg\.cfg:2: circuit powers"):
        load_config(p)


def test_cli_bad_config_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text("seeds = zero\n")
    assert main(["--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "bad.cfg:1:" in capsys.readouterr().err
    assert main(["--set", "nonsense=1"]) == 2
    assert main(["--config", str(tmp_path / "missing.cfg")]) == 2


def test_fmt():
    assert fmt(0.1) == "0.1" and fmt(float("nan")) == "" and fmt(True) == "true" and fmt(3) == "3"


def test_sweep_shape_and_schema(tmp_path):
    out = tmp_path / "o"
    assert main(["--mode", "sweep-pmax", "--seeds", "2", "--out", str(out), "-q"]) == 0
    agg = read(out / "aggregate.csv")
    raw = read(out / "raw.csv")
    assert tuple(agg[0]) == AGGREGATE_COLUMNS and tuple(raw[0]) == RAW_COLUMNS
    assert len(agg) - 1 == 4 * 7
    assert len(raw) - 1 == 2 * 4 * 7
    assert (out / "raw.csv").read_bytes().count(b"\r\n") == len(raw)
    keys = [(int(r[0]), r[1], float(r[2])) for r in raw[1:]]
    assert keys == sorted(keys)


def test_infeasible_rows_do_not_fail_run(tmp_path):
    out = tmp_path / "o"
    code = main(["--mode", "sweep-pc", "--seeds", "2", "--grid", "1,2", "--schemes", "greedy,tput",
                 "--set", "r_sc_min_kbps=1e9", "--out", str(out), "-q"])
    assert code == 0
    raw = read(out / "raw.csv")
    assert all(r[RAW_COLUMNS.index("feasible")] == "false" for r in raw[1:])
    assert all(r[RAW_COLUMNS.index("ee_bits_per_joule")] == "" for r in raw[1:])
    agg = read(out / "aggregate.csv")
    assert all(r[AGGREGATE_COLUMNS.index("n_infeasible")] == "2" for r in agg[1:])


def test_convergence_mode(tmp_path, capsys):
    out = tmp_path / "c"
    assert main(["--mode", "convergence", "--out", str(out)]) == 0
    rows = read(out / "convergence.csv")
    assert tuple(rows[0]) == CONVERGENCE_COLUMNS
    by_floor = {}
    for r in rows[1:]:
        by_floor.setdefault(r[0], []).append((int(r[2]), float(r[3]), float(r[4])))
    assert len(by_floor) == 3
    p_bound = 2.0 + 1.0 / 0.38  # total power never exceeds P_c + P_max / xi
    for trace in by_floor.values():
        assert len(trace) <= 10
        qs = [q for _, q, _ in trace]
        assert qs == sorted(qs)
        assert trace[-1][2] <= DINKELBACH_EPS * qs[-1] * p_bound
    assert "Dinkelbach traces" in capsys.readouterr().out


def test_solve_mode_and_print_config(tmp_path, capsys):
    assert main(["--print-config"]) == 0
    assert "p_max_dbm = 30.0" in capsys.readouterr().out
    assert main(["--mode", "solve", "--seed", "7", "--out", str(tmp_path / "s")]) == 0
    raw = read(tmp_path / "s" / "raw.csv")
    assert len(raw) == 1 + 4 and {r[0] for r in raw[1:]} == {"7"}


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "sptrade", "--print-config"], capture_output=True, text=True)
    assert res.returncode == 0 and "mode = sweep-pmax" in res.stdout

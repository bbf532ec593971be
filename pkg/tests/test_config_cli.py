import csv
import math
import os
from pathlib import Path

import pytest

from freelunch.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_OK, main
from freelunch.config import ConfigError, RunConfig, echo, load_config, parse_config
from freelunch.model import ScenarioFlags
from freelunch.sweep import ANALYTIC_COLUMNS, columns

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def test_empty_config_gives_defaults():
    cfg = parse_config("")
    assert cfg == RunConfig()
    assert cfg.flags == ScenarioFlags.full()
    assert cfg.sweep.var == "tau" and cfg.sweep.points == 400


def test_comments_blank_lines_and_quarter_phase():
    cfg = parse_config("# header\n\ntheta = 1.5707963267948966  # pi / 2\nn = 4\n")
    assert cfg.state.theta == math.pi / 2 and cfg.state.n == 4


def test_scenario_then_explicit_flags():
    cfg = parse_config("scenario = classical\ninitial_condition = zero\n")
    assert cfg.flags == ScenarioFlags(True, False, "zero")


@pytest.mark.parametrize("text, fragment", [
    ("omega_x = -1\n", "omega_x"),
    ("bogus = 1\n", "unknown key 'bogus'"),
    ("n = 1\nn = 2\n", "repeated"),
    ("tau = 0\n", "tau"),
    ("N = 1\n", "N"),
    ("seed = -3\n", "seed"),
    ("steps_per_period = 32\n", "steps_per_period"),
    ("sweep_min = 1e-3\nsweep_max = 1e-5\n", "sweep_max"),
    ("phi = 0.2\n", "phi"),
    ("svg = maybe\n", "svg"),
    ("just text\n", "key = value"),
])
def test_bad_configs_name_the_problem(text, fragment):
    with pytest.raises(ConfigError, match=fragment) as err:
        parse_config(text)
    assert "line" in str(err.value)


def test_echo_round_trips():
    cfg = parse_config("scenario = quantum\nr = 0.3\nn = 7\ntheta = 0.1\nsweep_var = r\nsweep_points = 5\n"
                       "sweep_min = 0\nsweep_max = 1\nsweep_scale = linear\nseed = 18446744073709551615\n")
    assert parse_config(echo(cfg)) == cfg
    assert parse_config(echo(RunConfig())) == RunConfig()


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.cfg")), ids=lambda p: p.name)
def test_shipped_configs_parse(path):
    cfg = load_config(path)
    assert cfg.out.startswith("runs/")
    assert path.read_text().startswith("# ")


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_analytic_cli_writes_one_row(tmp_path, capsys):
    out = tmp_path / "a"
    assert main(["analytic", "--out", str(out)]) == EXIT_OK
    rows = _read(out / "results.csv")
    assert rows[0] == ["tau"] + list(ANALYTIC_COLUMNS)
    assert len(rows) == 2
    assert parse_config((out / "config.echo").read_text()).out == str(out)
    assert "P_freelunch" in capsys.readouterr().out


def test_single_point_sweep_writes_one_row(tmp_path):
    cfg = tmp_path / "one.cfg"
    cfg.write_text("mode = sweep\nsweep_points = 1\nsweep_min = 3e-5\nsweep_max = 3e-5\n")
    out = tmp_path / "s"
    assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    rows = _read(out / "results.csv")
    assert rows[0] == list(columns("tau"))
    assert len(rows) == 2 and float(rows[1][0]) == 3e-5
    assert not (out / "extrema.csv").exists()


def test_sweep_is_reproducible_from_echo_and_plots_regenerate(tmp_path):
    cfg = tmp_path / "n.cfg"
    cfg.write_text("scenario = classical\nsweep_var = n\nsweep_min = 1\nsweep_max = 9\n"
                   "sweep_points = 3\nsweep_scale = linear\n")
    first, second = tmp_path / "first", tmp_path / "second"
    assert main(["sweep", "--config", str(cfg), "--out", str(first), "--svg"]) == EXIT_OK
    replay = tmp_path / "replay.cfg"
    replay.write_text((first / "config.echo").read_text().replace(str(first), str(second)))
    assert main(["sweep", "--config", str(replay)]) == EXIT_OK
    assert (first / "results.csv").read_bytes() == (second / "results.csv").read_bytes()
    svgs = sorted(first.glob("*.svg"))
    assert svgs
    before = {p.name: p.read_bytes() for p in svgs}
    for p in svgs:
        p.unlink()
    assert main(["plot", "--out", str(first)]) == EXIT_OK
    assert {p.name: p.read_bytes() for p in sorted(first.glob("*.svg"))} == before


def test_montecarlo_cli(tmp_path):
    cfg = tmp_path / "mc.cfg"
    cfg.write_text("scenario = classical\nn = 10\ntau = 3e-5\nN = 2000\n")
    out = tmp_path / "mc"
    code = main(["montecarlo", "--config", str(cfg), "--out", str(out), "--seed", "5"])
    assert code == EXIT_OK
    assert _read(out / "results.csv")[0] == list(columns("tau", mc=True))
    counts = [float(r[2]) for r in _read(out / "histogram.csv")[1:]]
    assert sum(counts) == 2000


def test_config_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("omega_x = -1\n")
    assert main(["analytic", "--config", str(bad), "--out", str(tmp_path / "x")]) == EXIT_CONFIG
    assert "omega_x" in capsys.readouterr().err
    assert main(["analytic", "--config", str(tmp_path / "missing.cfg")]) == EXIT_CONFIG
    with pytest.raises(SystemExit) as exc:
        main(["analytic", "--seed", "-1"])
    assert exc.value.code == 2


def test_validate_list_and_unknown_check(capsys):
    assert main(["validate", "--list"]) == EXIT_OK
    listing = capsys.readouterr().out
    assert "gaussian_free_lunch_bound" in listing and "jarzynski_gaussian_identity" in listing
    assert main(["validate", "--check", "nope"]) == EXIT_CONFIG


def test_validate_subset_passes_and_fault_is_detected(capsys):
    names = ["--check", "propagator_quarter_period", "--check", "mc_equivalence_classical"]
    assert main(["validate", *names]) == EXIT_OK
    assert main(["validate", "--inject-fault", *names]) == EXIT_FAIL
    out = capsys.readouterr().out
    assert "FAIL mc_equivalence_classical" in out


def test_unwritable_output_exits_2(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["analytic", "--out", os.path.join(str(blocker), "sub")]) == EXIT_CONFIG

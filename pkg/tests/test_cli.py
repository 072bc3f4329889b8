import csv

import pytest

from subsearch.cli import build_parser, run_cli
from subsearch.config import (
    ConfigError,
    ScenarioConfig,
    load_config,
    override,
    parse_config,
    shipped_scenarios,
)

FAST = ["--set", "particles=200", "--set", "n_intervals=3", "--set", "filter_particles=100"]


def test_shipped_scenarios_parse():
    names = shipped_scenarios()
    assert {"paper_default", "late_arrival", "static_poisson", "table1", "sink_fig7"} <= set(names)
    for n in names:
        assert isinstance(load_config(n), ScenarioConfig)


def test_paper_default_values():
    c = load_config("paper_default")
    assert c.cell_size == pytest.approx(300)
    assert c.sonar_speed() == pytest.approx(0.5)
    assert c.grid().n_cells == 31 * 31
    assert c.center_cell() == 15 * 31 + 15
    assert c.schedule().t0 == 1200 and c.schedule().t_i == 1800


def test_parse_errors():
    with pytest.raises(ConfigError):
        parse_config("nonsense_key = 1")
    with pytest.raises(ConfigError):
        parse_config("particles = many")
    with pytest.raises(ConfigError):
        parse_config("just a line")
    with pytest.raises(ConfigError):
        parse_config("regime = hover")
    with pytest.raises(ConfigError):
        override(ScenarioConfig(), ["sonars"])
    assert parse_config("# c\nsonars = 4  # trailing\n").sonars == 4


def test_to_text_round_trips():
    c = load_config("table1").replace(teleport=True)
    assert parse_config(c.to_text()) == c


def test_every_subcommand_has_help(capsys):
    for sub in ("simulate", "prior", "plan", "sweep-sonars", "filter", "fit", "econ"):
        assert run_cli([sub, "--help"]) == 0
    assert "usage" in capsys.readouterr().out


def test_usage_errors_exit_2(tmp_path):
    assert run_cli(["plan", "--no-such-flag"]) == 2
    assert run_cli(["simulate", "--out", str(tmp_path), "--set", "bogus=1"]) == 2
    assert run_cli(["simulate", "--out", str(tmp_path), "--scenario", "nowhere"]) == 2
    assert run_cli([]) == 2


def test_io_error_exit_4(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert run_cli(["econ", "--out", str(blocker / "sub")]) == 4
    assert run_cli(["fit", "--out", str(tmp_path), "--input", str(tmp_path / "missing.csv")]) == 4


def test_strict_fit_failure_exit_3(tmp_path):
    data = tmp_path / "d.csv"
    # concave saturating data: the sigmoid optimum runs off to infinity
    data.write_text("x,y\n" + "".join(f"{x},{1 - 0.5 ** x}\n" for x in range(1, 12)))
    assert run_cli(["fit", "--out", str(tmp_path), "--input", str(data)]) == 0
    assert run_cli(["fit", "--out", str(tmp_path), "--input", str(data), "--strict"]) == 3


def test_simulate_and_prior(tmp_path, capsys):
    out = str(tmp_path)
    assert run_cli(["simulate", "--out", out, "--seed", "3", *FAST]) == 0
    echoed = capsys.readouterr().out
    assert "seed = 3" in echoed and "regime = drift" in echoed
    assert (tmp_path / "simulate_config.txt").read_text().count("\n") == len(ScenarioConfig.__dataclass_fields__)
    with open(tmp_path / "landings.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 200
    assert run_cli(["prior", "--out", out, "--landings", str(tmp_path / "landings.csv"),
                    *FAST]) == 0
    for name in ("prior_poisson.csv", "prior_particles.csv"):
        with open(tmp_path / name) as fh:
            probs = [float(r["prob"]) for r in csv.DictReader(fh)]
        assert len(probs) == 961 and abs(sum(probs) - 1) < 1e-9


def test_plan_filter_sweep_econ(tmp_path, capsys):
    out = str(tmp_path)
    args = ["--out", out, "--replications", "20", *FAST]
    assert run_cli(["plan", *args, "--sonars", "3"]) == 0
    assert (tmp_path / "curve.csv").read_text().startswith("t_s,cum_success_prob\n1200.000,0.0\n")
    assert run_cli(["sweep-sonars", *args, "--k-max", "2"]) == 0
    assert (tmp_path / "sonar_sweep.csv").read_text().startswith("sonars,success_prob\n1,")
    assert run_cli(["filter", "--out", out, *FAST]) == 0
    assert (tmp_path / "filter_estimates.csv").read_text().startswith("interval,cell,prob\n0,")
    assert run_cli(["econ", "--out", out]) == 0
    assert "rank" in (tmp_path / "cer_report.csv").read_text().splitlines()[0]


def test_plan_with_prior_file(tmp_path):
    out = str(tmp_path)
    assert run_cli(["prior", "--out", out, "--kind", "poisson", *FAST]) == 0
    args = ["--out", out, "--replications", "10", "--belief", "grid", "--target", "static", *FAST]
    assert run_cli(["plan", *args, "--prior", str(tmp_path / "prior_poisson.csv")]) == 0
    bad = tmp_path / "bad.csv"
    bad.write_text("cell,prob\n5000,1.0\n")
    assert run_cli(["plan", *args, "--prior", str(bad)]) == 2


def test_out_defaults_to_env(monkeypatch, tmp_path):
    monkeypatch.setenv("SUBSEARCH_OUT", str(tmp_path))
    args = build_parser().parse_args(["econ"])
    assert args.out == str(tmp_path)

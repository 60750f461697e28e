import math
from pathlib import Path

import pytest

from adaptsurv import cli
from adaptsurv import sim_engine as se
from adaptsurv.numerics import derive_rng
from adaptsurv.surv_core import write_dataset

SCEN = Path(__file__).resolve().parents[1] / "scenarios"


def read_pairs(path):
    lines = Path(path).read_text().splitlines()[1:]
    return dict(line.split(",", 1) for line in lines)


def test_scenario_derives_required_events():
    sc = cli.parse_scenario(SCEN / "design_example.ini")
    req = se.required_events(sc.design.alpha, sc.design.beta, sc.design.theta_r)
    assert sc.design.d12 == req.events == 248
    assert sc.n_patients == 320


def test_all_shipped_scenarios_parse():
    for path in SCEN.glob("*.ini"):
        cli.parse_scenario(path)


def test_emit_parse_fixed_point():
    for path in SCEN.glob("*.ini"):
        sc = cli.parse_scenario(path)
        text = cli.emit_scenario(sc)
        again = cli.scenario_from_text(text)
        assert again == sc
        assert cli.emit_scenario(again) == text


def bad_file(tmp_path, old, new):
    text = (SCEN / "design_example.ini").read_text().replace(old, new)
    path = tmp_path / "bad.ini"
    path.write_text(text)
    return path


def test_alpha_out_of_range(tmp_path):
    path = bad_file(tmp_path, "alpha = 0.025", "alpha = 1.5")
    with pytest.raises(cli.ValidationError, match="alpha"):
        cli.parse_scenario(path)


def test_unknown_key(tmp_path):
    path = bad_file(tmp_path, "beta = 0.2", "beta = 0.2\ngamma = 3")
    with pytest.raises(cli.ParseError, match="gamma") as err:
        cli.parse_scenario(path)
    assert "bad.ini:" in str(err.value)


def test_missing_section(tmp_path):
    path = tmp_path / "x.ini"
    path.write_text("[accrual]\nrate = 8\nmonths = 4\n")
    with pytest.raises(cli.ParseError, match="missing section"):
        cli.parse_scenario(path)


def test_exit_codes(tmp_path, capsys):
    path = bad_file(tmp_path, "alpha = 0.025", "alpha = 1.5")
    assert cli.main(["simulate", "--scenario", str(path), "--seed", "1", "--out", str(tmp_path)]) == 2
    assert "category=validation" in capsys.readouterr().err
    path = bad_file(tmp_path, "beta = 0.2", "beta = 0.2\ngamma = 3")
    assert cli.main(["simulate", "--scenario", str(path), "--seed", "1", "--out", str(tmp_path)]) == 2
    assert "category=parse" in capsys.readouterr().err
    missing = str(tmp_path / "nope.ini")
    assert cli.main(["simulate", "--scenario", missing, "--seed", "1", "--out", str(tmp_path)]) == 2


def test_insufficient_events_exit_code(tmp_path, capsys):
    sc = cli.parse_scenario(SCEN / "null_increase_events.ini")
    data = se.simulate_trial(sc, derive_rng(1, 0))
    csv = tmp_path / "d.csv"
    write_dataset(data, csv)
    code = cli.main(["analyze", "--data", str(csv), "--d12", "248", "--d12-star", "100000",
                     "--alpha", "0.025", "--out", str(tmp_path)])
    assert code == 4
    assert "category=insufficient_events" in capsys.readouterr().err


def test_bound_command(tmp_path, capsys):
    assert cli.main(["bound", "--w1", "0.8281", "--u1", "0.8947", "--alpha", "0.025", "--out", str(tmp_path)]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(0.040, abs=0.002)
    run, params, scen = cli.read_manifest(tmp_path / "manifest.txt")
    assert run["command"] == "bound" and float(params["w1"]) == 0.8281 and scen is None


def test_design_command(tmp_path):
    assert cli.main(["design", "--scenario", str(SCEN / "design_example.ini"), "--out", str(tmp_path)]) == 0
    vals = read_pairs(tmp_path / "design.csv")
    assert vals["required_events"] == "248"
    assert 246 <= float(vals["required_events_exact"]) <= 248


def test_analyze_snapshot_mode(tmp_path):
    args = ["analyze", "--s1", "7.6", "--d1", "151", "--d12", "248", "--s1-star", "16", "--d1-star", "199",
            "--s12-star", "25", "--d12-star", "350", "--alpha", "0.025", "--u1", str(151 / 295),
            "--out", str(tmp_path)]
    assert cli.main(args) == 0
    vals = read_pairs(tmp_path / "decisions.csv")
    assert float(vals["p1"]) == pytest.approx(0.108, abs=5e-4)
    assert float(vals["p2"]) == pytest.approx(0.071, abs=1e-3)
    assert float(vals["z"]) == pytest.approx(1.88, abs=0.01)
    assert vals["reject_combination"] == "no reject" and vals["reject_psi"] == "no reject"
    assert float(vals["z_star"]) == pytest.approx(2.69, abs=0.01)
    assert vals["reject_corrected"] == "reject"
    assert vals["ignored_events"] == "48"


def test_analyze_dataset_matches_snapshot_mode(tmp_path):
    sc = cli.parse_scenario(SCEN / "diverging_control.ini")
    data = se.simulate_trial(sc, derive_rng(3, 0))
    csv = tmp_path / "trial.csv"
    write_dataset(data, csv)
    assert cli.main(["analyze", "--data", str(csv), "--d12", "248", "--d12-star", "350", "--alpha", "0.025",
                     "--k-star", "2.4", "--out", str(tmp_path / "a")]) == 0
    rec = se.run_adaptive(sc, derive_rng(3, 0), k_star=2.4)
    vals = read_pairs(tmp_path / "a" / "decisions.csv")
    assert float(vals["p1"]) == pytest.approx(rec.p1, rel=1e-5)
    assert float(vals["p2"]) == pytest.approx(rec.p2, rel=1e-5)
    assert (vals["reject_psi"] == "reject") == rec.reject_psi


def test_simulate_is_reproducible(tmp_path):
    scen = str(SCEN / "null_increase_events.ini")
    for name in ("a", "b"):
        assert cli.main(["simulate", "--scenario", scen, "--seed", "42", "--reps", "30",
                         "--k-star", "2.3", "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a" / "summary.csv").read_bytes() == (tmp_path / "b" / "summary.csv").read_bytes()
    run, params, sc = cli.read_manifest(tmp_path / "a" / "manifest.txt")
    assert run["seed"] == "42" and sc == cli.parse_scenario(scen)


def test_simulate_threads_match_serial(tmp_path):
    scen = str(SCEN / "null_increase_events.ini")
    base = ["simulate", "--scenario", scen, "--seed", "5", "--reps", "300", "--k-star", "2.3"]
    assert cli.main(base + ["--out", str(tmp_path / "s")]) == 0
    assert cli.main(base + ["--threads", "2", "--out", str(tmp_path / "t")]) == 0
    assert (tmp_path / "s" / "summary.csv").read_bytes() == (tmp_path / "t" / "summary.csv").read_bytes()


def test_power_curves_command(tmp_path):
    args = ["power-curves", "--d1-t1", "170", "--d1-tmax", "190", "--d12", "248", "--theta-r", "0.36",
            "--alpha", "0.025", "--p2-grid", "0.1:0.5:0.4", "--out", str(tmp_path)]
    assert cli.main(args) == 0
    rows = (tmp_path / "power.csv").read_text().splitlines()
    assert rows[0] == "p2,A,B,C,D" and len(rows) == 3


def test_power_curves_needs_one_weight_source(tmp_path, capsys):
    args = ["power-curves", "--d1-t1", "170", "--d1-tmax", "190", "--theta-r", "0.36",
            "--alpha", "0.025", "--out", str(tmp_path)]
    assert cli.main(args) == 2

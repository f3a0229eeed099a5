import csv
import json

import pytest

from lendsim.cli import EXIT_IO, EXIT_OK, EXIT_VALIDATION, main


def run_cli(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def read_csv(path):
    with open(path, newline="") as f:
        return list(csv.reader(f))


@pytest.fixture
def basic(scenarios_dir):
    return scenarios_dir / "basic.json"


def test_simulate_twice_identical(capsys, tmp_path, basic):
    for name in ("a", "b"):
        assert run_cli(capsys, "simulate", "--scenario", basic, "--blocks", 400, "--out", tmp_path / name)[0] == EXIT_OK
    for f in ("ledger.jsonl", "snapshots.csv", "agents.csv", "manifest.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f


def test_simulate_overrides_recorded(capsys, tmp_path, basic):
    run_cli(capsys, "simulate", "--scenario", basic, "--blocks", 300, "--seed", 99, "--out", tmp_path / "r")
    m = json.loads((tmp_path / "r" / "manifest.json").read_text())
    assert m["overrides"] == {"horizon_blocks": 300, "seed": 99}
    assert m["seed"] == 99


def test_simulate_missing_scenario(capsys, tmp_path):
    code, _, err = run_cli(capsys, "simulate", "--scenario", tmp_path / "nope.json", "--out", tmp_path / "o")
    assert code == EXIT_VALIDATION
    payload = json.loads(err)
    assert payload["fields"][0]["field"] == "scenario"


def test_simulate_invalid_scenario_lists_fields(capsys, tmp_path, basic):
    data = json.loads(basic.read_text())
    data["horizon_blocks"] = -5
    data["pools"][0]["collateral_factor"] = 1.7
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(data))
    code, _, err = run_cli(capsys, "simulate", "--scenario", p, "--out", tmp_path / "o")
    assert code == EXIT_VALIDATION
    fields = {f["field"] for f in json.loads(err)["fields"]}
    assert "horizon_blocks" in fields and any("collateral_factor" in f for f in fields)


def test_simulate_refuses_non_empty_dir(capsys, tmp_path, basic):
    out = tmp_path / "r"
    out.mkdir()
    (out / "keep.txt").write_text("x")
    code, _, err = run_cli(capsys, "simulate", "--scenario", basic, "--blocks", 100, "--out", out)
    assert code == EXIT_IO and "--force" in json.loads(err)["error"]
    assert run_cli(capsys, "simulate", "--scenario", basic, "--blocks", 100, "--out", out, "--force")[0] == EXIT_OK


def test_simulate_default_out_uses_env(capsys, tmp_path, basic, monkeypatch):
    monkeypatch.setenv("LENDSIM_OUT", str(tmp_path / "runs"))
    code, out, _ = run_cli(capsys, "simulate", "--scenario", basic, "--blocks", 50)
    assert code == EXIT_OK
    assert json.loads(out)["out"].startswith(str(tmp_path / "runs"))


def test_analyze_all_basic_reports(capsys, tmp_path, basic):
    run_cli(capsys, "simulate", "--scenario", basic, "--blocks", 600, "--out", tmp_path / "r")
    reps = ["tables", "loans", "redeposits", "concentration", "network", "liqmatrix"]
    args = [x for r in reps for x in ("--report", r)]
    assert run_cli(capsys, "analyze", tmp_path / "r", *args)[0] == EXIT_OK
    rd = tmp_path / "r" / "reports"
    for f in ("tables_net_deposits.csv", "loans.csv", "redeposits.csv", "concentration.csv",
              "network.csv", "liquidation_matrix.csv", "bundle.json"):
        assert (rd / f).exists(), f
    assert json.loads((rd / "bundle.json").read_text())


def test_analyze_empty_ledger_well_formed(capsys, tmp_path, basic):
    run_cli(capsys, "simulate", "--scenario", basic, "--blocks", 1, "--out", tmp_path / "r")
    (tmp_path / "r" / "ledger.jsonl").write_text("")
    reps = ["tables", "loans", "redeposits", "network", "liqmatrix"]
    args = [x for r in reps for x in ("--report", r)]
    code, _, err = run_cli(capsys, "analyze", tmp_path / "r", *args, "--out", tmp_path / "rep")
    assert code == EXIT_OK, err
    for f in ("tables_net_deposits.csv", "tables_loans.csv", "loans.csv", "redeposits.csv", "network.csv",
              "liquidation_matrix.csv"):
        rows = read_csv(tmp_path / "rep" / f)
        assert rows and rows[0], f  # header always present


def test_analyze_unknown_report(capsys, tmp_path, basic):
    run_cli(capsys, "simulate", "--scenario", basic, "--blocks", 10, "--out", tmp_path / "r")
    code, _, _ = run_cli(capsys, "analyze", tmp_path / "r", "--report", "bogus")
    assert code == EXIT_VALIDATION


def test_analyze_missing_run_dir(capsys, tmp_path):
    assert run_cli(capsys, "analyze", tmp_path / "missing")[0] == EXIT_IO


def test_analyze_regressions_on_farming(capsys, tmp_path, scenarios_dir):
    run_cli(capsys, "simulate", "--scenario", scenarios_dir / "farming.json", "--out", tmp_path / "r")
    code, _, err = run_cli(capsys, "analyze", tmp_path / "r", "--report", "regress-eq4", "--report", "regress-eq5",
                           "--report", "regress-logit", "--token", "DAI")
    assert code == EXIT_OK, err
    rd = tmp_path / "r" / "reports"
    for name in ("regress_eq4", "regress_eq5", "regress_logit"):
        rows = read_csv(rd / f"{name}.csv")
        assert len(rows) > 2
        assert (rd / f"{name}.txt").read_text().strip()


def test_sweep_dirs_and_summary(capsys, tmp_path, basic):
    code, _, err = run_cli(capsys, "sweep", "--scenario", basic, "--param", "horizon_blocks",
                           "--values", "100,200,300", "--out", tmp_path / "s")
    assert code == EXIT_OK, err
    subdirs = sorted(p.name for p in (tmp_path / "s").iterdir() if p.is_dir())
    assert subdirs == ["000_100", "001_200", "002_300"]
    rows = read_csv(tmp_path / "s" / "sweep_summary.csv")
    assert rows[0][:3] == ["param", "run_dir", "value"] and len(rows) == 4
    m = json.loads((tmp_path / "s" / "001_200" / "manifest.json").read_text())
    assert m["sweep"]["value"] == 200


def test_sweep_parallel_identical(capsys, tmp_path, basic):
    outs = {}
    for n in (1, 2, 4):
        out = tmp_path / f"p{n}"
        assert run_cli(capsys, "sweep", "--scenario", basic, "--param", "seed", "--values", "1,2,3,4",
                       "--parallel", n, "--out", out)[0] == EXIT_OK
        outs[n] = [r[2:] for r in read_csv(out / "sweep_summary.csv")]
    assert outs[1] == outs[2] == outs[4]


def test_sweep_empty_values(capsys, tmp_path, basic):
    code, _, err = run_cli(capsys, "sweep", "--scenario", basic, "--param", "seed", "--values", "",
                           "--out", tmp_path / "s")
    assert code == EXIT_VALIDATION and "empty" in json.loads(err)["error"]


def test_sweep_bad_value_rejected(capsys, tmp_path, basic):
    code, _, _ = run_cli(capsys, "sweep", "--scenario", basic, "--param", "horizon_blocks",
                         "--values", "-1,5", "--out", tmp_path / "s")
    assert code == EXIT_VALIDATION

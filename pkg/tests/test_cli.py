import csv
import json

import pytest

from dpnsim import cli
from dpnsim.core import config_to_dict
from dpnsim.presets import PRESETS, check_presets, get_preset, list_presets


def test_catalog():
    names = list_presets()
    assert len(names) == 11
    assert set(names) == {"fig3", "fig4", "fig5", "cap_two_thirds", "table1", "table2_battery",
                          "table2_nobattery", "table3_unopt", "table3_opt", "ga_fig6", "ieee39"}
    check_presets()


def test_presets_command(capsys):
    assert cli.main(["presets"]) == 0
    out = capsys.readouterr().out
    assert "table2_nobattery" in out and len(out.strip().splitlines()) == 11


def test_fig3_preset_setup():
    sc = get_preset("fig3")
    assert sc.sweep
    assert (sc.config.n_users, sc.config.energy_cap, sc.config.p_stay_queue) == (500, 150.0, 0.1)


def test_ga_fig6_is_a_coarse_sweep():
    sc = get_preset("ga_fig6")
    assert sc.sweep and sc.grid == (0.0, 0.25, 0.5, 0.75, 1.0)
    assert (sc.config.n_simulations, sc.config.n_rounds) == (20, 50)


def test_table1_run(tmp_path, capsys):
    assert cli.main(["run", "--preset", "table1", "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader((tmp_path / "users.csv").open()))
    grants = sum(float(r["grant"]) for r in rows)
    assert grants == pytest.approx(2.5187, abs=1e-9)
    assert [r["user"] for r in rows if r["queued"] == "1"] == ["2"]
    assert float(rows[1]["storage"]) == 0.4869
    assert (tmp_path / "rounds.csv").exists() and (tmp_path / "summary.json").exists()


def test_inject_requests_file(tmp_path):
    req = tmp_path / "req.csv"
    req.write_text("u1,u2,u3,u4,u5,u6,u7,u8,u9,u10\n0.4974,0.4869,0,0.5473,0,0,0.5221,0,0.9519,0\n")
    out = tmp_path / "out"
    assert cli.main(["run", "--preset", "table1", "--inject-requests", str(req), "--out", str(out)]) == 0
    rows = list(csv.DictReader((out / "users.csv").open()))
    assert sum(float(r["grant"]) for r in rows) == pytest.approx(2.5187, abs=1e-9)


def test_table_preset_summary_has_comparison(tmp_path):
    cfg = get_preset("table2_nobattery").config.replace(n_simulations=2)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(config_to_dict(cfg)))
    out = tmp_path / "out"
    assert cli.main(["run", "--preset", "table2_nobattery", "--config", str(path), "--out", str(out)]) == 0
    doc = json.loads((out / "summary.json").read_text())
    assert doc["scenario"] == "table2_nobattery"
    assert {r["metric"] for r in doc["comparison"]} >= {"energy_distributed", "customers_in_queue"}
    assert doc["summary"]["n_runs"] == 2


def test_ieee39_outputs(tmp_path):
    assert cli.main(["run", "--preset", "ieee39", "--out", str(tmp_path)]) == 0
    for name in ("routes.csv", "snapshot.json", "snapshot.dot", "summary.json"):
        assert (tmp_path / name).exists()
    doc = json.loads((tmp_path / "summary.json").read_text())
    assert all(v <= 5 for v in doc["users_per_source"].values())
    assert (tmp_path / "snapshot.dot").read_text().startswith("digraph")


def test_format_restricts_outputs(tmp_path):
    assert cli.main(["run", "--preset", "ieee39", "--format", "dot", "--out", str(tmp_path)]) == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == ["snapshot.dot"]


def test_sweep_outputs(tmp_path):
    cfg = get_preset("fig4").config.replace(n_rounds=3)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(config_to_dict(cfg)))
    out = tmp_path / "out"
    assert cli.main(["run", "--preset", "fig4", "--config", str(path), "--out", str(out)]) == 0
    rows = list(csv.DictReader((out / "sweep.csv").open()))
    assert len(rows) == 121
    assert rows[0]["p_request"] == "0.0" and rows[-1]["p_stay_on"] == "1.0"
    assert float(rows[-1]["customers_in_queue_sd"]) >= 0
    rounds = (out / "rounds.csv").read_text().splitlines()
    assert len(rounds) == 1 + 121 * 3 * cfg.n_simulations


def test_seed_repeat_is_byte_identical(tmp_path):
    outs = []
    for i in range(2):
        out = tmp_path / str(i)
        assert cli.main(["run", "--preset", "table2_battery", "--seed", "42", "--out", str(out)]) == 0
        outs.append((out / "rounds.csv").read_bytes())
    assert outs[0] == outs[1]
    other = tmp_path / "other"
    cli.main(["run", "--preset", "table2_battery", "--seed", "43", "--out", str(other)])
    assert (other / "rounds.csv").read_bytes() != outs[0]


def test_invalid_config_reports_field_path(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text("n_users: 10\nn_special_users: 20\ndemand:\n  p_request: 1.5\n")
    assert cli.main(["run", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "demand.p_request" in err and "n_special_users" in err


def test_unwritable_output(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli.main(["run", "--preset", "table1", "--out", str(blocker / "sub")]) == 1
    assert "error" in capsys.readouterr().err


def test_missing_scenario(capsys):
    assert cli.main(["run", "--out", "x"]) == 1


def test_bad_injection_length(tmp_path):
    req = tmp_path / "r.json"
    req.write_text("[0.1, 0.2]")
    assert cli.main(["run", "--preset", "table1", "--inject-requests", str(req),
                     "--out", str(tmp_path / "o")]) == 1


def test_unknown_preset_rejected():
    with pytest.raises(SystemExit):
        cli.main(["run", "--preset", "nope"])


def test_every_preset_has_description():
    assert all(PRESETS[n].description for n in PRESETS)

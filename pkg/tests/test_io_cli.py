import datetime as dt
import json

import pytest

from transit_incident import io
from transit_incident.behavior import SaleTransaction
from transit_incident.cli import ENV_CONFIG, main
from transit_incident.errors import SchemaError
from transit_incident.flows import TapEvent
from transit_incident.headway import VehicleEvent
from transit_incident.redundancy import LoggedIncident, StationSweepRow
from transit_incident.synth import ScenarioConfig, generate

T = dt.datetime(2019, 11, 8, 8, 30, 15)


@pytest.fixture(scope="module")
def scenario(tmp_path_factory):
    out = tmp_path_factory.mktemp("scenario")
    assert main(["synth", "--template", "paper-example", "--seed", "2", "--out", str(out)]) == 0
    return out


def _write(path, text):
    path.write_text(text)
    return path


def test_csv_round_trips(tmp_path):
    avl = [VehicleEvent("t1", "L", "s", T), VehicleEvent("t2", "L", "s", T + dt.timedelta(minutes=5))]
    assert io.read_avl(_write(tmp_path / "avl.csv", io.write_avl(avl))) == avl
    taps = [TapEvent("c", T, "s", "bus", "pass", True, "d"), TapEvent("c", T, "s", "rail")]
    assert io.read_afc(_write(tmp_path / "afc.csv", io.write_afc(taps, with_destination=True))) == taps
    sales = [SaleTransaction("c", T, 20.5)]
    assert io.read_sales(_write(tmp_path / "sales.csv", io.write_sales(sales))) == sales
    log = [LoggedIncident("i", "s", T, T + dt.timedelta(minutes=9), frozenset({"A", "B"}))]
    assert io.read_incident_log(_write(tmp_path / "log.csv", io.write_incident_log(log))) == log
    rows = [StationSweepRow("s", "main", 0.25, False, 1.5, "critical-red")]
    assert io.read_sweep(_write(tmp_path / "sweep.csv", io.write_sweep(rows))) == rows
    obs = generate(ScenarioConfig(n_cards=5, true_coefficients={"ASC": 0.0}, n_observations=20)).observations
    assert io.read_observations(_write(tmp_path / "obs.csv", io.write_observations(obs))) == obs


def test_afc_directory_reads_every_file(tmp_path):
    (tmp_path / "afc").mkdir()
    _write(tmp_path / "afc" / "b.csv", io.write_afc([TapEvent("b", T, "s")]))
    _write(tmp_path / "afc" / "a.csv", io.write_afc([TapEvent("a", T, "s")]))
    assert [t.card_id for t in io.read_afc(tmp_path / "afc")] == ["a", "b"]


@pytest.mark.parametrize(
    "text",
    [
        "trip_id,station_id,arrival\nt,s,2019-11-08T08:00:00\n",
        "trip_id,line_direction_id,station_id,arrival\nt,L,s,yesterday\n",
    ],
)
def test_bad_csv_rows_raise_schema_errors(tmp_path, text):
    with pytest.raises(SchemaError):
        io.read_avl(_write(tmp_path / "avl.csv", text))


def test_sales_must_be_positive(tmp_path):
    with pytest.raises(SchemaError):
        io.read_sales(_write(tmp_path / "s.csv", "card_id,timestamp,amount\nc,2019-01-01T00:00:00,0\n"))


def test_atomic_write_leaves_no_temp_files(tmp_path):
    io.atomic_write(tmp_path / "x" / "f.txt", "hello")
    assert [p.name for p in (tmp_path / "x").iterdir()] == ["f.txt"]


def test_redundancy_command_prints_worked_index(scenario, capsys):
    assert main(["redundancy", "--config", str(scenario / "run.yaml")]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["nrui"] == pytest.approx(0.75, abs=1e-9)


def test_env_config_and_flag_override(scenario, capsys, monkeypatch):
    monkeypatch.setenv(ENV_CONFIG, str(scenario / "run.yaml"))
    assert main(["redundancy", "--incident-k", "1"]) == 0
    assert json.loads(capsys.readouterr().out)["nrui"] == pytest.approx(0.75)
    assert main(["redundancy", "--duration", "120"]) == 0
    assert json.loads(capsys.readouterr().out)["nrui"] != pytest.approx(0.75)


def test_report_writes_dossier(scenario, tmp_path):
    out = tmp_path / "report"
    assert main(["report", "--config", str(scenario / "run.yaml"), "--out", str(out)]) == 0
    dossier = json.loads((out / "dossier.json").read_text())
    assert dossier["nrui"] == pytest.approx(0.75, abs=1e-9)
    assert sorted(p.name for p in out.iterdir()) == sorted(dossier["files"])
    # one home station: income indicators are constant, so the fit fails and is recorded
    assert dossier["fit"]["status"] == "failed"


def test_exit_codes(scenario, tmp_path, capsys):
    cfg = str(scenario / "run.yaml")
    out = tmp_path / "never"
    assert main(["report", "--config", cfg, "--afc", str(tmp_path / "missing"), "--out", str(out)]) == 3
    assert not out.exists()
    assert main(["redundancy", "--network", str(tmp_path / "nope.yaml")]) == 3
    bad = _write(tmp_path / "bad.yaml", "stations: [\n")
    assert main(["redundancy", "--config", cfg, "--network", str(bad)]) == 4
    assert main(["redundancy", "--config", cfg, "--k", "0"]) == 4
    assert main(["synth", "--out", str(tmp_path / "s"), "--config", str(_write(tmp_path / "sc.yaml", "seedz: 1\n"))]) == 4
    with pytest.raises(SystemExit) as exc:
        main(["redundancy", "--no-such-flag"])
    assert exc.value.code == 2
    assert "error [" in capsys.readouterr().err


def test_subcommands_write_outputs(scenario, tmp_path):
    cfg = str(scenario / "run.yaml")
    assert main(["headway", "--config", cfg, "--out", str(tmp_path / "h.csv")]) == 0
    assert io.read_table(tmp_path / "h.csv")
    assert main(["flows", "--config", cfg, "--out", str(tmp_path / "f.csv"),
                 "--deltas", str(tmp_path / "d.json")]) == 0
    assert json.loads((tmp_path / "d.json").read_text())["ranked"]
    assert main(["behavior", "--config", cfg, "--out", str(tmp_path / "obs.csv"),
                 "--summary", str(tmp_path / "c.json")]) == 0
    assert json.loads((tmp_path / "c.json").read_text())["regular_passengers"] > 0
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "sw.csv")]) == 0
    assert io.read_sweep(tmp_path / "sw.csv")


def test_fit_and_sensitivity_commands(tmp_path):
    sc = _write(tmp_path / "sc.yaml", "n_cards: 10\nn_observations: 800\ntrue_coefficients:\n"
                                      "  ASC: -1.0\n  od_redundancy: 1.2\n  pass_user: 1.13\n")
    data = tmp_path / "data"
    assert main(["synth", "--config", str(sc), "--out", str(data)]) == 0
    obs = str(data / "observations.csv")
    assert main(["fit", "--observations", obs, "--out", str(tmp_path / "fit.json"),
                 "--table", str(tmp_path / "fit.txt")]) == 0
    assert "Adjusted rho^2" in (tmp_path / "fit.txt").read_text()
    assert main(["sensitivity", "--observations", obs, "--fit", str(tmp_path / "fit.json"), "--points", "11",
                 "--condition", "pass_user=1", "--out", str(tmp_path / "s.csv")]) == 0
    rows = io.read_table(tmp_path / "s.csv")
    assert len(rows) == 11 and float(rows[-1]["probability"]) > float(rows[0]["probability"])

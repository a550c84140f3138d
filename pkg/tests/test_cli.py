import subprocess
import sys

from ngsim.cli import main
from ngsim.eventlog import read_event_log

SMALL = ["--n_nodes", "10", "--run_length_blocks", "8", "--block_interval_sec", "30"]


def test_run_writes_log_and_csv(tmp_path, capsys):
    log, csv = tmp_path / "r.log", tmp_path / "r.csv"
    assert main(["run", *SMALL, "--seed", "3", "--log", str(log), "--csv", str(csv)]) == 0
    out = capsys.readouterr().out
    assert "consensus_delay" in out and "configured_tps" in out
    assert len(read_event_log(log)) > 0
    header, row = csv.read_text().splitlines()
    assert len(header.split(",")) == len(row.split(","))


def test_metrics_recomputes_run_report(tmp_path, capsys):
    log, csv = tmp_path / "r.log", tmp_path / "r.csv"
    main(["run", *SMALL, "--log", str(log), "--csv", str(csv)])
    capsys.readouterr()
    assert main(["metrics", str(log), "--format", "csv"]) == 0
    assert capsys.readouterr().out == csv.read_text()


def test_config_file_with_override(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("protocol = ng\nn_nodes = 8\nrun_length_blocks = 10\n")
    assert main(["run", "--config", str(cfg), "--min_degree", "3"]) == 0


def test_errors_exit_two(tmp_path, capsys):
    assert main(["run", "--n_nodes", "4"]) == 2
    assert "min_degree" in capsys.readouterr().err
    bad = tmp_path / "bad.log"
    bad.write_text("garbage\n")
    assert main(["metrics", str(bad)]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_sweep_to_file(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["sweep", *SMALL, "--axis", "frequency", "--values", "30,15", "--seeds", "0,1",
                 "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "axis_value,metric,mean,min,max,n,failures"
    assert {l.split(",")[0] for l in lines[1:]} == {"30.0", "15.0"}


def test_bounds_and_topology(capsys):
    assert main(["bounds", "--alpha-step", "1/12"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "alpha,r_lower,r_upper,feasible_at_0.40" and len(lines) == 6
    assert "0.25,0.3684,0.4286,true" in lines
    assert main(["gen-topology", "--n-nodes", "6", "--seed", "1"]) == 0
    edges = [l for l in capsys.readouterr().out.splitlines() if not l.startswith("#")]
    assert len(edges) == 15


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "ngsim.cli", "bounds", "--alpha-max", "0"],
                       capture_output=True, text=True, check=True)
    assert r.stdout.splitlines()[1] == "0,0,0.5,true"

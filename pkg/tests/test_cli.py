import json

import pytest

from groupmv.circuit import loads
from groupmv.cli import main


def write_config(tmp_path, extra=""):
    p = tmp_path / "c.ini"
    p.write_text("[experiment]\ntopologies = grid\nn_values = 6\nmethods = group_mv\nl_values = 1\nk = 3\n"
                 "repetitions = 1\nshots = 100\n" + extra + "\n[noise]\nenabled = false\n"
                 "[output]\ndirectory = out\n")
    return p


def test_sweep_writes_csv(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["sweep", str(cfg)]) == 0
    out = capsys.readouterr().out
    assert (tmp_path / "out" / "results.csv").exists()
    assert "w=1.0000" in out


def test_sweep_echoes_default_shots(tmp_path, capsys):
    cfg = write_config(tmp_path)
    cfg.write_text(cfg.read_text().replace("shots = 100\n", ""))
    assert main(["sweep", str(cfg), "--out", str(tmp_path / "o2")]) == 0
    assert "default applied: shots=10000" in capsys.readouterr().out


def test_sweep_config_error_exit_code(tmp_path, capsys):
    cfg = write_config(tmp_path, "bogus = 1\n")
    assert main(["sweep", str(cfg)]) == 1
    assert "unknown key" in capsys.readouterr().err


def test_sweep_missing_config(tmp_path):
    assert main(["sweep", str(tmp_path / "nope.ini")]) == 1


def test_bad_arguments_exit_code():
    assert main(["partition-demo", "--l", "2"]) == 1
    assert main(["no-such-command"]) == 1


def test_partition_demo(tmp_path, capsys):
    dump = tmp_path / "plan.json"
    assert main(["partition-demo", "--n", "120", "--k", "12", "--l", "3", "--dump", str(dump)]) == 0
    out = capsys.readouterr().out
    # K is the group size
    assert "groups: 10" in out
    assert len(json.loads(dump.read_text())["groups"]) == 10


def test_synth_roundtrip(tmp_path, capsys):
    out = tmp_path / "c.txt"
    assert main(["synth", "--topology", "grid", "--n", "12", "--k", "6", "--l", "1", "-o", str(out)]) == 0
    c = loads(out.read_text())
    assert c.num_qubits == 12 and c.metadata["method"] == "group_mv"
    assert "two_qubit_depth=" in capsys.readouterr().err


def test_synth_runtime_error_exit_code(capsys):
    assert main(["synth", "--topology", "ring:4", "--n", "9"]) == 2
    assert "error" in capsys.readouterr().err


@pytest.mark.slow
def test_selftest(capsys):
    assert main(["selftest"]) == 0
    assert "selftest passed" in capsys.readouterr().out

import json
import subprocess
import sys

import pytest

from lrdsep.cli import main


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


SIM = "[model]\nC = [[0.5]]\nD = 0.4\n[simulate]\nN = 16\nseed = 1\n"


def test_simulate_byte_identical(tmp_path):
    cfg = write(tmp_path, "sim.ini", SIM)
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    for name in ("path.csv", "path.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    lines = (tmp_path / "a" / "path.csv").read_bytes().split(b"\n")
    assert lines[0] == b"x1" and len(lines) == 18 and lines[-1] == b""
    assert b"\r" not in (tmp_path / "a" / "path.csv").read_bytes()
    sidecar = json.loads((tmp_path / "a" / "path.json").read_text())
    assert sidecar["seed"] == 1 and sidecar["generator"] == "circulant" and sidecar["clipped_mass"] == 0.0


def test_simulate_seed_override_changes_output(tmp_path):
    cfg = write(tmp_path, "sim.ini", SIM)
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "2"])
    assert (tmp_path / "a" / "path.csv").read_bytes() != (tmp_path / "b" / "path.csv").read_bytes()


def test_simulate_4096_clipped_mass(tmp_path):
    cfg = write(tmp_path, "sim.ini", "[model]\nC = [[0.5, 0.3], [0.3, 0.5]]\nD = 0.4\n[simulate]\nN = 4096\n")
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "path.json").read_text())["clipped_mass"] <= 1e-3


@pytest.mark.parametrize("text", [
    "[model]\nC = [[1, 2], [2, 1]]\nD = 0.9\n[simulate]\nN = 64\n",
    "[model]\nC = [[0, 0], [0, 0]]\nD = 0.4\n",
    "[model]\nC = [[0.5]]\nD = 0.4\ncolour = 2\n",
])
def test_invalid_input_exits_2(tmp_path, capsys, text):
    cfg = write(tmp_path, "bad.ini", text)
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    body = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert "error" in body
    assert json.loads((tmp_path / "o" / "error.json").read_text()) == body


def test_check_exit_codes(tmp_path):
    assert main(["check", "--out", str(tmp_path / "a")]) == 0
    assert main(["check", "--negative-control", "--out", str(tmp_path / "b")]) == 1
    assert main(["check", "--p-max", "1", "--out", str(tmp_path / "c")]) == 0
    report = json.loads((tmp_path / "b" / "report.json").read_text())
    assert report["passed"] is False


def test_experiment_scaling_and_regime(tmp_path):
    ok = write(tmp_path, "ok.ini", "[model]\nC = [[0.5]]\nD = 0.4\n[experiment]\nm = 1\n"
                                   "N_list = [1024, 2048, 4096, 8192, 16384]\n[output]\nformats = [\"json\", \"csv\", \"svg\"]\n")
    assert main(["experiment", "scaling", "--config", ok, "--out", str(tmp_path / "s")]) == 0
    assert {p.name for p in (tmp_path / "s").iterdir()} >= {"report.json", "summary.csv", "plot.svg"}
    bad = write(tmp_path, "bad.ini", "[model]\nC = [[0.5]]\nD = 0.6\n[experiment]\nm = 2\n")
    assert main(["experiment", "scaling", "--config", bad, "--out", str(tmp_path / "r")]) == 2


def test_experiment_reduction_rerun_identical(tmp_path):
    cfg = write(tmp_path, "red.ini", "[model]\nC = [[0.5, 0.3], [0.3, 0.5]]\nD = 0.4\n"
                                     "[class]\nkind = \"half_space\"\nn_directions = 4\n"
                                     "[experiment]\nN_list = [256, 1024]\nreplicates = 12\n")
    for out in ("a", "b"):
        main(["experiment", "reduction", "--config", cfg, "--out", str(tmp_path / out), "--seed", "9"])
    for name in ("report.json", "summary.csv", "checks.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_replicates_override(tmp_path):
    cfg = write(tmp_path, "lim.ini", "[model]\nC = [[0.5]]\nD = 0.3\n"
                                     "[class]\nkind = \"polynomial\"\nterms = [[[[1], 1.0]]]\n"
                                     "[experiment]\nN_list = [256]\n")
    main(["experiment", "limit", "--config", cfg, "--out", str(tmp_path), "--replicates", "7"])
    assert json.loads((tmp_path / "report.json").read_text())["config"]["replicates"] == 7


def test_bracket_table(tmp_path, capsys):
    cfg = write(tmp_path, "br.ini", "[model]\nC = [[0.5]]\nD = 0.4\n"
                                    "[class]\nkind = \"half_space\"\ndirections = [[1.0]]\noffsets = [-1.0, 0.0, 1.0]\n"
                                    "[bracket]\nepsilons = [1.0, 0.5, 0.1]\nr = [3, 5]\n")
    assert main(["bracket", "--config", cfg, "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "0.1,100" in out and "r=3: divergent" in out and "r=5: finite" in out
    doc = json.loads((tmp_path / "bracket.json").read_text())
    assert [c["count"] for c in doc["counts"]] == [1, 4, 100]


def test_unknown_format(tmp_path):
    assert main(["check", "--out", str(tmp_path), "--format", "xml"]) == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "lrdsep", "check", "--p-max", "1", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "PASS basis identity" in proc.stdout

import csv
import json
import shutil
import subprocess

import numpy as np
import pytest

from cvdv.circuit import CvCircuit, Fourier, Shear, Squeeze, serialize_circuit
from cvdv.cli import main

from _util import random_template_circuit


@pytest.fixture
def circ_file(tmp_path):
    def write(c, name="c.json"):
        p = tmp_path / name
        p.write_text(serialize_circuit(c))
        return str(p)

    return write


def test_budget_epsilon(capsys):
    assert main(["budget", "--K", "1", "--n", "1", "--estar", "1", "--epsilon", "0.1"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["d"] == 145684900 and doc["k"] == 28
    assert doc["headline"] <= 0.1


def test_budget_circuit_csv(circ_file, tmp_path, capsys):
    path = circ_file(CvCircuit(1, (Shear(1.0, 0), Squeeze(0.1, 0)), 2.0))
    out_csv = tmp_path / "b.csv"
    assert main(["budget", "--circuit", path, "--d", "16", "--csv", str(out_csv)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert len(doc["gates"]) == 2
    rows = list(csv.reader(out_csv.open()))
    assert rows[0][1] == "kind" and rows[1][1] == "Shear"


def test_budget_usage_error(capsys):
    assert main(["budget", "--K", "1"]) == 2
    assert "circuit document" in capsys.readouterr().err


def test_compile_and_lower(circ_file, tmp_path, capsys):
    path = circ_file(CvCircuit(1, (Shear(0.5, 0), Fourier(0)), 2.0))
    qpath = tmp_path / "q.json"
    assert main(["compile", "--circuit", path, "--d", "8", "--out", str(qpath)]) == 0
    qdoc = json.loads(qpath.read_text())
    assert qdoc["d"] == 8 and [g["kind"] for g in qdoc["gates"]] == ["P", "F"]
    qasm = tmp_path / "q.qasm"
    assert main(["lower", "--qudit-circuit", str(qpath), "--qasm", str(qasm)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["report"]["k"] == 3 and doc["report"]["totals"]["qft_core"] == 6
    assert qasm.read_text().startswith("OPENQASM")
    assert main(["lower", "--circuit", path, "--d", "6"]) == 2


def test_simulate(circ_file, tmp_path, capsys):
    path = circ_file(CvCircuit(1, (Squeeze(0.2, 0),), 2.0))
    pdf = tmp_path / "p.csv"
    assert main(["simulate", "--circuit", path, "--d", "8", "--model", "M", "--pdf-csv", str(pdf)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["model"] == "M" and abs(sum(doc["probs"]) - 1) < 1e-9
    rows = list(csv.reader(pdf.open()))
    assert rows[0] == ["x0", "p_M"] and len(rows) == 9


def test_compare_exit_codes(circ_file, tmp_path, capsys):
    good = circ_file(CvCircuit(1, (Shear(1.0, 0), Fourier(0)), 2.5))
    assert main(["compare", "--circuit", good, "--d", "16", "--nf", "60", "--deterministic"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["passed"] and "timings" not in doc
    fourier = circ_file(CvCircuit(1, (Fourier(0),), 1.0), "f.json")
    assert main(["compare", "--circuit", fourier, "--d", "8", "--corrupt-dv"]) == 1
    capsys.readouterr()
    bad = tmp_path / "bad.json"
    bad.write_text('{"modes": 1, "gates": [')
    assert main(["compare", "--circuit", str(bad), "--d", "8"]) == 2
    assert main(["compare", "--circuit", good, "--d", "128"]) == 2
    assert main(["compare", "--circuit", good, "--d", "8", "--models", "R"]) == 2
    assert main(["compare", "--circuit", str(tmp_path / "missing.json"), "--d", "8"]) == 2
    assert main(["frobnicate"]) == 2


def test_compare_deterministic_and_csv(circ_file, tmp_path, capsys):
    path = circ_file(random_template_circuit(np.random.default_rng(2), E_star=2.0))
    outs = []
    for i in range(2):
        out = tmp_path / f"r{i}.json"
        code = main(["compare", "--circuit", path, "--d", "16", "--nf", "60", "--deterministic",
                     "--out", str(out), "--csv", str(tmp_path / "s.csv"), "--pdf-csv", str(tmp_path / "p.csv")])
        assert code == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    rows = list(csv.reader((tmp_path / "s.csv").open()))
    assert [r[0] for r in rows[1:]] == ["R-C", "C-M", "M-D"]
    assert list(csv.reader((tmp_path / "p.csv").open()))[0] == ["x0", "p_C", "p_D", "p_M", "p_R"]


def test_compare_epsilon_selects_dimension(circ_file, capsys):
    path = circ_file(random_template_circuit(np.random.default_rng(3), E_star=1.0))
    # the headline dimension for any useful epsilon is far beyond the desk caps
    assert main(["compare", "--circuit", path, "--epsilon", "0.5"]) == 2
    assert "desk caps" in capsys.readouterr().err


@pytest.mark.skipif(shutil.which("cvdv") is None, reason="console script not installed")
def test_console_script():
    r = subprocess.run(["cvdv", "budget", "--K", "1", "--n", "1", "--estar", "1", "--epsilon", "0.01"],
                       capture_output=True, text=True, check=True)
    assert json.loads(r.stdout)["k"] == 34

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cvdv.dv import QuditCircuit, QuditGate, build_gate, circuit_unitary, fourier_matrix
from cvdv.qubits import (
    DimensionNotPowerOfTwo,
    QubitCircuit,
    QubitGate,
    TooLarge,
    diagonal_gates,
    equivalence_check,
    lower,
    lower_gate,
    unitary_of,
)


def lowered(g: QuditGate, d: int) -> QubitCircuit:
    k = int(math.log2(d))
    gs, _ = lower_gate(g, d, k)
    return QubitCircuit(len(g.qudits) * k, gs)


def test_f4_structure():
    gs, counts = lower_gate(QuditGate("F", (0,)), 4, 2)
    core = [g for g in gs if g.kind != "swap"]
    assert [g.kind for g in core] == ["H", "cphase", "H"]
    assert core[1].alpha == pytest.approx(math.pi / 2)
    assert counts == {"qft_core": 3, "swap": 1}


def test_unitary_of_basics():
    assert np.array_equal(unitary_of(QubitCircuit(2)), np.eye(4))
    H = unitary_of(QubitCircuit(1, [QubitGate("H", (0,))]))
    assert np.allclose(H, np.array([[1, 1], [1, -1]]) / math.sqrt(2), atol=1e-15)
    with pytest.raises(TooLarge):
        unitary_of(QubitCircuit(13))


def test_unitary_of_qubit_order():
    # qubit 0 is the most significant bit
    U = unitary_of(QubitCircuit(2, [QubitGate("phase", (0,), 0.7)]))
    assert np.allclose(np.diag(U), [1, 1, np.exp(0.7j), np.exp(0.7j)])


@pytest.mark.parametrize("d", [8, 16])
def test_fourier_matches_matrix_oracle(d):
    qbc = lowered(QuditGate("F", (0,)), d)
    assert equivalence_check(qbc, fourier_matrix(d)) <= 1e-10
    qbc = lowered(QuditGate("Fdag", (0,)), d)
    assert equivalence_check(qbc, fourier_matrix(d).conj().T) <= 1e-10


def test_z8_residual_and_cap():
    g = QuditGate("Z", (0,), (1.3,))
    qbc = lowered(g, 8)
    assert len(qbc.gates) <= 7
    assert equivalence_check(qbc, g, 8) <= 1e-12


def test_cz4_cap():
    g = QuditGate("CZ", (0, 1), (0.8,))
    qbc = lowered(g, 4)
    assert qbc.num_qubits == 4 and len(qbc.gates) <= 15
    assert equivalence_check(qbc, g, 4) <= 1e-10


def test_corrupted_circuit_detected():
    qbc = lowered(QuditGate("F", (0,)), 8)
    qbc.gates[1] = QubitGate("cphase", qbc.gates[1].qubits, qbc.gates[1].alpha + 1.0)
    assert equivalence_check(qbc, fourier_matrix(8)) > 0.1


def test_dimension_not_power_of_two():
    with pytest.raises(DimensionNotPowerOfTwo):
        lower(QuditCircuit(6, 1, [QuditGate("F", (0,))]), 2)
    with pytest.raises(DimensionNotPowerOfTwo):
        lower_gate(QuditGate("Z", (0,), (1.0,)), 8, 2)


def test_diagonal_gates_arbitrary_phases():
    rng = np.random.default_rng(3)
    for m in (1, 2, 3, 4):
        ph = rng.uniform(-np.pi, np.pi, 2 ** m)
        gs = diagonal_gates(ph, list(range(m)))
        assert len(gs) <= 2 ** m - 1
        U = unitary_of(QubitCircuit(m, gs))
        assert equivalence_check(QubitCircuit(m, gs), np.diag(np.exp(1j * ph))) <= 1e-12
        assert np.abs(U - np.diag(np.diag(U))).max() == 0


KINDS = [("F", ()), ("Fdag", ()), ("Z", (0.37,)), ("X", (-1.1,)), ("P", (0.9,)), ("C", (0.2,))]


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_all_gates_exact_with_counts(k):
    d = 2 ** k
    for kind, p in KINDS:
        g = QuditGate(kind, (0,), p)
        gs, counts = lower_gate(g, d, k)
        assert equivalence_check(QubitCircuit(k, gs), g, d) <= 1e-10
        if kind in ("F", "Fdag"):
            assert counts["qft_core"] == k * (k + 1) // 2
            assert counts["swap"] == k // 2
        elif kind != "X":
            assert counts["diag"] <= 2 ** k - 1
        else:
            assert counts["qft_core"] == k * (k + 1) and counts["diag"] <= 2 ** k - 1
    if k <= 3:
        for kind, p in (("CZ", (0.6,)), ("SWAP", ())):
            g = QuditGate(kind, (0, 1), p)
            gs, counts = lower_gate(g, d, k)
            assert equivalence_check(QubitCircuit(2 * k, gs), g, d) <= 1e-10
            if kind == "CZ":
                assert counts["diag"] <= 2 ** (2 * k) - 1


@st.composite
def qudit_circuits(draw):
    k = draw(st.integers(1, 3))
    n = draw(st.integers(1, 2))
    d = 2 ** k
    qc = QuditCircuit(d, n)
    f = st.floats(-3, 3)
    for i in range(draw(st.integers(0, 6))):
        kind = draw(st.sampled_from(["F", "Fdag", "Z", "X", "P", "C"] + (["CZ", "SWAP"] if n == 2 else [])))
        if kind in ("CZ", "SWAP"):
            qs = tuple(draw(st.permutations([0, 1])))
        else:
            qs = (draw(st.integers(0, n - 1)),)
        params = () if kind in ("F", "Fdag", "SWAP") else (draw(f),)
        qc.add(QuditGate(kind, qs, params), i)
    return qc, k


@settings(max_examples=40, deadline=None)
@given(qudit_circuits())
def test_lowering_commutes_with_composition(arg):
    qc, k = arg
    qbc, rep = lower(qc, k)
    assert qbc.num_qubits == qc.n * k
    assert len(rep.per_gate) == len(qc.gates)
    assert sum(rep.totals.values()) == len(qbc.gates)
    assert equivalence_check(qbc, circuit_unitary(qc)) <= 1e-10


def test_exports():
    qbc, _ = lower(QuditCircuit(4, 1, [QuditGate("F", (0,)), QuditGate("C", (0,), (0.1,))], [0, 1]), 2)
    qasm = qbc.to_qasm()
    assert qasm.startswith("OPENQASM 2.0;") and "qreg q[2];" in qasm
    assert "h q[0];" in qasm and "swap q[0],q[1];" in qasm
    assert '"source": 1' in qbc.to_json()
    assert set(qbc.provenance) == {0, 1}


def test_build_gate_consistency():
    # the matrix oracle used above is the dv-backend definition
    assert np.allclose(build_gate("F", (), 8), fourier_matrix(8))

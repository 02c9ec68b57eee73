"""Lowering of d = 2^k qudit circuits to qubit circuits.

Qudit q occupies qubits q*k .. q*k+k-1, most significant bit first, so the
qubit register ordering matches the qudit tensor ordering.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .dv import QuditCircuit, QuditGate, build_gate, gate_diagonal

MAX_QUBITS = 12


class DimensionNotPowerOfTwo(ValueError):
    pass


class TooLarge(ValueError):
    pass


@dataclass(frozen=True)
class QubitGate:
    kind: str  # phase, H, cphase, mcphase, swap
    qubits: tuple[int, ...]
    alpha: float = 0.0


@dataclass
class QubitCircuit:
    num_qubits: int
    gates: list[QubitGate] = field(default_factory=list)
    provenance: list[int] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {
                "num_qubits": self.num_qubits,
                "gates": [
                    {"kind": g.kind, "qubits": list(g.qubits), "alpha": g.alpha, "source": s}
                    for g, s in zip(self.gates, self.provenance)
                ],
            }
        )

    def to_qasm(self) -> str:
        """OpenQASM-2-style text; multi-controlled phases use a non-standard ``mcp`` line."""
        lines = ["OPENQASM 2.0;", 'include "qelib1.inc";', f"qreg q[{self.num_qubits}];"]
        for g in self.gates:
            qs = ",".join(f"q[{i}]" for i in g.qubits)
            if g.kind == "H":
                lines.append(f"h {qs};")
            elif g.kind == "swap":
                lines.append(f"swap {qs};")
            elif g.kind == "phase":
                lines.append(f"u1({g.alpha!r}) {qs};")
            elif g.kind == "cphase":
                lines.append(f"cu1({g.alpha!r}) {qs};")
            else:
                lines.append(f"mcp({g.alpha!r}) {qs};")
        return "\n".join(lines) + "\n"


@dataclass
class LoweringReport:
    k: int
    per_gate: list[dict[str, int]] = field(default_factory=list)
    totals: dict[str, int] = field(default_factory=dict)


def _check_k(d: int, k: int) -> None:
    if d != 2 ** k:
        raise DimensionNotPowerOfTwo(f"d={d} is not 2^{k}")


def qft_gates(qubits: list[int], inverse: bool = False) -> tuple[list[QubitGate], list[QubitGate]]:
    """Core QFT (H + controlled phases, k(k+1)/2 gates) and the bit-reversal swaps."""
    k = len(qubits)
    core: list[QubitGate] = []
    for j in range(k):
        core.append(QubitGate("H", (qubits[j],)))
        for m in range(j + 1, k):
            core.append(QubitGate("cphase", (qubits[m], qubits[j]), math.pi / 2 ** (m - j)))
    swaps = [QubitGate("swap", (qubits[j], qubits[k - 1 - j])) for j in range(k // 2)]
    if not inverse:
        return core, swaps
    # inverse: undo the swaps, then the core in reverse with conjugate phases
    inv = [QubitGate(g.kind, g.qubits, -g.alpha) for g in reversed(core)]
    return swaps, inv


def _gray_subsets(m: int) -> list[int]:
    """Nonzero bitmasks over m bits in Gray-code order."""
    return [i ^ (i >> 1) for i in range(1, 2 ** m)]


def diagonal_gates(phases: np.ndarray, qubits: list[int], tol: float = 1e-15) -> list[QubitGate]:
    """Multi-controlled phase gates reproducing diag(exp(i*phases)) up to a global phase.

    Writes phi(b) = sum_S alpha_S prod_{i in S} b_i (Moebius inversion over subsets);
    each nonzero alpha_S becomes one (multi-)controlled phase on the qubits in S.
    """
    m = len(qubits)
    phi = np.asarray(phases, float).copy()
    if phi.shape != (2 ** m,):
        raise ValueError("phase vector length must be 2^(number of qubits)")
    # index bit (m-1-i) is qubit i (MSB first); transform in place to Moebius coefficients
    for bit in range(m):
        step = 1 << bit
        for idx in range(2 ** m):
            if idx & step:
                phi[idx] -= phi[idx ^ step]
    out = []
    for mask in _gray_subsets(m):
        a = math.remainder(phi[mask], 2 * math.pi)
        if abs(a) <= tol:
            continue
        S = tuple(qubits[i] for i in range(m) if mask >> (m - 1 - i) & 1)
        kind = {1: "phase", 2: "cphase"}.get(len(S), "mcphase")
        out.append(QubitGate(kind, S, a))
    return out


def lower_gate(g: QuditGate, d: int, k: int) -> tuple[list[QubitGate], dict[str, int]]:
    _check_k(d, k)
    reg = lambda q: list(range(q * k, (q + 1) * k))  # noqa: E731
    if g.kind in ("F", "Fdag"):
        a, b = qft_gates(reg(g.qudits[0]), inverse=g.kind == "Fdag")
        core, swaps = (a, b) if g.kind == "F" else (b, a)
        return a + b, {"qft_core": len(core), "swap": len(swaps)}
    if g.kind == "X":
        q = g.qudits[0]
        c1, s1 = qft_gates(reg(q))
        zg = diagonal_gates(np.angle(gate_diagonal("Z", g.params, d)), reg(q))
        s2, c2 = qft_gates(reg(q), inverse=True)
        return c1 + s1 + zg + s2 + c2, {"qft_core": len(c1) + len(c2), "swap": len(s1) + len(s2), "diag": len(zg)}
    if g.kind == "SWAP":
        a, b = reg(g.qudits[0]), reg(g.qudits[1])
        gs = [QubitGate("swap", (x, y)) for x, y in zip(a, b)]
        return gs, {"swap": len(gs)}
    if g.diagonal:
        if g.kind == "CZ":
            qs = reg(g.qudits[0]) + reg(g.qudits[1])
        else:
            qs = reg(g.qudits[0])
        gs = diagonal_gates(np.angle(gate_diagonal(g.kind, g.params, d)), qs)
        return gs, {"diag": len(gs)}
    raise ValueError(f"cannot lower {g.kind}")


def lower(qc: QuditCircuit, k: int) -> tuple[QubitCircuit, LoweringReport]:
    _check_k(qc.d, k)
    out = QubitCircuit(qc.n * k)
    rep = LoweringReport(k)
    totals: Counter = Counter()
    for i, g in enumerate(qc.gates):
        gs, counts = lower_gate(g, qc.d, k)
        out.gates += gs
        out.provenance += [i] * len(gs)
        rep.per_gate.append(counts)
        totals.update(counts)
    rep.totals = dict(totals)
    return out, rep


# ------------------------------------------------------------ dense checks


def _gate_matrix(g: QubitGate) -> np.ndarray:
    if g.kind == "H":
        return np.array([[1, 1], [1, -1]]) / math.sqrt(2)
    if g.kind == "swap":
        return np.eye(4)[[0, 2, 1, 3]]
    m = len(g.qubits)
    diag = np.ones(2 ** m, complex)
    diag[-1] = np.exp(1j * g.alpha)
    return np.diag(diag)


def unitary_of(qbc: QubitCircuit) -> np.ndarray:
    nq = qbc.num_qubits
    if nq > MAX_QUBITS:
        raise TooLarge(f"{nq} qubits exceeds the dense cap of {MAX_QUBITS}")
    U = np.eye(2 ** nq, dtype=complex).reshape((2,) * nq + (2 ** nq,))
    for g in qbc.gates:
        m = len(g.qubits)
        G = _gate_matrix(g).reshape((2,) * (2 * m))
        U = np.tensordot(G, U, axes=(list(range(m, 2 * m)), list(g.qubits)))
        U = np.moveaxis(U, list(range(m)), list(g.qubits))
    return U.reshape(2 ** nq, 2 ** nq)


def phase_aligned_residual(U: np.ndarray, T: np.ndarray) -> float:
    """min over global phase of max |U - e^{i phi} T|."""
    ov = np.vdot(T, U)
    ph = ov / abs(ov) if abs(ov) > 0 else 1.0
    return float(np.abs(U - ph * T).max())


def equivalence_check(qbc: QubitCircuit, target: QuditGate | np.ndarray, d: int | None = None) -> float:
    if isinstance(target, QuditGate):
        if d is None:
            raise ValueError("d required for a QuditGate target")
        T = build_gate(target.kind, target.params, d)
        k = int(round(math.log2(d)))
        if k > 5:
            raise TooLarge("equivalence_check supports k <= 5")
        # the qubit circuit is expected to act on qudits 0..m-1 only
        m = len(target.qudits)
        if qbc.num_qubits != m * k:
            raise ValueError("qubit circuit does not match target size")
    else:
        T = np.asarray(target)
    return phase_aligned_residual(unitary_of(qbc), T)

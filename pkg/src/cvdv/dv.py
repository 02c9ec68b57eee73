"""Qudit analogues of the CV gates, CV->qudit compilation and qudit evolution."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .circuit import CvCircuit, CvGate
from .fock import OutcomeDistribution, lattice_spacing
from .ssd import QuditDensity

DIAGONAL_QUDIT_KINDS = frozenset({"Z", "P", "C", "CZ"})
QUDIT_ARITY = {"F": 1, "Fdag": 1, "Z": 1, "X": 1, "P": 1, "C": 1, "CZ": 2, "SWAP": 2}


class UnsupportedGate(ValueError):
    pass


def centered_digit(a, d: int):
    """{a}_d in [-(d//2), ceil(d/2) - 1], congruent to a mod d."""
    return (np.asarray(a) + d // 2) % d - d // 2


@dataclass(frozen=True)
class QuditGate:
    kind: str
    qudits: tuple[int, ...]
    params: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in QUDIT_ARITY:
            raise UnsupportedGate(f"unknown qudit gate {self.kind!r}")
        if len(self.qudits) != QUDIT_ARITY[self.kind]:
            raise ValueError(f"{self.kind} acts on {QUDIT_ARITY[self.kind]} qudits")

    @property
    def diagonal(self) -> bool:
        return self.kind in DIAGONAL_QUDIT_KINDS


def fourier_matrix(d: int) -> np.ndarray:
    a = np.arange(d)
    return np.exp(2j * np.pi * np.outer(a, a) / d) / math.sqrt(d)


def gate_diagonal(kind: str, params: tuple[float, ...], d: int) -> np.ndarray:
    """Phase vector of a diagonal gate (length d, or d*d for CZ with the first qudit major)."""
    x = lattice_spacing(d) * centered_digit(np.arange(d), d)
    if kind == "Z":
        return np.exp(1j * params[0] * x)
    if kind == "P":
        return np.exp(0.5j * params[0] * x * x)
    if kind == "C":
        return np.exp(1j * params[0] * x ** 3)
    if kind == "CZ":
        return np.exp(1j * params[0] * np.outer(x, x)).ravel()
    raise ValueError(f"{kind} is not diagonal")


def build_gate(kind: str, params: tuple[float, ...], d: int) -> np.ndarray:
    """Dense unitary of a primitive qudit gate (d x d, or d^2 x d^2 for two-qudit kinds)."""
    if d < 2:
        raise ValueError("d must be >= 2")
    if kind in DIAGONAL_QUDIT_KINDS:
        return np.diag(gate_diagonal(kind, params, d))
    F = fourier_matrix(d)
    if kind == "F":
        return F
    if kind == "Fdag":
        return F.conj().T
    if kind == "X":
        # X(s) = F^dagger Z(s) F, the image of exp(-i s p)
        return F.conj().T @ np.diag(gate_diagonal("Z", params, d)) @ F
    if kind == "SWAP":
        S = np.zeros((d * d, d * d))
        a, b = np.divmod(np.arange(d * d), d)
        S[b * d + a, a * d + b] = 1
        return S
    raise UnsupportedGate(kind)


@dataclass
class QuditCircuit:
    d: int
    n: int
    gates: list[QuditGate] = field(default_factory=list)
    provenance: list[int] = field(default_factory=list)

    def add(self, g: QuditGate, src: int) -> None:
        self.gates.append(g)
        self.provenance.append(src)

    def to_json(self) -> str:
        return json.dumps(
            {
                "d": self.d,
                "n": self.n,
                "gates": [
                    {"kind": g.kind, "qudits": list(g.qudits), "params": list(g.params), "source": s}
                    for g, s in zip(self.gates, self.provenance)
                ],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "QuditCircuit":
        doc = json.loads(text)
        qc = cls(doc["d"], doc["n"])
        for g in doc["gates"]:
            qc.add(QuditGate(g["kind"], tuple(g["qudits"]), tuple(g["params"])), g["source"])
        return qc


# ------------------------------------------------------------ decompositions


def reduce_quarter_turns(theta: float) -> tuple[float, int]:
    """theta = rest + k*pi/2 with |rest| <= pi/4 and k in 0..3."""
    k = int(round(theta / (math.pi / 2)))
    rest = theta - k * math.pi / 2
    return rest, k % 4


def rotation_shears(theta: float) -> tuple[float, float, float]:
    """R(theta) = F P(s3) F P(s2) F P(s1) for |theta| <= pi/4."""
    c, s = math.cos(theta), math.sin(theta)
    return 1 / c + s / c, c, c + (1 + s) * s / c


def _fourier_power(k: int, q: int) -> list[QuditGate]:
    return {0: [], 1: [QuditGate("F", (q,))], 2: [QuditGate("F", (q,))] * 2, 3: [QuditGate("Fdag", (q,))]}[k % 4]


def rotation_sequence(theta: float, q: int) -> list[QuditGate]:
    rest, k = reduce_quarter_turns(theta)
    seq: list[QuditGate] = []
    if rest != 0.0:
        s1, s2, s3 = rotation_shears(rest)
        F = QuditGate("F", (q,))
        seq += [QuditGate("P", (q,), (s1,)), F, QuditGate("P", (q,), (s2,)), F, QuditGate("P", (q,), (s3,)), F]
    return seq + _fourier_power(k, q)


def squeeze_sequence(r: float, q: int) -> list[QuditGate]:
    """S(r) = F P(e^r) F P(e^-r) F P(e^r); returned in time order."""
    F = QuditGate("F", (q,))
    return [
        QuditGate("P", (q,), (math.exp(r),)),
        F,
        QuditGate("P", (q,), (math.exp(-r),)),
        F,
        QuditGate("P", (q,), (math.exp(r),)),
        F,
    ]


def beamsplitter_sequence(theta: float, k: int, l: int) -> list[QuditGate]:
    """BS(theta) via three CZ gates.

    For |theta| <= pi/4,
    BS(theta) = F_k CZ(t) F_k F_l CZ(sin theta) F_k^+ F_l^+ CZ(t) F_k^+ with t = tan(theta/2);
    quarter turns use BS(pi/2) = F_k^2 SWAP.
    """
    rest, m = reduce_quarter_turns(theta)
    seq: list[QuditGate] = []
    for _ in range(m):
        seq += [QuditGate("SWAP", (k, l)), QuditGate("F", (k,)), QuditGate("F", (k,))]
    if rest != 0.0:
        t = math.tan(rest / 2)
        seq += [
            QuditGate("Fdag", (k,)),
            QuditGate("CZ", (k, l), (t,)),
            QuditGate("Fdag", (l,)),
            QuditGate("Fdag", (k,)),
            QuditGate("CZ", (k, l), (math.sin(rest),)),
            QuditGate("F", (l,)),
            QuditGate("F", (k,)),
            QuditGate("CZ", (k, l), (t,)),
            QuditGate("F", (k,)),
        ]
    return seq


def mach_zehnder_sequence(theta: float, phi: float, k: int, l: int) -> list[QuditGate]:
    """MZ(theta, phi) = BS(pi/4) R_k(2 theta) BS(pi/4) R_k(phi)."""
    bs = beamsplitter_sequence(math.pi / 4, k, l)
    return rotation_sequence(phi, k) + bs + rotation_sequence(2 * theta, k) + bs


def gate_sequence(g: CvGate) -> list[QuditGate]:
    p, m = g.params, g.modes
    if g.kind == "Fourier":
        return [QuditGate("F", m)]
    if g.kind == "Rotation":
        return rotation_sequence(p[0], m[0])
    if g.kind == "Shear":
        return [QuditGate("P", m, p)]
    if g.kind == "Cubic":
        return [QuditGate("C", m, p)]
    if g.kind == "Squeeze":
        return squeeze_sequence(p[0], m[0])
    if g.kind == "DisplaceX":
        return [QuditGate("X", m, p)]
    if g.kind == "DisplaceZ":
        return [QuditGate("Z", m, p)]
    if g.kind == "Displace":
        # exp(i(r_p q - r_q p)) equals Z(r_p) X(r_q) up to a global phase
        return [QuditGate("X", m, (p[0],)), QuditGate("Z", m, (p[1],))]
    if g.kind == "CZ":
        return [QuditGate("CZ", m, p)]
    if g.kind == "BeamSplitter":
        return beamsplitter_sequence(p[0], *m)
    if g.kind == "MachZehnder":
        return mach_zehnder_sequence(p[0], p[1], *m)
    raise UnsupportedGate(g.kind)


def compile_circuit(circuit: CvCircuit, d: int) -> QuditCircuit:
    if d < 2:
        raise ValueError("d must be >= 2")
    qc = QuditCircuit(d, circuit.n)
    for i, g in enumerate(circuit.gates):
        seq = gate_sequence(g)
        if not seq:
            # identity rotations still need a provenance entry
            seq = [QuditGate("Z", (g.modes[0],), (0.0,))]
        for q in seq:
            qc.add(q, i)
    return qc


# ------------------------------------------------------------ evolution


def _full_phase(g: QuditGate, d: int, n: int) -> np.ndarray:
    ph = gate_diagonal(g.kind, g.params, d)
    if g.kind == "CZ":
        k, l = g.qudits
        ph = ph.reshape(d, d)
        if k > l:
            ph = ph.T
            k, l = l, k
        shape = [1] * n
        shape[k] = shape[l] = d
        return np.broadcast_to(ph.reshape(shape), (d,) * n).ravel()
    shape = [1] * n
    shape[g.qudits[0]] = d
    return np.broadcast_to(ph.reshape(shape), (d,) * n).ravel()


def _apply_dense(sig: np.ndarray, U: np.ndarray, qudits: tuple[int, ...], d: int, n: int) -> np.ndarray:
    t = sig.reshape((d,) * (2 * n))
    m = len(qudits)
    Ut = U.reshape((d,) * (2 * m))
    ax_in = list(range(m, 2 * m))
    t = np.moveaxis(np.tensordot(Ut, t, axes=(ax_in, list(qudits))), list(range(m)), list(qudits))
    cols = [n + q for q in qudits]
    t = np.moveaxis(np.tensordot(t, Ut.conj(), axes=(cols, ax_in)), list(range(2 * n - m, 2 * n)), cols)
    return t.reshape(sig.shape)


def apply(q: QuditDensity, qc: QuditCircuit) -> QuditDensity:
    if q.d != qc.d or q.n != qc.n:
        raise ValueError(f"dimension mismatch: state (d={q.d}, n={q.n}) vs circuit (d={qc.d}, n={qc.n})")
    d, n = q.d, q.n
    sig = q.sigma.copy()
    for g in qc.gates:
        if max(g.qudits) >= n:
            raise ValueError(f"{g} exceeds qudit count {n}")
        if g.diagonal:
            ph = _full_phase(g, d, n)
            sig *= ph[:, None] * ph.conj()[None, :]
        else:
            sig = _apply_dense(sig, build_gate(g.kind, g.params, d), g.qudits, d, n)
    return QuditDensity(d, n, sig)


def circuit_unitary(qc: QuditCircuit) -> np.ndarray:
    """Dense unitary of a small qudit circuit (for checks)."""
    D = qc.d ** qc.n
    U = np.eye(D, dtype=complex)
    for g in qc.gates:
        G = build_gate(g.kind, g.params, qc.d)
        U = _embed(G, g.qudits, qc.d, qc.n) @ U
    return U


def _embed(G: np.ndarray, qudits: tuple[int, ...], d: int, n: int) -> np.ndarray:
    D = d ** n
    cols = np.eye(D, dtype=complex)
    out = np.empty((D, D), complex)
    m = len(qudits)
    Gt = G.reshape((d,) * (2 * m))
    for j in range(D):
        v = cols[:, j].reshape((d,) * n)
        v = np.moveaxis(np.tensordot(Gt, v, axes=(list(range(m, 2 * m)), list(qudits))), list(range(m)), list(qudits))
        out[:, j] = v.ravel()
    return out


def pdf_dv(q: QuditDensity) -> OutcomeDistribution:
    d, n = q.d, q.n
    diag = np.clip(np.diag(q.sigma).real, 0, None).reshape((d,) * n)
    a_of_u = (np.arange(d) - d // 2) % d
    p = diag[np.ix_(*([a_of_u] * n))] if n > 1 else diag[a_of_u]
    return OutcomeDistribution(d, n, p / p.sum(), "D")

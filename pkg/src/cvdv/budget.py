"""Analytic error and energy budgets.

Per-gate SSD error bounds, worst-case energy propagation, the two model-gap
terms, the headline total and the dimension/qubit-count selection formulas.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

from .circuit import CvCircuit, CvGate, PASSIVE_KINDS, TemplateViolation, count_elementary

HEADLINE = 1207.0
MD_PROOF = 1171.0
MD_STATEMENT = 212.0
ZERO_ERROR_KINDS = frozenset({"Fourier", "DisplaceX", "DisplaceZ", "Displace"})


@dataclass
class GateBound:
    kind: str
    params: tuple[float, ...]
    E: float
    d: int
    bound: float


def gate_error_bound(gate: CvGate, E: float, d: int, cubic_constant: float = 4.0) -> GateBound:
    """Trace-distance bound for one gate acting on a state of energy E.

    ``cubic_constant`` is 4 for the detailed derivation, 1 for the headline statement.
    """
    k, p = gate.kind, gate.params
    if k in ZERO_ERROR_KINDS:
        b = 0.0
    elif k == "Shear":
        b = abs(p[0]) * (math.pi / d) * math.sqrt(E / 2)
    elif k == "Cubic":
        b = cubic_constant * abs(p[0]) * math.pi ** 1.5 * math.sqrt(E / d)
    elif k == "CZ":
        b = 2 * abs(p[0]) * (math.pi / d) ** 1.5 * math.sqrt(E)
    elif k == "Rotation":
        b = 52 * math.sqrt(E) / d
    elif k == "BeamSplitter":
        b = 56 * math.sqrt(E / d ** 3)
    elif k == "MachZehnder":
        b = 108 * math.sqrt(E) / d
    elif k == "Squeeze":
        b = 7 * math.exp(2 * abs(p[0])) * (math.pi / d) * math.sqrt(E / 2)
    else:
        raise ValueError(f"no bound for {k}")
    return GateBound(k, p, E, d, b)


def cubic_cap_bound(E_star: float, d: int) -> float:
    """Cubicity-free cap on the cubic-gate error."""
    return 179 * E_star ** 2 / math.sqrt(d)


def squeeze_cap_bound(E_star: float, d: int) -> float:
    return 32 * E_star ** 1.5 / d


def energy_bound_after(gate: CvGate, E: float, E_star: float | None = None) -> float:
    """Worst-case energy after ``gate`` for an input of energy at most E."""
    k, p = gate.kind, gate.params
    if k in PASSIVE_KINDS:
        return E
    if k == "Squeeze":
        return math.exp(2 * abs(p[0])) * E
    if k == "Shear":
        return (1 + abs(p[0])) ** 2 * E
    if k == "CZ":
        return (1 + abs(p[0])) ** 4 * E
    if k in ("DisplaceX", "DisplaceZ"):
        return (math.sqrt(E) + abs(p[0]) / math.sqrt(2)) ** 2
    if k == "Displace":
        return (math.sqrt(E) + math.hypot(*p) / math.sqrt(2)) ** 2
    if k == "Cubic":
        # admissible cubicities keep the output within E*
        if E_star is None:
            return math.inf
        if abs(p[0]) > 8 * E_star ** 1.5:
            return math.inf
        return E_star
    raise ValueError(f"no energy bound for {k}")


def worst_case_trace(circuit: CvCircuit) -> list[float]:
    """E_0 = n/2 followed by the propagated bound after every gate."""
    E = 0.5 * circuit.n
    out = [E]
    for g in circuit.gates:
        E = energy_bound_after(g, E, circuit.energy_budget)
        out.append(E)
    return out


def model_gap_rc(L: int, E_star: float, d: int, variant: str = "proof") -> float:
    factor = L + 1 if variant == "proof" else L
    return 2 * factor * math.sqrt(E_star / (d * math.pi))


def model_gap_md(K: int, n: int, E_star: float, d: int, variant: str = "proof", L: int | None = None) -> float:
    if variant == "proof":
        return MD_PROOF * E_star ** 2 * K * n ** 2 / math.sqrt(d)
    if L is None:
        raise ValueError("statement variant needs L")
    return MD_STATEMENT * E_star ** 2 * L / math.sqrt(d)


@dataclass
class TotalBound:
    headline: float
    eps_md: float
    eps_rc: float

    @property
    def decomposed(self) -> float:
        return self.eps_md + self.eps_rc


def headline_bound(K: int, n: int, E_star: float, d: int) -> float:
    return HEADLINE * E_star ** 2 * K * n ** 2 / math.sqrt(d)


def total_bound(K: int, n: int, E_star: float, d: int, L: int | None = None) -> TotalBound:
    if K < 1 or n < 1 or E_star < 0.5 or d < 2:
        raise ValueError("total_bound needs K, n >= 1, E* >= 1/2, d >= 2")
    if L is None:
        L = 10 * K * n ** 2
    if L > 10 * K * n ** 2:
        raise TemplateViolation(f"L={L} exceeds 10Kn^2={10 * K * n * n}")
    tb = TotalBound(
        headline_bound(K, n, E_star, d),
        model_gap_md(K, n, E_star, d),
        model_gap_rc(L, E_star, d),
    )
    assert tb.decomposed <= tb.headline * (1 + 1e-12), "decomposed sum exceeds headline constant"
    return tb


def choose_dimension(eps: float, K: int, n: int, E_star: float) -> int:
    """Smallest d with headline_bound(K, n, E*, d) <= eps, at least 2."""
    if not 0 < eps:
        raise ValueError("eps must be positive")
    x = HEADLINE * K * n ** 2 * E_star ** 2 / eps
    d = max(2, math.ceil(x * x))
    # guard against rounding in x*x
    while d > 2 and headline_bound(K, n, E_star, d - 1) <= eps:
        d -= 1
    while headline_bound(K, n, E_star, d) > eps:
        d += 1
    return d


def qubits_per_mode(eps: float, K: int, n: int, E_star: float) -> int:
    x = HEADLINE * K * n ** 2 * E_star ** 2 / eps
    return max(1, math.ceil(2 * math.log2(x)))


@dataclass
class BudgetReport:
    n: int
    K: int
    L: int
    E_star: float
    d: int
    k: int | None
    gates: list[GateBound] = field(default_factory=list)
    energy_trace: list[float] = field(default_factory=list)
    per_gate_sum: float = 0.0
    eps_rc: float = 0.0
    eps_rc_statement: float = 0.0
    eps_md: float | None = None
    eps_md_statement: float | None = None
    total: float | None = None
    template: bool = False

    def to_json(self) -> str:
        doc = asdict(self)
        return json.dumps(doc, default=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["index", "kind", "params", "E_worst", "bound"])
        for i, g in enumerate(self.gates):
            w.writerow([i, g.kind, " ".join(repr(x) for x in g.params), repr(g.E), repr(g.bound)])
        return buf.getvalue()


def budget_report(circuit: CvCircuit, d: int, cubic_constant: float = 4.0) -> BudgetReport:
    """Per-gate bounds along the worst-case energy trace plus model-gap terms.

    Bounds use min(E_worst, E*): the energy check in the simulator guarantees
    E_j <= E* for admissible circuits.
    """
    cnt = count_elementary(circuit)
    Es = circuit.energy_budget
    trace = worst_case_trace(circuit)
    gates = [
        gate_error_bound(g, min(E, Es), d, cubic_constant) for g, E in zip(circuit.gates, trace[:-1])
    ]
    k = int(math.log2(d)) if d & (d - 1) == 0 else None
    rep = BudgetReport(
        n=circuit.n,
        K=cnt.K,
        L=cnt.L,
        E_star=Es,
        d=d,
        k=k,
        gates=gates,
        energy_trace=trace,
        per_gate_sum=sum(g.bound for g in gates),
        eps_rc=model_gap_rc(cnt.L, Es, d),
        eps_rc_statement=model_gap_rc(cnt.L, Es, d, "statement"),
        template=circuit.template_K is not None,
    )
    if cnt.K >= 1:
        rep.eps_md = model_gap_md(cnt.K, circuit.n, Es, d)
        rep.eps_md_statement = model_gap_md(cnt.K, circuit.n, Es, d, "statement", cnt.L)
        if rep.template and not cnt.template_violation:
            rep.total = headline_bound(cnt.K, circuit.n, Es, d)
    return rep

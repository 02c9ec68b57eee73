"""CV gate set, circuit container, JSON schema and the K-round template."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Sequence

# kind -> (JSON type string, parameter names, number of modes)
GATE_TABLE: dict[str, tuple[str, tuple[str, ...], int]] = {
    "Fourier": ("F", (), 1),
    "Rotation": ("R", ("theta",), 1),
    "Shear": ("P", ("s",), 1),
    "Cubic": ("C3", ("gamma",), 1),
    "Squeeze": ("S", ("r",), 1),
    "DisplaceX": ("DX", ("s",), 1),
    "DisplaceZ": ("DZ", ("s",), 1),
    "Displace": ("D", ("r_q", "r_p"), 1),
    "CZ": ("CZ", ("s",), 2),
    "BeamSplitter": ("BS", ("theta",), 2),
    "MachZehnder": ("MZ", ("theta", "phi"), 2),
}
TYPE_TO_KIND = {v[0]: k for k, v in GATE_TABLE.items()}
PASSIVE_KINDS = frozenset({"Fourier", "Rotation", "BeamSplitter", "MachZehnder"})


class CircuitError(ValueError):
    """Invalid circuit structure or document."""


class CircuitParseError(CircuitError):
    def __init__(self, message: str, position: int | None = None):
        self.position = position
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)


class UnknownGateKind(CircuitError):
    pass


class ModeIndexError(CircuitError):
    pass


class TemplateViolation(CircuitError):
    pass


@dataclass(frozen=True)
class CvGate:
    kind: str
    modes: tuple[int, ...]
    params: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in GATE_TABLE:
            raise UnknownGateKind(f"unknown gate kind {self.kind!r}")
        _, names, arity = GATE_TABLE[self.kind]
        object.__setattr__(self, "modes", tuple(int(m) for m in self.modes))
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if len(self.modes) != arity:
            raise CircuitError(f"{self.kind} acts on {arity} mode(s), got {self.modes}")
        if arity == 2 and self.modes[0] == self.modes[1]:
            raise CircuitError("modes must be distinct")
        if any(m < 0 for m in self.modes):
            raise ModeIndexError(f"negative mode index in {self.modes}")
        if len(self.params) != len(names):
            raise CircuitError(f"{self.kind} expects parameters {names}, got {self.params}")
        if not all(math.isfinite(p) for p in self.params):
            raise CircuitError(f"{self.kind} parameters must be finite, got {self.params}")

    @property
    def param_dict(self) -> dict[str, float]:
        return dict(zip(GATE_TABLE[self.kind][1], self.params))

    def __str__(self) -> str:
        args = ", ".join(f"{k}={v:g}" for k, v in self.param_dict.items())
        where = ",".join(map(str, self.modes))
        return f"{self.kind}({args})@{where}"


# Convenience constructors
def Fourier(k: int) -> CvGate:
    return CvGate("Fourier", (k,))


def Rotation(theta: float, k: int) -> CvGate:
    return CvGate("Rotation", (k,), (theta,))


def Shear(s: float, k: int) -> CvGate:
    return CvGate("Shear", (k,), (s,))


def Cubic(gamma: float, k: int) -> CvGate:
    return CvGate("Cubic", (k,), (gamma,))


def Squeeze(r: float, k: int) -> CvGate:
    return CvGate("Squeeze", (k,), (r,))


def DisplaceX(s: float, k: int) -> CvGate:
    return CvGate("DisplaceX", (k,), (s,))


def DisplaceZ(s: float, k: int) -> CvGate:
    return CvGate("DisplaceZ", (k,), (s,))


def Displace(r_q: float, r_p: float, k: int) -> CvGate:
    return CvGate("Displace", (k,), (r_q, r_p))


def CZ(s: float, k: int, l: int) -> CvGate:
    return CvGate("CZ", (k, l), (s,))


def BeamSplitter(theta: float, k: int, l: int) -> CvGate:
    return CvGate("BeamSplitter", (k, l), (theta,))


def MachZehnder(theta: float, phi: float, k: int, l: int) -> CvGate:
    return CvGate("MachZehnder", (k, l), (theta, phi))


@dataclass(frozen=True)
class CvCircuit:
    n: int
    gates: tuple[CvGate, ...] = ()
    energy_budget: float = 0.5
    template_K: int | None = None  # set when produced by expand_template

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        if self.n < 1:
            raise CircuitError("mode count must be >= 1")
        if not (math.isfinite(self.energy_budget) and self.energy_budget >= 0.5):
            raise CircuitError(f"energy budget {self.energy_budget} below single-mode vacuum energy 0.5")
        for g in self.gates:
            if max(g.modes) >= self.n:
                raise ModeIndexError(f"{g} addresses mode >= n={self.n}")

    def __len__(self) -> int:
        return len(self.gates)


@dataclass(frozen=True)
class PassiveBlock:
    """One V_j: Clements-mesh MZ angles, per-mode rotations and displacements."""

    mz: tuple[tuple[float, float], ...]
    rotations: tuple[float, ...]
    displacements: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class TemplateSpec:
    K: int
    rounds: tuple[PassiveBlock, ...]
    gammas: tuple[float, ...]
    squeeze: tuple[float, ...]


@dataclass
class GateCount:
    L: int
    K: int
    per_kind: dict[str, int] = field(default_factory=dict)
    template_violation: bool = False


@dataclass
class ValidationReport:
    energy_budget: float
    violations: list[tuple[int, str]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


def clements_pairs(n: int) -> list[tuple[int, int]]:
    """Mode pairs of the rectangular mesh: n layers alternating even/odd pairs."""
    pairs = []
    for layer in range(n):
        for i in range(layer % 2, n - 1, 2):
            pairs.append((i, i + 1))
    return pairs


def expand_template(spec: TemplateSpec, n: int, energy_budget: float | None = None) -> CvCircuit:
    K = spec.K
    if K < 0 or len(spec.rounds) != K + 2 or len(spec.gammas) != K or len(spec.squeeze) != n:
        raise CircuitError(
            f"template arrays inconsistent with K={K}, n={n}: "
            f"{len(spec.rounds)} rounds, {len(spec.gammas)} gammas, {len(spec.squeeze)} squeezers"
        )
    pairs = clements_pairs(n)
    for blk in spec.rounds:
        if len(blk.mz) != len(pairs) or len(blk.rotations) != n or len(blk.displacements) != n:
            raise CircuitError(f"passive block dimensions do not match n={n}")

    def block(blk: PassiveBlock) -> list[CvGate]:
        out = [MachZehnder(t, p, k, l) for (t, p), (k, l) in zip(blk.mz, pairs)]
        out += [Rotation(th, j) for j, th in enumerate(blk.rotations)]
        out += [Displace(rq, rp, j) for j, (rq, rp) in enumerate(blk.displacements)]
        return out

    gates: list[CvGate] = []
    for j in range(K):
        gates += block(spec.rounds[j])
        gates.append(Cubic(spec.gammas[j], 0))
    gates += block(spec.rounds[K])
    gates += [Squeeze(r, j) for j, r in enumerate(spec.squeeze)]
    gates += block(spec.rounds[K + 1])
    e = 0.5 * n if energy_budget is None else energy_budget
    return CvCircuit(n, tuple(gates), e, template_K=K)


def template_length(K: int, n: int) -> int:
    return (K + 2) * (n * (n - 1) // 2 + 2 * n) + K + n


def count_elementary(circuit: CvCircuit) -> GateCount:
    per_kind = dict(Counter(g.kind for g in circuit.gates))
    L = len(circuit.gates)
    K = per_kind.get("Cubic", 0)
    violation = circuit.template_K is not None and L > 10 * max(K, 1) * circuit.n ** 2
    return GateCount(L, K, per_kind, violation)


def parameter_cap(gate: CvGate, energy_budget: float) -> tuple[float, float] | None:
    """(value, cap) for gates with an energy-derived limit, else None.

    Caps assume the gate acts on vacuum inputs of its support and that the
    worst-case energy growth may not exceed E*.
    """
    E = energy_budget
    p = gate.params
    if gate.kind == "Squeeze":
        return math.exp(abs(p[0])), math.sqrt(2 * E)
    if gate.kind == "Cubic":
        return abs(p[0]), 8 * E ** 1.5
    if gate.kind == "Shear":
        return (1 + abs(p[0])) ** 2 * 0.5, E
    if gate.kind == "CZ":
        return (1 + abs(p[0])) ** 4 * 1.0, E
    return None


def validate_parameters(circuit: CvCircuit) -> ValidationReport:
    rep = ValidationReport(circuit.energy_budget)
    for i, g in enumerate(circuit.gates):
        cap = parameter_cap(g, circuit.energy_budget)
        if cap is not None and cap[0] > cap[1] * (1 + 1e-12):
            rep.violations.append((i, f"{g}: {cap[0]:.6g} exceeds cap {cap[1]:.6g}"))
    return rep


# ---------------------------------------------------------------- JSON


def gate_to_json(g: CvGate) -> dict[str, Any]:
    t, names, arity = GATE_TABLE[g.kind]
    obj: dict[str, Any] = {"type": t}
    if arity == 1:
        obj["mode"] = g.modes[0]
    else:
        obj["modes"] = list(g.modes)
    obj.update(zip(names, g.params))
    return obj


def gate_from_json(obj: dict[str, Any], n: int) -> CvGate:
    if not isinstance(obj, dict) or "type" not in obj:
        raise CircuitParseError("gate entry must be an object with a 'type' field")
    t = obj["type"]
    if t not in TYPE_TO_KIND:
        raise UnknownGateKind(f"unknown gate type {t!r}")
    kind = TYPE_TO_KIND[t]
    _, names, arity = GATE_TABLE[kind]
    if arity == 1:
        modes = obj.get("mode", obj.get("modes"))
        modes = [modes] if isinstance(modes, int) else modes
    else:
        modes = obj.get("modes")
    if not isinstance(modes, list) or not all(isinstance(m, int) for m in modes):
        raise CircuitParseError(f"gate {t}: bad mode specification {modes!r}")
    for m in modes:
        if not 0 <= m < n:
            raise ModeIndexError(f"gate {t}: mode {m} out of range for n={n}")
    try:
        params = [float(obj[name]) for name in names]
    except KeyError as e:
        raise CircuitParseError(f"gate {t}: missing parameter {e.args[0]!r}") from None
    return CvGate(kind, tuple(modes), tuple(params))


def template_from_json(obj: dict[str, Any], n: int) -> TemplateSpec:
    try:
        K = int(obj["K"])
        rounds = tuple(
            PassiveBlock(
                tuple(tuple(map(float, a)) for a in r.get("mz", [])),
                tuple(map(float, r["rotations"])),
                tuple(tuple(map(float, v)) for v in r["displacements"]),
            )
            for r in obj["rounds"]
        )
        gammas = tuple(map(float, obj["gammas"]))
        squeeze = tuple(map(float, obj["squeeze"]))
    except (KeyError, TypeError, ValueError) as e:
        raise CircuitParseError(f"malformed template: {e}") from None
    return TemplateSpec(K, rounds, gammas, squeeze)


def template_to_json(spec: TemplateSpec) -> dict[str, Any]:
    return {
        "K": spec.K,
        "rounds": [
            {
                "mz": [list(a) for a in r.mz],
                "rotations": list(r.rotations),
                "displacements": [list(v) for v in r.displacements],
            }
            for r in spec.rounds
        ],
        "gammas": list(spec.gammas),
        "squeeze": list(spec.squeeze),
    }


def parse_circuit(text: str) -> CvCircuit:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise CircuitParseError(f"syntax error: {e.msg}", e.pos) from None
    if not isinstance(doc, dict):
        raise CircuitParseError("top-level document must be an object", 0)
    try:
        n = int(doc["modes"])
    except (KeyError, TypeError, ValueError):
        raise CircuitParseError("missing or invalid 'modes'") from None
    budget = float(doc.get("energy_budget", 0.5 * n))
    if "template" in doc:
        return expand_template(template_from_json(doc["template"], n), n, budget)
    gates = doc.get("gates")
    if not isinstance(gates, list):
        raise CircuitParseError("'gates' must be a list")
    tk = doc.get("template_K")
    return CvCircuit(n, tuple(gate_from_json(g, n) for g in gates), budget,
                     template_K=None if tk is None else int(tk))


def serialize_circuit(circuit: CvCircuit) -> str:
    doc = {
        "modes": circuit.n,
        "energy_budget": circuit.energy_budget,
        "gates": [gate_to_json(g) for g in circuit.gates],
    }
    if circuit.template_K is not None:
        doc["template_K"] = circuit.template_K
    return json.dumps(doc)


def circuit_from_gates(n: int, gates: Sequence[CvGate], energy_budget: float) -> CvCircuit:
    return CvCircuit(n, tuple(gates), energy_budget)

"""End-to-end comparison of the R, C, M and D measurement distributions."""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .budget import budget_report, model_gap_rc
from .circuit import CvCircuit, count_elementary, serialize_circuit, validate_parameters
from .dv import QuditGate, apply, compile_circuit, pdf_dv
from .fock import (
    OutcomeDistribution,
    initial_vacuum,
    pdf_cutoff,
    pdf_modular,
    pdf_realistic,
    project_window,
    simulate_model,
)
from .ssd import QuadratureConfig, sanitize, ssd

NUMERICAL_FLOOR = 5e-6
MAX_MODES, MAX_D, MAX_NF = 2, 64, 200
REPORT_SCHEMA = "cvdv.compare/1"


class GridMismatch(ValueError):
    pass


class ResourceCapExceeded(ValueError):
    pass


def tvd(p: OutcomeDistribution | np.ndarray, q: OutcomeDistribution | np.ndarray) -> float:
    """Half the L1 distance on the shared grid (overflow mass excluded)."""
    if isinstance(p, OutcomeDistribution) and isinstance(q, OutcomeDistribution):
        if (p.d, p.n) != (q.d, q.n):
            raise GridMismatch(f"grids differ: d={p.d},n={p.n} vs d={q.d},n={q.n}")
        a, b = p.flat(), q.flat()
    else:
        a, b = np.ravel(p), np.ravel(q)
        if a.shape != b.shape:
            raise GridMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    return 0.5 * float(np.abs(a - b).sum())


@dataclass
class ExperimentConfig:
    circuit: CvCircuit
    d: int
    nf: int = 40
    quad: QuadratureConfig = field(default_factory=QuadratureConfig)
    models: tuple[str, ...] = ("R", "C", "M", "D")
    deterministic: bool = True
    unsafe_large: bool = False
    corrupt_dv: bool = False  # test hook: perturb the compiled qudit circuit

    def validate(self) -> None:
        if len(set(self.models)) < 2 or not set(self.models) <= {"R", "C", "M", "D"}:
            raise ValueError("select at least two of the models R, C, M, D")
        if self.d < 2:
            raise ValueError("d must be >= 2")
        if not self.unsafe_large:
            if self.circuit.n > MAX_MODES or self.d > MAX_D or self.nf > MAX_NF:
                raise ResourceCapExceeded(
                    f"n={self.circuit.n}, d={self.d}, N_F={self.nf} exceed desk caps "
                    f"(n<={MAX_MODES}, d<={MAX_D}, N_F<={MAX_NF}); pass unsafe_large to override"
                )


@dataclass
class PairResult:
    pair: str
    tvd: float
    bound: float
    passed: bool


@dataclass
class CompareReport:
    config: dict[str, Any]
    pairs: list[PairResult] = field(default_factory=list)
    energy_trace: list[float] = field(default_factory=list)
    energy_worst: list[float] = field(default_factory=list)
    survival: list[float] = field(default_factory=list)
    distributions: dict[str, list[float]] = field(default_factory=dict)
    diagnostics: dict[str, Any] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    failed_stage: str | None = None
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.failed_stage is None and all(p.passed for p in self.pairs)

    def to_dict(self, include_timings: bool = True) -> dict[str, Any]:
        doc = {
            "schema": REPORT_SCHEMA,
            "config": self.config,
            "passed": self.passed,
            "pairs": [p.__dict__ for p in self.pairs],
            "energy_trace": self.energy_trace,
            "energy_worst": self.energy_worst,
            "survival": self.survival,
            "distributions": self.distributions,
            "diagnostics": self.diagnostics,
            "failed_stage": self.failed_stage,
            "error": self.error,
        }
        if include_timings:
            doc["timings"] = self.timings
        return doc

    def to_json(self, include_timings: bool = True) -> str:
        return dumps(self.to_dict(include_timings))


def dumps(obj: Any) -> str:
    """JSON text with every float written to 17 significant digits."""
    if isinstance(obj, bool) or obj is None:
        return {True: "true", False: "false", None: "null"}[obj]
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return '"NaN"'
        if math.isinf(x):
            return '"Infinity"' if x > 0 else '"-Infinity"'
        return format(x, ".17g")
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{dumps(str(k))}: {dumps(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(dumps(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj)}")


def _config_echo(cfg: ExperimentConfig) -> dict[str, Any]:
    return {
        "circuit": json.loads(serialize_circuit(cfg.circuit)),
        "d": cfg.d,
        "nf": cfg.nf,
        "quadrature": {"M": cfg.quad.M, "check_refinement": cfg.quad.check_refinement, "tol": cfg.quad.tol},
        "models": list(cfg.models),
        "deterministic": cfg.deterministic,
        "corrupt_dv": cfg.corrupt_dv,
    }


def run_compare(cfg: ExperimentConfig) -> CompareReport:
    cfg.validate()
    circ, d = cfg.circuit, cfg.d
    rep = CompareReport(_config_echo(cfg))
    val = validate_parameters(circ)
    if not val.passed:
        rep.failed_stage, rep.error = "validate", "; ".join(m for _, m in val.violations)
        return rep
    budget = budget_report(circ, d)
    rep.energy_worst = budget.energy_trace
    cnt = count_elementary(circ)
    dists: dict[str, OutcomeDistribution] = {}
    stage = "R"
    try:
        if "R" in cfg.models:
            t0 = time.perf_counter()
            st_r, tr_r = simulate_model(circ, d, "R", cfg.nf)
            dists["R"] = pdf_realistic(st_r, d)
            rep.energy_trace = tr_r.energies
            rep.diagnostics["nf_R"] = tr_r.nf
            rep.diagnostics["overflow_R"] = dists["R"].overflow
            rep.timings["R"] = time.perf_counter() - t0
        stage = "C"
        if "C" in cfg.models or "M" in cfg.models:
            t0 = time.perf_counter()
            st_c, tr_c = simulate_model(circ, d, "C", cfg.nf)
            rep.survival = tr_c.survival
            rep.diagnostics["nf_C"] = tr_c.nf
            if not rep.energy_trace:
                rep.energy_trace = tr_c.energies
            if "C" in cfg.models:
                dists["C"] = pdf_cutoff(st_c, d)
            stage = "M"
            if "M" in cfg.models:
                dists["M"] = pdf_modular(st_c, d)
            rep.timings["C"] = time.perf_counter() - t0
        stage = "D"
        if "D" in cfg.models:
            t0 = time.perf_counter()
            init, _ = project_window(initial_vacuum(circ.n, cfg.nf), d)
            sigma, diag = ssd(init, d, cfg.quad)
            sigma = sanitize(sigma)
            qc = compile_circuit(circ, d)
            if cfg.corrupt_dv:
                qc.add(QuditGate("X", (0,), (0.9 * math.sqrt(2 * math.pi / d) * d / 2,)), -1)
            dists["D"] = pdf_dv(apply(sigma, qc))
            rep.diagnostics["ssd"] = diag.__dict__
            rep.diagnostics["sanitize_correction"] = sigma.correction
            rep.diagnostics["qudit_gates"] = len(qc.gates)
            rep.timings["D"] = time.perf_counter() - t0
    except Exception as e:  # partial report with the failing stage marked
        rep.failed_stage, rep.error = stage, f"{type(e).__name__}: {e}"
    rep.distributions = {k: v.flat().tolist() for k, v in dists.items()}

    bounds = {
        ("R", "C"): model_gap_rc(cnt.L, circ.energy_budget, d),
        ("C", "M"): 0.0,
        ("M", "D"): budget.per_gate_sum,
    }
    for (a, b), bound in bounds.items():
        if a in dists and b in dists:
            t = tvd(dists[a], dists[b])
            rep.pairs.append(PairResult(f"{a}-{b}", t, bound, t <= bound + NUMERICAL_FLOOR))
    rep.diagnostics["L"] = cnt.L
    rep.diagnostics["K"] = cnt.K
    rep.diagnostics["per_gate_bound_sum"] = budget.per_gate_sum
    return rep

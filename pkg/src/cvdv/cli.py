"""Command-line entry point: compile, budget, simulate, compare, lower, selftest."""

from __future__ import annotations

import os

# thread count for BLAS has to be fixed before numpy loads
_threads = os.environ.get("CVDV_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse  # noqa: E402
import csv  # noqa: E402
import json  # noqa: E402
import math  # noqa: E402
import sys  # noqa: E402
from pathlib import Path  # noqa: E402

from .budget import budget_report, choose_dimension, qubits_per_mode, total_bound  # noqa: E402
from .circuit import CircuitError, CvCircuit, parse_circuit  # noqa: E402
from .dv import QuditCircuit, compile_circuit  # noqa: E402
from .fock import pdf_cutoff, pdf_modular, pdf_realistic, simulate_model  # noqa: E402
from .harness import ExperimentConfig, dumps, run_compare  # noqa: E402
from .qubits import lower  # noqa: E402
from .ssd import QuadratureConfig  # noqa: E402

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE = 0, 1, 2

SCHEMA_HELP = """\
circuit document (JSON):
  {"modes": int, "energy_budget": float,
   "gates": [{"type": T, "mode": k | "modes": [k, l], <params>}, ...]}
  T and params: F; R theta; P s; C3 gamma; S r; DX s; DZ s; D r_q r_p;
                CZ s; BS theta; MZ theta phi
template form:
  {"modes": int, "energy_budget": float,
   "template": {"K": int, "rounds": [{"mz": [[theta, phi], ...],
                "rotations": [...], "displacements": [[r_q, r_p], ...]}, ...],
                "gammas": [...], "squeeze": [...]}}
"""


class UsageError(Exception):
    pass


def _load_circuit(path: str) -> CvCircuit:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise UsageError(f"cannot read circuit file: {e}") from e
    try:
        return parse_circuit(text)
    except CircuitError as e:
        raise UsageError(f"invalid circuit document: {e}") from e


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _is_pow2(d: int) -> bool:
    return d >= 2 and d & (d - 1) == 0


def cmd_compile(args) -> int:
    qc = compile_circuit(_load_circuit(args.circuit), args.d)
    _emit(qc.to_json(), args.out)
    return EXIT_OK


def cmd_budget(args) -> int:
    if args.circuit:
        if args.d is None:
            raise UsageError("budget with --circuit needs --d")
        rep = budget_report(_load_circuit(args.circuit), args.d, cubic_constant=args.cubic_constant)
        if args.csv:
            Path(args.csv).write_text(rep.to_csv())
        _emit(rep.to_json(), args.out)
        return EXIT_OK
    if None in (args.K, args.n, args.estar):
        raise UsageError("budget needs --circuit and --d, or --K --n --estar with --epsilon or --d")
    if args.epsilon is not None:
        d = choose_dimension(args.epsilon, args.K, args.n, args.estar)
        k = qubits_per_mode(args.epsilon, args.K, args.n, args.estar)
        doc = {"d": d, "k": k, "epsilon": args.epsilon}
    elif args.d is not None:
        d = args.d
        doc = {"d": d}
    else:
        raise UsageError("budget needs --epsilon or --d")
    tb = total_bound(args.K, args.n, args.estar, d)
    doc.update(headline=tb.headline, eps_md=tb.eps_md, eps_rc=tb.eps_rc)
    _emit(json.dumps(doc), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    circ = _load_circuit(args.circuit)
    model = "C" if args.model in ("C", "M") else "R"
    state, trace = simulate_model(circ, args.d, model, args.nf)
    pdf = {"R": pdf_realistic, "C": pdf_cutoff, "M": pdf_modular}[args.model](state, args.d)
    doc = {
        "model": args.model,
        "d": pdf.d,
        "n": pdf.n,
        "grid": pdf.grid.tolist(),
        "probs": pdf.flat().tolist(),
        "overflow": pdf.overflow,
        "energy_trace": trace.energies,
        "nf": trace.nf,
    }
    if args.pdf_csv:
        _write_pdf_csv(args.pdf_csv, {args.model: pdf.flat()}, pdf.d, pdf.n)
    _emit(dumps(doc), args.out)
    return EXIT_OK


def _write_pdf_csv(path: str, dists: dict, d: int, n: int) -> None:
    import numpy as np

    g = np.arange(d) - d // 2
    cells = np.array(np.meshgrid(*([g] * n), indexing="ij")).reshape(n, -1).T
    names = sorted(dists)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i}" for i in range(n)] + [f"p_{m}" for m in names])
        for idx, cell in enumerate(cells):
            w.writerow(list(cell) + [format(float(dists[m][idx]), ".17g") for m in names])


def cmd_compare(args) -> int:
    circ = _load_circuit(args.circuit)
    d = args.d
    if d is None:
        if args.epsilon is None or circ.template_K is None:
            raise UsageError("compare needs --d, or --epsilon with a template circuit")
        d = choose_dimension(args.epsilon, circ.template_K, circ.n, circ.energy_budget)
    models = tuple(m.strip() for m in args.models.split(","))
    cfg = ExperimentConfig(
        circ,
        d,
        nf=args.nf,
        quad=QuadratureConfig(M=args.quad_m),
        models=models,
        deterministic=args.deterministic,
        unsafe_large=args.unsafe_large,
        corrupt_dv=args.corrupt_dv,
    )
    try:
        cfg.validate()
    except ValueError as e:
        raise UsageError(str(e)) from e
    rep = run_compare(cfg)
    _emit(rep.to_json(include_timings=not args.deterministic), args.out)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["pair", "tvd", "bound", "passed"])
            for p in rep.pairs:
                w.writerow([p.pair, format(p.tvd, ".17g"), format(p.bound, ".17g"), p.passed])
    if args.pdf_csv and rep.distributions:
        _write_pdf_csv(args.pdf_csv, rep.distributions, d, circ.n)
    return EXIT_OK if rep.passed else EXIT_VIOLATION


def cmd_lower(args) -> int:
    if args.qudit_circuit:
        qc = QuditCircuit.from_json(Path(args.qudit_circuit).read_text())
    elif args.circuit and args.d:
        qc = compile_circuit(_load_circuit(args.circuit), args.d)
    else:
        raise UsageError("lower needs --qudit-circuit, or --circuit with --d")
    if not _is_pow2(qc.d):
        raise UsageError(f"d={qc.d} is not a power of two")
    qbc, rep = lower(qc, int(math.log2(qc.d)))
    if args.qasm:
        Path(args.qasm).write_text(qbc.to_qasm())
    doc = {"circuit": json.loads(qbc.to_json()), "report": {"k": rep.k, "per_gate": rep.per_gate, "totals": rep.totals}}
    _emit(json.dumps(doc), args.out)
    return EXIT_OK


def cmd_selftest(args) -> int:
    """Run the acceptance suite when the source tree is present, otherwise a quick smoke check."""
    tests = Path(args.tests) if args.tests else Path(__file__).resolve().parents[2] / "tests" / "test_acceptance.py"
    if tests.exists():
        import pytest

        return EXIT_OK if pytest.main(["-q", "-s", str(tests)]) == 0 else EXIT_VIOLATION
    return _smoke()


def _smoke() -> int:
    from .circuit import Fourier, Shear
    from .dv import QuditGate
    from .qubits import equivalence_check, lower_gate, QubitCircuit

    ok = True
    rep = run_compare(ExperimentConfig(CvCircuit(1, (Shear(1.0, 0), Fourier(0)), 2.0), 16, nf=60))
    ok &= rep.passed
    print(f"{'PASS' if rep.passed else 'FAIL'} pipeline shear+fourier d=16")
    ok_f = qubits_per_mode(0.01, 1, 1, 1.0) == 34
    print(f"{'PASS' if ok_f else 'FAIL'} qubits_per_mode(0.01,1,1,1) = 34")
    ok &= ok_f
    g = QuditGate("F", (0,))
    gs, _ = lower_gate(g, 8, 3)
    res = equivalence_check(QubitCircuit(3, gs), g, 8)
    print(f"{'PASS' if res < 1e-10 else 'FAIL'} QFT lowering k=3 residual {res:.2e}")
    ok &= res < 1e-10
    return EXIT_OK if ok else EXIT_VIOLATION


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="cvdv",
        description="CV-to-qudit transpiler with a Fock-space verification harness.",
        epilog=SCHEMA_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("compile", help="CV circuit -> qudit circuit JSON")
    p.add_argument("--circuit", required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_compile)

    p = sub.add_parser("budget", help="error budget for a circuit, or d and k for a target epsilon")
    p.add_argument("--circuit")
    p.add_argument("--d", type=int)
    p.add_argument("--K", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--estar", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--cubic-constant", type=float, default=4.0)
    p.add_argument("--csv")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_budget)

    p = sub.add_parser("simulate", help="measurement distribution of one CV model")
    p.add_argument("--circuit", required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--nf", type=int, default=40)
    p.add_argument("--model", choices=("R", "C", "M"), default="R")
    p.add_argument("--pdf-csv")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("compare", help="run the R/C/M/D comparison and check bounds")
    p.add_argument("--circuit", required=True)
    p.add_argument("--d", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--nf", type=int, default=40)
    p.add_argument("--models", default="R,C,M,D")
    p.add_argument("--quad-m", type=int)
    p.add_argument("--deterministic", action="store_true", help="omit wall-clock timings from the report")
    p.add_argument("--unsafe-large", action="store_true")
    p.add_argument("--corrupt-dv", action="store_true", help=argparse.SUPPRESS)
    p.add_argument("--csv")
    p.add_argument("--pdf-csv")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("lower", help="qudit circuit -> qubit circuit (d = 2^k)")
    p.add_argument("--qudit-circuit")
    p.add_argument("--circuit")
    p.add_argument("--d", type=int)
    p.add_argument("--qasm")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_lower)

    p = sub.add_parser("selftest", help="run the acceptance suite")
    p.add_argument("--tests")
    p.set_defaults(fn=cmd_selftest)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    try:
        return args.fn(args)
    except UsageError as e:
        print(f"usage error: {e}\n\n{SCHEMA_HELP}", file=sys.stderr)
        return EXIT_USAGE
    except (RuntimeError, ValueError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_VIOLATION


if __name__ == "__main__":
    sys.exit(main())

"""Truncated Fock-basis simulator used as the brute-force CV oracle.

States are density matrices on ``N_F**n`` levels, mode 0 most significant.
A state may carry a position window (``window=d``), meaning the represented
operator is W rho W with W the exact indicator of the centered cell
``[-(d//2 + 1/2) l, (ceil(d/2) - 1/2) l)`` per mode.  Position-diagonal gates
commute with W and keep the window; other gates first compress the state back
onto the Fock span.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache

import numpy as np

from .circuit import CvCircuit, CvGate, PASSIVE_KINDS

TAU_LEAK = 1e-8
TAU_LEAK_CUT = 1e-6  # gates acting on Lambda-cut states (model C)
NF_CAP_SINGLE = 256
NF_CAP_TWO = 64
DIAGONAL_KINDS = frozenset({"Shear", "Cubic", "DisplaceZ", "CZ"})


class LeakageExceeded(RuntimeError):
    def __init__(self, population: float, nf: int):
        self.population = population
        self.nf = nf
        super().__init__(f"population {population:.3e} in top Fock levels at N_F={nf}")


class EnergyBudgetExceeded(RuntimeError):
    pass


class DegenerateNormalization(RuntimeError):
    pass


class NonFinite(RuntimeError):
    pass


def lattice_spacing(d: int) -> float:
    return math.sqrt(2 * math.pi / d)


def centered_range(d: int) -> np.ndarray:
    """Bin labels J of the centered cell, ordered by grid index u."""
    return np.arange(d) - d // 2


def window_bounds(d: int) -> tuple[float, float]:
    ell = lattice_spacing(d)
    return -(d // 2 + 0.5) * ell, ((d + 1) // 2 - 0.5) * ell


def hermite_functions(x: np.ndarray, N: int) -> np.ndarray:
    """psi_0..psi_{N-1} at points x, shape x.shape + (N,), via the stable recurrence."""
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (N,))
    out[..., 0] = np.pi ** -0.25 * np.exp(-0.5 * x * x)
    if N > 1:
        out[..., 1] = math.sqrt(2.0) * x * out[..., 0]
    for k in range(1, N - 1):
        out[..., k + 1] = math.sqrt(2.0 / (k + 1)) * x * out[..., k] - math.sqrt(k / (k + 1)) * out[..., k - 1]
    return out


@lru_cache(maxsize=64)
def _gauss_legendre(m: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(m)


def nodes_per_bin(ell: float, N: int) -> int:
    # at least 16; more when a bin spans many oscillations of psi_N
    return max(16, int(math.ceil(ell * math.sqrt(2 * N))) + 12)


def bin_nodes(J: np.ndarray, ell: float, G: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights on bins (ell*J - ell/2, ell*J + ell/2); shapes (len(J), G)."""
    t, w = _gauss_legendre(G)
    x = ell * (np.asarray(J, float)[:, None] + 0.5 * t[None, :])
    return x, np.broadcast_to(0.5 * ell * w, x.shape)


class FockRep:
    """Cached single-mode operators on N levels, plus DVR eigenbases."""

    def __init__(self, N: int):
        if N < 2:
            raise ValueError("N_F must be >= 2")
        self.N = N
        self.a = np.diag(np.sqrt(np.arange(1, N, dtype=float)), 1).astype(complex)
        self.ad = self.a.conj().T
        self.q = (self.a + self.ad) / math.sqrt(2)
        self.p = 1j * (self.ad - self.a) / math.sqrt(2)
        self.n = np.arange(N, dtype=float)

    @cached_property
    def q_eig(self) -> tuple[np.ndarray, np.ndarray]:
        # truncated q is real symmetric tridiagonal; eigenvectors real
        x, V = np.linalg.eigh(self.q.real)
        return x, V

    @cached_property
    def p_eig(self) -> tuple[np.ndarray, np.ndarray]:
        return np.linalg.eigh(self.p)

    @cached_property
    def squeeze_eig(self) -> tuple[np.ndarray, np.ndarray]:
        K = 1j * (self.ad @ self.ad - self.a @ self.a)
        return np.linalg.eigh(K)

    @cached_property
    def bs_eig(self) -> tuple[np.ndarray, np.ndarray]:
        G = np.kron(self.p, self.q) - np.kron(self.q, self.p)
        return np.linalg.eigh(G)

    def func_of_q(self, f) -> np.ndarray:
        x, V = self.q_eig
        return (V * f(x)) @ V.T

    def expi(self, eig, theta: float) -> np.ndarray:
        lam, V = eig
        return (V * np.exp(1j * theta * lam)) @ V.conj().T

    def commutator_residual(self) -> float:
        c = self.q @ self.p - self.p @ self.q
        m = max(1, self.N - max(2, self.N // 10))
        return float(np.abs(c[:m, :m] - 1j * np.eye(m)).max())


@lru_cache(maxsize=16)
def fock_rep(N: int) -> FockRep:
    return FockRep(N)


@dataclass(frozen=True)
class CvState:
    n: int
    N: int
    rho: np.ndarray
    window: int | None = None

    def __post_init__(self):
        if self.rho.shape != (self.N ** self.n,) * 2:
            raise ValueError(f"rho shape {self.rho.shape} does not match n={self.n}, N_F={self.N}")

    @property
    def rep(self) -> FockRep:
        return fock_rep(self.N)

    def tensor(self) -> np.ndarray:
        return self.rho.reshape((self.N,) * (2 * self.n))

    def trace(self) -> float:
        return float(np.trace(self.rho).real)


def initial_vacuum(n: int, N: int) -> CvState:
    rho = np.zeros((N ** n, N ** n), complex)
    rho[0, 0] = 1.0
    return CvState(n, N, rho)


def from_ket(psi: np.ndarray, n: int, N: int) -> CvState:
    psi = np.asarray(psi, complex)
    psi = psi / np.linalg.norm(psi)
    return CvState(n, N, np.outer(psi, psi.conj()))


def fock_number_state(k: int, N: int) -> CvState:
    psi = np.zeros(N, complex)
    psi[k] = 1
    return from_ket(psi, 1, N)


def embed(state: CvState, N_new: int) -> CvState:
    """Pad a state to a larger cutoff."""
    if N_new == state.N:
        return state
    if N_new < state.N:
        raise ValueError("embed only enlarges the cutoff")
    t = state.tensor()
    out = np.zeros((N_new,) * (2 * state.n), complex)
    out[tuple(slice(0, state.N) for _ in range(2 * state.n))] = t
    return replace(state, N=N_new, rho=out.reshape((N_new ** state.n,) * 2))


def random_low_energy_state(n: int, N: int, rng: np.random.Generator, scale: float = 0.6, rank: int = 2) -> CvState:
    """Mixture of random kets with amplitudes decaying as exp(-k*scale) per mode."""
    kk = np.indices((N,) * n).sum(axis=0).ravel()
    env = np.exp(-scale * kk)
    rho = np.zeros((N ** n,) * 2, complex)
    weights = rng.dirichlet(np.ones(rank))
    for w in weights:
        v = (rng.normal(size=N ** n) + 1j * rng.normal(size=N ** n)) * env
        v /= np.linalg.norm(v)
        rho += w * np.outer(v, v.conj())
    return CvState(n, N, rho)


# ------------------------------------------------------------ observables


def mode_populations(state: CvState) -> np.ndarray:
    """Per-mode Fock populations, shape (n, N)."""
    diag = np.diag(state.rho).real.reshape((state.N,) * state.n)
    out = np.empty((state.n, state.N))
    for k in range(state.n):
        axes = tuple(i for i in range(state.n) if i != k)
        out[k] = diag.sum(axis=axes) if axes else diag
    return out


def energy(state: CvState) -> float:
    """Tr(rho H) / Tr(rho) with H = sum(n_j + 1/2).

    For windowed states this is the energy of the Fock-compressed state.
    """
    if state.window is not None:
        state = compress(state)
    pops = mode_populations(state)
    tr = state.trace()
    return float((pops @ (state.rep.n + 0.5)).sum() / tr)


def leakage(state: CvState) -> float:
    top = max(2, state.N // 10)
    pops = mode_populations(state)
    return float(pops[:, -top:].sum(axis=1).max() / state.trace())


def purity(state: CvState) -> float:
    return float(np.vdot(state.rho, state.rho).real / state.trace() ** 2)


def fidelity_pure(state: CvState, psi: np.ndarray) -> float:
    return float(np.real(psi.conj() @ state.rho @ psi) / state.trace())


# ------------------------------------------------------------ gate application


def _apply_1mode(rho_t: np.ndarray, U: np.ndarray, k: int, n: int) -> np.ndarray:
    rho_t = np.moveaxis(np.tensordot(U, rho_t, axes=([1], [k])), 0, k)
    return np.moveaxis(np.tensordot(rho_t, U.conj(), axes=([n + k], [1])), -1, n + k)


def _apply_2mode(rho_t: np.ndarray, U: np.ndarray, k: int, l: int, n: int, N: int) -> np.ndarray:
    U4 = U.reshape(N, N, N, N)
    rho_t = np.moveaxis(np.tensordot(U4, rho_t, axes=([2, 3], [k, l])), [0, 1], [k, l])
    return np.moveaxis(
        np.tensordot(rho_t, U4.conj(), axes=([n + k, n + l], [2, 3])), [-2, -1], [n + k, n + l]
    )


def _apply_cz(rho_t: np.ndarray, s: float, k: int, l: int, n: int, rep: FockRep) -> np.ndarray:
    # exact exponential of s*Q_k*Q_l in the product DVR basis
    x, V = rep.q_eig
    Vc = V.astype(complex)
    rho_t = _apply_1mode(rho_t, Vc.T, k, n)
    rho_t = _apply_1mode(rho_t, Vc.T, l, n)
    ph = np.exp(1j * s * np.outer(x, x))
    shape = [1] * (2 * n)
    shape[k], shape[l] = len(x), len(x)
    ph_row = ph.reshape(shape) if k < l else ph.T.reshape(shape)
    shape_c = [1] * (2 * n)
    shape_c[n + k], shape_c[n + l] = len(x), len(x)
    ph_col = ph.reshape(shape_c) if k < l else ph.T.reshape(shape_c)
    rho_t = rho_t * ph_row * ph_col.conj()
    rho_t = _apply_1mode(rho_t, Vc, k, n)
    return _apply_1mode(rho_t, Vc, l, n)


def single_mode_unitary(gate: CvGate, rep: FockRep) -> np.ndarray:
    kind, p = gate.kind, gate.params
    if kind == "Fourier":
        return np.diag(np.exp(0.5j * np.pi * rep.n))
    if kind == "Rotation":
        return np.diag(np.exp(1j * p[0] * rep.n))
    if kind == "Shear":
        return rep.func_of_q(lambda x: np.exp(0.5j * p[0] * x * x))
    if kind == "Cubic":
        return rep.func_of_q(lambda x: np.exp(1j * p[0] * x ** 3))
    if kind == "DisplaceZ":
        return rep.func_of_q(lambda x: np.exp(1j * p[0] * x))
    if kind == "DisplaceX":
        return rep.expi(rep.p_eig, -p[0])
    if kind == "Displace":
        r_q, r_p = p
        return rep.expi(np.linalg.eigh(r_p * rep.q - r_q * rep.p), 1.0)
    if kind == "Squeeze":
        return rep.expi(rep.squeeze_eig, -0.5 * p[0])
    raise ValueError(f"{kind} is not a single-mode gate")


def _apply_raw(state: CvState, gate: CvGate) -> CvState:
    n, N, rep = state.n, state.N, state.rep
    t = state.tensor()
    if gate.kind == "CZ":
        t = _apply_cz(t, gate.params[0], *gate.modes, n, rep)
    elif gate.kind == "BeamSplitter":
        U = rep.expi(rep.bs_eig, gate.params[0])
        t = _apply_2mode(t, U, *gate.modes, n, N)
    elif gate.kind == "MachZehnder":
        theta, phi = gate.params
        k, l = gate.modes
        U_bs = rep.expi(rep.bs_eig, math.pi / 4)
        t = _apply_1mode(t, np.diag(np.exp(1j * phi * rep.n)), k, n)
        t = _apply_2mode(t, U_bs, k, l, n, N)
        t = _apply_1mode(t, np.diag(np.exp(2j * theta * rep.n)), k, n)
        t = _apply_2mode(t, U_bs, k, l, n, N)
    else:
        t = _apply_1mode(t, single_mode_unitary(gate, rep), gate.modes[0], n)
    rho = t.reshape(state.rho.shape)
    rho = 0.5 * (rho + rho.conj().T)
    if not np.isfinite(rho).all():
        raise NonFinite(f"non-finite entries after {gate}")
    return replace(state, rho=rho)


def apply_cv_gate(state: CvState, gate: CvGate, check_leakage: bool = True) -> CvState:
    """rho -> U rho U^dagger.  Windowed states keep their window only for
    position-diagonal gates; otherwise they are compressed first."""
    if max(gate.modes) >= state.n:
        raise ValueError(f"{gate} exceeds mode count {state.n}")
    # a sharp position cut has a slowly decaying Fock tail of its own
    tau = TAU_LEAK if state.window is None else TAU_LEAK_CUT
    if state.window is not None and gate.kind not in DIAGONAL_KINDS:
        state = compress(state)
    out = _apply_raw(state, gate)
    if check_leakage:
        leak = leakage(out)
        if leak > tau:
            raise LeakageExceeded(leak, state.N)
    return out


# ------------------------------------------------------------ position densities


def _bin_masses_1(rho: np.ndarray, N: int, J: np.ndarray, ell: float) -> np.ndarray:
    G = nodes_per_bin(ell, N)
    x, w = bin_nodes(J, ell, G)
    Phi = hermite_functions(x.ravel(), N)
    dens = np.einsum("xj,jk,xk->x", Phi, rho, Phi, optimize=True).real
    return (dens.reshape(x.shape) * w).sum(axis=1)


def _bin_masses_2(rho: np.ndarray, N: int, J: np.ndarray, ell: float) -> np.ndarray:
    G = nodes_per_bin(ell, N)
    x, w = bin_nodes(J, ell, G)
    Phi = hermite_functions(x.ravel(), N)  # (X, N)
    r = rho.reshape(N, N, N, N)  # j1 j2 k1 k2
    A = np.tensordot(Phi, r, axes=([1], [0]))  # x j2 k1 k2
    B = np.einsum("xc,xbcd->xbd", Phi, A, optimize=True)  # x j2 k2
    C = np.tensordot(B, Phi, axes=([1], [1]))  # x k2 y
    dens = np.einsum("xdy,yd->xy", C, Phi, optimize=True).real
    nJ = len(J)
    dens = dens.reshape(nJ, G, nJ, G) * w[:, :, None, None] * w[None, None, :, :]
    return dens.sum(axis=(1, 3))


def support_bins(N: int, d: int) -> np.ndarray:
    ell = lattice_spacing(d)
    q_sup = math.sqrt(2 * N) + 5
    jmax = int(math.ceil(q_sup / ell + 0.5))
    return np.arange(-jmax, jmax + 1)


def bin_masses(state: CvState, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Position-bin masses over all bins carrying support; returns (J, masses).

    Windowed states only have mass on the centered bins.
    """
    if state.n > 2:
        raise ValueError("position densities are implemented for n <= 2")
    ell = lattice_spacing(d)
    J = centered_range(d) if state.window == d else support_bins(state.N, d)
    if state.window is not None and state.window != d:
        state = compress(state)
        J = support_bins(state.N, d)
    f = _bin_masses_1 if state.n == 1 else _bin_masses_2
    return J, f(state.rho, state.N, J, ell)


@dataclass
class OutcomeDistribution:
    d: int
    n: int
    probs: np.ndarray  # shape (d,)*n indexed by grid index u
    model: str
    overflow: float = 0.0

    @property
    def grid(self) -> np.ndarray:
        return lattice_spacing(self.d) * centered_range(self.d)

    def flat(self) -> np.ndarray:
        return self.probs.ravel()


def _centered_block(J: np.ndarray, masses: np.ndarray, d: int, n: int) -> np.ndarray:
    i0 = int(np.searchsorted(J, -(d // 2)))
    sl = tuple(slice(i0, i0 + d) for _ in range(n))
    return masses[sl]


def pdf_realistic(state: CvState, d: int) -> OutcomeDistribution:
    if d < 2:
        raise ValueError("d must be >= 2")
    J, m = bin_masses(state, d)
    tr = float(m.sum()) if state.window == d else state.trace()
    block = np.clip(_centered_block(J, m, d, state.n), 0, None)
    norm = float(block.sum())
    if norm / tr < 1e-12:
        raise DegenerateNormalization(f"in-grid mass {norm:.3e}")
    return OutcomeDistribution(d, state.n, block / norm, "R", overflow=max(0.0, 1 - norm / tr))


def window_mass(state: CvState, d: int) -> float:
    """Tr(Lambda_d rho) / Tr(rho)."""
    if state.window == d:
        return 1.0
    J, m = bin_masses(state, d)
    return float(_centered_block(J, m, d, state.n).sum() / state.trace())


def pdf_cutoff(state: CvState, d: int) -> OutcomeDistribution:
    if d < 2:
        raise ValueError("d must be >= 2")
    J, m = bin_masses(state, d)
    block = np.clip(_centered_block(J, m, d, state.n), 0, None)
    surv = float(block.sum())
    if surv < 1e-12:
        raise DegenerateNormalization(f"Tr(Lambda rho) = {surv:.3e}")
    # Lambda K~ Lambda = K~ on centered bins, so only the normalization differs
    return OutcomeDistribution(d, state.n, block / surv, "C")


def fold_modular(J: np.ndarray, masses: np.ndarray, d: int) -> np.ndarray:
    u = (J + d // 2) % d
    n = masses.ndim
    out = masses
    for ax in range(n):
        folded = np.zeros(out.shape[:ax] + (d,) + out.shape[ax + 1 :])
        idx = [slice(None)] * n
        for i, ui in enumerate(u):
            idx[ax] = i
            src = out[tuple(idx)]
            idx[ax] = ui
            folded[tuple(idx)] += src
        out = folded
    return out


def pdf_modular(state: CvState, d: int) -> OutcomeDistribution:
    if d < 2:
        raise ValueError("d must be >= 2")
    J, m = bin_masses(state, d)
    p = np.clip(fold_modular(J, m, d), 0, None)
    return OutcomeDistribution(d, state.n, p / p.sum(), "M")


# ------------------------------------------------------------ window operator


def window_matrix(N: int, d: int) -> np.ndarray:
    """Lambda_F[j, k] = integral over the centered cell of psi_j psi_k."""
    ell = lattice_spacing(d)
    x, w = bin_nodes(centered_range(d), ell, nodes_per_bin(ell, N))
    Phi = hermite_functions(x.ravel(), N)
    return (Phi * w.ravel()[:, None]).T @ Phi


def compress(state: CvState) -> CvState:
    """Project a windowed state onto the Fock span: rho -> Lam rho Lam / trace."""
    if state.window is None:
        return state
    Lam = window_matrix(state.N, state.window).astype(complex)
    t = state.tensor()
    for k in range(state.n):
        t = _apply_1mode(t, Lam, k, state.n)
    rho = t.reshape(state.rho.shape)
    tr = float(np.trace(rho).real)
    if tr < 1e-12:
        raise DegenerateNormalization("window removes the whole state")
    return CvState(state.n, state.N, rho / tr)


def project_window(state: CvState, d: int) -> tuple[CvState, float]:
    """Apply Lambda_d and renormalize; returns (windowed state, survival probability)."""
    if state.window == d:
        return state, 1.0
    if state.window is not None:
        state = compress(state)
    surv = window_mass(state, d)
    if surv < 1e-12:
        raise DegenerateNormalization(f"Tr(Lambda rho) = {surv:.3e}")
    return CvState(state.n, state.N, state.rho / (surv * state.trace()), window=d), surv


def window_identity_residual(d: int, periods: int = 3, points_per_bin: int = 64) -> float:
    """Max |Lambda K_x Lambda - K~_x| over a position grid, for every bin x.

    All three operators are multiplication operators in position, so on a grid
    they are 0/1 diagonals.
    """
    ell = lattice_spacing(d)
    lo, hi = window_bounds(d)
    span = periods * d * ell
    xs = np.linspace(-span, span, 2 * periods * d * points_per_bin + 1)[:-1] + ell / (4 * points_per_bin)
    lam = (xs >= lo) & (xs < hi)
    worst = 0.0
    for J in centered_range(d):
        shifted = xs - ell * J
        # K~: the single bin around ell*J; K: the same bin repeated with period d*ell
        kt = (shifted > -ell / 2) & (shifted <= ell / 2)
        r = np.mod(shifted + ell / 2, d * ell)
        km = (r > 0) & (r <= ell)
        worst = max(worst, float(np.abs((lam & km & lam).astype(float) - kt.astype(float)).max()))
    return worst


# ------------------------------------------------------------ model simulation


@dataclass
class EnergyTrace:
    energies: list[float] = field(default_factory=list)
    survival: list[float] = field(default_factory=list)
    nf: int = 0

    @property
    def max(self) -> float:
        return max(self.energies) if self.energies else float("nan")


def simulate_model(
    circuit: CvCircuit,
    d: int,
    model: str = "R",
    nf: int = 40,
    initial: CvState | None = None,
    escalate: bool = True,
    check_budget: bool = True,
) -> tuple[CvState, EnergyTrace]:
    """Evolve vacuum (or ``initial``) through the circuit under model R or C.

    Model C applies Lambda_d before every gate and before measurement.
    On LeakageExceeded the cutoff is doubled up to the per-mode cap.
    """
    if model not in ("R", "C"):
        raise ValueError("model must be 'R' or 'C'")
    cap = NF_CAP_SINGLE if circuit.n == 1 else NF_CAP_TWO
    N = initial.N if initial is not None else nf
    while True:
        try:
            return _simulate(circuit, d, model, N, initial, check_budget)
        except LeakageExceeded:
            if not escalate or 2 * N > cap:
                raise
            N *= 2


def _simulate(circuit, d, model, N, initial, check_budget):
    if initial is None:
        state = initial_vacuum(circuit.n, N)
    else:
        state = embed(initial, N)
    tr = EnergyTrace(nf=N)
    tr.energies.append(energy(state))
    for g in circuit.gates:
        if model == "C":
            state, s = project_window(state, d)
            tr.survival.append(s)
        state = apply_cv_gate(state, g)
        if model == "R":
            state = replace(state, rho=state.rho / state.trace())
        e = energy(state)
        tr.energies.append(e)
        if check_budget and e > circuit.energy_budget + 1e-9:
            raise EnergyBudgetExceeded(f"E={e:.6g} exceeds E*={circuit.energy_budget} after {g}")
    if model == "C":
        state, s = project_window(state, d)
        tr.survival.append(s)
    return state, tr


def is_passive(gate: CvGate) -> bool:
    return gate.kind in PASSIVE_KINDS


def dump_state_csv(state: CvState, path: str) -> None:
    """Row-major Fock-basis dump: i, j, re, im."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "re", "im"])
        for (i, j), v in np.ndenumerate(state.rho):
            w.writerow([i, j, repr(float(v.real)), repr(float(v.imag))])

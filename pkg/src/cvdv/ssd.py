"""Stabilizer subsystem decomposition of truncated-Fock states.

With D(t) = exp(i t_p q) exp(-i t_q p) the torus average reduces to

    sigma_ab = sum_{J = a, J' = b (mod d)} sinc(pi (J - J') / d)
               * int_{-l/2}^{l/2} du rho(l J - u, l J' - u)

The momentum-shift integral is done in closed form (the sinc factor); the
position-shift integral uses Gauss-Legendre nodes on each torus axis.  The
diagonal collapses to the modular bin masses because sinc(pi m) = 0 for m != 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .fock import (
    CvState,
    centered_range,
    compress,
    hermite_functions,
    lattice_spacing,
    support_bins,
    _gauss_legendre,
)


class QuadratureNotConverged(RuntimeError):
    pass


class CorrectionTooLarge(RuntimeError):
    pass


@dataclass(frozen=True)
class QuadratureConfig:
    """Torus quadrature settings.

    M : nodes per torus axis (odd, >= 11); ``None`` picks a size from l and N_F
    check_refinement : also evaluate at 2M+1 nodes and report the change
    tol : refinement tolerance in max-norm
    """

    M: int | None = None
    check_refinement: bool = True
    tol: float = 1e-5

    def __post_init__(self):
        if self.M is not None and (self.M < 11 or self.M % 2 == 0):
            raise ValueError(f"M must be odd and >= 11, got {self.M}")

    def nodes(self, ell: float, N: int) -> int:
        if self.M is not None:
            return self.M
        # the integrand oscillates at most like exp(2i sqrt(2N) u) over a cell of width l
        m = max(31, int(math.ceil(ell * math.sqrt(2 * N))) + 21)
        return m | 1

    @staticmethod
    def q_support(N: int) -> float:
        return math.sqrt(2 * N) + 5


@dataclass
class QuditDensity:
    d: int
    n: int
    sigma: np.ndarray
    correction: float = 0.0

    def __post_init__(self):
        if self.sigma.shape != (self.d ** self.n,) * 2:
            raise ValueError(f"sigma shape {self.sigma.shape} inconsistent with d={self.d}, n={self.n}")

    def to_json(self, diagnostics: "SsdDiagnostics | None" = None) -> str:
        doc = {
            "d": self.d,
            "n": self.n,
            "re": self.sigma.real.tolist(),
            "im": self.sigma.imag.tolist(),
        }
        if diagnostics is not None:
            doc["diagnostics"] = diagnostics.__dict__
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "QuditDensity":
        doc = json.loads(text)
        return cls(doc["d"], doc["n"], np.array(doc["re"]) + 1j * np.array(doc["im"]))


@dataclass
class SsdDiagnostics:
    trace_deficit: float
    hermiticity: float
    min_eigenvalue: float
    refinement_delta: float
    M: int


def _bins(state: CvState, d: int) -> np.ndarray:
    return centered_range(d) if state.window == d else support_bins(state.N, d)


def _prepare(state: CvState, d: int) -> CvState:
    if state.n > 2:
        raise ValueError("SSD is implemented for n <= 2 (desk-scale cap)")
    if d < 2:
        raise ValueError("d must be >= 2")
    if state.window is not None and state.window != d:
        state = compress(state)
    return state


def _phi(J: np.ndarray, ell: float, N: int, M: int) -> tuple[np.ndarray, np.ndarray]:
    """Phi[u, J, j] = psi_j(l J - u) for torus nodes u, and node weights."""
    t, w = _gauss_legendre(M)
    u = 0.5 * ell * t
    x = ell * J[None, :] - u[:, None]
    return hermite_functions(x, N), 0.5 * ell * w


def _fold_matrix(J: np.ndarray, d: int) -> np.ndarray:
    """R[a, J] = 1 if J = a (mod d), with a the qudit label."""
    R = np.zeros((d, len(J)))
    R[np.mod(J, d), np.arange(len(J))] = 1.0
    return R


def _sigma(state: CvState, d: int, M: int) -> np.ndarray:
    ell = lattice_spacing(d)
    N = state.N
    J = _bins(state, d)
    Phi, w = _phi(J, ell, N, M)
    S = np.sinc((J[:, None] - J[None, :]) / d)  # numpy sinc is sin(pi x)/(pi x)
    R = _fold_matrix(J, d)
    rho = state.rho / (1.0 if state.window == d else state.trace())
    if state.n == 1:
        C = np.einsum("u,uJj,jk,uKk->JK", w, Phi, rho, Phi, optimize=True)
        return R @ (S * C) @ R.T
    # two modes: C[J1 J2, K1 K2] via per-mode contractions T[J, j, K, k]
    T = np.einsum("u,uJj,uKk->JjKk", w, Phi, Phi, optimize=True)
    r = rho.reshape(N, N, N, N)  # j1 j2 k1 k2
    A = np.tensordot(T, r, axes=([1, 3], [0, 2]))  # J1 K1 j2 k2
    C = np.tensordot(A, T, axes=([2, 3], [1, 3]))  # J1 K1 J2 K2
    C = C * S[:, :, None, None] * S[None, None, :, :]
    # fold each index, then order as (a1 a2, b1 b2)
    C = np.einsum("aJ,bK,cL,eM,JKLM->acbe", R, R, R, R, C, optimize=True)
    return C.reshape(d * d, d * d)


def ssd(state: CvState, d: int, cfg: QuadratureConfig | None = None) -> tuple[QuditDensity, SsdDiagnostics]:
    cfg = cfg or QuadratureConfig()
    state = _prepare(state, d)
    ell = lattice_spacing(d)
    M = cfg.nodes(ell, state.N)
    sig = _sigma(state, d, M)
    delta = 0.0
    if cfg.check_refinement:
        sig2 = _sigma(state, d, 2 * M + 1)
        delta = float(np.abs(sig2 - sig).max())
        sig = sig2
        if delta > cfg.tol:
            raise QuadratureNotConverged(f"refinement delta {delta:.3e} at M={M}")
    sig = 0.5 * (sig + sig.conj().T)
    herm = float(np.abs(sig - sig.conj().T).max())
    ev = np.linalg.eigvalsh(sig)
    diag = SsdDiagnostics(
        trace_deficit=float(abs(1 - np.trace(sig).real)),
        hermiticity=herm,
        min_eigenvalue=float(ev.min()),
        refinement_delta=delta,
        M=M,
    )
    return QuditDensity(d, state.n, sig), diag


def ssd_diagonal(state: CvState, d: int, cfg: QuadratureConfig | None = None) -> np.ndarray:
    """Diagonal of the SSD from the reduced position-shift integral alone.

    Returns a probability vector indexed by qudit labels (a1, a2) flattened.
    """
    cfg = cfg or QuadratureConfig()
    state = _prepare(state, d)
    ell = lattice_spacing(d)
    N = state.N
    J = _bins(state, d)
    Phi, w = _phi(J, ell, N, cfg.nodes(ell, N))
    rho = state.rho / (1.0 if state.window == d else state.trace())
    R = _fold_matrix(J, d)
    if state.n == 1:
        dens = np.einsum("uJj,jk,uJk->uJ", Phi, rho, Phi, optimize=True).real
        return R @ (w @ dens)
    r = rho.reshape(N, N, N, N)
    # D[J1, J2] = sum_{u1,u2} w1 w2 rho(x1, x2; x1, x2)
    A = np.einsum("uJj,uJk->Jjk", Phi * np.sqrt(w)[:, None, None], Phi * np.sqrt(w)[:, None, None], optimize=True)
    D = np.einsum("Jac,abcd,Kbd->JK", A, r, A, optimize=True).real
    return (R @ D @ R.T).ravel()


def sanitize(q: QuditDensity, max_correction: float = 1e-4, herm_tol: float = 1e-6) -> QuditDensity:
    sig = q.sigma
    herm = float(np.abs(sig - sig.conj().T).max())
    if herm > herm_tol:
        raise CorrectionTooLarge(f"Hermiticity residual {herm:.3e}")
    sig = 0.5 * (sig + sig.conj().T)
    ev, V = np.linalg.eigh(sig)
    clipped = float(-ev[ev < 0].sum())
    if clipped > max_correction:
        raise CorrectionTooLarge(f"clipped mass {clipped:.3e}")
    if clipped == 0.0 and abs(np.trace(sig).real - 1) == 0.0:
        return QuditDensity(q.d, q.n, sig, 0.0)
    ev = np.clip(ev, 0, None)
    out = (V * ev) @ V.conj().T
    out = out / np.trace(out).real
    return QuditDensity(q.d, q.n, 0.5 * (out + out.conj().T), clipped)


def qudit_label_to_grid(d: int) -> np.ndarray:
    """Grid index u of each qudit label a: u = {a}_d + d//2."""
    return (np.arange(d) + d // 2) % d

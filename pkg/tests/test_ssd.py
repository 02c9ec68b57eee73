import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from cvdv.circuit import DisplaceX, Fourier, Rotation, Squeeze, Displace
from cvdv.dv import build_gate
from cvdv.fock import (
    CvState,
    apply_cv_gate,
    fock_number_state,
    initial_vacuum,
    lattice_spacing,
    pdf_modular,
    project_window,
    random_low_energy_state,
)
from cvdv.ssd import (
    CorrectionTooLarge,
    QuadratureConfig,
    QuadratureNotConverged,
    QuditDensity,
    qudit_label_to_grid,
    sanitize,
    ssd,
    ssd_diagonal,
)


def brute_force_ssd(coeffs, d, grid=400, mmax=6):
    """Midpoint-rule torus average of <a|D(t) psi><psi|D(t)^dag|b> for a pure ket.

    D(t) psi(x) = exp(i t_p x) psi(x - t_q); GKP bras are position combs.
    Wavefunctions come from scipy Hermite polynomials.
    """
    ell = lattice_spacing(d)
    N = len(coeffs)

    def psi(x):
        out = np.zeros_like(x, dtype=complex)
        for k, c in enumerate(coeffs):
            if c != 0:
                norm = 1 / math.sqrt(2 ** k * math.factorial(k) * math.sqrt(math.pi))
                out += c * norm * special.eval_hermite(k, x) * np.exp(-x * x / 2)
        return out

    h = ell / grid
    t = -ell / 2 + h * (np.arange(grid) + 0.5)
    tq, tp = np.meshgrid(t, t, indexing="ij")
    amps = np.zeros((d,) + tq.shape, complex)
    for a in range(d):
        for m in range(-mmax, mmax + 1):
            x = ell * (d * m + a)
            amps[a] += np.exp(1j * tp * x) * psi(x - tq)
    sigma = np.einsum("aij,bij->ab", amps, amps.conj()) * h * h / ell
    assert N < 60
    return sigma


def vac_coeffs(N=1):
    c = np.zeros(N, complex)
    c[0] = 1
    return c


def ket_of(state):
    w, V = np.linalg.eigh(state.rho)
    return V[:, -1] * math.sqrt(w[-1])


# ---------------------------------------------------------------- oracle comparisons


def test_vacuum_d2_against_brute_force():
    q, diag = ssd(initial_vacuum(1, 30), 2)
    ref = brute_force_ssd(vac_coeffs(), 2)
    assert np.abs(q.sigma - ref).max() < 1e-5
    # vacuum is Fourier invariant and F_2 is the Hadamard, so <X> = <Z>:
    # the state is real with a non-zero coherence, not diagonal
    assert abs(q.sigma[0, 1].imag) < 1e-12
    assert 2 * q.sigma[0, 1].real == pytest.approx((q.sigma[0, 0] - q.sigma[1, 1]).real, abs=1e-8)
    assert q.sigma[0, 0].real > q.sigma[1, 1].real
    assert abs(np.trace(q.sigma) - 1) < 1e-6
    assert diag.trace_deficit < 1e-6


@pytest.mark.parametrize("d", [3, 4])
def test_coherent_against_brute_force(d):
    s = apply_cv_gate(initial_vacuum(1, 40), Displace(0.3, -0.4, 0))
    c = ket_of(s)[:30]
    ref = brute_force_ssd(c, d)
    q, _ = ssd(s, d)
    assert np.abs(q.sigma - ref).max() < 1e-5


def test_vacuum_fourier_invariance():
    v = initial_vacuum(1, 40)
    a, _ = ssd(v, 8)
    b, _ = ssd(apply_cv_gate(v, Fourier(0)), 8)
    assert np.abs(a.sigma - b.sigma).max() < 1e-8


def test_thermal_states_approach_maximally_mixed():
    d, N = 4, 140

    def thermal(nbar):
        beta = math.log(1 + 1 / nbar)
        w = np.exp(-beta * np.arange(N))
        return CvState(1, N, np.diag(w / w.sum()).astype(complex))

    def entropy(sig):
        ev = np.clip(np.linalg.eigvalsh(sig), 1e-300, None)
        return float(-(ev * np.log(ev)).sum())

    mm = np.eye(d) / d
    dist, ent = [], []
    for nbar in (0.5, 2.0, 8.0):
        q, _ = ssd(thermal(nbar), d)
        dist.append(np.abs(np.linalg.eigvalsh(q.sigma - mm)).sum() / 2)
        ent.append(entropy(q.sigma))
    assert dist[0] > dist[1] > dist[2]
    assert ent[0] < ent[1] < ent[2] <= math.log(d) + 1e-12
    assert dist[2] < 0.05


# ---------------------------------------------------------------- diagonal and modular equivalence


@pytest.mark.parametrize("d", [2, 4, 8, 16])
def test_diagonal_consistency(d):
    rng = np.random.default_rng(d)
    s = random_low_energy_state(1, 40, rng)
    q, _ = ssd(s, d)
    diag = ssd_diagonal(s, d)
    assert np.abs(np.diag(q.sigma).real - diag).max() < 1e-7
    pm = pdf_modular(s, d).probs
    assert np.abs(diag - pm[qudit_label_to_grid(d)]).max() < 1e-7


def test_vacuum_d2_diagonal_normalized():
    assert ssd_diagonal(initial_vacuum(1, 20), 2).sum() == pytest.approx(1.0, abs=1e-8)


def test_two_mode_diagonal_and_product():
    rng = np.random.default_rng(5)
    d, N = 4, 14
    s1 = random_low_energy_state(1, N, rng, scale=1.0)
    s2 = random_low_energy_state(1, N, rng, scale=1.0)
    s = CvState(2, N, np.kron(s1.rho, s2.rho))
    q, _ = ssd(s, d)
    q1, _ = ssd(s1, d)
    q2, _ = ssd(s2, d)
    assert np.abs(q.sigma - np.kron(q1.sigma, q2.sigma)).max() < 1e-10
    diag = ssd_diagonal(s, d)
    assert np.abs(np.diag(q.sigma).real - diag).max() < 1e-7
    u = qudit_label_to_grid(d)
    pm = pdf_modular(s, d).probs[np.ix_(u, u)].ravel()
    assert np.abs(diag - pm).max() < 1e-7


def test_windowed_state_uses_centered_bins():
    rng = np.random.default_rng(9)
    s, _ = project_window(random_low_energy_state(1, 40, rng), 8)
    q, _ = ssd(s, 8)
    pm = pdf_modular(s, 8).probs
    assert np.abs(np.diag(q.sigma).real - pm[qudit_label_to_grid(8)]).max() < 1e-9


# ---------------------------------------------------------------- invariants


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([2, 4, 8, 16]))
def test_trace_preservation(seed, d):
    s = random_low_energy_state(1, 40, np.random.default_rng(seed))
    q, diag = ssd(s, d)
    assert abs(np.trace(q.sigma).real - 1) <= 5e-6
    assert diag.hermiticity <= 1e-8
    assert diag.min_eigenvalue >= -1e-6


@pytest.mark.parametrize("d", [4, 8, 16])
def test_lattice_shift_covariance(d):
    ell = lattice_spacing(d)
    s = random_low_energy_state(1, 50, np.random.default_rng(d))
    q, _ = ssd(s, d)
    qs, _ = ssd(apply_cv_gate(s, DisplaceX(ell, 0), check_leakage=False), d)
    X = build_gate("X", (ell,), d)
    assert np.abs(qs.sigma - X @ q.sigma @ X.conj().T).max() <= 1e-6


@pytest.mark.parametrize("d", [4, 8, 16])
def test_fourier_covariance(d):
    s = random_low_energy_state(1, 50, np.random.default_rng(d + 1))
    q, _ = ssd(s, d)
    qf, _ = ssd(apply_cv_gate(s, Fourier(0)), d)
    F = build_gate("F", (), d)
    assert np.abs(qf.sigma - F @ q.sigma @ F.conj().T).max() <= 1e-6


def test_quadrature_convergence():
    s = apply_cv_gate(apply_cv_gate(initial_vacuum(1, 60), Squeeze(0.4, 0)), Rotation(0.6, 0))
    d = 4
    ref, _ = ssd(s, d, QuadratureConfig(M=201, check_refinement=False))
    errs = []
    for M in (11, 23, 47):
        q, _ = ssd(s, d, QuadratureConfig(M=M, check_refinement=False))
        errs.append(np.abs(q.sigma - ref.sigma).max())
    for a, b in zip(errs, errs[1:]):
        assert b <= a / 4 or b < 1e-13


def test_not_converged_raises():
    with pytest.raises(QuadratureNotConverged):
        ssd(fock_number_state(40, 60), 2, QuadratureConfig(M=11))


def test_config_invariants():
    with pytest.raises(ValueError):
        QuadratureConfig(M=10)
    with pytest.raises(ValueError):
        QuadratureConfig(M=9)


def test_n_cap():
    with pytest.raises(ValueError):
        ssd(initial_vacuum(3, 4), 2)


# ---------------------------------------------------------------- sanitize and export


def test_sanitize_fixed_point():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    sig = A @ A.conj().T
    sig /= np.trace(sig).real
    sig = 0.5 * (sig + sig.conj().T)
    out = sanitize(QuditDensity(4, 1, sig))
    assert np.abs(out.sigma - sig).max() < 1e-15
    assert out.correction == 0.0


def test_sanitize_small_negative():
    sig = np.diag([0.6, 0.4 + 1e-7, -1e-7]).astype(complex)
    out = sanitize(QuditDensity(3, 1, sig))
    assert np.linalg.eigvalsh(out.sigma).min() >= 0
    assert np.trace(out.sigma).real == pytest.approx(1.0, abs=1e-15)
    assert out.correction == pytest.approx(1e-7)


def test_sanitize_large_negative():
    sig = np.diag([0.6, 0.401, -1e-3]).astype(complex)
    with pytest.raises(CorrectionTooLarge):
        sanitize(QuditDensity(3, 1, sig))


def test_sanitize_non_hermitian():
    sig = np.array([[0.5, 1e-3], [0.0, 0.5]], complex)
    with pytest.raises(CorrectionTooLarge):
        sanitize(QuditDensity(2, 1, sig))


def test_json_round_trip():
    q, diag = ssd(random_low_energy_state(1, 20, np.random.default_rng(2)), 4)
    text = q.to_json(diag)
    back = QuditDensity.from_json(text)
    assert back.d == 4 and back.n == 1
    assert np.array_equal(back.sigma, q.sigma)
    assert '"refinement_delta"' in text


def test_label_grid_map():
    assert list(qudit_label_to_grid(4)) == [2, 3, 0, 1]
    assert list(qudit_label_to_grid(5)) == [2, 3, 4, 0, 1]

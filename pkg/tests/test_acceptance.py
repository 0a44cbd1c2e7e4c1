"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v`` or directly with
``python3 tests/test_acceptance.py``.  Tolerances are fixed in each check.
"""

from __future__ import annotations

import math
import sys
import time

import numpy as np
import pytest

from wavemode.coupling import CouplingCoefficients, compute_coefficients
from wavemode.decay import decay_rate, fit_slope, regime_sweep
from wavemode.diffusion import (NEUMANN_DIRICHLET, NEUMANN_NEUMANN, DiffusionCoefficient, continuum_limit_check,
                                solve_diffusion, sturm_liouville_spectrum)
from wavemode.medium import ConstantKernel, CovarianceSpec, GaussianBumpKernel, SumKernel
from wavemode.montecarlo import JumpChainSpec, simulate_feynman_kac
from wavemode.pekeris import WaveguideParams, dispersion_residual, solve_modes
from wavemode.power import solve_coupled_power

N1, D, A = 1.2, 1.0, 2.0


def _guide(m_over_pi):
    return WaveguideParams.from_mode_parameter(N1, D, m_over_pi)


def _best_time(f, repeats=3):
    best = math.inf
    for _ in range(repeats):
        t = time.perf_counter()
        out = f()
        best = min(best, time.perf_counter() - t)
    return out, best


def criterion_01():
    """Mode spectrum: brackets, residual <= 1e-12 M, N = floor(M / pi), < 0.1 s."""
    notes, ok = [], True
    for mop in (10.3, 50.7, 200.2):
        p = _guide(mop)
        ms, dt = _best_time(lambda p=p: solve_modes(p))
        j = np.arange(1, ms.N + 1)
        inside = np.all((ms.sigma > math.pi / 2 + (j - 1) * math.pi) & (ms.sigma < math.pi / 2 + j * math.pi))
        res = np.abs(dispersion_residual(ms.sigma, p.M)).max() / p.M
        good = inside and res <= 1e-12 and ms.N == math.floor(p.M / math.pi) and dt < 0.1
        ok &= bool(good)
        notes.append(f"M/pi={mop}: N={ms.N} res/M={res:.1e} t={dt * 1e3:.1f}ms")
    return ok, "; ".join(notes)


def criterion_02():
    """Spacing: max |sigma_{j+1} - sigma_j - pi| over j <= N - N^0.8 decreases, slope <= -0.5, < 1 s."""
    Ns = np.array([50, 100, 200, 400])
    t = time.perf_counter()
    dev = []
    for N in Ns:
        ms = solve_modes(_guide(N + 0.5))
        J = int(math.floor(N - N**0.8))
        dev.append(np.abs(np.diff(ms.sigma)[:J] - math.pi).max())
    dt = time.perf_counter() - t
    dev = np.array(dev)
    slope = np.polyfit(np.log(Ns), np.log(dev), 1)[0]
    ok = bool(np.all(np.diff(dev) < 0) and slope <= -0.5 and dt < 1.0)
    return ok, f"max deviations {np.array2string(dev, precision=3)}; log-log slope {slope:.3f}; t={dt:.3f}s"


def _random_kernel(rng):
    n = int(rng.integers(1, 4))
    terms = [GaussianBumpKernel(D, 1.0, rng.uniform(0, D), rng.uniform(0.05, 0.5)) for _ in range(n)]
    weights = list(rng.uniform(0.1, 2.0, n))
    if rng.random() < 0.5:
        terms.append(ConstantKernel(D))
        weights.append(rng.uniform(0.05, 0.5))
    return SumKernel(tuple(terms), tuple(weights))


def criterion_03():
    """Coefficient structure: 5 random analytic kernels at N <= 8."""
    rng = np.random.default_rng(2024)
    notes, ok = [], True
    for _ in range(5):
        spec = CovarianceSpec(_random_kernel(rng), rng.uniform(0.5, 4.0), D)
        ms = solve_modes(_guide(rng.uniform(2.2, 8.9)))
        c = compute_coefficients(ms, spec, kappa=False)
        G = c.gamma_c
        rows = np.abs(G.sum(axis=1)) <= 4 * np.finfo(float).eps * np.abs(G).sum(axis=1)
        off_min = (G - np.diag(np.diag(G))).min()
        psd = np.linalg.eigvalsh(c.gamma_1).min() / np.trace(c.gamma_1)
        good = (np.array_equal(G, G.T) and rows.all() and off_min >= 0 and psd >= -1e-10
                and np.all(c.lambda_c >= 0) and ms.N <= 8)
        ok &= bool(good)
        notes.append(f"N={ms.N} minEig(G1)/tr={psd:.1e}")
    return ok, "; ".join(notes)


def criterion_04():
    """Band-limiting reduction: Lambda^c_j <= 1e-9 k^4 for j <= N-2, Gamma^c tridiagonal."""
    notes, ok = [], True
    for mop in (6.5, 12.5, 25.5):
        ms = solve_modes(_guide(mop))
        c = compute_coefficients(ms, CovarianceSpec.cosine_band(A, D), kappa=False)
        k4 = ms.params.k ** 4
        n = c.N
        far = np.abs(np.subtract.outer(np.arange(n), np.arange(n))) > 1
        lead = np.abs(c.lambda_c[: n - 2]).max() / k4
        good = lead <= 1e-9 and np.all(c.gamma_c[far] == 0) and np.all(np.diag(c.gamma_c, 1) > 0)
        ok &= bool(good)
        notes.append(f"N={n} max|L_j<=N-2|/k^4={lead:.1e} L_N/k^4={c.lambda_c[-1] / k4:.1e}")
    return ok, "; ".join(notes)


def _physical(kernel="gaussian", mop=4.3):
    spec = (CovarianceSpec.gaussian_bump(A, D, center=0.4, width=0.25) if kernel == "gaussian"
            else CovarianceSpec.constant(A, D))
    return compute_coefficients(solve_modes(_guide(mop)), spec, kappa=False)


def criterion_05():
    """Conservation: energy to 1e-8 up to 50/||Gamma||, equipartition to 1e-6 once gap z >= 30."""
    notes, ok = [], True
    for kernel in ("gaussian", "constant"):
        c = _physical(kernel)
        c0 = CouplingCoefficients.from_arrays(c.gamma_c)
        z = np.linspace(0.0, 50.0 / np.linalg.norm(c0.gamma_c, 2), 201)
        T = solve_coupled_power(c0, z).T
        drift = np.abs(T.sum(axis=1) - 1.0).max()
        ev = np.linalg.eigvalsh(-c0.gamma_c)
        z_eq = 30.0 / ev[1]
        T_eq = solve_coupled_power(c0, [z_eq]).T[0]
        uni = np.abs(T_eq - 1.0 / c.N).max()
        ok &= bool(drift <= 1e-8 and uni <= 1e-6)
        notes.append(f"{kernel}: N={c.N} energy drift {drift:.1e}, |T-1/N| {uni:.1e} at gap*z=30")
    return ok, "; ".join(notes)


def criterion_06():
    """Decay sandwich and slope: min Lambda <= Lambda_inf <= mean Lambda, late slope within 1%."""
    notes, ok = [], True
    cases = [("gaussian", _physical("gaussian")), ("constant", _physical("constant", 5.3)),
             ("cosine_band", compute_coefficients(solve_modes(_guide(12.5)), CovarianceSpec.cosine_band(A, D),
                                                  kappa=False))]
    for name, c in cases:
        an = decay_rate(c)
        z_min = 10.0 / an.gap
        traj = solve_coupled_power(c, np.linspace(0.0, 2.0 * z_min, 201))
        slope = fit_slope(traj, z_min, analysis=an)
        rel = abs(slope + an.lambda_inf) / an.lambda_inf
        ok &= bool(an.lower_bound <= an.lambda_inf <= an.upper_bound and rel <= 0.01)
        notes.append(f"{name}: {an.lower_bound:.3e} <= {an.lambda_inf:.5e} <= {an.upper_bound:.3e}, "
                     f"slope err {rel:.1e}")
    return ok, "; ".join(notes)


def criterion_07():
    """Regimes: at tau = 1e-4 within 1% of their limits."""
    rng = np.random.default_rng(7)
    sets = [("constant N=4", _physical("constant", 4.3)), ("constant N=6", _physical("constant", 6.7))]
    for i in range(3):
        n = int(rng.integers(3, 8))
        sets.append((f"synthetic N={n}", CouplingCoefficients.from_rates(rng.uniform(0.1, 2.0, (n, n)),
                                                                         rng.uniform(0.1, 1.0, n))))
    notes, ok = [], True
    for name, c in sets:
        errs = {}
        for regime in ("strong_coupling", "weak_coupling", "weak_loss"):
            errs[regime] = float(regime_sweep(c, [1e-4], regime).relative_error[0])
        ok &= bool(max(errs.values()) <= 0.01)
        notes.append(f"{name}: " + " ".join(f"{k}={v:.1e}" for k, v in errs.items()))
    return ok, "; ".join(notes)


def criterion_08():
    """Monte Carlo agreement: N = 4, 1e6 paths, every T_j^l(L) within 4 standard errors, < 60 s."""
    c = _physical("gaussian")
    L = 1.0
    t = time.perf_counter()
    est = simulate_feynman_kac(JumpChainSpec.from_coefficients(c, seed=20240601), L, 1_000_000)
    dt = time.perf_counter() - t
    ref = solve_coupled_power(c, [L]).T[0]
    z = np.abs(est.mean - ref) / est.stderr
    ok = bool(c.N == 4 and np.all(z <= 4.0) and dt < 60.0)
    return ok, f"max |z-score| {z.max():.2f} over {z.size} entries; t={dt:.1f}s"


def criterion_09():
    """Diffusion eigen-decay: constant a gives -a0 pi^2/4 within 1e-6 at n = 256, generic a slope within 1%."""
    a0 = 0.73
    sp = sturm_liouville_spectrum(DiffusionCoefficient.constant(a0), NEUMANN_DIRICHLET, u_resolution=256)
    exact = -a0 * math.pi**2 / 4
    rel = abs(sp.eigenvalues[0] - exact) / abs(exact)
    coeff = DiffusionCoefficient.from_medium(N1, CovarianceSpec.cosine_band(A, D))
    gsp = sturm_liouville_spectrum(coeff, NEUMANN_DIRICHLET, u_resolution=256)
    gap = gsp.eigenvalues[0] - gsp.eigenvalues[1]
    z = np.linspace(0.0, 12.0 / gap, 49)
    sol = solve_diffusion(coeff, lambda u: np.cos(0.5 * np.pi * u), NEUMANN_DIRICHLET, z, u_resolution=256)
    late = z >= 6.0 / gap
    slope = np.polyfit(z[late], np.log(sol.l2_norm()[late]), 1)[0]
    srel = abs(slope - gsp.eigenvalues[0]) / abs(gsp.eigenvalues[0])
    ok = bool(rel <= 1e-6 and srel <= 0.01)
    return ok, (f"constant: rel err {rel:.1e} (raw {abs(sp.raw_eigenvalues[0] - exact) / abs(exact):.1e}); "
                f"generic: lambda_1={gsp.eigenvalues[0]:.6f} slope={slope:.6f} rel {srel:.1e}")


def criterion_10():
    """Continuum convergence: N = 25..200, L2 distance decreases in N for both boundary regimes, < 5 min."""
    spec = CovarianceSpec.cosine_band(A, D)
    coeff = DiffusionCoefficient.from_medium(N1, spec)
    t = time.perf_counter()
    ladder = [compute_coefficients(solve_modes(_guide(N + 0.5)), spec, kappa=False) for N in (25, 50, 100, 200)]
    z = np.array([0.1, 1.0, 5.0]) / coeff.a0
    phi = lambda u: np.cos(0.5 * np.pi * np.asarray(u))  # noqa: E731
    notes, ok = [], [c.N for c in ladder] == [25, 50, 100, 200]
    for bc in (NEUMANN_DIRICHLET, NEUMANN_NEUMANN):
        chk = continuum_limit_check(ladder, phi, z, bc, coeff=coeff)
        ok &= bool(chk.monotone.all())
        notes.append(f"{bc}: d(N=25)={np.array2string(chk.distance[0], formatter={'float': '{:.2e}'.format})} "
                     f"d(N=200)={np.array2string(chk.distance[-1], formatter={'float': '{:.2e}'.format})} "
                     f"rates~{chk.rates.mean():.2f}")
    dt = time.perf_counter() - t
    ok &= dt < 300.0
    return bool(ok), "; ".join(notes) + f"; t={dt:.1f}s"


def criterion_11():
    """Lossless equilibration: sup|T - int phi| <= C exp(lambda_1 z), fitted exponent within 5%."""
    coeff = DiffusionCoefficient.from_medium(N1, CovarianceSpec.cosine_band(A, D))
    sp = sturm_liouville_spectrum(coeff, NEUMANN_NEUMANN)
    lam1 = sp.eigenvalues[1]
    z = np.linspace(0.0, 6.0 / abs(lam1), 61)
    sol = solve_diffusion(coeff, lambda u: np.cos(0.5 * np.pi * np.asarray(u)), NEUMANN_NEUMANN, z)
    mean = sol.mass()[0]
    sup = np.abs(sol.values - mean).max(axis=1)
    fit = z >= 1.0 / abs(lam1)
    slope, logC = np.polyfit(z[fit], np.log(sup[fit]), 1)
    C = float((sup * np.exp(-lam1 * z)).max())
    rel = abs(slope - lam1) / abs(lam1)
    bound = bool(np.all(sup <= C * np.exp(lam1 * z) * (1 + 1e-12)))
    ok = bool(rel <= 0.05 and bound and np.isfinite(C))
    return ok, f"lambda_1={lam1:.6f} fitted={slope:.6f} rel {rel:.1e}; C={C:.4f}"


CRITERIA = [criterion_01, criterion_02, criterion_03, criterion_04, criterion_05, criterion_06,
            criterion_07, criterion_08, criterion_09, criterion_10, criterion_11]


def _line(i, ok, detail):
    title = CRITERIA[i - 1].__doc__.split(":")[0].strip()
    return f"criterion {i:2d} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"


@pytest.mark.parametrize("i", range(1, len(CRITERIA) + 1))
def test_criterion(i, capsys):
    ok, detail = CRITERIA[i - 1]()
    with capsys.disabled():
        print("\n" + _line(i, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for i in range(1, len(CRITERIA) + 1):
        ok, detail = CRITERIA[i - 1]()
        failed += not ok
        print(_line(i, ok, detail), flush=True)
    sys.exit(1 if failed else 0)

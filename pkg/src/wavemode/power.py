"""Coupled power equations and the mean mode amplitude.

The mean mode powers ``T_j^l(z)`` (energy in mode ``j`` at range ``z`` for a
unit source in mode ``l``) solve the constant-coefficient linear system

    dT/dz = (Gamma^c - diag(Lambda^c)) T,   T(0) = I.

The generator has nonnegative off-diagonal entries and nonpositive column
sums, so ``T`` stays entrywise nonnegative and total energy never grows.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .coupling import CouplingCoefficients
from .errors import InstabilityDetected, WavemodeError

__all__ = [
    "PowerTrajectory",
    "solve_coupled_power",
    "total_energy",
    "mean_amplitude_decay",
    "method_discrepancy",
    "write_trajectory_csv",
]

RK_RTOL = 1e-10
RK_ATOL = 1e-12
# Entries below -NEG_TOL * max|T| are reported as solver failures.
NEG_TOL = 1e-12


@dataclass(frozen=True)
class PowerTrajectory:
    """``T[m, j, l] = T_j^l(z_m)`` sampled on ``z_grid``."""

    z_grid: np.ndarray
    T: np.ndarray
    coeffs: CouplingCoefficients = field(repr=False)
    method: str = "expm"

    @property
    def N(self) -> int:
        return self.T.shape[1]

    def total_energy(self, l=None):
        """``sum_j T_j^l(z)``: shape ``(M, N)``, or ``(M,)`` for one 1-based ``l``."""
        tot = self.T.sum(axis=1)
        return tot if l is None else tot[:, l - 1]

    def to_csv(self, path):
        write_trajectory_csv(self, path)


def _check_grid(z_grid):
    z = np.asarray(z_grid, dtype=float).ravel()
    if z.size == 0:
        raise ValueError("z_grid is empty")
    if z[0] < 0 or np.any(np.diff(z) <= 0):
        raise ValueError("z_grid must be nonnegative and strictly increasing")
    return z


def _expm_path(G, z):
    return np.stack([expm(G * zm) for zm in z])


def _rk_path(G, z):
    n = G.shape[0]

    def rhs(_, y):
        return (G @ y.reshape(n, n)).ravel()

    sol = solve_ivp(rhs, (0.0, float(z[-1])), np.eye(n).ravel(), method="DOP853",
                    t_eval=z, rtol=RK_RTOL, atol=RK_ATOL)
    if not sol.success:
        raise WavemodeError(f"Runge-Kutta solve failed: {sol.message}")
    return sol.y.T.reshape(z.size, n, n)


def solve_coupled_power(coeffs: CouplingCoefficients, z_grid, method: str = "expm") -> PowerTrajectory:
    """Solve the coupled power equations on a caller-supplied grid.

    Parameters
    ----------
    coeffs
        Coupling data; only ``gamma_c`` and ``lambda_c`` enter.
    z_grid
        Strictly increasing, nonnegative ranges.
    method
        ``"expm"`` (matrix exponential at every grid point) or ``"rk"``
        (adaptive Dormand-Prince 8(5,3), ``rtol=1e-10``, ``atol=1e-12``).

    Raises
    ------
    InstabilityDetected
        If any entry is negative beyond roundoff.
    """
    z = _check_grid(z_grid)
    G = coeffs.transport_matrix()
    if method == "expm":
        T = _expm_path(G, z)
    elif method == "rk":
        T = _rk_path(G, z)
    else:
        raise ValueError(f"unknown method {method!r}")
    scale = max(float(np.abs(T).max()), 1.0)
    if T.min() < -NEG_TOL * scale:
        raise InstabilityDetected(f"negative mean power {T.min():.3e} from the {method} solve")
    return PowerTrajectory(z_grid=z, T=T, coeffs=coeffs, method=method)


def method_discrepancy(a: PowerTrajectory, b: PowerTrajectory, floor: float = 1e-12) -> float:
    """Largest entrywise relative difference, with ``floor * max|T|`` guarding tiny entries."""
    if a.T.shape != b.T.shape or not np.array_equal(a.z_grid, b.z_grid):
        raise ValueError("trajectories are sampled differently")
    ref = np.maximum(np.abs(a.T), floor * np.abs(a.T).max())
    return float((np.abs(a.T - b.T) / ref).max())


def total_energy(traj: PowerTrajectory, l: int | None = None):
    return traj.total_energy(l)


def mean_amplitude_decay(coeffs: CouplingCoefficients, j: int, z):
    """Mean amplitude factor of mode ``j`` (1-based) at ranges ``z``.

    ``exp[(Gc_jj - G1_jj - Lc_j) z / 2 + i ((Gs_jj - Ls_j) / 2 + kappa_j) z]``
    """
    if not 1 <= j <= coeffs.N:
        raise IndexError(f"mode index {j} outside 1..{coeffs.N}")
    i = j - 1
    z = np.asarray(z, dtype=float)
    rate = 0.5 * (coeffs.gamma_c[i, i] - coeffs.gamma_1[i, i] - coeffs.lambda_c[i])
    phase = 0.5 * (coeffs.gamma_s[i, i] - coeffs.lambda_s[i]) + coeffs.kappa[i]
    return np.exp(rate * z + 1j * phase * z)


def write_trajectory_csv(traj: PowerTrajectory, path):
    """Write ``z,j,l,T`` rows (1-based mode indices)."""
    path = Path(path)
    n = traj.N
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["z", "j", "l", "T"])
        for m, zm in enumerate(traj.z_grid):
            for j in range(n):
                for l in range(n):
                    w.writerow([repr(float(zm)), j + 1, l + 1, repr(float(traj.T[m, j, l]))])

"""Exponential decay rate of the total propagating energy.

The decay rate is the bottom of the spectrum of the symmetric matrix
``-Gamma^c + diag(Lambda^c)``.  When ``Gamma^c`` is irreducible its lowest
eigenvector can be chosen positive, so the infimum over the nonnegative unit
sphere is attained without the sign constraint becoming active.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh

from .coupling import CouplingCoefficients
from .errors import InsufficientHorizon, ReducibleTransportMatrix, WavemodeError
from .power import PowerTrajectory

__all__ = [
    "DecayAnalysis",
    "RegimeSweep",
    "decay_rate",
    "spectral_gap",
    "is_irreducible",
    "regime_sweep",
    "regime_limit",
    "fit_slope",
    "projected_gradient_minimum",
    "REGIMES",
]

REGIMES = ("weak_coupling", "strong_coupling", "weak_loss")
GAP_HORIZON = 10.0


@dataclass(frozen=True)
class DecayAnalysis:
    lambda_inf: float
    minimizer: np.ndarray
    lower_bound: float
    upper_bound: float
    lambda_2: float
    fitted_slope: float | None = None

    @property
    def gap(self) -> float:
        """Spectral gap ``lambda_2 - lambda_1`` of ``-Gamma^c + diag(Lambda^c)``."""
        return self.lambda_2 - self.lambda_inf

    def sandwich_holds(self) -> bool:
        return self.lower_bound <= self.lambda_inf <= self.upper_bound


def is_irreducible(gamma_c) -> bool:
    """Connectivity of the graph with an edge wherever an off-diagonal entry is nonzero."""
    G = np.asarray(gamma_c)
    n = G.shape[0]
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    rows, cols = np.nonzero(G)
    for i, j in zip(rows, cols):
        if i != j:
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[ri] = rj
    return len({find(i) for i in range(n)}) == 1


def _operator(coeffs: CouplingCoefficients):
    A = -coeffs.gamma_c + np.diag(coeffs.lambda_c)
    return 0.5 * (A + A.T)


def decay_rate(coeffs: CouplingCoefficients, check_irreducible: bool = True) -> DecayAnalysis:
    """``Lambda_inf = min`` eigenvalue of ``-Gamma^c + diag(Lambda^c)``, with its eigenvector.

    The bounds ``min Lambda^c <= Lambda_inf <= mean Lambda^c`` hold exactly in
    theory.  An eigenvalue outside them by no more than roundoff is moved onto
    the bound; a larger violation is an error.

    Raises
    ------
    ReducibleTransportMatrix
        If the support of ``Gamma^c`` splits the modes into disconnected groups.
    """
    if check_irreducible and not is_irreducible(coeffs.gamma_c):
        raise ReducibleTransportMatrix("Gamma^c off-diagonal support is not connected")
    A = _operator(coeffs)
    n = A.shape[0]
    w, V = eigh(A, subset_by_index=[0, min(1, n - 1)])
    x = V[:, 0]
    if x.sum() < 0:
        x = -x
    if x.min() < -1e-10:
        raise WavemodeError(f"lowest eigenvector has a negative entry {x.min():.3e}")
    x = np.clip(x, 0.0, None)
    x /= np.linalg.norm(x)
    lo = float(coeffs.lambda_c.min())
    hi = float(coeffs.lambda_c.mean())
    tol = 64 * np.finfo(float).eps * max(np.abs(A).sum(axis=1).max(), 1e-300)
    if not lo - tol <= w[0] <= hi + tol:
        raise WavemodeError(f"eigenvalue {w[0]!r} violates the bounds [{lo!r}, {hi!r}]")
    lam = float(np.clip(w[0], lo, hi))
    lam2 = float(w[1]) if n > 1 else np.inf
    return DecayAnalysis(lambda_inf=lam, minimizer=x, lower_bound=lo, upper_bound=hi, lambda_2=lam2)


def spectral_gap(coeffs: CouplingCoefficients) -> tuple[float, float]:
    """The two smallest eigenvalues of ``-Gamma^c + diag(Lambda^c)``."""
    A = _operator(coeffs)
    w = eigh(A, eigvals_only=True, subset_by_index=[0, min(1, A.shape[0] - 1)])
    return float(w[0]), float(w[-1])


def projected_gradient_minimum(A, x0=None, tol=1e-13, max_iter=200000):
    """Minimise ``<A x, x>`` over the nonnegative unit sphere by projected gradient.

    Meant as an independent check of the eigenvalue route on small systems.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    x = np.full(n, 1.0 / np.sqrt(n)) if x0 is None else np.asarray(x0, float)
    step = 0.5 / max(np.abs(A).sum(axis=1).max(), 1e-300)
    val = x @ A @ x
    for _ in range(max_iter):
        y = np.clip(x - step * 2.0 * (A @ x), 0.0, None)
        nrm = np.linalg.norm(y)
        if nrm == 0:
            break
        y /= nrm
        new = y @ A @ y
        if abs(new - val) <= tol * max(1.0, abs(val)) and np.linalg.norm(y - x) < 1e-10:
            x, val = y, new
            break
        x, val = y, new
    return float(val), x


def fit_slope(traj: PowerTrajectory, z_min: float, l: int | None = None,
              analysis: DecayAnalysis | None = None) -> float:
    """Least-squares slope of ``ln sum_j T_j^l(z)`` over ``z >= z_min``.

    With ``l=None`` the energy summed over all sources is used.  The horizon
    must clear the spectral gap: ``(lambda_2 - lambda_1) z_min >= 10``.

    Raises
    ------
    InsufficientHorizon
        If the gap condition fails or fewer than two grid points qualify.
    """
    analysis = analysis or decay_rate(traj.coeffs, check_irreducible=False)
    if analysis.gap * z_min < GAP_HORIZON:
        raise InsufficientHorizon(
            f"gap*z_min = {analysis.gap * z_min:.3g} < {GAP_HORIZON}; increase z_min to "
            f"{GAP_HORIZON / analysis.gap:.4g}")
    sel = traj.z_grid >= z_min
    if sel.sum() < 2:
        raise InsufficientHorizon("fewer than two grid points beyond z_min")
    E = traj.total_energy()
    E = E.sum(axis=1) if l is None else E[:, l - 1]
    slope, _ = np.polyfit(traj.z_grid[sel], np.log(E[sel]), 1)
    return float(slope)


@dataclass(frozen=True)
class RegimeSweep:
    """Decay rates of rescaled coefficient sets for a decreasing ``tau`` list.

    ``scaled`` holds ``Lambda_inf^tau / tau`` where the regime's limit is of
    that form, otherwise ``Lambda_inf^tau`` itself.
    """

    regime: str
    tau: np.ndarray
    lambda_tau: np.ndarray
    scaled: np.ndarray
    limit: float

    @property
    def relative_error(self) -> np.ndarray:
        return np.abs(self.scaled - self.limit) / abs(self.limit)


def _rescale(coeffs, tau, regime):
    if regime == "weak_coupling":
        return coeffs.rescaled(coupling=tau)
    if regime == "strong_coupling":
        return coeffs.rescaled(coupling=1.0 / tau)
    if regime == "weak_loss":
        return coeffs.rescaled(loss=tau)
    raise ValueError(f"unknown regime {regime!r}; expected one of {REGIMES}")


def _divides_by_tau(coeffs, regime):
    if regime == "weak_loss":
        return True
    return regime == "weak_coupling" and bool(np.any(coeffs.lambda_c == 0))


def regime_limit(coeffs: CouplingCoefficients, regime: str) -> float:
    """Limit of the (possibly ``1/tau``-scaled) decay rate as ``tau -> 0``.

    * weak coupling, all losses positive: ``min Lambda^c``
    * weak coupling, some zero loss: lowest eigenvalue of ``-Gamma^c``
      restricted to the lossless modes (limit of ``Lambda^tau / tau``)
    * strong coupling: ``mean Lambda^c``
    * weak loss: ``mean Lambda^c`` (limit of ``Lambda^tau / tau``)
    """
    lam = coeffs.lambda_c
    if regime == "weak_coupling":
        zero = lam == 0
        if not zero.any():
            return float(lam.min())
        if zero.all():
            raise ValueError("weak-coupling limit is undefined when every loss rate vanishes")
        sub = -coeffs.gamma_c[np.ix_(zero, zero)]
        return float(eigh(0.5 * (sub + sub.T), eigvals_only=True)[0])
    if regime in ("strong_coupling", "weak_loss"):
        return float(lam.mean())
    raise ValueError(f"unknown regime {regime!r}; expected one of {REGIMES}")


def regime_sweep(coeffs: CouplingCoefficients, tau_list, regime: str) -> RegimeSweep:
    tau = np.asarray(tau_list, dtype=float)
    if tau.size == 0 or np.any(tau <= 0):
        raise ValueError("tau_list must hold positive values")
    if np.any(np.diff(tau) >= 0):
        raise ValueError("tau_list must decrease toward 0")
    limit = regime_limit(coeffs, regime)
    div = _divides_by_tau(coeffs, regime)
    rates = np.array([decay_rate(_rescale(coeffs, t, regime), check_irreducible=False).lambda_inf
                      for t in tau])
    scaled = rates / tau if div else rates.copy()
    return RegimeSweep(regime=regime, tau=tau, lambda_tau=rates, scaled=scaled, limit=limit)

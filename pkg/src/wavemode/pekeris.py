"""Mode spectrum of the Pekeris waveguide.

The transverse operator ``d^2/dx^2 + k^2 n(x)^2`` on ``[0, inf)`` with a
Dirichlet condition at the surface, index ``n1`` on ``[0, d]`` and index 1
below, has finitely many trapped (propagating) modes plus a continuum of
radiating (``0 < gamma < k^2``) and evanescent (``gamma < 0``) modes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import (
    IndexOutOfRange,
    InvalidSpectralParameter,
    NoPropagatingModes,
    RootNotBracketed,
    WavemodeError,
)

__all__ = [
    "WaveguideParams",
    "ModeSet",
    "RadiatingModeParams",
    "mode_count",
    "solve_modes",
    "normalization_A",
    "discrete_mode_shape",
    "radiating_mode_params",
    "radiating_branch",
    "radiating_branch_angle",
    "dispersion_residual",
]

ROOT_RTOL = 1e-12
ROOT_MAXITER = 60


@dataclass(frozen=True)
class WaveguideParams:
    """Ocean index ``n1``, depth ``d`` and free-space wavenumber ``k``."""

    n1: float
    d: float
    k: float

    def __post_init__(self):
        if not self.n1 > 1.0:
            raise ValueError(f"n1 must exceed 1, got {self.n1}")
        if not self.d > 0.0:
            raise ValueError(f"depth d must be positive, got {self.d}")
        if not self.k > 0.0:
            raise ValueError(f"wavenumber k must be positive, got {self.k}")

    @property
    def theta(self) -> float:
        return math.sqrt(1.0 - 1.0 / self.n1**2)

    @property
    def M(self) -> float:
        """Dimensionless cutoff ``n1 k d theta``; trapped modes have sigma < M."""
        return self.n1 * self.k * self.d * self.theta

    @classmethod
    def from_mode_parameter(cls, n1: float, d: float, m_over_pi: float) -> "WaveguideParams":
        """Build parameters whose cutoff ``n1 k d theta`` equals ``m_over_pi * pi``."""
        theta = math.sqrt(1.0 - 1.0 / n1**2)
        k = m_over_pi * math.pi / (n1 * d * theta)
        return cls(n1=n1, d=d, k=k)


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ModeSet:
    """The discrete spectrum at one frequency.

    Arrays are indexed from 0, mode ``j`` (1-based) lives at position ``j-1``.
    """

    params: WaveguideParams
    sigma: np.ndarray
    beta: np.ndarray
    zeta: np.ndarray
    A: np.ndarray
    dropped: int = field(default=0)

    def __post_init__(self):
        for name in ("sigma", "beta", "zeta", "A"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))

    @property
    def N(self) -> int:
        return int(self.sigma.size)

    def mode(self, j: int) -> tuple[float, float, float, float]:
        """Return ``(sigma_j, beta_j, zeta_j, A_j)`` for a 1-based index."""
        if not 1 <= j <= self.N:
            raise IndexOutOfRange(f"mode index {j} outside 1..{self.N}")
        i = j - 1
        return float(self.sigma[i]), float(self.beta[i]), float(self.zeta[i]), float(self.A[i])


@dataclass(frozen=True)
class RadiatingModeParams:
    gamma: float
    eta: float
    xi: float
    A_gamma: float


def mode_count(params: WaveguideParams) -> int:
    """Number of propagating modes, ``floor(n1 k d theta / pi)``."""
    return int(math.floor(params.M / math.pi))


def dispersion_residual(y, M):
    """Pole-free form of ``tan y = -y / sqrt(M^2 - y^2)``.

    ``f(y) = sin(y) sqrt(M^2 - y^2) + y cos(y)``; its zeros in ``(0, M)`` are
    the transverse wavenumbers ``sigma_j``.
    """
    y = np.asarray(y, dtype=float)
    return np.sin(y) * np.sqrt(np.maximum(M * M - y * y, 0.0)) + y * np.cos(y)


def normalization_A(params: WaveguideParams, sigma_j, zeta_j):
    """L2 normalisation of the discrete mode with parameters ``(sigma_j, zeta_j)``."""
    sigma_j = np.asarray(sigma_j, dtype=float)
    zeta_j = np.asarray(zeta_j, dtype=float)
    denom = 1.0 + np.sin(sigma_j) ** 2 / zeta_j - np.sin(2.0 * sigma_j) / (2.0 * sigma_j)
    out = np.sqrt((2.0 / params.d) / denom)
    return float(out) if out.ndim == 0 else out


def solve_modes(params: WaveguideParams) -> ModeSet:
    """Solve the dispersion relation for every trapped mode.

    Each ``sigma_j`` lies in ``(pi/2 + (j-1) pi, pi/2 + j pi)``; Brent's method
    is run on the sign-changing sub-bracket ``((j - 1/2) pi, j pi]`` of the
    pole-free residual.

    Raises
    ------
    NoPropagatingModes
        If ``floor(M / pi) == 0``.
    RootNotBracketed
        If an interior interval shows no sign change.
    """
    M = params.M
    n = mode_count(params)
    if n == 0:
        raise NoPropagatingModes(f"n1*k*d*theta = {M:.6g} < pi: no trapped modes")

    def f(y):
        return math.sin(y) * math.sqrt(max(M * M - y * y, 0.0)) + y * math.cos(y)

    tol = ROOT_RTOL * M
    sigma = []
    dropped = 0
    for j in range(1, n + 1):
        # tan y < 0 at a root, so it lies in ((j - 1/2) pi, j pi); the right end
        # is at most M and f(j pi) = (-1)^j j pi never vanishes.
        lo = math.pi / 2 + (j - 1) * math.pi
        hi = min(j * math.pi, M)
        flo, fhi = f(lo), f(hi)
        if lo >= hi or flo * fhi > 0.0:
            if j == n:
                warnings.warn(
                    f"mode {j} has no sign change below the cutoff M={M!r}; dropped",
                    RuntimeWarning,
                    stacklevel=2,
                )
                dropped += 1
                break
            raise RootNotBracketed(f"no sign change of the dispersion residual on ({lo}, {hi})")
        if fhi == 0.0:
            root = hi
        else:
            root = brentq(f, lo, hi, xtol=1e-15 * max(1.0, hi), rtol=4 * np.finfo(float).eps,
                          maxiter=ROOT_MAXITER)
        if abs(f(root)) > tol:
            raise WavemodeError(f"mode {j}: residual {abs(f(root)):.3e} exceeds {tol:.3e}")
        sigma.append(root)

    if not sigma:
        raise NoPropagatingModes("every candidate mode was dropped at the cutoff")
    sigma = np.array(sigma)
    k, n1, d = params.k, params.n1, params.d
    beta = np.sqrt(n1 * n1 * k * k - (sigma / d) ** 2)
    zeta = np.sqrt(M * M - sigma * sigma)
    A = normalization_A(params, sigma, zeta)
    return ModeSet(params=params, sigma=sigma, beta=beta, zeta=zeta, A=np.atleast_1d(A), dropped=dropped)


def discrete_mode_shape(mode_set: ModeSet, j: int, x):
    """Evaluate the ``j``-th trapped mode profile at depth(s) ``x >= 0``."""
    sigma, _, zeta, A = mode_set.mode(j)
    d = mode_set.params.d
    x = np.asarray(x, dtype=float)
    inside = A * np.sin(sigma * np.minimum(x, d) / d)
    tail = A * math.sin(sigma) * np.exp(-zeta * np.maximum(x - d, 0.0) / d)
    out = np.where(x <= d, inside, tail)
    return float(out) if out.ndim == 0 else out


def radiating_branch(params: WaveguideParams, gamma):
    """Vectorised ``(eta, xi, A_gamma^2)`` for spectral parameters ``gamma < k^2``."""
    gamma = np.asarray(gamma, dtype=float)
    k2 = params.k**2
    if np.any(gamma >= k2):
        raise InvalidSpectralParameter(f"gamma must be below k^2 = {k2!r}")
    d, n1 = params.d, params.n1
    eta = d * np.sqrt(n1 * n1 * k2 - gamma)
    xi = d * np.sqrt(k2 - gamma)
    a2 = d * xi / (math.pi * (xi**2 * np.sin(eta) ** 2 + eta**2 * np.cos(eta) ** 2))
    return eta, xi, a2


def radiating_branch_angle(params: WaveguideParams, t):
    """:func:`radiating_branch` at ``gamma = k^2 sin^2 t`` for ``t`` in ``[0, pi/2)``.

    ``xi = k d cos t`` is formed directly, avoiding the cancellation in
    ``k^2 - gamma`` near the top of the radiating band.
    """
    t = np.asarray(t, dtype=float)
    k, d, n1 = params.k, params.d, params.n1
    c = np.cos(t)
    xi = k * d * c
    eta = k * d * np.sqrt(n1 * n1 - 1.0 + c * c)
    a2 = d * xi / (math.pi * (xi**2 * np.sin(eta) ** 2 + eta**2 * np.cos(eta) ** 2))
    return eta, xi, a2


def radiating_mode_params(params: WaveguideParams, gamma: float) -> RadiatingModeParams:
    """Continuum-mode parameters for a single ``gamma`` (radiating or evanescent)."""
    eta, xi, a2 = radiating_branch(params, gamma)
    return RadiatingModeParams(gamma=float(gamma), eta=float(eta), xi=float(xi),
                               A_gamma=float(np.sqrt(a2)))

"""High-frequency diffusion limit of the coupled power equations.

For many modes the mean powers approach ``T(z, u)`` with ``u = j / N``,

    dT/dz = d/du ( a_inf(u) dT/du ),   dT/du(z, 0) = 0,

and either ``T(z, 1) = 0`` (radiative loss through the bottom) or
``dT/du(z, 1) = 0`` (no loss).  The operator is discretised by cell-centred
finite volumes, which keeps it symmetric and conservative; the same
tridiagonal matrix drives both the Crank-Nicolson solver and the
Sturm-Liouville eigen-solver.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import eigh_tridiagonal, expm, solve_banded

from .coupling import CouplingCoefficients
from .errors import DomainError, InstabilityDetected, KernelNotBandLimited
from .medium import CovarianceSpec, band_limited_check, eval_S

__all__ = [
    "NEUMANN_DIRICHLET",
    "NEUMANN_NEUMANN",
    "DiffusionCoefficient",
    "DiffusionSolution",
    "SturmLiouvilleSpectrum",
    "ContinuumCheck",
    "a_infinity",
    "diffusion_operator",
    "solve_diffusion",
    "sturm_liouville_spectrum",
    "continuum_limit_check",
    "discrete_profile",
    "write_solution_csv",
    "write_spectrum_csv",
]

NEUMANN_DIRICHLET = "NeumannDirichlet"
NEUMANN_NEUMANN = "NeumannNeumann"
_BC_ALIASES = {
    "neumanndirichlet": NEUMANN_DIRICHLET,
    "lossy": NEUMANN_DIRICHLET,
    "dirichlet": NEUMANN_DIRICHLET,
    "neumannneumann": NEUMANN_NEUMANN,
    "lossless": NEUMANN_NEUMANN,
    "neumann": NEUMANN_NEUMANN,
}
DEFAULT_RESOLUTION = 256
NEG_TOL = 1e-8


def normalize_bc(bc: str) -> str:
    key = str(bc).replace("-", "").replace("_", "").replace(" ", "").lower()
    try:
        return _BC_ALIASES[key]
    except KeyError:
        raise ValueError(f"unknown boundary condition {bc!r}; use {NEUMANN_DIRICHLET} or "
                         f"{NEUMANN_NEUMANN}") from None


@dataclass(frozen=True)
class DiffusionCoefficient:
    """``a_inf(u) = a0 / (1 - (1 - ratio) (theta u)^2)`` with ``ratio = pi^2 / (a d)^2``."""

    a0: float
    theta: float
    ratio: float
    S0: float | None = None

    def __post_init__(self):
        if not self.a0 > 0:
            raise ValueError(f"a0 must be positive, got {self.a0}")
        if not 0 < self.theta < 1:
            raise ValueError(f"theta must lie in (0, 1), got {self.theta}")
        if not self.ratio > 0:
            raise ValueError(f"ratio must be positive, got {self.ratio}")
        if (1.0 - self.ratio) * self.theta**2 >= 1.0:
            raise ValueError("a_inf is not positive on [0, 1]: (1 - ratio) theta^2 >= 1")

    @classmethod
    def from_medium(cls, n1: float, spec: CovarianceSpec) -> "DiffusionCoefficient":
        """Coefficient for index ``n1`` and medium statistics ``spec``.

        ``a0 = pi^2 S0 / (2 a n1^4 d^4 theta^2)`` with ``S0 = S(pi, pi)``.

        Raises
        ------
        DomainError
            If ``S0`` is not positive (e.g. kernels even about ``d / 2``).
        """
        theta = math.sqrt(1.0 - 1.0 / n1**2)
        a, d = spec.a, spec.d
        S0 = float(eval_S(spec, math.pi, math.pi))
        scale = max(abs(float(eval_S(spec, 0.0, 0.0))), abs(S0))
        if not S0 > 1e-10 * scale:
            raise DomainError(f"S(pi, pi) = {S0:.3e} is not positive; the medium gives no diffusion")
        a0 = math.pi**2 * S0 / (2.0 * a * n1**4 * d**4 * theta**2)
        return cls(a0=a0, theta=theta, ratio=math.pi**2 / (a * d) ** 2, S0=S0)

    @classmethod
    def constant(cls, a0: float, theta: float = 0.5) -> "DiffusionCoefficient":
        """Flat coefficient (``a d = pi``)."""
        return cls(a0=a0, theta=theta, ratio=1.0)

    def __call__(self, u):
        return a_infinity(self, u)


def a_infinity(coeff: DiffusionCoefficient, u):
    u = np.asarray(u, dtype=float)
    if np.any((u < 0) | (u > 1)) or np.any(np.isnan(u)):
        raise DomainError("a_inf is defined on [0, 1] only")
    out = coeff.a0 / (1.0 - (1.0 - coeff.ratio) * (coeff.theta * u) ** 2)
    return float(out) if out.ndim == 0 else out


def diffusion_operator(coeff: DiffusionCoefficient, bc: str, n: int):
    """Diagonal and off-diagonal of the ``n``-cell finite-volume operator.

    Cells have centres ``(i + 1/2) h``; fluxes use ``a_inf`` at the faces
    ``i h``.  A zero-flux face closes each Neumann end, and the Dirichlet end
    uses the antisymmetric ghost value ``T_ghost = -T_{n-1}``.
    """
    bc = normalize_bc(bc)
    h = 1.0 / n
    af = a_infinity(coeff, np.arange(n + 1) * h)
    left = af[:-1].copy()
    right = af[1:].copy()
    left[0] = 0.0
    if bc == NEUMANN_NEUMANN:
        right[-1] = 0.0
    else:
        right[-1] = 2.0 * af[-1]
    diag = -(left + right) / h**2
    off = af[1:-1] / h**2
    return diag, off


def _cell_averages(phi, n):
    """Cell averages of a callable (4-point Gauss per cell) or checked samples."""
    if callable(phi):
        t, w = np.polynomial.legendre.leggauss(4)
        h = 1.0 / n
        lo = np.arange(n) * h
        x = lo[:, None] + 0.5 * h * (t + 1.0)
        return np.asarray(phi(x), dtype=float) @ (0.5 * w)
    vals = np.asarray(phi, dtype=float).ravel()
    if vals.size == 1:
        return np.full(n, float(vals[0]))
    if vals.size != n:
        raise ValueError(f"phi has {vals.size} samples for {n} cells")
    return vals.copy()


@dataclass(frozen=True)
class DiffusionSolution:
    """``values[m, i] = T(z_m, u_i)`` on the cell centres ``u_grid``."""

    u_grid: np.ndarray
    z_grid: np.ndarray
    values: np.ndarray
    bc: str
    initial: np.ndarray
    coeff: DiffusionCoefficient = field(repr=False)
    dz: float = 0.0
    spatial_error: float = 0.0
    temporal_error: float = 0.0

    @property
    def h(self) -> float:
        return 1.0 / self.u_grid.size

    def mass(self):
        """``int_0^1 T(z, u) du`` for every ``z``."""
        return self.values.sum(axis=1) * self.h

    def l2_norm(self):
        return np.sqrt((self.values**2).sum(axis=1) * self.h)

    def boundary_values(self):
        """Face values at ``u = 0`` and ``u = 1`` implied by the ghost cells."""
        top = self.values[:, 0]
        if self.bc == NEUMANN_DIRICHLET:
            bottom = np.zeros_like(top)
        else:
            bottom = self.values[:, -1]
        return top, bottom

    def to_csv(self, path):
        write_solution_csv(self, path)


class _CrankNicolson:
    """Crank-Nicolson stepping with a Rannacher start (four implicit half steps)."""

    def __init__(self, diag, off):
        self.diag, self.off = diag, off
        self._cache = {}

    def _matvec(self, x):
        y = self.diag * x
        y[:-1] += self.off * x[1:]
        y[1:] += self.off * x[:-1]
        return y

    def _banded(self, c):
        key = float(c)
        if key not in self._cache:
            n = self.diag.size
            ab = np.zeros((3, n))
            ab[0, 1:] = -c * self.off
            ab[1, :] = 1.0 - c * self.diag
            ab[2, :-1] = -c * self.off
            self._cache[key] = ab
        return self._cache[key]

    def _implicit(self, x, dz):
        return solve_banded((1, 1), self._banded(dz), x, check_finite=False)

    def _cn(self, x, dz):
        rhs = x + 0.5 * dz * self._matvec(x)
        return solve_banded((1, 1), self._banded(0.5 * dz), rhs, check_finite=False)

    def run(self, x0, z_grid, dz_target):
        out = np.empty((z_grid.size, x0.size))
        x = x0.copy()
        z_prev = 0.0
        started = False
        for m, z in enumerate(z_grid):
            span = z - z_prev
            if span > 0:
                steps = max(1, int(math.ceil(span / dz_target - 1e-9)))
                dz = span / steps
                for s in range(steps):
                    if not started and s == 0:
                        for _ in range(4):
                            x = self._implicit(x, 0.25 * dz)
                        started = True
                    else:
                        x = self._cn(x, dz)
                z_prev = z
            out[m] = x
        return out


def _check_z(z_grid):
    z = np.asarray(z_grid, dtype=float).ravel()
    if z.size == 0 or z[0] < 0 or np.any(np.diff(z) <= 0):
        raise ValueError("z_grid must be nonnegative and strictly increasing")
    return z


def _coarsen(values):
    return 0.5 * (values[..., 0::2] + values[..., 1::2])


def _l2(diff, h):
    return float(np.sqrt((diff**2).sum(axis=-1) * h).max())


def solve_diffusion(coeff: DiffusionCoefficient, phi, bc: str, z_grid,
                    u_resolution: int = DEFAULT_RESOLUTION, dz: float | None = None,
                    max_halvings: int = 14) -> DiffusionSolution:
    """Crank-Nicolson solve of the continuum power equation.

    Parameters
    ----------
    phi
        Callable on ``[0, 1]`` (cell averages are taken) or ``u_resolution``
        cell values.
    bc
        ``"NeumannDirichlet"`` (lossy) or ``"NeumannNeumann"`` (lossless).
    dz
        Fixed step.  When omitted the step is halved until the step-halving
        estimate of the temporal error is below half the spatial error
        estimate (from a solve on twice as many cells).

    Raises
    ------
    InstabilityDetected
        If the solution dips below ``-1e-8 max|phi|``.
    """
    bc = normalize_bc(bc)
    n = int(u_resolution)
    if n < 32:
        raise ValueError("u_resolution must be at least 32")
    z = _check_z(z_grid)
    h = 1.0 / n
    x0 = _cell_averages(phi, n)
    scale = max(float(np.abs(x0).max()), 1e-300)
    stepper = _CrankNicolson(*diffusion_operator(coeff, bc, n))

    if dz is not None:
        vals = stepper.run(x0, z, float(dz))
        spatial = temporal = float("nan")
        step = float(dz)
    else:
        fine = _CrankNicolson(*diffusion_operator(coeff, bc, 2 * n))
        x0f = _cell_averages(phi, 2 * n) if callable(phi) else np.repeat(x0, 2)
        spans = np.diff(np.concatenate(([0.0], z)))
        spans = spans[spans > 0]
        # Halving must shorten the steps actually taken, so never start above the output spacing.
        step = min(float(z[-1]) / 16.0, float(spans.min())) if spans.size else h
        prev = stepper.run(x0, z, step)
        for _ in range(max_halvings):
            step *= 0.5
            vals = stepper.run(x0, z, step)
            temporal = _l2(vals - prev, h) / 3.0
            spatial = _l2(_coarsen(fine.run(x0f, z, step)) - vals, h) / 3.0
            if temporal <= 0.5 * spatial or temporal <= 1e-13 * scale:
                break
            prev = vals
    if vals.min() < -NEG_TOL * scale:
        raise InstabilityDetected(f"negative value {vals.min():.3e} in the diffusion solve")
    u = (np.arange(n) + 0.5) * h
    return DiffusionSolution(u_grid=u, z_grid=z, values=vals, bc=bc, initial=x0, coeff=coeff,
                             dz=step, spatial_error=spatial, temporal_error=temporal)


@dataclass(frozen=True)
class SturmLiouvilleSpectrum:
    """Leading eigenpairs, eigenvalues in decreasing order.

    ``eigenfunctions[:, i]`` is sampled on ``u_grid`` and has unit ``L^2(0, 1)``
    norm.  ``eigenvalues`` are Richardson-extrapolated from resolutions ``n``
    and ``2n`` when ``extrapolated`` is set; ``raw_eigenvalues`` are the
    resolution-``n`` values.
    """

    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    u_grid: np.ndarray
    bc: str
    raw_eigenvalues: np.ndarray
    extrapolated: bool

    @property
    def decay_rate(self) -> float:
        """``-lambda_1``: first eigenvalue (lossy) or first nonzero one (lossless)."""
        i = 1 if self.bc == NEUMANN_NEUMANN else 0
        return -float(self.eigenvalues[i])


def _top_eigs(coeff, bc, n, k, vectors):
    diag, off = diffusion_operator(coeff, bc, n)
    res = eigh_tridiagonal(diag, off, eigvals_only=not vectors, select="i",
                           select_range=(n - k, n - 1))
    if vectors:
        w, V = res
        return w[::-1], V[:, ::-1]
    return res[::-1], None


def sturm_liouville_spectrum(coeff: DiffusionCoefficient, bc: str, n_eigs: int = 4,
                             u_resolution: int = DEFAULT_RESOLUTION,
                             extrapolate: bool = True) -> SturmLiouvilleSpectrum:
    """Leading eigenpairs of the finite-volume operator.

    The scheme is second order in ``h`` with an even error expansion, so the
    combination ``(4 lambda(h/2) - lambda(h)) / 3`` removes the leading error.
    """
    bc = normalize_bc(bc)
    n = int(u_resolution)
    if n_eigs < 1 or n_eigs > n // 4:
        raise ValueError(f"n_eigs must lie in 1..{n // 4}")
    w, V = _top_eigs(coeff, bc, n, n_eigs, True)
    h = 1.0 / n
    V = V / math.sqrt(h)
    for i in range(V.shape[1]):
        if V[:, i].sum() < 0 or (abs(V[:, i].sum()) < 1e-12 and V[0, i] < 0):
            V[:, i] = -V[:, i]
    if extrapolate:
        w2, _ = _top_eigs(coeff, bc, 2 * n, n_eigs, False)
        ev = (4.0 * w2 - w) / 3.0
        if bc == NEUMANN_NEUMANN:
            # The zero mode is exact at every resolution; keep roundoff out of it.
            ev[0] = w[0]
    else:
        ev = w.copy()
    return SturmLiouvilleSpectrum(eigenvalues=ev, eigenfunctions=V, u_grid=(np.arange(n) + 0.5) * h,
                                  bc=bc, raw_eigenvalues=w, extrapolated=extrapolate)


def discrete_profile(T, phi, u):
    """``T^N_phi(u) = sum_j phi(j / N) T_j^{l(u)}`` with ``l(u) = clip(floor(N u), 1, N)``.

    ``T`` is the ``N x N`` matrix ``T[j, l]`` at one range.
    """
    N = T.shape[0]
    jj = np.arange(1, N + 1) / N
    weights = np.asarray(phi(jj), dtype=float) if callable(phi) else np.asarray(phi, float)
    col = weights @ T
    l = np.clip(np.floor(N * np.asarray(u)).astype(int), 1, N)
    return col[l - 1]


def _step_quadrature(edges, order=8):
    t, w = np.polynomial.legendre.leggauss(order)
    lo, hi = edges[:-1, None], edges[1:, None]
    half = 0.5 * (hi - lo)
    return (lo + half * (t + 1.0)).ravel(), (half * w).ravel()


@dataclass(frozen=True)
class ContinuumCheck:
    """``distance[i, m]``: ``L^2(0, 1)`` gap between the ``N_i`` discrete profile and the PDE at ``z_m``."""

    N: np.ndarray
    z: np.ndarray
    distance: np.ndarray
    bc: str

    @property
    def monotone(self) -> np.ndarray:
        """Per ``z``: distances strictly decrease along the ``N`` ladder."""
        return np.all(np.diff(self.distance, axis=0) < 0, axis=0)

    @property
    def rates(self) -> np.ndarray:
        """Observed orders ``log(d_i / d_{i+1}) / log(N_{i+1} / N_i)``."""
        return np.log(self.distance[:-1] / self.distance[1:]) / np.log(self.N[1:] / self.N[:-1])[:, None]


def continuum_limit_check(ladder, phi, z, bc: str, coeff: DiffusionCoefficient | None = None,
                          u_resolution: int = 512, n1: float | None = None) -> ContinuumCheck:
    """Compare discrete nearest-neighbour power profiles with the continuum PDE.

    Parameters
    ----------
    ladder
        :class:`CouplingCoefficients` for increasing ``N``, all built on one
        band-limited medium.
    phi
        Callable weight on ``[0, 1]``.
    z
        Ranges (physical units).
    bc
        ``"NeumannDirichlet"`` uses the computed losses; ``"NeumannNeumann"``
        drops them.

    Raises
    ------
    KernelNotBandLimited
        If any member's medium fails :func:`band_limited_check`.
    """
    bc = normalize_bc(bc)
    ladder = list(ladder)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    for c in ladder:
        if c.spec is None or not band_limited_check(c.spec):
            raise KernelNotBandLimited("continuum check needs a band-limited medium")
    if coeff is None:
        ms = ladder[0].mode_set
        coeff = DiffusionCoefficient.from_medium(ms.params.n1 if n1 is None else n1, ladder[0].spec)
    zg = np.unique(z)
    sol = solve_diffusion(coeff, phi, bc, zg, u_resolution=u_resolution)
    top, bottom = sol.boundary_values()
    u_knots = np.concatenate(([0.0], sol.u_grid, [1.0]))
    Ns, dist = [], np.zeros((len(ladder), z.size))
    for i, c in enumerate(ladder):
        G = c.gamma_c if bc == NEUMANN_NEUMANN else c.transport_matrix()
        N = c.N
        Ns.append(N)
        # The discrete profile is constant on [0, 2/N) and on each [l/N, (l+1)/N).
        u, w = _step_quadrature(np.concatenate(([0.0], np.arange(2, N + 1) / N)))
        for m, zm in enumerate(z):
            k = np.searchsorted(zg, zm)
            knots = np.concatenate(([top[k]], sol.values[k], [bottom[k]]))
            cont = np.interp(u, u_knots, knots)
            prof = discrete_profile(expm(G * zm), phi, u)
            dist[i, m] = math.sqrt(w @ (prof - cont) ** 2)
    return ContinuumCheck(N=np.array(Ns), z=z, distance=dist, bc=bc)


def write_solution_csv(sol: DiffusionSolution, path):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["z", "u", "value"])
        for m, zm in enumerate(sol.z_grid):
            for i, ui in enumerate(sol.u_grid):
                w.writerow([repr(float(zm)), repr(float(ui)), repr(float(sol.values[m, i]))])


def write_spectrum_csv(spec: SturmLiouvilleSpectrum, path):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "eigenvalue"])
        start = 0 if spec.bc == NEUMANN_NEUMANN else 1
        for i, ev in enumerate(spec.eigenvalues):
            w.writerow([i + start, repr(float(ev))])

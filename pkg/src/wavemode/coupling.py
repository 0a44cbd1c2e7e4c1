"""Statistical mode-coupling coefficients for an exponentially correlated medium.

With longitudinal correlation ``exp(-a|z|)`` every ``z``-integral in the
coefficient definitions is an elementary transform:

* cosine transform at frequency ``w``: ``a / (a^2 + w^2)``
* sine transform at frequency ``w``:   ``w / (a^2 + w^2)``
* ``exp(-s z) cos(beta z)`` Laplace-cosine transform: ``(a+s) / ((a+s)^2 + beta^2)``

so only the transverse overlaps (through ``S``) and the continuum integrals
over the spectral parameter ``gamma`` are computed numerically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NegativeLambda, NonSquareCoefficients, QuadratureNotConverged
from .medium import CovarianceSpec, quadrature_for
from .pekeris import ModeSet, radiating_branch, radiating_branch_angle

__all__ = [
    "ModeOverlap",
    "CouplingCoefficients",
    "overlap_discrete",
    "gamma_c_matrix",
    "gamma_s_matrix",
    "gamma_1_matrix",
    "lambda_c_vector",
    "lambda_s_vector",
    "kappa_vector",
    "compute_coefficients",
    "QUAD_RTOL",
]

QUAD_RTOL = 1e-10
GL_ORDER = 16
MAX_LEVELS = 9
# Evanescent integrals are resolved numerically up to this transverse frequency.
ETA_CAP = 1200.0


def _gl_panels(edges, order=GL_ORDER):
    t, w = np.polynomial.legendre.leggauss(order)
    lo, hi = edges[:-1, None], edges[1:, None]
    half = 0.5 * (hi - lo)
    return (lo + half * (t + 1.0)).ravel(), (half * w).ravel()


def _adaptive_gl(f, a, b, n_panels, rtol=QUAD_RTOL):
    """Composite Gauss-Legendre on ``[a, b]`` with panel doubling.

    ``f`` maps an array of ``P`` nodes to values of shape ``(..., P)``; every
    leading component must settle to ``rtol`` relative to the integral of its
    modulus.  Returns ``(value, x, w, fx)`` at the accepted level.
    """
    n = max(1, int(n_panels))
    x, w = _gl_panels(np.linspace(a, b, n + 1))
    fx = f(x)
    prev = fx @ w
    for _ in range(MAX_LEVELS):
        n *= 2
        x, w = _gl_panels(np.linspace(a, b, n + 1))
        fx = f(x)
        cur = fx @ w
        mag = np.abs(fx) @ w
        if np.all(np.abs(cur - prev) <= rtol * mag):
            return cur, x, w, fx
        prev = cur
    raise QuadratureNotConverged(f"panel doubling on [{a:.6g}, {b:.6g}] stalled at {n} panels")


@dataclass(frozen=True)
class ModeOverlap:
    """Transverse overlaps ``I_jl`` and the continuum overlap ``I_{j,gamma}``."""

    I: np.ndarray
    mode_set: ModeSet
    spec: CovarianceSpec

    def rule_for(self, eta_max):
        vmax = float(self.mode_set.sigma.max() + eta_max)
        if self.spec.band_limit is not None:
            vmax = min(vmax, self.spec.band_limit)
        return quadrature_for(self.spec, vmax)

    def I_jgamma(self, j, gamma, rule=None):
        """``I_{j,gamma}`` for a 1-based mode index and array of ``gamma < k^2``."""
        eta, _, a2 = radiating_branch(self.mode_set.params, gamma)
        return self.I_branch(j, eta, a2, rule)

    def I_branch(self, j, eta, a2, rule=None):
        """``I_{j,gamma}`` from precomputed continuum parameters ``eta`` and ``A_gamma^2``."""
        sigma, _, _, A = self.mode_set.mode(j)
        if rule is None:
            rule = self.rule_for(float(np.max(eta, initial=0.0)))
        if self.spec.band_limit is None:
            return A * A * a2 * rule.sine_quadratic(sigma, eta).reshape(np.shape(eta))
        dm, dp = sigma - eta, sigma + eta
        s = rule.pairs(dm, dm) + rule.pairs(dp, dp) - 2.0 * rule.pairs(dm, dp)
        return 0.25 * A * A * a2 * s

    def I_all(self, eta, a2, rule):
        """``I_{j,gamma}`` for every mode at once, shape ``(N, len(eta))``."""
        eta, a2 = np.atleast_1d(eta), np.atleast_1d(a2)
        if self.spec.band_limit is not None:
            return np.array([self.I_branch(j, eta, a2, rule) for j in range(1, self.mode_set.N + 1)])
        sq = rule.sine_quadratic_many(self.mode_set.sigma, eta)
        return (self.mode_set.A**2)[:, None] * a2[None, :] * sq


def overlap_discrete(mode_set: ModeSet, spec: CovarianceSpec) -> ModeOverlap:
    """Matrix ``I_jl = int int gamma0 phi_j phi_l (x) phi_j phi_l (y)`` via ``S``."""
    sig = mode_set.sigma
    A2 = mode_set.A**2
    n = sig.size
    ju, lu = np.triu_indices(n)
    dm = sig[ju] - sig[lu]
    dp = sig[ju] + sig[lu]
    vmax = float(2.0 * sig.max())
    if spec.band_limit is not None:
        vmax = min(vmax, spec.band_limit)
    rule = quadrature_for(spec, vmax)
    s = rule.pairs(dm, dm) + rule.pairs(dp, dp) - rule.pairs(dm, dp) - rule.pairs(dp, dm)
    I = np.zeros((n, n))
    I[ju, lu] = 0.25 * A2[ju] * A2[lu] * s
    I[lu, ju] = I[ju, lu]
    return ModeOverlap(I=I, mode_set=mode_set, spec=spec)


def _close_diagonal(G):
    G = G.copy()
    np.fill_diagonal(G, 0.0)
    np.fill_diagonal(G, -G.sum(axis=1))
    return G


def gamma_c_matrix(overlap: ModeOverlap, mode_set: ModeSet, spec: CovarianceSpec):
    """Energy transport matrix: symmetric, nonnegative off-diagonal, zero row sums."""
    k4 = mode_set.params.k ** 4
    b = mode_set.beta
    db = b[:, None] - b[None, :]
    G = spec.a * k4 * overlap.I / (2.0 * np.outer(b, b) * (spec.a**2 + db**2))
    G = 0.5 * (G + G.T)
    return _close_diagonal(G)


def gamma_s_matrix(overlap: ModeOverlap, mode_set: ModeSet, spec: CovarianceSpec):
    k4 = mode_set.params.k ** 4
    b = mode_set.beta
    db = b[None, :] - b[:, None]  # beta_l - beta_j
    G = k4 * overlap.I * db / (2.0 * np.outer(b, b) * (spec.a**2 + db**2))
    return _close_diagonal(G)


def _square_overlap(mode_set: ModeSet, spec: CovarianceSpec):
    """``J_jl = int int gamma0 phi_j^2(x) phi_l^2(y)`` through ``S`` at ``0`` and ``2 sigma``."""
    sig = mode_set.sigma
    A2 = mode_set.A**2
    F = np.concatenate(([0.0], 2.0 * sig))
    vmax = float(F.max())
    if spec.band_limit is not None:
        vmax = min(vmax, spec.band_limit)
    S = quadrature_for(spec, vmax).outer(F, F)
    J = S[0, 0] - S[0, 1:][None, :] - S[1:, 0][:, None] + S[1:, 1:]
    J = 0.25 * np.outer(A2, A2) * J
    return 0.5 * (J + J.T)


def gamma_1_matrix(mode_set: ModeSet, spec: CovarianceSpec):
    k4 = mode_set.params.k ** 4
    b = mode_set.beta
    return k4 * _square_overlap(mode_set, spec) / (2.0 * spec.a * np.outer(b, b))


def _radiating_window(mode_set, spec, j):
    """``t``-interval carrying the radiating integrand for mode ``j``.

    The radiating band ``0 < gamma < k^2`` is mapped to ``t in (0, pi/2)`` by
    ``gamma = k^2 sin^2 t``, which removes the ``1/sqrt(gamma)`` and
    ``sqrt(k^2 - gamma)`` endpoint behaviour.  Under a band limit only
    ``eta <= sigma_j + band_limit`` contributes.
    """
    p = mode_set.params
    kd = p.k * p.d
    hi = 0.5 * math.pi
    if spec.band_limit is None:
        return 0.0, hi
    eta_top = mode_set.sigma[j - 1] + spec.band_limit
    if eta_top <= p.M:
        return hi, hi
    s2 = ((p.n1 * kd) ** 2 - eta_top**2) / kd**2
    if s2 <= 0.0:
        return 0.0, hi
    return math.asin(min(1.0, math.sqrt(s2))), hi


def _angle_branch(params, t):
    eta, _, a2 = radiating_branch_angle(params, t)
    return eta, a2


def _radiating_panels(mode_set):
    p = mode_set.params
    return max(4, int(math.ceil(2.0 * (p.n1 * p.k * p.d - p.M) / math.pi)))


def _radiating_integrals(overlap, spec, factor):
    """``int_0^{k^2} k^4 I_{j,gamma} F(sqrt(gamma), beta_j) / (2 beta_j sqrt(gamma)) dgamma`` per mode.

    With ``sqrt(gamma) = k sin t`` the measure ``dgamma / (2 sqrt(gamma))``
    becomes ``k cos t dt``.
    """
    ms = overlap.mode_set
    p = ms.params
    k = p.k
    beta = ms.beta
    rule = overlap.rule_for(p.n1 * k * p.d)
    panels = _radiating_panels(ms)

    if spec.band_limit is None:
        def f_all(t):
            s = k * np.sin(t)
            I = overlap.I_all(*_angle_branch(p, t), rule)
            return k**5 * np.cos(t) * I * factor(s[None, :], beta[:, None]) / beta[:, None]

        val, *_ = _adaptive_gl(f_all, 0.0, 0.5 * math.pi, panels)
        return np.asarray(val)

    out = np.zeros(ms.N)
    for j in range(1, ms.N + 1):
        lo, hi = _radiating_window(ms, spec, j)
        if hi <= lo:
            continue
        b = beta[j - 1]

        def f(t, j=j, b=b):
            s = k * np.sin(t)
            return k**5 * np.cos(t) * overlap.I_branch(j, *_angle_branch(p, t), rule) * factor(s, b) / b

        out[j - 1], *_ = _adaptive_gl(f, lo, hi, panels)
    return out


def _default_overlap(mode_set, spec):
    return ModeOverlap(np.zeros((mode_set.N,) * 2), mode_set, spec)


def lambda_c_vector(mode_set: ModeSet, spec: CovarianceSpec, overlap: ModeOverlap | None = None):
    """Radiative loss rates, one per propagating mode (all nonnegative)."""
    overlap = overlap or _default_overlap(mode_set, spec)
    a = spec.a

    def factor(s, beta):
        return a / (a * a + (beta - s) ** 2)

    # Exact integrand is nonnegative; only roundoff-level negatives are removed.
    return np.maximum(_radiating_integrals(overlap, spec, factor), 0.0)


def lambda_s_vector(mode_set: ModeSet, spec: CovarianceSpec, overlap: ModeOverlap | None = None):
    overlap = overlap or _default_overlap(mode_set, spec)
    a = spec.a

    def factor(s, beta):
        return (s - beta) / (a * a + (s - beta) ** 2)

    return _radiating_integrals(overlap, spec, factor)


@dataclass(frozen=True)
class KappaIntegral:
    """Evanescent integral split into its resolved part and the modelled tail."""

    value: float
    s_max: float
    tail: float
    tail_bound: float


def _kappa_model(mode_set, spec, oscillating=True):
    """Leading large-``|gamma|`` form of the evanescent integrand, all modes.

    Integration by parts in both transverse variables gives
    ``I_{j,gamma} ~ A_j^2 A_gamma^2 (d/eta)^2 gamma0(d,d) sin^2(sigma_j) cos^2(eta)``.
    With ``oscillating=False`` the ``cos^2(eta)`` factor is replaced by 1.
    """
    p = mode_set.params
    d, a, k = p.d, spec.a, p.k
    beta = mode_set.beta[:, None]
    amp = (mode_set.A**2 * np.sin(mode_set.sigma) ** 2)[:, None] * float(spec.gamma0(d, d))

    def h(s):
        s = np.atleast_1d(s)
        eta, _, a2 = radiating_branch(p, -s * s)
        osc = np.cos(eta) ** 2 if oscillating else 1.0
        I = amp * (a2 * (d / eta) ** 2 * osc)[None, :]
        return k**4 * I / beta * (a + s) / ((a + s) ** 2 + beta**2)

    return h


def _kappa_band_limited(overlap, spec):
    ms = overlap.mode_set
    p = ms.params
    d, a, k = p.d, spec.a, p.k
    eta0 = p.n1 * k * d
    parts = []
    for j in range(1, ms.N + 1):
        sigma, beta, _, _ = ms.mode(j)
        eta_top = sigma + spec.band_limit
        if eta_top <= eta0:
            parts.append(KappaIntegral(0.0, 0.0, 0.0, 0.0))
            continue
        s_max = math.sqrt((eta_top / d) ** 2 - (p.n1 * k) ** 2)
        rule = overlap.rule_for(eta_top)

        def f(s, j=j, beta=beta):
            return k**4 * overlap.I_jgamma(j, -s * s, rule) / beta * (a + s) / ((a + s) ** 2 + beta**2)

        panels = max(8, int(math.ceil(2.0 * (eta_top - eta0) / math.pi)))
        val, *_ = _adaptive_gl(f, 0.0, s_max, panels)
        parts.append(KappaIntegral(float(val), s_max, 0.0, 0.0))
    return parts


def _kappa_general(overlap, spec, eta_cap):
    ms = overlap.mode_set
    p = ms.params
    d, a, k = p.d, spec.a, p.k
    eta0 = p.n1 * k * d
    eta_top = max(eta_cap, 4.0 * eta0)
    s_max = math.sqrt((eta_top / d) ** 2 - (p.n1 * k) ** 2)
    rule = overlap.rule_for(eta_top)
    beta = ms.beta[:, None]

    def f(s):
        eta, _, a2 = radiating_branch(p, -s * s)
        I = overlap.I_all(eta, a2, rule)
        return k**4 * I / beta * (a + s) / ((a + s) ** 2 + beta**2)

    panels = 4 * int(math.ceil(0.5 * (eta_top - eta0) / math.pi))
    value, x, w, fx = _adaptive_gl(f, 0.0, s_max, panels)

    h = _kappa_model(ms, spec)
    # Last quarter of the resolved range (a panel edge) measures the model error.
    q = x >= 0.75 * s_max
    hq = h(x[q]) @ w[q]
    mismatch = np.abs(fx[:, q] @ w[q] - hq) / np.maximum(np.abs(hq), 1e-300)

    # Model tail: oscillations resolved out to s_far, cycle-averaged s^-4 law beyond.
    s_far = 16.0 * s_max
    n_far = 2 * int(math.ceil(d * (s_far - s_max) / math.pi))
    tail_near, *_ = _adaptive_gl(h, s_max, s_far, n_far, rtol=1e-8)
    env = _kappa_model(ms, spec, oscillating=False)(s_far)[:, 0]
    tail_far = 0.5 * env * s_far / 3.0
    tail = tail_near + tail_far
    bound = np.abs(tail) * np.clip(mismatch, 1e-3, 1.0) + tail_far
    return [KappaIntegral(float(value[i] + tail[i]), s_max, float(tail[i]), float(bound[i]))
            for i in range(ms.N)]


def kappa_vector(mode_set: ModeSet, spec: CovarianceSpec, overlap: ModeOverlap | None = None,
                 eta_cap: float = ETA_CAP, details: bool = False):
    """Evanescent phase coefficients ``kappa_j`` (integral over ``gamma < 0``).

    The semi-infinite ``gamma`` range is resolved numerically up to transverse
    frequency ``eta_cap`` and closed with the leading asymptotic tail; the tail
    and a bound on its error are returned with ``details=True``.  Under a band
    limit the integrand has compact support and no tail is needed.
    """
    overlap = overlap or _default_overlap(mode_set, spec)
    if spec.band_limit is not None:
        parts = _kappa_band_limited(overlap, spec)
    else:
        parts = _kappa_general(overlap, spec, eta_cap)
    values = np.array([p.value for p in parts])
    return (values, parts) if details else values


@dataclass(frozen=True)
class CouplingCoefficients:
    """All coefficient data for one mode set and medium.

    ``mode_set`` and ``spec`` may be ``None`` for synthetic instances built
    with :meth:`from_arrays`.
    """

    gamma_c: np.ndarray
    lambda_c: np.ndarray
    gamma_s: np.ndarray = None
    gamma_1: np.ndarray = None
    lambda_s: np.ndarray = None
    kappa: np.ndarray = None
    mode_set: ModeSet | None = field(default=None, repr=False)
    spec: CovarianceSpec | None = field(default=None, repr=False)
    kappa_tail_bound: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        G = np.array(self.gamma_c, dtype=float)
        if G.ndim != 2 or G.shape[0] != G.shape[1]:
            raise NonSquareCoefficients(f"gamma_c must be square, got shape {G.shape}")
        n = G.shape[0]
        lam = np.array(self.lambda_c, dtype=float).reshape(-1)
        if lam.size != n:
            raise NonSquareCoefficients(f"lambda_c has {lam.size} entries for {n} modes")
        if np.any(lam < 0):
            raise NegativeLambda(f"negative loss rate(s): {lam[lam < 0]}")
        object.__setattr__(self, "gamma_c", G)
        object.__setattr__(self, "lambda_c", lam)
        for name, shape in (("gamma_s", (n, n)), ("gamma_1", (n, n)), ("lambda_s", (n,)), ("kappa", (n,))):
            val = getattr(self, name)
            val = np.zeros(shape) if val is None else np.array(val, dtype=float).reshape(shape)
            object.__setattr__(self, name, val)

    @property
    def N(self) -> int:
        return self.gamma_c.shape[0]

    @classmethod
    def from_arrays(cls, gamma_c, lambda_c=None, **kw):
        G = np.asarray(gamma_c, dtype=float)
        lam = np.zeros(G.shape[0]) if lambda_c is None else lambda_c
        return cls(gamma_c=G, lambda_c=lam, **kw)

    @classmethod
    def from_rates(cls, rates, lambda_c=None):
        """Symmetric off-diagonal rates; the diagonal is closed to zero row sums."""
        R = np.asarray(rates, dtype=float)
        R = 0.5 * (R + R.T)
        return cls.from_arrays(_close_diagonal(R), lambda_c)

    def transport_matrix(self):
        """Generator of the coupled power equations, ``Gamma^c - diag(Lambda^c)``."""
        return self.gamma_c - np.diag(self.lambda_c)

    def rescaled(self, coupling=1.0, loss=1.0) -> "CouplingCoefficients":
        return CouplingCoefficients.from_arrays(coupling * self.gamma_c, loss * self.lambda_c)


def compute_coefficients(mode_set: ModeSet, spec: CovarianceSpec, *, kappa: bool = True,
                         eta_cap: float = ETA_CAP) -> CouplingCoefficients:
    overlap = overlap_discrete(mode_set, spec)
    G_c = gamma_c_matrix(overlap, mode_set, spec)
    G_s = gamma_s_matrix(overlap, mode_set, spec)
    G_1 = gamma_1_matrix(mode_set, spec)
    L_c = lambda_c_vector(mode_set, spec, overlap)
    L_s = lambda_s_vector(mode_set, spec, overlap)
    if kappa:
        kap, parts = kappa_vector(mode_set, spec, overlap, eta_cap=eta_cap, details=True)
        bound = np.array([p.tail_bound for p in parts])
    else:
        kap, bound = None, None
    return CouplingCoefficients(gamma_c=G_c, lambda_c=L_c, gamma_s=G_s, gamma_1=G_1,
                                lambda_s=L_s, kappa=kap, mode_set=mode_set, spec=spec,
                                kappa_tail_bound=bound)

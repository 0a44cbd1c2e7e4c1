"""Random-medium statistics and the transverse spectral integral ``S``.

The medium fluctuation has covariance ``gamma0(x, y) * exp(-a |z1 - z2|)`` for
depths ``x, y`` in ``[0, d]``.  Everything downstream needs ``gamma0`` only
through

    S(v1, v2) = int_0^d int_0^d gamma0(x1, x2) cos(v1 x1 / d) cos(v2 x2 / d) dx1 dx2,

which is evaluated here by tensor Gauss-Legendre quadrature.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidKernel, QuadratureNotConverged

__all__ = [
    "Kernel",
    "ConstantKernel",
    "CosineBandKernel",
    "GaussianBumpKernel",
    "SumKernel",
    "TabulatedKernel",
    "CovarianceSpec",
    "TransverseQuadrature",
    "quadrature_for",
    "eval_S",
    "band_limited_check",
    "load_tabulated_kernel",
    "BAND_EDGE",
]

BAND_EDGE = 1.5 * math.pi
S_RTOL = 1e-8
MAX_NODES = 4096
_CHUNK = 2048


class Kernel:
    """Symmetric transverse covariance ``gamma0`` on ``[0, d]^2``."""

    d: float

    def __call__(self, x, y):
        raise NotImplementedError

    def breakpoints(self):
        """Interior points where the kernel is not smooth (panel edges)."""
        return ()

    def __add__(self, other):
        return SumKernel((self, other), (1.0, 1.0))

    def __mul__(self, c):
        return SumKernel((self,), (float(c),))

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class ConstantKernel(Kernel):
    d: float
    amplitude: float = 1.0

    def __call__(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        return np.full(x.shape, self.amplitude)


@dataclass(frozen=True, eq=False)
class CosineBandKernel(Kernel):
    """``c cos(pi x / d) cos(pi y / d)``: spectral mass concentrated at ``v = +-pi``."""

    d: float
    amplitude: float = 1.0

    def __call__(self, x, y):
        return self.amplitude * np.cos(np.pi * np.asarray(x) / self.d) * np.cos(np.pi * np.asarray(y) / self.d)


@dataclass(frozen=True, eq=False)
class GaussianBumpKernel(Kernel):
    """Separable ``c g(x) g(y)`` with ``g`` a Gaussian of given centre and width."""

    d: float
    amplitude: float = 1.0
    center: float = 0.5
    width: float = 0.2

    def _g(self, x):
        return np.exp(-0.5 * ((np.asarray(x, float) - self.center) / self.width) ** 2)

    def __call__(self, x, y):
        return self.amplitude * self._g(x) * self._g(y)


@dataclass(frozen=True, eq=False)
class SumKernel(Kernel):
    terms: tuple
    weights: tuple

    def __post_init__(self):
        if len(self.terms) != len(self.weights) or not self.terms:
            raise InvalidKernel("SumKernel needs matching, non-empty terms and weights")
        ds = {t.d for t in self.terms}
        if len(ds) != 1:
            raise InvalidKernel(f"summed kernels disagree on depth: {sorted(ds)}")

    @property
    def d(self):
        return self.terms[0].d

    def __call__(self, x, y):
        return sum(w * t(x, y) for t, w in zip(self.terms, self.weights))

    def breakpoints(self):
        pts = set()
        for t in self.terms:
            pts.update(t.breakpoints())
        return tuple(sorted(pts))


class TabulatedKernel(Kernel):
    """Bilinear interpolation of kernel samples on a square grid covering ``[0, d]``.

    Symmetry and positive semidefiniteness of the sample matrix are checked at
    construction.
    """

    def __init__(self, grid, values):
        grid = np.asarray(grid, dtype=float)
        values = np.asarray(values, dtype=float)
        if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
            raise InvalidKernel("tabulated grid must be strictly increasing with >= 2 points")
        if values.shape != (grid.size, grid.size):
            raise InvalidKernel(f"values shape {values.shape} does not match grid size {grid.size}")
        if not np.all(np.isfinite(values)):
            raise InvalidKernel("tabulated kernel contains non-finite values")
        if abs(grid[0]) > 1e-12 * max(1.0, grid[-1]):
            raise InvalidKernel("tabulated grid must start at x = 0")
        scale = np.abs(values).max()
        if np.abs(values - values.T).max() > 1e-12 * max(scale, 1e-300):
            raise InvalidKernel("tabulated kernel is not symmetric")
        eig = np.linalg.eigvalsh(0.5 * (values + values.T))
        if eig.size and eig.max() > 0 and eig.min() < -1e-10 * eig.max():
            raise InvalidKernel(f"tabulated kernel is not positive semidefinite (min eigenvalue {eig.min():.3e})")
        if eig.size and eig.max() <= 0 and scale > 0:
            raise InvalidKernel("tabulated kernel is not positive semidefinite")
        self.grid = grid
        self.values = values
        self.d = float(grid[-1])

    def __call__(self, x, y):
        g, v = self.grid, self.values
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        ix = np.clip(np.searchsorted(g, x, side="right") - 1, 0, g.size - 2)
        iy = np.clip(np.searchsorted(g, y, side="right") - 1, 0, g.size - 2)
        tx = (x - g[ix]) / (g[ix + 1] - g[ix])
        ty = (y - g[iy]) / (g[iy + 1] - g[iy])
        return ((1 - tx) * (1 - ty) * v[ix, iy] + tx * (1 - ty) * v[ix + 1, iy]
                + (1 - tx) * ty * v[ix, iy + 1] + tx * ty * v[ix + 1, iy + 1])

    def breakpoints(self):
        return tuple(self.grid[1:-1])


def load_tabulated_kernel(path) -> TabulatedKernel:
    """Read a ``x,y,value`` CSV (row-major, x outer) into a :class:`TabulatedKernel`."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header != ["x", "y", "value"]:
            raise InvalidKernel(f"{path}: header must be 'x,y,value', got {','.join(header)!r}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append(tuple(float(c) for c in row))
            except ValueError as exc:
                raise InvalidKernel(f"{path}:{lineno}: {exc}") from None
            if len(rows[-1]) != 3:
                raise InvalidKernel(f"{path}:{lineno}: expected 3 columns")
    data = np.array(rows)
    if data.size == 0:
        raise InvalidKernel(f"{path}: no data rows")
    xs = np.unique(data[:, 0])
    ys = np.unique(data[:, 1])
    if xs.size != ys.size or not np.allclose(xs, ys, rtol=0, atol=1e-12 * max(1.0, xs[-1])):
        raise InvalidKernel(f"{path}: x and y grids must coincide")
    n = xs.size
    if data.shape[0] != n * n:
        raise InvalidKernel(f"{path}: expected {n * n} rows for a {n}x{n} grid, got {data.shape[0]}")
    expect_x = np.repeat(xs, n)
    expect_y = np.tile(xs, n)
    if not (np.array_equal(data[:, 0], expect_x) and np.array_equal(data[:, 1], expect_y)):
        raise InvalidKernel(f"{path}: rows must be row-major with strictly increasing coordinates")
    return TabulatedKernel(xs, data[:, 2].reshape(n, n))


@dataclass(frozen=True, eq=False)
class CovarianceSpec:
    """Transverse kernel, longitudinal correlation rate ``a`` and depth ``d``.

    ``band_limit``, when set, applies the band-limiting idealisation: ``S`` is
    taken to vanish outside ``[-band_limit, band_limit]^2``.
    """

    kernel: Kernel
    a: float
    d: float
    band_limit: float | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"longitudinal rate a must be positive, got {self.a}")
        if not self.d > 0:
            raise ValueError(f"depth d must be positive, got {self.d}")
        kd = getattr(self.kernel, "d", None)
        if kd is not None and not math.isclose(kd, self.d, rel_tol=1e-12):
            raise InvalidKernel(f"kernel depth {kd} does not match d = {self.d}")
        if self.band_limit is not None and not self.band_limit > 0:
            raise ValueError("band_limit must be positive")

    @classmethod
    def cosine_band(cls, a, d, amplitude=1.0, band_limit=BAND_EDGE):
        return cls(CosineBandKernel(d, amplitude), a, d, band_limit)

    @classmethod
    def constant(cls, a, d, amplitude=1.0):
        return cls(ConstantKernel(d, amplitude), a, d)

    @classmethod
    def gaussian_bump(cls, a, d, amplitude=1.0, center=None, width=None):
        center = 0.5 * d if center is None else center
        width = 0.2 * d if width is None else width
        return cls(GaussianBumpKernel(d, amplitude, center, width), a, d)

    def scaled(self, c) -> "CovarianceSpec":
        return CovarianceSpec(SumKernel((self.kernel,), (float(c),)), self.a, self.d, self.band_limit)

    @property
    def band_limited(self) -> bool:
        return self.band_limit is not None

    def gamma0(self, x, y):
        return self.kernel(x, y)


def _gl_nodes(d, breakpoints, per_panel):
    edges = np.unique(np.concatenate(([0.0], np.asarray(breakpoints, float), [d])))
    t, w = np.polynomial.legendre.leggauss(per_panel)
    xs, ws = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        half = 0.5 * (hi - lo)
        xs.append(lo + half * (t + 1.0))
        ws.append(half * w)
    return np.concatenate(xs), np.concatenate(ws), edges.size - 1


class TransverseQuadrature:
    """Fixed tensor Gauss-Legendre rule for ``S`` on one covariance spec."""

    def __init__(self, spec: CovarianceSpec, per_panel: int):
        self.spec = spec
        self.per_panel = int(per_panel)
        self.x, self.w, self.panels = _gl_nodes(spec.d, spec.kernel.breakpoints(), self.per_panel)
        X, Y = np.meshgrid(self.x, self.x, indexing="ij")
        K = spec.kernel(X, Y)
        self.K = 0.5 * (K + K.T)
        self.abs_scale = float(self.w @ np.abs(self.K) @ self.w)
        self._factor = None

    @property
    def n_nodes(self) -> int:
        return self.x.size

    def _weighted_cos(self, v):
        return self.w[:, None] * np.cos(np.outer(self.x, v) / self.spec.d)

    def pairs(self, v1, v2):
        """``S(v1[i], v2[i])`` for equal-shape (or broadcastable) arrays."""
        v1, v2 = np.broadcast_arrays(np.asarray(v1, float), np.asarray(v2, float))
        shape = v1.shape
        a, b = v1.ravel(), v2.ravel()
        out = np.zeros(a.size)
        live = np.ones(a.size, dtype=bool)
        if self.spec.band_limit is not None:
            live = np.maximum(np.abs(a), np.abs(b)) <= self.spec.band_limit
        idx = np.flatnonzero(live)
        if idx.size == 0:
            return out.reshape(shape)
        F = self.factor() if idx.size >= 16 else None
        for start in range(0, idx.size, _CHUNK):
            sel = idx[start:start + _CHUNK]
            ca = self._weighted_cos(a[sel])
            cb = self._weighted_cos(b[sel])
            if F is None:
                out[sel] = np.einsum("ip,ip->p", ca, self.K @ cb)
            else:
                out[sel] = np.einsum("rp,rp->p", F.T @ ca, F.T @ cb) - self._neg_part(ca, cb)
        return out.reshape(shape)

    def factor(self):
        """Low-rank ``K ~= F F^T - G G^T`` from the kernel matrix spectrum.

        Eigenvalues below ``1e-15`` of the largest magnitude are discarded; the
        negative part (``G``) is kept so indefinite kernels are not distorted.
        """
        if self._factor is None:
            if self.n_nodes > 1536:
                return None
            lam, U = np.linalg.eigh(self.K)
            cut = 1e-15 * max(np.abs(lam).max(initial=0.0), 1e-300)
            pos = lam > cut
            neg = lam < -cut
            self._factor = U[:, pos] * np.sqrt(lam[pos])
            self._neg = U[:, neg] * np.sqrt(-lam[neg])
        return self._factor

    def _neg_part(self, ca, cb):
        if self._neg.shape[1] == 0:
            return 0.0
        return np.einsum("rp,rp->p", self._neg.T @ ca, self._neg.T @ cb)

    def sine_quadratic(self, sigma, eta):
        """``int int gamma0 g(x) g(y)`` with ``g = sin(sigma x/d) sin(eta x/d)``, one value per ``eta``.

        Equal to ``(S(dm,dm) + S(dp,dp) - 2 S(dm,dp)) / 4`` with ``dm, dp = sigma -+ eta``
        when no band limit is applied, at a quarter of the cost.
        """
        eta = np.atleast_1d(np.asarray(eta, float))
        ws = self.w * np.sin(sigma * self.x / self.spec.d)
        F = self.factor() if eta.size >= 16 else None
        out = np.empty(eta.size)
        for start in range(0, eta.size, _CHUNK):
            g = ws[:, None] * np.sin(np.outer(self.x, eta[start:start + _CHUNK]) / self.spec.d)
            if F is None:
                out[start:start + _CHUNK] = np.einsum("ip,ip->p", g, self.K @ g)
            else:
                out[start:start + _CHUNK] = np.einsum("rp,rp->p", F.T @ g, F.T @ g) - self._neg_part(g, g)
        return out

    def sine_quadratic_many(self, sigmas, eta):
        """:meth:`sine_quadratic` for several ``sigma`` sharing one ``eta`` array."""
        eta = np.atleast_1d(np.asarray(eta, float))
        sigmas = np.atleast_1d(np.asarray(sigmas, float))
        F = self.factor()
        out = np.empty((sigmas.size, eta.size))
        ssig = np.sin(np.outer(sigmas, self.x) / self.spec.d)
        for start in range(0, eta.size, _CHUNK):
            G = self.w[:, None] * np.sin(np.outer(self.x, eta[start:start + _CHUNK]) / self.spec.d)
            for i in range(sigmas.size):
                g = ssig[i][:, None] * G
                if F is None:
                    out[i, start:start + _CHUNK] = np.einsum("ip,ip->p", g, self.K @ g)
                else:
                    out[i, start:start + _CHUNK] = (np.einsum("rp,rp->p", F.T @ g, F.T @ g)
                                                    - self._neg_part(g, g))
        return out

    def pairs_unbanded(self, v1, v2):
        ca = self._weighted_cos(np.atleast_1d(v1))
        cb = self._weighted_cos(np.atleast_1d(v2))
        return np.einsum("ip,ip->p", ca, self.K @ cb)

    def outer(self, v1, v2):
        """Matrix ``S(v1[i], v2[j])``."""
        v1 = np.atleast_1d(np.asarray(v1, float))
        v2 = np.atleast_1d(np.asarray(v2, float))
        out = self._weighted_cos(v1).T @ self.K @ self._weighted_cos(v2)
        if self.spec.band_limit is not None:
            bl = self.spec.band_limit
            out[np.abs(v1) > bl, :] = 0.0
            out[:, np.abs(v2) > bl] = 0.0
        return out


def _initial_per_panel(vmax, panels):
    v = vmax / panels
    n = 24 + int(math.ceil(0.5 * v + 3.0 * v ** (1.0 / 3.0)))
    return 8 * int(math.ceil(n / 8))


def quadrature_for(spec: CovarianceSpec, vmax: float, rtol: float = S_RTOL) -> TransverseQuadrature:
    """Smallest cached rule whose order doubling moves ``S`` by less than ``rtol``.

    Convergence is judged at probe frequencies up to ``vmax`` relative to the
    natural scale ``int int |gamma0|``.
    """
    vmax = float(abs(vmax))
    key = ("rule", math.ceil(vmax))
    cache = spec._cache
    if key in cache:
        return cache[key]
    panels = max(1, len(spec.kernel.breakpoints()) + 1)
    p = _initial_per_panel(max(vmax, 1.0), panels)
    probes = np.array([0.0, 0.5 * vmax, vmax, vmax])
    partners = np.array([0.0, 0.5 * vmax, vmax, 0.0])
    coarse = _rule(spec, p)
    while True:
        fine = _rule(spec, 2 * p)
        s_c = coarse.pairs_unbanded(probes, partners)
        s_f = fine.pairs_unbanded(probes, partners)
        scale = max(fine.abs_scale, np.abs(s_f).max(), 1e-300)
        if np.abs(s_c - s_f).max() <= rtol * scale:
            cache[key] = coarse
            return coarse
        if 2 * p * panels > MAX_NODES:
            raise QuadratureNotConverged(
                f"S quadrature did not converge up to {2 * p * panels} nodes at |v| = {vmax:.4g}")
        p *= 2
        coarse = fine


def _rule(spec, per_panel):
    key = ("nodes", per_panel)
    if key not in spec._cache:
        spec._cache[key] = TransverseQuadrature(spec, per_panel)
    return spec._cache[key]


def eval_S(spec: CovarianceSpec, v1, v2):
    """Transverse spectral integral ``S(v1, v2)`` (array inputs broadcast)."""
    v1a, v2a = np.broadcast_arrays(np.asarray(v1, float), np.asarray(v2, float))
    vmax = float(max(np.abs(v1a).max(initial=0.0), np.abs(v2a).max(initial=0.0)))
    if spec.band_limit is not None:
        vmax = min(vmax, spec.band_limit)
    out = quadrature_for(spec, vmax).pairs(v1a, v2a)
    return float(out) if out.ndim == 0 else out


def default_probe_grid():
    return np.arange(0.0, 3.0 * math.pi + 1e-12, math.pi / 8)


def band_limited_check(spec: CovarianceSpec, probe_grid=None) -> bool:
    """True if ``S`` is negligible wherever ``max(|v1|, |v2|) > 3 pi / 2``.

    "Negligible" means below ``1e-9`` times the largest ``|S|`` on the probe grid.
    """
    g = default_probe_grid() if probe_grid is None else np.asarray(probe_grid, float)
    V1, V2 = np.meshgrid(g, g, indexing="ij")
    S = np.abs(eval_S(spec, V1, V2))
    ref = S.max(initial=0.0)
    outside = np.maximum(np.abs(V1), np.abs(V2)) > BAND_EDGE
    return bool(np.all(S[outside] <= 1e-9 * ref))

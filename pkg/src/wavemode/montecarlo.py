"""Feynman-Kac Monte Carlo for the coupled power equations.

``T_j^l(L) = E_l[ exp(-int_0^L Lambda^c(Y_s) ds) 1{Y_L = j} ]`` where ``Y`` is
the pure-jump Markov chain on the modes with jump rates ``Gamma^c_{nj}``
(from ``j`` to ``n``).  Paths are simulated exactly (Gillespie) so the
estimator carries no time-discretisation error.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .coupling import CouplingCoefficients
from .errors import InvalidHorizon

__all__ = [
    "JumpChainSpec",
    "MCEstimate",
    "SlopeEstimate",
    "simulate_feynman_kac",
    "occupation_slope",
    "BATCH_SIZE",
]

BATCH_SIZE = 1 << 17


@dataclass(frozen=True)
class JumpChainSpec:
    """Jump intensities ``rates[n, j]`` (``j -> n``), killing rates and RNG seed."""

    rates: np.ndarray
    kill: np.ndarray
    seed: int = 0

    def __post_init__(self):
        R = np.array(self.rates, dtype=float)
        if R.ndim != 2 or R.shape[0] != R.shape[1]:
            raise ValueError(f"rates must be square, got shape {R.shape}")
        np.fill_diagonal(R, 0.0)
        if np.any(R < 0):
            raise ValueError("jump rates must be nonnegative")
        kill = np.array(self.kill, dtype=float).reshape(-1)
        if kill.size != R.shape[0]:
            raise ValueError("kill vector length does not match the state count")
        if np.any(kill < 0):
            raise ValueError("killing rates must be nonnegative")
        object.__setattr__(self, "rates", R)
        object.__setattr__(self, "kill", kill)
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def N(self) -> int:
        return self.rates.shape[0]

    @property
    def holding_rates(self) -> np.ndarray:
        """Total exit rate from each state, ``sum_{n != j} rates[n, j]``."""
        return self.rates.sum(axis=0)

    @classmethod
    def from_coefficients(cls, coeffs: CouplingCoefficients, seed: int = 0) -> "JumpChainSpec":
        R = coeffs.gamma_c.copy()
        np.fill_diagonal(R, 0.0)
        return cls(rates=np.clip(R, 0.0, None), kill=coeffs.lambda_c, seed=seed)

    def rescaled(self, coupling=1.0, loss=1.0, seed=None) -> "JumpChainSpec":
        return JumpChainSpec(coupling * self.rates, loss * self.kill, self.seed if seed is None else seed)


@dataclass(frozen=True)
class MCEstimate:
    """Monte Carlo estimate of ``T_j^l(L)``; ``n_paths`` paths per source ``l``.

    ``local_time_fraction[j, l]`` is the mean fraction of ``[0, L]`` spent in
    state ``j`` by paths started at ``l``.  ``total`` and ``total_stderr`` are
    the estimate of ``sum_j T_j^l(L)`` per source and its standard error.
    """

    mean: np.ndarray
    stderr: np.ndarray
    n_paths: int
    local_time_fraction: np.ndarray
    total: np.ndarray
    total_stderr: np.ndarray
    L: float


def _jump_table(spec: JumpChainSpec):
    q = spec.holding_rates
    with np.errstate(invalid="ignore", divide="ignore"):
        P = np.where(q > 0, spec.rates / q, 0.0)
    C = np.cumsum(P, axis=0)
    C[-1, :] = 1.0
    return q, C


def _batch(spec, q, C, l, L, n, seed_seq):
    """Simulate ``n`` paths from state ``l``; returns sufficient statistics."""
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    N = spec.N
    state = np.full(n, l, dtype=np.intp)
    t = np.zeros(n)
    log_w = np.zeros(n)
    occ = np.zeros(N)
    active = np.arange(n)
    while active.size:
        s = state[active]
        rate = q[s]
        with np.errstate(divide="ignore"):
            hold = rng.standard_exponential(active.size) / rate
        dt = np.minimum(hold, L - t[active])
        log_w[active] -= spec.kill[s] * dt
        occ += np.bincount(s, weights=dt, minlength=N)
        t[active] += hold
        jumping = t[active] < L
        active = active[jumping]
        if not active.size:
            break
        s = state[active]
        u = rng.random(active.size)
        nxt = (C[:, s] <= u).sum(axis=0)
        state[active] = np.minimum(nxt, N - 1)
    w = np.exp(log_w)
    count = np.bincount(state, minlength=N)
    m = np.bincount(state, weights=w, minlength=N) / n
    # Centred second moments of x_j = w 1{Y_L = j} and of w itself.
    m2 = np.bincount(state, weights=(w - m[state]) ** 2, minlength=N) + (n - count) * m**2
    mw = w.mean()
    return m, m2, mw, ((w - mw) ** 2).sum(), occ


def _merge(acc, n_acc, mean, m2, n):
    """Chan et al. pairwise update of ``(mean, M2)``."""
    if acc is None:
        return mean.copy(), m2.copy()
    a_mean, a_m2 = acc
    tot = n_acc + n
    delta = mean - a_mean
    return a_mean + delta * (n / tot), a_m2 + m2 + delta**2 * (n_acc * n / tot)


def simulate_feynman_kac(spec: JumpChainSpec, L: float, n_paths: int, *,
                         batch_size: int = BATCH_SIZE, threads: int = 1) -> MCEstimate:
    """Estimate ``T_j^l(L)`` for every source ``l`` with ``n_paths`` paths each.

    Each ``(l, batch)`` work item draws from its own stream spawned from
    ``SeedSequence(spec.seed)`` and results are reduced in a fixed order, so
    the output is bitwise reproducible for a given seed whatever ``threads``.

    Raises
    ------
    InvalidHorizon
        If ``L <= 0`` or ``n_paths < 1``.
    """
    if not (np.isfinite(L) and L > 0):
        raise InvalidHorizon(f"horizon L must be positive, got {L}")
    n_paths = int(n_paths)
    if n_paths < 1:
        raise InvalidHorizon(f"n_paths must be >= 1, got {n_paths}")
    N = spec.N
    q, C = _jump_table(spec)
    sizes = [min(batch_size, n_paths - s) for s in range(0, n_paths, batch_size)]
    streams = np.random.SeedSequence(spec.seed).spawn(N * len(sizes))
    items = [(l, b, n) for l in range(N) for b, n in enumerate(sizes)]

    def run(item):
        l, b, n = item
        return _batch(spec, q, C, l, float(L), n, streams[l * len(sizes) + b])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, items))
    else:
        results = [run(it) for it in items]

    mean = np.zeros((N, N))
    M2 = np.zeros((N, N))
    total = np.zeros(N)
    TM2 = np.zeros(N)
    occ = np.zeros((N, N))
    for l in range(N):
        acc, tacc, done = None, None, 0
        for b, nb in enumerate(sizes):
            m, m2, mw, w2, oc = results[l * len(sizes) + b]
            acc = _merge(acc, done, m, m2, nb)
            tacc = _merge(tacc, done, np.array([mw]), np.array([w2]), nb)
            occ[:, l] += oc
            done += nb
        mean[:, l], M2[:, l] = acc
        total[l], TM2[l] = tacc[0][0], tacc[1][0]
    n = float(n_paths)
    denom = max(n - 1.0, 1.0)
    var = M2 / denom if n_paths > 1 else np.zeros_like(mean)
    tvar = TM2 / denom if n_paths > 1 else np.zeros_like(total)
    return MCEstimate(mean=mean, stderr=np.sqrt(var / n), n_paths=n_paths,
                      local_time_fraction=occ / (n * L), total=total,
                      total_stderr=np.sqrt(tvar / n), L=float(L))


@dataclass(frozen=True)
class SlopeEstimate:
    slope: float
    stderr: float
    L: np.ndarray
    log_energy: np.ndarray
    log_stderr: np.ndarray


def occupation_slope(spec: JumpChainSpec, L_list, n_paths: int, source: int | None = None,
                     **kw) -> SlopeEstimate:
    """Weighted least-squares slope of ``ln sum_j T_j^l(L)`` against ``L``.

    Each horizon uses an independent seed derived from ``spec.seed``.  With
    ``source=None`` the energy is averaged over all sources.
    """
    L = np.asarray(L_list, dtype=float)
    if L.size < 2 or np.any(np.diff(L) <= 0):
        raise InvalidHorizon("L_list must hold at least two increasing horizons")
    seeds = np.random.SeedSequence(spec.seed).generate_state(L.size, dtype=np.uint64)
    y, sy = [], []
    for Li, s in zip(L, seeds):
        est = simulate_feynman_kac(JumpChainSpec(spec.rates, spec.kill, int(s)), Li, n_paths, **kw)
        if source is None:
            e = est.total.mean()
            se = np.sqrt((est.total_stderr**2).sum()) / spec.N
        else:
            e = est.total[source - 1]
            se = est.total_stderr[source - 1]
        y.append(np.log(e))
        sy.append(se / e)
    y, sy = np.array(y), np.array(sy)
    if np.all(sy == 0):
        slope = float(np.polyfit(L, y, 1)[0])
        return SlopeEstimate(slope, 0.0, L, y, sy)
    wgt = 1.0 / np.maximum(sy, sy[sy > 0].min()) ** 2
    X = np.stack([L, np.ones_like(L)], axis=1)
    cov = np.linalg.inv(X.T @ (wgt[:, None] * X))
    beta = cov @ (X.T @ (wgt * y))
    return SlopeEstimate(float(beta[0]), float(np.sqrt(cov[0, 0])), L, y, sy)

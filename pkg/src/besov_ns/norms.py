"""Lebesgue, Sobolev, Besov and Chemin-Lerner norms plus inequality checkers.

Every "A <~ B" relation is exposed as a :class:`RatioReport` so a sweep can
measure the hidden constant; frozen values live in the constants file
(:mod:`besov_ns.constants`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .littlewood_paley import DyadicFamily
from .spectral import FourierField, TimeTrace, TorusGrid, heat_multiplier, ifft

INF = math.inf


@dataclass(frozen=True)
class BesovIndex:
    s: float
    q: float

    def __post_init__(self):
        if not self.q >= 1:
            raise ValueError(f"integrability q must be >= 1, got {self.q}")


@dataclass(frozen=True)
class CheminLernerIndex:
    p: float
    besov: BesovIndex
    T: float

    def __post_init__(self):
        if not self.p >= 1:
            raise ValueError(f"time integrability p must be >= 1, got {self.p}")
        if not self.T > 0:
            raise ValueError(f"horizon T must be positive, got {self.T}")


@dataclass
class RatioReport:
    name: str
    lhs: float
    rhs: float
    factors: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)

    @property
    def ratio(self) -> float:
        if self.rhs == 0:
            return 0.0 if self.lhs == 0 else INF
        return self.lhs / self.rhs

    def row(self) -> dict:
        return {**self.inputs, "lhs": self.lhs, "rhs": self.rhs, "ratio": self.ratio}


def _as_index(idx) -> BesovIndex:
    return idx if isinstance(idx, BesovIndex) else BesovIndex(*idx)


# --------------------------------------------------------------------------
# Lebesgue


def lp_from_values(values: np.ndarray, grid: TorusGrid, q: float, lead: int = 0) -> np.ndarray:
    """Grid quadrature of ``||.||_q`` of pointwise magnitudes.

    ``values`` has ``lead`` batch axes, then component axes, then the grid.
    """
    comp_axes = tuple(range(lead, values.ndim - grid.d))
    mag = np.sqrt(np.sum(values**2, axis=comp_axes)) if comp_axes else np.abs(values)
    red = tuple(range(lead, mag.ndim))
    if q == INF:
        return np.max(mag, axis=red)
    if q == 2:
        return np.sqrt(grid.cell_volume * np.sum(mag**2, axis=red))
    return (grid.cell_volume * np.sum(mag**q, axis=red)) ** (1.0 / q)


def lp_norm(f: FourierField, q: float) -> float:
    if not q >= 1:
        raise ValueError(f"q must be in [1, inf], got {q}")
    return float(lp_from_values(f.physical(), f.grid, q))


# --------------------------------------------------------------------------
# block tables


def block_lp_table(coeffs: np.ndarray, fam: DyadicFamily, q: float, chunk: int = 32) -> np.ndarray:
    """``||Delta_j f_m||_q`` for a stack of fields.

    ``coeffs`` has one leading sample axis; returns shape ``(M, J_max + 2)``.
    """
    grid = fam.grid
    mults = fam.multipliers
    M = coeffs.shape[0]
    out = np.empty((M, mults.shape[0]))
    for start in range(0, M, chunk):
        c = coeffs[start:start + chunk]
        for jj, m in enumerate(mults):
            out[start:start + chunk, jj] = lp_from_values(ifft(c * m, grid), grid, q, lead=1)
    return out


def _weights(fam: DyadicFamily, s: float) -> np.ndarray:
    return 2.0 ** (s * np.arange(-1, fam.J_max + 1))


def besov_norm(f: FourierField, idx, fam: DyadicFamily) -> float:
    """max over j in [-1, J_max] of 2**(s j) ||Delta_j f||_q."""
    idx = _as_index(idx)
    table = block_lp_table(f.coeffs[None], fam, idx.q)[0]
    return float(np.max(_weights(fam, idx.s) * table))


def besov_norm_series(u: TimeTrace, idx, fam: DyadicFamily, table: np.ndarray | None = None) -> np.ndarray:
    """Besov norm of every sample of a trace."""
    idx = _as_index(idx)
    if table is None:
        table = block_lp_table(u.coeffs, fam, idx.q)
    return np.max(table * _weights(fam, idx.s), axis=1)


def time_lp(times: np.ndarray, values: np.ndarray, p: float, axis: int = 0) -> np.ndarray:
    """Trapezoid ``(int |v|^p dt)^(1/p)`` along ``axis``; ``p = inf`` gives the max."""
    if p == INF:
        return np.max(values, axis=axis)
    if len(times) == 1:
        return np.zeros(np.delete(values.shape, axis)) if values.ndim > 1 else 0.0
    return np.trapezoid(values**p, times, axis=axis) ** (1.0 / p)


def chemin_lerner_norm(u: TimeTrace, idx: CheminLernerIndex, fam: DyadicFamily,
                       table: np.ndarray | None = None) -> float:
    """max_j 2**(s j) ||Delta_j u||_{L^p_T L^q} on the samples with t <= T."""
    if len(u) == 0:
        raise ValueError("empty trace")
    n = int(np.searchsorted(u.times, idx.T * (1 + 1e-12), side="right"))
    if n == 0:
        raise ValueError("trace has no samples inside [0, T]")
    if table is None:
        table = block_lp_table(u.coeffs[:n], fam, idx.besov.q)
    else:
        table = table[:n]
    per_block = time_lp(u.times[:n], table, idx.p, axis=0)
    return float(np.max(_weights(fam, idx.besov.s) * per_block))


def besov_time_lp(u: TimeTrace, p: float, idx, fam: DyadicFamily, T: float | None = None) -> float:
    """||u||_{L^p_T B} (time norm outside the block supremum)."""
    T = u.T if T is None else T
    n = int(np.searchsorted(u.times, T * (1 + 1e-12), side="right"))
    series = besov_norm_series(u.truncated(n), idx, fam)
    return float(time_lp(u.times[:n], series, p))


def sup_norm_series(u: TimeTrace, chunk: int = 64) -> np.ndarray:
    out = np.empty(len(u))
    for start in range(0, len(u), chunk):
        vals = ifft(u.coeffs[start:start + chunk], u.grid)
        out[start:start + chunk] = lp_from_values(vals, u.grid, INF, lead=1)
    return out


def weighted_sup_norm(u: TimeTrace, mu: float, series: np.ndarray | None = None) -> float:
    """max over samples t > 0 of t**(mu/2) ||u(t)||_inf."""
    if series is None:
        series = sup_norm_series(u)
    pos = u.times > 0
    if not np.any(pos):
        return 0.0
    return float(np.max(u.times[pos] ** (mu / 2.0) * series[pos]))


# --------------------------------------------------------------------------
# heat-kernel characterisation, Sobolev


def theta_grid(delta: float, n: int = 32, depth: int = 20) -> np.ndarray:
    return np.geomspace(delta * 2.0**-depth, delta, n)


def heat_characterization_norm(f: FourierField, s: float, q: float, delta: float = 1.0,
                               n_theta: int = 32) -> float:
    """max over a geometric theta grid of theta**(s/2) ||exp(theta Lap) f||_q."""
    if not s > 0:
        raise ValueError(f"s must be positive, got {s}")
    thetas = theta_grid(delta, n_theta)
    stack = np.stack([f.coeffs * heat_multiplier(f.grid, th) for th in thetas])
    norms = lp_from_values(ifft(stack, f.grid), f.grid, q, lead=1)
    return float(np.max(thetas ** (s / 2.0) * norms))


def sobolev_h_norm(f: FourierField, alpha: float) -> float:
    """Nonhomogeneous H^alpha norm, sum over components."""
    w = (1.0 + f.grid.ksq) ** alpha
    return float(np.sqrt(f.grid.volume * np.sum(w * np.abs(f.coeffs) ** 2)))


# --------------------------------------------------------------------------
# inequality checkers


def gmo_exponent(alpha: float, beta: float, p: float = 2.0) -> float:
    """Lebesgue exponent q with 1/q = (1 - alpha/beta) / p."""
    if not 0 < alpha < beta:
        raise ValueError(f"need 0 < alpha < beta, got alpha={alpha}, beta={beta}")
    return p / (1.0 - alpha / beta)


def check_gmo(f: FourierField, alpha: float, beta: float, fam: DyadicFamily) -> RatioReport:
    """||f||_q against ||f||_{H^alpha}^(1-alpha/beta) ||f||_{B^{alpha-beta}_inf}^(alpha/beta)."""
    q = gmo_exponent(alpha, beta, 2.0)
    theta = alpha / beta
    h = sobolev_h_norm(f, alpha)
    b = besov_norm(f, (alpha - beta, INF), fam)
    return RatioReport(
        "gmo", lp_norm(f, q), h ** (1 - theta) * b**theta,
        factors={"sobolev": h, "besov": b, "q": q},
        inputs={"alpha": alpha, "beta": beta, "p": 2.0, "q": q},
    )


def check_interpolation(f: FourierField, r: float, sigma: float, fam: DyadicFamily) -> RatioReport:
    """||f||_inf against ||f||_{B^-r}^(sigma/(r+sigma)) ||f||_{B^sigma}^(r/(r+sigma))."""
    if not (r > 0 and sigma > 0):
        raise ValueError("need r > 0 and sigma > 0")
    low = besov_norm(f, (-r, INF), fam)
    high = besov_norm(f, (sigma, INF), fam)
    w = sigma / (r + sigma)
    return RatioReport(
        "interpolation", lp_norm(f, INF), low**w * high ** (1 - w),
        factors={"besov_low": low, "besov_high": high},
        inputs={"r": r, "sigma": sigma},
    )


def bernstein_ratios(f: FourierField, fam: DyadicFamily) -> np.ndarray:
    """||Delta_j f||_inf / (2**(j d/2) ||Delta_j f||_2) for every block (nan if empty)."""
    sup = block_lp_table(f.coeffs[None], fam, INF)[0]
    l2 = block_lp_table(f.coeffs[None], fam, 2.0)[0]
    j = np.arange(-1, fam.J_max + 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(l2 > 1e-300, sup / (2.0 ** (j * fam.grid.d / 2.0) * l2), np.nan)


def check_bernstein_embedding(f: FourierField, s: float, q: float, m: float,
                              fam: DyadicFamily) -> RatioReport:
    """||f||_{B^{s + d(1/m - 1/q)}_m} against ||f||_{B^s_q} for m >= q."""
    if m < q:
        raise ValueError("embedding needs m >= q")
    d = fam.grid.d
    inv = lambda x: 0.0 if x == INF else 1.0 / x  # noqa: E731
    s2 = s + d * (inv(m) - inv(q))
    return RatioReport("bernstein_embedding", besov_norm(f, (s2, m), fam), besov_norm(f, (s, q), fam),
                       inputs={"s": s, "q": q, "m": m})


def check_heat_smoothing(f: FourierField, s1: float, s2: float, q: float, T: float,
                         fam: DyadicFamily, n_t: int = 24) -> RatioReport:
    """sup_t t**((s2-s1)/2) ||exp(t Lap) f||_{B^s2_q} against ||f||_{B^s1_q}."""
    if s2 < s1:
        raise ValueError("need s1 <= s2")
    ts = np.geomspace(T * 2.0**-16, T, n_t)
    stack = np.stack([f.coeffs * heat_multiplier(f.grid, t) for t in ts])
    table = block_lp_table(stack, fam, q)
    series = np.max(table * _weights(fam, s2), axis=1)
    lhs = float(np.max(ts ** ((s2 - s1) / 2.0) * series))
    return RatioReport("heat_smoothing", lhs, besov_norm(f, (s1, q), fam),
                       inputs={"s1": s1, "s2": s2, "q": q, "T": T})


def check_heat_characterization(f: FourierField, s: float, q: float, fam: DyadicFamily,
                                delta: float = 1.0) -> RatioReport:
    return RatioReport("heat_characterization", heat_characterization_norm(f, s, q, delta),
                       besov_norm(f, (-s, q), fam), inputs={"s": s, "q": q, "delta": delta})


def heat_flow_trace(f: FourierField, times) -> TimeTrace:
    times = np.asarray(times, dtype=float)
    return TimeTrace(f.grid, times, np.stack([f.coeffs * heat_multiplier(f.grid, t) for t in times]))


def check_weighted_heat(f: FourierField, r: float, fam: DyadicFamily, T: float = 1.0,
                        n_t: int = 40) -> RatioReport:
    """weighted_sup_norm(exp(t Lap) f, r) against ||f||_{B^-r_inf}."""
    times = np.concatenate([[0.0], np.geomspace(T * 2.0**-20, T, n_t)])
    lhs = weighted_sup_norm(heat_flow_trace(f, times), r)
    return RatioReport("weighted_heat", lhs, besov_norm(f, (-r, INF), fam), inputs={"r": r, "T": T})

"""Two-term Bony paraproduct and empirical operator-norm estimates.

    Pi_1(f, g) = sum_{j >= -1} S_{j+1} f . Delta_j g
    Pi_2(f, g) = sum_{j >= 0}  S_j f     . Delta_j g

so that ``f g = Pi_1(f, g) + Pi_2(g, f)``.  Products are taken on the N grid
(no dealiasing), which keeps the identity exact to rounding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .littlewood_paley import DyadicFamily
from .norms import (
    BesovIndex,
    CheminLernerIndex,
    besov_norm,
    chemin_lerner_norm,
    time_lp,
    lp_from_values,
)
from .spectral import FourierField, GridMismatchError, TimeTrace, ifft, fft

INF = math.inf


def _inv(x: float) -> float:
    return 0.0 if x == INF else 1.0 / x


@dataclass(frozen=True)
class ParaproductLawSpec:
    sigma1: float
    sigma2: float
    q1: float = INF
    q2: float = INF
    p1: float = INF
    p2: float = INF

    def __post_init__(self):
        if not 0 < self.sigma1 < self.sigma2:
            raise ValueError("need 0 < sigma1 < sigma2")
        if _inv(self.q1) + _inv(self.q2) > 1 or _inv(self.p1) + _inv(self.p2) > 1:
            raise ValueError("1/q1 + 1/q2 and 1/p1 + 1/p2 must not exceed 1")

    @property
    def q(self) -> float:
        s = _inv(self.q1) + _inv(self.q2)
        return INF if s == 0 else 1.0 / s

    @property
    def p(self) -> float:
        s = _inv(self.p1) + _inv(self.p2)
        return INF if s == 0 else 1.0 / s


def _paraproduct_coeffs(a: np.ndarray, b: np.ndarray, fam: DyadicFamily, kind: int,
                        outer: bool) -> np.ndarray:
    grid = fam.grid
    J = fam.J_max
    out = None
    start = -1 if kind == 1 else 0
    for j in range(start, J + 1):
        low_index = j + 1 if kind == 1 else j
        low = ifft(a * fam.low_pass_multiplier(low_index), grid)
        band = ifft(b * fam.block_multiplier(j), grid)
        if outer:
            nd = grid.d
            low = low[(Ellipsis, slice(None), None) + (slice(None),) * nd]
            band = band[(Ellipsis, None, slice(None)) + (slice(None),) * nd]
        term = low * band
        out = term if out is None else out + term
    if out is None:
        shape = np.broadcast_shapes(a.shape, b.shape)
        return np.zeros(shape, dtype=np.complex128)
    return fft(out, grid)


def _pi(f: FourierField, g: FourierField, fam: DyadicFamily, kind: int, outer: bool) -> FourierField:
    if f.grid != g.grid or f.grid != fam.grid:
        raise GridMismatchError("paraproduct operands must share the family's grid")
    return FourierField(f.grid, _paraproduct_coeffs(f.coeffs, g.coeffs, fam, kind, outer))


def pi1(f: FourierField, g: FourierField, fam: DyadicFamily, outer: bool = False) -> FourierField:
    """Low-high paraproduct including the diagonal band pairs."""
    return _pi(f, g, fam, 1, outer)


def pi2(f: FourierField, g: FourierField, fam: DyadicFamily, outer: bool = False) -> FourierField:
    return _pi(f, g, fam, 2, outer)


def product(f: FourierField, g: FourierField, outer: bool = False) -> FourierField:
    """Pointwise product on the N grid, the reference for the decomposition identity."""
    a, b = f.physical(), g.physical()
    if outer:
        nd = f.grid.d
        a = a[(Ellipsis, slice(None), None) + (slice(None),) * nd]
        b = b[(Ellipsis, None, slice(None)) + (slice(None),) * nd]
    return FourierField(f.grid, fft(a * b, f.grid))


def pi_trace(u: TimeTrace, f: TimeTrace, fam: DyadicFamily, kind: int, outer: bool = False) -> TimeTrace:
    if u.grid != f.grid or not np.array_equal(u.times, f.times):
        raise GridMismatchError("traces must share grid and time samples")
    coeffs = np.stack([_paraproduct_coeffs(a, b, fam, kind, outer) for a, b in zip(u.coeffs, f.coeffs)])
    return TimeTrace(u.grid, u.times, coeffs)


# --------------------------------------------------------------------------
# law constants


@dataclass
class LawConstantReport:
    pi1: float
    pi2: float
    ratios_pi1: list
    ratios_pi2: list
    skipped: int
    variant: str

    def as_dict(self) -> dict:
        return {"pi1": self.pi1, "pi2": self.pi2, "skipped": self.skipped, "variant": self.variant,
                "n": len(self.ratios_pi1)}


def _lebesgue_time_norm(u: TimeTrace, p: float, q: float) -> float:
    vals = lp_from_values(ifft(u.coeffs, u.grid), u.grid, q, lead=1)
    return float(time_lp(u.times, vals, p))


def estimate_law_constant(spec: ParaproductLawSpec, corpus, fam: DyadicFamily,
                          variant: str = "besov") -> LawConstantReport:
    """Largest observed ratio of output norm to input norms for Pi_1 and Pi_2.

    ``variant``: ``"besov"`` takes field pairs; ``"chemin-lerner"`` takes trace
    pairs measured in L~^p B; ``"lebesgue"`` measures the first factor of a
    trace pair in L^p1 L^q1 and the output in L~^p B^sigma2.
    """
    if not corpus:
        raise ValueError("corpus must not be empty")
    ratios = {1: [], 2: []}
    skipped = 0
    for f, g in corpus:
        if variant == "besov":
            den = besov_norm(f, (-spec.sigma1, spec.q1), fam) * besov_norm(g, (spec.sigma2, spec.q2), fam)
        else:
            T = f.T
            second = chemin_lerner_norm(g, CheminLernerIndex(spec.p2, BesovIndex(spec.sigma2, spec.q2), T), fam)
            if variant == "chemin-lerner":
                first = chemin_lerner_norm(f, CheminLernerIndex(spec.p1, BesovIndex(-spec.sigma1, spec.q1), T), fam)
            elif variant == "lebesgue":
                first = _lebesgue_time_norm(f, spec.p1, spec.q1)
            else:
                raise ValueError(f"unknown variant {variant!r}")
            den = first * second
        if not den > 0:
            skipped += 1
            continue
        for kind in (1, 2):
            if variant == "besov":
                out = _pi(f, g, fam, kind, outer=False)
                num = besov_norm(out, (spec.sigma2 - spec.sigma1, spec.q), fam)
            else:
                out = pi_trace(f, g, fam, kind)
                s_out = spec.sigma2 if variant == "lebesgue" else spec.sigma2 - spec.sigma1
                num = chemin_lerner_norm(out, CheminLernerIndex(spec.p, BesovIndex(s_out, spec.q), f.T), fam)
            ratios[kind].append(num / den)
    m1 = max(ratios[1], default=0.0)
    m2 = max(ratios[2], default=0.0)
    return LawConstantReport(m1, m2, ratios[1], ratios[2], skipped, variant)


def apply_linearized(u: TimeTrace, f: TimeTrace, fam: DyadicFamily, quad=None,
                     dealias: bool = False) -> TimeTrace:
    """``L_u(f) = sum_k L_oss(Pi_k(u, f))`` evaluated on the common time grid."""
    from .solver import OseenQuadrature, duhamel
    from .spectral import divergence_of_tensor_coeffs, leray_coeffs

    if u.grid != f.grid:
        raise GridMismatchError("traces must share a grid")
    if not np.array_equal(u.times, f.times):
        raise ValueError("traces must share time samples")
    quad = quad or OseenQuadrature()
    grid = u.grid
    forcing = np.empty_like(f.coeffs)
    for i, (a, b) in enumerate(zip(u.coeffs, f.coeffs)):
        tensor = (_paraproduct_coeffs(a, b, fam, 1, outer=True)
                  + _paraproduct_coeffs(a, b, fam, 2, outer=True))
        forcing[i] = -leray_coeffs(divergence_of_tensor_coeffs(tensor, grid), grid)
    return TimeTrace(grid, u.times, duhamel(forcing, u.times, grid, quad))

"""Measurable forms of the regularity, blow-up and uniqueness statements.

Each experiment returns an :class:`ExperimentReport`; verdicts always point
at series or scalars stored in the same report.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__
from .littlewood_paley import DyadicFamily
from .norms import (
    BesovIndex,
    CheminLernerIndex,
    besov_norm,
    besov_norm_series,
    block_lp_table,
    chemin_lerner_norm,
    sup_norm_series,
)
from .solver import BlowupSuspected, OseenQuadrature, SolverConfig, bilinear_B, heat_trace, picard_solve
from .spectral import FourierField, TimeTrace, divergence_defect

INF = math.inf


@dataclass(frozen=True)
class CriterionParams:
    r: float = 0.5
    sigma: float = 0.75
    delta_list: tuple = (0.2, 0.1, 0.05)
    epsilon_guess: float | None = None

    def __post_init__(self):
        if not 0 < self.r <= 1:
            raise ValueError("need 0 < r <= 1")
        if not self.r < self.sigma < 1:
            raise ValueError("need r < sigma < 1")


@dataclass
class ExperimentReport:
    name: str
    series: dict = field(default_factory=dict)
    scalars: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def add_series(self, name: str, t, values) -> None:
        self.series[name] = (np.asarray(t, dtype=float), np.asarray(values, dtype=float))

    def add_verdict(self, name: str, value: bool, refs) -> None:
        refs = [refs] if isinstance(refs, str) else list(refs)
        missing = [r for r in refs if r not in self.series and r not in self.scalars]
        if missing:
            raise KeyError(f"verdict {name!r} references unknown entries {missing}")
        self.verdicts[name] = {"value": bool(value), "refs": refs}

    def verdict(self, name: str) -> bool:
        return self.verdicts[name]["value"]

    @property
    def passed(self) -> bool:
        return all(v["value"] for v in self.verdicts.values())

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "scalars": {k: _jsonable(v) for k, v in self.scalars.items()},
            "verdicts": self.verdicts,
            "series": {k: {"t": t.tolist(), "value": v.tolist()} for k, (t, v) in self.series.items()},
            "provenance": {"code_version": __version__, **self.provenance},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentReport":
        rep = cls(data["name"], scalars=dict(data.get("scalars", {})),
                  verdicts=dict(data.get("verdicts", {})), provenance=dict(data.get("provenance", {})))
        for k, v in data.get("series", {}).items():
            rep.add_series(k, v["t"], v["value"])
        return rep


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


# --------------------------------------------------------------------------
# regularity monitor


def decade_averages(t: np.ndarray, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean of ``values`` per decade ``[10**m, 10**(m+1))`` of positive ``t``."""
    pos = t > 0
    exps = np.floor(np.log10(t[pos]) + 1e-12).astype(int)
    decades = np.unique(exps)
    means = np.array([values[pos][exps == m].mean() for m in decades])
    return decades, means


def regularity_monitor(u: TimeTrace, n_decades: int = 3, margin: float = 0.01,
                       sup_series: np.ndarray | None = None) -> ExperimentReport:
    """Track sqrt(t) ||u(t)||_inf as t decreases to 0.

    Verdict: over the ``n_decades`` smallest resolved decades the decade means
    shrink by more than ``margin`` at every step toward t = 0.
    """
    if sup_series is None:
        sup_series = sup_norm_series(u)
    pos = u.times > 0
    t = u.times[pos]
    series = np.sqrt(t) * sup_series[pos]
    decades, means = decade_averages(t, series)
    if len(decades) < 2:
        raise ValueError(f"trace resolves {len(decades)} decade(s) near t = 0, need at least 2")
    rep = ExperimentReport("regularity")
    rep.add_series("sqrt_t_sup_norm", t, series)
    low = means[:n_decades]
    rep.scalars["decades"] = [int(m) for m in decades[:n_decades]]
    rep.scalars["decade_means"] = low.tolist()
    rep.scalars["smallest_t"] = float(t[0])
    decreasing = bool(np.all(low[:-1] < (1.0 - margin) * low[1:]))
    rep.add_verdict("decays_to_zero", decreasing, ["sqrt_t_sup_norm", "decade_means"])
    return rep


# --------------------------------------------------------------------------
# window functionals


def _integral_between(times: np.ndarray, vals: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Trapezoid integral of the piecewise-linear interpolant over [a, b]."""
    cum = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(times) * (vals[1:] + vals[:-1]))])

    def F(x):
        x = np.asarray(x, dtype=float)
        i = np.clip(np.searchsorted(times, x, side="right") - 1, 0, len(times) - 2)
        h = x - times[i]
        dt = times[i + 1] - times[i]
        vx = vals[i] + (vals[i + 1] - vals[i]) * h / dt
        return cum[i] + 0.5 * h * (vals[i] + vx)

    return F(b) - F(a)


def theta_window(u: TimeTrace, r: float, delta: float, fam: DyadicFamily,
                 besov_series: np.ndarray | None = None) -> float:
    """sup over t0 < T/2 of the L^(2/(1-r)) norm on [t0, t0 + delta] of ||u(t)||_{B^-r_inf}."""
    T = u.T
    if delta > T / 2 * (1 + 1e-12):
        raise ValueError(f"delta={delta} exceeds T/2={T / 2}")
    if besov_series is None:
        besov_series = besov_norm_series(u, (-r, INF), fam)
    p = 2.0 / (1.0 - r)
    starts = u.times[u.times < T / 2]
    vals = besov_series**p
    integrals = _integral_between(u.times, vals, starts, np.minimum(starts + delta, T))
    return float(np.max(integrals) ** (1.0 / p))


def h_metric(u: TimeTrace, mu: float, delta: float, fam: DyadicFamily,
             table: np.ndarray | None = None) -> float:
    """max over samples 0 < t <= delta of t**((mu+1)/2) ||u(t)||_{B^mu_inf}."""
    sel = (u.times > 0) & (u.times <= delta * (1 + 1e-12))
    if not np.any(sel):
        return 0.0
    if table is None:
        series = besov_norm_series(u.truncated(int(np.flatnonzero(sel)[-1]) + 1), (mu, INF), fam)
    else:
        series = besov_norm_series(u, (mu, INF), fam, table=table)
    series = series[: len(sel)][sel[: len(series)]]
    return float(np.max(u.times[sel] ** ((mu + 1) / 2.0) * series))


def theta_hypothesis(u: TimeTrace, r: float, delta_list, fam: DyadicFamily,
                     besov_series: np.ndarray | None = None) -> tuple[bool, list]:
    """Theta(delta) finite and shrinking with delta: the critical-norm hypothesis proxy."""
    if besov_series is None:
        besov_series = besov_norm_series(u, (-r, INF), fam)
    deltas = sorted(delta_list, reverse=True)
    thetas = [theta_window(u, r, d, fam, besov_series) for d in deltas]
    ok = all(math.isfinite(x) for x in thetas) and all(
        thetas[i + 1] < thetas[i] for i in range(len(thetas) - 1))
    return ok, thetas


def window_argmin(times: np.ndarray, series: np.ndarray, t: float) -> float:
    """Sample time minimizing ``series`` over [t/4, t/2]; ``nan`` if no sample falls there."""
    sel = (times >= t / 4) & (times <= t / 2)
    if not np.any(sel):
        return float("nan")
    idx = np.flatnonzero(sel)
    return float(times[idx[np.argmin(series[idx])]])


def smallness_chain(u: TimeTrace, params: CriterionParams, fam: DyadicFamily) -> dict:
    """h(sigma, delta), h(-r, delta) and Theta(delta) for every delta."""
    table = block_lp_table(u.coeffs, fam, INF)
    bseries = besov_norm_series(u, (-params.r, INF), fam, table=table)
    out = {"delta": [], "theta": [], "h_sigma": [], "h_minus_r": []}
    for d in params.delta_list:
        out["delta"].append(float(d))
        out["theta"].append(theta_window(u, params.r, d, fam, bseries))
        out["h_sigma"].append(h_metric(u, params.sigma, d, fam, table))
        out["h_minus_r"].append(h_metric(u, -params.r, d, fam, table))
    return out


# --------------------------------------------------------------------------
# blow-up tracker


def blowup_tracker_series(times, norms, r: float, epsilon: float | None = None,
                          growth: float = 10.0) -> ExperimentReport:
    """Blow-up functional for a sampled ``||u(t)||_{B^-r_inf}`` series ending at T*.

    A blow-up is flagged only when all three hold over the last decade of
    ``T* - t``: the weighted series stays at or above ``epsilon``, it shows no
    vanishing trend, and the norm exceeds ``growth`` times its initial value.
    ``epsilon`` defaults to the frozen ``1/(4 C**2)``.
    """
    times = np.asarray(times, dtype=float)
    norms = np.asarray(norms, dtype=float)
    if len(times) < 8:
        raise ValueError("blow-up tracker needs at least 8 samples")
    if epsilon is None:
        from .constants import load_constants

        epsilon = load_constants().epsilon_guess()
    T_star = float(times[-1])
    keep = (times < T_star) & np.isfinite(norms)
    t, n = times[keep], norms[keep]
    gap = T_star - t
    series = gap ** ((1.0 - r) / 2.0) * n
    last = gap <= 10.0 * gap.min() * (1 + 1e-12)
    liminf = float(series[last].min())
    pos = last & (series > 0)
    if np.count_nonzero(pos) >= 2:
        slope = float(np.polyfit(np.log(gap[pos]), np.log(series[pos]), 1)[0])
    else:
        slope = float("nan")
    p = 2.0 / (1.0 - r)
    half = t >= T_star / 2
    integral = float(np.trapezoid(n[half] ** p, t[half])) if np.count_nonzero(half) >= 2 else 0.0
    growth_ratio = float(n[last].min() / n[0]) if n[0] > 0 else (INF if n[last].min() > 0 else 0.0)

    rep = ExperimentReport("blowup")
    rep.add_series("weighted_besov_norm", t, series)
    rep.add_series("besov_norm", t, n)
    rep.scalars.update(T_star=T_star, liminf_last_decade=liminf, log_slope_last_decade=slope,
                       critical_integral_second_half=integral, growth_ratio=growth_ratio,
                       r=r, epsilon=float(epsilon))
    vanishing = bool(slope > (1.0 - r) / 4.0) if math.isfinite(slope) else liminf == 0.0
    flagged = liminf >= epsilon and not vanishing and growth_ratio > growth
    rep.add_verdict("no_blowup", not flagged,
                    ["liminf_last_decade", "epsilon", "log_slope_last_decade", "growth_ratio"])
    return rep


def blowup_tracker(u: TimeTrace, r: float, fam: DyadicFamily, epsilon: float | None = None) -> ExperimentReport:
    norms = besov_norm_series(u, (-r, INF), fam)
    return blowup_tracker_series(u.times, norms, r, epsilon)


# --------------------------------------------------------------------------
# uniqueness


def z_norm(u: TimeTrace, r: float, q: float, delta: float, fam: DyadicFamily, tables=None) -> float:
    """Norm of the intersection space on [0, delta]."""
    t_q, t_inf = tables if tables is not None else (None, None)
    a = chemin_lerner_norm(u, CheminLernerIndex(2.0 / (1.0 + r), BesovIndex(1.0 + r, q), delta), fam, t_q)
    b = chemin_lerner_norm(u, CheminLernerIndex(2.0 / (1.0 - r), BesovIndex(-r, INF), delta), fam, t_inf)
    return max(a, b)


def _z_norms(u: TimeTrace, r: float, q: float, deltas, fam: DyadicFamily) -> list:
    tables = (block_lp_table(u.coeffs, fam, q), block_lp_table(u.coeffs, fam, INF))
    return [z_norm(u, r, q, d, fam, tables) for d in deltas]


def uniqueness_experiment(u0: FourierField, cfg: SolverConfig, r: float, delta_list,
                          fam: DyadicFamily | None = None, levels: int = 3, n0: int = 2,
                          dt_factor: float = 2.0, orders=(2, 2), q: float | None = None,
                          min_decay: float = 10.0, floor: float = 1e-12,
                          data_perturbation: float = 0.0, seed: int = 0,
                          workers: int = 2, iteration_factor: int = 2) -> ExperimentReport:
    """Distance in Z_delta between two Picard solves from the same data.

    Level ``l`` uses ``dt / dt_factor**l``; the solves run ``n0 * 2**l`` and
    ``iteration_factor * n0 * 2**l`` iterations with quadrature orders ``orders``.  A nonzero
    ``data_perturbation`` perturbs the second solve's data instead (stability
    variant, not a uniqueness statement).
    """
    fam = fam or DyadicFamily(cfg.grid)
    q = float(cfg.grid.d) if q is None else q
    deltas = sorted(float(d) for d in delta_list)
    rep = ExperimentReport("uniqueness")
    rep.scalars.update(r=r, q=q, deltas=deltas, levels=levels, n0=n0, dt_factor=dt_factor,
                       iteration_factor=iteration_factor,
                       orders=list(orders), variant="method" if data_perturbation == 0 else "data-perturbation")
    u0b = u0
    if data_perturbation:
        from .solver import random_besov
        u0b = u0 + random_besov(cfg.grid, -r, seed + 1, amplitude=data_perturbation, kmax=max(2, cfg.grid.N // 8))
    diffs, norms1, norms2 = [], [], []
    last = None
    for lvl in range(levels):
        n = n0 * 2**lvl
        base = replace(cfg, dt=cfg.dt / dt_factor**lvl, tol_fixpoint=0.0)
        jobs = ((u0, replace(base, n_picard=n, order=orders[0])),
                (u0b, replace(base, n_picard=iteration_factor * n, order=orders[1])))
        try:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                u1, u2 = (r_[0] for r_ in pool.map(lambda job: picard_solve(*job, compute_residual=False), jobs))
        except BlowupSuspected as exc:
            rep.scalars["halted_at_level"] = lvl
            rep.scalars["halt_time"] = exc.last_valid_time
            break
        diffs.append(_z_norms(u1 - u2, r, q, deltas, fam))
        norms1.append(_z_norms(u1, r, q, deltas, fam))
        norms2.append(_z_norms(u2, r, q, deltas, fam))
        last = (u1, u2, base)
    diffs = np.array(diffs)
    rep.scalars["z_difference"] = diffs.tolist()
    rep.scalars["z_norm_u1"] = np.array(norms1).tolist()
    rep.scalars["z_norm_u2"] = np.array(norms2).tolist()
    if last is None or len(diffs) < 2:
        rep.scalars["decay_ratios"] = []
        rep.scalars["contraction_factor"] = float("nan")
        rep.add_verdict("refinement_decay", False, "z_difference")
        rep.add_verdict("contraction", False, "contraction_factor")
        return rep

    scale = np.maximum(np.array(norms1), 1e-300)
    ratios, ok = [], True
    for lvl in range(len(diffs) - 1):
        row = []
        for k in range(len(deltas)):
            a, b = diffs[lvl, k], diffs[lvl + 1, k]
            converged = b <= floor * scale[lvl + 1, k]
            row.append(float(a / b) if b > 0 else (1.0 if a == 0 else INF))
            ok &= bool(converged or a >= min_decay * b)
        ratios.append(row)
    rep.scalars["decay_ratios"] = [[_jsonable(x) for x in row] for row in ratios]
    rep.add_verdict("refinement_decay", ok, "z_difference")

    u1, u2, base = last
    quad = OseenQuadrature(orders[0])
    consts = []
    for a, b in ((u1, u1), (u1, u2), (u2, u2)):
        Bab = bilinear_B(a, b, quad, base.dealias)
        za, zb, zB = _z_norms(a, r, q, deltas, fam), _z_norms(b, r, q, deltas, fam), _z_norms(Bab, r, q, deltas, fam)
        consts += [zB[k] / (za[k] * zb[k]) for k in range(len(deltas)) if za[k] * zb[k] > 0]
    C = max(consts, default=0.0)
    factor = C * (norms1[-1][0] + norms2[-1][0])
    rep.scalars["bilinear_constant"] = float(C)
    rep.scalars["contraction_factor"] = float(factor)
    rep.add_verdict("contraction", factor < 1.0, ["contraction_factor", "bilinear_constant"])
    return rep


# --------------------------------------------------------------------------
# bootstrap lemma


@dataclass
class BootstrapResult:
    hypotheses_met: bool
    verdict: bool | None
    first_violation: int | None = None
    reason: str = ""

    def as_dict(self) -> dict:
        return {"hypotheses_met": self.hypotheses_met, "verdict": self.verdict,
                "first_violation": self.first_violation, "reason": self.reason}


def bootstrap_check(samples, A: float, B: float) -> BootstrapResult:
    """Continuity bound: 4AB < 1, f(0) <= 2A and f <= A + B f**2 imply f <= 2A.

    Sampled series must be dense: a jump wider than the gap between the roots
    of B x**2 - x + A = 0 is rejected as a hypothesis failure.
    """
    f = np.asarray(samples, dtype=float)
    if not B > 0:
        return BootstrapResult(False, None, reason="B must be positive")
    if 4 * A * B >= 1:
        return BootstrapResult(False, None, reason="4AB >= 1")
    if len(f) == 0 or not np.all(np.isfinite(f)):
        return BootstrapResult(False, None, reason="series empty or non-finite")
    if f[0] > 2 * A:
        return BootstrapResult(False, None, 0, "f(0) > 2A")
    bad = np.flatnonzero(f > A + B * f**2)
    if len(bad):
        return BootstrapResult(False, None, int(bad[0]), "f > A + B f^2")
    gap = math.sqrt(1 - 4 * A * B) / B
    jumps = np.flatnonzero(np.abs(np.diff(f)) >= gap)
    if len(jumps):
        return BootstrapResult(False, None, int(jumps[0]) + 1, "sampling too coarse: jump across root gap")
    over = np.flatnonzero(f > 2 * A)
    if len(over):
        return BootstrapResult(True, False, int(over[0]), "f exceeds 2A")
    return BootstrapResult(True, True)


# --------------------------------------------------------------------------
# persistence


def persistence_check(u0: FourierField, cfg: SolverConfig, r: float, fam: DyadicFamily | None = None,
                      bound: float | None = None) -> ExperimentReport:
    """sup_t ||u(t)||_{B^-r_inf} relative to the data norm."""
    if not 0 < r < 1:
        raise ValueError("persistence needs 0 < r < 1")
    fam = fam or DyadicFamily(cfg.grid)
    u, diag = picard_solve(u0, cfg, compute_residual=False)
    series = besov_norm_series(u, (-r, INF), fam)
    data = besov_norm(u0, (-r, INF), fam)
    rep = ExperimentReport("persistence")
    rep.add_series("besov_norm", u.times, series)
    ratio = float(series.max() / data) if data > 0 else 0.0
    rep.scalars.update(data_norm=data, sup_norm=float(series.max()), ratio=ratio, r=r,
                       picard_iterations=diag.iterations, bound=bound)
    if bound is not None:
        rep.add_verdict("bounded", ratio <= bound, ["ratio", "bound"])
    return rep


def heat_only(u0: FourierField, times) -> TimeTrace:
    return TimeTrace(u0.grid, np.asarray(times, dtype=float), heat_trace(u0, times))


def divergence_series(u: TimeTrace) -> np.ndarray:
    return np.array([divergence_defect(u[i]) for i in range(len(u))])

"""Measured inequality constants: sweeps, the frozen constants file, band checks.

Every non-explicit constant is measured by one function here.  ``calibrate``
runs them on a dedicated seed range and freezes the results; regression
checks rerun the same function on other seeds and compare within a band.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import dirac, pair_corpus, random_field
from .littlewood_paley import DyadicFamily
from .norms import (
    bernstein_ratios,
    besov_norm,
    check_gmo,
    check_heat_characterization,
    check_heat_smoothing,
    check_interpolation,
    check_weighted_heat,
    heat_flow_trace,
    time_lp,
    besov_norm_series,
    weighted_sup_norm,
)
from .paraproduct import ParaproductLawSpec, apply_linearized, estimate_law_constant
from .spectral import TorusGrid

INF = math.inf
BAND = 0.2
CALIBRATION_SEED = 10_000
DEFAULT_PATH = Path(__file__).with_name("data") / "constants.json"

HEAT_CHAR_S = (0.25, 0.5, 0.75)
CHAIN_R, CHAIN_SIGMA = 0.5, 0.75
CHAIN_DELTAS = (0.2, 0.1, 0.05)


# --------------------------------------------------------------------------
# constants file


@dataclass
class FrozenConstants:
    entries: dict
    path: Path | None = None

    @classmethod
    def load(cls, path: str | Path | None = None) -> "FrozenConstants":
        path = Path(path) if path is not None else DEFAULT_PATH
        with open(path) as fh:
            data = json.load(fh)
        return cls(data["constants"], path)

    def save(self, path: str | Path | None = None) -> Path:
        path = Path(path) if path is not None else (self.path or DEFAULT_PATH)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {"code_version": __version__, "constants": self.entries}
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return path

    def __getitem__(self, name: str) -> dict:
        return self.entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def value(self, name: str) -> float:
        return float(self.entries[name]["constant"])

    def band(self, name: str) -> float:
        return float(self.entries[name].get("band", BAND))

    def upper_ok(self, name: str, measured: float) -> bool:
        """measured <= frozen constant * (1 + band)."""
        return measured <= self.value(name) * (1 + self.band(name))

    def stable(self, name: str, measured: float) -> bool:
        """measured within the multiplicative band around the frozen constant."""
        c, b = self.value(name), self.band(name)
        return c * (1 - b) <= measured <= c * (1 + b)

    def in_range(self, name: str, lo: float, hi: float) -> bool:
        """[lo, hi] inside the frozen [lower, upper] widened by the band."""
        e, b = self.entries[name], self.band(name)
        return e["lower"] * (1 - b) <= lo and hi <= e["upper"] * (1 + b)

    def epsilon_guess(self) -> float:
        c = self.value("bilinear_l1_lr")
        return 1.0 / (4.0 * c * c)


def load_constants(path: str | Path | None = None) -> FrozenConstants:
    return FrozenConstants.load(path)


# --------------------------------------------------------------------------
# measurements


def resolved_blocks(fam: DyadicFamily) -> np.ndarray:
    """Blocks whose annulus 2**(j+2) fits below N/2; the last two are cut by the lattice."""
    j = np.arange(-1, fam.J_max + 1)
    return j <= fam.J_max - 2


def measure_bernstein(N: int, d: int = 2) -> float:
    fam = DyadicFamily(TorusGrid(d, N))
    ratios = bernstein_ratios(dirac(fam.grid), fam)
    return float(np.nanmax(ratios[resolved_blocks(fam)]))


def measure_heat_characterization(N: int, s: float, seeds) -> np.ndarray:
    fam = DyadicFamily(TorusGrid(2, N))
    return np.array([check_heat_characterization(random_field(fam.grid, sd), s, INF, fam).ratio for sd in seeds])


PARAPRODUCT_SPEC = ParaproductLawSpec(0.5, 1.0)


def measure_paraproduct_law(N: int, n: int, seed: int, spec: ParaproductLawSpec = PARAPRODUCT_SPEC):
    fam = DyadicFamily(TorusGrid(2, N))
    return estimate_law_constant(spec, pair_corpus(fam.grid, n, seed), fam)


def measure_ratio_sweep(kind: str, N: int, seeds) -> np.ndarray:
    fam = DyadicFamily(TorusGrid(2, N))
    out = []
    for sd in seeds:
        f = random_field(fam.grid, sd)
        if kind == "gmo":
            rep = check_gmo(f, 0.5, 1.0, fam)
        elif kind == "interpolation":
            rep = check_interpolation(f, CHAIN_R, CHAIN_SIGMA, fam)
        elif kind == "heat_smoothing":
            rep = check_heat_smoothing(f, -0.5, 0.5, INF, 1.0, fam)
        elif kind == "weighted_heat":
            rep = check_weighted_heat(f, CHAIN_R, fam)
        else:
            raise ValueError(f"unknown sweep {kind!r}")
        out.append(rep.ratio)
    return np.array(out)


def _heat_pair(grid: TorusGrid, seed: int, times):
    from .solver import random_besov

    f = random_besov(grid, -0.5, seed, kmax=grid.N // 4)
    g = random_besov(grid, -0.5, seed + 1, kmax=grid.N // 4)
    return heat_flow_trace(f, times), heat_flow_trace(g, times)


def measure_bilinear(N: int, seeds, r: float = CHAIN_R, T: float = 1.0, dt: float = 0.02) -> np.ndarray:
    """weighted_sup(B(u,v), r) / (weighted_sup(u, 1) weighted_sup(v, r)) on heat-flow pairs."""
    from .solver import bilinear_B, make_time_grid

    grid = TorusGrid(2, N)
    times = make_time_grid(T, dt)
    out = []
    for sd in seeds:
        u, v = _heat_pair(grid, sd, times)
        B = bilinear_B(u, v)
        out.append(weighted_sup_norm(B, r) / (weighted_sup_norm(u, 1.0) * weighted_sup_norm(v, r)))
    return np.array(out)


def small_data_runs(N: int, seeds, amplitude: float = 1.0, T: float = 0.5, dt: float = 0.01, r: float = CHAIN_R):
    """Picard solutions from small random data in B^{-r}_inf."""
    from .solver import SolverConfig, picard_solve, random_besov

    grid = TorusGrid(2, N)
    cfg = SolverConfig(grid=grid, T=T, dt=dt, n_picard=20)
    out = []
    for sd in seeds:
        u0 = random_besov(grid, -r, sd, amplitude=amplitude, kmax=min(6, N // 4))
        out.append((u0, picard_solve(u0, cfg, compute_residual=False)[0]))
    return out


def measure_chain(runs, fam: DyadicFamily) -> dict:
    """h(sigma,delta)/(2 Theta(delta)), h(-r,delta)/(2 Theta(delta)), Theta(delta_0), sup/data per run."""
    from .criteria import CriterionParams, smallness_chain

    params = CriterionParams(CHAIN_R, CHAIN_SIGMA, CHAIN_DELTAS)
    c1, c2, theta0, persist = [], [], [], []
    for u0, u in runs:
        ch = smallness_chain(u, params, fam)
        th = np.array(ch["theta"])
        c1.append(float(np.max(np.array(ch["h_sigma"]) / (2 * th))))
        c2.append(float(np.max(np.array(ch["h_minus_r"]) / (2 * th))))
        theta0.append(float(th[0]))
        series = besov_norm_series(u, (-CHAIN_R, INF), fam)
        persist.append(float(series.max() / besov_norm(u0, (-CHAIN_R, INF), fam)))
    return {"e4_C1": np.array(c1), "e40_C2": np.array(c2), "theta_smallness": np.array(theta0),
            "persistence": np.array(persist)}


def measure_linearized(N: int, seeds, deltas=(0.1, 0.05, 0.025), r: float = CHAIN_R) -> np.ndarray:
    """||L_u f||_Z / (||f||_Z ||u||_{L^{2/(1-r)}_delta B^{-r}_inf}) per pair and delta."""
    from .criteria import z_norm
    from .solver import make_time_grid

    grid = TorusGrid(2, N)
    fam = DyadicFamily(grid)
    times = make_time_grid(max(deltas), max(deltas) / 20)
    out = []
    for sd in seeds:
        u, f = _heat_pair(grid, sd, times)
        L = apply_linearized(u, f, fam)
        bu = besov_norm_series(u, (-r, INF), fam)
        row = []
        for d in deltas:
            sel = times <= d * (1 + 1e-12)
            un = float(time_lp(times[sel], bu[sel], 2.0 / (1.0 - r)))
            row.append(z_norm(L, r, 2.0, d, fam) / (z_norm(f, r, 2.0, d, fam) * un))
        out.append(row)
    return np.array(out)


# --------------------------------------------------------------------------
# calibration


def _seeds(n: int, offset: int = 0) -> range:
    return range(CALIBRATION_SEED + offset, CALIBRATION_SEED + offset + n)


def _upper(values, **extra) -> dict:
    return {"constant": float(np.max(values)), "band": BAND, "n": int(np.size(values)), **extra}


def _range(values, **extra) -> dict:
    v = np.asarray(values)
    return {"lower": float(v.min()), "upper": float(v.max()), "band": BAND, "n": int(v.size), **extra}


def calibrate(path: str | Path | None = None, workers: int = 1, quick: bool = False) -> FrozenConstants:
    """Measure every constant on the calibration seeds and write the constants file."""
    n = 20 if quick else 150
    jobs = {
        "bernstein_d2": lambda: {"constant": measure_bernstein(64), "band": BAND, "N": 64},
        "bernstein_d3": lambda: {"constant": measure_bernstein(32, 3), "band": BAND, "N": 32},
        "paraproduct_law": lambda: _law(),
        "gmo": lambda: _upper(measure_ratio_sweep("gmo", 64, _seeds(n)), alpha=0.5, beta=1.0, p=2.0),
        "interpolation": lambda: _upper(measure_ratio_sweep("interpolation", 64, _seeds(n)),
                                        r=CHAIN_R, sigma=CHAIN_SIGMA),
        "heat_smoothing": lambda: _upper(measure_ratio_sweep("heat_smoothing", 64, _seeds(n)), s1=-0.5, s2=0.5),
        "weighted_heat": lambda: _range(measure_ratio_sweep("weighted_heat", 64, _seeds(n)), r=CHAIN_R),
        "bilinear_l1_lr": lambda: _upper(measure_bilinear(32, _seeds(4 if quick else 12, 500)), r=CHAIN_R),
        "linearized": lambda: _upper(measure_linearized(32, _seeds(3 if quick else 8, 700)), r=CHAIN_R),
    }
    for s in HEAT_CHAR_S:
        jobs[f"heat_characterization_s{s}"] = (
            lambda s=s: _range(np.concatenate([measure_heat_characterization(N, s, _seeds(n, 1000))
                                               for N in (32, 64)]), s=s, q="inf"))

    def chain():
        runs = small_data_runs(32, _seeds(4 if quick else 10, 900))
        m = measure_chain(runs, DyadicFamily(TorusGrid(2, 32)))
        return {k: _upper(v, r=CHAIN_R, sigma=CHAIN_SIGMA, deltas=list(CHAIN_DELTAS)) for k, v in m.items()}

    names = sorted(jobs)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = dict(zip(names, pool.map(lambda k: jobs[k](), names)))
        chained = pool.submit(chain).result()
    entries = {}
    for k, v in results.items():
        if k == "paraproduct_law":
            entries.update(v)
        else:
            entries[k] = v
    entries.update(chained)
    frozen = FrozenConstants(entries, Path(path) if path else DEFAULT_PATH)
    frozen.save()
    return frozen


def _law() -> dict:
    rep = measure_paraproduct_law(64, 40, CALIBRATION_SEED)
    meta = {"band": BAND, "N": 64, "sigma1": PARAPRODUCT_SPEC.sigma1, "sigma2": PARAPRODUCT_SPEC.sigma2}
    return {"paraproduct_pi1": {"constant": rep.pi1, **meta}, "paraproduct_pi2": {"constant": rep.pi2, **meta}}

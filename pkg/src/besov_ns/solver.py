"""Mild Navier-Stokes solutions on the torus by Picard iteration.

The integral form is discretised directly: the Oseen operator

    L_oss(F)(t) = - int_0^t exp((t - s) Lap) P div F(s) ds

is evaluated mode by mode with the heat kernel integrated exactly and the
forcing interpolated in time (piecewise constant for order 1, piecewise
linear for order 2).
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .spectral import (
    FourierField,
    TimeTrace,
    TorusGrid,
    advection_forcing,
    divergence_defect,
    divergence_of_tensor_coeffs,
    heat_multiplier,
    l2_norm_coeffs,
    leray_coeffs,
    leray_project,
)

log = logging.getLogger(__name__)

BLOWUP_SUP = 1e8


class BlowupSuspected(RuntimeError):
    """A Picard iterate became non-finite or exceeded the sup-norm ceiling."""

    def __init__(self, message: str, trace: TimeTrace | None, last_valid_time: float):
        super().__init__(message)
        self.trace = trace
        self.last_valid_time = last_valid_time


@dataclass(frozen=True)
class OseenQuadrature:
    order: int = 2
    substeps: int = 1

    def __post_init__(self):
        if self.order not in (1, 2):
            raise ValueError(f"quadrature order must be 1 or 2, got {self.order}")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")


def make_time_grid(T: float, dt: float, n_geometric: int = 16, depth: int = 8) -> np.ndarray:
    """0, then ``n_geometric`` samples geometric from dt*2**-depth to dt, then uniform to T."""
    if not (T > 0 and dt > 0):
        raise ValueError("T and dt must be positive")
    first = min(dt, T)
    geo = np.geomspace(first * 2.0**-depth, first, n_geometric) if n_geometric > 1 else np.array([first])
    n_uniform = int(math.floor(T / dt + 1e-9))
    uniform = dt * np.arange(2, n_uniform + 1)
    times = np.concatenate([[0.0], geo, uniform])
    if T - times[-1] > 1e-9 * T:
        times = np.append(times, T)
    else:
        times[-1] = T
    return times


@dataclass
class SolverConfig:
    grid: TorusGrid
    T: float = 1.0
    dt: float = 1e-3
    n_picard: int = 20
    dealias: bool = True
    tol_fixpoint: float = 1e-10
    order: int = 2
    substeps: int = 1
    n_geometric: int = 16
    geometric_depth: int = 8
    nonlinear: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.n_picard < 1:
            raise ValueError("n_picard must be >= 1")

    @property
    def time_grid(self) -> np.ndarray:
        return make_time_grid(self.T, self.dt, self.n_geometric, self.geometric_depth)

    @property
    def quadrature(self) -> OseenQuadrature:
        return OseenQuadrature(self.order, self.substeps)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["grid"] = {"d": self.grid.d, "N": self.grid.N}
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SolverConfig":
        data = dict(data)
        g = data.pop("grid")
        grid = g if isinstance(g, TorusGrid) else TorusGrid(int(g["d"]), int(g["N"]))
        return cls(grid=grid, **data)


# --------------------------------------------------------------------------
# exponential quadrature weights


def _phi12(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """phi1(z) = (e^z - 1)/z and phi2(z) = (e^z - 1 - z)/z^2 for z <= 0."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 0.1
    zs = np.where(small, 1.0, z)
    em1 = np.expm1(zs)
    p1 = em1 / zs
    p2 = (em1 - zs) / zs**2
    if np.any(small):
        zz = z[small]
        s1 = np.zeros_like(zz)
        s2 = np.zeros_like(zz)
        term = np.ones_like(zz)
        # sum z^n/(n+1)! and z^n/(n+2)!
        for n in range(14):
            s1 += term / math.factorial(n + 1)
            s2 += term / math.factorial(n + 2)
            term = term * zz
        p1[small] = s1
        p2[small] = s2
    return p1, p2


class _Weights:
    def __init__(self, ksq: np.ndarray, order: int):
        self.ksq = ksq
        self.order = order
        self._cache: dict[float, tuple] = {}

    def __call__(self, h: float):
        key = float(h)
        w = self._cache.get(key)
        if w is None:
            z = -self.ksq * h
            p1, p2 = _phi12(z)
            E = np.exp(z)
            if self.order == 1:
                w = (E, h * p1, None)
            else:
                w = (E, h * (p1 - p2), h * p2)
            if len(self._cache) < 64:
                self._cache[key] = w
        return w


def duhamel(forcing: np.ndarray, times: np.ndarray, grid: TorusGrid,
            quad: OseenQuadrature = OseenQuadrature()) -> np.ndarray:
    """``int_{t_0}^{t_n} exp((t_n - s) Lap) g(s) ds`` at every sample ``t_n``.

    ``forcing`` holds ``g`` at the samples, leading axis time.
    """
    times = np.asarray(times, dtype=float)
    weights = _Weights(grid.ksq, quad.order)
    out = np.zeros_like(forcing)
    acc = np.zeros_like(forcing[0])
    s = quad.substeps
    for n in range(len(times) - 1):
        h = (times[n + 1] - times[n]) / s
        E, w_left, w_right = weights(h)
        g0, g1 = forcing[n], forcing[n + 1]
        for m in range(s):
            a = g0 + (g1 - g0) * (m / s)
            if quad.order == 1:
                acc = E * acc + w_left * a
            else:
                b = g0 + (g1 - g0) * ((m + 1) / s)
                acc = E * acc + w_left * a + w_right * b
        out[n + 1] = acc
    return out


def _forcing_from_tensors(tensors: np.ndarray, grid: TorusGrid) -> np.ndarray:
    return -leray_coeffs(divergence_of_tensor_coeffs(tensors, grid), grid)


def oseen_apply(F: TimeTrace, t: float, quad: OseenQuadrature = OseenQuadrature(),
                forcing: bool = False) -> FourierField:
    """The Oseen integral operator at one instant.

    ``F`` holds rank-2 tensor fields, or (``forcing=True``) the vector
    integrand ``-P div F`` directly.
    """
    times = F.times
    if not times[0] <= t <= times[-1] * (1 + 1e-14):
        raise ValueError(f"t={t} outside trace span [{times[0]}, {times[-1]}]")
    g = F.coeffs if forcing else _forcing_from_tensors(F.coeffs, F.grid)
    n = int(np.searchsorted(times, t, side="left"))
    if n < len(times) and math.isclose(times[n], t, rel_tol=1e-14, abs_tol=1e-300):
        res = duhamel(g[: n + 1], times[: n + 1], F.grid, quad)[-1]
    else:
        w = (t - times[n - 1]) / (times[n] - times[n - 1])
        gt = g[n - 1] + w * (g[n] - g[n - 1])
        ts = np.append(times[:n], t)
        res = duhamel(np.concatenate([g[:n], gt[None]]), ts, F.grid, quad)[-1]
    return FourierField(F.grid, res, divergence_free=True)


def nonlinear_forcing(u: np.ndarray, v: np.ndarray, grid: TorusGrid, dealias: bool) -> np.ndarray:
    return np.stack([advection_forcing(a, b, grid, dealias) for a, b in zip(u, v)])


def bilinear_B(u: TimeTrace, v: TimeTrace, quad: OseenQuadrature = OseenQuadrature(),
               dealias: bool = True) -> TimeTrace:
    """``B(u, v)(t) = L_oss(u (x) v)(t)`` at every sample."""
    if u.grid != v.grid or not np.array_equal(u.times, v.times):
        raise ValueError("B needs traces on a common grid and time grid")
    g = nonlinear_forcing(u.coeffs, v.coeffs, u.grid, dealias)
    return TimeTrace(u.grid, u.times, duhamel(g, u.times, u.grid, quad))


def heat_trace(u0: FourierField, times: np.ndarray) -> np.ndarray:
    return np.stack([u0.coeffs * heat_multiplier(u0.grid, t) for t in times])


@dataclass
class PicardDiagnostics:
    sigmas: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    non_contraction: list = field(default_factory=list)
    fixed_point_residual: float = float("nan")
    max_divergence_defect: float = 0.0

    @property
    def ratios(self) -> list:
        s = self.sigmas
        return [s[i + 1] / s[i] if s[i] > 0 else 0.0 for i in range(len(s) - 1)]

    def as_dict(self) -> dict:
        return {
            "sigmas": list(map(float, self.sigmas)),
            "ratios": list(map(float, self.ratios)),
            "iterations": self.iterations,
            "converged": self.converged,
            "non_contraction": self.non_contraction,
            "fixed_point_residual": self.fixed_point_residual,
            "max_divergence_defect": self.max_divergence_defect,
        }


def _first_bad_sample(coeffs: np.ndarray, grid: TorusGrid) -> int | None:
    flat = coeffs.reshape(len(coeffs), -1)
    finite = np.all(np.isfinite(flat), axis=1)
    # sum |u_hat| bounds the sup norm; only suspicious samples get the exact check
    bound = np.sum(np.abs(np.where(np.isfinite(flat), flat, 0)), axis=1) * math.sqrt(grid.d)
    bad = ~finite
    suspicious = np.flatnonzero(finite & (bound > BLOWUP_SUP))
    if len(suspicious):
        from .norms import sup_norm_series
        sup = sup_norm_series(TimeTrace(grid, np.arange(len(suspicious), dtype=float), coeffs[suspicious]))
        bad[suspicious[sup > BLOWUP_SUP]] = True
    idx = np.flatnonzero(bad)
    return int(idx[0]) if len(idx) else None


def picard_solve(u0: FourierField, cfg: SolverConfig,
                 compute_residual: bool = True) -> tuple[TimeTrace, PicardDiagnostics]:
    """Iterate ``u <- exp(t Lap) u0 + B(u, u)`` on the configured time grid."""
    if u0.grid != cfg.grid:
        raise ValueError("initial field does not live on the solver grid")
    if u0.rank != 1:
        raise ValueError("initial field must be a vector field")
    if divergence_defect(u0) > 1e-12:
        log.warning("initial field is not divergence-free; projecting")
        u0 = leray_project(u0)
    grid = cfg.grid
    times = cfg.time_grid
    quad = cfg.quadrature
    heat = heat_trace(u0, times)
    u = heat
    diag = PicardDiagnostics()
    if cfg.nonlinear:
        for n in range(cfg.n_picard):
            new = heat + duhamel(nonlinear_forcing(u, u, grid, cfg.dealias), times, grid, quad)
            bad = _first_bad_sample(new, grid)
            if bad is not None:
                last = float(times[bad - 1]) if bad > 0 else 0.0
                partial = TimeTrace(grid, times[:bad], u[:bad], {"halted": True}) if bad > 0 else None
                raise BlowupSuspected(
                    f"iterate {n + 1} blew up at t={times[bad]:.6g}", partial, last)
            sigma = float(np.max(l2_norm_coeffs(new - u, grid, axes=1)))
            diag.sigmas.append(sigma)
            if len(diag.sigmas) >= 2 and diag.sigmas[-2] > 0:
                diag.non_contraction.append(bool(sigma / diag.sigmas[-2] >= 1.0))
            u = new
            diag.iterations = n + 1
            if sigma <= cfg.tol_fixpoint:
                diag.converged = True
                break
    else:
        diag.converged = True
    trace = TimeTrace(grid, times, u, {"config": cfg.to_dict()})
    diag.max_divergence_defect = max(divergence_defect(FourierField(grid, c)) for c in u[:: max(1, len(u) // 32)])
    if compute_residual:
        diag.fixed_point_residual = (
            restart_check(trace, 0.0, quad, cfg.dealias)["residual"] if cfg.nonlinear else 0.0)
    return trace, diag


def restart_check(u: TimeTrace, t0: float, quad: OseenQuadrature = OseenQuadrature(),
                  dealias: bool = True) -> dict:
    """Residual of the integral equation restarted from the sample at ``t0``."""
    matches = np.flatnonzero(np.isclose(u.times, t0, rtol=1e-12, atol=1e-300))
    if len(matches) == 0:
        raise ValueError(f"t0={t0} is not a trace sample")
    n0 = int(matches[0])
    times = u.times[n0:]
    grid = u.grid
    rest = u.coeffs[n0:]
    g = nonlinear_forcing(rest, rest, grid, dealias)
    pred = np.stack([rest[0] * heat_multiplier(grid, t - times[0]) for t in times])
    pred = pred + duhamel(g, times, grid, quad)
    err = l2_norm_coeffs(rest - pred, grid, axes=1)
    ref = l2_norm_coeffs(rest, grid, axes=1)
    rel = np.divide(err, ref, out=np.zeros_like(err), where=ref > 0)
    series = rel[1:] if len(rel) > 1 else rel
    return {"t0": float(t0), "residual": float(np.max(series, initial=0.0)), "series": series}


# --------------------------------------------------------------------------
# initial data


def taylor_green(grid: TorusGrid) -> FourierField:
    x = grid.x
    if grid.d == 2:
        vals = np.stack([np.cos(x[0]) * np.sin(x[1]), -np.sin(x[0]) * np.cos(x[1])])
    else:
        vals = np.stack([np.sin(x[0]) * np.cos(x[1]) * np.cos(x[2]),
                         -np.cos(x[0]) * np.sin(x[1]) * np.cos(x[2]),
                         np.zeros(grid.shape)])
    return FourierField.from_physical(grid, vals, divergence_free=True)


def _transverse(k: np.ndarray) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    if len(k) == 2:
        a = np.array([-k[1], k[0]])
    else:
        e = np.eye(3)[np.argmin(np.abs(k))]
        a = np.cross(k, e)
    return a / np.linalg.norm(a)


def single_mode(grid: TorusGrid, k, amplitude: float = 1.0) -> FourierField:
    """``amplitude * a cos(k.x)`` with ``a`` a unit vector orthogonal to ``k``."""
    k = np.asarray(k, dtype=float)
    if len(k) != grid.d or not np.any(k):
        raise ValueError("single-mode wavevector must be nonzero with d entries")
    a = _transverse(k)
    phase = np.tensordot(k, grid.x, axes=1)
    vals = amplitude * a[(slice(None),) + (None,) * grid.d] * np.cos(phase)
    return FourierField.from_physical(grid, vals, divergence_free=True)


def random_trig_coeffs(grid: TorusGrid, kmax: int, seed: int, envelope, comp: int | None = None) -> np.ndarray:
    """Random real field with modes |k| <= kmax; identical function for every N > 2*kmax."""
    if 2 * kmax >= grid.N:
        raise ValueError(f"kmax={kmax} not resolved on N={grid.N}")
    rng = np.random.default_rng(seed)
    ncomp = grid.d if comp is None else comp
    r = np.arange(-kmax, kmax + 1)
    box = np.stack(np.meshgrid(*([r] * grid.d), indexing="ij")).reshape(grid.d, -1)
    noise = rng.standard_normal((ncomp, box.shape[1])) + 1j * rng.standard_normal((ncomp, box.shape[1]))
    kn = np.sqrt(np.sum(box**2, axis=0))
    keep = (kn <= kmax) & (kn > 0)
    amp = np.zeros_like(kn)
    amp[keep] = envelope(kn[keep])
    coeffs = np.zeros((ncomp,) + grid.shape, dtype=np.complex128)
    idx = tuple(np.mod(box, grid.N))
    coeffs[(slice(None),) + idx] = noise * amp
    # real part of the physical field
    neg = tuple(np.mod(-box, grid.N))
    sym = np.zeros_like(coeffs)
    sym[(slice(None),) + idx] = 0.5 * (coeffs[(slice(None),) + idx] + np.conj(coeffs[(slice(None),) + neg]))
    return sym


def random_besov(grid: TorusGrid, s: float, seed: int, amplitude: float = 1.0,
                 kmax: int | None = None, tol: float = 0.05, fam=None) -> FourierField:
    """Divergence-free random field scaled so that ||u||_{B^s_inf} = amplitude.

    The spectral envelope |k|**-(s + d/2) gives every dyadic band a comparable
    weighted sup norm; the amplitude is then fixed by rescaling until the
    measured norm is within ``tol``.
    """
    from .littlewood_paley import DyadicFamily
    from .norms import besov_norm

    fam = fam or DyadicFamily(grid)
    kmax = grid.N // 3 if kmax is None else kmax
    slope = -(s + grid.d / 2.0)
    coeffs = random_trig_coeffs(grid, kmax, seed, lambda kn: kn**slope)
    f = leray_project(FourierField(grid, coeffs))
    target = float(amplitude)
    if target == 0:
        return f * 0.0
    for _ in range(8):
        nrm = besov_norm(f, (s, math.inf), fam)
        if abs(nrm / target - 1.0) <= tol * 0.01:
            break
        f = f * (target / nrm)
    return FourierField(grid, f.coeffs, divergence_free=True)


def make_initial_field(kind: str, grid: TorusGrid, **params) -> FourierField:
    if kind == "taylor-green":
        return taylor_green(grid)
    if kind == "single-mode":
        return single_mode(grid, params.get("k", (1,) + (0,) * (grid.d - 1)), params.get("amplitude", 1.0))
    if kind == "random-besov":
        return random_besov(grid, params.get("s", -0.5), params.get("seed", 0),
                            params.get("amplitude", 1.0), params.get("kmax"))
    if kind == "zero":
        return FourierField.zeros(grid, (grid.d,))
    raise ValueError(f"unknown initial field kind {kind!r}")

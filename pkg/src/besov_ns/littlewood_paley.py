"""Littlewood-Paley dyadic blocks on the torus lattice.

Low-pass profile ``phi(xi) = chi(|xi|)`` with the smooth step

    chi(t) = h(2 - t) / (h(2 - t) + h(t - 1)),   h(t) = exp(-1/t) for t > 0,

equal to 1 on |xi| <= 1 and to 0 on |xi| >= 2.  Band ``j >= 0`` uses
``psi(xi / 2**j)`` with ``psi(xi) = phi(xi / 2) - phi(xi)`` and block -1 is
``S_0``.  The top band ``J_max`` is closed as ``1 - phi(k / 2**J_max)`` so the
blocks sum to one on every lattice mode.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .spectral import FourierField, TimeTrace, TorusGrid


def _h(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def chi(t):
    """Smooth monotone step: 1 for t <= 1, 0 for t >= 2."""
    t = np.asarray(t, dtype=float)
    a = _h(2.0 - t)
    b = _h(t - 1.0)
    return a / (a + b)


def phi(xi_norm):
    return chi(xi_norm)


def psi(xi_norm):
    xi_norm = np.asarray(xi_norm, dtype=float)
    return phi(xi_norm / 2.0) - phi(xi_norm)


def support_scan_jmax(grid: TorusGrid) -> int:
    """Largest ``j`` whose open band ``2**j < |k| < 2**(j+2)`` holds a lattice mode."""
    kmax = float(grid.kmag.max())
    j = 0
    while 2.0 ** (j + 1) < kmax:
        j += 1
    return j


@dataclass(frozen=True, eq=False)
class DyadicFamily:
    grid: TorusGrid

    @cached_property
    def J_max(self) -> int:
        return support_scan_jmax(self.grid)

    @property
    def indices(self) -> range:
        return range(-1, self.J_max + 1)

    @cached_property
    def phi(self) -> np.ndarray:
        return phi(self.grid.kmag)

    @cached_property
    def _low(self) -> list[np.ndarray]:
        # _low[j] = phi(k / 2**j) for j = 0..J_max, identity beyond
        return [phi(self.grid.kmag / 2.0**j) for j in range(self.J_max + 1)]

    @cached_property
    def multipliers(self) -> np.ndarray:
        """Block profiles on the lattice, row ``j + 1`` holds block ``j``."""
        low = self._low
        rows = [low[0]]
        for j in range(self.J_max):
            rows.append(low[j + 1] - low[j])
        rows.append(1.0 - low[self.J_max])
        return np.stack(rows)

    def block_multiplier(self, j: int) -> np.ndarray:
        if j < -1 or j > self.J_max:
            raise IndexError(f"block index {j} outside [-1, {self.J_max}]")
        return self.multipliers[j + 1]

    def low_pass_multiplier(self, j: int) -> np.ndarray:
        if j < 0:
            raise IndexError(f"low-pass index must be >= 0, got {j}")
        if j > self.J_max:
            return np.ones(self.grid.shape)
        return self._low[j]

    def dump_csv(self, path) -> None:
        """Radial profile values per lattice shell, one column per block."""
        kmag = self.grid.kmag.ravel()
        shells, first = np.unique(np.round(kmag, 12), return_index=True)
        mults = self.multipliers.reshape(len(self.indices), -1)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k_norm", "phi"] + [f"block_{j}" for j in self.indices])
            for s, i in zip(shells, first):
                w.writerow([repr(float(s)), repr(float(self.phi.ravel()[i]))]
                           + [repr(float(m)) for m in mults[:, i]])


def build_dyadic_family(grid: TorusGrid) -> DyadicFamily:
    return DyadicFamily(grid)


def _check(f, fam: DyadicFamily):
    if f.grid != fam.grid:
        raise ValueError("field and dyadic family live on different grids")


def block(f: FourierField, j: int, fam: DyadicFamily) -> FourierField:
    _check(f, fam)
    return f.with_coeffs(f.coeffs * fam.block_multiplier(j), f.divergence_free)


def low_pass(f: FourierField, j: int, fam: DyadicFamily) -> FourierField:
    _check(f, fam)
    return f.with_coeffs(f.coeffs * fam.low_pass_multiplier(j), f.divergence_free)


def blocks(f: FourierField, fam: DyadicFamily) -> list[FourierField]:
    return [block(f, j, fam) for j in fam.indices]


def block_trace(u: TimeTrace, j: int, fam: DyadicFamily) -> TimeTrace:
    _check(u, fam)
    return TimeTrace(u.grid, u.times, u.coeffs * fam.block_multiplier(j))

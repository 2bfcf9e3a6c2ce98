"""Seeded field corpora for constant sweeps.

Fields built with an explicit ``kmax`` are the same trigonometric polynomial
on every grid that resolves them, so constants measured on them can be
compared across N.
"""
from __future__ import annotations

import numpy as np

from .spectral import FourierField, TorusGrid, leray_project
from .solver import random_trig_coeffs


def random_field(grid: TorusGrid, seed: int, kmax: int | None = None, slope: float | None = None,
                 vector: bool = False) -> FourierField:
    """Random real field with power-law envelope ``|k|**slope`` on ``|k| <= kmax``.

    Unset ``kmax``/``slope`` are drawn from the seed.
    """
    rng = np.random.default_rng([seed, 7])
    if kmax is None:
        kmax = int(rng.integers(2, grid.N // 2))
    if slope is None:
        slope = float(rng.uniform(-2.5, 0.5))
    c = random_trig_coeffs(grid, kmax, seed, lambda kn: kn**slope, comp=grid.d if vector else 1)
    if vector:
        return leray_project(FourierField(grid, c))
    return FourierField(grid, c[0])


def single_mode_scalar(grid: TorusGrid, k, phase: float = 0.0) -> FourierField:
    x = np.tensordot(np.asarray(k, dtype=float), grid.x, axes=1)
    return FourierField.from_physical(grid, np.cos(x + phase))


def dirac(grid: TorusGrid) -> FourierField:
    """Band-unlimited spike: every lattice coefficient equal to one (Nyquist kept)."""
    return FourierField(grid, np.ones(grid.shape, dtype=np.complex128))


def shell_representatives(grid: TorusGrid, kmax: float | None = None) -> list[tuple[int, ...]]:
    """One lattice vector per distinct |k| with 0 < |k| <= kmax (first octant)."""
    kmax = grid.N // 2 - 1 if kmax is None else kmax
    r = np.arange(0, int(kmax) + 1)
    pts = np.stack(np.meshgrid(*([r] * grid.d), indexing="ij")).reshape(grid.d, -1).T
    seen = {}
    for p in pts:
        n2 = int(np.sum(p**2))
        if 0 < n2 <= kmax**2 and n2 not in seen:
            seen[n2] = tuple(int(v) for v in p)
    return [seen[k] for k in sorted(seen)]


def scalar_corpus(grid: TorusGrid, n: int, seed: int = 0, kmax: int | None = None) -> list[FourierField]:
    return [random_field(grid, seed + i, kmax=kmax) for i in range(n)]


def pair_corpus(grid: TorusGrid, n: int, seed: int = 0, kmax_low: int = 3,
                kmax_high: int = 7) -> list[tuple[FourierField, FourierField]]:
    """Pairs (rough low-frequency f, smoother g) with grid-independent content."""
    out = []
    for i in range(n):
        f = random_field(grid, seed + 2 * i, kmax=kmax_low, slope=0.0)
        g = random_field(grid, seed + 2 * i + 1, kmax=kmax_high, slope=-1.5)
        out.append((f, g))
    return out

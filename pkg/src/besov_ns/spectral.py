"""Torus grid, Fourier-space fields and exact spectral multipliers.

Fields are stored as Fourier-series coefficients on the integer lattice,

    u(x) = sum_k  u_hat(k) exp(i k.x),     x in [0, 2*pi)^d,

laid out in ``numpy.fft`` order along the last ``d`` axes.  Leading axes
index components: none for a scalar, ``(d,)`` for a vector field and
``(d, d)`` for a rank-2 tensor.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

TWO_PI = 2.0 * np.pi


class GridMismatchError(ValueError):
    """Raised when two operands live on different grids."""


@dataclass(frozen=True)
class TorusGrid:
    d: int
    N: int

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.d}")
        if self.N < 8 or self.N & (self.N - 1):
            raise ValueError(f"N must be a power of two >= 8, got {self.N}")

    @property
    def L(self) -> float:
        return TWO_PI

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.d

    @property
    def cell_volume(self) -> float:
        return (TWO_PI / self.N) ** self.d

    @property
    def volume(self) -> float:
        return TWO_PI**self.d

    @cached_property
    def k(self) -> np.ndarray:
        """Integer wavenumbers, shape ``(d, N, ..., N)``.  Nyquist index holds -N/2."""
        k1 = np.fft.fftfreq(self.N, d=1.0 / self.N)
        return np.stack(np.meshgrid(*([k1] * self.d), indexing="ij"))

    @cached_property
    def kd(self) -> np.ndarray:
        """Wavenumbers for odd multipliers (derivatives); Nyquist entries zeroed."""
        kd = self.k.copy()
        kd[kd == -self.N // 2] = 0.0
        return kd

    @cached_property
    def ksq(self) -> np.ndarray:
        return np.sum(self.k**2, axis=0)

    @cached_property
    def kmag(self) -> np.ndarray:
        return np.sqrt(self.ksq)

    @cached_property
    def x(self) -> np.ndarray:
        """Physical coordinates, shape ``(d, N, ..., N)``."""
        x1 = np.arange(self.N) * (TWO_PI / self.N)
        return np.stack(np.meshgrid(*([x1] * self.d), indexing="ij"))

    @property
    def spatial_axes(self) -> tuple[int, ...]:
        return tuple(range(-self.d, 0))

    def to_dict(self) -> dict:
        return {"d": self.d, "N": self.N, "L": self.L}


def fft(values: np.ndarray, grid: TorusGrid) -> np.ndarray:
    return np.fft.fftn(values, axes=grid.spatial_axes, norm="forward")


def ifft(coeffs: np.ndarray, grid: TorusGrid) -> np.ndarray:
    return np.fft.ifftn(coeffs, axes=grid.spatial_axes, norm="forward").real


@dataclass(frozen=True, eq=False)
class FourierField:
    """A real field on the torus held by its Fourier coefficients."""

    grid: TorusGrid
    coeffs: np.ndarray
    divergence_free: bool = False

    def __post_init__(self):
        if self.coeffs.shape[self.coeffs.ndim - self.grid.d:] != self.grid.shape:
            raise ValueError(
                f"coefficient array {self.coeffs.shape} does not end in grid shape {self.grid.shape}"
            )
        if self.coeffs.dtype != np.complex128:
            object.__setattr__(self, "coeffs", self.coeffs.astype(np.complex128))

    @classmethod
    def from_physical(cls, grid: TorusGrid, values, divergence_free: bool = False) -> "FourierField":
        values = np.asarray(values, dtype=float)
        return cls(grid, fft(values, grid), divergence_free)

    @classmethod
    def zeros(cls, grid: TorusGrid, comp_shape: tuple[int, ...] = ()) -> "FourierField":
        return cls(grid, np.zeros(comp_shape + grid.shape, dtype=np.complex128))

    @property
    def comp_shape(self) -> tuple[int, ...]:
        return self.coeffs.shape[: self.coeffs.ndim - self.grid.d]

    @property
    def rank(self) -> int:
        return len(self.comp_shape)

    def physical(self) -> np.ndarray:
        return ifft(self.coeffs, self.grid)

    def with_coeffs(self, coeffs: np.ndarray, divergence_free: bool = False) -> "FourierField":
        return FourierField(self.grid, coeffs, divergence_free)

    def hermitian_defect(self) -> float:
        """Largest |u_hat(-k) - conj(u_hat(k))| over the lattice."""
        flipped = self.coeffs
        for ax in self.grid.spatial_axes:
            flipped = np.roll(np.flip(flipped, axis=ax), 1, axis=ax)
        return float(np.max(np.abs(flipped - np.conj(self.coeffs)), initial=0.0))

    def _check(self, other: "FourierField"):
        if other.grid != self.grid:
            raise GridMismatchError(f"grid {self.grid} vs {other.grid}")

    def __add__(self, other: "FourierField") -> "FourierField":
        self._check(other)
        return FourierField(self.grid, self.coeffs + other.coeffs,
                            self.divergence_free and other.divergence_free)

    def __sub__(self, other: "FourierField") -> "FourierField":
        self._check(other)
        return FourierField(self.grid, self.coeffs - other.coeffs,
                            self.divergence_free and other.divergence_free)

    def __mul__(self, c: float) -> "FourierField":
        return FourierField(self.grid, self.coeffs * c, self.divergence_free)

    __rmul__ = __mul__

    def __neg__(self) -> "FourierField":
        return self * -1.0


@dataclass(frozen=True, eq=False)
class TimeTrace:
    """Time samples ``0 = t_0 < ... < t_M = T`` of fields on one grid.

    ``coeffs`` has shape ``(M+1,) + comp_shape + grid.shape``.
    """

    grid: TorusGrid
    times: np.ndarray
    coeffs: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        object.__setattr__(self, "times", times)
        if times.ndim != 1 or len(times) == 0:
            raise ValueError("trace needs at least one sample")
        if np.any(np.diff(times) <= 0):
            raise ValueError("trace times must be strictly increasing")
        if self.coeffs.shape[0] != len(times):
            raise ValueError("one field per time sample required")
        if self.coeffs.shape[self.coeffs.ndim - self.grid.d:] != self.grid.shape:
            raise ValueError("trace coefficients do not match grid")

    @classmethod
    def from_fields(cls, times, fields: list[FourierField], meta: dict | None = None) -> "TimeTrace":
        grid = fields[0].grid
        for f in fields:
            if f.grid != grid:
                raise GridMismatchError("all fields of a trace must share one grid")
        return cls(grid, np.asarray(times, dtype=float), np.stack([f.coeffs for f in fields]), meta or {})

    @classmethod
    def constant(cls, f: FourierField, times) -> "TimeTrace":
        times = np.asarray(times, dtype=float)
        return cls(f.grid, times, np.broadcast_to(f.coeffs, (len(times),) + f.coeffs.shape).copy())

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def comp_shape(self) -> tuple[int, ...]:
        return self.coeffs.shape[1: self.coeffs.ndim - self.grid.d]

    def __len__(self) -> int:
        return len(self.times)

    def __getitem__(self, i: int) -> FourierField:
        return FourierField(self.grid, self.coeffs[i])

    @property
    def fields(self) -> list[FourierField]:
        return [self[i] for i in range(len(self))]

    def truncated(self, n: int) -> "TimeTrace":
        """First ``n`` samples."""
        return TimeTrace(self.grid, self.times[:n], self.coeffs[:n], dict(self.meta))

    def window(self, t_end: float) -> "TimeTrace":
        n = int(np.searchsorted(self.times, t_end, side="right"))
        return self.truncated(max(n, 1))

    def map(self, fn) -> "TimeTrace":
        return TimeTrace(self.grid, self.times, np.stack([fn(c) for c in self.coeffs]), dict(self.meta))

    def __sub__(self, other: "TimeTrace") -> "TimeTrace":
        if other.grid != self.grid or not np.array_equal(other.times, self.times):
            raise GridMismatchError("traces must share grid and time samples")
        return TimeTrace(self.grid, self.times, self.coeffs - other.coeffs)


# --------------------------------------------------------------------------
# products


def _pad_index(N: int, M: int) -> np.ndarray:
    h = N // 2
    return np.concatenate([np.arange(h), np.arange(M - h, M)])


def _pad(coeffs: np.ndarray, grid: TorusGrid, M: int) -> np.ndarray:
    out = np.zeros(coeffs.shape[: coeffs.ndim - grid.d] + (M,) * grid.d, dtype=np.complex128)
    idx = np.ix_(*([_pad_index(grid.N, M)] * grid.d))
    out[(Ellipsis,) + idx] = coeffs
    return out


def _truncate(coeffs: np.ndarray, grid: TorusGrid, M: int) -> np.ndarray:
    idx = np.ix_(*([_pad_index(grid.N, M)] * grid.d))
    out = coeffs[(Ellipsis,) + idx].copy()
    return zero_nyquist(out, grid)


def zero_nyquist(coeffs: np.ndarray, grid: TorusGrid) -> np.ndarray:
    nyq = np.any(grid.k == -(grid.N // 2), axis=0)
    coeffs[..., nyq] = 0.0
    return coeffs


def _to_physical(coeffs: np.ndarray, grid: TorusGrid, dealias: bool) -> np.ndarray:
    if not dealias:
        return ifft(coeffs, grid)
    M = 3 * grid.N // 2
    return np.fft.ifftn(_pad(coeffs, grid, M), axes=grid.spatial_axes, norm="forward").real


def _to_coeffs(values: np.ndarray, grid: TorusGrid, dealias: bool) -> np.ndarray:
    if not dealias:
        return fft(values, grid)
    M = 3 * grid.N // 2
    return _truncate(np.fft.fftn(values, axes=grid.spatial_axes, norm="forward"), grid, M)


def product_coeffs(a: np.ndarray, b: np.ndarray, grid: TorusGrid, dealias: bool = True,
                   outer: bool = False) -> np.ndarray:
    """Coefficients of the pointwise product of two coefficient arrays.

    With ``outer=True`` and vector inputs ``a`` (.., d, *grid) and ``b`` the
    result is the tensor ``a_k b_i`` with shape (.., d, d, *grid).  Otherwise
    the arrays are multiplied with numpy broadcasting.  ``dealias`` selects
    the 3/2 zero-padding rule; without it the product is taken on the N grid.
    """
    pa = _to_physical(a, grid, dealias)
    pb = _to_physical(b, grid, dealias)
    if outer:
        nd = grid.d
        pa = pa[(Ellipsis, slice(None), None) + (slice(None),) * nd]
        pb = pb[(Ellipsis, None, slice(None)) + (slice(None),) * nd]
    return _to_coeffs(pa * pb, grid, dealias)


def gradient_tensor(u: FourierField, v: FourierField, dealias: bool = True) -> FourierField:
    """The tensor ``(u (x) v)_{ki} = u_k v_i`` in coefficient space."""
    u._check(v)
    if u.rank != 1 or v.rank != 1:
        raise ValueError("gradient_tensor takes two vector fields")
    return FourierField(u.grid, product_coeffs(u.coeffs, v.coeffs, u.grid, dealias, outer=True))


def divergence_of_tensor_coeffs(M: np.ndarray, grid: TorusGrid) -> np.ndarray:
    # component i = sum_k (i k_k) M_{ki}; the tensor axes sit right before the grid axes
    kd = grid.kd
    axis_k = -grid.d - 2
    return np.sum(1j * kd[:, None] * M, axis=axis_k)


def divergence_of_tensor(M: FourierField) -> FourierField:
    if M.rank != 2:
        raise ValueError("divergence_of_tensor takes a rank-2 field")
    return FourierField(M.grid, divergence_of_tensor_coeffs(M.coeffs, M.grid))


def divergence(u: FourierField) -> FourierField:
    return FourierField(u.grid, np.sum(1j * u.grid.kd * u.coeffs, axis=-u.grid.d - 1))


def gradient(g: FourierField) -> FourierField:
    if g.rank != 0:
        raise ValueError("gradient takes a scalar field")
    return FourierField(g.grid, 1j * g.grid.kd * g.coeffs)


def leray_coeffs(f: np.ndarray, grid: TorusGrid) -> np.ndarray:
    kd = grid.kd
    ksq = np.sum(kd**2, axis=0)
    inv = np.divide(1.0, ksq, out=np.zeros_like(ksq), where=ksq > 0)
    kdotf = np.sum(kd * f, axis=-grid.d - 1, keepdims=True)
    return f - kd * kdotf * inv


def leray_project(f: FourierField) -> FourierField:
    """Project a vector field onto divergence-free fields; the mean mode is kept."""
    if f.rank != 1:
        raise ValueError("leray_project takes a vector field")
    return FourierField(f.grid, leray_coeffs(f.coeffs, f.grid), divergence_free=True)


def heat_multiplier(grid: TorusGrid, t: float) -> np.ndarray:
    if t < 0:
        raise ValueError(f"heat semigroup needs t >= 0, got {t}")
    return np.exp(-grid.ksq * t)


def heat_semigroup(f: FourierField, t: float) -> FourierField:
    return FourierField(f.grid, f.coeffs * heat_multiplier(f.grid, t), f.divergence_free)


def advection_forcing(u: np.ndarray, v: np.ndarray, grid: TorusGrid, dealias: bool = True) -> np.ndarray:
    """Coefficients of ``-P div(u (x) v)``, the integrand of the Oseen operator."""
    M = product_coeffs(u, v, grid, dealias, outer=True)
    return -leray_coeffs(divergence_of_tensor_coeffs(M, grid), grid)


def divergence_defect(f: FourierField) -> float:
    """max_k |k . f_hat(k)| relative to max_k |k| ||f_hat(k)||."""
    kd = f.grid.kd
    num = np.abs(np.sum(kd * f.coeffs, axis=0))
    scale = np.sqrt(np.sum(np.abs(f.coeffs) ** 2, axis=0) * np.sum(kd**2, axis=0)).max(initial=0.0)
    return float(num.max(initial=0.0) / scale) if scale > 0 else 0.0


def l2_norm_coeffs(coeffs: np.ndarray, grid: TorusGrid, axes=None) -> np.ndarray:
    """Parseval L2 norm; reduces all axes after ``axes`` leading ones."""
    lead = 0 if axes is None else axes
    red = tuple(range(lead, coeffs.ndim))
    return np.sqrt(grid.volume * np.sum(np.abs(coeffs) ** 2, axis=red))

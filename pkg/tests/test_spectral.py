import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from besov_ns.corpus import random_field
from besov_ns.solver import taylor_green
from besov_ns.spectral import (
    FourierField,
    GridMismatchError,
    TimeTrace,
    TorusGrid,
    advection_forcing,
    divergence,
    divergence_defect,
    divergence_of_tensor,
    gradient,
    gradient_tensor,
    heat_semigroup,
    leray_project,
    product_coeffs,
)


def vec(grid, seed):
    return random_field(grid, seed, kmax=5, vector=True)


class TestGrid:
    def test_valid_sizes(self):
        g = TorusGrid(3, 8)
        assert g.shape == (8, 8, 8)
        assert g.L == pytest.approx(2 * math.pi)

    @pytest.mark.parametrize("d,N", [(1, 16), (4, 16), (2, 12), (2, 4)])
    def test_rejects_bad_grid(self, d, N):
        with pytest.raises(ValueError):
            TorusGrid(d, N)

    def test_nyquist_zeroed_in_derivative_wavenumbers(self, grid32):
        assert np.all(grid32.kd[0][16] == 0)
        assert grid32.k[0][16, 0] == -16


class TestFourierField:
    def test_roundtrip_is_real(self, grid32):
        f = random_field(grid32, 3)
        assert f.hermitian_defect() < 1e-15
        back = FourierField.from_physical(grid32, f.physical())
        assert np.max(np.abs(back.coeffs - f.coeffs)) < 1e-15

    def test_grid_mismatch(self, grid32):
        with pytest.raises(GridMismatchError):
            random_field(grid32, 0) + random_field(TorusGrid(2, 16), 0)

    def test_trace_requires_increasing_times(self, grid32):
        f = random_field(grid32, 0)
        with pytest.raises(ValueError):
            TimeTrace.from_fields([0.0, 0.0], [f, f])


class TestProducts:
    def test_zero_and_constant(self, grid32):
        z = FourierField.zeros(grid32, (2,))
        assert np.all(gradient_tensor(z, z).coeffs == 0)
        c = FourierField.from_physical(grid32, np.stack([np.full(grid32.shape, 2.0), np.full(grid32.shape, -3.0)]))
        T = gradient_tensor(c, c).physical()
        assert np.allclose(T[0, 1], -6.0) and np.allclose(T[1, 1], 9.0)

    def test_sin_cos_entry(self, grid32):
        x, _ = grid32.x
        u = FourierField.from_physical(grid32, np.stack([np.sin(x), 0 * x]))
        v = FourierField.from_physical(grid32, np.stack([0 * x, np.cos(x)]))
        T = gradient_tensor(u, v).physical()
        assert np.max(np.abs(T[0, 1] - 0.5 * np.sin(2 * x))) < 1e-14

    def test_dealiased_product_matches_full_for_low_modes(self, grid32):
        a, b = random_field(grid32, 1, kmax=5), random_field(grid32, 2, kmax=5)
        full = product_coeffs(a.coeffs, b.coeffs, grid32, dealias=False)
        padded = product_coeffs(a.coeffs, b.coeffs, grid32, dealias=True)
        assert np.max(np.abs(full - padded)) < 1e-15


class TestDifferentialOperators:
    def test_divergence_of_tensor_sin(self, grid32):
        x, _ = grid32.x
        M = np.zeros((2, 2) + grid32.shape)
        M[0, 0] = np.sin(x)
        out = divergence_of_tensor(FourierField.from_physical(grid32, M)).physical()
        assert np.max(np.abs(out[0] - np.cos(x))) < 1e-13
        assert np.max(np.abs(out[1])) < 1e-14

    def test_constant_tensor_divergence_zero(self, grid32):
        M = FourierField.from_physical(grid32, np.ones((2, 2) + grid32.shape))
        assert np.max(np.abs(divergence_of_tensor(M).coeffs)) == 0


class TestLeray:
    def test_single_mode_example(self):
        g = TorusGrid(2, 8)
        c = np.zeros((2,) + g.shape, dtype=complex)
        c[:, 1, 0] = [1, 1]
        c[:, -1, 0] = [1, 1]
        p = leray_project(FourierField(g, c)).coeffs
        assert np.allclose(p[:, 1, 0], [0, 1], atol=1e-15)

    def test_gradients_annihilated(self, grid32):
        gr = gradient(random_field(grid32, 4))
        assert np.max(np.abs(leray_project(gr).coeffs)) < 1e-13

    def test_idempotent_and_fixes_range(self, grid32):
        f = vec(grid32, 5) + gradient(random_field(grid32, 6))
        p = leray_project(f)
        assert np.max(np.abs(leray_project(p).coeffs - p.coeffs)) < 1e-13
        assert divergence_defect(p) < 1e-14

    def test_mean_mode_unchanged(self, grid32):
        c = np.zeros((2,) + grid32.shape, dtype=complex)
        c[:, 0, 0] = [0.3, -0.2]
        assert np.allclose(leray_project(FourierField(grid32, c)).coeffs[:, 0, 0], [0.3, -0.2])

    def test_taylor_green_nonlinearity_is_gradient(self, grid64):
        u = taylor_green(grid64)
        f = advection_forcing(u.coeffs, u.coeffs, grid64, dealias=False)
        assert np.max(np.abs(f)) < 1e-12

    @given(st.integers(0, 10_000), st.floats(-3, 3), st.floats(-3, 3))
    def test_linearity(self, seed, a, b):
        g = TorusGrid(2, 16)
        f, h = random_field(g, seed, kmax=6, vector=True), random_field(g, seed + 1, kmax=6, vector=True)
        lhs = leray_project(f * a + h * b).coeffs
        rhs = (leray_project(f) * a + leray_project(h) * b).coeffs
        assert np.max(np.abs(lhs - rhs)) < 1e-13


class TestHeat:
    def test_identity_at_zero(self, grid32):
        f = random_field(grid32, 1)
        assert np.array_equal(heat_semigroup(f, 0.0).coeffs, f.coeffs)

    def test_single_mode_decay(self):
        g = TorusGrid(2, 16)
        f = FourierField.from_physical(g, np.cos(2 * g.x[0]))
        out = heat_semigroup(f, 0.5)
        assert abs(out.coeffs[2, 0] - 0.5 * math.exp(-2)) < 1e-16

    def test_semigroup_law(self, grid32):
        f = random_field(grid32, 2)
        a = heat_semigroup(heat_semigroup(f, 0.013), 0.2)
        b = heat_semigroup(f, 0.213)
        assert np.max(np.abs(a.coeffs - b.coeffs)) < 1e-14

    def test_negative_time_rejected(self, grid32):
        with pytest.raises(ValueError):
            heat_semigroup(random_field(grid32, 0), -1.0)

    @given(st.integers(0, 10_000), st.floats(0, 5))
    def test_l2_contraction(self, seed, t):
        g = TorusGrid(2, 16)
        f = random_field(g, seed)
        assert np.linalg.norm(heat_semigroup(f, t).coeffs) <= np.linalg.norm(f.coeffs) * (1 + 1e-15)


def test_divergence_of_gradient_is_laplacian(grid32):
    s = random_field(grid32, 8)
    lap = divergence(gradient(s)).coeffs
    expected = -np.where(grid32.kd[0] ** 2 + grid32.kd[1] ** 2 > 0, grid32.kd[0] ** 2 + grid32.kd[1] ** 2, 0) * s.coeffs
    assert np.max(np.abs(lap - expected)) < 1e-13

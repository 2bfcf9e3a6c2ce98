import logging
import math

import numpy as np
import pytest

import oracles
from besov_ns.constants import load_constants, measure_bilinear
from besov_ns.littlewood_paley import DyadicFamily
from besov_ns.norms import INF, besov_norm, weighted_sup_norm
from besov_ns.solver import (
    BlowupSuspected,
    OseenQuadrature,
    SolverConfig,
    bilinear_B,
    make_initial_field,
    make_time_grid,
    oseen_apply,
    picard_solve,
    random_besov,
    restart_check,
    taylor_green,
)
from besov_ns.spectral import FourierField, TimeTrace, TorusGrid, divergence_defect, l2_norm_coeffs


def tensor_trace(grid, times, k, M):
    c = np.zeros((2, 2) + grid.shape, dtype=complex)
    c[(slice(None), slice(None)) + tuple(k)] = M
    c[(slice(None), slice(None)) + tuple(-np.asarray(k))] = np.conj(M)
    return TimeTrace.constant(FourierField(grid, c), times)


def weighted_pair(grid, T, r):
    """t**(-r/2) g, t**(-r/2) h with crossed modes, scaled so |K|^2 T = 16."""
    x, y = grid.x
    if T == 0.5:
        s = 1 / math.sqrt(2)
        a = np.stack([s * np.cos(4 * x + 4 * y), -s * np.cos(4 * x + 4 * y)])
        b = np.stack([s * np.cos(4 * x - 4 * y), s * np.cos(4 * x - 4 * y)])
    else:
        K = round(4 / math.sqrt(T))
        a, b = np.stack([0 * x, np.cos(K * x)]), np.stack([np.cos(K * y), 0 * x])
    times = make_time_grid(T, T / 64)
    w = np.where(times > 0, times, 1.0) ** (-r / 2)
    w[0] = 0.0
    mk = lambda v: TimeTrace(grid, times, FourierField.from_physical(grid, v).coeffs[None] * w[:, None, None, None])  # noqa: E731
    return mk(a), mk(b)


class TestTimeGrid:
    def test_layout(self):
        t = make_time_grid(1.0, 0.1)
        assert t[0] == 0 and t[-1] == 1.0
        assert np.all(np.diff(t) > 0)
        assert t[1] == pytest.approx(0.1 * 2**-8)
        assert np.allclose(np.diff(t[17:]), 0.1)

    def test_config_roundtrip(self, grid32):
        cfg = SolverConfig(grid=grid32, T=0.3, dt=0.01, order=1)
        assert SolverConfig.from_dict(cfg.to_dict()) == cfg

    @pytest.mark.parametrize("kw", [{"dt": 0}, {"T": -1}, {"n_picard": 0}])
    def test_config_validation(self, grid32, kw):
        with pytest.raises(ValueError):
            SolverConfig(grid=grid32, **kw)

    def test_quadrature_validation(self):
        with pytest.raises(ValueError):
            OseenQuadrature(order=3)


class TestOseen:
    def test_zero(self, grid32):
        F = tensor_trace(grid32, np.linspace(0, 1, 5), (1, 0), np.zeros((2, 2)))
        assert np.max(np.abs(oseen_apply(F, 1.0).coeffs)) == 0

    @pytest.mark.parametrize("order", [1, 2])
    def test_constant_tensor_closed_form(self, grid32, order):
        k = np.array([2, 1])
        M = np.array([[0.3, 1j], [0.2 - 0.1j, -0.4]])
        F = tensor_trace(grid32, np.linspace(0, 0.7, 8), k, M)
        for t in (0.7, 0.35):
            got = oseen_apply(F, t, OseenQuadrature(order)).coeffs[(slice(None),) + tuple(k)]
            assert np.max(np.abs(got - oracles.oseen_constant_tensor(k, M, t))) < 1e-14

    def test_outside_span(self, grid32):
        F = tensor_trace(grid32, np.linspace(0, 1, 5), (1, 0), np.eye(2))
        with pytest.raises(ValueError):
            oseen_apply(F, 1.5)

    def test_convergence_orders(self, grid32):
        from besov_ns.solver import duhamel

        k, lam = (3, 0), 9.0
        w = 4.0

        def run(dt, order):
            times = np.arange(0, 1 + 1e-12, dt)
            g = np.zeros((len(times), 2) + grid32.shape, dtype=complex)
            g[:, 1, 3, 0] = np.cos(w * times)
            return duhamel(g, times, grid32, OseenQuadrature(order))[-1][1, 3, 0]

        exact = (lam * math.cos(w) + w * math.sin(w) - lam * math.exp(-lam)) / (lam**2 + w**2)
        for order, target in ((1, 1.0), (2, 2.0)):
            dts = [0.1, 0.05, 0.025, 0.0125]
            errs = [abs(run(dt, order) - exact) for dt in dts]
            slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
            assert abs(slope - target) <= 0.3


class TestBilinear:
    def test_zero(self, grid32):
        times = make_time_grid(0.2, 0.02)
        u = TimeTrace.constant(random_besov(grid32, -0.5, 1), times)
        z = TimeTrace(grid32, times, np.zeros_like(u.coeffs))
        assert np.max(np.abs(bilinear_B(u, z).coeffs)) == 0

    def test_taylor_green_vanishes(self, grid32):
        times = make_time_grid(0.5, 0.05)
        u = TimeTrace(grid32, times, np.stack([taylor_green(grid32).coeffs * math.exp(-2 * t) for t in times]))
        assert np.max(np.abs(bilinear_B(u, u).coeffs)) < 1e-10

    def test_divergence_free_output(self, grid32):
        times = make_time_grid(0.2, 0.02)
        u = TimeTrace.constant(random_besov(grid32, -0.5, 1), times)
        v = TimeTrace.constant(random_besov(grid32, -0.5, 2), times)
        B = bilinear_B(u, v)
        assert max(divergence_defect(B[i]) for i in range(1, len(B))) < 1e-12

    def test_l1_lr_constant_frozen(self):
        frozen = load_constants()
        assert frozen.upper_ok("bilinear_l1_lr", measure_bilinear(32, range(40, 44)).max())

    def test_lr_lr_constant_scales_with_T(self, grid64):
        r = 0.5
        Ts = (1.0, 0.5, 0.25)
        ratios = []
        for T in Ts:
            u, v = weighted_pair(grid64, T, r)
            ratios.append(weighted_sup_norm(bilinear_B(u, v), r) / (weighted_sup_norm(u, r) * weighted_sup_norm(v, r)))
        slope = np.polyfit(np.log(Ts), np.log(ratios), 1)[0]
        assert abs(slope - (1 - r) / 2) <= 0.2


class TestPicard:
    def test_zero_data(self, grid32):
        u, diag = picard_solve(FourierField.zeros(grid32, (2,)), SolverConfig(grid=grid32, T=0.2, dt=0.02))
        assert np.max(np.abs(u.coeffs)) == 0 and diag.converged

    def test_taylor_green_short(self, grid32):
        cfg = SolverConfig(grid=grid32, T=0.2, dt=1e-3)
        u, diag = picard_solve(taylor_green(grid32), cfg)
        exact = np.stack([oracles.taylor_green_2d(32, t) for t in u.times])
        err = np.max(np.abs(np.stack([u[i].physical() for i in range(len(u))]) - exact))
        assert err < 1e-12 and diag.fixed_point_residual < 1e-12

    def test_small_data_contraction(self, grid32):
        u0 = random_besov(grid32, -0.5, 3, amplitude=1.0, kmax=6)
        _, diag = picard_solve(u0, SolverConfig(grid=grid32, T=0.5, dt=0.02, n_picard=10, tol_fixpoint=0))
        assert all(r < 0.9 for r in diag.ratios[1:8])
        assert not any(diag.non_contraction[:8])

    def test_residual_decreases_with_iterations(self, grid32):
        u0 = random_besov(grid32, -0.5, 4, amplitude=1.0, kmax=6)
        res = []
        for n in (1, 2, 4, 8):
            _, d = picard_solve(u0, SolverConfig(grid=grid32, T=0.5, dt=0.02, n_picard=n, tol_fixpoint=0))
            res.append(d.fixed_point_residual)
        assert all(a > b for a, b in zip(res, res[1:]))

    def test_divergence_free_and_energy(self, grid32):
        u0 = random_besov(grid32, -0.5, 5, amplitude=1.0, kmax=8)
        u, diag = picard_solve(u0, SolverConfig(grid=grid32, T=0.5, dt=0.01))
        assert max(divergence_defect(u[i]) for i in range(len(u))) <= 1e-11
        e = l2_norm_coeffs(u.coeffs, grid32, axes=1)
        assert np.all(np.diff(e) <= 1e-6 * e[0])

    def test_projects_non_solenoidal_data(self, grid32, caplog):
        x, _ = grid32.x
        u0 = FourierField.from_physical(grid32, np.stack([np.sin(x), 0 * x]))
        with caplog.at_level(logging.WARNING):
            u, _ = picard_solve(u0, SolverConfig(grid=grid32, T=0.1, dt=0.02))
        assert "projecting" in caplog.text
        assert np.max(np.abs(u.coeffs)) < 1e-15

    def test_blowup_signal(self):
        g = TorusGrid(2, 16)
        u0 = random_besov(g, -0.5, 1, amplitude=200.0, kmax=4)
        with pytest.raises(BlowupSuspected) as info:
            picard_solve(u0, SolverConfig(grid=g, T=0.5, dt=0.05, n_picard=30))
        exc = info.value
        assert exc.trace is not None and exc.trace.T == pytest.approx(exc.last_valid_time)

    def test_grid_refinement_taylor_green(self):
        a = picard_solve(taylor_green(TorusGrid(2, 32)), SolverConfig(grid=TorusGrid(2, 32), T=0.3, dt=0.01))[0]
        b = picard_solve(taylor_green(TorusGrid(2, 64)), SolverConfig(grid=TorusGrid(2, 64), T=0.3, dt=0.01))[0]
        sub = np.stack([b[i].physical()[:, ::2, ::2] for i in range(len(b))])
        full = np.stack([a[i].physical() for i in range(len(a))])
        assert np.max(np.abs(sub - full)) < 1e-8


class TestRestart:
    def test_t0_zero_matches_fixed_point_residual(self, grid32):
        u0 = random_besov(grid32, -0.5, 6, amplitude=1.0, kmax=6)
        u, diag = picard_solve(u0, SolverConfig(grid=grid32, T=0.3, dt=0.02, n_picard=3, tol_fixpoint=0))
        assert restart_check(u, 0.0)["residual"] == pytest.approx(diag.fixed_point_residual, rel=1e-12)

    def test_taylor_green_any_t0(self, grid32):
        u, _ = picard_solve(taylor_green(grid32), SolverConfig(grid=grid32, T=0.3, dt=0.01))
        for t0 in u.times[[0, 5, 20, -5]]:
            assert restart_check(u, float(t0))["residual"] <= 1e-8

    def test_order_two_no_worse(self, grid32):
        u0 = random_besov(grid32, -0.5, 7, amplitude=2.0, kmax=6)
        res = {}
        for order in (1, 2):
            u, _ = picard_solve(u0, SolverConfig(grid=grid32, T=0.3, dt=0.02, order=order))
            ref = OseenQuadrature(2, substeps=8)
            res[order] = restart_check(u, float(u.times[10]), ref)["residual"]
        assert res[2] <= res[1]

    def test_t0_must_be_sample(self, grid32):
        u, _ = picard_solve(taylor_green(grid32), SolverConfig(grid=grid32, T=0.1, dt=0.02))
        with pytest.raises(ValueError):
            restart_check(u, 0.0123)


class TestInitialData:
    def test_taylor_green_2d(self, grid32):
        u = make_initial_field("taylor-green", grid32)
        x, y = grid32.x
        assert np.max(np.abs(u.physical() - np.stack([np.cos(x) * np.sin(y), -np.sin(x) * np.cos(y)]))) < 1e-15
        assert divergence_defect(u) < 1e-15

    def test_taylor_green_3d(self):
        g = TorusGrid(3, 16)
        assert divergence_defect(make_initial_field("taylor-green", g)) < 1e-15

    def test_single_mode(self, grid32):
        u = make_initial_field("single-mode", grid32, k=(1, 0))
        assert divergence_defect(u) < 1e-15 and np.max(np.abs(u.coeffs)) > 0

    @pytest.mark.parametrize("seed", range(5))
    def test_random_besov_normalized(self, fam32, seed):
        u = make_initial_field("random-besov", fam32.grid, s=-0.5, seed=seed)
        assert besov_norm(u, (-0.5, INF), fam32) == pytest.approx(1.0, rel=0.05)
        assert divergence_defect(u) < 1e-13

    def test_unknown(self, grid32):
        with pytest.raises(ValueError):
            make_initial_field("vortex-sheet", grid32)

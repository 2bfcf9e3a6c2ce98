"""Acceptance suite: one test per criterion, summary printed at session end."""
import json
import math
import time

import numpy as np
import pytest

import oracles
from besov_ns import cli
from besov_ns.constants import (
    CALIBRATION_SEED,
    HEAT_CHAR_S,
    load_constants,
    measure_bernstein,
    measure_heat_characterization,
    measure_paraproduct_law,
    measure_ratio_sweep,
)
from besov_ns.corpus import pair_corpus, random_field
from besov_ns.criteria import (
    blowup_tracker,
    blowup_tracker_series,
    bootstrap_check,
    regularity_monitor,
    theta_hypothesis,
    uniqueness_experiment,
)
from besov_ns.io import strip_provenance
from besov_ns.littlewood_paley import DyadicFamily, blocks
from besov_ns.norms import gmo_exponent
from besov_ns.paraproduct import ParaproductLawSpec, estimate_law_constant, pi1, pi2, product
from besov_ns.solver import (
    OseenQuadrature,
    SolverConfig,
    make_time_grid,
    oseen_apply,
    picard_solve,
    random_besov,
    taylor_green,
)
from besov_ns.spectral import (
    FourierField,
    TimeTrace,
    TorusGrid,
    advection_forcing,
    gradient,
    heat_semigroup,
    l2_norm_coeffs,
    leray_project,
)

acceptance = pytest.mark.acceptance


@pytest.fixture(scope="module")
def frozen():
    return load_constants()


@acceptance(1, "Littlewood-Paley reconstruction, 100 fields, N=64, d=2, error <= 1e-13, < 10 s")
def test_c01_reconstruction():
    start = time.perf_counter()
    grid = TorusGrid(2, 64)
    fam = DyadicFamily(grid)
    err = 0.0
    for seed in range(100):
        f = random_field(grid, seed)
        err = max(err, float(np.max(np.abs(sum(b.coeffs for b in blocks(f, fam)) - f.coeffs))))
    elapsed = time.perf_counter() - start
    assert err <= 1e-13
    assert elapsed < 10.0


@acceptance(2, "paraproduct identity fg = Pi1(f,g) + Pi2(g,f), 100 pairs, relative 1e-12")
def test_c02_paraproduct_identity():
    grid = TorusGrid(2, 64)
    fam = DyadicFamily(grid)
    worst = 0.0
    for seed in range(100):
        f, g = random_field(grid, 2 * seed), random_field(grid, 2 * seed + 1)
        fg = product(f, g).coeffs
        rec = pi1(f, g, fam).coeffs + pi2(g, f, fam).coeffs
        worst = max(worst, float(np.max(np.abs(rec - fg)) / np.max(np.abs(fg))))
    assert worst <= 1e-12


@acceptance(3, "heat semigroup per-mode decay and composition law to 1e-14")
def test_c03_heat():
    grid = TorusGrid(2, 32)
    f = random_field(grid, 1)
    for t in (0.0, 1e-3, 0.1, 0.7):
        out = heat_semigroup(f, t).coeffs
        for idx in oracles.lattice(32, 2):
            pos = tuple(i for i, _ in idx)
            k2 = sum(k * k for _, k in idx)
            assert abs(out[pos] - math.exp(-k2 * t) * f.coeffs[pos]) <= 1e-14 * max(abs(f.coeffs[pos]), 1e-300)
    for t, s in ((0.01, 0.02), (0.3, 0.05), (1e-4, 0.9)):
        a = heat_semigroup(heat_semigroup(f, t), s).coeffs
        b = heat_semigroup(f, t + s).coeffs
        assert np.max(np.abs(a - b)) <= 1e-14


@acceptance(4, "Leray projector idempotent, kills gradients (1e-13), Taylor-Green nonlinearity <= 1e-10")
def test_c04_leray():
    grid = TorusGrid(2, 64)
    for seed in range(10):
        f = random_field(grid, seed, vector=True) + gradient(random_field(grid, seed + 100))
        p = leray_project(f)
        assert np.max(np.abs(leray_project(p).coeffs - p.coeffs)) <= 1e-13
        assert np.max(np.abs(leray_project(gradient(random_field(grid, seed + 200))).coeffs)) <= 1e-13
    u = taylor_green(grid)
    for dealias in (False, True):
        assert np.max(np.abs(advection_forcing(u.coeffs, u.coeffs, grid, dealias))) <= 1e-10


@acceptance(5, "heat characterization / Besov ratio inside frozen band, 100 fields x 3 s x N in {32, 64}")
def test_c05_heat_characterization(frozen):
    for s in HEAT_CHAR_S:
        for N in (32, 64):
            r = measure_heat_characterization(N, s, range(100))
            assert frozen.in_range(f"heat_characterization_s{s}", r.min(), r.max()), (s, N, r.min(), r.max())


@acceptance(6, "Bernstein and paraproduct-law constants stable (20%) over N; Chemin-Lerner constants T-independent")
def test_c06_constant_stability(frozen):
    for N in (32, 64, 128):
        assert frozen.stable("bernstein_d2", measure_bernstein(N))
        law = measure_paraproduct_law(N, 40, CALIBRATION_SEED)
        assert frozen.stable("paraproduct_pi1", law.pi1), (N, law.pi1)
        assert frozen.stable("paraproduct_pi2", law.pi2), (N, law.pi2)
    fam = DyadicFamily(TorusGrid(2, 32))
    spec = ParaproductLawSpec(0.5, 1.0, p1=4.0, p2=4.0)
    pairs = pair_corpus(fam.grid, 5, 3)
    vals = []
    for T in (0.5, 1.0):
        times = np.linspace(0, T, 21)
        corpus = [(TimeTrace.constant(f, times), TimeTrace.constant(g, times)) for f, g in pairs]
        vals.append(estimate_law_constant(spec, corpus, fam, "chemin-lerner"))
    assert vals[0].pi1 == pytest.approx(vals[1].pi1, rel=1e-10)
    assert vals[0].pi2 == pytest.approx(vals[1].pi2, rel=1e-10)


@acceptance(7, "Taylor-Green N=64, dt=1e-3, order 2: sup-t relative L2 error <= 1e-6, < 60 s")
def test_c07_taylor_green():
    grid = TorusGrid(2, 64)
    start = time.perf_counter()
    u0 = taylor_green(grid)
    u, _ = picard_solve(u0, SolverConfig(grid=grid, T=1.0, dt=1e-3, order=2), compute_residual=False)
    elapsed = time.perf_counter() - start
    exact = np.exp(-2 * u.times)[:, None, None, None] * u0.coeffs[None]
    rel = l2_norm_coeffs(u.coeffs - exact, grid, axes=1) / l2_norm_coeffs(exact, grid, axes=1)
    assert rel.max() <= 1e-6
    assert elapsed < 60.0


@acceptance(8, "Oseen quadrature convergence slopes 1.0 +- 0.3 (order 1) and 2.0 +- 0.3 (order 2)")
def test_c08_quadrature_orders():
    grid = TorusGrid(2, 16)
    k, lam, w, T = (2, 1), 5.0, 3.0, 1.0

    def solve(dt, order):
        times = np.arange(0, T + 1e-12, dt)
        c = np.zeros((len(times), 2) + grid.shape, dtype=complex)
        amp = np.array([1.0, -2.0]) * np.sin(w * times)[:, None]
        c[(slice(None), slice(None)) + k] = amp
        c[(slice(None), slice(None), -k[0], -k[1])] = amp
        F = TimeTrace(grid, times, c)
        return oseen_apply(F, T, OseenQuadrature(order), forcing=True).coeffs[(0,) + k]

    exact = (lam * math.sin(w * T) - w * math.cos(w * T) + w * math.exp(-lam * T)) / (lam**2 + w**2)
    dts = np.array([0.1, 0.05, 0.025, 0.0125])
    for order, target in ((1, 1.0), (2, 2.0)):
        errs = [abs(solve(dt, order) - exact) for dt in dts]
        slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
        assert abs(slope - target) <= 0.3, (order, slope)


@acceptance(9, "uniqueness: Z-difference drops >= 10x per refinement, contraction factor < 1")
def test_c09_uniqueness():
    grid = TorusGrid(2, 32)
    cfg = SolverConfig(grid=grid, T=0.5, dt=0.02)
    data = [taylor_green(grid)] + [random_besov(grid, -0.5, seed, amplitude=2.0, kmax=6) for seed in (1, 2, 3)]
    for u0 in data:
        rep = uniqueness_experiment(u0, cfg, 0.5, (0.2, 0.1, 0.05), levels=3, n0=2)
        assert rep.verdict("refinement_decay"), rep.scalars["decay_ratios"]
        assert rep.verdict("contraction"), rep.scalars["contraction_factor"]


@acceptance(10, "regularity monitor true on small-data runs passing the Theta check, false on t^-1/2 profile")
def test_c10_regularity():
    checked = 0
    for N, seed in ((32, 0), (32, 1), (32, 2), (64, 3)):
        grid = TorusGrid(2, N)
        fam = DyadicFamily(grid)
        u0 = random_besov(grid, -0.5, seed, amplitude=1.0, kmax=min(10, N // 4))
        u, _ = picard_solve(u0, SolverConfig(grid=grid, T=0.5, dt=0.01), compute_residual=False)
        ok, _ = theta_hypothesis(u, 0.5, (0.2, 0.1, 0.05), fam)
        if ok:
            checked += 1
            assert regularity_monitor(u).verdict("decays_to_zero")
    assert checked >= 3
    grid = TorusGrid(2, 32)
    times = make_time_grid(0.5, 0.01)
    g = random_field(grid, 9, kmax=6, vector=True)
    w = np.where(times > 0, times, 1.0) ** -0.5
    frozen_trace = TimeTrace(grid, times, g.coeffs[None] * w[:, None, None, None])
    assert not regularity_monitor(frozen_trace).verdict("decays_to_zero")


@acceptance(11, "blow-up tracker: no false positives on 10 smooth runs, liminf within 1% on synthetic profiles")
def test_c11_blowup(frozen):
    grid = TorusGrid(2, 32)
    fam = DyadicFamily(grid)
    eps = frozen.epsilon_guess()
    for seed in range(10):
        u0 = random_besov(grid, -0.5, 50 + seed, amplitude=1.0 + 0.2 * seed, kmax=8)
        u, _ = picard_solve(u0, SolverConfig(grid=grid, T=0.5, dt=0.01), compute_residual=False)
        assert blowup_tracker(u, 0.5, fam, eps).verdict("no_blowup")
    for r in (0.3, 0.6, 0.9):
        A, T = 0.8, 1.0
        times = np.append(T - np.geomspace(0.9, 1e-8, 200), T)
        norms = np.append(A * (T - times[:-1]) ** (-(1 - r) / 2), np.inf)
        rep = blowup_tracker_series(times, norms, r, eps)
        assert rep.scalars["liminf_last_decade"] == pytest.approx(A, rel=0.01)


@acceptance(12, "bootstrap checker: true on the quadratic-root family, gate rejects 4AB >= 1 (1000 instances)")
def test_c12_bootstrap():
    rng = np.random.default_rng(2024)
    n_true = n_gate = 0
    for _ in range(1000):
        A = rng.uniform(0.01, 2.0)
        if rng.uniform() < 0.5:
            B = rng.uniform(0.0, 0.999) / (4 * A)
            B = max(B, 1e-6)
            x = oracles.quadratic_root(A, B)
            gap = math.sqrt(1 - 4 * A * B) / B
            n = max(32, int(math.ceil(4 * (x - A) / gap)) + 2)
            u = np.linspace(0.0, 1.0, n)
            m = int(rng.integers(1, 6))
            shape = rng.uniform(0.5, 1.0) * (u + 0.3 * np.sin(2 * np.pi * m * u) / (2 * np.pi * m))
            res = bootstrap_check(A + (x - A) * shape, A, B)
            assert res.hypotheses_met and res.verdict is True
            n_true += 1
        else:
            B = rng.uniform(1.0, 5.0) / (4 * A)
            res = bootstrap_check(A * (1 + rng.uniform(size=50)), A, B)
            assert not res.hypotheses_met and res.verdict is None
            n_gate += 1
    assert n_true > 400 and n_gate > 400


@acceptance(13, "GMO exponent (1/2, 1, 2) -> q = 4; corpus ratios below the frozen constant")
def test_c13_gmo(frozen):
    assert gmo_exponent(0.5, 1.0, 2.0) == 4.0
    ratios = measure_ratio_sweep("gmo", 64, range(200))
    assert frozen.upper_ok("gmo", ratios.max())


@acceptance(14, "determinism: reruns byte-identical modulo provenance")
def test_c14_determinism(tmp_path):
    runs = [
        ["solve", "--initial", "random-besov", "--seed", "5", "--N", "32", "--T", "0.3"],
        ["criteria", "--experiment", "uniqueness", "--initial", "random-besov", "--seed", "3", "--set", "criteria.levels=2",
         "--set", "criteria.delta_list=[0.1]", "--T", "0.3", "--dt", "0.02"],
        ["paraproduct", "--seed", "4", "--N", "32", "--set", "paraproduct.pairs=5"],
    ]
    for i, args in enumerate(runs):
        outs = []
        for rerun in range(2):
            out = tmp_path / f"{i}_{rerun}"
            code = cli.run(args + ["--out", str(out)])
            assert code == 0
            outs.append(out)
        a, b = outs
        for fa in sorted(p for p in a.rglob("*") if p.is_file()):
            fb = b / fa.relative_to(a)
            if fa.suffix == ".json" and fa.name != "manifest.json":
                assert strip_provenance(fa.read_text()) == strip_provenance(fb.read_text())
                ja = json.loads(fa.read_text()).get("provenance", {}).get("config")
                jb = json.loads(fb.read_text()).get("provenance", {}).get("config")
                assert {k: v for k, v in (ja or {}).items() if k != "out"} == {k: v for k, v in (jb or {}).items() if k != "out"}
                ta = json.dumps(strip_provenance(fa.read_text()), sort_keys=True)
                assert ta == json.dumps(strip_provenance(fb.read_text()), sort_keys=True)
            else:
                assert fa.read_bytes() == fb.read_bytes(), fa

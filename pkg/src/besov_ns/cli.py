"""``besov-ns`` command line.

    besov-ns {decompose,norms,paraproduct,solve,criteria,calibrate} --config run.json [--seed N] [--out DIR]

Exit status: 0 success, 1 a verdict failed, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import copy
import datetime as _dt
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__

COMMANDS = ("decompose", "norms", "paraproduct", "solve", "criteria", "calibrate")
EXPERIMENTS = ("regularity", "theta", "blowup", "uniqueness", "bootstrap", "persistence")

DEFAULTS = {
    "seed": 0,
    "workers": 1,
    "out": "out",
    "grid": {"d": 2, "N": 32},
    "initial": {"kind": "taylor-green", "s": -0.5, "amplitude": 1.0, "kmax": None, "k": None, "seed": None},
    "solver": {"T": 0.5, "dt": 0.01, "n_picard": 20, "dealias": True, "tol_fixpoint": 1e-10,
               "order": 2, "substeps": 1, "n_geometric": 16, "geometric_depth": 8, "nonlinear": True},
    "norms": {"s": -0.5, "q": "inf", "heat_s": 0.5},
    "paraproduct": {"pairs": 20, "sigma1": 0.5, "sigma2": 1.0},
    "criteria": {"experiment": "regularity", "r": 0.5, "sigma": 0.75, "delta_list": [0.2, 0.1, 0.05],
                 "trace": None, "epsilon": None, "levels": 3, "n0": 2, "orders": [2, 2],
                 "A": 0.25, "B": 0.5, "samples": None},
    "calibrate": {"quick": False, "constants": None},
}


class ConfigError(Exception):
    pass


# --------------------------------------------------------------------------
# configuration


def _line_of(text: str, key: str) -> int | None:
    for i, line in enumerate(text.splitlines(), 1):
        if f'"{key}"' in line:
            return i
    return None


def _merge(base: dict, over: dict, text: str, prefix: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base and k != "command":
            ln = _line_of(text, k)
            where = f"line {ln}: " if ln else ""
            raise ConfigError(f"{where}unknown config key {prefix + k!r}")
        if isinstance(base.get(k), dict):
            if not isinstance(v, dict):
                ln = _line_of(text, k)
                raise ConfigError(f"{'line %d: ' % ln if ln else ''}section {prefix + k!r} must be an object")
            out[k] = _merge(base[k], v, text, prefix + k + ".")
        else:
            out[k] = v
    return out


def load_config(path: str | Path | None) -> dict:
    if path is None:
        return copy.deepcopy(DEFAULTS)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError("line 1: config must be a JSON object")
    return _merge(DEFAULTS, data, text)


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(cfg: dict, args: argparse.Namespace) -> dict:
    cfg = copy.deepcopy(cfg)
    direct = {
        "seed": ("seed",), "out": ("out",), "workers": ("workers",),
        "d": ("grid", "d"), "N": ("grid", "N"),
        "T": ("solver", "T"), "dt": ("solver", "dt"), "n_picard": ("solver", "n_picard"),
        "order": ("solver", "order"), "substeps": ("solver", "substeps"),
        "tol_fixpoint": ("solver", "tol_fixpoint"),
        "initial": ("initial", "kind"), "experiment": ("criteria", "experiment"),
        "trace": ("criteria", "trace"), "r": ("criteria", "r"),
    }
    for attr, keys in direct.items():
        val = getattr(args, attr, None)
        if val is not None:
            node = cfg
            for k in keys[:-1]:
                node = node[k]
            node[keys[-1]] = val
    if getattr(args, "no_dealias", False):
        cfg["solver"]["dealias"] = False
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key.path=value, got {item!r}")
        key, raw = item.split("=", 1)
        parts = key.split(".")
        node = cfg
        for k in parts[:-1]:
            if k not in node or not isinstance(node[k], dict):
                raise ConfigError(f"--set: unknown section {k!r}")
            node = node[k]
        if parts[-1] not in node:
            raise ConfigError(f"--set: unknown key {key!r}")
        node[parts[-1]] = _parse_value(raw)
    return cfg


def _float(x) -> float:
    return math.inf if x in ("inf", "Infinity", math.inf) else float(x)


def worker_cap(requested: int) -> int:
    env = os.environ.get("BESOV_NS_THREADS")
    n = max(1, int(requested))
    if env:
        try:
            n = min(n, max(1, int(env)))
        except ValueError:
            raise ConfigError(f"BESOV_NS_THREADS must be an integer, got {env!r}") from None
    return n


# --------------------------------------------------------------------------
# builders


def _grid(cfg):
    from .spectral import TorusGrid

    try:
        return TorusGrid(int(cfg["grid"]["d"]), int(cfg["grid"]["N"]))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"grid: {exc}") from None


def _initial(cfg, grid):
    from .solver import make_initial_field

    ini = cfg["initial"]
    params = {k: v for k, v in ini.items() if k != "kind" and v is not None}
    params.setdefault("seed", cfg["seed"])
    if ini["kind"] == "single-mode" and "k" in params:
        params["k"] = tuple(params["k"])
    try:
        return make_initial_field(ini["kind"], grid, **params)
    except ValueError as exc:
        raise ConfigError(f"initial: {exc}") from None


def _solver_cfg(cfg, grid):
    from .solver import SolverConfig

    try:
        return SolverConfig(grid=grid, **cfg["solver"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"solver: {exc}") from None


# --------------------------------------------------------------------------
# commands


def cmd_decompose(cfg, out: Path):
    from .criteria import ExperimentReport
    from .littlewood_paley import DyadicFamily, blocks
    from .norms import INF, block_lp_table

    grid = _grid(cfg)
    f = _initial(cfg, grid)
    fam = DyadicFamily(grid)
    parts = blocks(f, fam)
    recon = sum(p.coeffs for p in parts)
    err = float(np.max(np.abs(recon - f.coeffs)))
    rep = ExperimentReport("decompose")
    j = np.arange(-1, fam.J_max + 1, dtype=float)
    rep.add_series("block_l2", j, block_lp_table(f.coeffs[None], fam, 2.0)[0])
    rep.add_series("block_sup", j, block_lp_table(f.coeffs[None], fam, INF)[0])
    rep.scalars.update(J_max=fam.J_max, reconstruction_error=err)
    rep.add_verdict("reconstruction", err <= 1e-13, "reconstruction_error")
    fam.dump_csv(out / "profiles.csv")
    return rep


def cmd_norms(cfg, out: Path):
    from .criteria import ExperimentReport
    from .littlewood_paley import DyadicFamily
    from .norms import besov_norm, heat_characterization_norm, lp_norm, sobolev_h_norm

    grid = _grid(cfg)
    f = _initial(cfg, grid)
    fam = DyadicFamily(grid)
    nc = cfg["norms"]
    s, q, hs = float(nc["s"]), _float(nc["q"]), float(nc["heat_s"])
    rep = ExperimentReport("norms")
    rep.scalars.update(l2=lp_norm(f, 2.0), linf=lp_norm(f, math.inf), besov=besov_norm(f, (s, q), fam),
                       besov_index=[s, nc["q"]], heat_characterization=heat_characterization_norm(f, hs, q),
                       besov_minus_heat_s=besov_norm(f, (-hs, q), fam), sobolev_h1=sobolev_h_norm(f, 1.0))
    return rep


def cmd_paraproduct(cfg, out: Path):
    from .constants import load_constants
    from .corpus import pair_corpus
    from .criteria import ExperimentReport
    from .io import write_ratio_rows
    from .littlewood_paley import DyadicFamily
    from .paraproduct import ParaproductLawSpec, estimate_law_constant, pi1, pi2, product

    grid = _grid(cfg)
    fam = DyadicFamily(grid)
    pc = cfg["paraproduct"]
    corpus = pair_corpus(grid, int(pc["pairs"]), cfg["seed"])
    err = 0.0
    for f, g in corpus:
        fg = product(f, g).coeffs
        diff = pi1(f, g, fam).coeffs + pi2(g, f, fam).coeffs - fg
        err = max(err, float(np.max(np.abs(diff)) / max(np.max(np.abs(fg)), 1e-300)))
    spec = ParaproductLawSpec(float(pc["sigma1"]), float(pc["sigma2"]))
    law = estimate_law_constant(spec, corpus, fam)
    rep = ExperimentReport("paraproduct")
    rep.scalars.update(identity_error=err, pi1_constant=law.pi1, pi2_constant=law.pi2, skipped=law.skipped)
    rep.add_verdict("identity", err <= 1e-12, "identity_error")
    frozen = load_constants()
    if (spec.sigma1, spec.sigma2) == (0.5, 1.0):
        rep.scalars["pi1_frozen"] = frozen.value("paraproduct_pi1")
        rep.scalars["pi2_frozen"] = frozen.value("paraproduct_pi2")
        rep.add_verdict("pi1_bounded", frozen.upper_ok("paraproduct_pi1", law.pi1), ["pi1_constant", "pi1_frozen"])
        rep.add_verdict("pi2_bounded", frozen.upper_ok("paraproduct_pi2", law.pi2), ["pi2_constant", "pi2_frozen"])
    rows = [{"pair": i, "kind": k, "ratio": r} for k, rs in ((1, law.ratios_pi1), (2, law.ratios_pi2))
            for i, r in enumerate(rs)]
    write_ratio_rows(rows, out / "paraproduct_ratios.csv")
    return rep


def cmd_solve(cfg, out: Path):
    from .criteria import ExperimentReport, divergence_series
    from .io import save_trace
    from .solver import BlowupSuspected, picard_solve
    from .spectral import l2_norm_coeffs

    grid = _grid(cfg)
    u0 = _initial(cfg, grid)
    scfg = _solver_cfg(cfg, grid)
    rep = ExperimentReport("solve")
    try:
        u, diag = picard_solve(u0, scfg)
    except BlowupSuspected as exc:
        if exc.trace is not None:
            save_trace(exc.trace, out / "trace", scfg.to_dict(), {"halted": True})
        rep.scalars["halt_time"] = exc.last_valid_time
        rep.add_verdict("completed", False, "halt_time")
        return rep
    save_trace(u, out / "trace", scfg.to_dict(), diag.as_dict())
    rep.add_series("l2_norm", u.times, l2_norm_coeffs(u.coeffs, grid, axes=1))
    rep.add_series("picard_sigma", np.arange(1, len(diag.sigmas) + 1, dtype=float), diag.sigmas)
    div = divergence_series(u)
    rep.scalars.update(diag.as_dict())
    rep.scalars["max_divergence"] = float(div.max())
    rep.add_verdict("completed", True, "iterations")
    rep.add_verdict("divergence_free", div.max() <= 1e-11, "max_divergence")
    return rep


def _trace_for_criteria(cfg, grid):
    from .io import load_trace
    from .solver import picard_solve

    path = cfg["criteria"]["trace"]
    if path:
        if not Path(path).exists():
            raise ConfigError(f"criteria.trace: no such trace {path}")
        return load_trace(path)
    return picard_solve(_initial(cfg, grid), _solver_cfg(cfg, grid), compute_residual=False)[0]


def cmd_criteria(cfg, out: Path):
    from .constants import load_constants
    from .criteria import (
        CriterionParams, ExperimentReport, blowup_tracker, bootstrap_check, persistence_check,
        regularity_monitor, theta_hypothesis, uniqueness_experiment,
    )
    from .littlewood_paley import DyadicFamily

    cc = cfg["criteria"]
    exp = cc["experiment"]
    if exp not in EXPERIMENTS:
        raise ConfigError(f"criteria.experiment must be one of {', '.join(EXPERIMENTS)}, got {exp!r}")
    try:
        params = CriterionParams(float(cc["r"]), float(cc["sigma"]), tuple(cc["delta_list"]), cc["epsilon"])
    except ValueError as exc:
        raise ConfigError(f"criteria: {exc}") from None
    if exp == "bootstrap":
        samples = cc["samples"]
        if samples is None:
            A, B = float(cc["A"]), float(cc["B"])
            root = (1 - math.sqrt(max(1 - 4 * A * B, 0.0))) / (2 * B)
            samples = np.linspace(A, root, 64).tolist()
        res = bootstrap_check(samples, float(cc["A"]), float(cc["B"]))
        rep = ExperimentReport("bootstrap")
        rep.add_series("f", np.arange(len(samples), dtype=float), samples)
        rep.scalars.update(res.as_dict())
        rep.scalars.update(A=float(cc["A"]), B=float(cc["B"]))
        if res.verdict is not None:
            rep.add_verdict("bounded_by_2A", res.verdict, ["f", "A"])
        else:
            rep.add_verdict("hypotheses_met", False, ["hypotheses_met", "reason"])
        return rep
    grid = _grid(cfg)
    fam = DyadicFamily(grid)
    if exp == "uniqueness":
        scfg = _solver_cfg(cfg, grid)
        return uniqueness_experiment(_initial(cfg, grid), scfg, params.r, params.delta_list, fam,
                                     levels=int(cc["levels"]), n0=int(cc["n0"]), orders=tuple(cc["orders"]),
                                     workers=worker_cap(cfg["workers"]))
    if exp == "persistence":
        frozen = load_constants()
        bound = frozen.value("persistence") * (1 + frozen.band("persistence"))
        return persistence_check(_initial(cfg, grid), _solver_cfg(cfg, grid), params.r, fam, bound)
    u = _trace_for_criteria(cfg, grid)
    if exp == "regularity":
        rep = regularity_monitor(u)
        ok, thetas = theta_hypothesis(u, params.r, params.delta_list, fam)
        rep.scalars["theta"] = thetas
        rep.scalars["theta_hypothesis"] = ok
        return rep
    if exp == "theta":
        ok, thetas = theta_hypothesis(u, params.r, params.delta_list, fam)
        rep = ExperimentReport("theta")
        rep.scalars.update(delta_list=list(params.delta_list), theta=thetas)
        rep.add_verdict("vanishing_window", ok, "theta")
        return rep
    eps = params.epsilon_guess if params.epsilon_guess is not None else load_constants().epsilon_guess()
    return blowup_tracker(u, params.r, fam, eps)


def cmd_calibrate(cfg, out: Path):
    from .constants import DEFAULT_PATH, FrozenConstants, calibrate
    from .criteria import ExperimentReport

    cc = cfg["calibrate"]
    target = Path(cc["constants"]) if cc["constants"] else out / "constants.json"
    previous = FrozenConstants.load(DEFAULT_PATH) if DEFAULT_PATH.exists() else None
    fresh = calibrate(target, workers=worker_cap(cfg["workers"]), quick=bool(cc["quick"]))
    rep = ExperimentReport("calibrate")
    rep.scalars["constants_file"] = str(target)
    if previous is not None:
        drift = {}
        for name, entry in fresh.entries.items():
            if name not in previous:
                continue
            keys = [k for k in ("constant", "lower", "upper") if k in entry]
            drift[name] = max(abs(entry[k] / previous[name][k] - 1) if previous[name][k] else 0.0 for k in keys)
        rep.scalars["relative_drift"] = drift
        rep.scalars["max_relative_drift"] = max(drift.values(), default=0.0)
        rep.add_verdict("within_band", rep.scalars["max_relative_drift"] <= 0.2, "max_relative_drift")
    return rep


DISPATCH = {
    "decompose": cmd_decompose, "norms": cmd_norms, "paraproduct": cmd_paraproduct,
    "solve": cmd_solve, "criteria": cmd_criteria, "calibrate": cmd_calibrate,
}


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="besov-ns", description="Besov-space experiments for mild Navier-Stokes solutions.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON config file")
        s.add_argument("--seed", type=int)
        s.add_argument("--out", help="output directory")
        s.add_argument("--workers", type=int)
        s.add_argument("--d", type=int)
        s.add_argument("--N", type=int)
        s.add_argument("--T", type=float)
        s.add_argument("--dt", type=float)
        s.add_argument("--n-picard", dest="n_picard", type=int)
        s.add_argument("--order", type=int, choices=(1, 2))
        s.add_argument("--substeps", type=int)
        s.add_argument("--tol-fixpoint", dest="tol_fixpoint", type=float)
        s.add_argument("--no-dealias", action="store_true")
        s.add_argument("--initial", choices=("taylor-green", "single-mode", "random-besov", "zero"))
        s.add_argument("--experiment", choices=EXPERIMENTS)
        s.add_argument("--trace")
        s.add_argument("--r", type=float)
        s.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = apply_overrides(load_config(args.config), args)
        cfg["command"] = args.command
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        report = DISPATCH[args.command](cfg, out)
    except ConfigError as exc:
        print(f"besov-ns: config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"besov-ns: error: {exc}", file=sys.stderr)
        return 2
    from .io import save_report

    report.provenance = {"timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
                         "command": args.command, "config": cfg}
    path = save_report(report, out)
    for name, v in sorted(report.verdicts.items()):
        print(f"{name}: {'pass' if v['value'] else 'FAIL'}")
    print(f"report: {path}")
    return 0 if report.passed else 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

"""Experiment runner: filter-plot, converge, scaling, pollution, ppw-table.

Configuration is a flat key=value text file plus command-line overrides
(later flags win). Every CSV artifact starts with a comment line carrying
the hash of the full effective configuration, then a header row. Columns
whose name contains "wall" or "seconds" hold wall-clock timings and are
excluded from reproducibility comparisons.

Exit codes: 0 success, 1 configuration error, 2 solver failure, 3 a
--check assertion failed.

``WAVEHOLTZ_THREADS`` caps the worker count for parallel sweeps.
"""

from __future__ import annotations

import argparse
import hashlib
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import pollution
from .driver import (
    HelmholtzProblem,
    compute_deflation_set,
    deflated_solve,
    direct_solve,
    fpi_solve,
    gaussian_source,
    helmholtz_matrix,
    krylov_solve,
    measure_rate,
    resolve_time_discretization,
)
from .filters import FilterConfig, alpha_d, beta, beta_d, lambda_tilde_implicit, predict_rate
from .grid import GridField, build_grid, discrete_eigenvalues_symbolic, interior_values
from .linalg import gmres_solve

__all__ = ["main"]


class ConfigError(Exception):
    pass


class CheckFailure(Exception):
    pass


_DEFAULTS = {
    "filter-plot": {
        "omega": "5.5", "nt": "5", "samples": "801", "lambda_max": "4.0", "seed": "0",
    },
    "converge": {
        "dim": "1", "cells": "32", "bounds": "0,1", "omega": "5.5", "order": "2",
        "c": "1.0", "mode": "implicit", "periods": "1", "nt": "10", "tol": "1e-10",
        "maxit": "500", "deflate": "0", "amp": "-100.0", "width": "30.0",
        "center": "0.37", "restart": "50", "seed": "0",
    },
    "scaling": {
        "sizes": "128,256,512", "omega": "11.0", "periods": "2", "nt": "10",
        "order": "2", "c": "1.0", "amp": "-100.0", "width": "20.0",
        "center": "0.4,0.4", "tol": "1e-7", "restart": "50", "maxit": "200",
        "baseline": "0", "baseline_sizes": "16,24,32", "baseline_tol": "1e-6",
        "baseline_maxit": "20000", "baseline_restart": "50", "seed": "0",
    },
    "pollution": {
        "orders": "2,4,6,8", "n_lambda_list": "10,100,1000",
        "eps_list": "1e-1,1e-2,1e-3", "dispersion_orders": "2,4",
        "dispersion_k": "1.0", "dispersion_kdx": "0.2,0.1,0.05,0.025",
        "e2e_orders": "2,4", "e2e_n_lambda": "10", "e2e_eps": "1e-2",
        "e2e_kappa": "2.3", "seed": "0",
    },
    "ppw-table": {
        "orders": "2,4,6,8", "n_lambda_list": "10,100,1000",
        "eps_list": "1e-1,1e-2,1e-3", "seed": "0",
    },
}


def parse_config_file(path: str) -> dict:
    cfg = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        cfg[key.strip()] = value.strip()
    return cfg


def canonical_text(cfg: dict) -> str:
    return "".join(f"{k} = {cfg[k]}\n" for k in sorted(cfg))


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_text(cfg).encode()).hexdigest()[:16]


def save_config(cfg: dict, path: Path):
    path.write_text(canonical_text(cfg))


def _get(cfg, key, conv, what):
    try:
        return conv(cfg[key])
    except KeyError:
        raise ConfigError(f"missing config key {key!r}") from None
    except (TypeError, ValueError):
        raise ConfigError(f"config key {key!r}: cannot parse {cfg[key]!r} as {what}") from None


def get_float(cfg, key):
    return _get(cfg, key, float, "a number")


def get_int(cfg, key):
    return _get(cfg, key, int, "an integer")


def get_floats(cfg, key):
    return _get(cfg, key, lambda s: [float(x) for x in s.split(",") if x.strip()], "a number list")


def get_ints(cfg, key):
    return _get(cfg, key, lambda s: [int(x) for x in s.split(",") if x.strip()], "an integer list")


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{value:.11e}"
    return str(value)


def write_csv(path: Path, columns, rows, cfg_hash: str):
    lines = [f"# config_hash={cfg_hash}", ",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
    return path


def _workers(n_tasks: int) -> int:
    cap = os.environ.get("WAVEHOLTZ_THREADS", "")
    try:
        cap_n = int(cap) if cap else 1
    except ValueError:
        cap_n = 1
    return max(1, min(n_tasks, cap_n, os.cpu_count() or 1))


def parallel_map(fn, items):
    w = _workers(len(items))
    if w <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=w) as ex:
        return list(ex.map(fn, items))


def _require(cond: bool, message: str):
    if not cond:
        raise CheckFailure(message)


# --- commands ----------------------------------------------------------------


def _halfwidth(lam_ratio, values):
    """Width of the |beta| >= 1/2 region around the peak at lambda/omega = 1."""
    mask = np.abs(values) >= 0.5
    i0 = int(np.argmin(np.abs(lam_ratio - 1.0)))
    lo = i0
    while lo > 0 and mask[lo - 1]:
        lo -= 1
    hi = i0
    while hi < len(mask) - 1 and mask[hi + 1]:
        hi += 1
    return lam_ratio[hi] - lam_ratio[lo]


def cmd_filter_plot(cfg: dict, out: Path, check: bool) -> list[Path]:
    omega = get_float(cfg, "omega")
    n_t = get_int(cfg, "nt")
    samples = get_int(cfg, "samples")
    lam_max = get_float(cfg, "lambda_max")
    period = 2.0 * math.pi / omega
    lam = np.unique(np.concatenate([np.linspace(0.0, lam_max * omega, samples), [omega]]))
    ratio = lam / omega
    betas = {np_: beta(lam, omega, np_ * period, 0.5) for np_ in (1, 2, 3)}
    a_d = alpha_d(2.0 * math.pi / n_t)
    bd = beta_d(lam, omega, period, n_t, a_d)
    lam_imp = lambda_tilde_implicit(lam, period / n_t) / omega
    rows = [
        (ratio[i], betas[1][i], betas[2][i], betas[3][i], bd[i], lam_imp[i])
        for i in range(len(lam))
    ]
    path = write_csv(
        out / "filter.csv",
        ["lambda_over_omega", "beta_np1", "beta_np2", "beta_np3", "beta_d", "lambda_implicit_over_omega"],
        rows,
        config_hash(cfg),
    )
    if check:
        i1 = int(np.argmin(np.abs(ratio - 1.0)))
        _require(abs(betas[1][i1] - 1.0) < 1e-12, "beta(omega) != 1")
        _require(abs(bd[i1] - 1.0) < 1e-12, "beta_d(omega) != 1")
        _require(int(np.argmax(np.abs(bd))) == i1, "discrete filter does not peak at lambda=omega")
        _require(
            _halfwidth(ratio, betas[3]) < _halfwidth(ratio, betas[1]),
            "main peak does not narrow with more periods",
        )
    print(f"filter-plot: wrote {path} ({len(rows)} rows)")
    return [path]


def _build_problem(cfg: dict) -> HelmholtzProblem:
    dim = get_int(cfg, "dim")
    cells = get_ints(cfg, "cells")
    if len(cells) == 1:
        cells = cells * dim
    bounds_flat = get_floats(cfg, "bounds")
    if len(bounds_flat) == 2:
        bounds = [(bounds_flat[0], bounds_flat[1])] * dim
    elif len(bounds_flat) == 2 * dim:
        bounds = [(bounds_flat[2 * i], bounds_flat[2 * i + 1]) for i in range(dim)]
    else:
        raise ConfigError("bounds must list lo,hi or one pair per axis")
    grid = build_grid(dim, bounds, cells, "dirichlet")
    omega = get_float(cfg, "omega")
    center = get_floats(cfg, "center")
    forcing = gaussian_source(grid, omega, get_float(cfg, "amp"), get_float(cfg, "width"), center)
    return HelmholtzProblem(grid, get_int(cfg, "order"), get_float(cfg, "c"), omega, forcing)


def cmd_converge(cfg: dict, out: Path, check: bool) -> list[Path]:
    problem = _build_problem(cfg)
    config = FilterConfig(
        omega=problem.omega,
        periods=get_int(cfg, "periods"),
        steps_per_period=get_int(cfg, "nt"),
        mode=cfg.get("mode", "implicit"),
    )
    tol = get_float(cfg, "tol")
    maxit = get_int(cfg, "maxit")
    n_deflate = get_int(cfg, "deflate")

    runs = {}
    _, runs["fpi"] = fpi_solve(problem, config, tol=tol, maxit=maxit)
    if n_deflate > 0:
        deflation = compute_deflation_set(problem, n_deflate)
        _, runs["fpi_deflated"] = deflated_solve(problem, config, deflation, tol=tol, maxit=maxit)
    _, runs["gmres"] = krylov_solve(problem, config, tol=tol, restart=get_int(cfg, "restart"), maxit=maxit)

    corr, cfg_eff = resolve_time_discretization(problem, config)
    lam = discrete_eigenvalues_symbolic(problem.grid, problem.order, problem.c)
    pred = predict_rate(lam, cfg_eff, omega_tilde=corr.omega_tilde)
    predicted = {"fpi": pred.mu, "gmres": math.nan}
    if n_deflate > 0:
        matched = [int(np.argmin(np.abs(lam - lv))) for lv in deflation.lambdas]
        predicted["fpi_deflated"] = predict_rate(
            lam, cfg_eff, omega_tilde=corr.omega_tilde, deflated=matched
        ).mu

    max_len = max(len(r.residuals) for r in runs.values())
    res_cols = ["iteration"] + [f"residual_{name}" for name in runs]
    res_rows = []
    for i in range(max_len):
        row = [i + 1]
        for name in runs:
            res = runs[name].residuals
            row.append(res[i] if i < len(res) else "")
        res_rows.append(row)
    h = config_hash(cfg)
    paths = [write_csv(out / "residuals.csv", res_cols, res_rows, h)]

    sum_cols = [
        "method", "iterations", "converged", "measured_cr", "ecr",
        "predicted_mu", "relative_gap", "wall_seconds", "wall_per_iteration_seconds",
    ]
    sum_rows = []
    measured = {}
    for name, run in runs.items():
        try:
            cr, ecr = measure_rate(run)
        except ValueError:
            cr = ecr = math.nan
        measured[name] = cr
        mu = predicted.get(name, math.nan)
        gap = abs(cr - mu) / mu if (mu == mu and cr == cr and mu > 0) else math.nan
        sum_rows.append(
            (name, run.iterations, int(run.converged), cr, ecr, mu, gap,
             run.wall_time, run.wall_time_per_iteration)
        )
        print(
            f"converge[{name}]: iterations={run.iterations} converged={run.converged} "
            f"cr={cr:.4f} ecr={ecr:.4f} predicted={mu:.4f} gap={gap if gap == gap else float('nan'):.2%}"
            if cr == cr and mu == mu else
            f"converge[{name}]: iterations={run.iterations} converged={run.converged}"
        )
    paths.append(write_csv(out / "summary.csv", sum_cols, sum_rows, h))

    if check:
        gap = abs(measured["fpi"] - predicted["fpi"]) / predicted["fpi"]
        _require(gap <= 0.05, f"fixed-point rate off by {gap:.1%} (> 5%)")
        _require(
            runs["gmres"].iterations <= runs["fpi"].iterations,
            "GMRES took more iterations than the fixed point",
        )
        if n_deflate > 0:
            _require(
                measured["fpi_deflated"] < measured["fpi"],
                "deflation did not reduce the measured rate",
            )
    return paths


def cmd_scaling(cfg: dict, out: Path, check: bool) -> list[Path]:
    sizes = get_ints(cfg, "sizes")
    omega = get_float(cfg, "omega")
    center = get_floats(cfg, "center")
    config = FilterConfig(
        omega=omega, periods=get_int(cfg, "periods"),
        steps_per_period=get_int(cfg, "nt"), mode="implicit",
    )
    rows = []
    for n in sizes:
        grid = build_grid(2, ((0.0, 1.0), (0.0, 1.0)), (n, n), "dirichlet")
        forcing = gaussian_source(grid, omega, get_float(cfg, "amp"), get_float(cfg, "width"), center)
        problem = HelmholtzProblem(grid, get_int(cfg, "order"), get_float(cfg, "c"), omega, forcing)
        t0 = time.perf_counter()
        _, run = krylov_solve(
            problem, config, tol=get_float(cfg, "tol"),
            restart=get_int(cfg, "restart"), maxit=get_int(cfg, "maxit"),
        )
        wall = time.perf_counter() - t0
        try:
            cr, ecr = measure_rate(run)
        except ValueError:
            cr = ecr = math.nan
        rows.append([n, grid.size, run.iterations, int(run.converged), cr, ecr, wall, wall / grid.size])
        print(f"scaling[{n}x{n}]: iterations={run.iterations} ecr={ecr:.3f} wall={wall:.1f}s")
    base = rows[0][7]
    for row in rows:
        row.append(row[7] / base)
    h = config_hash(cfg)
    paths = [
        write_csv(
            out / "scaling.csv",
            ["cells", "points", "iterations", "converged", "cr", "ecr",
             "wall_seconds", "wall_per_point_seconds", "normalized_wall_per_point"],
            rows,
            h,
        )
    ]

    if int(cfg.get("baseline", "0")):
        brows = []
        for n in get_ints(cfg, "baseline_sizes"):
            grid = build_grid(2, ((0.0, 1.0), (0.0, 1.0)), (n, n), "dirichlet")
            forcing = gaussian_source(grid, omega, get_float(cfg, "amp"), get_float(cfg, "width"), center)
            problem = HelmholtzProblem(grid, get_int(cfg, "order"), get_float(cfg, "c"), omega, forcing)
            mat = helmholtz_matrix(problem)
            rhs = interior_values(grid, forcing.values)
            _, rep = gmres_solve(
                lambda v: mat @ v, rhs, tol=get_float(cfg, "baseline_tol"),
                restart=get_int(cfg, "baseline_restart"), maxit=get_int(cfg, "baseline_maxit"),
            )
            brows.append((n, grid.size, rep.iterations, int(rep.converged), rep.relative_residual))
            print(f"scaling baseline[{n}x{n}]: iterations={rep.iterations}")
        paths.append(
            write_csv(
                out / "baseline.csv",
                ["cells", "points", "iterations", "converged", "relative_residual"],
                brows,
                h,
            )
        )
        if check:
            its = [r[2] for r in brows]
            _require(all(b > a for a, b in zip(its, its[1:])),
                     "baseline iteration counts are not strictly increasing")

    if check:
        its = [r[2] for r in rows]
        _require(max(its) - min(its) <= 2, f"iteration spread {max(its) - min(its)} > 2")
        if 256 in sizes:
            i256 = its[sizes.index(256)]
            _require(11 <= i256 <= 17, f"iterations at 256^2 = {i256} outside 14 +/- 3")
        norm = [r[8] for r in rows]
        _require(all(0.6 <= v <= 1.6 for v in norm),
                 f"normalized wall-time per point {norm} left [0.6, 1.6]")
    return paths


def cmd_pollution(cfg: dict, out: Path, check: bool) -> list[Path]:
    h = config_hash(cfg)
    paths = [_ppw_table(cfg, out, h, check)]

    d_orders = get_ints(cfg, "dispersion_orders")
    k = get_float(cfg, "dispersion_k")
    kdx_list = get_floats(cfg, "dispersion_kdx")
    rows = []
    slopes = {}
    for p in d_orders:
        errs = []
        for kdx in kdx_list:
            res = pollution.k_tilde(k, kdx / k, p)
            errs.append(res.relative_error)
            rows.append((p, kdx, res.k_tilde, res.relative_error, res.asymptotic_coefficient))
        slope = [
            math.log(errs[i] / errs[i + 1]) / math.log(kdx_list[i] / kdx_list[i + 1])
            for i in range(len(errs) - 1)
        ]
        slopes[p] = slope[-1]
    paths.append(
        write_csv(
            out / "dispersion.csv",
            ["order", "k_dx", "k_tilde", "relative_error", "asymptotic_estimate"],
            rows,
            h,
        )
    )
    for p, s in slopes.items():
        print(f"pollution: order {p} measured dispersion slope {s:.3f}")

    def one_e2e(p):
        n_lam = get_float(cfg, "e2e_n_lambda")
        eps = get_float(cfg, "e2e_eps")
        kappa = get_float(cfg, "e2e_kappa")
        m = round(2 * n_lam)
        kk = (m + 0.5) * math.pi
        n_lam_true = kk / (2.0 * math.pi)
        ppw = pollution.ppw_estimate(p, n_lam_true, eps)
        n = int(round(n_lam_true * ppw))
        grid = build_grid(1, (0.0, 1.0), n, "dirichlet")
        x = grid.axis_coords(0)
        forcing = GridField.from_values(grid, np.cos(kappa * x))
        problem = HelmholtzProblem(grid, p, 1.0, kk, forcing)
        u = direct_solve(problem)
        spec = pollution.ModelProblemSpec(k=kk, kappa=kappa, a=0.0, b=1.0, n=n, order=p)
        exact = pollution.continuous_solution(spec)(x)
        rel = float(np.max(np.abs(u.values - exact)) / np.max(np.abs(exact)))
        return (p, kk, n, ppw, rel, eps, rel / eps)

    e2e_rows = parallel_map(one_e2e, get_ints(cfg, "e2e_orders"))
    paths.append(
        write_csv(
            out / "endtoend.csv",
            ["order", "k", "cells", "ppw", "relative_error", "target_eps", "ratio"],
            e2e_rows,
            h,
        )
    )
    for row in e2e_rows:
        print(f"pollution: order {row[0]} end-to-end error {row[4]:.2e} (target {row[5]:.0e})")

    if check:
        for p, s in slopes.items():
            _require(abs(s - p) <= 0.1, f"dispersion slope {s:.3f} off order {p}")
        for row in e2e_rows:
            _require(1.0 / 3.0 <= row[6] <= 3.0,
                     f"order {row[0]} resolution rule missed by factor {row[6]:.2f}")
    return paths


def _ppw_table(cfg: dict, out: Path, h: str, check: bool) -> Path:
    orders = get_ints(cfg, "orders")
    n_lams = get_floats(cfg, "n_lambda_list")
    eps_list = get_floats(cfg, "eps_list")
    rows = []
    for p in orders:
        pref = pollution.ppw_prefactor(p)
        for n_lam in n_lams:
            for eps in eps_list:
                v = pollution.ppw_estimate(p, n_lam, eps)
                rows.append((p, n_lam, eps, v, int(round(v)), pref))
    path = write_csv(
        out / "ppw_table.csv",
        ["order", "n_lambda", "eps", "ppw", "ppw_rounded", "prefactor"],
        rows,
        h,
    )
    if check:
        reference = {2: 321, 4: 27, 6: 12, 8: 8}
        pref_ref = {2: 0.51, 4: 0.43, 6: 0.42, 8: 0.42}
        for p, want in reference.items():
            if p in orders:
                got = int(round(pollution.ppw_estimate(p, 1e4, 1.0)))
                _require(got == want, f"PPW_{p} at N_lambda/eps=1e4 is {got}, expected {want}")
                _require(
                    round(pollution.ppw_prefactor(p), 2) == pref_ref[p],
                    f"prefactor for order {p} is {pollution.ppw_prefactor(p):.4f}",
                )
    print(f"ppw-table: wrote {path} ({len(rows)} rows)")
    return path


def cmd_ppw_table(cfg: dict, out: Path, check: bool) -> list[Path]:
    return [_ppw_table(cfg, out, config_hash(cfg), check)]


_COMMANDS = {
    "filter-plot": cmd_filter_plot,
    "converge": cmd_converge,
    "scaling": cmd_scaling,
    "pollution": cmd_pollution,
    "ppw-table": cmd_ppw_table,
}


def _parse_overrides(pairs: list[str]) -> dict:
    cfg = {}
    i = 0
    while i < len(pairs):
        item = pairs[i]
        if not item.startswith("--"):
            raise ConfigError(f"expected --key, got {item!r}")
        key = item[2:]
        if "=" in key:
            key, value = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(pairs):
                raise ConfigError(f"flag --{key} has no value")
            value = pairs[i + 1]
            i += 2
        cfg[key.replace("-", "_") if key not in ("out",) else key] = value
    return cfg


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="waveholtz",
        description="Helmholtz experiments via time-filtered wave-equation iteration",
    )
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", default=None, help="flat key=value config file")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--check", action="store_true", help="assert the command's acceptance checks")
    try:
        args, rest = parser.parse_known_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; 0 for --help
        return 0 if exc.code == 0 else 1

    try:
        cfg = dict(_DEFAULTS[args.command])
        if args.config:
            cfg.update(parse_config_file(args.config))
        overrides = _parse_overrides(rest)
        out_override = overrides.pop("out", None)
        unknown = set(overrides) - set(cfg)
        if unknown:
            raise ConfigError(f"unknown config keys for {args.command}: {sorted(unknown)}")
        cfg.update(overrides)
        out = Path(out_override or args.out or f"waveholtz-out/{args.command}")
        out.mkdir(parents=True, exist_ok=True)
        save_config(cfg, out / "config.txt")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    try:
        _COMMANDS[args.command](cfg, out, args.check)
    except CheckFailure as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return 3
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # solver-level failure
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

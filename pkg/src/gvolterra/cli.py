"""Experiment runner: strict JSON configs in, CSV/JSON artifacts out.

Every run writes ``manifest.json`` (config echo, tool version, wall time)
plus the study's own artifacts into the output directory.  Artifacts are
deterministic given the config and seed; the only field that varies between
identical runs is the manifest's ``wall_time_seconds``.

Config schema (unknown keys are rejected at every level):

    {
      "g":           {"sigma_low": 1.0, "sigma_high": 2.0},
      "grid":        {"horizon": 1.0, "steps": 200},
      "lattice":     {"levels": 2, "pieces": 1, "cap": 4096},
      "monte_carlo": {"replicas": 256, "master_seed": 20240901},
      "problem":     {"family": "geometric", "params": {}, "alpha": null,
                      "hypothesis_class": null},
      "solver":      {"mode": "direct", "tol": 1e-10, "max_iter": 200,
                      "fast_path": false},
      "study":       {"kind": "expect", ...},
      "output":      {"directory": "out"}
    }

Study-specific keys:

    solve:    none
    expect:   "target" ("driver" or "solution"), "payoff" ("terminal",
              "terminal_square", "terminal_abs")
    converge: "theta" (exponent of the factorial model, default 2.0)
    sweep:    "alphas" (list of parameter values, at least two)
    holder:   "p", "target", "declared_excess" (optional)
    verify:   none

Exit status: 0 on success, 1 on configuration or runtime error, 2 when the
verify study finds a contract violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    fit_factorial_rate,
    holder_exponent,
    parameter_continuity_study,
)
from .coefficients import (
    HypothesisMetadata,
    SamplerConfig,
    TIME_VARYING_LIPSCHITZ,
    audit_integral_lipschitz,
    audit_lipschitz,
    builtin_family,
    divergence_probe,
)
from .expectation import (
    AdaptedProcess,
    estimate,
    integrate_paths,
    ito_isometry_report,
    lower_expectation,
    maximal_inequality_report,
    sup_msq_distance,
)
from .model import GParams, TimeGrid, build_control_lattice, generate_ensemble
from .solver import (
    VolterraProblem,
    direct_solve_ensemble,
    picard_solve,
)

__all__ = ["main", "run", "load_config", "validate_config", "ConfigError"]

STUDY_KINDS = ("solve", "expect", "converge", "sweep", "holder", "verify")


class ConfigError(ValueError):
    """Configuration violates the documented schema or a module precondition."""


# ---------------------------------------------------------------------------
# serialization: 17 significant digits, sorted keys, LF everywhere

def _fmt(x: float) -> str:
    if isinstance(x, float):
        if math.isnan(x):
            return "NaN"
        if math.isinf(x):
            return "Infinity" if x > 0 else "-Infinity"
    return format(float(x), ".17g")


def _serialize(obj, indent: int = 0) -> str:
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (list, tuple, np.ndarray)):
        items = list(np.asarray(obj).tolist()) if isinstance(obj, np.ndarray) else list(obj)
        if not items:
            return "[]"
        body = ",\n".join(inner + _serialize(v, indent + 1) for v in items)
        return "[\n" + body + "\n" + pad + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        body = ",\n".join(
            inner + json.dumps(str(k)) + ": " + _serialize(obj[k], indent + 1)
            for k in sorted(obj)
        )
        return "{\n" + body + "\n" + pad + "}"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _write_json(path: Path, obj) -> None:
    path.write_text(_serialize(obj) + "\n", newline="\n")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n", quoting=csv.QUOTE_NONE)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [_fmt(v) if isinstance(v, (float, np.floating)) else str(v) for v in row]
            )


# ---------------------------------------------------------------------------
# config loading and validation

_SECTION_KEYS = {
    "g": {"sigma_low", "sigma_high"},
    "grid": {"horizon", "steps"},
    "lattice": {"levels", "pieces", "cap"},
    "monte_carlo": {"replicas", "master_seed"},
    "problem": {"family", "params", "alpha", "hypothesis_class"},
    "solver": {"mode", "tol", "max_iter", "fast_path"},
    "study": None,  # validated against the study kind below
    "output": {"directory"},
}

_STUDY_KEYS = {
    "solve": set(),
    "expect": {"target", "payoff"},
    "converge": {"theta"},
    "sweep": {"alphas"},
    "holder": {"p", "target", "declared_excess"},
    "verify": set(),
}


def default_config() -> dict:
    return {
        "g": {"sigma_low": 1.0, "sigma_high": 2.0},
        "grid": {"horizon": 1.0, "steps": 200},
        "lattice": {"levels": 2, "pieces": 1, "cap": 4096},
        "monte_carlo": {"replicas": 256, "master_seed": 20240901},
        "problem": {
            "family": "geometric",
            "params": {},
            "alpha": None,
            "hypothesis_class": None,
        },
        "solver": {"mode": "direct", "tol": 1e-10, "max_iter": 200, "fast_path": False},
        "study": {"kind": "verify"},
        "output": {"directory": "out"},
    }


def _require_number(section, key, value, integer=False):
    ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    if integer:
        ok = isinstance(value, int) and not isinstance(value, bool)
    if not ok:
        kind = "an integer" if integer else "a number"
        raise ConfigError(f"config key {section}.{key} must be {kind}, got {value!r}")


def validate_config(raw: dict) -> dict:
    """Normalize a raw config dict: strict keys, defaults filled, types checked."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    for key in raw:
        if key not in _SECTION_KEYS:
            raise ConfigError(f"unknown config section {key!r}")
        if not isinstance(raw[key], dict):
            raise ConfigError(f"config section {key!r} must be a JSON object")

    cfg = default_config()
    for section, allowed in _SECTION_KEYS.items():
        user = raw.get(section, {})
        if section == "study":
            continue
        for key in user:
            if key not in allowed:
                raise ConfigError(f"unknown key {key!r} in config section {section!r}")
        cfg[section].update(user)

    study = dict(raw.get("study", cfg["study"]))
    kind = study.get("kind")
    if kind not in STUDY_KINDS:
        raise ConfigError(
            f"study.kind must be one of {list(STUDY_KINDS)}, got {kind!r}"
        )
    for key in study:
        if key != "kind" and key not in _STUDY_KEYS[kind]:
            raise ConfigError(f"unknown key {key!r} for study kind {kind!r}")
    cfg["study"] = study

    for section, key, integer in (
        ("g", "sigma_low", False),
        ("g", "sigma_high", False),
        ("grid", "horizon", False),
        ("grid", "steps", True),
        ("lattice", "levels", True),
        ("lattice", "pieces", True),
        ("lattice", "cap", True),
        ("monte_carlo", "replicas", True),
        ("monte_carlo", "master_seed", True),
        ("solver", "tol", False),
        ("solver", "max_iter", True),
    ):
        _require_number(section, key, cfg[section][key], integer=integer)
    if not 0 <= cfg["monte_carlo"]["master_seed"] < 2**64:
        raise ConfigError("monte_carlo.master_seed must fit in an unsigned 64-bit int")
    if cfg["solver"]["mode"] not in ("direct", "picard"):
        raise ConfigError(
            f"solver.mode must be 'direct' or 'picard', got {cfg['solver']['mode']!r}"
        )
    if not isinstance(cfg["solver"]["fast_path"], bool):
        raise ConfigError("solver.fast_path must be a boolean")
    if not isinstance(cfg["problem"]["family"], str):
        raise ConfigError("problem.family must be a string")
    if not isinstance(cfg["problem"]["params"], dict):
        raise ConfigError("problem.params must be a JSON object")
    if not isinstance(cfg["output"]["directory"], str):
        raise ConfigError("output.directory must be a string")
    # surface the owning modules' invariant messages at parse time
    try:
        GParams(cfg["g"]["sigma_low"], cfg["g"]["sigma_high"])
        TimeGrid(cfg["grid"]["horizon"], cfg["grid"]["steps"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return validate_config(raw)


# ---------------------------------------------------------------------------
# building blocks

def _build_model(cfg):
    params = GParams(cfg["g"]["sigma_low"], cfg["g"]["sigma_high"])
    grid = TimeGrid(cfg["grid"]["horizon"], cfg["grid"]["steps"])
    controls = build_control_lattice(
        params,
        grid,
        cfg["lattice"]["levels"],
        cfg["lattice"]["pieces"],
        cap=cfg["lattice"]["cap"],
    )
    ensemble = generate_ensemble(
        params,
        grid,
        controls,
        replicas=cfg["monte_carlo"]["replicas"],
        master_seed=cfg["monte_carlo"]["master_seed"],
    )
    return params, grid, ensemble


def _build_problem(cfg, params, grid, bind=True):
    family, meta = builtin_family(
        cfg["problem"]["family"], cfg["problem"]["params"], horizon=grid.horizon
    )
    if family.parameterized and bind:
        alpha = cfg["problem"]["alpha"]
        if alpha is None:
            raise ConfigError(
                f"family {family.name!r} is parameterized; set problem.alpha"
            )
        family = family.bind(float(alpha))
    return family, meta


def _solve(cfg, problem, ensemble):
    solver = cfg["solver"]
    if solver["mode"] == "picard":
        solution, report = picard_solve(
            problem,
            ensemble,
            tol=solver["tol"],
            max_iter=solver["max_iter"],
            fast_path=solver["fast_path"],
        )
        return solution, report
    return direct_solve_ensemble(problem, ensemble, fast_path=solver["fast_path"]), None


_PAYOFFS = {
    "terminal": lambda times, paths: paths[..., -1],
    "terminal_square": lambda times, paths: paths[..., -1] ** 2,
    "terminal_abs": lambda times, paths: np.abs(paths[..., -1]),
}


def _per_control_table(est) -> list:
    return [
        {
            "control_index": stat.control_index,
            "mean": stat.mean,
            "std_error": stat.std_error,
            "replicas": stat.replicas,
        }
        for stat in est.per_control
    ]


def _target_paths(cfg, ensemble, params, grid):
    target = cfg["study"].get("target", "driver")
    if target == "driver":
        return ensemble.paths, None, target
    if target == "solution":
        family, meta = _build_problem(cfg, params, grid)
        problem = VolterraProblem(family=family, grid=grid, params=params, metadata=meta)
        solution, report = _solve(cfg, problem, ensemble)
        return solution.values, report, target
    raise ConfigError(f"study.target must be 'driver' or 'solution', got {target!r}")


# ---------------------------------------------------------------------------
# studies

def run_solve(cfg, out: Path) -> None:
    params, grid, ensemble = _build_model(cfg)
    family, meta = _build_problem(cfg, params, grid)
    problem = VolterraProblem(family=family, grid=grid, params=params, metadata=meta)
    solution, report = _solve(cfg, problem, ensemble)
    X = solution.values
    C, M = ensemble.n_controls, ensemble.replicas_per_control
    times = grid.times

    def rows():
        for c in range(C):
            for m in range(M):
                sid = c * M + m
                path = X[c, m]
                for i in range(grid.steps + 1):
                    yield (sid, c, float(times[i]), float(path[i]))

    _write_csv(out / "paths.csv", ("scenario_id", "control_id", "t", "X"), rows())

    terminal = X[..., -1]
    upper = estimate(terminal, ensemble)
    lower = lower_expectation(terminal, ensemble)
    summary = {
        "family": family.name,
        "solver": cfg["solver"]["mode"],
        "terminal_mean_upper": upper.value,
        "terminal_mean_lower": lower.value,
        "terminal_std_error_upper": upper.std_error,
        "argmax_control": upper.argmax_control,
        "per_control_terminal": _per_control_table(upper),
        "sup_mean_square": float(np.max(np.mean(X**2, axis=1))),
    }
    if report is not None:
        summary["picard"] = {
            "iterations": report.iterations,
            "converged": report.converged,
            "tol": report.tol,
        }
    _write_json(out / "summary.json", summary)


def run_expect(cfg, out: Path) -> None:
    params, grid, ensemble = _build_model(cfg)
    name = cfg["study"].get("payoff", "terminal_square")
    if name not in _PAYOFFS:
        raise ConfigError(
            f"study.payoff must be one of {sorted(_PAYOFFS)}, got {name!r}"
        )
    paths, _, target = _target_paths(cfg, ensemble, params, grid)
    table = np.asarray(_PAYOFFS[name](grid.times, paths), dtype=float)
    upper = estimate(table, ensemble)
    lower = lower_expectation(table, ensemble)
    _write_json(
        out / "estimate.json",
        {
            "payoff": name,
            "target": target,
            "value": upper.value,
            "std_error": upper.std_error,
            "argmax_control": upper.argmax_control,
            "lower_value": lower.value,
            "lower_std_error": lower.std_error,
            "argmin_control": lower.argmax_control,
            "per_control": _per_control_table(upper),
            "controls": [list(map(float, c.densities)) for c in ensemble.controls],
        },
    )


def run_converge(cfg, out: Path) -> None:
    params, grid, ensemble = _build_model(cfg)
    family, meta = _build_problem(cfg, params, grid)
    problem = VolterraProblem(family=family, grid=grid, params=params, metadata=meta)
    solver = cfg["solver"]
    _, report = picard_solve(
        problem,
        ensemble,
        tol=solver["tol"],
        max_iter=solver["max_iter"],
        fast_path=solver["fast_path"],
    )
    _write_csv(
        out / "increments.csv",
        ("iter", "d_n"),
        [(n, float(d)) for n, d in enumerate(report.increments)],
    )
    theta = cfg["study"].get("theta", 2.0)
    _require_number("study", "theta", theta)
    fit = fit_factorial_rate(report.increments, theta=theta, horizon=grid.horizon)
    _write_json(
        out / "ratefit.json",
        {
            "model": fit.model,
            "constants": fit.constants,
            "passed": fit.passed,
            "max_abs_residual": float(np.max(np.abs(fit.residuals), initial=0.0)),
            "cauchy": bool(fit.details.get("cauchy", False)),
            "envelope_ok": bool(fit.details.get("envelope_ok", True)),
            "iterations": report.iterations,
            "converged": report.converged,
            "tol": report.tol,
        },
    )


def run_sweep(cfg, out: Path) -> None:
    params, grid, ensemble = _build_model(cfg)
    family, meta = _build_problem(cfg, params, grid, bind=False)
    alphas = cfg["study"].get("alphas")
    if not isinstance(alphas, list) or len(alphas) < 2:
        raise ConfigError("study.alphas must be a list of at least two numbers")
    for a in alphas:
        _require_number("study", "alphas[]", a)
    fit = parameter_continuity_study(family, meta, alphas, ensemble)
    pairs = fit.details["pairs"]
    dists = fit.details["distances"]
    _write_csv(
        out / "continuity.csv",
        ("alpha", "beta", "distance"),
        [(float(a), float(b), float(d)) for (a, b), d in zip(pairs, dists)],
    )
    _write_json(
        out / "slope.json",
        {
            "slope": fit.constants["slope"],
            "passed": fit.passed,
            "envelope_ok": bool(fit.details["envelope_ok"]),
            "n_pairs": len(pairs),
            "alphas": [float(a) for a in alphas],
        },
    )


def run_holder(cfg, out: Path) -> None:
    params, grid, ensemble = _build_model(cfg)
    p = cfg["study"].get("p", 4.0)
    _require_number("study", "p", p)
    paths, _, target = _target_paths(cfg, ensemble, params, grid)
    declared = cfg["study"].get("declared_excess")
    if declared is not None:
        _require_number("study", "declared_excess", declared)
    fit = holder_exponent(
        AdaptedProcess(paths), float(p), ensemble, declared_excess=declared
    )
    lags = fit.details["lags"]
    moments = fit.details["moments"]
    _write_csv(
        out / "moments.csv",
        ("lag", "moment"),
        [(float(l), float(m)) for l, m in zip(lags, moments)],
    )
    _write_json(
        out / "exponent.json",
        {
            "exponent": fit.constants["exponent"],
            "p": float(p),
            "target": target,
            "passed": fit.passed,
            "log_c": fit.constants["log_c"],
        },
    )


# ---------------------------------------------------------------------------
# verify: the aggregated invariant suite

def _dyadic(rng, shape, scale=16):
    # payoffs on a dyadic grid so estimator arithmetic is exact
    return rng.integers(-(2**10), 2**10, size=shape).astype(float) / scale


def _check_estimator_axioms(seed):
    params = GParams(1.0, 2.0)
    grid = TimeGrid(1.0, 32)
    controls = build_control_lattice(params, grid, levels=3, pieces=1)
    ens = generate_ensemble(params, grid, controls, replicas=64, master_seed=seed)
    rng = np.random.default_rng(seed)
    shape = (ens.n_controls, ens.replicas_per_control)
    worst = 0.0
    ok = True
    for _ in range(100):
        x = _dyadic(rng, shape)
        y = _dyadic(rng, shape)
        c = float(rng.integers(1, 8))
        ex, ey = estimate(x, ens).value, estimate(y, ens).value
        ok &= estimate(np.minimum(x, y), ens).value <= min(ex, ey)
        const = float(rng.integers(-64, 64)) / 4.0
        ok &= estimate(np.full(shape, const), ens).value == const
        sub_excess = estimate(x + y, ens).value - (ex + ey)
        ok &= sub_excess <= 0.0
        worst = max(worst, sub_excess)
        ok &= estimate(c * x, ens).value == c * ex
    return {"passed": bool(ok), "max_subadditivity_excess": worst}


def _check_qv_band(seed):
    params = GParams(1.0, 2.0)
    grid = TimeGrid(1.0, 64)
    controls = build_control_lattice(params, grid, levels=3, pieces=2)
    ens = generate_ensemble(params, grid, controls, replicas=180, master_seed=seed)
    dqv = ens.dQV  # one row per control; shared across replicas by construction
    n_checked = ens.n_controls * ens.replicas_per_control * grid.steps
    lo, hi = params.var_low * grid.dt, params.var_high * grid.dt
    violations = int(np.sum((dqv < lo) | (dqv > hi)))
    margin = float(min(np.min(dqv) - lo, hi - np.max(dqv)))
    return {
        "passed": violations == 0 and n_checked >= 10**5,
        "violations": violations,
        "increments_checked": n_checked,
        "margin": margin,
    }


def _check_isometry(seed):
    params = GParams(1.0, 2.0)
    grid = TimeGrid(1.0, 128)
    controls = build_control_lattice(params, grid, levels=2, pieces=1)
    ens = generate_ensemble(params, grid, controls, replicas=2000, master_seed=seed)
    results = {}
    ok = True
    for label, integrand in (
        ("constant", AdaptedProcess(np.ones_like(ens.paths))),
        ("sin_b", AdaptedProcess(np.sin(ens.paths))),
    ):
        iso = ito_isometry_report(integrand, ens)
        gap_se = abs(iso.lhs - iso.mid) / iso.combined_se if iso.combined_se else 0.0
        dom = iso.mid <= iso.rhs + 3.0 * math.hypot(iso.mid_se, iso.rhs_se)
        ok &= gap_se <= 3.0 and dom
        results[label] = {"gap_in_se_units": float(gap_se), "dominated": bool(dom)}
    return {"passed": bool(ok), **results}


def _check_doob(seed):
    params = GParams(1.0, 2.0)
    grid = TimeGrid(1.0, 128)
    controls = build_control_lattice(params, grid, levels=2, pieces=1)
    ens = generate_ensemble(params, grid, controls, replicas=2000, master_seed=seed)
    ok = True
    results = {}
    for label, integrand in (
        ("constant", AdaptedProcess(np.ones_like(ens.paths))),
        ("sin_b", AdaptedProcess(np.sin(ens.paths))),
    ):
        rep = maximal_inequality_report(integrand, ens)
        slack = 3.0 * math.hypot(rep.sup_moment_se, rep.doob_bound_se)
        holds = rep.sup_moment <= rep.doob_bound + slack
        ok &= holds
        results[label] = {
            "sup_moment": rep.sup_moment,
            "doob_bound": rep.doob_bound,
            "holds": bool(holds),
        }
    return {"passed": bool(ok), **results}


def _check_picard_direct(seed):
    params = GParams(1.0, 2.0)
    grid = TimeGrid(1.0, 100)
    controls = build_control_lattice(params, grid, levels=2, pieces=1)
    ens = generate_ensemble(params, grid, controls, replicas=64, master_seed=seed)
    worst = 0.0
    for name in ("linear_ode", "geometric"):
        family, meta = builtin_family(name, horizon=grid.horizon)
        problem = VolterraProblem(family=family, grid=grid, params=params, metadata=meta)
        direct = direct_solve_ensemble(problem, ens)
        picard, _ = picard_solve(problem, ens, tol=0.0, max_iter=grid.steps)
        worst = max(worst, float(np.max(np.abs(picard.values - direct.values))))
    return {"passed": worst <= 1e-12, "max_sup_gap": worst}


def _check_uniqueness(seed):
    params = GParams(1.0, 2.0)
    grid = TimeGrid(1.0, 100)
    controls = build_control_lattice(params, grid, levels=2, pieces=1)
    ens = generate_ensemble(params, grid, controls, replicas=64, master_seed=seed)
    family, meta = builtin_family("geometric", horizon=grid.horizon)
    problem = VolterraProblem(family=family, grid=grid, params=params, metadata=meta)
    a, _ = picard_solve(problem, ens, tol=1e-8, max_iter=400)
    b, _ = picard_solve(problem, ens, tol=1e-8, max_iter=400, initial_offset=1.0)
    dist = sup_msq_distance(a.process, b.process, ens)
    return {"passed": dist <= 1e-8, "distance": dist}


def _check_classical(seed):
    results = {}
    ok = True
    # deterministic exponential and cosh
    det_params = GParams(1.0, 1.0)
    grid = TimeGrid(1.0, 2000)
    controls = build_control_lattice(det_params, grid, levels=1, pieces=1)
    ens1 = generate_ensemble(det_params, grid, controls, replicas=1, master_seed=seed)
    for name, target in (("linear_ode", math.e), ("conv_cosh", math.cosh(1.0))):
        family, meta = builtin_family(name, horizon=1.0)
        problem = VolterraProblem(family=family, grid=grid, params=det_params, metadata=meta)
        sol = direct_solve_ensemble(problem, ens1)
        err = abs(float(sol.values[0, 0, -1]) - target)
        ok &= err <= 5e-3
        results[name] = {"abs_error": err, "within": bool(err <= 5e-3)}
    # no-uncertainty second moment of the geometric solution: e^{sigma^2 T}
    sq_params = GParams(2.0, 2.0)
    sq_grid = TimeGrid(0.25, 500)
    sq_controls = build_control_lattice(sq_params, sq_grid, levels=1, pieces=1)
    ens2 = generate_ensemble(sq_params, sq_grid, sq_controls, replicas=3000, master_seed=seed)
    family, meta = builtin_family("geometric", horizon=sq_grid.horizon)
    problem = VolterraProblem(family=family, grid=sq_grid, params=sq_params, metadata=meta)
    sol = direct_solve_ensemble(problem, ens2, fast_path=True)
    est = estimate(sol.values[..., -1] ** 2, ens2)
    target = math.exp(sq_params.var_high * sq_grid.horizon)
    tol = 3.0 * est.std_error + 0.05 * target
    err = abs(est.value - target)
    ok &= err <= tol
    results["second_moment"] = {"abs_error": err, "tolerance": tol, "within": bool(err <= tol)}
    return {"passed": bool(ok), **results}


def _check_factorial(seed):
    params = GParams(1.0, 1.0)
    grid = TimeGrid(1.0, 400)
    controls = build_control_lattice(params, grid, levels=1, pieces=1)
    ens = generate_ensemble(params, grid, controls, replicas=1, master_seed=seed)
    family, meta = builtin_family("linear_ode", horizon=grid.horizon)
    problem = VolterraProblem(family=family, grid=grid, params=params, metadata=meta)
    _, report = picard_solve(problem, ens, tol=1e-28, max_iter=40)
    fit = fit_factorial_rate(report.increments, theta=2.0, horizon=grid.horizon)
    return {
        "passed": bool(fit.passed),
        "cauchy": bool(fit.details.get("cauchy", False)),
        "log_C": fit.constants["log_C"] if "log_C" in fit.constants else fit.constants["log_c"],
    }


def _check_integral_lipschitz():
    family, meta = builtin_family("log_modulus", horizon=1.0)
    audit = audit_integral_lipschitz(family, meta)
    probe = divergence_probe(meta.psi)
    sqrt_probe = divergence_probe(np.sqrt)
    ok = audit.passed and probe.diverges and not sqrt_probe.diverges
    return {
        "passed": bool(ok),
        "audit_max_ratio": audit.max_ratio,
        "probe_total": probe.total,
        "probe_diverges": bool(probe.diverges),
        "sqrt_probe_diverges": bool(sqrt_probe.diverges),
    }


def _check_parameter_slope(seed):
    params = GParams(1.0, 2.0)
    grid = TimeGrid(1.0, 100)
    controls = build_control_lattice(params, grid, levels=2, pieces=1)
    ens = generate_ensemble(params, grid, controls, replicas=400, master_seed=seed)
    family, meta = builtin_family("affine_param", horizon=grid.horizon)
    fit = parameter_continuity_study(family, meta, [0.0, 0.05, 0.1, 0.2, 0.4], ens)
    return {
        "passed": bool(fit.passed),
        "slope": fit.constants["slope"],
        "envelope_ok": bool(fit.details["envelope_ok"]),
    }


def _check_lipschitz_audit(inject: str = None):
    family, meta = builtin_family("linear_ode", horizon=1.0)
    if inject == "lipschitz-violation":
        # negative control: claim half the true Lipschitz constant
        meta = HypothesisMetadata(
            klass=TIME_VARYING_LIPSCHITZ,
            L_ts=lambda t, s: 0.5 * np.ones(np.broadcast_shapes(np.shape(t), np.shape(s))),
            eps=meta.eps,
            eps_bar=meta.eps_bar,
            K_fn=meta.K_fn,
            rho=meta.rho,
            C_T=meta.C_T,
        )
    audit = audit_lipschitz(family, meta, SamplerConfig())
    return {
        "passed": bool(audit.passed),
        "max_ratio": audit.max_ratio,
        "injected": inject == "lipschitz-violation",
    }


def run_verify(cfg, out: Path, inject: str = None) -> int:
    seed = cfg["monte_carlo"]["master_seed"]
    checks = {
        "estimator_axioms": _check_estimator_axioms(seed),
        "quadratic_variation_band": _check_qv_band(seed),
        "ito_isometry": _check_isometry(seed),
        "doob_surrogate": _check_doob(seed),
        "picard_equals_direct": _check_picard_direct(seed),
        "uniqueness": _check_uniqueness(seed),
        "classical_reductions": _check_classical(seed),
        "factorial_fit": _check_factorial(seed),
        "integral_lipschitz_probe": _check_integral_lipschitz(),
        "parameter_slope": _check_parameter_slope(seed),
        "lipschitz_audit": _check_lipschitz_audit(inject),
    }
    failing = sorted(name for name, res in checks.items() if not res["passed"])
    _write_json(
        out / "verify.json",
        {"passed": not failing, "failing": failing, "checks": checks},
    )
    for name in sorted(checks):
        status = "pass" if checks[name]["passed"] else "FAIL"
        print(f"{name}: {status}")
    if failing:
        print(f"verify: contract violation in {', '.join(failing)}", file=sys.stderr)
        return 2
    return 0


# ---------------------------------------------------------------------------
# entry point

_RUNNERS = {
    "solve": run_solve,
    "expect": run_expect,
    "converge": run_converge,
    "sweep": run_sweep,
    "holder": run_holder,
}


def run(kind: str, cfg: dict, out_dir: str, inject: str = None) -> int:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = time.monotonic()
    if kind == "verify":
        status = run_verify(cfg, out, inject=inject)
    else:
        _RUNNERS[kind](cfg, out)
        status = 0
    manifest = {
        "tool": {"name": "gvolterra", "version": __version__},
        "wall_time_seconds": time.monotonic() - started,
        "config": cfg,
    }
    _write_json(out / "manifest.json", manifest)
    return status


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gvolterra",
        description="Worst-case Monte Carlo and Volterra solver experiment runner.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in STUDY_KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} study")
        p.add_argument("--config", help="path to a strict-JSON config file")
        p.add_argument("--out", help="output directory (overrides output.directory)")
        p.add_argument("--seed", type=int, help="override monte_carlo.master_seed")
        p.add_argument(
            "--threads",
            type=int,
            default=1,
            help="cap worker parallelism; results are identical for any value",
        )
        if kind == "verify":
            p.add_argument(
                "--inject",
                choices=["lipschitz-violation"],
                help="enable a deliberately broken fixture as a negative control",
            )
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.config is not None:
            cfg = load_config(args.config)
        elif args.command == "verify":
            cfg = validate_config({"study": {"kind": "verify"}})
        else:
            raise ConfigError(f"--config is required for the {args.command} study")
        if cfg["study"]["kind"] != args.command:
            raise ConfigError(
                f"config study.kind is {cfg['study']['kind']!r} but the "
                f"{args.command!r} subcommand was invoked"
            )
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must fit in an unsigned 64-bit int")
            cfg["monte_carlo"]["master_seed"] = args.seed
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be a positive integer")
        out_dir = args.out if args.out is not None else cfg["output"]["directory"]
        inject = getattr(args, "inject", None)
        return run(args.command, cfg, out_dir, inject=inject)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Acceptance gate: one check per shipped guarantee, one pass/fail line each.

Each test prints a single `[criterion NN] PASS/FAIL` line (visible with -s or
on failure) and then asserts.  Monte Carlo checks run at the package default
seed 20240901 so every number here is reproducible bit for bit.
"""

import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from gvolterra import (
    AdaptedProcess,
    GParams,
    TimeGrid,
    VolterraProblem,
    build_control_lattice,
    builtin_family,
    direct_solve_ensemble,
    estimate,
    generate_ensemble,
    holder_exponent,
    ito_isometry_report,
    lower_expectation,
    maximal_inequality_report,
    parameter_continuity_study,
    picard_solve,
    sup_msq_distance,
)
from gvolterra.coefficients import (
    HypothesisMetadata,
    INTEGRAL_LIPSCHITZ,
    audit_integral_lipschitz,
    divergence_probe,
)
from gvolterra.cli import main as cli_main
from gvolterra.solver import msq_continuity_profile

SEED = 20240901


def _criterion(num, ok, detail=""):
    tag = "PASS" if ok else "FAIL"
    line = f"[criterion {num:02d}] {tag}" + (f" - {detail}" if detail else "")
    print(line)
    assert ok, line


def _det_ensemble(steps):
    params = GParams(1.0, 1.0)
    grid = TimeGrid(1.0, steps)
    controls = build_control_lattice(params, grid, levels=1, pieces=1)
    return params, grid, generate_ensemble(params, grid, controls, replicas=1, master_seed=SEED)


def _problem(name, grid, params, family_params=None):
    family, meta = builtin_family(name, family_params, horizon=grid.horizon)
    return VolterraProblem(family=family, grid=grid, params=params, metadata=meta)


def test_criterion_01_classical_reductions():
    started = time.monotonic()
    params, grid, ens = _det_ensemble(2000)
    err_e = abs(
        float(direct_solve_ensemble(_problem("linear_ode", grid, params), ens).values[0, 0, -1])
        - math.e
    )
    err_c = abs(
        float(direct_solve_ensemble(_problem("conv_cosh", grid, params), ens).values[0, 0, -1])
        - math.cosh(1.0)
    )
    elapsed = time.monotonic() - started
    _criterion(
        1,
        err_e <= 5e-3 and err_c <= 5e-3 and elapsed < 2.0,
        f"|X(1)-e|={err_e:.1e}, |X(1)-cosh1|={err_c:.1e}, {elapsed:.2f}s",
    )


def test_criterion_02_picard_equals_direct():
    started = time.monotonic()
    params = GParams(1.0, 2.0)
    grid = TimeGrid(1.0, 200)
    controls = build_control_lattice(params, grid, levels=2, pieces=1)
    ens = generate_ensemble(params, grid, controls, replicas=64, master_seed=SEED)
    worst = 0.0
    for name in ("linear_ode", "conv_cosh", "geometric"):
        problem = _problem(name, grid, params)
        direct = direct_solve_ensemble(problem, ens)
        picard, _ = picard_solve(problem, ens, tol=0.0, max_iter=grid.steps)
        worst = max(worst, float(np.max(np.abs(picard.values - direct.values))))
    elapsed = time.monotonic() - started
    _criterion(2, worst <= 1e-12 and elapsed < 10.0, f"sup gap {worst:.1e}, {elapsed:.2f}s")


def test_criterion_03_factorial_contraction():
    params, grid, ens = _det_ensemble(2000)
    _, report = picard_solve(_problem("linear_ode", grid, params), ens, tol=0.0, max_iter=10)
    T, dt = grid.horizon, grid.dt
    failures = []
    for n in range(9):
        target = (T ** (n + 1) / math.factorial(n + 1)) ** 2
        if abs(float(report.increments[n]) - target) > 10.0 * dt * target:
            failures.append(n)
    _criterion(
        3,
        not failures,
        "all n<=8 within 10*dt" if not failures else f"outside 10*dt band at n={failures}",
    )


def test_criterion_04_uniqueness_two_starts():
    params = GParams(1.0, 2.0)
    grid = TimeGrid(1.0, 200)
    controls = build_control_lattice(params, grid, levels=2, pieces=1)
    ens = generate_ensemble(params, grid, controls, replicas=64, master_seed=SEED)
    problem = _problem("geometric", grid, params)
    a, _ = picard_solve(problem, ens, tol=1e-8, max_iter=400, fast_path=True)
    b, _ = picard_solve(problem, ens, tol=1e-8, max_iter=400, initial_offset=1.0, fast_path=True)
    dist = sup_msq_distance(a.process, b.process, ens)
    _criterion(4, dist <= 1e-8, f"limit distance {dist:.1e}")


def test_criterion_05_quadratic_variation_band():
    params = GParams(1.0, 2.0)
    grid = TimeGrid(1.0, 64)
    controls = build_control_lattice(params, grid, levels=3, pieces=2)
    ens = generate_ensemble(params, grid, controls, replicas=180, master_seed=SEED)
    assert len(controls) == 9
    n_increments = ens.n_controls * ens.replicas_per_control * grid.steps
    lo, hi = params.var_low * grid.dt, params.var_high * grid.dt
    violations = int(np.sum((ens.dQV < lo) | (ens.dQV > hi)))
    _criterion(
        5,
        n_increments >= 10**5 and violations == 0,
        f"{n_increments} increments, {violations} violations",
    )


def test_criterion_06_estimator_axioms():
    params = GParams(1.0, 2.0)
    grid = TimeGrid(1.0, 32)
    controls = build_control_lattice(params, grid, levels=3, pieces=1)
    ens = generate_ensemble(params, grid, controls, replicas=64, master_seed=SEED)
    rng = np.random.default_rng(SEED)
    shape = (ens.n_controls, ens.replicas_per_control)
    ok = True
    for _ in range(100):
        # dyadic payoffs make every estimator operation exact in doubles
        x = rng.integers(-(2**12), 2**12, size=shape).astype(float) / 64.0
        y = rng.integers(-(2**12), 2**12, size=shape).astype(float) / 64.0
        c = float(rng.integers(0, 8))
        const = float(rng.integers(-256, 256)) / 16.0
        ex, ey = estimate(x, ens).value, estimate(y, ens).value
        ok &= estimate(np.minimum(x, y), ens).value <= min(ex, ey)
        ok &= estimate(np.full(shape, const), ens).value == const
        ok &= estimate(x + y, ens).value <= ex + ey
        ok &= estimate(c * x, ens).value == c * ex
    _criterion(6, bool(ok), "monotone/constant/subadditive/homogeneous, exact, 100 pairs")


def test_criterion_07_expectation_endpoints():
    started = time.monotonic()
    params = GParams(1.0, 2.0)
    grid = TimeGrid(1.0, 64)
    controls = build_control_lattice(params, grid, levels=2, pieces=1)
    ens = generate_ensemble(params, grid, controls, replicas=4000, master_seed=SEED)
    table = ens.paths[..., -1] ** 2
    upper = estimate(table, ens)
    lower = lower_expectation(table, ens)
    densities = [float(c.densities[0]) for c in controls]
    ok = (
        abs(upper.value - 4.0) <= 3.0 * upper.std_error
        and abs(lower.value - 1.0) <= 3.0 * lower.std_error
        and densities[upper.argmax_control] == 4.0
        and densities[lower.argmax_control] == 1.0
    )
    elapsed = time.monotonic() - started
    _criterion(
        7,
        ok and elapsed < 5.0,
        f"upper {upper.value:.3f}+-{upper.std_error:.3f}, "
        f"lower {lower.value:.3f}+-{lower.std_error:.3f}, {elapsed:.2f}s",
    )


def test_criterion_08_isometry_and_doob():
    params = GParams(1.0, 2.0)
    grid = TimeGrid(1.0, 128)
    controls = build_control_lattice(params, grid, levels=2, pieces=1)
    ens = generate_ensemble(params, grid, controls, replicas=2000, master_seed=SEED)
    ok = True
    gaps = []
    for integrand in (
        AdaptedProcess(np.ones_like(ens.paths)),
        AdaptedProcess(np.sin(ens.paths)),
    ):
        iso = ito_isometry_report(integrand, ens)
        gap = abs(iso.lhs - iso.mid)
        ok &= gap <= 3.0 * iso.combined_se
        ok &= iso.mid <= iso.rhs + 3.0 * math.hypot(iso.mid_se, iso.rhs_se)
        rep = maximal_inequality_report(integrand, ens)
        ok &= rep.sup_moment <= rep.doob_bound + 3.0 * math.hypot(
            rep.sup_moment_se, rep.doob_bound_se
        )
        gaps.append(gap / iso.combined_se if iso.combined_se else 0.0)
    _criterion(8, bool(ok), f"isometry gaps {gaps[0]:.2f}, {gaps[1]:.2f} SE units")


def test_criterion_09_nonlinear_expectation_solve():
    params = GParams(1.0, 2.0)
    grid = TimeGrid(1.0, 1000)
    controls = build_control_lattice(params, grid, levels=2, pieces=1)
    ens = generate_ensemble(params, grid, controls, replicas=4000, master_seed=SEED)
    problem = _problem("geometric", grid, params)
    # justify the fast route against the reference one on a small instance
    small_grid = TimeGrid(1.0, 100)
    small = generate_ensemble(
        params, small_grid, build_control_lattice(params, small_grid, 2, 1),
        replicas=64, master_seed=SEED,
    )
    sp = _problem("geometric", small_grid, params)
    route_gap = float(
        np.max(
            np.abs(
                direct_solve_ensemble(sp, small, fast_path=True).values
                - direct_solve_ensemble(sp, small).values
            )
        )
    )
    assert route_gap <= 1e-12
    sol = direct_solve_ensemble(problem, ens, fast_path=True)
    est = estimate(sol.values[..., -1] ** 2, ens)
    target = math.exp(4.0)
    err = abs(est.value - target)
    tol = 3.0 * est.std_error + 0.05 * target

    cparams = GParams(1.0, 1.0)
    cens = generate_ensemble(
        cparams, grid, build_control_lattice(cparams, grid, 1, 1),
        replicas=4000, master_seed=SEED,
    )
    csol = direct_solve_ensemble(_problem("geometric", grid, cparams), cens, fast_path=True)
    cest = estimate(csol.values[..., -1] ** 2, cens)
    cerr = abs(cest.value - math.e)
    ctol = 3.0 * cest.std_error + 0.05 * math.e
    _criterion(
        9,
        err <= tol and cerr <= ctol,
        f"e^4 err {err:.2f} (tol {tol:.2f}), classical err {cerr:.3f} (tol {ctol:.3f})",
    )


def test_criterion_10_integral_lipschitz_regime(tmp_path):
    family, meta = builtin_family("log_modulus", horizon=1.0)
    audit = audit_integral_lipschitz(family, meta)
    probe = divergence_probe(meta.psi, k_max=60)
    convex = HypothesisMetadata(
        klass=INTEGRAL_LIPSCHITZ,
        L_const=meta.L_const,
        psi=lambda u: np.asarray(u, dtype=float) ** 2,
        eps=meta.eps,
        eps_bar=meta.eps_bar,
    )
    negative = audit_integral_lipschitz(family, convex)

    params, grid, ens = _det_ensemble(200)
    problem = VolterraProblem(family=family, grid=grid, params=params, metadata=meta)
    _, report = picard_solve(problem, ens, tol=1e-10, max_iter=100)
    d = report.increments
    monotone = bool(np.all(np.diff(d[2:]) < 0.0))

    cfg = tmp_path / "converge.json"
    cfg.write_text(
        json.dumps(
            {
                "g": {"sigma_low": 1.0, "sigma_high": 1.0},
                "grid": {"horizon": 1.0, "steps": 200},
                "lattice": {"levels": 1, "pieces": 1},
                "monte_carlo": {"replicas": 1, "master_seed": SEED},
                "problem": {"family": "log_modulus"},
                "solver": {"mode": "picard", "tol": 1e-10, "max_iter": 100},
                "study": {"kind": "converge"},
            }
        )
    )
    out = tmp_path / "out"
    rc = cli_main(["converge", "--config", str(cfg), "--out", str(out)])
    reported = json.loads((out / "ratefit.json").read_text())["converged"]
    _criterion(
        10,
        audit.passed
        and probe.diverges
        and not negative.passed
        and report.converged
        and monotone
        and rc == 0
        and reported,
        f"probe diverges={probe.diverges}, negative control fails, "
        f"{report.iterations} iterations",
    )


def test_criterion_11_parameter_continuity():
    params = GParams(1.0, 2.0)
    grid = TimeGrid(1.0, 100)
    controls = build_control_lattice(params, grid, levels=2, pieces=1)
    ens = generate_ensemble(params, grid, controls, replicas=400, master_seed=SEED)
    alphas = [0.0, 0.05, 0.1, 0.2, 0.4]

    family, meta = builtin_family("affine_param", horizon=1.0)
    fit = parameter_continuity_study(family, meta, alphas, ens)
    slope = fit.constants["slope"]

    deg_family, deg_meta = builtin_family("affine_param", {"coeff_scale": 0.0}, horizon=1.0)
    deg = parameter_continuity_study(deg_family, deg_meta, alphas, ens)
    deg_err = abs(deg.constants["slope"] - 2.0)
    _criterion(
        11,
        abs(slope - 2.0) <= 0.1 and fit.passed and deg_err <= 1e-12,
        f"slope {slope:.4f}, degenerate slope error {deg_err:.1e}",
    )


def test_criterion_12_holder_exponent():
    params = GParams(1.0, 1.0)
    grid = TimeGrid(1.0, 4096)
    controls = build_control_lattice(params, grid, levels=1, pieces=1)
    ens = generate_ensemble(params, grid, controls, replicas=2000, master_seed=SEED)
    fit = holder_exponent(AdaptedProcess(ens.paths), 4.0, ens)
    exponent = fit.constants["exponent"]
    _criterion(12, 1.8 <= exponent <= 2.2, f"fitted lag exponent {exponent:.3f}")


def test_criterion_13_mean_square_continuity_halving():
    params = GParams(1.0, 2.0)
    family_name = "geometric"
    values = {}
    for steps in (500, 1000):
        grid = TimeGrid(1.0, steps)
        controls = build_control_lattice(params, grid, levels=2, pieces=1)
        ens = generate_ensemble(params, grid, controls, replicas=2000, master_seed=SEED)
        sol = direct_solve_ensemble(_problem(family_name, grid, params), ens, fast_path=True)
        values[steps] = float(np.max(msq_continuity_profile(sol, ens)[:, 2]))
    ratio = values[1000] / values[500]
    _criterion(13, 0.375 <= ratio <= 0.625, f"halving ratio {ratio:.3f}")


def test_criterion_14_end_to_end_determinism(tmp_path):
    def verify(out, threads):
        started = time.monotonic()
        r = subprocess.run(
            [
                sys.executable, "-m", "gvolterra.cli", "verify",
                "--out", str(out), "--seed", str(SEED), "--threads", str(threads),
            ],
            capture_output=True,
            text=True,
        )
        return r, time.monotonic() - started

    r1, t1 = verify(tmp_path / "a", 1)
    r2, t2 = verify(tmp_path / "b", 1)
    r3, _ = verify(tmp_path / "c", 8)
    same_bytes = (
        (tmp_path / "a" / "verify.json").read_bytes()
        == (tmp_path / "b" / "verify.json").read_bytes()
        == (tmp_path / "c" / "verify.json").read_bytes()
    )

    def manifest_no_clock(d):
        m = json.loads((d / "manifest.json").read_text())
        m.pop("wall_time_seconds")
        return m

    same_manifest = manifest_no_clock(tmp_path / "a") == manifest_no_clock(
        tmp_path / "c"
    )
    ok = (
        r1.returncode == r2.returncode == r3.returncode == 0
        and same_bytes
        and same_manifest
        and max(t1, t2) <= 120.0
    )
    _criterion(14, ok, f"byte-identical verify.json, {t1:.1f}s per run")

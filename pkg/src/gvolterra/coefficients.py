"""Kernel triples (b, h, sigma), forcing phi, and empirical hypothesis audits.

A coefficient family carries the three kernels of the Volterra equation plus
the forcing term, tagged with metadata describing which regularity class it
claims (time-varying Lipschitz, integral-Lipschitz with a concave modulus, or
parameter-Lipschitz) and the witnesses for that claim.  The audits sample the
claimed bounds; they can falsify a claim but never prove it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "CoefficientFamily",
    "HypothesisMetadata",
    "SamplerConfig",
    "AuditReport",
    "DivergenceProbe",
    "builtin_family",
    "audit_lipschitz",
    "audit_time_regularity",
    "audit_integral_lipschitz",
    "audit_parameter_lipschitz",
    "divergence_probe",
    "BUILTIN_FAMILIES",
]

TIME_VARYING_LIPSCHITZ = "time_varying_lipschitz"
INTEGRAL_LIPSCHITZ = "integral_lipschitz"
PARAMETER_LIPSCHITZ = "parameter_lipschitz"


@dataclass(frozen=True)
class CoefficientFamily:
    """Kernels b, h, sigma of (t, s, x) and forcing phi of (t).

    Kernels are numpy-vectorized in s and x; ``None`` means identically zero
    (solvers skip the term).  Parameterized families take a trailing alpha
    argument in every kernel and in phi; call :meth:`bind` to fix it.
    """

    name: str
    b: object = None
    h: object = None
    sigma: object = None
    phi: object = None
    parameterized: bool = False
    # kernels ignore the outer time argument; enables the solver's O(N)
    # running-sum fast path (opt-in, validated against the O(N^2) route)
    time_invariant: bool = False

    def phi_values(self, times: np.ndarray) -> np.ndarray:
        if self.phi is None:
            return np.zeros_like(np.asarray(times, dtype=float))
        out = np.asarray(self.phi(np.asarray(times, dtype=float)), dtype=float)
        return np.broadcast_to(out, np.shape(times)).astype(float)

    def bind(self, alpha: float) -> "CoefficientFamily":
        """Fix the parameter, producing a plain (t, s, x) family."""
        if not self.parameterized:
            raise ValueError(f"family {self.name!r} takes no parameter")
        a = float(alpha)

        def fix(fn):
            if fn is None:
                return None
            return lambda t, s, x, _fn=fn: _fn(t, s, x, a)

        phi = None
        if self.phi is not None:
            phi = lambda t, _fn=self.phi: _fn(t, a)
        return CoefficientFamily(
            name=f"{self.name}[alpha={a}]",
            b=fix(self.b),
            h=fix(self.h),
            sigma=fix(self.sigma),
            phi=phi,
            parameterized=False,
            time_invariant=self.time_invariant,
        )


@dataclass(frozen=True)
class HypothesisMetadata:
    """Declared regularity class plus the witnesses backing the claim."""

    klass: str
    # time-varying Lipschitz witnesses
    L_ts: object = None          # L(t, s)
    eps: float = 0.0
    eps_bar: float = 1.0
    K_fn: object = None          # K(t1, t2, s)
    rho: object = None           # time modulus, strictly increasing, rho(0)=0
    C_T: float = 1.0
    K_bar_fn: object = None      # optional sharper witness for sigma alone
    alpha_exp: float = None      # exponent > 1 paired with K_bar_fn
    # integral-Lipschitz witnesses
    L_const: float = None
    psi: object = None           # concave modulus on squared increments
    # parameter-Lipschitz witness
    L_bar: float = None

    def __post_init__(self):
        if self.klass not in (
            TIME_VARYING_LIPSCHITZ,
            INTEGRAL_LIPSCHITZ,
            PARAMETER_LIPSCHITZ,
        ):
            raise ValueError(f"unknown hypothesis class {self.klass!r}")
        if not 0.0 <= self.eps < self.eps_bar:
            raise ValueError(
                f"exponents must satisfy 0 <= eps < eps_bar, got "
                f"({self.eps}, {self.eps_bar})"
            )


@dataclass(frozen=True)
class SamplerConfig:
    """Randomized sample plan shared by the audits."""

    n_samples: int = 2000
    horizon: float = 1.0
    x_low: float = -2.0
    x_high: float = 2.0
    alpha_low: float = -1.0
    alpha_high: float = 1.0
    min_separation: float = 1e-12
    slack: float = 1e-9
    seed: int = 20240901
    quadrature_points: int = 257


@dataclass(frozen=True)
class AuditReport:
    passed: bool
    max_ratio: float
    violation: tuple = None      # worst offending sample, or None
    details: dict = field(default_factory=dict)


def _eval(fn, *args):
    if fn is None:
        return np.zeros(np.broadcast_shapes(*[np.shape(a) for a in args]))
    return np.asarray(fn(*args), dtype=float)


def _pairs(cfg: SamplerConfig, rng):
    t = rng.uniform(0.0, cfg.horizon, cfg.n_samples)
    s = rng.uniform(0.0, 1.0, cfg.n_samples) * t
    x = rng.uniform(cfg.x_low, cfg.x_high, cfg.n_samples)
    y = rng.uniform(cfg.x_low, cfg.x_high, cfg.n_samples)
    keep = np.abs(x - y) >= cfg.min_separation
    return t[keep], s[keep], x[keep], y[keep]


def audit_lipschitz(
    family: CoefficientFamily,
    metadata: HypothesisMetadata,
    config: SamplerConfig = SamplerConfig(),
) -> AuditReport:
    """Sample the Lipschitz bound |b^|+|h^|+|s^| <= L(t,s)|x-y| and the
    growth bound, reporting the worst ratio against the declared witness."""
    rng = np.random.default_rng(config.seed)
    t, s, x, y = _pairs(config, rng)
    L = _eval(metadata.L_ts, t, s)
    diff = (
        np.abs(_eval(family.b, t, s, x) - _eval(family.b, t, s, y))
        + np.abs(_eval(family.h, t, s, x) - _eval(family.h, t, s, y))
        + np.abs(_eval(family.sigma, t, s, x) - _eval(family.sigma, t, s, y))
    )
    denom = L * np.abs(x - y)
    ratios = np.where(diff == 0.0, 0.0, diff / np.where(denom == 0.0, np.nan, denom))
    ratios = np.where(np.isnan(ratios), np.inf, ratios)

    p = 2.0 + metadata.eps
    growth = (
        np.abs(_eval(family.b, t, s, x)) ** p
        + np.abs(_eval(family.h, t, s, x)) ** p
        + np.abs(_eval(family.sigma, t, s, x)) ** p
    )
    gdenom = L**p * (1.0 + np.abs(x) ** p)
    gratios = np.where(growth == 0.0, 0.0, growth / np.where(gdenom == 0.0, np.nan, gdenom))
    gratios = np.where(np.isnan(gratios), np.inf, gratios)

    worst = float(np.max(ratios, initial=0.0))
    gworst = float(np.max(gratios, initial=0.0))
    limit = 1.0 + config.slack
    passed = worst <= limit and gworst <= limit
    violation = None
    if not passed:
        idx = int(np.argmax(np.maximum(ratios, gratios)))
        violation = (float(t[idx]), float(s[idx]), float(x[idx]), float(y[idx]))
    return AuditReport(
        passed=passed,
        max_ratio=worst,
        violation=violation,
        details={"growth_max_ratio": gworst},
    )


def _quadrature(fn, a: float, b: float, n: int) -> float:
    xs = np.linspace(a, b, n)
    return float(np.trapezoid(fn(xs), xs))


def audit_time_regularity(
    family: CoefficientFamily,
    metadata: HypothesisMetadata,
    config: SamplerConfig = SamplerConfig(),
) -> AuditReport:
    """Sample the outer-time modulus bound with witness K and modulus rho, the
    aggregate quadrature bound, and (when declared) the sharper sigma witness."""
    rng = np.random.default_rng(config.seed)
    p = 2.0 + metadata.eps
    t1 = rng.uniform(0.0, config.horizon, config.n_samples)
    t2 = rng.uniform(0.0, 1.0, config.n_samples) * t1
    s = rng.uniform(0.0, 1.0, config.n_samples) * t2
    x = rng.uniform(config.x_low, config.x_high, config.n_samples)

    K = _eval(metadata.K_fn, t1, t2, s)
    diff = (
        np.abs(_eval(family.b, t1, s, x) - _eval(family.b, t2, s, x)) ** p
        + np.abs(_eval(family.h, t1, s, x) - _eval(family.h, t2, s, x)) ** p
        + np.abs(_eval(family.sigma, t1, s, x) - _eval(family.sigma, t2, s, x)) ** p
    )
    denom = K**p * (1.0 + np.abs(x) ** p)
    ratios = np.where(diff == 0.0, 0.0, diff / np.where(denom == 0.0, np.nan, denom))
    ratios = np.where(np.isnan(ratios), np.inf, ratios)
    worst = float(np.max(ratios, initial=0.0))

    # aggregate bound: int_0^{t2} K^p(t1,t2,s) ds <= C_T * rho(t1 - t2)
    agg_worst = 0.0
    n_agg = min(64, config.n_samples)
    for i in range(n_agg):
        a, b_ = float(t1[i]), float(t2[i])
        if b_ <= 0.0 or a == b_:
            continue
        integral = _quadrature(
            lambda ss: _eval(metadata.K_fn, a, b_, ss) ** p,
            0.0,
            b_,
            config.quadrature_points,
        )
        bound = metadata.C_T * float(_eval(metadata.rho, np.array(a - b_)))
        if integral > 0.0:
            agg_worst = max(agg_worst, integral / bound if bound > 0.0 else math.inf)

    bar_worst = 0.0
    if metadata.K_bar_fn is not None and metadata.alpha_exp is not None:
        for i in range(n_agg):
            a, b_ = float(t1[i]), float(t2[i])
            if b_ <= 0.0 or a == b_:
                continue
            integral = _quadrature(
                lambda ss: _eval(metadata.K_bar_fn, a, b_, ss) ** p,
                0.0,
                b_,
                config.quadrature_points,
            )
            bound = metadata.C_T * abs(a - b_) ** metadata.alpha_exp
            if integral > 0.0:
                bar_worst = max(bar_worst, integral / bound if bound > 0.0 else math.inf)

    limit = 1.0 + config.slack
    passed = worst <= limit and agg_worst <= limit and bar_worst <= limit
    violation = None
    if worst > limit:
        idx = int(np.argmax(ratios))
        violation = (float(t1[idx]), float(t2[idx]), float(s[idx]), float(x[idx]))
    return AuditReport(
        passed=passed,
        max_ratio=worst,
        violation=violation,
        details={"aggregate_max_ratio": agg_worst, "sigma_witness_max_ratio": bar_worst},
    )


@dataclass(frozen=True)
class DivergenceProbe:
    total: float
    partial_sums: np.ndarray
    diverges: bool
    threshold: float
    k_max: int


def divergence_probe(
    psi,
    k_max: int = 60,
    threshold: float = 10.0,
    rel_growth_min: float = 0.05,
    points_per_block: int = 129,
) -> DivergenceProbe:
    """Dyadic-block quadrature of int du/psi(u) near zero.

    Sums int_{2^-(k+1)}^{2^-k} du/psi(u) for k = 0..k_max.  The integral is
    declared divergent when the partial sums either exceed `threshold` or are
    still growing by at least `rel_growth_min` (relative) over the second half
    of the blocks.  Moduli whose blocks decay geometrically (e.g. sqrt(u))
    are flagged convergent; harmonically decaying blocks keep growing.
    """
    sums = np.empty(k_max + 1)
    acc = 0.0
    for k in range(k_max + 1):
        a, b = 2.0 ** (-(k + 1)), 2.0 ** (-k)
        xs = np.geomspace(a, b, points_per_block)
        acc += float(np.trapezoid(1.0 / np.asarray(psi(xs), dtype=float), xs))
        sums[k] = acc
    half = sums[k_max // 2]
    total = sums[-1]
    growing = half > 0.0 and (total - half) >= rel_growth_min * half
    return DivergenceProbe(
        total=total,
        partial_sums=sums,
        diverges=bool(total >= threshold or growing),
        threshold=threshold,
        k_max=k_max,
    )


def audit_integral_lipschitz(
    family: CoefficientFamily,
    metadata: HypothesisMetadata,
    config: SamplerConfig = SamplerConfig(slack=1e-3),
    probe_kwargs: dict = None,
) -> AuditReport:
    """Sample the squared-increment bound against the concave modulus psi,
    check concavity by midpoint test, and run the divergence probe."""
    rng = np.random.default_rng(config.seed)
    t, s, x, y = _pairs(config, rng)
    diff2 = (
        (_eval(family.b, t, s, x) - _eval(family.b, t, s, y)) ** 2
        + (_eval(family.h, t, s, x) - _eval(family.h, t, s, y)) ** 2
        + (_eval(family.sigma, t, s, x) - _eval(family.sigma, t, s, y)) ** 2
    )
    denom = np.asarray(metadata.psi((x - y) ** 2), dtype=float)
    ratios = np.where(diff2 == 0.0, 0.0, diff2 / np.where(denom == 0.0, np.nan, denom))
    ratios = np.where(np.isnan(ratios), np.inf, ratios)
    worst = float(np.max(ratios, initial=0.0))

    # midpoint concavity test on a log-spaced grid
    u = np.geomspace(1e-12, 4.0, 200)
    v = u[::-1].copy()
    mid = np.asarray(metadata.psi((u + v) / 2.0), dtype=float)
    avg = (np.asarray(metadata.psi(u), dtype=float) + np.asarray(metadata.psi(v), dtype=float)) / 2.0
    concave = bool(np.all(mid >= avg * (1.0 - 1e-12)))
    increasing = bool(
        np.all(np.diff(np.asarray(metadata.psi(np.geomspace(1e-12, 4.0, 200)), dtype=float)) >= 0.0)
    )

    probe = divergence_probe(metadata.psi, **(probe_kwargs or {}))

    limit = 1.0 + config.slack
    passed = worst <= limit and concave and increasing and probe.diverges
    violation = None
    if worst > limit:
        idx = int(np.argmax(ratios))
        violation = (float(t[idx]), float(s[idx]), float(x[idx]), float(y[idx]))
    return AuditReport(
        passed=passed,
        max_ratio=worst,
        violation=violation,
        details={
            "concave": concave,
            "increasing": increasing,
            "divergence": probe,
        },
    )


def audit_parameter_lipschitz(
    family: CoefficientFamily,
    metadata: HypothesisMetadata,
    config: SamplerConfig = SamplerConfig(),
) -> AuditReport:
    """Sample |phi_a - phi_b| + kernel differences against L_bar |a - b|."""
    if not family.parameterized:
        raise ValueError(f"family {family.name!r} is not parameterized")
    rng = np.random.default_rng(config.seed)
    t = rng.uniform(0.0, config.horizon, config.n_samples)
    s = rng.uniform(0.0, 1.0, config.n_samples) * t
    x = rng.uniform(config.x_low, config.x_high, config.n_samples)
    a = rng.uniform(config.alpha_low, config.alpha_high, config.n_samples)
    b_ = rng.uniform(config.alpha_low, config.alpha_high, config.n_samples)
    keep = np.abs(a - b_) >= config.min_separation
    t, s, x, a, b_ = t[keep], s[keep], x[keep], a[keep], b_[keep]

    def dcoef(fn):
        if fn is None:
            return 0.0
        return np.abs(np.asarray(fn(t, s, x, a), dtype=float) - np.asarray(fn(t, s, x, b_), dtype=float))

    diff = dcoef(family.b) + dcoef(family.h) + dcoef(family.sigma)
    if family.phi is not None:
        diff = diff + np.abs(
            np.asarray(family.phi(t, a), dtype=float) - np.asarray(family.phi(t, b_), dtype=float)
        )
    denom = metadata.L_bar * np.abs(a - b_)
    ratios = np.where(diff == 0.0, 0.0, diff / np.where(denom == 0.0, np.nan, denom))
    ratios = np.where(np.isnan(ratios), np.inf, ratios)
    worst = float(np.max(ratios, initial=0.0))
    limit = 1.0 + config.slack
    passed = worst <= limit
    violation = None
    if not passed:
        idx = int(np.argmax(ratios))
        violation = (float(t[idx]), float(s[idx]), float(x[idx]), float(a[idx]), float(b_[idx]))
    return AuditReport(passed=passed, max_ratio=worst, violation=violation)


# ---------------------------------------------------------------------------
# built-in families


def _const_phi(value: float):
    return lambda t: np.full_like(np.asarray(t, dtype=float), value)


def _log_slope_fn(u0: float):
    """Odd continuation of m(u) = u*(1 - ln u) on (0, u0], affine beyond.

    The continuation matches value and slope at u0, keeping m continuous,
    increasing, and odd; m(0) = 0.
    """
    slope = -math.log(u0)
    offset = u0 * (1.0 - math.log(u0)) - slope * u0

    def m(x):
        x = np.asarray(x, dtype=float)
        u = np.abs(x)
        small = (u > 0.0) & (u <= u0)
        out = np.zeros_like(u)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(small, u * (1.0 - np.log(np.where(u > 0, u, 1.0))), out)
        out = np.where(u > u0, slope * u + offset, out)
        return np.sign(x) * out

    return m


def _log_psi(c: float, u0: float):
    """Concave increasing modulus c*u*(1 - ln u) on (0, u0], affine beyond."""
    slope = c * (-math.log(u0))
    offset = c * u0 * (1.0 - math.log(u0)) - slope * u0

    def psi(u):
        u = np.asarray(u, dtype=float)
        small = (u > 0.0) & (u <= u0)
        with np.errstate(divide="ignore", invalid="ignore"):
            core = np.where(small, c * u * (1.0 - np.log(np.where(u > 0, u, 1.0))), 0.0)
        return np.where(u > u0, slope * u + offset, core)

    return psi


def _zero(params, horizon):
    family = CoefficientFamily(
        name="zero", phi=_const_phi(params.get("phi0", 0.0)), time_invariant=True
    )
    meta = HypothesisMetadata(
        klass=TIME_VARYING_LIPSCHITZ,
        L_ts=lambda t, s: np.zeros(np.broadcast_shapes(np.shape(t), np.shape(s))),
        eps=0.0,
        eps_bar=2.0,
        K_fn=lambda t1, t2, s: np.zeros(np.broadcast_shapes(np.shape(t1), np.shape(s))),
        rho=lambda u: np.asarray(u, dtype=float),
        C_T=horizon,
    )
    return family, meta


def _linear_ode(params, horizon):
    family = CoefficientFamily(
        name="linear_ode",
        b=lambda t, s, x: np.asarray(x, dtype=float) + 0.0 * np.asarray(s),
        phi=_const_phi(params.get("phi0", 1.0)),
        time_invariant=True,
    )
    meta = HypothesisMetadata(
        klass=TIME_VARYING_LIPSCHITZ,
        L_ts=lambda t, s: np.ones(np.broadcast_shapes(np.shape(t), np.shape(s))),
        eps=0.0,
        eps_bar=2.0,
        K_fn=lambda t1, t2, s: np.zeros(np.broadcast_shapes(np.shape(t1), np.shape(s))),
        rho=lambda u: np.asarray(u, dtype=float),
        C_T=horizon,
    )
    return family, meta


def _conv_cosh(params, horizon):
    family = CoefficientFamily(
        name="conv_cosh",
        b=lambda t, s, x: (np.asarray(t, dtype=float) - np.asarray(s, dtype=float))
        * np.asarray(x, dtype=float),
        phi=_const_phi(params.get("phi0", 1.0)),
    )
    meta = HypothesisMetadata(
        klass=TIME_VARYING_LIPSCHITZ,
        L_ts=lambda t, s: np.asarray(t, dtype=float) - np.asarray(s, dtype=float),
        eps=0.0,
        eps_bar=2.0,
        K_fn=lambda t1, t2, s: np.abs(np.asarray(t1, dtype=float) - np.asarray(t2, dtype=float))
        + 0.0 * np.asarray(s),
        rho=lambda u: np.asarray(u, dtype=float) ** 2,
        C_T=horizon,
    )
    return family, meta


def _geometric(params, horizon):
    family = CoefficientFamily(
        name="geometric",
        sigma=lambda t, s, x: np.asarray(x, dtype=float) + 0.0 * np.asarray(s),
        phi=_const_phi(params.get("phi0", 1.0)),
        time_invariant=True,
    )
    meta = HypothesisMetadata(
        klass=TIME_VARYING_LIPSCHITZ,
        L_ts=lambda t, s: np.ones(np.broadcast_shapes(np.shape(t), np.shape(s))),
        eps=0.0,
        eps_bar=2.0,
        K_fn=lambda t1, t2, s: np.zeros(np.broadcast_shapes(np.shape(t1), np.shape(s))),
        rho=lambda u: np.asarray(u, dtype=float),
        C_T=horizon,
    )
    return family, meta


def _singular_kernel(params, horizon):
    gamma = float(params.get("gamma", 0.25))
    eps_bar = float(params.get("eps_bar", 1.0))
    clamp = float(params.get("diagonal_clamp", 1e-12))
    if gamma * (2.0 + eps_bar) >= 1.0:
        raise ValueError(
            f"singular_kernel requires gamma*(2+eps_bar) < 1, got "
            f"{gamma * (2.0 + eps_bar)}"
        )

    def kernel(t, s):
        gap = np.maximum(np.asarray(t, dtype=float) - np.asarray(s, dtype=float), clamp)
        return gap ** (-gamma)

    def coef(t, s, x):
        return kernel(t, s) * np.asarray(x, dtype=float)

    family = CoefficientFamily(
        name="singular_kernel",
        b=coef,
        sigma=coef,
        phi=_const_phi(params.get("phi0", 1.0)),
    )
    meta = HypothesisMetadata(
        klass=TIME_VARYING_LIPSCHITZ,
        L_ts=lambda t, s: 2.0 * kernel(t, s),
        eps=0.0,
        eps_bar=eps_bar,
        K_fn=lambda t1, t2, s: 2.0 * np.abs(kernel(t1, s) - kernel(t2, s)),
        rho=lambda u: np.asarray(u, dtype=float) ** (1.0 - 2.0 * gamma),
        C_T=max(16.0, 8.0 * horizon),
    )
    return family, meta


def _log_modulus(params, horizon):
    u0 = float(params.get("u0", math.exp(-1.0)))
    c = float(params.get("modulus_scale", 16.0))
    m = _log_slope_fn(u0)
    family = CoefficientFamily(
        name="log_modulus",
        b=lambda t, s, x: m(x) + 0.0 * np.asarray(s),
        phi=_const_phi(params.get("phi0", 0.5)),
        time_invariant=True,
    )
    meta = HypothesisMetadata(
        klass=INTEGRAL_LIPSCHITZ,
        L_const=math.sqrt(2.0),
        psi=_log_psi(c, u0),
        eps=0.0,
        eps_bar=1.0,
    )
    return family, meta


def _affine_param(params, horizon):
    scale = float(params.get("coeff_scale", 1.0))

    sigma = None
    if scale != 0.0:
        sigma = lambda t, s, x, a: scale * (np.asarray(x, dtype=float) + a) + 0.0 * np.asarray(s)

    family = CoefficientFamily(
        name="affine_param",
        sigma=sigma,
        phi=lambda t, a: np.full_like(np.asarray(t, dtype=float), a),
        parameterized=True,
        time_invariant=True,
    )
    meta = HypothesisMetadata(
        klass=PARAMETER_LIPSCHITZ,
        L_const=math.sqrt(2.0) * scale if scale else 0.0,
        L_bar=1.0 + scale,
        eps=0.0,
        eps_bar=1.0,
    )
    return family, meta


BUILTIN_FAMILIES = {
    "zero": _zero,
    "linear_ode": _linear_ode,
    "conv_cosh": _conv_cosh,
    "geometric": _geometric,
    "singular_kernel": _singular_kernel,
    "log_modulus": _log_modulus,
    "affine_param": _affine_param,
}


def builtin_family(name: str, parameters: dict = None, horizon: float = 1.0):
    """Named fixture with its declared hypothesis metadata."""
    try:
        builder = BUILTIN_FAMILIES[name]
    except KeyError:
        raise ValueError(
            f"unknown family {name!r}; available: {sorted(BUILTIN_FAMILIES)}"
        ) from None
    return builder(dict(parameters or {}), horizon)

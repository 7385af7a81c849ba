"""Model parameters and derived constants.

Everything downstream (conjugate utilities, free boundary, policies,
simulation) is a closed-form expression in a handful of constants derived
from the economic parameters: the Sharpe ratio theta, the mortality-adjusted
discount rate rho, the roots n1/n2 of the characteristic quadratic of the
dual ODE, the dual exponents p, p1', p2', and the region thresholds and
coefficients of the piecewise conjugate utility.  This module validates raw
parameters and computes those constants once; all other modules treat them
as immutable inputs.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, replace, asdict

__all__ = [
    "ModelParams",
    "DerivedConstants",
    "Regime",
    "PRESETS",
    "validate",
    "derive_constants",
    "stopping_regime",
    "load_params",
    "params_to_dict",
    "params_from_dict",
]


# =====================================================================
# Parameter container
# =====================================================================

@dataclass(frozen=True)
class ModelParams:
    r: float        # risk-free rate (1/year)
    mu: float       # risky drift (1/year)
    sigma: float    # volatility (1/sqrt(year))
    delta: float    # force of mortality (1/year)
    k: float        # annuity conversion rate (1/year)
    w: float        # wage rate (currency/year)
    b_max: float    # maximum labor rate, in [0, 1]
    alpha: float    # consumption elasticity (> 0)
    beta: float     # leisure elasticity (> 0)
    p1: float       # running risk aversion (> 1)
    p2: float       # terminal risk aversion (> 1)
    v1: float       # running-utility weight (> 0)
    v2: float       # stopping-utility weight (> 0)


PARAM_KEYS = ("r", "mu", "sigma", "delta", "k", "w", "b_max",
              "alpha", "beta", "p1", "p2", "v1", "v2")

# Base calibration: retiree with wage 100, annuity rate 9.5%, equal
# consumption/leisure elasticities.  The named presets vary only the labor
# cap and the leisure elasticity.
_BASE = ModelParams(r=0.035, mu=0.08, sigma=0.15, delta=0.01, k=0.095,
                    w=100.0, b_max=0.5, alpha=0.5, beta=0.5,
                    p1=2.0, p2=2.0, v1=0.01, v2=0.1)

PRESETS = {
    "base": _BASE,
    "m1": replace(_BASE, b_max=0.0),              # no labor income
    "m2": replace(_BASE, b_max=0.25, beta=1.0),   # low labor cap, leisure-heavy
    "m3": _BASE,                                  # labor cap 0.5
}


def validate(raw: ModelParams) -> ModelParams:
    """Check every parameter constraint, reporting the first violation by name.

    Returns the (unchanged) params on success; raises ``ValueError`` whose
    message names the offending constraint, e.g. ``"k must exceed r"``.
    """
    checks = [
        (raw.r > 0, "r must be positive"),
        (raw.sigma > 0, "sigma must be positive"),
        (raw.mu > raw.r, "mu must exceed r"),
        (raw.k > raw.r, "k must exceed r"),
        (raw.delta >= 0, "delta must be non-negative"),
        (raw.w > 0, "w must be positive"),
        (0.0 <= raw.b_max <= 1.0, "b_max must lie in [0, 1]"),
        (raw.alpha > 0, "alpha must be positive"),
        (raw.beta > 0, "beta must be positive"),
        (raw.p1 > 1, "p1 must exceed 1"),
        (raw.p2 > 1, "p2 must exceed 1"),
        (raw.v1 > 0, "v1 must be positive"),
        (raw.v2 > 0, "v2 must be positive"),
    ]
    for ok, msg in checks:
        if not ok:
            raise ValueError(msg)
    for key in PARAM_KEYS:
        if not math.isfinite(getattr(raw, key)):
            raise ValueError(f"{key} must be finite")
    return raw


def params_to_dict(params: ModelParams) -> dict:
    return {k: getattr(params, k) for k in PARAM_KEYS}


def params_from_dict(doc: dict) -> ModelParams:
    """Build params from a JSON-style document with exactly the known keys."""
    unknown = set(doc) - set(PARAM_KEYS)
    if unknown:
        raise ValueError(f"unknown parameter keys: {sorted(unknown)}")
    missing = set(PARAM_KEYS) - set(doc)
    if missing:
        raise ValueError(f"missing parameter keys: {sorted(missing)}")
    return validate(ModelParams(**{k: float(doc[k]) for k in PARAM_KEYS}))


def load_params(preset: str = "base", overrides: dict | None = None) -> ModelParams:
    """Resolve a named preset plus ``key=value`` overrides into validated params."""
    try:
        params = PRESETS[preset]
    except KeyError:
        raise ValueError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    if overrides:
        unknown = set(overrides) - set(PARAM_KEYS)
        if unknown:
            raise ValueError(f"unknown parameter keys: {sorted(unknown)}")
        params = replace(params, **{k: float(v) for k, v in overrides.items()})
    return validate(params)


# =====================================================================
# Derived constants
# =====================================================================

@dataclass(frozen=True)
class DerivedConstants:
    theta: float      # Sharpe ratio (mu - r)/sigma
    rho: float        # effective discount rate r + delta
    n1: float         # positive root of n(x), n1 > 1
    n2: float         # negative root of n(x)
    p: float          # dual exponent of the flexible (interior-leisure) region
    p1p: float        # dual exponent p1' of the leisure-capped regions
    p2p: float        # dual exponent p2' of the stopped utility
    n_p2p: float      # n(p2') — appears in the free-boundary integrand
    l_min: float      # minimum leisure 1 - b_max
    y_tilde0: float   # unit-weight lower region threshold
    y_bar0: float     # unit-weight upper region threshold (inf when b_max = 1)
    y_tilde: float    # weight-scaled threshold v1 * y_tilde0
    y_bar: float      # weight-scaled threshold v1 * y_bar0
    A_tilde: float    # weighted conjugate coefficient, full-leisure region
    A_coef: float     # weighted conjugate coefficient, flexible region
    A_bar: float      # weighted conjugate coefficient, capped-leisure region
    c_bar: float      # consumption at the upper region edge, (alpha w / beta) l_min
    c_tilde: float    # consumption at the lower region edge, alpha w / beta

    def n_of(self, x: float) -> float:
        """The characteristic quadratic n(x) = θ²x²/2 + (ρ−r−θ²/2)x − ρ."""
        half = 0.5 * self.theta**2
        return half * x * x + (self._delta - half) * x - self.rho

    # rho - r, stashed so n_of needs no params; set by derive_constants
    _delta: float = 0.0


def derive_constants(params: ModelParams) -> DerivedConstants:
    """Derive every constant of the closed-form solution.

    The quadratic n(x) = ½θ²x² + (ρ−r−½θ²)x − ρ has roots n1 > 1 > 0 > n2.
    The running utility's conjugate has up to three power-law regions split at
    thresholds ỹ₀ = α(αw/β)^{α(1−p₁)−1} and ȳ₀ = ỹ₀ l̄^{(α+β)(1−p₁)−1}
    (unit weights).  Folding in the running weight via
    sup[v₁U₁(·) − (c+wl)y] = v₁Ū₁(y/v₁) scales the thresholds by v₁ and each
    coefficient by v₁^{1−exponent}; the wage-linear terms −wy, −wl̄y are
    invariant.  Degenerate labor caps: b_max = 0 collapses the three regions
    to the full-leisure one (ȳ₀ = ỹ₀, Ā = Ã, β inert); b_max = 1 sends
    ȳ₀ → ∞ (the capped region is empty and Ā is −inf, never evaluated).
    """
    v = validate(params)
    theta = (v.mu - v.r) / v.sigma
    rho = v.r + v.delta
    half = 0.5 * theta * theta
    b = rho - v.r - half
    disc = math.sqrt(b * b + 4.0 * half * rho)
    n1 = (-b + disc) / (2.0 * half)
    n2 = (-b - disc) / (2.0 * half)

    m = (v.alpha + v.beta) * (1.0 - v.p1)      # joint exponent, < 0
    a1 = v.alpha * (1.0 - v.p1)                # consumption exponent, < 0
    p = m / (m - 1.0)
    p1p = a1 / (a1 - 1.0)
    p2p = (v.p2 - 1.0) / v.p2
    n_p2p = half * p2p * p2p + b * p2p - rho

    l_min = 1.0 - v.b_max
    y_tilde0 = v.alpha * (v.alpha * v.w / v.beta) ** (a1 - 1.0)
    A_tilde = v.v1 ** (1.0 - p1p) * (-(v.alpha ** (1.0 - p1p)) / p1p)
    ab = v.alpha + v.beta
    A_coef = v.v1 ** (1.0 - p) * (-(ab / p)
                                  * v.alpha ** (-(v.alpha / ab) * p)
                                  * v.beta ** (-(v.beta / ab) * p)
                                  * v.w ** ((v.beta / ab) * p))
    if v.b_max == 0.0:
        y_bar0 = y_tilde0
        A_bar = A_tilde
    elif l_min == 0.0:
        y_bar0 = math.inf
        A_bar = -math.inf
    else:
        y_bar0 = y_tilde0 * l_min ** (m - 1.0)
        A_bar = A_tilde * l_min ** (-(v.beta / v.alpha) * p1p)

    return DerivedConstants(
        theta=theta, rho=rho, n1=n1, n2=n2,
        p=p, p1p=p1p, p2p=p2p, n_p2p=n_p2p, l_min=l_min,
        y_tilde0=y_tilde0, y_bar0=y_bar0,
        y_tilde=v.v1 * y_tilde0, y_bar=v.v1 * y_bar0,
        A_tilde=A_tilde, A_coef=A_coef, A_bar=A_bar,
        c_bar=(v.alpha * v.w / v.beta) * l_min,
        c_tilde=v.alpha * v.w / v.beta,
        _delta=v.delta,
    )


# =====================================================================
# Regime
# =====================================================================

class Regime(enum.Enum):
    STOPPING = "Stopping"   # a finite annuitization boundary exists
    RUINED = "Ruined"       # no boundary: the agent never annuitizes

    @property
    def tag(self) -> str:
        return self.value


def stopping_regime(dc: DerivedConstants, params: ModelParams) -> Regime:
    """Classify the problem: a free boundary exists iff α(1−p₁) > 1−p₂.

    The same condition reads p1' < p2' in dual exponents; both are computed
    and cross-checked (u ↦ u/(u−1) is order-reversing on u < 0 < 1).
    """
    primal = params.alpha * (1.0 - params.p1) > 1.0 - params.p2
    dual = dc.p1p < dc.p2p
    if primal != dual:  # pragma: no cover - algebra guarantees agreement
        raise AssertionError("regime conditions disagree: "
                             f"alpha(1-p1)>1-p2 is {primal}, p1p<p2p is {dual}")
    return Regime.STOPPING if primal else Regime.RUINED


def manifest_dict(params: ModelParams, dc: DerivedConstants) -> dict:
    """Serializable snapshot of inputs and derived constants for run manifests."""
    d = asdict(dc)
    d.pop("_delta", None)
    return {"params": params_to_dict(params), "derived": d}


def dumps_params(params: ModelParams) -> str:
    return json.dumps(params_to_dict(params), indent=2, sort_keys=True)

"""Free-boundary solver for the dual optimal-stopping problem.

The dual problem replaces wealth with a shadow price Y that follows
dY = (rho - r) Y dt - theta Y dB.  Its value function phi solves a
variational inequality: in the continuation region the ODE

    -rho*phi + (rho - r)*y*phi' + (theta^2/2)*y^2*phi'' + R(y) = 0

holds with running reward R(y) (the conjugate of the weighted running
utility), and at the free boundary y* the value pastes smoothly onto the
obstacle (1/rho)*Ubar2(rho*y) - (w/r)*y.  Because R is piecewise power,
everything is closed form: y* is the root of a one-dimensional integral
equation F(y) = 0, phi is a combination of y^{n1}, y^{n2} and explicit
power integrals, and wealth is recovered from x = -phi'(y) - w/r.

Seam convention of the reward
-----------------------------
``dual_reward`` assembles R(y) from the weighted conjugate coefficients
(A_tilde, A_coef, A_bar).  With ``exact_conjugate=True`` its regions are
split at the weight-scaled thresholds y_tilde = v1*y_tilde0, y_bar =
v1*y_bar0, making R the exact convex conjugate of the weighted utility —
continuous at the seams and dominating v1*U1(c,l) - (c+wl)y everywhere.
With the default ``exact_conjugate=False`` the regions are split at the
unit-weight thresholds y_tilde0, y_bar0 instead.  The default matches the
reference solutions for the named presets (x* = 1409.93 / 1613.22 / 1855.29
for m1/m2/m3, and the published parameter sweeps); the exact conjugate
yields larger critical wealth whenever more than one region is active
(m2 ~ 1865.6, m3 ~ 2335.7).  Both variants are internally consistent
solutions of the variational inequality for their own reward; only the
exact variant is additionally a true conjugate.  The two agree whenever
b_max = 0 (single region).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .model import (ModelParams, DerivedConstants, Regime,
                    derive_constants, stopping_regime)
from . import dual_utility as du

__all__ = [
    "RegimeError",
    "PiecewiseReward",
    "DualSolution",
    "dual_reward",
    "ubar_combined",
    "find_y0",
    "tail_integral",
    "F",
    "solve_free_boundary",
    "ruined_solution",
    "closed_form_y_star_no_labor",
    "phi",
    "phi_prime",
    "phi_second",
    "obstacle",
    "obstacle_prime",
    "wealth_of_shadow",
    "shadow_of_wealth",
]

_BRENT_RTOL = 4.0 * np.finfo(float).eps


class RegimeError(RuntimeError):
    """Raised when a stopping-boundary quantity is requested in the ruined regime."""


def _as_array(y):
    arr = np.asarray(y, dtype=float)
    return arr, arr.ndim == 0


def _ret(arr, scalar):
    return float(arr) if scalar else arr


# =====================================================================
# Piecewise power reward
# =====================================================================

def _power_integral(terms, a, b, n):
    """sum_j c_j * int_a^b z^{q_j - n - 1} dz, vectorized in (a, b), a <= b.

    Upper limit may be +inf provided every exponent satisfies q_j < n.
    No q_j ever equals n for the rewards built here (exponents lie in
    (0, 1] while n is either > 1 or < 0), so the log case cannot occur.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    total = np.zeros(np.broadcast(a, b).shape)
    b_inf = np.isinf(b)
    b_safe = np.where(b_inf, 1.0, b)
    for coef, q in terms:
        e = q - n
        if e == 0.0:
            raise ValueError("logarithmic antiderivative case (q == n)")
        if e > 0.0 and np.any(b_inf):
            raise ValueError("improper tail diverges (exponent q >= n)")
        top = np.where(b_inf, 0.0, b_safe ** e)
        total = total + coef * (top - a ** e) / e
    return total


@dataclass(frozen=True)
class PiecewiseReward:
    """Piecewise sum-of-powers function of y > 0.

    ``pieces`` is a tuple of (lo, hi, terms, tag) with terms a tuple of
    (coefficient, exponent) pairs and tag one of "full" / "flex" / "capped"
    naming which leisure branch generated the piece.  Region closure follows
    the conjugate's indicator conventions: the full-leisure piece owns its
    upper seam, the capped piece owns its lower seam.
    """
    pieces: tuple
    exact_conjugate: bool

    @property
    def seams(self):
        return tuple(lo for lo, _hi, _t, _tag in self.pieces[1:])

    def _select(self, y_arr, per_piece):
        """Apply per-piece values with the closure conventions above."""
        out = per_piece(self.pieces[0])
        for piece in self.pieces[1:]:
            lo, _hi, _terms, tag = piece
            mask = y_arr >= lo if tag == "capped" else y_arr > lo
            out = np.where(mask, per_piece(piece), out)
        return out

    def __call__(self, y):
        y_arr, scalar = _as_array(y)
        val = self._select(
            y_arr,
            lambda pc: sum(c * y_arr ** q for c, q in pc[2]))
        return _ret(val, scalar)

    def derivative(self, y):
        y_arr, scalar = _as_array(y)
        val = self._select(
            y_arr,
            lambda pc: sum(c * q * y_arr ** (q - 1.0) for c, q in pc[2]))
        return _ret(val, scalar)

    def integral(self, a, b, n):
        """int_a^b R(z) z^{-n-1} dz in closed form; a, b scalar or array."""
        a_arr = np.asarray(a, dtype=float)
        b_arr = np.asarray(b, dtype=float)
        out = np.zeros(np.broadcast(a_arr, b_arr).shape)
        for lo, hi, terms, _tag in self.pieces:
            s = np.maximum(a_arr, lo)
            t = np.minimum(b_arr, hi)
            live = s < t
            if not np.any(live):
                continue
            s_safe = np.where(live, s, 1.0)
            t_safe = np.where(live, t, 1.0)
            out = out + np.where(live, _power_integral(terms, s_safe, t_safe, n), 0.0)
        if out.ndim == 0 and np.isscalar(a) and np.isscalar(b):
            return float(out)
        return out

    def flow(self, y, params: ModelParams, dc: DerivedConstants):
        """Consumption/leisure pair (c, l) consistent with this reward.

        Per piece, -R'(y) = c + w*l with the branch-optimal controls: the
        pinned-leisure branches invert the consumption first-order condition
        and the flexible branch rides c = (alpha*w/beta)*l.  When the reward
        is the exact conjugate this coincides with the policy maps
        (inv_marginal_consumption / inv_marginal_leisure); otherwise it is
        the decomposition the solver's own phi and wealth map embody.
        """
        y_arr, scalar = _as_array(y)
        a1 = params.alpha * (1.0 - params.p1)
        m = (params.alpha + params.beta) * (1.0 - params.p1)
        inv_exp = 1.0 / (a1 - 1.0)

        def c_of(piece):
            tag = piece[3]
            if tag == "full":
                return (y_arr / (params.v1 * params.alpha)) ** inv_exp
            if tag == "flex":
                return dc.c_tilde * (y_arr / dc.y_tilde) ** (1.0 / (m - 1.0))
            lever = params.v1 * params.alpha * dc.l_min ** (params.beta * (1.0 - params.p1))
            return (y_arr / lever) ** inv_exp

        def l_of(piece):
            tag = piece[3]
            if tag == "full":
                return np.ones_like(y_arr)
            if tag == "flex":
                return (y_arr / dc.y_tilde) ** (1.0 / (m - 1.0))
            return np.full_like(y_arr, dc.l_min)

        c = self._select(y_arr, c_of)
        l = self._select(y_arr, l_of)
        return _ret(c, scalar), _ret(l, scalar)


def dual_reward(params: ModelParams, dc: DerivedConstants | None = None,
                *, exact_conjugate: bool = False) -> PiecewiseReward:
    """Assemble the solver's running reward R(y).  See the module docstring
    for the seam convention controlled by ``exact_conjugate``."""
    if dc is None:
        dc = derive_constants(params)
    if params.b_max == 0.0:
        pieces = ((0.0, math.inf,
                   ((dc.A_tilde, dc.p1p), (-params.w, 1.0)), "full"),)
        return PiecewiseReward(pieces, exact_conjugate)
    ta = dc.y_tilde if exact_conjugate else dc.y_tilde0
    tb = dc.y_bar if exact_conjugate else dc.y_bar0
    pieces = [(0.0, ta, ((dc.A_tilde, dc.p1p), (-params.w, 1.0)), "full")]
    if math.isinf(tb):
        pieces.append((ta, math.inf, ((dc.A_coef, dc.p),), "flex"))
    else:
        pieces.append((ta, tb, ((dc.A_coef, dc.p),), "flex"))
        pieces.append((tb, math.inf,
                       ((dc.A_bar, dc.p1p), (-params.w * dc.l_min, 1.0)), "capped"))
    return PiecewiseReward(tuple(pieces), exact_conjugate)


# =====================================================================
# Free-boundary equation
# =====================================================================

def _kappa(params: ModelParams, dc: DerivedConstants) -> float:
    """Coefficient of y^{p2'} in (n(p2')/rho) * Ubar2(rho*y); positive."""
    coef = -(params.v2 ** (1.0 - dc.p2p)) / dc.p2p
    return dc.n_p2p / dc.rho * coef * (dc.rho / params.k) ** dc.p2p


def ubar_combined(y, params: ModelParams, dc: DerivedConstants | None = None,
                  reward: PiecewiseReward | None = None):
    """Ubar(y) = R(y) + (n(p2')/rho)*Ubar2(rho*y) + w*y.

    Negative on (0, y0), positive beyond; its sign drives both the bracket
    for y0 and the monotonicity of F.  For b_max = 0 the -w*y inside R
    cancels the +w*y term exactly.
    """
    if dc is None:
        dc = derive_constants(params)
    if reward is None:
        reward = dual_reward(params, dc)
    y_arr, scalar = _as_array(y)
    val = reward(y_arr) + _kappa(params, dc) * y_arr ** dc.p2p + params.w * y_arr
    return _ret(val, scalar)


def find_y0(params: ModelParams, dc: DerivedConstants | None = None,
            reward: PiecewiseReward | None = None) -> float:
    """Unique zero of ubar_combined, found by geometric bracket expansion."""
    if dc is None:
        dc = derive_constants(params)
    if reward is None:
        reward = dual_reward(params, dc)

    def f(y):
        return ubar_combined(y, params, dc, reward)

    lo = 1e-3 * dc.y_tilde
    for _ in range(200):
        if f(lo) < 0.0:
            break
        lo *= 0.5
    else:
        raise RuntimeError("could not bracket y0 from below")
    hi = max(dc.y_tilde, lo * 4.0)
    for _ in range(400):
        if f(hi) > 0.0:
            break
        hi *= 2.0
    else:
        raise RuntimeError("could not bracket y0 from above; "
                           "parameters may not admit a sign change")
    return float(optimize.brentq(f, lo, hi, rtol=_BRENT_RTOL, maxiter=200))


def tail_integral(y, n: float, params: ModelParams,
                  dc: DerivedConstants | None = None,
                  reward: PiecewiseReward | None = None,
                  lower: float = math.inf):
    """int_lower^y (-R(z)) / z^{n+1} dz in closed form.

    ``lower`` defaults to +inf (the improper tail), which converges only
    for n > 1 (i.e. n = n1); requesting the improper tail with n = n2
    raises.  Finite lower limits work for either exponent and either
    orientation (lower above or below y).
    """
    if dc is None:
        dc = derive_constants(params)
    if reward is None:
        reward = dual_reward(params, dc)
    y_arr, scalar = _as_array(y)
    if math.isinf(lower):
        if n <= 1.0:
            raise ValueError("improper tail integral diverges for n <= 1 "
                             "(the wage term decays like z^{1-n})")
        val = reward.integral(y_arr, math.inf, n)
    else:
        # int_lower^y (-R) = -int_lower^y R, with orientation flip when y < lower
        fwd = -reward.integral(np.minimum(y_arr, lower), np.maximum(y_arr, lower), n)
        val = np.where(y_arr >= lower, fwd, -fwd)
    return _ret(val, scalar)


def F(y, params: ModelParams, dc: DerivedConstants | None = None,
      reward: PiecewiseReward | None = None):
    """Free-boundary equation: F(y) = int_{+inf}^{y} Ubar(z) z^{-n1-1} dz.

    Strictly positive for y below the root, negative above; its unique zero
    on (0, y0) is the free boundary y*.
    """
    if dc is None:
        dc = derive_constants(params)
    if reward is None:
        reward = dual_reward(params, dc)
    y_arr, scalar = _as_array(y)
    extra = ((_kappa(params, dc), dc.p2p), (params.w, 1.0))
    val = -(reward.integral(y_arr, math.inf, dc.n1)
            + _power_integral(extra, y_arr, math.inf, dc.n1))
    return _ret(val, scalar)


# =====================================================================
# Solution object
# =====================================================================

@dataclass(frozen=True)
class DualSolution:
    params: ModelParams
    dc: DerivedConstants
    reward: PiecewiseReward
    regime: Regime
    y_star: float | None    # free boundary (None in the ruined regime)
    c_coef: float | None    # coefficient C of the y^{n2} term
    x_star: float | None    # critical wealth I(rho * y_star)
    y0: float | None        # zero of ubar_combined (diagnostic)

    @property
    def exact_conjugate(self) -> bool:
        return self.reward.exact_conjugate


def solve_free_boundary(params: ModelParams, *, exact_conjugate: bool = False
                        ) -> DualSolution:
    """Solve for the free boundary y*, coefficient C, and critical wealth x*.

    The root of F is bracketed on (~0, y0), solved by Brent's method, then
    polished with Newton steps using the analytic derivative
    F'(y) = Ubar(y) y^{-n1-1} so the smooth-pasting residual reaches the
    1e-8 verification tolerance.
    """
    dc = derive_constants(params)
    regime = stopping_regime(dc, params)
    if regime is not Regime.STOPPING:
        raise RegimeError("no stopping boundary exists for these parameters "
                          "(alpha*(1-p1) <= 1-p2)")
    reward = dual_reward(params, dc, exact_conjugate=exact_conjugate)
    y0 = find_y0(params, dc, reward)

    def f(y):
        return F(y, params, dc, reward)

    lo = 1e-3 * dc.y_tilde
    for _ in range(200):
        if lo < y0 and f(lo) > 0.0:
            break
        lo *= 0.125
    else:
        raise RuntimeError("could not bracket the free boundary from below")
    if f(y0) >= 0.0:
        raise RuntimeError("F does not change sign on (0, y0); "
                           "free boundary not bracketed")
    y_star = float(optimize.brentq(f, lo, y0, rtol=_BRENT_RTOL, maxiter=200))
    for _ in range(3):
        slope = ubar_combined(y_star, params, dc, reward) * y_star ** (-dc.n1 - 1.0)
        step = f(y_star) / slope
        if not math.isfinite(step):
            break
        y_star = min(max(y_star - step, lo), y0)

    x_star = du.inv_marginal_wealth(dc.rho * y_star, params, dc)
    ub2 = du.ubar2(dc.rho * y_star, params, dc)
    c_coef = (y_star ** (-dc.n2) / (dc.n1 - dc.n2)) * (
        (dc.n1 - dc.p2p) * ub2 / dc.rho
        - (dc.n1 - 1.0) * (params.w / params.r) * y_star)
    return DualSolution(params=params, dc=dc, reward=reward, regime=regime,
                        y_star=y_star, c_coef=float(c_coef),
                        x_star=float(x_star), y0=y0)


def ruined_solution(params: ModelParams, *, exact_conjugate: bool = False
                    ) -> DualSolution:
    """Solution object for the ruined regime (no boundary, no obstacle).

    phi keeps the same particular-integral form with the lower limit of the
    n2-integral moved to 0 and no free-constant term.
    """
    dc = derive_constants(params)
    regime = stopping_regime(dc, params)
    if regime is not Regime.RUINED:
        raise ValueError("parameters admit a stopping boundary; "
                         "use solve_free_boundary")
    reward = dual_reward(params, dc, exact_conjugate=exact_conjugate)
    return DualSolution(params=params, dc=dc, reward=reward, regime=regime,
                        y_star=None, c_coef=None, x_star=None, y0=None)


def closed_form_y_star_no_labor(params: ModelParams,
                                dc: DerivedConstants | None = None) -> float:
    """Closed-form free boundary for b_max = 0.

    With a single reward region, F has two power terms and the root is
    explicit:  y*^{p1'-p2'} = -kappa (p1'-n1) / (A_tilde (p2'-n1)), i.e.

        y* = ( -(p1'/p2') (theta^2 / 2 rho) (p1'-n1)(p2'-n2)
               * alpha^{p1'-1} (rho/k)^{p2'} * v2^{1-p2'} / v1^{1-p1'}
             )^{1/(p1'-p2')}

    after expanding kappa via n(p2') = (theta^2/2)(p2'-n1)(p2'-n2).
    """
    if params.b_max != 0.0:
        raise ValueError("closed form requires b_max = 0")
    if dc is None:
        dc = derive_constants(params)
    if dc.p1p == dc.p2p:
        raise ValueError("no solution when p1' = p2' "
                         "(boundary exists iff p1' != p2')")
    if stopping_regime(dc, params) is not Regime.STOPPING:
        raise RegimeError("closed form requires the stopping regime (p1' < p2')")
    base = -_kappa(params, dc) * (dc.p1p - dc.n1) / (dc.A_tilde * (dc.p2p - dc.n1))
    return float(base ** (1.0 / (dc.p1p - dc.p2p)))


# =====================================================================
# Dual value function and wealth map
# =====================================================================

def obstacle(y, sol: DualSolution):
    """Stopping payoff (1/rho)*Ubar2(rho*y) - (w/r)*y."""
    y_arr, scalar = _as_array(y)
    dc, params = sol.dc, sol.params
    val = (du.ubar2(dc.rho * y_arr, params, dc) / dc.rho
           - (params.w / params.r) * y_arr)
    return _ret(val, scalar)


def obstacle_prime(y, sol: DualSolution):
    y_arr, scalar = _as_array(y)
    dc, params = sol.dc, sol.params
    val = -du.inv_marginal_wealth(dc.rho * y_arr, params, dc) - params.w / params.r
    return _ret(val, scalar)


def _g(dc: DerivedConstants) -> float:
    return 2.0 / (dc.theta ** 2 * (dc.n1 - dc.n2))


def _particular_parts(y_arr, sol: DualSolution):
    """I1(y) = int_y^inf R z^{-n1-1} dz and I2(y) = int_{lo}^y R z^{-n2-1} dz
    with lo = y* (stopping) or 0 (ruined)."""
    dc = sol.dc
    lo = sol.y_star if sol.regime is Regime.STOPPING else 0.0
    i1 = sol.reward.integral(y_arr, math.inf, dc.n1)
    i2 = sol.reward.integral(np.minimum(y_arr, lo), np.maximum(y_arr, lo), dc.n2)
    i2 = np.where(y_arr >= lo, i2, -i2)
    return i1, i2


def phi(y, sol: DualSolution):
    """Dual value: obstacle for y <= y*, closed-form ODE solution above.

    In the ruined regime the ODE solution applies for all y > 0 with no
    C*y^{n2} term.
    """
    y_arr, scalar = _as_array(y)
    dc = sol.dc
    if sol.regime is Regime.STOPPING:
        cont_mask = y_arr > sol.y_star
        y_safe = np.where(cont_mask, y_arr, 2.0 * sol.y_star)
        i1, i2 = _particular_parts(y_safe, sol)
        cont = (sol.c_coef * y_safe ** dc.n2
                + _g(dc) * (y_safe ** dc.n1 * i1 + y_safe ** dc.n2 * i2))
        val = np.where(cont_mask, cont, obstacle(y_arr, sol))
    else:
        i1, i2 = _particular_parts(y_arr, sol)
        val = _g(dc) * (y_arr ** dc.n1 * i1 + y_arr ** dc.n2 * i2)
    return _ret(val, scalar)


def phi_prime(y, sol: DualSolution):
    """Closed-form phi'; the reward terms from differentiating I1, I2 cancel."""
    y_arr, scalar = _as_array(y)
    dc = sol.dc
    if sol.regime is Regime.STOPPING:
        cont_mask = y_arr > sol.y_star
        y_safe = np.where(cont_mask, y_arr, 2.0 * sol.y_star)
        i1, i2 = _particular_parts(y_safe, sol)
        cont = (sol.c_coef * dc.n2 * y_safe ** (dc.n2 - 1.0)
                + _g(dc) * (dc.n1 * y_safe ** (dc.n1 - 1.0) * i1
                            + dc.n2 * y_safe ** (dc.n2 - 1.0) * i2))
        val = np.where(cont_mask, cont, obstacle_prime(y_arr, sol))
    else:
        i1, i2 = _particular_parts(y_arr, sol)
        val = _g(dc) * (dc.n1 * y_arr ** (dc.n1 - 1.0) * i1
                        + dc.n2 * y_arr ** (dc.n2 - 1.0) * i2)
    return _ret(val, scalar)


def phi_second(y, sol: DualSolution):
    """Closed-form phi''; carries an explicit -2 R(y)/(theta^2 y^2) term."""
    y_arr, scalar = _as_array(y)
    dc, params = sol.dc, sol.params
    rev = -2.0 / dc.theta ** 2

    def continuation(y_vals, with_c):
        i1, i2 = _particular_parts(y_vals, sol)
        out = _g(dc) * (dc.n1 * (dc.n1 - 1.0) * y_vals ** (dc.n1 - 2.0) * i1
                        + dc.n2 * (dc.n2 - 1.0) * y_vals ** (dc.n2 - 2.0) * i2)
        out = out + rev * sol.reward(y_vals) / y_vals ** 2
        if with_c:
            out = out + sol.c_coef * dc.n2 * (dc.n2 - 1.0) * y_vals ** (dc.n2 - 2.0)
        return out

    if sol.regime is Regime.STOPPING:
        cont_mask = y_arr > sol.y_star
        y_safe = np.where(cont_mask, y_arr, 2.0 * sol.y_star)
        stop = ((1.0 - dc.p2p)
                * du.inv_marginal_wealth(dc.rho * y_arr, params, dc) / y_arr)
        val = np.where(cont_mask, continuation(y_safe, True), stop)
    else:
        val = continuation(y_arr, False)
    return _ret(val, scalar)


def wealth_of_shadow(y, sol: DualSolution):
    """Continuation-region wealth map x(y) = -phi'(y) - w/r; decreasing."""
    y_arr, scalar = _as_array(y)
    if sol.regime is Regime.STOPPING:
        if np.any(y_arr < sol.y_star * (1.0 - 1e-12)):
            raise ValueError("shadow price below the free boundary; "
                             "the wealth map is defined on [y*, inf)")
        if np.any(y_arr > 1e9 * sol.y_star):
            raise ValueError("shadow price beyond 1e9 * y_star is out of the "
                             "supported wealth range")
        y_arr = np.maximum(y_arr, sol.y_star)
    val = -phi_prime(y_arr, sol) - sol.params.w / sol.params.r
    return _ret(val, scalar)


def shadow_of_wealth(x: float, sol: DualSolution) -> float:
    """Inverse of the wealth map by bracketed root-finding.

    Stopping regime: requires 0 < x < x_star and searches y in
    [y*, 1e9*y*] with geometric expansion.  Ruined regime: expands a
    bracket around the threshold scale.
    """
    if not math.isfinite(x) or x <= 0.0:
        raise ValueError("wealth must be positive")
    if sol.regime is Regime.STOPPING:
        if x >= sol.x_star:
            raise ValueError("wealth is in the stopping region (x >= x_star)")
        lo = sol.y_star
        hi = 2.0 * sol.y_star
        while wealth_of_shadow(hi, sol) > x:
            hi *= 2.0
            if hi > 1e9 * sol.y_star:
                raise ValueError("wealth below the attainable range")
    else:
        lo = hi = sol.dc.y_tilde
        while wealth_of_shadow(lo, sol) < x:
            lo *= 0.5
            if lo < 1e-300:
                raise ValueError("wealth above the attainable range")
        while wealth_of_shadow(hi, sol) > x:
            hi *= 2.0
            if hi > 1e300:
                raise ValueError("wealth below the attainable range")

    def f(y):
        return wealth_of_shadow(y, sol) - x

    return float(optimize.brentq(f, lo, hi, rtol=1e-12, maxiter=200))

"""Direct utilities, Legendre-Fenchel conjugates, and inverse marginal maps.

The running utility is Cobb-Douglas in consumption and leisure,
U1(c, l) = l^{beta(1-p1)} c^{alpha(1-p1)} / (1-p1), and the stopped utility
is power, U2(x) = x^{1-p2}/(1-p2).  With the running weight v1 folded in, the
conjugate

    Ubar1(y) = sup over c >= 0, l in [l_min, 1] of  v1*U1(c, l) - (c + w*l)*y

is piecewise power in y with three regions: for small y (high wealth) leisure
is pinned at 1, for large y it is pinned at l_min, and in between consumption
and leisure move together along c = (alpha*w/beta)*l.  The region seams sit
at the weight-scaled thresholds y_tilde = v1*y_tilde0 and y_bar = v1*y_bar0;
every function here is the exact conjugate (continuous across the seams,
Fenchel inequality everywhere).  All maps accept scalars or numpy arrays.
"""

from __future__ import annotations

import numpy as np

from .model import ModelParams, DerivedConstants

__all__ = [
    "u1",
    "u2",
    "ubar1",
    "ubar2",
    "ubar1_prime",
    "inv_marginal_consumption",
    "inv_marginal_leisure",
    "inv_marginal_wealth",
]


def _as_array(y):
    arr = np.asarray(y, dtype=float)
    return arr, arr.ndim == 0


def _ret(arr, scalar):
    return float(arr) if scalar else arr


# =====================================================================
# Direct utilities
# =====================================================================

def u1(c, l, params: ModelParams):
    """Cobb-Douglas running utility U1(c, l); negative for p1 > 1."""
    c_arr, c_scalar = _as_array(c)
    l_arr, l_scalar = _as_array(l)
    if np.any(c_arr <= 0):
        raise ValueError("consumption must be positive")
    if np.any((l_arr <= 0) | (l_arr > 1)):
        raise ValueError("leisure must lie in (0, 1]")
    e = 1.0 - params.p1
    out = l_arr ** (params.beta * e) * c_arr ** (params.alpha * e) / e
    return _ret(out, c_scalar and l_scalar)


def u2(x, params: ModelParams):
    """Power utility U2(x) = x^{1-p2}/(1-p2)."""
    x_arr, scalar = _as_array(x)
    if np.any(x_arr <= 0):
        raise ValueError("wealth must be positive")
    e = 1.0 - params.p2
    return _ret(x_arr ** e / e, scalar)


# =====================================================================
# Conjugates
# =====================================================================

def ubar1(y, params: ModelParams, dc: DerivedConstants):
    """Exact conjugate of the weighted running utility.

    Three power branches joined continuously at y_tilde and y_bar:

        A_tilde*y^{p1'} - w*y          on (0, y_tilde]      (leisure = 1)
        A_coef*y^{p}                   on (y_tilde, y_bar)   (flexible)
        A_bar*y^{p1'} - w*l_min*y      on [y_bar, inf)       (leisure = l_min)

    Closed regions follow the indicator conventions 1{y <= y_tilde} and
    1{y >= y_bar}; the branch values agree at the seams so the choice only
    matters for derivative bookkeeping.  For b_max = 0 the first branch is
    the whole function; for b_max = 1 the capped branch is empty.
    """
    y_arr, scalar = _as_array(y)
    out = dc.A_tilde * y_arr ** dc.p1p - params.w * y_arr
    if params.b_max > 0.0:
        out = np.where(y_arr > dc.y_tilde, dc.A_coef * y_arr ** dc.p, out)
        if np.isfinite(dc.y_bar):
            hi = dc.A_bar * y_arr ** dc.p1p - params.w * dc.l_min * y_arr
            out = np.where(y_arr >= dc.y_bar, hi, out)
    return _ret(out, scalar)


def ubar2(y, params: ModelParams, dc: DerivedConstants):
    """Conjugate of the weighted stopped utility: -(v2^{1-p2'}/p2') (y/k)^{p2'}."""
    y_arr, scalar = _as_array(y)
    coef = -(params.v2 ** (1.0 - dc.p2p)) / dc.p2p
    return _ret(coef * (y_arr / params.k) ** dc.p2p, scalar)


def ubar1_prime(y, params: ModelParams, dc: DerivedConstants):
    """Closed-form derivative of ubar1; equals -(I_c(y) + w*I_l(y))."""
    y_arr, scalar = _as_array(y)
    out = dc.p1p * dc.A_tilde * y_arr ** (dc.p1p - 1.0) - params.w
    if params.b_max > 0.0:
        mid = dc.p * dc.A_coef * y_arr ** (dc.p - 1.0)
        out = np.where(y_arr > dc.y_tilde, mid, out)
        if np.isfinite(dc.y_bar):
            hi = (dc.p1p * dc.A_bar * y_arr ** (dc.p1p - 1.0)
                  - params.w * dc.l_min)
            out = np.where(y_arr >= dc.y_bar, hi, out)
    return _ret(out, scalar)


# =====================================================================
# Inverse marginal maps (the optimal controls as functions of y)
# =====================================================================

def inv_marginal_leisure(y, params: ModelParams, dc: DerivedConstants):
    """Optimal leisure I_l(y): 1 below y_tilde, l_min above y_bar, and the
    interior power law (y/y_tilde)^{1/(m-1)} in between, m = (alpha+beta)(1-p1).
    """
    y_arr, scalar = _as_array(y)
    if params.b_max == 0.0:
        return _ret(np.ones_like(y_arr), scalar)
    m = (params.alpha + params.beta) * (1.0 - params.p1)
    l_mid = (y_arr / dc.y_tilde) ** (1.0 / (m - 1.0))
    out = np.clip(l_mid, dc.l_min, 1.0)
    return _ret(out, scalar)


def inv_marginal_consumption(y, params: ModelParams, dc: DerivedConstants):
    """Optimal consumption I_c(y); strictly decreasing with I_c(0+) = inf.

    On the pinned-leisure branches it inverts the consumption first-order
    condition v1*alpha*c^{alpha(1-p1)-1} l^{beta(1-p1)} = y at l = 1 or
    l = l_min; on the flexible branch it rides c = (alpha*w/beta) * I_l(y).
    """
    y_arr, scalar = _as_array(y)
    a1 = params.alpha * (1.0 - params.p1)
    inv_exp = 1.0 / (a1 - 1.0)
    lo = (y_arr / (params.v1 * params.alpha)) ** inv_exp
    if params.b_max == 0.0:
        return _ret(lo, scalar)
    m = (params.alpha + params.beta) * (1.0 - params.p1)
    mid = dc.c_tilde * (y_arr / dc.y_tilde) ** (1.0 / (m - 1.0))
    out = np.where(y_arr > dc.y_tilde, mid, lo)
    if np.isfinite(dc.y_bar):
        lever = params.v1 * params.alpha * dc.l_min ** (params.beta * (1.0 - params.p1))
        hi = (y_arr / lever) ** inv_exp
        out = np.where(y_arr >= dc.y_bar, hi, out)
    return _ret(out, scalar)


def inv_marginal_wealth(y, params: ModelParams, dc: DerivedConstants):
    """Optimal stopped wealth I(y) = (1/k) (y/(v2*k))^{p2'-1}; decreasing."""
    y_arr, scalar = _as_array(y)
    out = (y_arr / (params.v2 * params.k)) ** (dc.p2p - 1.0) / params.k
    return _ret(out, scalar)

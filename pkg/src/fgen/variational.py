"""Variational lower bounds on f-information.

For a joint law of (dL, U) with a fair mask bit, any admissible ``t``
gives ``E[phi*^{-1}(t * (-1)^U * dL)] <= I_phi(dL; U)``. The objective is
concave in ``t``, so the supremum is found with a coarse grid followed by
golden-section refinement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import JointLossMaskDistribution
from .divergences import LN2, DivergenceKind, conjugate_pair
from .errors import DomainError

CLAMP_EPS = 1e-9
GRID_POINTS = 2049
GOLDEN_TOL = 1e-12
INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class VariationalResult:
    value: float
    argmax_t: float
    evaluations: int
    clamp_epsilon: float = CLAMP_EPS


def golden_section_max(f, lo, hi, tol=GOLDEN_TOL, max_iter=200):
    """Maximize a unimodal ``f`` on [lo, hi]. Returns (x, f(x), evaluations)."""
    a, b = float(lo), float(hi)
    c = b - INVPHI * (b - a)
    d = a + INVPHI * (b - a)
    fc, fd = f(c), f(d)
    evals = 2
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INVPHI * (b - a)
            fd = f(d)
        evals += 1
    return (c, fc, evals) if fc >= fd else (d, fd, evals)


def admissible_radius(kind: DivergenceKind, bound: float, eps: float = CLAMP_EPS) -> float:
    """Largest |t| keeping t*G inside the conjugate inverse's domain when |G| <= bound."""
    if kind.tag in ("kl", "sh"):
        reach = 1.0 - eps
    elif kind.tag == "chi2":
        reach = 1.0
    elif kind.tag == "js":
        reach = LN2 - eps
    else:
        raise DomainError(f"{kind.name} has no conjugate-inverse pair")
    return reach / bound


def _maximize(joint, kind, weights):
    pair = conjugate_pair(kind)
    g = joint.g_values()
    w = joint.probs * weights
    live = w > 0
    g, w = g[live], w[live]
    bound = float(np.max(np.abs(g))) if g.size else 0.0
    if bound == 0.0:
        return VariationalResult(0.0, 0.0, 0)
    r = admissible_radius(kind, bound)
    inv = pair.phi_star_inverse

    def objective(t):
        return float(np.dot(w, inv(t * g)))

    grid = np.linspace(-r, r, GRID_POINTS)
    vals = inv(np.multiply.outer(grid, g)) @ w
    k = int(np.argmax(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, GRID_POINTS - 1)]
    t, v, evals = golden_section_max(objective, lo, hi)
    if vals[k] > v:
        t, v = float(grid[k]), float(vals[k])
    # t = 0 is always admissible and gives exactly 0
    if v < 0.0:
        t, v = 0.0, 0.0
    return VariationalResult(v, float(t), GRID_POINTS + evals)


def variational_lower_bound(joint: JointLossMaskDistribution, kind: DivergenceKind) -> VariationalResult:
    """sup_t E[phi*^{-1}(t G)] over the clamped admissible interval."""
    return _maximize(joint, kind, 1.0)


def truncated_lower_bound(joint: JointLossMaskDistribution, kind: DivergenceKind, c: float) -> VariationalResult:
    """Same supremum with the integrand cut to atoms where |dL| <= c."""
    if c < 0:
        raise DomainError("truncation level c must be >= 0")
    keep = (np.abs(joint.support) <= c).astype(float)
    return _maximize(joint, kind, np.stack([keep, keep]))


def objective_curve(joint: JointLossMaskDistribution, kind: DivergenceKind, points: int = 4097):
    """The variational objective sampled on the full admissible interval."""
    pair = conjugate_pair(kind)
    live = joint.probs > 0
    g, w = joint.g_values()[live], joint.probs[live]
    bound = float(np.max(np.abs(g), initial=0.0))
    if bound == 0.0:
        return np.zeros(1), np.zeros(1)
    r = admissible_radius(kind, bound)
    grid = np.linspace(-r, r, points)
    return grid, pair.phi_star_inverse(np.multiply.outer(grid, g)) @ w


# -- scalar inequalities behind the fast-rate bounds -------------------------

INEQUALITY_IDS = ("kl_poly", "sh_poly", "js_poly", "log2_linear", "coin_poly")


def inequality_domain(ident: str, a: float) -> tuple[float, float]:
    """Admissible x-interval for the given inequality and parameter ``a``."""
    if ident == "kl_poly":
        if a < 0.5:
            raise DomainError("kl_poly needs a >= 1/2")
        return 1.0 / (2 * a) - 1.0, 1.0 - 1.0 / (2 * a)
    if ident == "sh_poly":
        if a < 1.0:
            raise DomainError("sh_poly needs a >= 1")
        return 1.0 / a - 1.0, 1.0 - 1.0 / a
    if ident == "js_poly":
        if a < 4.0:
            raise DomainError("js_poly needs a >= 4")
        return -0.5, 0.5
    if ident == "log2_linear":
        return 0.0, 1.0
    if ident == "coin_poly":
        return -0.68, math.inf
    raise DomainError(f"unknown inequality {ident!r}")


def inequality_sides(ident: str, a, x):
    """(lhs, rhs) of the inequality, vectorized over ``a`` and ``x``."""
    a = np.asarray(a, dtype=float)
    x = np.asarray(x, dtype=float)
    if ident == "kl_poly":
        return np.log1p(x), x - a * x * x
    if ident == "sh_poly":
        return x / (1.0 + x), x - a * x * x
    if ident == "js_poly":
        return np.log1p(-np.expm1(-x)), x - a * x * x
    if ident == "log2_linear":
        return np.log1p(x), x * LN2
    if ident == "coin_poly":
        return np.log1p(x), x - x * x
    raise DomainError(f"unknown inequality {ident!r}")


def check_inequality(ident: str, a: float, x: float, tol: float = 1e-12) -> bool:
    """True iff lhs >= rhs - tol. Raises DomainError outside the stated domain."""
    lo, hi = inequality_domain(ident, a)
    if not lo <= x <= hi:
        raise DomainError(f"{ident}: x={x!r} outside [{lo}, {hi}] for a={a!r}")
    lhs, rhs = inequality_sides(ident, a, x)
    return bool(lhs >= rhs - tol)


def coin_betting_log_wealth(outcomes, signs, t: float) -> float:
    """Log-wealth of betting a fixed fraction ``t`` on each signed outcome."""
    outcomes = np.asarray(outcomes, dtype=float)
    signs = np.asarray(signs, dtype=float)
    if outcomes.shape != signs.shape:
        raise DomainError("outcomes and signs must have equal lengths")
    if not 0.0 <= t < 1.0:
        raise DomainError("betting fraction t must lie in [0, 1)")
    factors = 1.0 + t * signs * outcomes
    if np.any(factors <= 0):
        raise DomainError(f"wealth factor <= 0 at round {int(np.argmax(factors <= 0))}")
    return float(np.sum(np.log(factors)))

"""Randomized invariant suites behind ``fgen verify``.

Each suite samples random in-domain inputs, checks one family of
inequalities or identities, and reports how many cases were checked and
the worst violation seen.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .bounds import per_joint_proof_invariants
from .distributions import DiscreteDistribution, JointLossMaskDistribution
from .divergences import (
    CHI2,
    JEFFREYS,
    JS,
    KL,
    LN2,
    SH,
    TV,
    divergence,
    f_information,
    phi_alpha,
    tv_dual_check,
)
from .variational import INEQUALITY_IDS, inequality_domain, inequality_sides, variational_lower_bound

TOL = 1e-9
ALPHAS = (1.0, 1.25, 1.5, 2.0)
SIX_KINDS = (KL, CHI2, SH, JS, TV, JEFFREYS)


@dataclass
class SuiteResult:
    name: str
    checked: int = 0
    failures: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return not self.failures

    def fail(self, message):
        if len(self.failures) < 5:
            self.failures.append(message)
        else:
            self.failures[-1] = f"... and more ({message})"

    def to_dict(self):
        return {"passed": self.passed, "checked": self.checked, "failures": self.failures, "seconds": round(self.seconds, 3)}


def random_simplex(rng, m, sparse=0.0):
    p = rng.dirichlet(np.ones(m))
    if sparse and m > 1:
        drop = rng.random(m) < sparse
        drop[rng.integers(m)] = False
        p = np.where(drop, 0.0, p)
        p /= p.sum()
    return p


def random_pair(rng, max_support=8):
    m = int(rng.integers(2, max_support + 1))
    support = np.arange(m, dtype=float)
    return DiscreteDistribution(support, random_simplex(rng, m)), DiscreteDistribution(support, random_simplex(rng, m))


def random_joint(rng, max_support=8, sparse=0.3, interpolating=False) -> JointLossMaskDistribution:
    """Exact-uniform joint with support in [-1, 1] and random conditionals.

    With ``interpolating`` the gap G = (-1)^U dL is non-negative on every
    atom carrying mass.
    """
    m = int(rng.integers(1, max_support + 1))
    grid = np.round(np.linspace(-1.0, 1.0, 41), 12)
    if interpolating:
        support = np.unique(np.concatenate([rng.choice(grid, m), [0.0]]))
        c0 = np.where(support >= 0, rng.random(support.size), 0.0)
        c1 = np.where(support <= 0, rng.random(support.size), 0.0)
        return JointLossMaskDistribution.from_conditionals(support, c0, c1)
    support = np.sort(rng.choice(grid, m, replace=False))
    return JointLossMaskDistribution.from_conditionals(
        support, random_simplex(rng, m, sparse), random_simplex(rng, m, sparse)
    )


def _sample_inequality_inputs(rng, ident, count):
    if ident in ("kl_poly", "sh_poly", "js_poly"):
        a_min = {"kl_poly": 0.5, "sh_poly": 1.0, "js_poly": 4.0}[ident]
        a = a_min * np.exp(rng.uniform(0.0, math.log(200.0), count))
        a[: count // 10] = a_min
        lo, hi = np.vectorize(lambda v: inequality_domain(ident, v))(a)
        x = lo + (hi - lo) * rng.random(count)
        return a, x
    a = np.ones(count)
    if ident == "log2_linear":
        return a, rng.random(count)
    return a, rng.uniform(-0.68, 10.0, count)


def suite_inequalities(rng, trials) -> SuiteResult:
    res = SuiteResult("inequalities")
    for ident in INEQUALITY_IDS:
        a, x = _sample_inequality_inputs(rng, ident, trials)
        lhs, rhs = inequality_sides(ident, a, x)
        bad = lhs < rhs - 1e-12
        res.checked += trials
        if np.any(bad):
            k = int(np.argmax(bad))
            res.fail(f"{ident}: a={a[k]!r}, x={x[k]!r}, lhs={lhs[k]!r} < rhs={rhs[k]!r}")
    return res


def suite_variational(rng, trials) -> SuiteResult:
    res = SuiteResult("variational")
    for _ in range(trials):
        joint = random_joint(rng)
        for kind in (KL, CHI2, SH, JS):
            lb = variational_lower_bound(joint, kind).value
            direct = f_information(joint, kind)
            res.checked += 1
            if lb > direct + TOL:
                res.fail(f"{kind}: lower bound {lb!r} exceeds I={direct!r}")
    det = JointLossMaskDistribution(np.array([-1.0, 1.0]), np.array([[0.5, 0.0], [0.0, 0.5]]))
    v = variational_lower_bound(det, KL).value
    res.checked += 1
    if v < LN2 - 1e-6:
        res.fail(f"deterministic channel KL lower bound {v!r} < ln 2 - 1e-6")
    return res


def suite_orderings(rng, trials) -> SuiteResult:
    """KL <= chi2, H^2 <= 2 TV, Pinsker, JS ceilings and the phi_alpha identities."""
    res = SuiteResult("orderings")
    for _ in range(trials):
        p, q = random_pair(rng)
        d = {k: divergence(p, q, k) for k in SIX_KINDS}
        checks = {
            "kl<=chi2": d[KL] <= d[CHI2] + TOL,
            "sh<=2tv": d[SH] <= 2 * d[TV] + TOL,
            "pinsker": d[TV] <= math.sqrt(d[KL] / 2) + TOL,
            "js<=2ln2": d[JS] <= 2 * LN2 + TOL,
            "js<=jeffreys/2": d[JS] <= 0.5 * d[JEFFREYS] + TOL,
            "phi1=2tv": abs(divergence(p, q, phi_alpha(1)) - 2 * d[TV]) <= TOL,
            "phi2=chi2": abs(divergence(p, q, phi_alpha(2)) - d[CHI2]) <= TOL,
            "tv_dual": abs(tv_dual_check(p, q) - d[TV]) <= 1e-12,
            "nonneg": all(v >= 0 for v in d.values()),
            "self_zero": all(divergence(p, p, k) <= TOL for k in SIX_KINDS),
        }
        res.checked += len(checks)
        for name, ok in checks.items():
            if not ok:
                res.fail(f"{name} violated: {({k.name: v for k, v in d.items()})}")
    return res


def coarsen(dist: DiscreteDistribution, labels) -> DiscreteDistribution:
    return DiscreteDistribution(np.arange(labels.max() + 1, dtype=float), np.bincount(labels, dist.probs, labels.max() + 1))


def suite_dpi(rng, trials) -> SuiteResult:
    res = SuiteResult("data_processing")
    for _ in range(trials):
        p, q = random_pair(rng)
        k = int(rng.integers(1, len(p) + 1))
        labels = np.concatenate([np.arange(k), rng.integers(0, k, len(p) - k)])
        rng.shuffle(labels)
        gp, gq = coarsen(p, labels), coarsen(q, labels)
        for kind in SIX_KINDS + (phi_alpha(1.5),):
            res.checked += 1
            before, after = divergence(p, q, kind), divergence(gp, gq, kind)
            if after > before + TOL:
                res.fail(f"{kind}: coarsened {after!r} > original {before!r}")
    return res


def suite_proof_invariants(rng, trials) -> SuiteResult:
    res = SuiteResult("proof_invariants")
    for _ in range(trials):
        joint = random_joint(rng, interpolating=rng.random() < 0.2)
        for name, ok in per_joint_proof_invariants(joint).items():
            res.checked += 1
            if not ok:
                res.fail(f"{name} fails on support {joint.support.tolist()}")
    return res


def suite_ceilings(rng, trials) -> SuiteResult:
    res = SuiteResult("capacity_ceilings")
    for _ in range(trials):
        joint = random_joint(rng)
        checks = {"kl<=ln2": f_information(joint, KL) <= LN2 + TOL, "tv<=1/2": f_information(joint, TV) <= 0.5 + TOL}
        for a in ALPHAS:
            checks[f"phi{a:g}<1+2^(a-1)"] = f_information(joint, phi_alpha(a)) < 1 + 2 ** (a - 1)
        res.checked += len(checks)
        for name, ok in checks.items():
            if not ok:
                res.fail(f"{name} violated on support {joint.support.tolist()}")
    return res


def suite_coin_betting(rng, trials) -> SuiteResult:
    """Square-root and interpolating bounds recovered from fixed-fraction betting."""
    res = SuiteResult("coin_betting")
    for _ in range(trials):
        joint = random_joint(rng)
        eg = joint.mean_g()
        res.checked += 1
        if eg > 2 * math.sqrt(f_information(joint, KL)) + TOL:
            res.fail(f"E[G]={eg!r} > 2 sqrt(I)")
        joint = random_joint(rng, interpolating=True)
        eg = joint.mean_g()
        res.checked += 1
        if eg > 2 * f_information(joint, KL) + TOL:
            res.fail(f"interpolating E[G]={eg!r} > 2 I")
    return res


SUITES = {
    "inequalities": (suite_inequalities, 1),
    "variational": (suite_variational, 10),
    "orderings": (suite_orderings, 1),
    "data_processing": (suite_dpi, 2),
    "proof_invariants": (suite_proof_invariants, 1),
    "capacity_ceilings": (suite_ceilings, 1),
    "coin_betting": (suite_coin_betting, 5),
}


def run_all(trials: int = 10000, seed: int = 0) -> list:
    """Run every suite. ``trials`` is scaled down for the optimizer-bound suites."""
    out = []
    for i, (name, (fn, divisor)) in enumerate(SUITES.items()):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
        start = time.perf_counter()
        res = fn(rng, max(1, trials // divisor))
        res.seconds = time.perf_counter() - start
        out.append(res)
    return out

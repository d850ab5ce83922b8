"""f-divergences between finite distributions, and the conjugate inverses
used by the variational lower bounds.

All logarithms are natural; information is measured in nats. A divergence
that is infinite (P not absolutely continuous w.r.t. Q) is returned as
``math.inf`` rather than raised.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import DiscreteDistribution, JointLossMaskDistribution, merged_support
from .errors import DomainError, ValidationError

LN2 = math.log(2.0)

TAGS = ("kl", "chi2", "sh", "js", "tv", "jeffreys", "phi_alpha")


@dataclass(frozen=True)
class DivergenceKind:
    tag: str
    alpha: float | None = None

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ValidationError(f"kind: unknown divergence {self.tag!r}")
        if self.tag == "phi_alpha":
            if self.alpha is None or not math.isfinite(self.alpha) or self.alpha < 1:
                raise ValidationError("kind.alpha: phi_alpha needs a finite alpha >= 1")
            object.__setattr__(self, "alpha", float(self.alpha))
        elif self.alpha is not None:
            raise ValidationError(f"kind.alpha: only phi_alpha takes alpha, not {self.tag}")

    @property
    def name(self) -> str:
        return f"phi_alpha:{self.alpha:g}" if self.tag == "phi_alpha" else self.tag

    def __str__(self):
        return self.name

    @property
    def has_conjugate(self) -> bool:
        return self.tag in CONJUGATE_INVERSES


KL = DivergenceKind("kl")
CHI2 = DivergenceKind("chi2")
SH = DivergenceKind("sh")
JS = DivergenceKind("js")
TV = DivergenceKind("tv")
JEFFREYS = DivergenceKind("jeffreys")


def phi_alpha(alpha: float) -> DivergenceKind:
    return DivergenceKind("phi_alpha", alpha)


def parse_kind(text: str) -> DivergenceKind:
    """Parse ``kl``, ``chi2``, ..., or ``phi_alpha:1.5``."""
    text = text.strip().lower()
    if text.startswith("phi_alpha"):
        _, _, a = text.partition(":")
        try:
            return phi_alpha(float(a))
        except ValueError:
            raise ValidationError(f"kind: cannot parse alpha in {text!r}") from None
    return DivergenceKind(text)


# -- vectorized core -------------------------------------------------------
#
# p and q are arrays with the atoms on the last axis; the result drops it.


def _kl(p, q):
    pos = p > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(pos, p * np.log(np.where(pos, p, 1.0) / np.where(q > 0, q, 1.0)), 0.0)
    out = terms.sum(axis=-1)
    return np.where(np.any(pos & (q <= 0), axis=-1), np.inf, out)


def _chi2(p, q):
    qpos = q > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(qpos, (p - q) ** 2 / np.where(qpos, q, 1.0), 0.0)
    out = terms.sum(axis=-1)
    return np.where(np.any((p > 0) & ~qpos, axis=-1), np.inf, out)


def _sh(p, q):
    return ((np.sqrt(p) - np.sqrt(q)) ** 2).sum(axis=-1)


def _js(p, q):
    m = 0.5 * (p + q)
    return _kl(p, m) + _kl(q, m)


def _tv(p, q):
    return 0.5 * np.abs(p - q).sum(axis=-1)


def _jeffreys(p, q):
    return _kl(p, q) + _kl(q, p)


def _phi_alpha(p, q, alpha):
    qpos = q > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(qpos, p / np.where(qpos, q, 1.0), 1.0)
    out = (np.where(qpos, q * np.abs(ratio - 1.0) ** alpha, 0.0)).sum(axis=-1)
    orphan = (p > 0) & ~qpos
    if alpha == 1.0:
        return out + np.where(orphan, p, 0.0).sum(axis=-1)
    return np.where(np.any(orphan, axis=-1), np.inf, out)


def divergence_arrays(p, q, kind: DivergenceKind):
    """Divergence between aligned probability arrays (atoms on the last axis)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if kind.tag == "kl":
        out = _kl(p, q)
    elif kind.tag == "chi2":
        out = _chi2(p, q)
    elif kind.tag == "sh":
        out = _sh(p, q)
    elif kind.tag == "js":
        out = _js(p, q)
    elif kind.tag == "tv":
        out = _tv(p, q)
    elif kind.tag == "jeffreys":
        out = _jeffreys(p, q)
    else:
        out = _phi_alpha(p, q, kind.alpha)
    # plug-in sums can dip a few ulps below zero
    return np.maximum(out, 0.0)


def divergence(p: DiscreteDistribution, q: DiscreteDistribution, kind: DivergenceKind) -> float:
    """D_kind(p || q) on the merged support of ``p`` and ``q``."""
    support = merged_support(p, q)
    return float(divergence_arrays(p.on_support(support), q.on_support(support), kind))


def f_information(joint: JointLossMaskDistribution, kind: DivergenceKind) -> float:
    """I_kind(dL; U): divergence between the joint and the product of its marginals."""
    return float(divergence_arrays(joint.probs.ravel(), joint.product().ravel(), kind))


def tv_dual_check(p: DiscreteDistribution, q: DiscreteDistribution) -> float:
    """Total variation through its dual form, using the witness sign(p - q)."""
    support = merged_support(p, q)
    pa, qa = p.on_support(support), q.on_support(support)
    witness = np.sign(pa - qa)
    return 0.5 * abs(float(np.dot(pa, witness) - np.dot(qa, witness)))


# -- conjugates ------------------------------------------------------------


@dataclass(frozen=True)
class ConjugatePair:
    kind: DivergenceKind
    phi_star: object
    phi_star_inverse: object
    # admissible z for the inverse: (lower, lower_closed)
    lower: float
    lower_closed: bool

    def in_domain(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return (z >= self.lower) if self.lower_closed else (z > self.lower)


def _chi2_star(y):
    y = np.asarray(y, dtype=float)
    return np.where(y >= -2.0, y + y * y / 4.0, -1.0)


CONJUGATE_INVERSES = {
    "kl": ConjugatePair(KL, np.expm1, np.log1p, -1.0, False),
    "chi2": ConjugatePair(CHI2, _chi2_star, lambda z: 2.0 * (np.sqrt(1.0 + z) - 1.0), -1.0, True),
    "sh": ConjugatePair(SH, lambda y: y / (1.0 - y), lambda z: z / (1.0 + z), -1.0, False),
    "js": ConjugatePair(
        JS,
        lambda y: -np.log(2.0 - np.exp(y)),
        lambda z: np.log1p(-np.expm1(-z)),
        -LN2,
        False,
    ),
}


def conjugate_pair(kind: DivergenceKind) -> ConjugatePair:
    try:
        return CONJUGATE_INVERSES[kind.tag]
    except KeyError:
        raise DomainError(f"{kind.name} has no conjugate-inverse pair") from None


def conjugate_inverse(kind: DivergenceKind, z):
    """phi*^{-1}(z). Scalars in, scalar out; arrays are mapped elementwise."""
    pair = conjugate_pair(kind)
    za = np.asarray(z, dtype=float)
    if not np.all(pair.in_domain(za)):
        raise DomainError(f"z outside the domain of the {kind.name} conjugate inverse")
    out = pair.phi_star_inverse(za)
    return float(out) if np.ndim(out) == 0 else out


def f_information_ceiling(kind: DivergenceKind) -> float:
    """Largest value I_kind(dL; U) can take when U is a fair bit.

    Attained by the deterministic channel dL = U; every other channel is a
    garbling of it, so data processing caps the f-information there.
    """
    det = JointLossMaskDistribution(np.array([0.0, 1.0]), np.array([[0.5, 0.0], [0.0, 0.5]]))
    return f_information(det, kind)

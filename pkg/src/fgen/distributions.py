"""Finite discrete distributions and quantization of loss differences."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError

MASS_TOL = 1e-12
ZERO_ONE_VALUES = (-1.0, 0.0, 1.0)


@dataclass(frozen=True)
class Quantizer:
    """Maps raw loss differences onto a finite support.

    ``exact_zero_one`` keeps the three values {-1, 0, 1} untouched;
    ``uniform_bins`` replaces each value by the midpoint of its bin on
    ``range``. Values outside the range fall into the edge bins.
    """

    kind: str = "exact_zero_one"
    bin_count: int = 21
    range: tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self):
        if self.kind not in ("exact_zero_one", "uniform_bins"):
            raise ValidationError(f"quantizer.kind: unknown kind {self.kind!r}")
        if self.kind == "uniform_bins":
            if int(self.bin_count) != self.bin_count or self.bin_count < 2:
                raise ValidationError("quantizer.bin_count: must be an integer >= 2")
            lo, hi = self.range
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValidationError("quantizer.range: need finite lo < hi")

    def apply(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if self.kind == "exact_zero_one":
            rounded = np.rint(values)
            if np.any(np.abs(values - rounded) > MASS_TOL) or np.any(np.abs(rounded) > 1):
                bad = values[(np.abs(values - rounded) > MASS_TOL) | (np.abs(rounded) > 1)]
                raise ValidationError(
                    f"exact_zero_one quantizer got value {bad.flat[0]!r} outside {{-1, 0, 1}}"
                )
            return rounded + 0.0
        lo, hi = self.range
        width = (hi - lo) / self.bin_count
        idx = np.clip(np.floor((values - lo) / width), 0, self.bin_count - 1)
        return lo + (idx + 0.5) * width


def default_quantizer(loss_kind: str, delta_values=None) -> Quantizer:
    """Exact quantizer for zero-one loss, otherwise 21 bins over the observed range."""
    if loss_kind == "zero_one":
        return Quantizer("exact_zero_one")
    if delta_values is None or np.size(delta_values) == 0:
        return Quantizer("uniform_bins", 21, (-1.0, 1.0))
    lo = float(np.min(delta_values))
    hi = float(np.max(delta_values))
    if hi - lo <= 0:
        lo, hi = lo - 0.5, hi + 0.5
    return Quantizer("uniform_bins", 21, (lo, hi))


def _check_finite_nonempty(values, what="values"):
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        raise ValidationError(f"{what}: empty input")
    if not np.all(np.isfinite(values)):
        raise ValidationError(f"{what}: non-finite value")
    return values


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    support: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        support = np.asarray(self.support, dtype=float).ravel()
        probs = np.asarray(self.probs, dtype=float).ravel()
        if support.shape != probs.shape:
            raise ValidationError("probs: length differs from support")
        if support.size == 0:
            raise ValidationError("support: empty")
        if not np.all(np.isfinite(support)):
            raise ValidationError("support: non-finite value")
        if np.any(np.diff(support) <= 0):
            raise ValidationError("support: values must be strictly increasing")
        if not np.all(np.isfinite(probs)) or np.any(probs < 0):
            raise ValidationError("probs: entries must be finite and >= 0")
        if abs(probs.sum() - 1.0) > MASS_TOL:
            raise ValidationError(f"probs: total mass {probs.sum()!r} differs from 1")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)

    def __len__(self):
        return self.support.size

    def __eq__(self, other):
        if not isinstance(other, DiscreteDistribution):
            return NotImplemented
        return np.array_equal(self.support, other.support) and np.array_equal(
            self.probs, other.probs
        )

    def mean(self, fn=None) -> float:
        vals = self.support if fn is None else fn(self.support)
        return float(np.dot(self.probs, vals))

    def on_support(self, support) -> np.ndarray:
        """Probabilities re-indexed onto a superset ``support`` (missing atoms get 0)."""
        support = np.asarray(support, dtype=float)
        idx = np.searchsorted(support, self.support)
        if np.any(idx >= support.size) or np.any(support[np.minimum(idx, support.size - 1)] != self.support):
            raise ValidationError("support: target support does not contain every atom")
        out = np.zeros(support.size)
        out[idx] = self.probs
        return out

    def map(self, fn) -> "DiscreteDistribution":
        """Push the distribution forward through ``fn`` (merging colliding atoms)."""
        return from_weighted(fn(self.support), self.probs)

    def to_dict(self) -> dict:
        return {"support": self.support.tolist(), "probs": self.probs.tolist()}

    @classmethod
    def from_dict(cls, obj) -> "DiscreteDistribution":
        if not isinstance(obj, dict):
            raise ValidationError("distribution: expected an object")
        for key in ("support", "probs"):
            if key not in obj:
                raise ValidationError(f"{key}: missing field")
            if not isinstance(obj[key], list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in obj[key]
            ):
                raise ValidationError(f"{key}: expected an array of numbers")
        if len(obj["support"]) != len(obj["probs"]):
            raise ValidationError("probs: length differs from support")
        support = np.asarray(obj["support"], dtype=float)
        probs = np.asarray(obj["probs"], dtype=float)
        order = np.argsort(support, kind="stable")
        return cls(support[order], probs[order])


def load_distribution(path) -> DiscreteDistribution:
    try:
        obj = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"{path}: cannot read distribution file ({exc})") from exc
    return DiscreteDistribution.from_dict(obj)


def merged_support(*dists: DiscreteDistribution) -> np.ndarray:
    out = dists[0].support
    for d in dists[1:]:
        out = np.union1d(out, d.support)
    return out


def from_weighted(values, weights) -> DiscreteDistribution:
    values = np.asarray(values, dtype=float).ravel()
    weights = np.asarray(weights, dtype=float).ravel()
    support, inverse = np.unique(values, return_inverse=True)
    probs = np.bincount(inverse.ravel(), weights=weights, minlength=support.size)
    return DiscreteDistribution(support, probs / probs.sum())


def from_samples(values, quantizer: Quantizer | None = None) -> DiscreteDistribution:
    """Plug-in empirical distribution of ``values`` after quantization."""
    values = _check_finite_nonempty(values)
    quantizer = quantizer or Quantizer()
    q = quantizer.apply(values)
    support, counts = np.unique(q, return_counts=True)
    return DiscreteDistribution(support, counts / counts.sum())


@dataclass(frozen=True, eq=False)
class JointLossMaskDistribution:
    """Joint law of (loss difference, mask bit).

    ``probs[u, v]`` is P(dL = support[v], U = u). With ``exact_uniform`` set
    the mask marginal is exactly (1/2, 1/2).
    """

    support: np.ndarray
    probs: np.ndarray
    exact_uniform: bool = True
    u_marginal: np.ndarray = field(init=False)

    def __post_init__(self):
        support = np.asarray(self.support, dtype=float).ravel()
        probs = np.asarray(self.probs, dtype=float)
        if probs.shape != (2, support.size):
            raise ValidationError("probs: expected shape (2, len(support))")
        if support.size == 0 or not np.all(np.isfinite(support)):
            raise ValidationError("support: must be non-empty and finite")
        if np.any(np.diff(support) <= 0):
            raise ValidationError("support: values must be strictly increasing")
        if not np.all(np.isfinite(probs)) or np.any(probs < 0):
            raise ValidationError("probs: entries must be finite and >= 0")
        if abs(probs.sum() - 1.0) > MASS_TOL:
            raise ValidationError("probs: total mass differs from 1")
        row = probs.sum(axis=1)
        if self.exact_uniform and np.any(np.abs(row - 0.5) > MASS_TOL):
            raise ValidationError("probs: exact-uniform joint needs mask marginal (1/2, 1/2)")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "u_marginal", np.array([0.5, 0.5]) if self.exact_uniform else row)

    @property
    def dl_marginal(self) -> np.ndarray:
        return self.probs.sum(axis=0)

    def product(self) -> np.ndarray:
        """Product of the marginals, same layout as ``probs``."""
        return np.outer(self.u_marginal, self.dl_marginal)

    def g_values(self) -> np.ndarray:
        """G = (-1)^u * dL for every cell, shape (2, m)."""
        return np.stack([self.support, -self.support])

    def expect(self, cell_values) -> float:
        return float(np.sum(self.probs * cell_values))

    def mean_g(self) -> float:
        return self.expect(self.g_values())

    def mean_g2(self) -> float:
        return self.expect(self.g_values() ** 2)

    def conditional(self, u: int) -> np.ndarray:
        return self.probs[u] / self.probs[u].sum()

    @classmethod
    def from_conditionals(cls, support, cond0, cond1) -> "JointLossMaskDistribution":
        cond0 = np.asarray(cond0, dtype=float)
        cond1 = np.asarray(cond1, dtype=float)
        return cls(support, 0.5 * np.stack([cond0 / cond0.sum(), cond1 / cond1.sum()]))

    @classmethod
    def independent(cls, dist: DiscreteDistribution) -> "JointLossMaskDistribution":
        return cls(dist.support, 0.5 * np.stack([dist.probs, dist.probs]))


def joint_from_stratified_samples(
    dl_given_u0, dl_given_u1, quantizer: Quantizer | None = None, exact_uniform: bool = True
) -> JointLossMaskDistribution:
    """Plug-in joint of (dL, U) from samples split by mask value."""
    quantizer = quantizer or Quantizer()
    a = quantizer.apply(_check_finite_nonempty(dl_given_u0, "dl_given_u0"))
    b = quantizer.apply(_check_finite_nonempty(dl_given_u1, "dl_given_u1"))
    support = np.union1d(a, b)
    c0 = np.bincount(np.searchsorted(support, a), minlength=support.size).astype(float)
    c1 = np.bincount(np.searchsorted(support, b), minlength=support.size).astype(float)
    if exact_uniform:
        probs = 0.5 * np.stack([c0 / c0.sum(), c1 / c1.sum()])
    else:
        probs = np.stack([c0, c1]) / (c0.sum() + c1.sum())
    return JointLossMaskDistribution(support, probs, exact_uniform)

"""Supersample loss tensors and the statistics the bounds are built from.

A tensor records, for ``k1`` supersample draws and ``k2`` mask draws per
supersample, the losses of the trained model on both columns of every one
of the ``n`` rows. Row ``i`` yields the loss difference
``dL = L[i, 1] - L[i, 0]`` and the signed gap ``G = (-1)^U * dL``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .distributions import Quantizer, default_quantizer
from .divergences import CHI2, JS, KL, SH, TV, DivergenceKind, divergence_arrays, f_information_ceiling, phi_alpha
from .errors import EmptyStratumError, ValidationError

log = logging.getLogger(__name__)

LOSS_KINDS = ("zero_one", "bounded_unit", "general")
MODES = ("pooled", "disintegrated")

DEFAULT_C_GRID = tuple(round(0.1 * k, 1) for k in range(11))
DEFAULT_Q_GRID = (1.0, 1.5, 2.0, 4.0)
DEFAULT_ALPHA_GRID = (1.0, 1.25, 1.5, 2.0)


@dataclass(eq=False)
class SupersampleLossTensor:
    losses: np.ndarray  # [k1, k2, n, 2]
    masks: np.ndarray  # [k1, k2, n]
    loss_kind: str = "zero_one"
    loss_range: tuple[float, float] | None = None

    def __post_init__(self):
        self.losses = np.asarray(self.losses, dtype=float)
        self.masks = np.asarray(self.masks)
        if self.losses.ndim != 4 or self.losses.shape[3] != 2:
            raise ValidationError("losses: expected shape [k1][k2][n][2]")
        if self.masks.shape != self.losses.shape[:3]:
            raise ValidationError("masks: expected shape [k1][k2][n] matching losses")
        if min(self.losses.shape[:3]) < 1:
            raise ValidationError("losses: k1, k2 and n must be positive")
        if self.loss_kind not in LOSS_KINDS:
            raise ValidationError(f"loss_kind: unknown value {self.loss_kind!r}")
        if not np.all(np.isin(self.masks, (0, 1))):
            raise ValidationError("masks: entries must be 0 or 1")
        self.masks = self.masks.astype(np.int8)
        if not np.all(np.isfinite(self.losses)):
            raise ValidationError("losses: non-finite value")
        if self.loss_kind == "zero_one" and not np.all(np.isin(self.losses, (0.0, 1.0))):
            raise ValidationError("losses: zero_one tensor holds a value outside {0, 1}")
        if self.loss_kind == "bounded_unit" and np.any((self.losses < 0) | (self.losses > 1)):
            raise ValidationError("losses: bounded_unit tensor holds a value outside [0, 1]")
        if self.loss_range is not None:
            lo, hi = map(float, self.loss_range)
            if not lo < hi:
                raise ValidationError("loss_range: need lo < hi")
            self.loss_range = (lo, hi)

    @property
    def k1(self) -> int:
        return self.losses.shape[0]

    @property
    def k2(self) -> int:
        return self.losses.shape[1]

    @property
    def n(self) -> int:
        return self.losses.shape[2]

    def delta_bounded_by_one(self) -> bool:
        """Whether every possible loss difference lies in [-1, 1]."""
        if self.loss_kind in ("zero_one", "bounded_unit"):
            return True
        return self.loss_range is not None and self.loss_range[1] - self.loss_range[0] <= 1.0

    # -- file format ------------------------------------------------------

    def to_dict(self) -> dict:
        losses = self.losses.astype(int) if self.loss_kind == "zero_one" else self.losses
        out = {
            "version": 1,
            "n": self.n,
            "k1": self.k1,
            "k2": self.k2,
            "loss_kind": self.loss_kind,
        }
        if self.loss_range is not None:
            out["loss_range"] = list(self.loss_range)
        out["losses"] = losses.tolist()
        out["masks"] = self.masks.astype(int).tolist()
        return out

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), separators=(",", ":")) + "\n")

    @classmethod
    def from_dict(cls, obj) -> "SupersampleLossTensor":
        return cls(**_validate_tensor_object(obj))

    @classmethod
    def load(cls, path) -> "SupersampleLossTensor":
        try:
            obj = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"{path}: cannot read tensor file ({exc})") from exc
        return cls.from_dict(obj)


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _validate_tensor_object(obj) -> dict:
    """Schema check that names the first offending field."""
    if not isinstance(obj, dict):
        raise ValidationError("tensor: expected a JSON object")
    for key in ("version", "n", "k1", "k2", "loss_kind", "losses", "masks"):
        if key not in obj:
            raise ValidationError(f"{key}: missing field")
    if obj["version"] != 1:
        raise ValidationError(f"version: unsupported value {obj['version']!r}")
    for key in ("n", "k1", "k2"):
        if not _is_int(obj[key]) or obj[key] < 1:
            raise ValidationError(f"{key}: expected a positive integer")
    kind = obj["loss_kind"]
    if kind not in LOSS_KINDS:
        raise ValidationError(f"loss_kind: expected one of {LOSS_KINDS}, got {kind!r}")
    k1, k2, n = obj["k1"], obj["k2"], obj["n"]
    losses, masks = obj["losses"], obj["masks"]

    def walk(arr, dims, path, leaf):
        if not dims:
            leaf(arr, path)
            return
        if not isinstance(arr, list) or len(arr) != dims[0]:
            raise ValidationError(f"{path}: expected an array of length {dims[0]}")
        for i, sub in enumerate(arr):
            walk(sub, dims[1:], f"{path}[{i}]", leaf)

    def loss_leaf(v, path):
        if not _is_num(v) or not math.isfinite(v):
            raise ValidationError(f"{path}: expected a finite number, got {v!r}")
        if v < 0:
            raise ValidationError(f"{path}: losses must be >= 0, got {v!r}")
        if kind == "zero_one" and v not in (0, 1):
            raise ValidationError(f"{path}: zero_one loss must be 0 or 1, got {v!r}")
        if kind == "bounded_unit" and v > 1:
            raise ValidationError(f"{path}: bounded_unit loss must be <= 1, got {v!r}")

    def mask_leaf(v, path):
        if not _is_int(v) or v not in (0, 1):
            raise ValidationError(f"{path}: mask must be 0 or 1, got {v!r}")

    walk(losses, (k1, k2, n, 2), "losses", loss_leaf)
    walk(masks, (k1, k2, n), "masks", mask_leaf)
    out = {"losses": np.asarray(losses, dtype=float), "masks": np.asarray(masks), "loss_kind": kind}
    if "loss_range" in obj and obj["loss_range"] is not None:
        lr = obj["loss_range"]
        if not (isinstance(lr, list) and len(lr) == 2 and all(_is_num(v) for v in lr) and lr[0] < lr[1]):
            raise ValidationError("loss_range: expected [lo, hi] with lo < hi")
        out["loss_range"] = (float(lr[0]), float(lr[1]))
    return out


def delta_and_g(tensor: SupersampleLossTensor):
    """Loss differences and signed gaps, each shaped [k1, k2, n]."""
    dl = tensor.losses[..., 1] - tensor.losses[..., 0]
    g = np.where(tensor.masks == 0, dl, -dl)
    return dl, g


def empirical_gen_error(tensor: SupersampleLossTensor) -> tuple[float, float]:
    """Mean test-minus-train gap and its standard error over (draw, mask) replicates."""
    _, g = delta_and_g(tensor)
    reps = g.mean(axis=2).ravel()
    mean = float(reps.mean())
    if reps.size < 2:
        return mean, 0.0
    return mean, float(reps.std(ddof=1) / math.sqrt(reps.size))


# -- f-information estimation ------------------------------------------------


@dataclass
class FInformationEstimate:
    kind: DivergenceKind
    mode: str
    values: np.ndarray  # [n] pooled, [k1, n] disintegrated
    sample_counts: np.ndarray
    quantizer: Quantizer
    substituted_cells: list = field(default_factory=list)


@dataclass
class _CellJoints:
    """Plug-in joints for a batch of cells, all on a common support."""

    support: np.ndarray
    cond: np.ndarray  # [cells, 2, m] conditionals of dL given U
    counts: np.ndarray  # [cells, 2]
    empty: np.ndarray  # [cells] bool

    @property
    def joint(self):
        return 0.5 * self.cond

    @property
    def product(self):
        marg = self.cond.sum(axis=1) * 0.5
        return np.broadcast_to(0.5 * marg[:, None, :], self.cond.shape)


def _cell_samples(tensor, mode):
    """Samples reshaped to (cells, samples) for the requested mode."""
    dl, _ = delta_and_g(tensor)
    u = tensor.masks
    k1, k2, n = dl.shape
    if mode == "pooled":
        return dl.transpose(2, 0, 1).reshape(n, k1 * k2), u.transpose(2, 0, 1).reshape(n, k1 * k2)
    if mode == "disintegrated":
        return dl.transpose(0, 2, 1).reshape(k1 * n, k2), u.transpose(0, 2, 1).reshape(k1 * n, k2)
    raise ValidationError(f"mode: expected one of {MODES}, got {mode!r}")


def _build_cells(dl, u, quantizer) -> _CellJoints:
    q = quantizer.apply(dl)
    support, codes = np.unique(q, return_inverse=True)
    codes = codes.reshape(q.shape)
    cells, m = q.shape[0], support.size
    flat = (np.arange(cells)[:, None] * 2 + u) * m + codes
    counts = np.bincount(flat.ravel(), minlength=cells * 2 * m).reshape(cells, 2, m).astype(float)
    per_u = counts.sum(axis=2)
    empty = np.any(per_u == 0, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        cond = np.where(per_u[..., None] > 0, counts / np.maximum(per_u, 1)[..., None], 0.0)
    return _CellJoints(support, cond, per_u, empty)


def _cell_index(mode, cell, n):
    return (None, cell) if mode == "pooled" else divmod(cell, n)


def _resolve_empty(cells: _CellJoints, mode, n, on_empty):
    bad = np.flatnonzero(cells.empty)
    if bad.size == 0:
        return []
    where = [_cell_index(mode, int(c), n) for c in bad]
    if on_empty == "raise":
        raise EmptyStratumError(where)
    log.warning("%d %s cell(s) have an empty mask stratum; using the capacity ceiling", bad.size, mode)
    return where


def _shape_values(values, mode, tensor):
    return values if mode == "pooled" else values.reshape(tensor.k1, tensor.n)


def estimate_f_information(
    tensor: SupersampleLossTensor,
    kind: DivergenceKind,
    mode: str = "pooled",
    quantizer: Quantizer | None = None,
    on_empty: str = "raise",
) -> FInformationEstimate:
    """Plug-in f-information of (dL_i, U_i) per row (pooled) or per (draw, row).

    The mask marginal is taken as exactly (1/2, 1/2). With ``on_empty="ceiling"``
    a cell whose samples all share one mask value gets the largest value the
    f-information can take for a fair bit instead of raising.
    """
    return _estimate_many(tensor, [kind], mode, quantizer, on_empty)[0][kind]


def _estimate_many(tensor, kinds, mode, quantizer, on_empty):
    dl, u = _cell_samples(tensor, mode)
    if quantizer is None:
        quantizer = default_quantizer(tensor.loss_kind, dl)
    if mode == "disintegrated" and tensor.k2 < 20:
        log.warning("disintegrated estimate from k2=%d masks: under 10 samples per stratum", tensor.k2)
    cells = _build_cells(dl, u, quantizer)
    bad = _resolve_empty(cells, mode, tensor.n, on_empty)
    p = cells.joint.reshape(cells.cond.shape[0], -1)
    q = np.ascontiguousarray(cells.product).reshape(p.shape)
    counts = _shape_values(cells.counts.sum(axis=1).astype(int), mode, tensor)
    out = {}
    for kind in kinds:
        vals = divergence_arrays(p, q, kind)
        if bad:
            vals = np.where(cells.empty, f_information_ceiling(kind), vals)
        out[kind] = FInformationEstimate(kind, mode, _shape_values(vals, mode, tensor), counts, quantizer, bad)
    return out, cells


# -- statistics ---------------------------------------------------------------


@dataclass(frozen=True)
class StatisticsConfig:
    c_grid: tuple = DEFAULT_C_GRID
    q_grid: tuple = DEFAULT_Q_GRID
    alpha_grid: tuple = DEFAULT_ALPHA_GRID
    quantizer: Quantizer | None = None
    kinds: tuple | None = None
    modes: tuple = MODES
    on_empty: str = "raise"
    # also truncate at the largest observed |dL|
    include_observed_max: bool = True

    def all_kinds(self):
        if self.kinds is not None:
            return tuple(self.kinds)
        return (KL, CHI2, SH, JS, TV) + tuple(phi_alpha(a) for a in self.alpha_grid)

    def p_list(self):
        """Norm orders needed by the unbounded-loss bounds: 1, inf and every q*beta."""
        ps = {1.0, math.inf}
        for a in self.alpha_grid:
            beta = math.inf if a == 1 else a / (a - 1)
            for q in self.q_grid:
                ps.add(q * beta)
        return tuple(sorted(ps))


@dataclass
class Moments:
    """Plug-in moments of dL and G, one entry per cell ([n] or [k1, n])."""

    e_g: np.ndarray
    e_dl2: np.ndarray
    var_lplus: np.ndarray
    tv_term: np.ndarray
    max_abs: np.ndarray
    lp_norms: dict
    tail_prob: dict
    trunc_dl2: dict
    trunc_g: dict
    min_g: np.ndarray


@dataclass
class SupersampleStatistics:
    n: int
    k1: int
    k2: int
    loss_kind: str
    delta_bounded: bool
    config: StatisticsConfig
    pooled: Moments
    disintegrated: Moments | None
    finfo: dict  # (kind, mode) -> FInformationEstimate
    gen_error: tuple[float, float]
    quantizer: Quantizer

    def info(self, kind: DivergenceKind, mode: str) -> np.ndarray:
        try:
            return self.finfo[(kind, mode)].values
        except KeyError:
            raise KeyError(f"missing f-information statistic {kind.name}/{mode}") from None

    def moments(self, mode: str) -> Moments:
        m = self.pooled if mode == "pooled" else self.disintegrated
        if m is None:
            raise KeyError(f"missing {mode} moments")
        return m


def _moments(dl, g, lplus, cells: _CellJoints, config: StatisticsConfig, shape):
    absd = np.abs(dl)
    norms = {}
    for p in config.p_list():
        if math.isinf(p):
            norms[p] = absd.max(axis=1)
        else:
            norms[p] = np.mean(absd**p, axis=1) ** (1.0 / p)
    tail, tdl2, tg = {}, {}, {}
    for c in config.c_grid:
        inside = absd <= c
        tail[c] = 1.0 - inside.mean(axis=1)
        tdl2[c] = np.mean(np.where(inside, dl * dl, 0.0), axis=1)
        tg[c] = np.mean(np.where(inside, g, 0.0), axis=1)
    tv = 0.5 * np.abs(cells.cond[:, 0, :] - cells.cond[:, 1, :]).sum(axis=1)
    r = lambda a: a.reshape(shape)  # noqa: E731
    return Moments(
        e_g=r(g.mean(axis=1)),
        e_dl2=r(np.mean(dl * dl, axis=1)),
        var_lplus=r(lplus.var(axis=1)),
        tv_term=r(tv),
        max_abs=r(absd.max(axis=1)),
        lp_norms={k: r(v) for k, v in norms.items()},
        tail_prob={k: r(v) for k, v in tail.items()},
        trunc_dl2={k: r(v) for k, v in tdl2.items()},
        trunc_g={k: r(v) for k, v in tg.items()},
        min_g=r(g.min(axis=1)),
    )


def compute_statistics(tensor: SupersampleLossTensor, config: StatisticsConfig | None = None) -> SupersampleStatistics:
    """Moments and f-information estimates needed by every bound."""
    config = config or StatisticsConfig()
    dl_all, g_all = delta_and_g(tensor)
    if config.include_observed_max:
        top = float(np.max(np.abs(dl_all)))
        config = replace(config, c_grid=tuple(sorted(set(config.c_grid) | {top})), include_observed_max=False)
    quantizer = config.quantizer or default_quantizer(tensor.loss_kind, dl_all)
    k1, k2, n = dl_all.shape
    lplus = tensor.losses[..., 0]
    finfo = {}
    moments = {}
    for mode in config.modes:
        if mode == "pooled":
            shape = (n,)
            view = lambda a: a.transpose(2, 0, 1).reshape(n, k1 * k2)  # noqa: E731
        else:
            shape = (k1, n)
            view = lambda a: a.transpose(0, 2, 1).reshape(k1 * n, k2)  # noqa: E731
        est, cells = _estimate_many(tensor, config.all_kinds(), mode, quantizer, config.on_empty)
        for kind, e in est.items():
            finfo[(kind, mode)] = e
        moments[mode] = _moments(view(dl_all), view(g_all), view(lplus), cells, config, shape)
    return SupersampleStatistics(
        n=n,
        k1=k1,
        k2=k2,
        loss_kind=tensor.loss_kind,
        delta_bounded=tensor.delta_bounded_by_one(),
        config=config,
        pooled=moments.get("pooled"),
        disintegrated=moments.get("disintegrated"),
        finfo=finfo,
        gen_error=empirical_gen_error(tensor),
        quantizer=quantizer,
    )

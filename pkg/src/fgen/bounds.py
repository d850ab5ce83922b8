"""Generalization bounds evaluated from supersample statistics.

Every bound is an average over rows of a per-row term. For the
disintegrated bounds the per-row term is itself an average over
supersample draws of a square-root expression, so the expectation over
the supersample sits outside the square root.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .distributions import JointLossMaskDistribution
from .divergences import CHI2, JS, KL, SH, f_information, phi_alpha
from .errors import BoundPreconditionError, FGenError, NumericalError
from .supersample import SupersampleStatistics

LN2 = math.log(2.0)

MI_FAMILY = ("cmi_oracle", "cmi_fastrate", "cmi_var", "cmi_tv", "dis_mi_oracle", "dis_chi2_oracle", "baseline_ldcmi")
REALIZABLE = ("cmi_realizable_4i", "cmi_realizable_log2")
SH_JS = ("sh_oracle", "sh_var", "sh_worst", "js_oracle")
UNBOUNDED = ("unbounded_mi", "unbounded_markov")
BOUND_NAMES = MI_FAMILY[:4] + REALIZABLE + MI_FAMILY[4:6] + SH_JS + UNBOUNDED + MI_FAMILY[6:]


@dataclass
class BoundResult:
    name: str
    value: float
    per_row: np.ndarray
    chosen_params: list | None = None
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {
            "value": self.value,
            "per_row": [float(v) for v in self.per_row],
            "chosen_params": _jsonable(self.chosen_params),
            "notes": list(self.notes),
        }


def _jsonable(obj):
    """Infinite parameters (beta for alpha = 1) are written as the string "inf"."""
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and math.isinf(obj):
        return "inf"
    return obj


def _result(name, per_row, **kw):
    per_row = np.maximum(np.asarray(per_row, dtype=float), 0.0)
    return BoundResult(name, float(per_row.mean()), per_row, **kw)


def _require_bounded(stats: SupersampleStatistics, name):
    if not stats.delta_bounded:
        raise BoundPreconditionError(
            f"{name}: loss differences are not known to lie in [-1, 1]; use an unbounded bound"
        )


def _sqrt(x):
    return np.sqrt(np.maximum(x, 0.0))


def bound_mi_family(stats: SupersampleStatistics, name: str) -> BoundResult:
    """Mutual-information (and chi-square) bounds for loss differences in [-1, 1]."""
    _require_bounded(stats, name)
    if name in ("dis_mi_oracle", "dis_chi2_oracle", "baseline_ldcmi"):
        m = stats.moments("disintegrated")
        if name == "baseline_ldcmi":
            cell = _sqrt(2.0 * stats.info(KL, "disintegrated"))
        else:
            info = stats.info(KL if name == "dis_mi_oracle" else CHI2, "disintegrated")
            cell = _sqrt(2.0 * (m.e_dl2 + np.abs(m.e_g)) * info)
        return _result(name, cell.mean(axis=0))
    m = stats.moments("pooled")
    i_kl = stats.info(KL, "pooled")
    if name == "cmi_oracle":
        row = _sqrt(2.0 * (m.e_dl2 + np.abs(m.e_g)) * i_kl)
    elif name == "cmi_fastrate":
        row = 2.0 * i_kl + _sqrt(2.0 * m.e_dl2 * i_kl)
    elif name == "cmi_var":
        row = 2.0 * i_kl + 2.0 * _sqrt(2.0 * m.var_lplus * i_kl)
    elif name == "cmi_tv":
        row = _sqrt(2.0 * m.e_dl2 * i_kl) + _sqrt(2.0 * m.tv_term * i_kl)
    else:
        raise ValueError(f"{name} is not a mutual-information bound")
    return _result(name, row)


def bound_realizable(stats: SupersampleStatistics, name: str) -> BoundResult:
    """Fast-rate bounds for the realizable case (training loss never above test loss)."""
    _require_bounded(stats, name)
    m = stats.moments("pooled")
    worst = float(m.min_g.min())
    if worst < 0:
        raise BoundPreconditionError(f"{name}: observed a negative test-minus-train gap ({worst:g})")
    i_kl = stats.info(KL, "pooled")
    scale = 4.0 if name == "cmi_realizable_4i" else 1.0 / LN2
    if name not in REALIZABLE:
        raise ValueError(f"{name} is not a realizable bound")
    return _result(name, scale * i_kl, notes=["verified: every observed gap G >= 0"])


def bound_sh_js(stats: SupersampleStatistics, name: str) -> BoundResult:
    """Squared-Hellinger and Jensen-Shannon bounds (disintegrated)."""
    _require_bounded(stats, name)
    m = stats.moments("disintegrated")
    abs_g = np.abs(m.e_g)
    if name == "js_oracle":
        cell = 2.0 * _sqrt((4.0 * m.e_dl2 + abs_g) * stats.info(JS, "disintegrated"))
    else:
        h2 = stats.info(SH, "disintegrated")
        if name == "sh_oracle":
            cell = _sqrt((4.0 * m.e_dl2 + 2.0 * abs_g) * h2)
        elif name == "sh_var":
            cell = _sqrt((4.0 * m.e_dl2 + 2.0 * m.tv_term) * h2)
        elif name == "sh_worst":
            cell = _sqrt((4.0 + 2.0 * m.tv_term) * h2)
        else:
            raise ValueError(f"{name} is not a squared-Hellinger/JS bound")
    return _result(name, cell.mean(axis=0))


def _beta(alpha):
    return math.inf if alpha == 1 else alpha / (alpha - 1.0)


def _unbounded_candidates(stats: SupersampleStatistics, row: int, markov: bool):
    m = stats.pooled
    cfg = stats.config
    i_kl = float(stats.info(KL, "pooled")[row])
    l1 = float(m.lp_norms[1.0][row])
    for alpha in cfg.alpha_grid:
        beta = _beta(alpha)
        i_alpha = float(stats.info(phi_alpha(alpha), "pooled")[row])
        root = i_alpha ** (1.0 / alpha) if math.isfinite(i_alpha) else math.inf
        for q in cfg.q_grid if math.isfinite(beta) else cfg.q_grid[:1]:
            qb = q * beta
            norm = float(m.lp_norms[qb][row])
            gamma = 0.0 if math.isinf(beta) else (q - 1.0) / qb
            params = {"q": q, "alpha": alpha, "beta": beta, "gamma": gamma}
            if markov:
                a1 = math.sqrt(2.0 * i_kl)
                a2 = l1**gamma * norm * root if root > 0 else 0.0
                factor = 1.0 if gamma == 0 else gamma ** (1 / (gamma + 1)) + gamma ** (-gamma / (gamma + 1))
                term = factor * a1 ** (gamma / (gamma + 1)) * a2 ** (1 / (gamma + 1))
                yield term, params
                continue
            for c in cfg.c_grid:
                tail = float(m.tail_prob[c][row])
                zeta1 = math.sqrt(2.0 * (m.trunc_dl2[c][row] + c * abs(m.trunc_g[c][row])))
                # no mass beyond C means the tail part of the gap is exactly zero
                zeta2 = 0.0 if tail == 0 else tail**gamma * norm
                tail_term = 0.0 if zeta2 == 0 else zeta2 * root
                term = zeta1 * math.sqrt(i_kl) + tail_term
                yield term, dict(params, C=c, zeta1=zeta1, zeta2=zeta2)


def bound_unbounded(stats: SupersampleStatistics, name: str) -> BoundResult:
    """Truncation bound for unbounded loss differences, minimized over the grids per row."""
    if name not in UNBOUNDED:
        raise ValueError(f"{name} is not an unbounded-loss bound")
    markov = name == "unbounded_markov"
    per_row, chosen, notes = [], [], []
    for i in range(stats.n):
        best, best_params = math.inf, None
        for term, params in _unbounded_candidates(stats, i, markov):
            if math.isfinite(term) and term < best:
                best, best_params = term, params
        if best_params is None:
            raise NumericalError(f"{name}: every grid candidate is infinite at row {i}")
        per_row.append(best)
        chosen.append(dict(best_params, row=i, value=best))
    return _result(name, per_row, chosen_params=chosen, notes=notes)


def evaluate(stats: SupersampleStatistics, name: str) -> BoundResult:
    if name in MI_FAMILY:
        return bound_mi_family(stats, name)
    if name in REALIZABLE:
        return bound_realizable(stats, name)
    if name in SH_JS:
        return bound_sh_js(stats, name)
    if name in UNBOUNDED:
        return bound_unbounded(stats, name)
    raise ValueError(f"unknown bound {name!r}")


@dataclass
class BoundReport:
    results: dict
    gen_error: tuple[float, float]
    settings: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)

    def value(self, name):
        return self.results[name].value

    def to_dict(self):
        return {
            "gen_error": {"mean": self.gen_error[0], "std_err": self.gen_error[1]},
            "bounds": {k: r.to_dict() for k, r in self.results.items()},
            "failures": dict(self.failures),
            "settings": self.settings,
        }

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, allow_nan=False) + "\n")


def evaluate_report(stats: SupersampleStatistics, names=BOUND_NAMES, strict=False) -> BoundReport:
    """Evaluate ``names``; failures become notes unless ``strict``."""
    results, failures = {}, {}
    for name in names:
        try:
            results[name] = evaluate(stats, name)
        except (FGenError, KeyError) as exc:
            if strict:
                raise
            failures[name] = f"{type(exc).__name__}: {exc}"
    cfg = stats.config
    settings = {
        "n": stats.n,
        "k1": stats.k1,
        "k2": stats.k2,
        "loss_kind": stats.loss_kind,
        "quantizer": {"kind": stats.quantizer.kind, "bin_count": stats.quantizer.bin_count, "range": list(stats.quantizer.range)},
        "c_grid": list(cfg.c_grid),
        "q_grid": list(cfg.q_grid),
        "alpha_grid": list(cfg.alpha_grid),
    }
    return BoundReport(results, stats.gen_error, settings, failures)


# -- proof-level inequalities on a single joint ------------------------------


def per_joint_proof_invariants(
    joint: JointLossMaskDistribution, c_grid=(0.25, 0.5, 1.0), tol: float = 1e-9
) -> dict:
    """Per-joint inequalities from which the oracle bounds are assembled.

    Each is a theorem for any joint with a fair mask bit and |dL| <= 1, so a
    ``False`` entry means an estimation or implementation bug.
    """
    g = joint.g_values()
    eg = joint.mean_g()
    eg2 = joint.mean_g2()
    i_kl = f_information(joint, KL)
    i_sh = f_information(joint, SH)
    i_js = f_information(joint, JS)
    out = {
        "kl_key": eg * eg <= 2.0 * (abs(eg) + eg2) * i_kl + tol,
        "sh_key": abs(eg) <= math.sqrt((2.0 * abs(eg) + 4.0 * eg2) * i_sh) + tol,
        "js_key": abs(eg) <= math.sqrt((4.0 * abs(eg) + 16.0 * eg2) * i_js) + tol,
    }
    for c in c_grid:
        inside = np.abs(g) <= c
        tg = joint.expect(np.where(inside, g, 0.0))
        tg2 = joint.expect(np.where(inside, g * g, 0.0))
        out[f"trunc_kl_{c:g}"] = abs(tg) <= math.sqrt(2.0 * (c * abs(tg) + tg2) * i_kl) + tol
    return out

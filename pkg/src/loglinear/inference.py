"""
Wald tests, linear contrasts, BIC, and BIC-driven selection over a model
lattice.
"""

import json
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.stats import norm

from .contingency import ContingencyTable
from .design import Baselines, build_design, enumerate_lattice
from .irls import FitOptions, FitResult, fit

__all__ = [
    "WaldTest",
    "Contrast",
    "SelectionRow",
    "SelectionReport",
    "two_sided_p",
    "wald_tests",
    "contrast",
    "level_contrast",
    "bic",
    "select",
]


def two_sided_p(z):
    """``2 (1 - Phi(|z|))``, computed through the survival function."""
    return float(min(1.0, 2.0 * norm.sf(abs(z))))


@dataclass(frozen=True)
class WaldTest:
    label: str
    estimate: float
    std_error: float
    z: float
    p_value: float


@dataclass(frozen=True)
class Contrast:
    weights: np.ndarray
    estimate: float
    std_error: float
    z: float
    p_value: float
    label: str = ""


def _require_converged(result: FitResult):
    if not result.converged:
        raise ValueError("inference needs a converged fit")


def wald_tests(result: FitResult):
    """One two-sided normal test per coefficient, intercept included."""
    _require_converged(result)
    tests = []
    for label, est, se in zip(result.labels, result.coefficients, result.std_errors):
        z = est / se
        tests.append(WaldTest(label, float(est), float(se), float(z), two_sided_p(z)))
    return tests


def contrast(result: FitResult, weights, label="") -> Contrast:
    """Test ``w^T beta = 0`` using the fit's covariance.

    ``weights`` is a vector over the coefficients or a mapping from
    coefficient label to weight.
    """
    _require_converged(result)
    if isinstance(weights, Mapping):
        w = np.zeros(result.n_params)
        for name, value in weights.items():
            w[result.labels.index(name)] = value
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (result.n_params,):
            raise ValueError(
                f"contrast has {w.size} weights for {result.n_params} coefficients"
            )
    estimate = float(w @ result.coefficients)
    var = float(w @ result.covariance @ w)
    scale = float(np.abs(w) @ np.abs(result.covariance) @ np.abs(w))
    if var < -1e-12 * max(scale, 1.0):
        raise ValueError(f"negative contrast variance {var:g}; covariance is not PSD")
    var = max(var, 0.0)
    se = math.sqrt(var)
    if se == 0.0:
        if estimate != 0.0:
            raise ValueError("nonzero contrast with zero variance")
        z = 0.0
    else:
        z = estimate / se
    return Contrast(w, estimate, se, z, two_sided_p(z), label)


def level_contrast(result: FitResult, factor, level_a, level_b, within=None) -> Contrast:
    """Difference between two levels of ``factor``: ``level_a - level_b``.

    Without ``within`` this compares main-effect coefficients.  With
    ``within=(other_factor, level)`` it compares the ``factor*other_factor``
    interaction coefficients at that level of the other factor, which is
    the coefficient one would read after re-baselining ``factor`` to
    ``level_b``.  Baseline levels contribute a fixed zero coefficient.
    """
    design = result.design
    spec = design.spec
    if factor not in spec.main_effects:
        raise ValueError(f"factor {factor!r} is not in model {spec.label}")
    if within is None:
        term, pick = (factor,), lambda lv: (lv,)
    else:
        other, other_level = within
        candidates = [t for t in spec.interactions if set(t) == {factor, other}]
        if not candidates:
            raise ValueError(f"model {spec.label} has no {factor}*{other} term")
        term = candidates[0]

        def pick(lv):
            return tuple(lv if name == factor else other_level for name in term)

    factors = {f.name: f for f in design.factors}
    checks = [(factor, level_a), (factor, level_b)]
    if within is not None:
        checks.append(tuple(within))
    for name, lv in checks:
        if name not in factors:
            raise ValueError(f"unknown factor {name!r}")
        factors[name].index(lv)

    w = np.zeros(result.n_params)
    for lv, sign in ((level_a, 1.0), (level_b, -1.0)):
        idx = design.index(term, pick(lv))
        if idx is not None:
            w[idx] += sign
    where = "" if within is None else f" | {within[0]}={within[1]}"
    return contrast(result, w, label=f"{factor}: {level_a} - {level_b}{where}")


def bic(result: FitResult, n_params=None, n_cells=None):
    """``-2 loglik + n_params log(n_cells)`` with the full Poisson likelihood."""
    _require_converged(result)
    k = result.n_params if n_params is None else n_params
    c = result.n_cells if n_cells is None else n_cells
    return -2.0 * result.full_log_likelihood + k * math.log(c)


@dataclass(frozen=True)
class SelectionRow:
    label: str
    bic: float
    deviance: float
    df_resid: int
    n_params: int
    error: str = None
    fit: FitResult = field(default=None, repr=False, compare=False)

    @property
    def ok(self):
        return self.error is None


@dataclass(frozen=True)
class SelectionReport:
    rows: tuple
    best: str

    def row(self, label):
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(label)

    def to_markdown(self, digits=4):
        lines = [
            "| model | BIC | Deviance | df |",
            "|---|---:|---:|---:|",
        ]
        for r in self.rows:
            if r.ok:
                lines.append(
                    f"| {r.label} | {r.bic:.{digits}f} | {_fmt_dev(r.deviance, digits)} | {r.df_resid} |"
                )
            else:
                lines.append(f"| {r.label} | failed: {r.error} | | {r.df_resid} |")
        lines.append("")
        lines.append(f"best (minimum BIC): {self.best}")
        return "\n".join(lines) + "\n"

    def to_dict(self):
        return {
            "rows": [
                {
                    "model": r.label,
                    "bic": r.bic,
                    "deviance": r.deviance,
                    "df_resid": r.df_resid,
                    "n_params": r.n_params,
                    "error": r.error,
                }
                for r in self.rows
            ],
            "best": self.best,
        }

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=indent)


def _fmt_dev(value, digits):
    # the saturated deviance prints as a bare 0
    return "0" if value == 0 else f"{value:.{digits}f}"


def select(table: ContingencyTable, lattice=None, baselines=None, options: FitOptions = None):
    """Fit every model in ``lattice`` and pick the minimum-BIC one.

    ``lattice`` defaults to the nine-model lattice over (年齡, 性別, 縣市)
    when the table has those factors, otherwise over the table's factor
    order.  A failed fit is recorded on its row and does not stop the
    others.  Ties go to the model with fewer parameters.
    """
    if lattice is None:
        preferred = ("年齡", "性別", "縣市")
        order = preferred if set(table.names) == set(preferred) else table.names
        lattice = enumerate_lattice(order)
    if baselines is None or not isinstance(baselines, Baselines):
        baselines = Baselines.for_table(table, baselines)
    rows = []
    for spec in lattice:
        design = build_design(table, spec, baselines)
        try:
            result = fit(table, design, options)
        except (ArithmeticError, RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
            rows.append(
                SelectionRow(spec.label, math.nan, math.nan, design.df_resid, design.n_params, str(exc))
            )
            continue
        rows.append(
            SelectionRow(
                spec.label, result.bic, result.deviance, result.df_resid, result.n_params, None, result
            )
        )
    candidates = [r for r in rows if r.ok]
    if not candidates:
        raise RuntimeError("every model in the lattice failed to fit")
    best = min(candidates, key=lambda r: (r.bic, r.n_params))
    return SelectionReport(tuple(rows), best.label)

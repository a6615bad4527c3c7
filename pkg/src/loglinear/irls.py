"""
Poisson log-linear fitting by Fisher scoring (IRLS), closed-form MLEs for
the decomposable three-factor models, and likelihood helpers.
"""

import json
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
from scipy.special import gammaln, xlogy

from .contingency import ContingencyTable
from .design import DesignMatrix, ModelSpec

__all__ = [
    "FitResult",
    "FitOptions",
    "ConvergenceError",
    "RankDeficientError",
    "fit",
    "closed_form_fit",
    "full_log_likelihood",
    "poisson_deviance",
    "closed_form_class",
]


class ConvergenceError(RuntimeError):
    """IRLS hit the iteration limit or could not reduce the deviance."""


class RankDeficientError(np.linalg.LinAlgError):
    """The design matrix does not have full column rank."""


@dataclass(frozen=True)
class FitOptions:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    score_tol: float = 1e-6
    max_iter: int = 100
    max_halvings: int = 20


@dataclass(frozen=True, eq=False)
class FitResult:
    """Maximum-likelihood fit of a Poisson log-linear model.

    ``fitted_means`` and ``observed`` are flat in table storage order;
    ``covariance`` is the inverse Fisher information at the estimate.
    """

    labels: tuple
    coefficients: np.ndarray
    covariance: np.ndarray
    fitted_means: np.ndarray
    observed: np.ndarray
    deviance: float
    full_log_likelihood: float
    iterations: int
    converged: bool
    design: DesignMatrix = None
    model: str = ""

    @property
    def n_params(self):
        return len(self.coefficients)

    @property
    def n_cells(self):
        return len(self.fitted_means)

    @property
    def df_resid(self):
        return self.n_cells - self.n_params

    @property
    def std_errors(self):
        return np.sqrt(np.diag(self.covariance))

    @property
    def bic(self):
        return -2.0 * self.full_log_likelihood + self.n_params * math.log(self.n_cells)

    def score(self):
        """Gradient of the log-likelihood, ``X^T (y - mu)``."""
        return self.design.matrix.T @ (self.observed - self.fitted_means)

    def fitted_table(self):
        return ContingencyTable(self.design.factors, self.fitted_means)

    def coefficient(self, label):
        return float(self.coefficients[self.labels.index(label)])

    def to_dict(self):
        return {
            "model": self.model,
            "labels": list(self.labels),
            "coefficients": self.coefficients.tolist(),
            "std_errors": self.std_errors.tolist(),
            "covariance": self.covariance.tolist(),
            "fitted_means": self.fitted_means.tolist(),
            "observed": self.observed.tolist(),
            "deviance": self.deviance,
            "full_log_likelihood": self.full_log_likelihood,
            "bic": self.bic,
            "df_resid": self.df_resid,
            "iterations": self.iterations,
            "converged": self.converged,
        }

    def to_json(self, indent=2):
        # json writes floats with repr(), so values round-trip exactly
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=indent)

    @classmethod
    def from_dict(cls, data, design=None):
        return cls(
            labels=tuple(data["labels"]),
            coefficients=np.array(data["coefficients"], dtype=float),
            covariance=np.array(data["covariance"], dtype=float),
            fitted_means=np.array(data["fitted_means"], dtype=float),
            observed=np.array(data["observed"], dtype=float),
            deviance=float(data["deviance"]),
            full_log_likelihood=float(data["full_log_likelihood"]),
            iterations=int(data["iterations"]),
            converged=bool(data["converged"]),
            design=design,
            model=data.get("model", ""),
        )

    @classmethod
    def from_json(cls, text, design=None):
        return cls.from_dict(json.loads(text), design)


def poisson_deviance(y, mu):
    """``2 sum[y log(y/mu) - (y - mu)]`` with ``0 log 0 = 0``."""
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    return float(2.0 * np.sum(xlogy(y, y) - xlogy(y, mu) - (y - mu)))


def full_log_likelihood(table, fitted_means):
    """Poisson log-likelihood including the ``-log(y!)`` terms.

    Raises
    ------
    ValueError
        If a fitted mean is negative, or zero where the count is positive.
    """
    y = table.counts if isinstance(table, ContingencyTable) else np.ravel(table)
    y = np.asarray(y, dtype=float)
    mu = np.ravel(np.asarray(fitted_means, dtype=float))
    if mu.shape != y.shape:
        raise ValueError("fitted means do not match the table's cells")
    if np.any(mu < 0):
        raise ValueError("fitted means must be nonnegative")
    if np.any((mu == 0) & (y > 0)):
        raise ValueError("zero fitted mean for a positive count")
    return float(np.sum(xlogy(y, mu) - mu - gammaln(y + 1.0)))


def _solve_normal(X, w, z):
    """Solve ``(X^T W X) b = X^T W z``.

    Cholesky first; on failure, QR of ``sqrt(W) X`` with an explicit rank
    check.  Returns the solution and the inverse information matrix.
    """
    sw = np.sqrt(w)
    Xw = X * sw[:, None]
    info = Xw.T @ Xw
    rhs = Xw.T @ (sw * z)
    try:
        factor = la.cho_factor(info, lower=False, check_finite=True)
        beta = la.cho_solve(factor, rhs)
        cov = la.cho_solve(factor, np.eye(info.shape[0]))
    except la.LinAlgError:
        q, r = np.linalg.qr(Xw)
        d = np.abs(np.diag(r))
        if d.size == 0 or d.min() <= d.max() * X.shape[0] * np.finfo(float).eps:
            raise RankDeficientError("weighted design is rank deficient") from None
        beta = la.solve_triangular(r, q.T @ (sw * z))
        rinv = la.solve_triangular(r, np.eye(r.shape[0]))
        cov = rinv @ rinv.T
    return beta, (cov + cov.T) / 2.0


def fit(table: ContingencyTable, design: DesignMatrix, options: FitOptions = None) -> FitResult:
    """Maximum-likelihood fit of ``log mu = X beta`` to the table's counts.

    Starts from ``log(y + 0.5)`` projected onto the column space, then
    iterates Fisher scoring with step-halving whenever a step raises the
    deviance.  Convergence needs a small deviance change and a score whose
    largest component is at most ``options.score_tol``.  A square
    (saturated) design is solved directly and reproduces the counts
    exactly.

    Raises
    ------
    RankDeficientError
        If the design lacks full column rank.
    ConvergenceError
        On hitting ``max_iter`` or exhausting the step-halvings.
    ValueError
        If the design rows do not match the table, or a saturated model
        meets a zero count.
    """
    opts = options or FitOptions()
    X = np.asarray(design.matrix, dtype=float)
    y = np.asarray(table.counts, dtype=float)
    n, p = X.shape
    if n != y.size:
        raise ValueError(f"design has {n} rows but the table has {y.size} cells")
    if np.linalg.matrix_rank(X) < p:
        raise RankDeficientError(f"design with {p} columns has rank < {p}")

    def make(beta, cov, mu, dev, it, ok):
        return FitResult(
            labels=design.labels,
            coefficients=beta,
            covariance=cov,
            fitted_means=mu,
            observed=y,
            deviance=dev,
            full_log_likelihood=full_log_likelihood(y, mu),
            iterations=it,
            converged=ok,
            design=design,
            model=design.spec.label,
        )

    if n == p:
        if np.any(y <= 0):
            raise ValueError("a saturated model needs strictly positive counts")
        beta = la.solve(X, np.log(y))
        _, cov = _solve_normal(X, y, np.log(y))
        return make(beta, cov, y.copy(), 0.0, 1, True)

    # starting values: weighted projection of log(y + 0.5)
    beta, _ = _solve_normal(X, y + 0.5, np.log(y + 0.5))
    eta = X @ beta
    mu = np.exp(eta)
    dev = poisson_deviance(y, mu)

    for it in range(1, opts.max_iter + 1):
        z = eta + (y - mu) / mu
        step_beta, _ = _solve_normal(X, mu, z)
        for _ in range(opts.max_halvings + 1):
            new_eta = X @ step_beta
            new_mu = np.exp(new_eta)
            new_dev = poisson_deviance(y, new_mu)
            if np.isfinite(new_dev) and new_dev <= dev * (1 + 1e-12) + opts.abs_tol:
                break
            step_beta = (beta + step_beta) / 2.0
        else:
            raise ConvergenceError(
                f"deviance increased after {opts.max_halvings} step-halvings (iteration {it})"
            )
        change = abs(dev - new_dev)
        beta, eta, mu, dev = step_beta, new_eta, new_mu, new_dev
        small = change < opts.rel_tol * abs(dev) or change < opts.abs_tol
        if small and np.max(np.abs(X.T @ (y - mu))) <= opts.score_tol:
            _, cov = _solve_normal(X, mu, eta)
            return make(beta, cov, mu, dev, it, True)

    raise ConvergenceError(f"no convergence within {opts.max_iter} iterations")


def closed_form_class(spec: ModelSpec):
    """Classify a three-factor spec as ``"mutual"``, ``"joint"`` or
    ``"conditional"`` independence, or return None."""
    if len(spec.main_effects) != 3:
        return None
    inters = spec.interactions
    if not inters:
        return "mutual"
    if len(inters) == 1 and len(inters[0]) == 2:
        return "joint"
    if len(inters) == 2 and all(len(t) == 2 for t in inters):
        if set(inters[0]) & set(inters[1]):
            return "conditional"
    return None


def closed_form_fit(table: ContingencyTable, spec: ModelSpec) -> np.ndarray:
    """Direct MLE of the fitted means for decomposable three-factor models.

    mutual:       mu_ijk = n_i++ n_+j+ n_++k / N^2
    joint:        mu_ijk = n_ij+ n_++k / N        (XY independent of Z)
    conditional:  mu_ijk = n_i+k n_+jk / n_++k    (X independent of Y given Z)

    Returns the means flat in table storage order.

    Raises
    ------
    ValueError
        If the spec is not one of the three classes, or a conditioning
        margin is zero.
    """
    kind = closed_form_class(spec)
    if kind is None:
        raise ValueError(f"no closed form for model {spec.label}")
    names = table.names
    if set(spec.main_effects) != set(names) or len(names) != 3:
        raise ValueError("closed forms need a three-factor table matching the model")
    y = table.values.astype(float)

    def marg(keep):
        axes = tuple(i for i, nm in enumerate(names) if nm not in keep)
        return y.sum(axis=axes, keepdims=True)

    total = y.sum()
    if kind == "mutual":
        if total == 0:
            raise ValueError("zero table total")
        mu = marg({names[0]}) * marg({names[1]}) * marg({names[2]}) / total**2
    elif kind == "joint":
        pair = set(spec.interactions[0])
        (rest,) = set(names) - pair
        if total == 0:
            raise ValueError("zero table total")
        mu = marg(pair) * marg({rest}) / total
    else:
        a, b = (set(t) for t in spec.interactions)
        (given,) = a & b
        cond = marg({given})
        if np.any(cond == 0):
            raise ValueError(f"zero margin for conditioning factor {given!r}")
        mu = marg(a) * marg(b) / cond
    return np.broadcast_to(mu, y.shape).ravel().copy()

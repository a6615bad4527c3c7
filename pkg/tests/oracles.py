"""Independent reference computations used only by the tests."""

import itertools
import math

import numpy as np


def brute_margin(values, names, keep):
    """Margin by explicit enumeration of every cell."""
    keep_axes = [i for i, n in enumerate(names) if n in keep]
    shape = [values.shape[i] for i in keep_axes]
    out = np.zeros(shape, dtype=values.dtype)
    for idx in itertools.product(*(range(s) for s in values.shape)):
        out[tuple(idx[i] for i in keep_axes)] += values[idx]
    return out


def ipf(counts, terms, names, tol=1e-13, max_iter=10000):
    """Iterative proportional fitting of a hierarchical log-linear model.

    Repeatedly rescales the fitted table to match each term's observed
    margin; converges to the Poisson MLE for any hierarchical model.
    """
    y = np.asarray(counts, dtype=float)
    mu = np.ones_like(y) * y.sum() / y.size
    axes_of = [tuple(i for i, n in enumerate(names) if n not in term) for term in terms]
    for _ in range(max_iter):
        worst = 0.0
        for axes in axes_of:
            obs = y.sum(axis=axes, keepdims=True)
            fitted = mu.sum(axis=axes, keepdims=True)
            worst = max(worst, float(np.max(np.abs(obs - fitted))))
            ratio = np.divide(obs, fitted, out=np.zeros_like(obs), where=fitted > 0)
            mu = mu * ratio
        if worst < tol * max(1.0, y.sum()):
            return mu
    raise RuntimeError("IPF did not converge")


def loglik(y, X, beta):
    eta = X @ beta
    return float(np.sum(y * eta - np.exp(eta)) - sum(math.lgamma(v + 1) for v in y))


def fd_gradient(y, X, beta, h=1e-5):
    g = np.zeros_like(beta)
    for j in range(len(beta)):
        e = np.zeros_like(beta)
        e[j] = h
        g[j] = (loglik(y, X, beta + e) - loglik(y, X, beta - e)) / (2 * h)
    return g


def fd_hessian(y, X, beta, h=1e-4):
    """Central differences of the analytic-free log-likelihood."""
    p = len(beta)
    H = np.zeros((p, p))
    for j in range(p):
        e = np.zeros(p)
        e[j] = h
        H[:, j] = (fd_gradient(y, X, beta + e, h) - fd_gradient(y, X, beta - e, h)) / (2 * h)
    return (H + H.T) / 2

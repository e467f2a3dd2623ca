"""Statistical analyses applied to simulation results: Welch's two-sample
t-test (p-value via the regularized incomplete beta function), SEM,
covariance-matrix overlap, and weight-update direction diagnostics."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .numerics import pearson, top_eigenpairs

__all__ = ["TTestResult", "two_sample_t", "sem", "covariance_overlap",
           "weight_update_correlation", "pca_spread"]

_BETA_TOL = 1e-12
_BETA_MAX_ITER = 500


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (Lentz's method)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    frac = d
    for m in range(1, _BETA_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        frac *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        frac *= delta
        if abs(delta - 1.0) < _BETA_TOL:
            return frac
    raise RuntimeError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def _t_sf_two_sided(t: float, df: float) -> float:
    # Two-sided p for Student's t: I_{df/(df+t^2)}(df/2, 1/2).
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    x = df / (df + t * t)
    return regularized_incomplete_beta(df / 2.0, 0.5, x)


def _stars(p: float) -> str:
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return "ns"


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: float
    p: float
    stars: str


def two_sample_t(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """Welch's unequal-variance t-test with a two-sided p-value."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise ValueError("each sample needs at least two observations")
    va = a.var(ddof=1) / a.size
    vb = b.var(ddof=1) / b.size
    if va + vb == 0.0:
        if a.mean() == b.mean():
            return TTestResult(t=0.0, df=float(a.size + b.size - 2), p=1.0, stars="ns")
        raise ValueError("both samples have zero variance")
    t = float((a.mean() - b.mean()) / math.sqrt(va + vb))
    df = float((va + vb) ** 2 / (va ** 2 / (a.size - 1) + vb ** 2 / (b.size - 1)))
    p = float(_t_sf_two_sided(t, df))
    return TTestResult(t=t, df=df, p=p, stars=_stars(p))


def sem(x: Sequence[float]) -> float:
    """Standard error of the mean: sample std over sqrt(n)."""
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two observations")
    return float(x.std(ddof=1) / math.sqrt(x.size))


def _flat_cov(h_set: Sequence[np.ndarray]) -> np.ndarray:
    h = np.vstack([np.asarray(b, dtype=float).reshape(-1, np.asarray(h_set[0]).shape[-1])
                   for b in h_set])
    hc = h - h.mean(axis=0)
    return ((hc.T @ hc) / hc.shape[0]).ravel()


def covariance_overlap(h_set_a: Sequence[np.ndarray], h_set_b: Sequence[np.ndarray]) -> float:
    """Pearson r between the flattened activity covariance matrices of two sets."""
    return pearson(_flat_cov(h_set_a), _flat_cov(h_set_b))


def weight_update_correlation(dw_obs: Sequence[np.ndarray], dw_pred: np.ndarray,
                              mode: str = "per_trial") -> np.ndarray:
    """Correlation of observed weight updates with a fixed predicted direction.

    per_trial correlates each update with the prediction; cumulative_mean
    correlates the running mean of the updates instead.
    """
    pred = np.asarray(dw_pred, dtype=float).ravel()
    flat = np.array([np.asarray(d, dtype=float).ravel() for d in dw_obs])
    if flat.shape[1] != pred.size:
        raise ValueError("update and prediction shapes differ")
    if mode == "cumulative_mean":
        flat = np.cumsum(flat, axis=0) / np.arange(1, flat.shape[0] + 1)[:, None]
    elif mode != "per_trial":
        raise ValueError(f"unknown mode {mode!r}")
    return np.array([pearson(row, pred) for row in flat])


def pca_spread(dw_obs: Sequence[np.ndarray], k: int) -> np.ndarray:
    """Top-k explained-variance fractions of a set of flattened weight updates.

    Uses the Gram matrix when it is smaller than the covariance, which leaves
    the nonzero spectrum unchanged.
    """
    flat = np.array([np.asarray(d, dtype=float).ravel() for d in dw_obs])
    n, d = flat.shape
    if n < k:
        raise ValueError(f"need at least {k} updates, got {n}")
    xc = flat - flat.mean(axis=0)
    if n <= d:
        small = (xc @ xc.T) / n
    else:
        small = (xc.T @ xc) / n
    total = float(np.trace(small))
    if total <= 0.0:
        raise ValueError("updates have zero variance")
    _, eigvals = top_eigenpairs(small, min(k, small.shape[0]))
    frac = np.clip(eigvals, 0.0, None) / total
    return frac[:k]

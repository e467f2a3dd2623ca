"""Flow-field change inference.

The one-step map of activity is estimated by linear autoregression on blocks
of trials with frozen weights; learning shifts that map by an amount
proportional to the recurrent weight change. Hypothesis-specific predictions
of the weight-change direction are built from mid-learning activity and
errors, and the flow-field change correlation (FFCC) scores each hypothesis
as the mean cosine between observed and predicted activity displacements over
held-out states.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .numerics import default_ar_ridge, least_squares
from .rnn import NoiseModel

__all__ = ["ArFit", "FlowFieldDelta", "FfccResult", "fit_autoregression",
           "delta_f_observed", "predict_dw_sl", "predict_dw_rl", "ffcc"]

DEGENERATE_NORM = 1e-12


@dataclass(frozen=True)
class ArFit:
    """Least-squares one-step propagator h^{t+1} ~ a h^t over a fixed-weight block."""
    a: np.ndarray
    block: str
    n_trials_used: int
    ridge: float


@dataclass(frozen=True)
class FlowFieldDelta:
    """Linear flow-field change: delta applied to a state gives its shift.

    Predicted deltas are direction-only (scale_free); observed ones carry the
    magnitude implied by the autoregression difference.
    """
    delta: np.ndarray
    scale_free: bool = False


@dataclass(frozen=True)
class FfccResult:
    value: float
    used: int
    skipped: int


def _transition_pairs(h_trials: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Consecutive state pairs pooled within trials, never across boundaries."""
    xs, ys = [], []
    for h in h_trials:
        h = np.asarray(h, dtype=float)
        if h.shape[0] >= 2:
            xs.append(h[:-1])
            ys.append(h[1:])
    if not xs:
        raise ValueError("need at least one trial with two timesteps")
    return np.vstack(xs).T, np.vstack(ys).T


def fit_autoregression(h_trials: Sequence[np.ndarray], ridge: Optional[float] = None,
                       block: str = "early") -> ArFit:
    """Fit the one-step propagator on a block of activity trajectories."""
    x, y = _transition_pairs(h_trials)
    if ridge is None:
        ridge = default_ar_ridge(x)
    a = least_squares(x, y, ridge)
    return ArFit(a=a, block=block, n_trials_used=len(h_trials), ridge=ridge)


def delta_f_observed(early: ArFit, late: ArFit) -> FlowFieldDelta:
    if early.a.shape != late.a.shape:
        raise ValueError("block fits have different sizes")
    return FlowFieldDelta(delta=late.a - early.a, scale_free=False)


def _error_activity_outer(eps_trials: Sequence[np.ndarray],
                          h_trials: Sequence[np.ndarray]) -> np.ndarray:
    if len(eps_trials) == 0:
        raise ValueError("empty mid-trial set")
    total = None
    for eps, h in zip(eps_trials, h_trials):
        contrib = np.asarray(eps, dtype=float).T @ np.asarray(h, dtype=float)
        total = contrib if total is None else total + contrib
    return total  # N_y x N


def predict_dw_sl(h_trials: Sequence[np.ndarray], eps_trials: Sequence[np.ndarray],
                  m: np.ndarray) -> FlowFieldDelta:
    """Supervised-hypothesis direction: m (sum_nt eps h^T)."""
    return FlowFieldDelta(delta=m @ _error_activity_outer(eps_trials, h_trials),
                          scale_free=True)


def predict_dw_rl(h_trials: Sequence[np.ndarray], eps_trials: Sequence[np.ndarray],
                  w_bmi: np.ndarray, noise: NoiseModel) -> FlowFieldDelta:
    """Reinforcement-hypothesis direction: Sigma w_bmi^T (sum_nt eps h^T).

    With isotropic noise this is proportional to the supervised prediction
    evaluated at m = w_bmi^T.
    """
    outer = _error_activity_outer(eps_trials, h_trials)
    n = w_bmi.shape[1]
    if noise.kind == "isotropic":
        delta = noise.sigma2 * (w_bmi.T @ outer)
    else:
        delta = noise.covariance(n) @ w_bmi.T @ outer
    return FlowFieldDelta(delta=delta, scale_free=True)


def ffcc(obs: FlowFieldDelta, pred: FlowFieldDelta,
         h_test_trials: Sequence[np.ndarray]) -> FfccResult:
    """Mean cosine between observed and predicted flow-field changes.

    Evaluated at every logged test state; terms where either displacement is
    numerically zero are skipped and counted.
    """
    h = np.vstack([np.asarray(t, dtype=float) for t in h_test_trials])
    a = h @ obs.delta.T
    b = h @ pred.delta.T
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    ok = (na > DEGENERATE_NORM) & (nb > DEGENERATE_NORM)
    skipped = int((~ok).sum())
    if not ok.any():
        raise ValueError("all flow-field change terms are degenerate")
    cos = np.einsum("ij,ij->i", a[ok], b[ok]) / (na[ok] * nb[ok])
    return FfccResult(value=float(cos.mean()), used=int(ok.sum()), skipped=skipped)

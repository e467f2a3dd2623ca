"""Credit-assignment mappings: controlled-alignment construction, decoder
perturbation, and data-driven estimation from activity and cursor logs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import cosine_similarity, least_squares, top_eigenpairs

__all__ = ["AlignmentError", "make_aligned_matrix", "perturb_decoder",
           "EstimatedCreditMap", "estimate_credit_map"]

_MAX_RESAMPLES = 50


class AlignmentError(RuntimeError):
    """Raised when no entry subset reaches the requested similarity."""

    def __init__(self, alpha: float, best: float):
        super().__init__(f"could not reach similarity {alpha:.3f}; best achieved {best:.3f}")
        self.best = best


def _replace_subset(base_flat: np.ndarray, k: int, mean: float, std: float,
                    rng: np.random.Generator) -> np.ndarray:
    out = base_flat.copy()
    if k > 0:
        idx = rng.choice(base_flat.size, size=k, replace=False)
        out[idx] = rng.normal(mean, std, size=k)
    return out


def make_aligned_matrix(base: np.ndarray, alpha: float, rng: np.random.Generator,
                        tol: float = 0.02) -> np.ndarray:
    """Matrix with cosine similarity alpha (within tol) to ``base``.

    Built by replacing a random entry subset with draws matched to the scale
    of base's entries; the subset size is found by binary search with bounded
    resampling per size.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must be in (0, 1]")
    base = np.asarray(base, dtype=float)
    if alpha + tol >= 1.0:
        return base.copy()
    flat = base.ravel()
    mean, std = float(flat.mean()), float(flat.std())
    if std == 0.0:
        std = max(abs(mean), 1.0)
    lo, hi = 0, flat.size
    best_sim, best_mat = -2.0, None
    for _ in range(64):
        if lo > hi:
            break
        k = (lo + hi) // 2
        sims = []
        for _ in range(_MAX_RESAMPLES):
            cand_flat = _replace_subset(flat, k, mean, std, rng)
            cand = cand_flat.reshape(base.shape)
            sim = cosine_similarity(cand, base)
            if abs(sim - alpha) <= tol:
                return cand
            if abs(sim - alpha) < abs(best_sim - alpha):
                best_sim, best_mat = sim, cand
            sims.append(sim)
        # larger subsets lower the expected similarity
        if float(np.mean(sims)) > alpha:
            lo = k + 1
        else:
            hi = k - 1
    raise AlignmentError(alpha, best_sim)


def perturb_decoder(w_bmi0: np.ndarray, alpha: float, rng: np.random.Generator,
                    tol: float = 0.02) -> np.ndarray:
    """New decoder at similarity alpha to the old one.

    Columns that are exactly zero in w_bmi0 (non-readout units) stay zero.
    """
    w_bmi0 = np.asarray(w_bmi0, dtype=float)
    mask = np.any(w_bmi0 != 0.0, axis=0)
    if mask.all():
        return make_aligned_matrix(w_bmi0, alpha, rng, tol)
    sub = make_aligned_matrix(w_bmi0[:, mask], alpha, rng, tol)
    out = np.zeros_like(w_bmi0)
    out[:, mask] = sub
    return out


@dataclass
class EstimatedCreditMap:
    """PCA + regression estimate of the credit mapping, with its ingredients."""
    m_hat: np.ndarray          # N x N_y, same orientation as the true mapping
    components: np.ndarray     # k x N principal axes of the activity
    coefficients: np.ndarray   # N_y x k cursor regression onto PC scores
    k: int
    ridge: float


def estimate_credit_map(h_blocks: list[np.ndarray], cursor_blocks: list[np.ndarray],
                        k: int, ridge: float = 1e-6) -> EstimatedCreditMap:
    """Estimate the credit mapping from observed activity and cursor positions.

    Activity from all trials is pooled and mean-centered, its top-k principal
    axes extracted, and the (centered) cursor regressed on the PC scores; the
    composite map, transposed into the mapping's orientation, is the estimate.
    """
    h = np.vstack([np.asarray(b, dtype=float).reshape(-1, h_blocks[0].shape[-1])
                   for b in h_blocks])
    cur = np.vstack([np.asarray(b, dtype=float).reshape(-1, cursor_blocks[0].shape[-1])
                     for b in cursor_blocks])
    if h.shape[0] != cur.shape[0]:
        raise ValueError("activity and cursor sample counts differ")
    n = h.shape[1]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}]")
    hc = h - h.mean(axis=0)
    cov = (hc.T @ hc) / hc.shape[0]
    comps, eigvals = top_eigenpairs(cov, k)
    eff_rank = int(np.sum(eigvals > 1e-12 * max(eigvals[0], 1e-300)))
    if eff_rank < k:
        raise ValueError(f"requested k={k} exceeds effective activity rank {eff_rank}")
    scores = comps @ hc.T                       # k x samples
    cur_c = (cur - cur.mean(axis=0)).T          # N_y x samples
    coeffs = least_squares(scores, cur_c, ridge)
    m_hat = (coeffs @ comps).T                  # N x N_y
    return EstimatedCreditMap(m_hat=m_hat, components=comps, coefficients=coeffs,
                              k=k, ridge=ridge)

"""Deterministic random generation and dense linear algebra primitives.

All matrices are float64 numpy arrays in row-major order. Random state is
never shared: every independent consumer derives its own generator with
:func:`spawn_rng` so that changing how one stage draws can never perturb
another stage's stream.
"""
from __future__ import annotations

import hashlib

import numpy as np

__all__ = [
    "make_rng",
    "spawn_rng",
    "gaussian_matrix",
    "uniform_matrix",
    "cosine_similarity",
    "least_squares",
    "top_eigenpairs",
    "pearson",
    "default_ar_ridge",
]


class NumericsError(ValueError):
    """Raised on contract violations (shape mismatch, degenerate input)."""


def make_rng(seed: int) -> np.random.Generator:
    """Generator with a reproducible stream for a 64-bit seed."""
    return np.random.default_rng(np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF))


def _label_entropy(label: str) -> int:
    # Stable across processes; never use the builtin hash() here.
    return int.from_bytes(hashlib.blake2s(label.encode("utf-8"), digest_size=8).digest(), "little")


def spawn_rng(seed: int, label: str) -> np.random.Generator:
    """Child generator for a named stream of a master seed.

    Equal (seed, label) pairs yield identical streams in any process; distinct
    labels yield independent streams.
    """
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, _label_entropy(label)])
    return np.random.default_rng(ss)


def gaussian_matrix(rows: int, cols: int, mean: float, std: float,
                    rng: np.random.Generator) -> np.ndarray:
    if std < 0:
        raise NumericsError(f"std must be >= 0, got {std}")
    return rng.normal(mean, std, size=(rows, cols))


def uniform_matrix(rows: int, cols: int, lo: float, hi: float,
                   rng: np.random.Generator) -> np.ndarray:
    if lo > hi:
        raise NumericsError(f"need lo <= hi, got [{lo}, {hi}]")
    return rng.uniform(lo, hi, size=(rows, cols))


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of two matrices flattened to vectors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise NumericsError(f"shape mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise NumericsError("cosine similarity undefined for an all-zero matrix")
    return float(np.clip(np.dot(a.ravel(), b.ravel()) / (na * nb), -1.0, 1.0))


def least_squares(x: np.ndarray, y: np.ndarray, ridge: float = 0.0) -> np.ndarray:
    """Solve A = argmin ||Y - A X||^2 + ridge ||A||^2 with samples as columns.

    x is d x n, y is m x n; returns the m x d map A = Y X^T (X X^T + ridge I)^-1.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or y.ndim != 2 or x.shape[1] != y.shape[1]:
        raise NumericsError(f"incompatible sample counts: X {x.shape}, Y {y.shape}")
    if ridge < 0:
        raise NumericsError("ridge must be >= 0")
    d = x.shape[0]
    gram = x @ x.T + ridge * np.eye(d)
    try:
        # gram is symmetric positive (semi-)definite; solve for A^T.
        at = np.linalg.solve(gram, x @ y.T)
    except np.linalg.LinAlgError as exc:
        raise NumericsError("singular normal matrix; pass a positive ridge") from exc
    return at.T


def top_eigenpairs(s: np.ndarray, k: int, sym_tol: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
    """Top-k eigenpairs of a symmetric matrix, eigenvalues descending.

    Returns (vectors, values) where vectors is k x d with orthonormal rows.
    """
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise NumericsError(f"expected square matrix, got {s.shape}")
    d = s.shape[0]
    if not 1 <= k <= d:
        raise NumericsError(f"k must be in [1, {d}], got {k}")
    scale = max(np.abs(s).max(), 1.0)
    if np.abs(s - s.T).max() > sym_tol * scale:
        raise NumericsError("matrix is not symmetric within tolerance")
    values, vectors = np.linalg.eigh((s + s.T) / 2.0)
    order = np.argsort(values)[::-1][:k]
    return vectors[:, order].T.copy(), values[order].copy()


def pearson(x: np.ndarray, y: np.ndarray) -> float:
    """Pearson correlation of two equal-length sequences."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size or x.size < 2:
        raise NumericsError("need two sequences of equal length >= 2")
    xc = x - x.mean()
    yc = y - y.mean()
    vx = np.dot(xc, xc)
    vy = np.dot(yc, yc)
    if vx == 0.0 or vy == 0.0:
        raise NumericsError("zero variance input")
    return float(np.clip(np.dot(xc, yc) / np.sqrt(vx * vy), -1.0, 1.0))


def default_ar_ridge(x: np.ndarray) -> float:
    """Default ridge for autoregression fits: 1e-6 * trace(X X^T) / d."""
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    return 1e-6 * float(np.einsum("ij,ij->", x, x)) / d

"""Leaky recurrent network with injected noise and a fixed BMI readout.

State update per timestep:

    u^t = W_rec h^{t-1} + W_in x^t + W_fb y^{t-1}
    h^t = (1 - 1/tau) h^{t-1} + (1/tau) phi(u^t) + xi^t
    y^t = W_bmi h^t (+ readout noise)

Position readout drives the cursor directly; velocity readout integrates it
with time constant tau_r. Feedback is strictly causal (previous step's y).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .task import TaskSpec, input_at, loss_and_reward, target_output

__all__ = [
    "RnnParams",
    "NoiseModel",
    "RnnState",
    "TrialRecord",
    "step",
    "run_trial",
    "sample_noise",
    "build_low_rank_basis",
]


@dataclass
class RnnParams:
    """Network weights plus time constants; shapes are validated on creation."""
    w_rec: np.ndarray           # N x N
    w_in: np.ndarray            # N x N_x
    w_fb: np.ndarray            # N x N_y
    w_bmi: np.ndarray           # N_y x N
    tau: float = 10.0
    activation: str = "tanh"    # or "linear"
    readout_mode: str = "position"  # or "velocity"
    tau_r: float = 10.0

    def __post_init__(self):
        n = self.w_rec.shape[0]
        if self.w_rec.shape != (n, n):
            raise ValueError(f"w_rec must be square, got {self.w_rec.shape}")
        if self.w_in.shape[0] != n or self.w_fb.shape[0] != n:
            raise ValueError("w_in / w_fb row count must match network size")
        if self.w_bmi.shape != (self.w_fb.shape[1], n):
            raise ValueError(f"w_bmi shape {self.w_bmi.shape} inconsistent with w_fb {self.w_fb.shape}")
        if self.tau < 1.0 or self.tau_r < 1.0:
            raise ValueError("time constants must be >= 1 timestep")
        if self.activation not in ("tanh", "linear"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.readout_mode not in ("position", "velocity"):
            raise ValueError(f"unknown readout_mode {self.readout_mode!r}")

    @property
    def n(self) -> int:
        return self.w_rec.shape[0]

    @property
    def n_in(self) -> int:
        return self.w_in.shape[1]

    @property
    def n_out(self) -> int:
        return self.w_bmi.shape[0]

    def phi(self, u: np.ndarray) -> np.ndarray:
        return np.tanh(u) if self.activation == "tanh" else u

    def phi_prime(self, u: np.ndarray) -> np.ndarray:
        if self.activation == "tanh":
            th = np.tanh(u)
            return 1.0 - th * th
        return np.ones_like(u)


@dataclass(frozen=True)
class NoiseModel:
    """Additive state noise: isotropic N(0, sigma2 I) or rank-d N(0, sigma2 B B^T)."""
    kind: str = "isotropic"     # or "low_rank"
    sigma2: float = 0.0
    basis: Optional[np.ndarray] = None   # N x d, orthonormal columns (low_rank only)

    def __post_init__(self):
        if self.kind not in ("isotropic", "low_rank"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be >= 0")
        if self.kind == "low_rank":
            if self.basis is None:
                raise ValueError("low_rank noise requires a basis")
            gram = self.basis.T @ self.basis
            if np.abs(gram - np.eye(gram.shape[0])).max() > 1e-10:
                raise ValueError("low_rank basis columns must be orthonormal")

    def covariance(self, n: int) -> np.ndarray:
        """Effective covariance matrix in the N-dimensional state space."""
        if self.kind == "isotropic":
            return self.sigma2 * np.eye(n)
        return self.sigma2 * (self.basis @ self.basis.T)


@dataclass
class RnnState:
    h: np.ndarray
    cursor: np.ndarray
    y_prev: np.ndarray

    @classmethod
    def zeros(cls, n: int, n_out: int) -> "RnnState":
        return cls(h=np.zeros(n), cursor=np.zeros(n_out), y_prev=np.zeros(n_out))


@dataclass
class TrialRecord:
    """Full per-trial log consumed by learning rules and analysis."""
    target_id: int
    x: np.ndarray        # T x N_x
    h: np.ndarray        # T x N
    u: np.ndarray        # T x N
    xi: np.ndarray       # T x N
    y: np.ndarray        # T x N_y
    y_star: np.ndarray   # T x N_y
    eps: np.ndarray      # T x N_y
    cursor: np.ndarray   # T x N_y
    reward: np.ndarray   # T
    loss: float


def sample_noise(noise: NoiseModel, rng: np.random.Generator, n: int) -> np.ndarray:
    """Zero-mean draw with the model's covariance; low-rank draws stay in span(basis)."""
    if noise.sigma2 == 0.0:
        return np.zeros(n)
    std = np.sqrt(noise.sigma2)
    if noise.kind == "isotropic":
        return rng.normal(0.0, std, size=n)
    d = noise.basis.shape[1]
    return noise.basis @ rng.normal(0.0, std, size=d)


def build_low_rank_basis(preferred: np.ndarray, d: int, n: int,
                         rng: np.random.Generator) -> np.ndarray:
    """Orthonormal N x d basis whose first columns span a preferred 2-d subspace.

    ``preferred`` is an N x 2 map (or its 2 x N transpose); its span fixes the
    leading basis directions via QR, and the remaining d - 2 columns are random
    orthonormal completions.
    """
    pref = np.asarray(preferred, dtype=float)
    if pref.shape[0] != n:
        if pref.shape[1] != n:
            raise ValueError(f"preferred map has no axis of length {n}: {pref.shape}")
        pref = pref.T
    k = pref.shape[1]
    if not k <= d <= n:
        raise ValueError(f"need {k} <= d <= {n}, got d={d}")
    extra = rng.normal(0.0, 1.0, size=(n, d - k)) if d > k else np.zeros((n, 0))
    q, r = np.linalg.qr(np.hstack([pref, extra]))
    if np.abs(np.diag(r)[:d]).min() < 1e-12:
        raise ValueError("preferred directions are rank deficient")
    return q[:, :d]


def step(params: RnnParams, state: RnnState, x_t: np.ndarray,
         xi_t: np.ndarray, y_noise_t: Optional[np.ndarray] = None
         ) -> tuple[RnnState, np.ndarray]:
    """Advance one timestep with a given noise draw; returns (new state, u_t)."""
    u = params.w_rec @ state.h + params.w_in @ x_t + params.w_fb @ state.y_prev
    inv_tau = 1.0 / params.tau
    h = (1.0 - inv_tau) * state.h + inv_tau * params.phi(u) + xi_t
    y = params.w_bmi @ h
    if y_noise_t is not None:
        y = y + y_noise_t
    if params.readout_mode == "position":
        cursor = y.copy()
    else:
        cursor = (1.0 - 1.0 / params.tau_r) * state.cursor + y / params.tau_r
    return RnnState(h=h, cursor=cursor, y_prev=y), u


def run_trial(params: RnnParams, noise: NoiseModel, task: TaskSpec, target_id: int,
              rng: np.random.Generator,
              learn_hook: Optional[Callable] = None,
              sigma2_bmi: float = 0.0,
              sigma2_in: float = 0.0,
              init_state: Optional[RnnState] = None) -> TrialRecord:
    """Roll one trial from rest and log everything.

    The optional ``learn_hook(t, u_t, xi_t, h_prev, eps_t, reward_t)`` is
    called once per timestep so learning rules can accumulate eligibility; it
    must not mutate the weights.
    """
    if task.n_in != params.n_in or task.n_out != params.n_out:
        raise ValueError("task dimensions inconsistent with network")
    n, n_out, t_len = params.n, params.n_out, task.trial_len
    state = init_state if init_state is not None else RnnState.zeros(n, n_out)

    xs = np.empty((t_len, params.n_in))
    hs = np.empty((t_len, n))
    us = np.empty((t_len, n))
    xis = np.empty((t_len, n))
    ys = np.empty((t_len, n_out))
    y_stars = np.empty((t_len, n_out))
    cursors = np.empty((t_len, n_out))

    bmi_std = np.sqrt(sigma2_bmi) if sigma2_bmi > 0 else 0.0
    in_std = np.sqrt(sigma2_in) if sigma2_in > 0 else 0.0

    for t in range(t_len):
        x_t = input_at(task, target_id, t)
        if in_std > 0:
            x_t = x_t + rng.normal(0.0, in_std, size=params.n_in)
        xi_t = sample_noise(noise, rng, n)
        y_noise = rng.normal(0.0, bmi_std, size=n_out) if bmi_std > 0 else None
        h_prev = state.h
        state, u_t = step(params, state, x_t, xi_t, y_noise)
        y_star = target_output(task, target_id, t, state.cursor)
        eps_t = y_star - state.y_prev
        reward_t = -float(np.dot(eps_t, eps_t))
        if learn_hook is not None:
            learn_hook(t, u_t, xi_t, h_prev, eps_t, reward_t)
        xs[t] = x_t
        hs[t] = state.h
        us[t] = u_t
        xis[t] = xi_t
        ys[t] = state.y_prev
        y_stars[t] = y_star
        cursors[t] = state.cursor

    eps = y_stars - ys
    loss, rewards = loss_and_reward(eps)
    if not np.isfinite(loss):
        raise FloatingPointError("trial diverged (non-finite loss)")
    return TrialRecord(target_id=target_id, x=xs, h=hs, u=us, xi=xis, y=ys,
                       y_star=y_stars, eps=eps, cursor=cursors, reward=rewards,
                       loss=loss)

"""Biased supervised rules.

The local online rule projects the readout error through a credit assignment
mapping ``m`` (ideal: the decoder transpose) and gates it with a leaky
eligibility trace; biased backprop-through-time makes the same substitution
inside an exact backward pass. Weight mirroring slowly drags ``m`` toward the
decoder transpose by correlating noise probes with their readout.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rnn import RnnParams, TrialRecord

__all__ = ["RfloLearner", "biased_bptt_update", "weight_mirror_step"]


@dataclass
class RfloLearner:
    """Per-trial accumulator for the local online supervised rule.

    Each step updates the eligibility trace

        p <- (1 - 1/tau) p + (1/tau) phi'(u^t) h^{t-1 T}

    and accumulates [m eps^t]_i p_ij; the weight update eta * accum is applied
    offline at trial end.
    """
    m: np.ndarray
    eta: float
    params: RnnParams
    trace: np.ndarray = field(init=False)
    accum: np.ndarray = field(init=False)

    def __post_init__(self):
        n = self.params.n
        self.trace = np.zeros((n, n))
        self.accum = np.zeros((n, n))

    def start_trial(self, target_id: int) -> None:
        self.trace[:] = 0.0

    def on_step(self, t, u_t, xi_t, h_prev, eps_t, reward_t) -> None:
        inv_tau = 1.0 / self.params.tau
        self.trace *= 1.0 - inv_tau
        self.trace += inv_tau * np.outer(self.params.phi_prime(u_t), h_prev)
        self.accum += (self.m @ eps_t)[:, None] * self.trace

    def finish_trial(self, trial: TrialRecord) -> None:
        self.params.w_rec += self.eta * self.accum
        self.accum[:] = 0.0


def biased_bptt_update(m: np.ndarray, trial: TrialRecord, params: RnnParams,
                       eta: float) -> np.ndarray:
    """Weight update from a full backward pass with m in place of the decoder transpose.

    Backward recursion (z^{T+1} = 0, feedback pathway ignored):

        z^t = m eps^t + (1 - 1/tau) z^{t+1} + (1/tau) W_rec^T (phi'(u^{t+1}) o z^{t+1})
        dW_ab = (eta / (tau T)) sum_t z_a^t phi'(u_a^t) h_b^{t-1}

    With m equal to the decoder transpose and zero feedback this is the exact
    loss gradient times -eta.
    """
    t_len, n = trial.h.shape
    if trial.u is None:
        raise ValueError("trial is missing logged pre-activations")
    inv_tau = 1.0 / params.tau
    dphi = params.phi_prime(trial.u)          # T x N
    z = np.zeros(n)
    dw = np.zeros((n, n))
    for t in range(t_len - 1, -1, -1):
        if t < t_len - 1:
            carry = (1.0 - inv_tau) * z + inv_tau * (params.w_rec.T @ (dphi[t + 1] * z))
        else:
            carry = np.zeros(n)
        z = m @ trial.eps[t] + carry
        h_prev = trial.h[t - 1] if t > 0 else np.zeros(n)
        dw += np.outer(z * dphi[t], h_prev)
    return (eta / (params.tau * t_len)) * dw


@dataclass
class BpttLearner:
    """Trial-end learner applying the biased backward-pass update."""
    m: np.ndarray
    eta: float
    params: RnnParams

    def start_trial(self, target_id: int) -> None:
        pass

    def on_step(self, t, u_t, xi_t, h_prev, eps_t, reward_t) -> None:
        pass

    def finish_trial(self, trial: TrialRecord) -> None:
        self.params.w_rec += biased_bptt_update(self.m, trial, self.params, self.eta)


def weight_mirror_step(m: np.ndarray, eta_wm: float, sigma2_rec: float,
                       w_bmi: np.ndarray, rng: np.random.Generator) -> None:
    """One mirroring probe: m_ji += eta_wm xi_j [w_bmi xi]_i, in place.

    The expected step direction is sigma2_rec * w_bmi^T.
    """
    if eta_wm == 0.0:
        return
    xi = rng.normal(0.0, np.sqrt(sigma2_rec), size=m.shape[0])
    y = w_bmi @ xi
    m += eta_wm * np.outer(xi, y)

"""Node-perturbation policy gradient with eligibility trace and reward baseline.

The rule correlates the injected state noise with the reward prediction error:

    q^t = (1 - 1/tau_e) q^{t-1} + (1/tau_e) xi^t phi'(u^t) h^{t-1 T}
    dW += (R^t - Rbar^t) q^t

applied offline (times eta) at trial end. The baseline Rbar is a per-target,
per-timestep exponential moving average, initialized to the first observed
reward so the very first trial of each target contributes no update.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rnn import RnnParams, TrialRecord

__all__ = ["RewardBaseline", "NodePerturbLearner"]


@dataclass
class RewardBaseline:
    """Running mean rewards, one cell per (target, timestep)."""
    n_targets: int
    trial_len: int
    decay: float = 0.1
    table: np.ndarray = field(init=False)
    seen: np.ndarray = field(init=False)

    def __post_init__(self):
        if not 0.0 < self.decay <= 1.0:
            raise ValueError("baseline decay must be in (0, 1]")
        self.table = np.zeros((self.n_targets, self.trial_len))
        self.seen = np.zeros(self.n_targets, dtype=bool)

    def value(self, target_id: int, t: int, reward_t: float) -> float:
        """Baseline for a step; an unseen cell predicts the observed reward."""
        if not self.seen[target_id]:
            return reward_t
        return float(self.table[target_id, t])

    def update(self, target_id: int, rewards: np.ndarray) -> None:
        rewards = np.asarray(rewards, dtype=float)
        if rewards.shape != (self.trial_len,):
            raise ValueError(f"expected {self.trial_len} rewards, got {rewards.shape}")
        if not self.seen[target_id]:
            self.table[target_id] = rewards
            self.seen[target_id] = True
        else:
            self.table[target_id] *= 1.0 - self.decay
            self.table[target_id] += self.decay * rewards


@dataclass
class NodePerturbLearner:
    """Per-trial accumulator for the node-perturbation rule."""
    eta: float
    params: RnnParams
    baseline: RewardBaseline
    tau_e: float = 0.0              # 0 means: use the network time constant
    trace: np.ndarray = field(init=False)
    accum: np.ndarray = field(init=False)
    _target: int = field(init=False, default=0)

    def __post_init__(self):
        if self.tau_e <= 0.0:
            self.tau_e = self.params.tau
        if self.tau_e < 1.0:
            raise ValueError("tau_e must be >= 1 timestep")
        n = self.params.n
        self.trace = np.zeros((n, n))
        self.accum = np.zeros((n, n))

    def start_trial(self, target_id: int) -> None:
        self._target = target_id
        self.trace[:] = 0.0

    def on_step(self, t, u_t, xi_t, h_prev, eps_t, reward_t) -> None:
        inv_tau = 1.0 / self.tau_e
        self.trace *= 1.0 - inv_tau
        self.trace += inv_tau * np.outer(xi_t * self.params.phi_prime(u_t), h_prev)
        advantage = reward_t - self.baseline.value(self._target, t, reward_t)
        if advantage != 0.0:
            self.accum += advantage * self.trace

    def finish_trial(self, trial: TrialRecord) -> None:
        self.params.w_rec += self.eta * self.accum
        self.accum[:] = 0.0
        # Baseline moves only after the trial's accumulation, so the update
        # treats it as noise-independent.
        self.baseline.update(trial.target_id, trial.reward)

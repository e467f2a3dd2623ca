"""Linear feedforward model: pattern association trained with the supervised
or the node-perturbation rule, and rule inference from hidden-layer activity.

Hidden activity is h = W x + xi for binary patterns x; the decoder reads
y = w_bmi h. Training shifts the hidden activity per pattern in a direction
that depends on the rule: through the credit map for the supervised rule,
through the noise covariance times the decoder transpose for reinforcement.
Comparing observed early-to-late activity changes against those two predicted
directions identifies the rule.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .credit import make_aligned_matrix
from .numerics import cosine_similarity, gaussian_matrix, pearson, spawn_rng
from .rnn import NoiseModel, sample_noise

__all__ = ["FfNet", "FfExperiment", "ff_forward", "ff_sl_update", "ff_rl_update",
           "ff_predict_dh", "ff_observe_dh", "ff_corr", "run_ff_experiment",
           "run_ff_population", "FfRunResult"]


@dataclass
class FfNet:
    w: np.ndarray          # hidden x input
    w_bmi: np.ndarray      # output x hidden
    m: np.ndarray          # hidden x output credit map
    noise: NoiseModel

    @property
    def n_hidden(self) -> int:
        return self.w.shape[0]


@dataclass(frozen=True)
class FfExperiment:
    """Protocol sizes and rates for one training run."""
    n_patterns: int = 5
    n_trials: int = 500
    n_early: int = 10
    n_late: int = 10
    eta: float = 0.001
    baseline_window: int = 50

    def __post_init__(self):
        if self.n_early + self.n_late > self.n_trials:
            raise ValueError("early/late blocks exceed the trial budget")


def ff_forward(net: FfNet, x: np.ndarray, y_star: np.ndarray,
               rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One noisy forward pass for a batch of patterns (columns).

    Returns (h, y, eps) with h = W x + xi, y = w_bmi h, eps = y_star - y.
    """
    n_pat = x.shape[1]
    xi = np.column_stack([sample_noise(net.noise, rng, net.n_hidden) for _ in range(n_pat)])
    h = net.w @ x + xi
    y = net.w_bmi @ h
    return h, y, y_star - y


def ff_sl_update(m: np.ndarray, eps: np.ndarray, x: np.ndarray, eta: float) -> np.ndarray:
    """Supervised update eta * sum_t [m eps^t] x^t^T over a pattern batch."""
    return eta * (m @ eps) @ x.T


def ff_rl_update(xi: np.ndarray, x: np.ndarray, advantages: np.ndarray,
                 eta: float) -> np.ndarray:
    """Node-perturbation update eta * sum_t (R^t - Rbar^t) xi^t x^t^T."""
    return eta * (xi * advantages) @ x.T


def ff_predict_dh(net: FfNet, eps_mean: np.ndarray, hypothesis: str) -> np.ndarray:
    """Predicted per-pattern activity change direction under a rule hypothesis."""
    if hypothesis == "sl":
        return net.m @ eps_mean
    if hypothesis == "rl":
        return net.noise.covariance(net.n_hidden) @ net.w_bmi.T @ eps_mean
    raise ValueError(f"unknown hypothesis {hypothesis!r}")


def ff_observe_dh(early_h: np.ndarray, late_h: np.ndarray) -> np.ndarray:
    """Mean late activity minus mean early activity, per pattern.

    Blocks are stacks of per-trial hidden batches, shape trials x hidden x patterns.
    """
    return np.asarray(late_h).mean(axis=0) - np.asarray(early_h).mean(axis=0)


def ff_corr(dh_obs: np.ndarray, dh_pred: np.ndarray) -> float:
    """Mean-centered correlation across hidden units, averaged over patterns."""
    if dh_obs.shape != dh_pred.shape:
        raise ValueError("observed and predicted shapes differ")
    return float(np.mean([pearson(dh_obs[:, t], dh_pred[:, t])
                          for t in range(dh_obs.shape[1])]))


@dataclass
class FfRunResult:
    rule: str
    sim_m: float
    corr_sl: float
    corr_rl: float
    losses: np.ndarray
    seed: int


def run_ff_experiment(rule: str, alpha: float, seed: int,
                      n_in: int = 20, n_hidden: int = 20, n_out: int = 2,
                      sigma: float = 0.1,
                      exp: FfExperiment | None = None) -> FfRunResult:
    """Train one network and score both rule hypotheses against its activity.

    The credit map is held at similarity ``alpha`` to the decoder transpose;
    for reinforcement-trained networks it plays no role in learning and acts
    only as the (wrong) supervised hypothesis.
    """
    if exp is None:
        exp = (FfExperiment(n_trials=500, n_early=10, n_late=10, eta=0.001)
               if rule == "sl" else
               FfExperiment(n_trials=5000, n_early=100, n_late=100, eta=0.003))
    init_rng = spawn_rng(seed, "ff-init")
    noise_rng = spawn_rng(seed, "ff-noise")
    x = np.where(init_rng.random((n_in, exp.n_patterns)) < 0.5, -1.0, 1.0)
    y_star = init_rng.normal(0.0, 1.0, size=(n_out, exp.n_patterns))
    net = FfNet(
        w=gaussian_matrix(n_hidden, n_in, 0.0, 1.0 / np.sqrt(n_in), init_rng),
        w_bmi=gaussian_matrix(n_out, n_hidden, 0.0, 1.0 / np.sqrt(n_hidden), init_rng),
        m=np.zeros((n_hidden, n_out)),
        noise=NoiseModel(kind="isotropic", sigma2=sigma ** 2),
    )
    net.m = make_aligned_matrix(net.w_bmi.T, alpha, spawn_rng(seed, "ff-credit"))
    sim_m = cosine_similarity(net.m, net.w_bmi.T)

    losses = np.empty(exp.n_trials)
    eps_sum = np.zeros((n_out, exp.n_patterns))
    early_h, late_h = [], []
    reward_hist: list[np.ndarray] = []

    for trial in range(exp.n_trials):
        h, y, eps = ff_forward(net, x, y_star, noise_rng)
        per_pattern_loss = np.sum(eps * eps, axis=0) / exp.n_patterns
        losses[trial] = per_pattern_loss.sum()
        eps_sum += eps
        if trial < exp.n_early:
            early_h.append(h)
        if trial >= exp.n_trials - exp.n_late:
            late_h.append(h)
        if rule == "sl":
            net.w += ff_sl_update(net.m, eps, x, exp.eta)
        else:
            rewards = -per_pattern_loss
            if reward_hist:
                window = np.array(reward_hist[-exp.baseline_window:])
                baseline = window.mean(axis=0)
            else:
                baseline = rewards
            xi = h - net.w @ x
            net.w += ff_rl_update(xi, x, rewards - baseline, exp.eta)
            reward_hist.append(rewards)

    dh_obs = ff_observe_dh(np.array(early_h), np.array(late_h))
    eps_mean = eps_sum / exp.n_trials
    corr_sl = ff_corr(dh_obs, ff_predict_dh(net, eps_mean, "sl"))
    corr_rl = ff_corr(dh_obs, ff_predict_dh(net, eps_mean, "rl"))
    return FfRunResult(rule=rule, sim_m=sim_m, corr_sl=corr_sl, corr_rl=corr_rl,
                       losses=losses, seed=seed)


def run_ff_population(rule: str, alpha: float, n_networks: int = 100,
                      seed: int = 0, **kwargs) -> list[FfRunResult]:
    """Replicate the experiment across independently seeded networks."""
    return [run_ff_experiment(rule, alpha, seed=int(spawn_rng(seed, f"net-{i}").integers(2 ** 63)),
                              **kwargs)
            for i in range(n_networks)]

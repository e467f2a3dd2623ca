"""Center-out cursor task: target geometry, input signals, targets and loss."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["TaskSpec", "default_targets", "input_at", "target_output", "loss_and_reward"]


def default_targets(n_targets: int = 4) -> list[np.ndarray]:
    """Unit-distance targets on the axes: (1,0), (0,1), (-1,0), (0,-1), ..."""
    out = []
    for i in range(n_targets):
        angle = 2.0 * math.pi * i / n_targets
        out.append(np.array([math.cos(angle), math.sin(angle)]))
    return out


@dataclass(frozen=True)
class TaskSpec:
    """Task geometry and signal timing.

    One input channel per target; the channel for the cued target carries a
    step that is 1 for the first 20% of the trial (``step_20pct``) or for the
    whole trial (``constant_full``).
    """
    targets: list[np.ndarray] = field(default_factory=default_targets)
    trial_len: int = 20
    input_mode: str = "step_20pct"       # or "constant_full"
    readout_mode: str = "position"       # or "velocity"

    @property
    def n_targets(self) -> int:
        return len(self.targets)

    @property
    def n_in(self) -> int:
        return len(self.targets)

    @property
    def n_out(self) -> int:
        return int(self.targets[0].shape[0])

    def __post_init__(self):
        if self.trial_len < 1:
            raise ValueError("trial_len must be >= 1")
        if self.input_mode not in ("step_20pct", "constant_full"):
            raise ValueError(f"unknown input_mode {self.input_mode!r}")
        if self.readout_mode not in ("position", "velocity"):
            raise ValueError(f"unknown readout_mode {self.readout_mode!r}")


def input_at(spec: TaskSpec, target_id: int, t: int) -> np.ndarray:
    """One-hot input vector for timestep t of a trial cueing target_id."""
    if not 0 <= target_id < spec.n_targets:
        raise IndexError(f"target_id {target_id} out of range")
    if not 0 <= t < spec.trial_len:
        raise IndexError(f"t {t} outside trial of length {spec.trial_len}")
    x = np.zeros(spec.n_in)
    if spec.input_mode == "constant_full" or t < math.ceil(0.2 * spec.trial_len):
        x[target_id] = 1.0
    return x


def target_output(spec: TaskSpec, target_id: int, t: int, cursor: np.ndarray) -> np.ndarray:
    """Desired readout at timestep t.

    Position mode: the target position itself, constant over the trial.
    Velocity mode: the vector from the current cursor position to the target.
    """
    r_star = spec.targets[target_id]
    if spec.readout_mode == "position":
        return r_star.copy()
    return r_star - cursor


def loss_and_reward(eps: np.ndarray) -> tuple[float, np.ndarray]:
    """Trial loss L = (1/2T) sum_t |eps^t|^2 and per-step rewards R^t = -|eps^t|^2."""
    eps = np.asarray(eps, dtype=float)
    sq = np.sum(eps * eps, axis=1)
    rewards = -sq
    loss = float(sq.sum() / (2.0 * eps.shape[0]))
    return loss, rewards

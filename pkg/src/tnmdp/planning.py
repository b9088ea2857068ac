"""Model-based planning: learn the transition tensors from sampled episodes.

Each epoch samples episodes from the true environment with the current policy
(plus epsilon action flips), blends the observed outcome frequencies into the
learned model, and re-optimizes the policy against the learned model.

The learner knows that ``M_1 .. M_{T-1}`` coincide, so transitions from all
``t < T`` are pooled into one tensor; ``M_T`` is learned on its own.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .contraction import expected_return
from .fmdp import FmdpSpec, InitialDistribution, TransitionModel, uniform_policy
from .optimize import optimize_sarl
from .walker import TrajectoryRecord, sample_trajectories

__all__ = ["PlanConfig", "EpochLog", "init_uniform_model", "update_model", "plan",
           "write_plan_csv"]


@dataclass(frozen=True)
class PlanConfig:
    alpha: float = 0.4
    epsilon: float = 0.2
    n_traj: int = 30
    n_epochs: int = 10
    seed: int = 0

    def __post_init__(self):
        for name in ("alpha", "epsilon"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.n_traj < 0:
            raise ValueError(f"n_traj must be >= 0, got {self.n_traj}")
        if self.n_epochs < 0:
            raise ValueError(f"n_epochs must be >= 0, got {self.n_epochs}")


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    e_return_model: float
    e_return_true: float


def _shared(spec: FmdpSpec, mid: np.ndarray, last: np.ndarray) -> TransitionModel:
    return TransitionModel([mid] * (spec.horizon - 1) + [last])


def init_uniform_model(spec: FmdpSpec) -> TransitionModel:
    """Every outcome ``(s', r)`` equally likely: ``1 / (N_S N_R)``."""
    if spec.n_agents != 1:
        raise ValueError("planning supports single-agent models only")
    shape = spec.transition_shape()
    value = 1.0 / (spec.n_states * spec.n_rewards)
    return _shared(spec, np.full(shape, value), np.full(shape, value))


def _counts(spec: FmdpSpec, steps) -> np.ndarray:
    c = np.zeros(spec.transition_shape())
    for s, a, s_next, r in steps:
        c[spec.state_index(s_next), spec.reward_index(r),
          spec.state_index(s), spec.action_index(a)] += 1.0
    return c


def _blend(old: np.ndarray, counts: np.ndarray, alpha: float) -> np.ndarray:
    visits = counts.sum(axis=(0, 1))
    new = old.copy()
    seen = visits > 0
    if seen.any():
        frac = counts[:, :, seen] / visits[seen]
        new[:, :, seen] = old[:, :, seen] + alpha * (frac - old[:, :, seen])
    return new


def update_model(spec: FmdpSpec, model: TransitionModel,
                 trajectories: Sequence[TrajectoryRecord], alpha: float) -> TransitionModel:
    """Convex-combination update towards this batch's outcome frequencies.

    For each visited ``(s, a)``, every outcome ``(s', r)`` moves a fraction
    ``alpha`` of the way to its empirical frequency. Unvisited slices are kept.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    T = spec.horizon
    pooled, final = [], []
    for rec in trajectories:
        s, a, r = rec.states[0], rec.actions[0], rec.rewards[0]
        for k in range(T):
            step = (s[k], a[k], s[k + 1], r[k])
            (final if k == T - 1 else pooled).append(step)
    last = _blend(model[T], _counts(spec, final), alpha)
    mid = _blend(model[1], _counts(spec, pooled), alpha) if T > 1 else last
    return _shared(spec, mid, last)


def plan(spec: FmdpSpec, true_model: TransitionModel, cfg: PlanConfig,
         p0: InitialDistribution | None = None) -> list[EpochLog]:
    """Run the sample / learn / optimize loop.

    Epoch 0 is the untrained state: uniform model and the policy obtained by
    optimizing against it (which stays uniform). The policy is re-optimized
    from the uniform policy every epoch, so it is always optimal for the
    current learned model. Returns are evaluated with the pure policy; the
    epsilon flips only affect sampling. Epoch ``e`` samples with seed
    ``(cfg.seed, e)``.
    """
    if p0 is None:
        p0 = InitialDistribution.point(spec.initial_shape(), spec.state_index(0))
    model = init_uniform_model(spec)
    start = uniform_policy(spec)
    policy, _ = optimize_sarl(spec, model, start, p0)
    logs = [EpochLog(0, expected_return(spec, model, policy, p0),
                     expected_return(spec, true_model, policy, p0))]
    for epoch in range(1, cfg.n_epochs + 1):
        batch = sample_trajectories(spec, true_model, policy, cfg.n_traj,
                                    epsilon=cfg.epsilon, seed=(cfg.seed, epoch), p0=p0)
        model = update_model(spec, model, batch, cfg.alpha)
        policy, _ = optimize_sarl(spec, model, start, p0)
        logs.append(EpochLog(epoch, expected_return(spec, model, policy, p0),
                             expected_return(spec, true_model, policy, p0)))
    return logs


def write_plan_csv(logs: Sequence[EpochLog], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "e_model", "e_true"])
        for log in logs:
            w.writerow([log.epoch, repr(log.e_return_model), repr(log.e_return_true)])

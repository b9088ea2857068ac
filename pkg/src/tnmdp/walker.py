"""1D random walker environments and trajectory sampling.

The walker starts at state 0 and steps down (-1) or up (+1) each timestep,
optionally perturbed by discretized normal noise in {-1, 0, +1}. Positions are
clamped to ``[-T, T]`` after the noise is added, so overshoot mass piles up on
the boundary state.

Rewards for a single walker at time ``t``::

    t < T:  0 if s_t >= 0 else -1
    t = T:  1 if s_t == 0 else -10

Two walkers each get that structure plus a penalty of -2 whenever agent 1 is
not strictly above agent 2 (``s1_t <= s2_t``) at ``t < T``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .fmdp import FmdpSpec, InitialDistribution, PolicySet, TransitionModel

__all__ = [
    "WalkerConfig",
    "TrajectoryRecord",
    "discretize_normal",
    "build_sarl_walker",
    "build_marl_walker",
    "build_walker",
    "sample_trajectories",
    "satisfies_objective",
    "write_trajectories_csv",
    "policy_rows",
]

ACTIONS = (-1, 1)
SARL_REWARDS = (-10.0, -1.0, 0.0, 1.0)
MARL_REWARDS = (-10.0, -3.0, -2.0, -1.0, 0.0, 1.0)
ORDER_PENALTY = -2.0


@dataclass(frozen=True)
class WalkerConfig:
    horizon: int
    sigma: float = 0.0
    n_agents: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if self.n_agents not in (1, 2):
            raise ValueError(f"n_agents must be 1 or 2, got {self.n_agents}")


@dataclass
class TrajectoryRecord:
    """One episode. ``states[i]`` has T+1 entries for agent ``i``; actions and
    rewards have T (``rewards[i][k]`` is ``r_{k+1}``)."""

    states: list[list[int]]
    actions: list[list[int]]
    rewards: list[list[float]]
    total_return: float = 0.0
    satisfied_objective: bool = False


def discretize_normal(sigma: float) -> tuple[float, float, float]:
    """``(P(X_d=-1), P(X_d=0), P(X_d=+1))`` for ``X ~ N(0, sigma^2)`` cut at ±1."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    p0 = math.erf(1.0 / (sigma * math.sqrt(2.0)))
    tail = (1.0 - p0) / 2.0
    return tail, p0, tail


def _noise(sigma: float) -> dict[int, float]:
    if sigma == 0:
        return {0: 1.0}
    lo, mid, hi = discretize_normal(sigma)
    return {-1: lo, 0: mid, 1: hi}


def _motion(horizon: int, sigma: float) -> np.ndarray:
    """``P[s', s, a]`` for one walker, indices offset by ``horizon``."""
    n = 2 * horizon + 1
    P = np.zeros((n, n, len(ACTIONS)))
    noise = _noise(sigma)
    for s in range(n):
        for ai, a in enumerate(ACTIONS):
            for x, p in noise.items():
                nxt = min(max(s - horizon + a + x, -horizon), horizon)
                P[nxt + horizon, s, ai] += p
    return P


def _sarl_reward(state: int, final: bool) -> float:
    if final:
        return 1.0 if state == 0 else -10.0
    return 0.0 if state >= 0 else -1.0


def _marl_rewards(s1: int, s2: int, final: bool) -> tuple[float, float]:
    if final:
        return _sarl_reward(s1, True), _sarl_reward(s2, True)
    pen = ORDER_PENALTY if s1 <= s2 else 0.0
    return pen + _sarl_reward(s1, False), pen + _sarl_reward(s2, False)


def build_sarl_walker(cfg: WalkerConfig):
    """Single walker: ``(FmdpSpec, TransitionModel, InitialDistribution)``.

    ``M_1 .. M_{T-1}`` are one shared array; ``M_T`` carries the final reward.
    """
    if cfg.n_agents != 1:
        raise ValueError("build_sarl_walker needs n_agents == 1")
    T = cfg.horizon
    n = 2 * T + 1
    spec = FmdpSpec(n_states=n, n_actions=2, horizon=T, reward_values=SARL_REWARDS,
                    state_offset=-T, action_values=ACTIONS)
    P = _motion(T, cfg.sigma)

    def tensor(final: bool) -> np.ndarray:
        r_idx = np.array([spec.reward_index(_sarl_reward(s - T, final)) for s in range(n)])
        M = np.zeros((n, spec.n_rewards, n, 2))
        M[np.arange(n), r_idx] = P
        return M

    mid, last = tensor(False), tensor(True)
    model = TransitionModel([mid] * (T - 1) + [last])
    p0 = InitialDistribution.point((n,), T)
    return spec, model, p0


def build_marl_walker(cfg: WalkerConfig):
    """Two independent walkers with coupled rewards (rank-8 joint tensors)."""
    if cfg.n_agents != 2:
        raise ValueError("build_marl_walker needs n_agents == 2")
    T = cfg.horizon
    n = 2 * T + 1
    spec = FmdpSpec(n_states=n, n_actions=2, horizon=T, reward_values=MARL_REWARDS,
                    n_agents=2, state_offset=-T, action_values=ACTIONS)
    P = _motion(T, cfg.sigma)
    nr = spec.n_rewards

    def tensor(final: bool) -> np.ndarray:
        G = np.zeros((n, n, nr, nr))
        for u in range(n):
            for v in range(n):
                r1, r2 = _marl_rewards(u - T, v - T, final)
                G[u, v, spec.reward_index(r1), spec.reward_index(r2)] = 1.0
        return np.einsum("uxi,vyj,uvpq->uvpqxyij", P, P, G, optimize=True)

    tensors = [tensor(True)]
    if T > 1:
        tensors = [tensor(False)] * (T - 1) + tensors
    model = TransitionModel(tensors)
    p0 = InitialDistribution.point((n, n), (T, T))
    return spec, model, p0


def build_walker(cfg: WalkerConfig):
    return build_sarl_walker(cfg) if cfg.n_agents == 1 else build_marl_walker(cfg)


def satisfies_objective(states: Sequence[Sequence[int]]) -> bool:
    """Walker objective on semantic states (one sequence per agent, t = 0..T)."""
    T = len(states[0]) - 1
    if len(states) == 1:
        s = states[0]
        return all(s[t] >= 0 for t in range(1, T)) and s[T] == 0
    s1, s2 = states
    return (all(s1[t] > s2[t] >= 0 for t in range(1, T))
            and s1[T] == 0 and s2[T] == 0)


def _draw(probs: np.ndarray, u: float) -> int:
    cum = np.cumsum(probs)
    return int(np.searchsorted(cum, u * cum[-1], side="right"))


def _flip(a: int, n_actions: int) -> int:
    return n_actions - 1 - a


def sample_trajectories(spec: FmdpSpec, model_true: TransitionModel, policy: PolicySet,
                        n_traj: int, epsilon: float = 0.0, seed: int = 0,
                        p0: InitialDistribution | None = None) -> list[TrajectoryRecord]:
    """Sample episodes from the true transition tensors.

    Each action drawn from the policy is flipped (``a -> -a``; mirrored index
    for more than two actions) with probability ``epsilon``, independently per
    agent. Trajectory ``k`` uses its own generator seeded with
    ``SeedSequence([seed, k])``, so results do not depend on ``n_traj``.
    ``seed`` may also be a tuple of ints, which is prepended to ``k``.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    n = spec.n_agents
    T = spec.horizon
    if p0 is None:
        p0 = InitialDistribution.point(spec.initial_shape(), (spec.state_index(0),) * n)
    p0_flat = p0.p0.reshape(-1)
    pis = [policy.joint_tensor(t) if n == 2 else policy[t] for t in range(1, T + 1)]
    n_a = spec.n_actions
    out_shape = (spec.n_states,) * n + (spec.n_rewards,) * n
    key = [int(x) for x in seed] if isinstance(seed, (tuple, list)) else [int(seed)]
    records = []
    for k in range(n_traj):
        rng = np.random.default_rng(key + [k])
        u = rng.random((T, 2 + n)) if T else None
        s = np.unravel_index(_draw(p0_flat, rng.random()), spec.initial_shape())
        s = tuple(int(x) for x in s)
        states = [[spec.state_value(s[i])] for i in range(n)]
        actions: list[list[int]] = [[] for _ in range(n)]
        rewards: list[list[float]] = [[] for _ in range(n)]
        for t in range(1, T + 1):
            row = u[t - 1]
            col = pis[t - 1][(...,) + s].reshape(-1)
            a = np.unravel_index(_draw(col, row[0]), (n_a,) * n)
            a = tuple(_flip(int(ai), n_a) if row[2 + i] < epsilon else int(ai)
                      for i, ai in enumerate(a))
            probs = model_true[t][(...,) + s + a].reshape(-1)
            outcome = np.unravel_index(_draw(probs, row[1]), out_shape)
            s = tuple(int(x) for x in outcome[:n])
            for i in range(n):
                actions[i].append(spec.action_values[a[i]])
                states[i].append(spec.state_value(s[i]))
                rewards[i].append(spec.reward_values[int(outcome[n + i])])
        total = float(sum(sum(r) for r in rewards))
        records.append(TrajectoryRecord(states, actions, rewards, total,
                                        satisfies_objective(states)))
    return records


def write_trajectories_csv(records: Sequence[TrajectoryRecord], path) -> None:
    """One row per (trajectory, agent, t); ``a`` is empty at ``t = T`` and
    ``r`` is empty at ``t = 0``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["traj_id", "agent", "t", "s", "a", "r"])
        for k, rec in enumerate(records):
            for i in range(len(rec.states)):
                T = len(rec.actions[i])
                for t in range(T + 1):
                    a = rec.actions[i][t] if t < T else ""
                    r = repr(rec.rewards[i][t - 1]) if t > 0 else ""
                    w.writerow([k, i + 1, t, rec.states[i][t], a, r])


def policy_rows(spec: FmdpSpec, policy: PolicySet) -> list[tuple[int, int, float]]:
    """``(t, s, p_up)`` for a single-agent walker policy.

    ``t`` is the time of the state the action is taken from, so row ``t``
    comes from ``pi_{t+1}``.
    """
    up = spec.action_index(1)
    rows = []
    for t in range(spec.horizon):
        p = policy[t + 1]
        for si in range(spec.n_states):
            rows.append((t, spec.state_value(si), float(p[up, si])))
    return rows

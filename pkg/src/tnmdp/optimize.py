"""Greedy single-site DMRG sweeps over the policy tensors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .contraction import EnvironmentTensor, ReturnNetwork
from .fmdp import FmdpSpec, InitialDistribution, PolicySet, TransitionModel

__all__ = ["SweepReport", "greedy_update", "optimize_sarl", "optimize_marl", "TIE_TOL"]

TIE_TOL = 1e-12


@dataclass
class SweepReport:
    site_order: list[tuple[int, int | None]] = field(default_factory=list)
    returns_after_each_update: list[float] = field(default_factory=list)
    changed_columns: list[int] = field(default_factory=list)
    converged: bool = False
    n_sweeps: int = 0

    def is_monotone(self, slack: float = 1e-9) -> bool:
        r = self.returns_after_each_update
        return all(b >= a - slack for a, b in zip(r, r[1:]))


def greedy_update(z, pi: np.ndarray, n_action_axes: int | None = None,
                  tol: float = TIE_TOL) -> np.ndarray:
    """Make ``pi`` greedy with respect to the environment tensor ``z``.

    Every state column becomes the one-hot of its best action. A column whose
    action values all agree within ``tol`` is left as it was; among partial
    ties the lowest action index wins.
    """
    if isinstance(z, EnvironmentTensor):
        if n_action_axes is None:
            n_action_axes = z.n_action_axes
        z = z.z
    if n_action_axes is None:
        n_action_axes = z.ndim // 2
    z = np.asarray(z, dtype=np.float64)
    pi = np.asarray(pi, dtype=np.float64)
    if z.shape != pi.shape:
        raise ValueError(f"environment shape {z.shape} does not match policy shape {pi.shape}")
    n_act = int(np.prod(z.shape[:n_action_axes]))
    zc = z.reshape(n_act, -1)
    out = pi.reshape(n_act, -1).copy()
    best = zc.max(axis=0)
    tied = zc >= best - tol
    change = ~tied.all(axis=0)
    winner = np.argmax(tied, axis=0)  # first index among near-maximal actions
    cols = np.flatnonzero(change)
    out[:, cols] = 0.0
    out[winner[cols], cols] = 1.0
    return out.reshape(pi.shape)


def _run(net: ReturnNetwork, schedule, report: SweepReport) -> None:
    for t, agent in schedule:
        env = net.environment(t, agent)
        current = net.policy[t]
        old = current if agent is None else current[agent - 1]
        new = greedy_update(env, old)
        if agent is None:
            net.set_policy(t, new)
        else:
            pair = list(current)
            pair[agent - 1] = new
            net.set_policy(t, tuple(pair))
        n_act = env.n_action_axes
        cols = (new != old).reshape(int(np.prod(new.shape[:n_act])), -1).any(axis=0)
        report.site_order.append((t, agent))
        report.changed_columns.append(int(cols.sum()))
        report.returns_after_each_update.append(net.expected_return())


def _would_change(net: ReturnNetwork, schedule) -> bool:
    for t, agent in schedule:
        env = net.environment(t, agent)
        current = net.policy[t] if agent is None else net.policy[t][agent - 1]
        if not np.array_equal(greedy_update(env, current), current):
            return True
    return False


def optimize_sarl(spec: FmdpSpec, model: TransitionModel, policy: PolicySet,
                  p0: InitialDistribution, n_sweeps: int = 1):
    """Backward-in-time greedy sweep(s), ``t = T, T-1, ..., 1``.

    Starting from a policy with full support, one sweep reaches the optimum.
    ``converged`` reports whether a further sweep would change anything.
    """
    if policy.kind != "sarl":
        raise ValueError(f"optimize_sarl needs a single-agent policy, got {policy.kind!r}")
    net = ReturnNetwork(spec, model, policy, p0)
    report = SweepReport()
    schedule = [(t, None) for t in range(spec.horizon, 0, -1)]
    for _ in range(n_sweeps):
        _run(net, schedule, report)
        report.n_sweeps += 1
    report.converged = not _would_change(net, schedule)
    return net.policy, report


def optimize_marl(spec: FmdpSpec, model: TransitionModel, policies: PolicySet,
                  p0: InitialDistribution, mode: str = "joint"):
    """Two-agent policy optimization.

    ``mode="joint"``: one backward sweep over the joint policy tensors, greedy
    over the ``N_A**2`` action pairs per joint state.

    ``mode="per-agent"``: two backward sweeps over per-agent factors; the
    first visits agent 1 then agent 2 at each timestep, the second agent 2
    then agent 1.
    """
    if spec.n_agents != 2:
        raise ValueError("optimize_marl needs a two-agent spec")
    net = ReturnNetwork(spec, model, policies, p0)
    report = SweepReport()
    T = spec.horizon
    if mode == "joint":
        if policies.kind != "joint":
            raise ValueError("joint mode needs joint policy tensors")
        sweeps = [[(t, None) for t in range(T, 0, -1)]]
    elif mode == "per-agent":
        if policies.kind != "per-agent":
            raise ValueError("per-agent mode needs per-agent policy factors")
        sweeps = [[(t, i) for t in range(T, 0, -1) for i in (1, 2)],
                  [(t, i) for t in range(T, 0, -1) for i in (2, 1)]]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    for schedule in sweeps:
        _run(net, schedule, report)
        report.n_sweeps += 1
    report.converged = not _would_change(net, sweeps[-1])
    return net.policy, report

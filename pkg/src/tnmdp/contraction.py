"""Contraction of the expected-return network.

The network has three layers per timestep: the policy ``pi_t`` (fed the
previous state through a copy tensor), the transition tensor ``M_t`` and one
MPO site ``W_t`` on the reward axes. It is contracted as a time-ordered sweep
carrying a boundary tensor with axes ``(state..., mpo_bond)``:

    L_t[s', c] = sum  L_{t-1}[s, b] pi_t[a, s] M_t[s', r, s, a] W_t[b, c, r]

and symmetrically from the right. Copy tensors never get materialized; the
shared state index simply appears in several operands of one step.

:class:`ReturnNetwork` caches left and right boundaries so that a DMRG sweep
costs O(T) step contractions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fmdp import FmdpSpec, InitialDistribution, PolicySet, TransitionModel
from .mpo import ReturnMpo, default_mpo, flat_layer

__all__ = [
    "DimensionError",
    "EnvironmentTensor",
    "ReturnNetwork",
    "expected_return",
    "total_probability",
    "environment_tensor",
    "left_step",
    "right_step",
]


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class EnvironmentTensor:
    """Network contracted around one policy site.

    ``z`` has the policy's axes: ``(a, s)``, ``(a1, a2, s1, s2)`` or, for a
    per-agent site, ``(a_i, s1, s2)``.
    """

    z: np.ndarray
    timestep: int
    agent: int | None = None

    @property
    def n_action_axes(self) -> int:
        return self.z.ndim - (self.z.ndim // 2 if self.agent is None else 2)


def _policy_state_major(pi: np.ndarray, n: int) -> np.ndarray:
    # (a..., s...) -> (s..., a...)
    return np.moveaxis(pi, list(range(n)), list(range(n, 2 * n)))


def left_step(L: np.ndarray, pi: np.ndarray, M: np.ndarray, W: np.ndarray,
              n: int) -> np.ndarray:
    """Advance a left boundary ``(s..., b)`` by one timestep."""
    X = _policy_state_major(pi, n)[..., None] * L.reshape(L.shape[:n] + (1,) * n + L.shape[-1:])
    Y = np.tensordot(M, X, axes=(list(range(2 * n, 4 * n)), list(range(2 * n))))
    # Y: (s'..., r..., b); W: (b, c, r...)
    Wr = W.reshape(W.shape[:2] + (M.shape[n],) * n)
    return np.tensordot(Y, Wr, axes=(list(range(n, 2 * n)) + [2 * n],
                                     list(range(2, 2 + n)) + [0]))


def _site_vector(M: np.ndarray, W: np.ndarray, R: np.ndarray, n: int) -> np.ndarray:
    """``V[s..., a..., b] = sum M[s', r, s, a] W[b, c, r] R[s', c]``."""
    Wr = W.reshape(W.shape[:2] + (M.shape[n],) * n)
    K = np.tensordot(Wr, R, axes=([1], [n]))  # (b, r..., s'...)
    m_axes = list(range(2 * n))  # s'..., r...
    k_axes = list(range(1 + n, 1 + 2 * n)) + list(range(1, 1 + n))
    return np.tensordot(M, K, axes=(m_axes, k_axes))


def right_step(R: np.ndarray, pi: np.ndarray, M: np.ndarray, W: np.ndarray,
               n: int) -> np.ndarray:
    """Move a right boundary ``(s'..., c)`` back one timestep to ``(s..., b)``."""
    V = _site_vector(M, W, R, n)
    piS = _policy_state_major(pi, n)
    return np.einsum(V, list(range(2 * n + 1)), piS, list(range(2 * n)),
                     list(range(n)) + [2 * n])


def _check_dims(spec: FmdpSpec, model: TransitionModel, policy: PolicySet,
                p0: InitialDistribution, mpo: ReturnMpo | None) -> None:
    def fail(what, shape, want):
        for ax, (x, y) in enumerate(zip(shape, want)):
            if x != y:
                raise DimensionError(f"{what} axis {ax} has length {x}, expected {y}")
        raise DimensionError(f"{what} has shape {shape}, expected {want}")

    if model.horizon != spec.horizon:
        raise DimensionError(f"model has {model.horizon} timesteps, spec horizon is {spec.horizon}")
    if policy.horizon != spec.horizon:
        raise DimensionError(f"policy has {policy.horizon} timesteps, spec horizon is {spec.horizon}")
    want = spec.transition_shape()
    for t, m in enumerate(model.tensors, start=1):
        if m.shape != want:
            fail(f"M_{t}", m.shape, want)
    want = spec.policy_shape()
    for t in range(1, spec.horizon + 1):
        p = policy.joint_tensor(t) if spec.n_agents == 2 else policy[t]
        if p.shape != want:
            fail(f"pi_{t}", p.shape, want)
    if p0.p0.shape != spec.initial_shape():
        fail("p0", p0.p0.shape, spec.initial_shape())
    if mpo is not None and len(mpo) != spec.horizon:
        raise DimensionError(f"MPO has {len(mpo)} sites, expected one per timestep ({spec.horizon})")


class ReturnNetwork:
    """Expected-return network with cached boundaries for site-by-site updates.

    ``left[k]`` contracts ``p0`` and timesteps ``1..k``; ``right[k]`` contracts
    timesteps ``k+1..T``. Replacing ``pi_t`` invalidates ``left[k >= t]`` and
    ``right[k < t]`` only.
    """

    def __init__(self, spec: FmdpSpec, model: TransitionModel, policy: PolicySet,
                 p0: InitialDistribution, mpo: ReturnMpo | None = None):
        _check_dims(spec, model, policy, p0, mpo)
        self.spec = spec
        self.n = spec.n_agents
        self.model = model
        if mpo is None:
            mpo = default_mpo(spec.horizon, spec.n_agents, spec.reward_values)
        self.sites = mpo.padded()
        if any(w.shape[2] != spec.n_rewards ** self.n for w in self.sites):
            raise DimensionError("MPO reward axis does not match the reward space")
        self.policy = policy
        self._pis = [policy.joint_tensor(t) if self.n == 2 else policy[t]
                     for t in range(1, spec.horizon + 1)]
        T = spec.horizon
        self._left: list[np.ndarray | None] = [None] * (T + 1)
        self._right: list[np.ndarray | None] = [None] * (T + 1)
        self._left[0] = p0.p0[..., None] * np.ones(self.sites[0].shape[0])
        self._right[T] = np.ones(spec.initial_shape() + (self.sites[-1].shape[1],))

    @property
    def horizon(self) -> int:
        return self.spec.horizon

    def left(self, k: int) -> np.ndarray:
        start = k
        while self._left[start] is None:
            start -= 1
        for j in range(start + 1, k + 1):
            self._left[j] = left_step(self._left[j - 1], self._pis[j - 1],
                                      self.model[j], self.sites[j - 1], self.n)
        return self._left[k]

    def right(self, k: int) -> np.ndarray:
        start = k
        while self._right[start] is None:
            start += 1
        for j in range(start, k, -1):
            self._right[j - 1] = right_step(self._right[j], self._pis[j - 1],
                                            self.model[j], self.sites[j - 1], self.n)
        return self._right[k]

    def expected_return(self) -> float:
        return float(self.left(self.horizon).sum())

    def expected_return_from_right(self) -> float:
        return float(np.sum(self._left[0] * self.right(0)))

    def joint_environment(self, t: int) -> np.ndarray:
        """``Z_t`` with the full policy axes (``(a, s)`` or ``(a1, a2, s1, s2)``)."""
        if not 1 <= t <= self.horizon:
            raise IndexError(f"timestep {t} outside 1..{self.horizon}")
        n = self.n
        V = _site_vector(self.model[t], self.sites[t - 1], self.right(t), n)
        L = self.left(t - 1)
        Z = np.einsum(V, list(range(2 * n + 1)), L, list(range(n)) + [2 * n],
                      list(range(2 * n)))  # (s..., a...)
        return np.moveaxis(Z, list(range(n, 2 * n)), list(range(n)))

    def environment(self, t: int, agent: int | None = None) -> EnvironmentTensor:
        Z = self.joint_environment(t)
        if agent is None:
            return EnvironmentTensor(Z, t)
        if self.n != 2 or self.policy.kind != "per-agent":
            raise ValueError("per-agent environments need a per-agent two-agent policy")
        other = self.policy[t][2 - agent]
        if agent == 1:
            z = np.einsum("ijxy,jxy->ixy", Z, other)
        else:
            z = np.einsum("ijxy,ixy->jxy", Z, other)
        return EnvironmentTensor(z, t, agent)

    def set_policy(self, t: int, tensor) -> None:
        """Replace ``pi_t`` (or a per-agent pair) and drop stale boundaries."""
        self.policy = self.policy.replace(t, tensor)
        self._pis[t - 1] = (self.policy.joint_tensor(t) if self.n == 2
                            else self.policy[t])
        for k in range(t, self.horizon + 1):
            self._left[k] = None
        for k in range(0, t):
            self._right[k] = None


def expected_return(spec: FmdpSpec, model: TransitionModel, policy: PolicySet,
                    p0: InitialDistribution, mpo: ReturnMpo | None = None) -> float:
    """``E(G_{1:T})`` by a left-to-right boundary sweep."""
    return ReturnNetwork(spec, model, policy, p0, mpo).expected_return()


def total_probability(spec: FmdpSpec, model: TransitionModel, policy: PolicySet,
                      p0: InitialDistribution) -> float:
    """Contract the network with every reward axis closed by flats (should be 1)."""
    layer = flat_layer(spec.horizon, spec.n_rewards ** spec.n_agents)
    return ReturnNetwork(spec, model, policy, p0, layer).expected_return()


def environment_tensor(spec: FmdpSpec, model: TransitionModel, policy: PolicySet,
                       p0: InitialDistribution, t: int,
                       agent: int | None = None) -> EnvironmentTensor:
    if not 1 <= t <= spec.horizon:
        raise IndexError(f"timestep {t} outside 1..{spec.horizon}")
    return ReturnNetwork(spec, model, policy, p0).environment(t, agent)

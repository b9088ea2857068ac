"""Matrix product operators that sum rewards over timesteps (and agents).

Every site uses the bond-dimension-2 form with the reward operators already
contracted against flat reward tensors, so site entries are reward vectors::

    first = [R, 1]      interior = [[1, 0],      last = [1,
                                    [R, 1]]              R]

Bond index 1 means "nothing summed yet", bond index 0 "sum already taken".
Interior sites are stored as ``(bond_in, bond_out, reward)``, the first and
last as ``(bond, reward)``; a one-site MPO is just the vector ``R``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = ["ReturnMpo", "build_sarl_mpo", "build_snake_mpo", "fuse_per_timestep",
           "flat_layer"]


@dataclass(frozen=True)
class ReturnMpo:
    """Ordered MPO sites plus the ``(t, agent)`` tag(s) of each reward axis.

    ``tags[k]`` lists the ``(timestep, agent)`` pairs fused into site ``k``'s
    reward axis, agent-1 major.
    """

    sites: tuple[np.ndarray, ...]
    tags: tuple[tuple[tuple[int, int], ...], ...]

    def __len__(self) -> int:
        return len(self.sites)

    @property
    def bond_dims(self) -> list[int]:
        return [s.shape[-2] if s.ndim == 3 else s.shape[0] for s in self.sites[1:]]

    def padded(self) -> list[np.ndarray]:
        """All sites as ``(bond_in, bond_out, reward)``, with length-1 end bonds."""
        n = len(self.sites)
        if n == 1:
            return [self.sites[0][None, None, :]]
        out = []
        for k, s in enumerate(self.sites):
            if k == 0:
                out.append(s[None, :, :])
            elif k == n - 1:
                out.append(s[:, None, :])
            else:
                out.append(s)
        return out

    def contract_with(self, reward_dists: Sequence[np.ndarray]) -> float:
        """Evaluate on a product distribution, one vector per site."""
        env = np.ones(1)
        for w, p in zip(self.padded(), reward_dists):
            env = env @ np.tensordot(w, p, axes=([2], [0]))
        return float(env.sum())


def _interior(r: np.ndarray) -> np.ndarray:
    w = np.zeros((2, 2, r.size))
    w[0, 0] = 1.0
    w[1, 0] = r
    w[1, 1] = 1.0
    return w


def _chain(n_sites: int, reward_values) -> list[np.ndarray]:
    r = np.asarray(reward_values, dtype=np.float64)
    if n_sites == 1:
        return [r.copy()]
    w = _interior(r)
    sites = [w[1].copy()]
    sites += [w.copy() for _ in range(n_sites - 2)]
    sites.append(w[:, 0].copy())
    return sites


def _freeze(sites):
    for s in sites:
        s.flags.writeable = False
    return tuple(sites)


def build_sarl_mpo(horizon: int, reward_values) -> ReturnMpo:
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    tags = tuple(((t, 1),) for t in range(1, horizon + 1))
    return ReturnMpo(_freeze(_chain(horizon, reward_values)), tags)


def snake_order(horizon: int, n_agents: int) -> list[tuple[int, int]]:
    """``(t, agent)`` per site: agents ascending at odd t, descending at even t."""
    order = []
    for t in range(1, horizon + 1):
        agents = range(1, n_agents + 1)
        order += [(t, i) for i in (agents if t % 2 == 1 else reversed(agents))]
    return order


def build_snake_mpo(horizon: int, n_agents: int, reward_values) -> ReturnMpo:
    if horizon < 1 or n_agents < 1:
        raise ValueError("horizon and n_agents must be >= 1")
    order = snake_order(horizon, n_agents)
    sites = _chain(len(order), reward_values)
    return ReturnMpo(_freeze(sites), tuple((tag,) for tag in order))


def fuse_per_timestep(mpo: ReturnMpo, n_agents: int) -> ReturnMpo:
    """Contract the ``n_agents`` sites of each timestep into one site.

    The fused reward axis has length ``N_R ** n_agents`` and is ordered
    agent-1 major regardless of the snake direction.
    """
    if n_agents == 1:
        return mpo
    padded = mpo.padded()
    if len(padded) % n_agents:
        raise ValueError("site count is not a multiple of n_agents")
    fused, tags = [], []
    for g in range(0, len(padded), n_agents):
        group = padded[g:g + n_agents]
        group_tags = [mpo.tags[g + k][0] for k in range(n_agents)]
        acc = group[0]
        for w in group[1:]:
            # (bl, m, r...) x (m, br, r') -> (bl, r..., br, r')
            acc = np.tensordot(acc, w, axes=([1], [0]))
            acc = np.moveaxis(acc, -2, 1)
        agents = [a for _, a in group_tags]
        perm = [2 + agents.index(a) for a in sorted(agents)]
        acc = acc.transpose([0, 1] + perm)
        nr = acc.shape[2]
        acc = np.ascontiguousarray(acc.reshape(acc.shape[0], acc.shape[1], nr ** n_agents))
        fused.append(acc)
        tags.append(tuple(sorted(group_tags, key=lambda ta: ta[1])))
    # drop the length-1 dummy bonds at the ends
    if len(fused) == 1:
        sites = [fused[0][0, 0]]
    else:
        sites = [fused[0][0]] + fused[1:-1] + [fused[-1][:, 0]]
    sites = [np.ascontiguousarray(s) for s in sites]
    return ReturnMpo(_freeze(sites), tuple(tags))


def flat_layer(n_sites: int, reward_dim: int) -> ReturnMpo:
    """Bond-dimension-1 layer of flat tensors; marginalizes every reward axis."""
    if n_sites == 1:
        sites = [np.ones(reward_dim)]
    else:
        sites = ([np.ones((1, reward_dim))] + [np.ones((1, 1, reward_dim))] * (n_sites - 2)
                 + [np.ones((1, reward_dim))])
        sites = [s.copy() for s in sites]
    tags = tuple(((t, 0),) for t in range(1, n_sites + 1))
    return ReturnMpo(_freeze(sites), tags)


def default_mpo(horizon: int, n_agents: int, reward_values) -> ReturnMpo:
    """One site per timestep: plain SARL chain or the fused snake."""
    if n_agents == 1:
        return build_sarl_mpo(horizon, reward_values)
    return fuse_per_timestep(build_snake_mpo(horizon, n_agents, reward_values), n_agents)

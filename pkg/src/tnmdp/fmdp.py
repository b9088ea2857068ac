"""FMDP data model: dimensions, transition tensors, policies, initial states.

Axis conventions (fixed throughout the package):

* single-agent transition ``M_t``: ``(s_t, r_t, s_{t-1}, a_{t-1})``
* two-agent transition ``M^J_t``:
  ``(s1_t, s2_t, r1_t, r2_t, s1_{t-1}, s2_{t-1}, a1_{t-1}, a2_{t-1})``
* single-agent policy ``pi_t``: ``(a_{t-1}, s_{t-1})``
* joint policy ``pi^J_t``: ``(a1, a2, s1, s2)``
* per-agent policy factor ``pi^(i)_t``: ``(a_i, s1, s2)``

Timesteps are 1-based in the maths and 0-based in the tuples: ``tensors[0]``
is ``M_1``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .tensor import DenseTensor

__all__ = [
    "FmdpSpec",
    "TransitionModel",
    "PolicySet",
    "InitialDistribution",
    "Violation",
    "copy_tensor",
    "flat",
    "validate",
    "uniform_policy",
    "to_json",
    "from_json",
    "save",
    "load",
]

TOL = 1e-9


def _frozen(arr) -> np.ndarray:
    if isinstance(arr, DenseTensor):
        return arr.array
    if (isinstance(arr, np.ndarray) and arr.dtype == np.float64
            and arr.flags.c_contiguous and not arr.flags.writeable):
        return arr
    a = np.array(arr, dtype=np.float64, order="C")
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class FmdpSpec:
    """Dimensions and index maps of a finite-horizon MDP.

    ``reward_values[k]`` is the reward of reward index ``k``; ``state_offset``
    maps state index 0 to a semantic state (the walker uses ``-T``), and
    ``action_values`` does the same for actions.
    """

    n_states: int
    n_actions: int
    horizon: int
    reward_values: tuple[float, ...]
    n_agents: int = 1
    state_offset: int = 0
    action_values: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "reward_values",
                           tuple(float(r) for r in self.reward_values))
        if self.action_values is None:
            object.__setattr__(self, "action_values", tuple(range(self.n_actions)))
        else:
            object.__setattr__(self, "action_values",
                               tuple(int(a) for a in self.action_values))
        for name in ("n_states", "n_actions", "horizon"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.n_agents not in (1, 2):
            raise ValueError(f"n_agents must be 1 or 2, got {self.n_agents}")
        if not self.reward_values:
            raise ValueError("reward_values must not be empty")
        if len(set(self.reward_values)) != len(self.reward_values):
            raise ValueError(f"reward_values must be distinct: {self.reward_values}")
        if len(self.action_values) != self.n_actions:
            raise ValueError("action_values needs one entry per action")

    @property
    def n_rewards(self) -> int:
        return len(self.reward_values)

    def state_index(self, state: int) -> int:
        idx = int(state) - self.state_offset
        if not 0 <= idx < self.n_states:
            raise ValueError(f"state {state} outside the state space")
        return idx

    def state_value(self, index: int) -> int:
        return int(index) + self.state_offset

    def reward_index(self, reward: float) -> int:
        return self.reward_values.index(float(reward))

    def action_index(self, action: int) -> int:
        return self.action_values.index(int(action))

    def transition_shape(self) -> tuple[int, ...]:
        s, r, a = self.n_states, self.n_rewards, self.n_actions
        if self.n_agents == 1:
            return (s, r, s, a)
        return (s, s, r, r, s, s, a, a)

    def policy_shape(self) -> tuple[int, ...]:
        s, a = self.n_states, self.n_actions
        return (a, s) if self.n_agents == 1 else (a, a, s, s)

    def initial_shape(self) -> tuple[int, ...]:
        return (self.n_states,) * self.n_agents


class TransitionModel:
    """Per-timestep transition tensors ``M_1 .. M_T``.

    Passing the same array object for several timesteps keeps them shared
    (the walker's ``M_t`` are identical for ``t < T``); serialization and the
    planner preserve that sharing.
    """

    def __init__(self, tensors: Sequence):
        cache: dict[int, np.ndarray] = {}
        frozen = []
        for t in tensors:
            key = id(t)
            if key not in cache:
                cache[key] = _frozen(t)
            frozen.append(cache[key])
        if not frozen:
            raise ValueError("a transition model needs at least one timestep")
        if frozen[0].ndim not in (4, 8):
            raise ValueError(f"transition tensors must be rank 4 or 8, got {frozen[0].ndim}")
        if any(m.shape != frozen[0].shape for m in frozen):
            raise ValueError("all transition tensors must share one shape")
        self.tensors: tuple[np.ndarray, ...] = tuple(frozen)

    @property
    def horizon(self) -> int:
        return len(self.tensors)

    @property
    def n_agents(self) -> int:
        return self.tensors[0].ndim // 4

    def __getitem__(self, t: int) -> np.ndarray:
        """1-based access: ``model[t]`` is ``M_t``."""
        if not 1 <= t <= self.horizon:
            raise IndexError(f"timestep {t} outside 1..{self.horizon}")
        return self.tensors[t - 1]

    def __len__(self) -> int:
        return self.horizon


class PolicySet:
    """Per-timestep policies ``pi_1 .. pi_T``.

    Each entry is a single-agent tensor ``(a, s)``, a joint tensor
    ``(a1, a2, s1, s2)``, or a pair of per-agent factors ``(a_i, s1, s2)``
    whose product is the joint policy.
    """

    def __init__(self, tensors: Sequence):
        items = []
        for p in tensors:
            if isinstance(p, (tuple, list)):
                items.append(tuple(_frozen(f) for f in p))
            else:
                items.append(_frozen(p))
        if not items:
            raise ValueError("a policy set needs at least one timestep")
        self.tensors: tuple = tuple(items)
        kinds = {self._kind_of(p) for p in self.tensors}
        if len(kinds) != 1:
            raise ValueError(f"mixed policy kinds: {sorted(kinds)}")
        self.kind: str = kinds.pop()

    @staticmethod
    def _kind_of(p) -> str:
        if isinstance(p, tuple):
            if len(p) != 2 or any(f.ndim != 3 for f in p):
                raise ValueError("per-agent policies are pairs of rank-3 factors")
            return "per-agent"
        if p.ndim == 2:
            return "sarl"
        if p.ndim == 4:
            return "joint"
        raise ValueError(f"policy tensors must be rank 2 or 4, got {p.ndim}")

    @property
    def horizon(self) -> int:
        return len(self.tensors)

    def __getitem__(self, t: int):
        if not 1 <= t <= self.horizon:
            raise IndexError(f"timestep {t} outside 1..{self.horizon}")
        return self.tensors[t - 1]

    def __len__(self) -> int:
        return self.horizon

    def joint_tensor(self, t: int) -> np.ndarray:
        p = self[t]
        if self.kind == "per-agent":
            return np.einsum("ixy,jxy->ijxy", p[0], p[1])
        return p

    def as_joint(self) -> "PolicySet":
        if self.kind != "per-agent":
            return self
        return PolicySet([self.joint_tensor(t) for t in range(1, self.horizon + 1)])

    def replace(self, t: int, tensor) -> "PolicySet":
        items = list(self.tensors)
        items[t - 1] = tensor
        return PolicySet(items)

    def equals(self, other: "PolicySet") -> bool:
        if self.kind != other.kind or self.horizon != other.horizon:
            return False
        for a, b in zip(self.tensors, other.tensors):
            pa = a if isinstance(a, tuple) else (a,)
            pb = b if isinstance(b, tuple) else (b,)
            if any(not np.array_equal(x, y) for x, y in zip(pa, pb)):
                return False
        return True


class InitialDistribution:
    def __init__(self, p0):
        self.p0 = _frozen(p0)
        if self.p0.ndim not in (1, 2):
            raise ValueError(f"initial distribution must be rank 1 or 2, got {self.p0.ndim}")

    @classmethod
    def point(cls, shape: Sequence[int], index) -> "InitialDistribution":
        p = np.zeros(tuple(shape))
        p[tuple(np.atleast_1d(index))] = 1.0
        return cls(p)


def uniform_policy(spec: FmdpSpec, kind: str | None = None) -> PolicySet:
    """Every action equally likely at every state and timestep."""
    a, s = spec.n_actions, spec.n_states
    kind = kind or ("sarl" if spec.n_agents == 1 else "joint")
    if kind == "sarl":
        p = np.full((a, s), 1.0 / a)
    elif kind == "joint":
        p = np.full((a, a, s, s), 1.0 / a**2)
    elif kind == "per-agent":
        f = np.full((a, s, s), 1.0 / a)
        p = (f, f)
    else:
        raise ValueError(f"unknown policy kind {kind!r}")
    return PolicySet([p] * spec.horizon)


def copy_tensor(n: int, rank: int) -> DenseTensor:
    """Multidimensional identity: 1 where all indices agree, else 0."""
    if rank < 2:
        raise ValueError(f"copy tensors have rank >= 2, got {rank}")
    out = np.zeros((n,) * rank)
    idx = np.arange(n)
    out[(idx,) * rank] = 1.0
    return DenseTensor._wrap(out)


def flat(n: int) -> DenseTensor:
    if n < 1:
        raise ValueError(f"flat tensor length must be >= 1, got {n}")
    return DenseTensor._wrap(np.ones(n))


@dataclass(frozen=True)
class Violation:
    tensor: str
    index: tuple
    observed: float
    kind: str = "sum"

    def __str__(self) -> str:
        if self.kind == "sum":
            return f"{self.tensor}: slice {self.index} sums to {self.observed!r}"
        return f"{self.tensor}: entry {self.index} = {self.observed!r} outside [0, 1]"


def _check_conditional(name: str, arr: np.ndarray, n_outcome_axes: int,
                       tol: float) -> list[Violation]:
    out = []
    low = np.argwhere((arr < -tol) | (arr > 1 + tol))
    for idx in low[:20]:
        out.append(Violation(name, tuple(int(i) for i in idx),
                             float(arr[tuple(idx)]), "range"))
    sums = arr.sum(axis=tuple(range(n_outcome_axes)))
    bad = np.argwhere(np.abs(sums - 1.0) > tol)
    for idx in bad:
        out.append(Violation(name, tuple(int(i) for i in idx), float(sums[tuple(idx)])))
    return out


def validate(obj: Union[TransitionModel, PolicySet, InitialDistribution],
             tol: float = TOL) -> list[Violation]:
    """Check the probability constraints; returns an empty list when valid."""
    out: list[Violation] = []
    if isinstance(obj, TransitionModel):
        n_out = 2 * obj.n_agents
        seen = set()
        for t, m in enumerate(obj.tensors, start=1):
            if id(m) in seen:
                continue
            seen.add(id(m))
            out += _check_conditional(f"M_{t}", m, n_out, tol)
    elif isinstance(obj, PolicySet):
        for t, p in enumerate(obj.tensors, start=1):
            if obj.kind == "per-agent":
                for i, f in enumerate(p, start=1):
                    out += _check_conditional(f"pi_{t}^({i})", f, 1, tol)
            else:
                out += _check_conditional(f"pi_{t}", p, p.ndim // 2, tol)
    elif isinstance(obj, InitialDistribution):
        p = obj.p0
        for idx in np.argwhere(p < -tol)[:20]:
            out.append(Violation("p0", tuple(int(i) for i in idx),
                                 float(p[tuple(idx)]), "range"))
        total = float(p.sum())
        if abs(total - 1.0) > tol:
            out.append(Violation("p0", (), total))
    else:
        raise TypeError(f"cannot validate {type(obj).__name__}")
    return out


# --- JSON serialization -----------------------------------------------------
#
# {"type": "TransitionModel", "format": 1,
#  "tensors": [{"shape": [...], "data": [... row-major ...]}, ...],
#  "timesteps": [0, 0, ..., 1]}        # timestep t -> index into "tensors"
#
# PolicySet adds "kind"; per-agent entries of "tensors" are lists of two
# tensor objects. InitialDistribution has a single "tensor". FmdpSpec is a
# plain object of its fields.

FORMAT = 1


def _tensor_json(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "data": a.reshape(-1).tolist()}


def _tensor_from(d: dict) -> np.ndarray:
    return np.asarray(d["data"], dtype=np.float64).reshape(d["shape"])


def _dedup(items) -> tuple[list, list[int]]:
    uniq, index, seen = [], [], {}
    for it in items:
        key = tuple(id(x) for x in it) if isinstance(it, tuple) else id(it)
        if key not in seen:
            seen[key] = len(uniq)
            uniq.append(it)
        index.append(seen[key])
    return uniq, index


def to_json(obj) -> dict:
    if isinstance(obj, FmdpSpec):
        return {"type": "FmdpSpec", "format": FORMAT,
                "n_states": obj.n_states, "n_actions": obj.n_actions,
                "horizon": obj.horizon, "reward_values": list(obj.reward_values),
                "n_agents": obj.n_agents, "state_offset": obj.state_offset,
                "action_values": list(obj.action_values)}
    if isinstance(obj, TransitionModel):
        uniq, index = _dedup(obj.tensors)
        return {"type": "TransitionModel", "format": FORMAT,
                "tensors": [_tensor_json(m) for m in uniq], "timesteps": index}
    if isinstance(obj, PolicySet):
        uniq, index = _dedup(obj.tensors)
        enc = [[_tensor_json(f) for f in p] if isinstance(p, tuple) else _tensor_json(p)
               for p in uniq]
        return {"type": "PolicySet", "format": FORMAT, "kind": obj.kind,
                "tensors": enc, "timesteps": index}
    if isinstance(obj, InitialDistribution):
        return {"type": "InitialDistribution", "format": FORMAT,
                "tensor": _tensor_json(obj.p0)}
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def from_json(d: dict):
    kind = d.get("type")
    if d.get("format") != FORMAT:
        raise ValueError(f"unsupported format {d.get('format')!r}")
    if kind == "FmdpSpec":
        return FmdpSpec(n_states=d["n_states"], n_actions=d["n_actions"],
                        horizon=d["horizon"], reward_values=d["reward_values"],
                        n_agents=d["n_agents"], state_offset=d["state_offset"],
                        action_values=d["action_values"])
    if kind == "TransitionModel":
        uniq = [_tensor_from(x) for x in d["tensors"]]
        return TransitionModel([uniq[i] for i in d["timesteps"]])
    if kind == "PolicySet":
        uniq = [tuple(_tensor_from(f) for f in x) if isinstance(x, list) else _tensor_from(x)
                for x in d["tensors"]]
        return PolicySet([uniq[i] for i in d["timesteps"]])
    if kind == "InitialDistribution":
        return InitialDistribution(_tensor_from(d["tensor"]))
    raise ValueError(f"unknown object type {kind!r}")


def save(obj, path) -> None:
    Path(path).write_text(json.dumps(to_json(obj)))


def load(path):
    return from_json(json.loads(Path(path).read_text()))

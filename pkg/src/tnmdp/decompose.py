"""SVD factorization of joint two-agent tensors.

A joint transition tensor ``M^J[s1', s2', r1, r2, s1, s2, a1, a2]`` is
flattened into a matrix with agent-1 axes ``(s1', r1, s1, a1)`` as rows and
agent-2 axes ``(s2', r2, s2, a2)`` as columns. Truncating its SVD at ``chi``
gives two per-agent factors joined by a bond of length ``chi``. The factors
are not probability tensors in general.

Joint policies ``(a1, a2, s1, s2)`` are split the same way into ``(a1, s1)``
versus ``(a2, s2)``, and the initial distribution into ``s1`` versus ``s2``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .fmdp import FmdpSpec
from .mpo import ReturnMpo, default_mpo
from .tensor import svd_truncated

__all__ = [
    "DecomposedTransition",
    "decompose_joint",
    "reconstruct",
    "reconstruction_error",
    "svd_scan",
    "decompose_policy",
    "decompose_initial",
    "expected_return_decomposed",
    "write_scan_csv",
    "first_exact",
    "EXACT_TOL",
]

EXACT_TOL = 1e-8

_AGENT1 = (0, 2, 4, 6)
_AGENT2 = (1, 3, 5, 7)


@dataclass(frozen=True)
class DecomposedTransition:
    """``m1``: ``(s1', r1, s1, a1, bond)``; ``m2``: ``(bond, s2', r2, s2, a2)``."""

    m1: np.ndarray
    m2: np.ndarray
    chi: int
    singular_values: np.ndarray


def _matricize(mj: np.ndarray) -> tuple[np.ndarray, tuple, tuple]:
    mj = np.asarray(mj, dtype=np.float64)
    if mj.ndim != 8:
        raise ValueError(f"joint transition tensors have rank 8, got {mj.ndim}")
    left = tuple(mj.shape[i] for i in _AGENT1)
    right = tuple(mj.shape[i] for i in _AGENT2)
    mat = mj.transpose(_AGENT1 + _AGENT2).reshape(int(np.prod(left)), int(np.prod(right)))
    return mat, left, right


def decompose_joint(mj, chi: int, split: str = "sqrt") -> DecomposedTransition:
    """Rank-``chi`` factorization; ``split`` decides where ``λ`` goes."""
    mat, left, right = _matricize(mj)
    f = svd_truncated(mat, chi)
    a, b = f.split(split)
    k = f.chi
    return DecomposedTransition(a.reshape(left + (k,)), b.reshape((k,) + right), k,
                                f.singular_values)


def reconstruct(d: DecomposedTransition) -> np.ndarray:
    """Contract the bond and restore the joint axis order."""
    full = np.tensordot(d.m1, d.m2, axes=([4], [0]))  # (s1',r1,s1,a1,s2',r2,s2,a2)
    return full.transpose(0, 4, 1, 5, 2, 6, 3, 7)


def reconstruction_error(mj, d: DecomposedTransition) -> float:
    """Summed absolute element-wise difference."""
    mj = np.asarray(mj, dtype=np.float64)
    rec = reconstruct(d)
    if rec.shape != mj.shape:
        raise ValueError(f"reconstruction has shape {rec.shape}, original {mj.shape}")
    return float(np.abs(rec - mj).sum())


def svd_scan(mj, chi_values: Sequence[int]) -> list[tuple[int, float, int]]:
    """``(chi, alpha, elements)`` per requested ``chi`` from a single SVD.

    ``elements`` counts both factors: ``2 * chi * side`` where ``side`` is the
    length of the flattened per-agent index.
    """
    chi_values = [int(c) for c in chi_values]
    if not chi_values:
        raise ValueError("chi_values is empty")
    if min(chi_values) < 1:
        raise ValueError("chi values must be >= 1")
    mat, left, right = _matricize(mj)
    side = mat.shape[0]
    f = svd_truncated(mat, min(mat.shape))
    us = f.u.array * f.singular_values
    v = f.v.array
    rows = []
    for chi in chi_values:
        k = min(chi, f.chi)
        alpha = float(np.abs(us[:, :k] @ v[:k] - mat).sum())
        rows.append((chi, alpha, 2 * chi * side))
    return rows


def first_exact(rows, tol: float = EXACT_TOL) -> int | None:
    """Smallest scanned ``chi`` whose error is within ``tol``."""
    for chi, alpha, _ in sorted(rows):
        if alpha <= tol:
            return chi
    return None


def decompose_policy(pi_joint, chi: int, split: str = "sqrt") -> tuple[np.ndarray, np.ndarray]:
    """``(a1, a2, s1, s2)`` into ``P1[a1, s1, k]`` and ``P2[k, a2, s2]``."""
    pi = np.asarray(pi_joint, dtype=np.float64)
    if pi.ndim != 4:
        raise ValueError(f"joint policies have rank 4, got {pi.ndim}")
    na1, na2, ns1, ns2 = pi.shape
    mat = pi.transpose(0, 2, 1, 3).reshape(na1 * ns1, na2 * ns2)
    f = svd_truncated(mat, chi)
    a, b = f.split(split)
    return a.reshape(na1, ns1, f.chi), b.reshape(f.chi, na2, ns2)


def decompose_initial(p0, chi: int, split: str = "sqrt") -> tuple[np.ndarray, np.ndarray]:
    """``p0[s1, s2]`` into ``f1[s1, k]`` and ``f2[k, s2]``."""
    p = np.asarray(p0, dtype=np.float64)
    if p.ndim != 2:
        raise ValueError(f"joint initial distributions have rank 2, got {p.ndim}")
    f = svd_truncated(p, chi)
    return f.split(split)


def expected_return_decomposed(spec: FmdpSpec, model: Sequence[DecomposedTransition],
                               pi_factors: Sequence[tuple[np.ndarray, np.ndarray]],
                               p0_factors: tuple[np.ndarray, np.ndarray],
                               mpo: ReturnMpo | None = None) -> float:
    """Expected return of the network with every joint tensor factorized.

    The boundary ``L[s1, s2, b]`` is carried forward; at each timestep it is
    joined with the two policy factors, then pushed through the agent-2 and
    agent-1 transition factors, and finally the MPO site.
    """
    if spec.n_agents != 2:
        raise ValueError("decomposed evaluation needs a two-agent spec")
    T = spec.horizon
    if len(model) != T or len(pi_factors) != T:
        raise ValueError(f"need {T} transition and policy factors, got "
                         f"{len(model)} and {len(pi_factors)}")
    if mpo is None:
        mpo = default_mpo(T, 2, spec.reward_values)
    sites = mpo.padded()
    nr = spec.n_rewards
    f1, f2 = p0_factors
    L = np.einsum("xk,ky->xy", f1, f2)[..., None] * np.ones(sites[0].shape[0])
    for t in range(T):
        P1, P2 = pi_factors[t]
        d = model[t]
        if d.m1.shape[2] != L.shape[0] or d.m2.shape[3] != L.shape[1]:
            raise ValueError(f"timestep {t + 1}: factor state axes do not match the boundary")
        X = np.einsum("ixk,kjy,xyb->xyijb", P1, P2, L, optimize=True)
        Y = np.einsum("xyijb,lvqyj->xilvqb", X, d.m2, optimize=True)
        Z = np.einsum("xilvqb,upxil->uvpqb", Y, d.m1, optimize=True)
        W = sites[t].reshape(sites[t].shape[:2] + (nr, nr))
        L = np.einsum("uvpqb,bcpq->uvc", Z, W, optimize=True)
    return float(L.sum())


def write_scan_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["chi", "alpha", "elements"])
        for chi, alpha, elements in rows:
            w.writerow([chi, repr(alpha), elements])

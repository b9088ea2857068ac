"""Dense tensors with labelled axes, contraction, reshaping and truncated SVD.

Everything is stored as C-ordered float64 numpy arrays. Values are immutable:
constructors copy their input and mark the buffer read-only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "DenseTensor",
    "SvdFactors",
    "ShapeMismatchError",
    "DuplicateAxisError",
    "contract",
    "outer",
    "reshape",
    "group_axes",
    "svd_truncated",
]


class ShapeMismatchError(ValueError):
    pass


class DuplicateAxisError(ValueError):
    pass


class DenseTensor:
    """An n-dimensional real array with optional per-axis labels.

    Parameters
    ----------
    data:
        Anything ``np.asarray`` accepts. A flat sequence may be combined with
        ``shape``, in which case it is read in row-major order.
    shape:
        Optional target shape; ``prod(shape)`` must equal the number of entries.
    labels:
        Optional sequence of axis tags, one per axis.
    """

    __slots__ = ("_array", "_labels")

    def __init__(self, data, shape: Sequence[int] | None = None,
                 labels: Sequence | None = None):
        if isinstance(data, DenseTensor):
            data = data._array
        arr = np.array(data, dtype=np.float64, order="C")
        if shape is not None:
            shape = tuple(int(n) for n in shape)
            if int(np.prod(shape, dtype=np.int64)) != arr.size:
                raise ShapeMismatchError(
                    f"cannot view {arr.size} entries as shape {shape}")
            arr = arr.reshape(shape)
        if any(n < 1 for n in arr.shape):
            raise ValueError(f"axis lengths must be positive, got {arr.shape}")
        if labels is not None:
            labels = tuple(labels)
            if len(labels) != arr.ndim:
                raise ValueError(
                    f"{len(labels)} labels given for a rank-{arr.ndim} tensor")
        arr.flags.writeable = False
        self._array = arr
        self._labels = labels

    @classmethod
    def _wrap(cls, arr: np.ndarray, labels=None) -> "DenseTensor":
        # internal: adopt an array we just created without a second copy
        out = cls.__new__(cls)
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        arr.flags.writeable = False
        out._array = arr
        out._labels = tuple(labels) if labels is not None else None
        return out

    @property
    def array(self) -> np.ndarray:
        return self._array

    @property
    def shape(self) -> tuple[int, ...]:
        return self._array.shape

    @property
    def rank(self) -> int:
        return self._array.ndim

    @property
    def data(self) -> np.ndarray:
        """Flat row-major view of the entries."""
        return self._array.reshape(-1)

    @property
    def labels(self) -> tuple | None:
        return self._labels

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._array
        return self._array.astype(dtype)

    def __getitem__(self, idx):
        return self._array[idx]

    def __mul__(self, alpha: float) -> "DenseTensor":
        return DenseTensor._wrap(self._array * float(alpha), self._labels)

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        if not isinstance(other, DenseTensor):
            return NotImplemented
        return (self.shape == other.shape
                and bool(np.array_equal(self._array, other._array)))

    __hash__ = None

    def allclose(self, other, atol: float = 1e-12) -> bool:
        other = np.asarray(other, dtype=np.float64)
        return self.shape == other.shape and bool(
            np.allclose(self._array, other, rtol=0.0, atol=atol))

    def __repr__(self) -> str:
        lab = f", labels={list(self._labels)}" if self._labels else ""
        return f"DenseTensor(shape={self.shape}{lab})"


def _as_tensor(x) -> DenseTensor:
    return x if isinstance(x, DenseTensor) else DenseTensor(x)


def contract(a, b, pairs: Iterable[tuple[int, int]]) -> DenseTensor:
    """Sum over paired axes of ``a`` and ``b``.

    The result keeps the free axes of ``a`` followed by the free axes of ``b``,
    each in their original order.
    """
    a, b = _as_tensor(a), _as_tensor(b)
    pairs = [(int(i), int(j)) for i, j in pairs]
    axes_a = [i for i, _ in pairs]
    axes_b = [j for _, j in pairs]
    for name, axes, rank in (("a", axes_a, a.rank), ("b", axes_b, b.rank)):
        if len(set(axes)) != len(axes):
            raise DuplicateAxisError(f"axis of {name} paired twice: {axes}")
        bad = [k for k in axes if not 0 <= k < rank]
        if bad:
            raise ValueError(f"axis {bad[0]} out of range for rank-{rank} tensor {name}")
    for i, j in pairs:
        if a.shape[i] != b.shape[j]:
            raise ShapeMismatchError(
                f"axis {i} of a has length {a.shape[i]} but axis {j} of b "
                f"has length {b.shape[j]}")
    out = np.tensordot(a.array, b.array, axes=(axes_a, axes_b))
    labels = None
    if a.labels is not None and b.labels is not None:
        labels = ([l for k, l in enumerate(a.labels) if k not in axes_a]
                  + [l for k, l in enumerate(b.labels) if k not in axes_b])
    return DenseTensor._wrap(out, labels)


def outer(a, b) -> DenseTensor:
    a, b = _as_tensor(a), _as_tensor(b)
    labels = None
    if a.labels is not None and b.labels is not None:
        labels = a.labels + b.labels
    return DenseTensor._wrap(np.multiply.outer(a.array, b.array), labels)


def reshape(a, new_shape: Sequence[int],
            perm: Sequence[int] | None = None) -> DenseTensor:
    """Permute axes by ``perm`` (if given), then regroup in row-major order."""
    a = _as_tensor(a)
    arr = a.array
    if perm is not None:
        perm = [int(p) for p in perm]
        if sorted(perm) != list(range(a.rank)):
            raise ValueError(f"{perm} is not a permutation of {a.rank} axes")
        arr = arr.transpose(perm)
    new_shape = tuple(int(n) for n in new_shape)
    if int(np.prod(new_shape, dtype=np.int64)) != arr.size:
        raise ShapeMismatchError(
            f"cannot reshape {a.shape} ({arr.size} entries) into {new_shape}")
    return DenseTensor._wrap(arr.reshape(new_shape))


def group_axes(a, groups: Sequence[Sequence[int]]) -> DenseTensor:
    """Fuse each group of axes into one; groups must partition the axes."""
    a = _as_tensor(a)
    perm = [k for g in groups for k in g]
    if sorted(perm) != list(range(a.rank)):
        raise ValueError(f"groups {groups} do not partition {a.rank} axes")
    shape = [int(np.prod([a.shape[k] for k in g], dtype=np.int64)) for g in groups]
    return reshape(a, shape, perm)


@dataclass(frozen=True)
class SvdFactors:
    """``m ≈ u @ diag(singular_values) @ v`` with ``u`` (m×χ) and ``v`` (χ×n)."""

    u: DenseTensor
    singular_values: np.ndarray
    v: DenseTensor

    @property
    def chi(self) -> int:
        return int(self.singular_values.shape[0])

    def reconstruct(self) -> np.ndarray:
        return (self.u.array * self.singular_values) @ self.v.array

    def split(self, mode: str = "sqrt") -> tuple[np.ndarray, np.ndarray]:
        """Absorb the singular values into the factors.

        ``"sqrt"`` gives each side ``sqrt(λ)``; ``"left"``/``"right"`` put all
        of ``λ`` on one side.
        """
        lam = self.singular_values
        if mode == "sqrt":
            r = np.sqrt(lam)
            return self.u.array * r, r[:, None] * self.v.array
        if mode == "left":
            return self.u.array * lam, self.v.array.copy()
        if mode == "right":
            return self.u.array.copy(), lam[:, None] * self.v.array
        raise ValueError(f"unknown split mode {mode!r}")


def svd_truncated(m, chi: int) -> SvdFactors:
    """Keep the ``chi`` largest singular triples of a matrix.

    Signs are fixed so the largest-magnitude entry of every left singular
    vector is positive (first such entry on ties).
    """
    m = _as_tensor(m)
    if m.rank != 2:
        raise ValueError(f"svd_truncated needs a matrix, got rank {m.rank}")
    chi = int(chi)
    if chi < 1:
        raise ValueError(f"chi must be >= 1, got {chi}")
    u, s, vh = np.linalg.svd(m.array, full_matrices=False)
    k = min(chi, s.shape[0])
    u, s, vh = u[:, :k], s[:k], vh[:k]
    pivot = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[pivot, np.arange(k)])
    signs[signs == 0] = 1.0
    u = u * signs
    vh = vh * signs[:, None]
    s = np.ascontiguousarray(s)
    s.flags.writeable = False
    return SvdFactors(DenseTensor._wrap(u), s, DenseTensor._wrap(vh))

"""Stochastic matrix analysis: ergodicity coefficients, scrambling, SIA, products.

Two SIA procedures are provided and they are not interchangeable:

* :func:`is_sia_sufficient` is the structural test (rooted spanning tree whose
  root has a self-loop).  A ``True`` is a proof, a ``False`` proves nothing.
* :func:`is_sia_power_oracle` iterates powers until the rows agree.  It is
  complete up to its power cap; a ``False`` only means the cap was hit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graph import check_nonnegative, has_rooted_tree_with_self_loop

STOCHASTIC_TOL = 1e-9
POSITIVE_TOL = 1e-15
WOLFOWITZ_SLACK = 1e-12


def is_stochastic(a, tol: float = STOCHASTIC_TOL) -> bool:
    m = np.asarray(a, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    return bool(np.all(m >= 0) and np.all(np.abs(m.sum(axis=1) - 1.0) <= tol))


def check_stochastic(a, tol: float = STOCHASTIC_TOL, name: str = "matrix") -> np.ndarray:
    m = check_nonnegative(a, name)
    sums = m.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > tol)
    if bad.size:
        raise ValueError(f"{name} row {bad[0]} sums to {sums[bad[0]]!r}, expected 1")
    return m


def delta_coefficient(a) -> float:
    """Largest column-wise spread between two rows; zero iff all rows agree."""
    m = np.asarray(a, dtype=float)
    return float(np.max(m.max(axis=0) - m.min(axis=0)))


def _overlaps(m: np.ndarray) -> np.ndarray:
    # overlap[i1, i2] = sum_j min(a[i1, j], a[i2, j])
    return np.minimum(m[:, None, :], m[None, :, :]).sum(axis=2)


def lambda_coefficient(a) -> float:
    """``1 - min_{i1,i2} sum_j min(a[i1,j], a[i2,j])``; below 1 iff scrambling."""
    m = np.asarray(a, dtype=float)
    return float(1.0 - _overlaps(m).min())


def is_scrambling(a, delta: float = 0.0) -> bool:
    """Every pair of distinct rows shares a column where both entries reach ``delta``.

    ``delta == 0`` tests plain scrambling, with strict positivity read as
    ``>= 1e-15``.
    """
    m = np.asarray(a, dtype=float)
    if delta < 0:
        raise ValueError("delta must be >= 0")
    mask = (m >= max(delta, POSITIVE_TOL)).astype(np.int64)
    shared = mask @ mask.T
    off = ~np.eye(m.shape[0], dtype=bool)
    return bool(np.all(shared[off] > 0))


def is_sia_sufficient(a, delta: float) -> bool:
    return has_rooted_tree_with_self_loop(a, delta)[0]


def sia_power_index(a, max_power: int, tol: float = 1e-9) -> int | None:
    """Smallest ``k <= max_power`` with ``Delta(a^k) < tol``, else ``None``."""
    if max_power < 1:
        raise ValueError("max_power must be >= 1")
    m = np.asarray(a, dtype=float)
    p = m.copy()
    for k in range(1, max_power + 1):
        if delta_coefficient(p) < tol:
            return k
        p = p @ m
    return None


def is_sia_power_oracle(a, max_power: int, tol: float = 1e-9) -> bool:
    """Power-iteration SIA check; ``False`` means "not shown within the cap"."""
    return sia_power_index(a, max_power, tol) is not None


def left_product(seq: Sequence) -> np.ndarray:
    """``A_k A_{k-1} ... A_1`` for ``seq = [A_1, ..., A_k]``."""
    mats = [np.asarray(s, dtype=float) for s in seq]
    if not mats:
        raise ValueError("empty sequence")
    shape = mats[0].shape
    out = mats[0].copy()
    for idx, m in enumerate(mats[1:], start=2):
        if m.shape != shape:
            raise ValueError(f"matrix {idx} has shape {m.shape}, expected {shape}")
        out = m @ out
    return out


def wolfowitz_bound_check(seq: Sequence) -> tuple[float, float, bool]:
    """``(Delta(product), prod lambda(A_i), Delta <= bound + 1e-12)``."""
    delta = delta_coefficient(left_product(seq))
    bound = float(np.prod([lambda_coefficient(m) for m in seq]))
    return delta, bound, delta <= bound + WOLFOWITZ_SLACK


def block_shift(n: int, m: int) -> np.ndarray:
    """The ``mn x mn`` shift ``M0``: identity in block (0,0) and on the block subdiagonal."""
    out = np.zeros((m * n, m * n))
    eye = np.eye(n)
    out[:n, :n] = eye
    for b in range(1, m):
        out[b * n:(b + 1) * n, (b - 1) * n:b * n] = eye
    return out


def first_block_row(blocks: Sequence) -> np.ndarray:
    """``D``: the given ``n x n`` blocks laid along the first block row, zeros below."""
    mats = [np.asarray(b, dtype=float) for b in blocks]
    n = mats[0].shape[0]
    m = len(mats)
    out = np.zeros((m * n, m * n))
    out[:n, :] = np.hstack(mats)
    return out


@dataclass(frozen=True)
class AugmentedBlocks:
    n: int
    m: int
    M0: np.ndarray
    D: np.ndarray

    @classmethod
    def from_blocks(cls, blocks: Sequence) -> "AugmentedBlocks":
        D = first_block_row(blocks)
        n = np.asarray(blocks[0]).shape[0]
        return cls(n=n, m=len(blocks), M0=block_shift(n, len(blocks)), D=D)

    def M(self, k: int = 1) -> np.ndarray:
        """``D + M0^k``."""
        return self.D + np.linalg.matrix_power(self.M0, k)


def build_augmented(coeffs: Sequence, tol: float = STOCHASTIC_TOL) -> np.ndarray:
    """Companion matrix ``C`` of a delayed recursion with coefficients ``A^0..A^tau``.

    ``C @ [x(k); x(k-1); ...; x(k-tau)] = [x(k+1); x(k); ...; x(k-tau+1)]``.
    """
    mats = [check_nonnegative(c, f"A^{l}") for l, c in enumerate(coeffs)]
    total = np.sum(mats, axis=0).sum(axis=1)
    bad = np.flatnonzero(np.abs(total - 1.0) > tol)
    if bad.size:
        raise ValueError(f"row {bad[0]} of the coefficients sums to {total[bad[0]]!r}")
    n = mats[0].shape[0]
    m = len(mats)
    C = np.zeros((m * n, m * n))
    C[:n, :] = np.hstack(mats)
    for b in range(1, m):
        C[b * n:(b + 1) * n, (b - 1) * n:b * n] = np.eye(n)
    return C

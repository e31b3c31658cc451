"""Discrete-time consensus with bounded delays.

    x_i(k+1) = sum_{l=0..tau} sum_j a_ij^l(k) x_j(k-l)

Coefficients come from a *provider*: any callable ``k -> [A^0(k), ..., A^tau(k)]``.
"""

from __future__ import annotations

import json
from collections import deque
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .graph import has_delta_spanning_tree

COEFF_TOL = 1e-9
DEFAULT_MAX_STEPS = 100_000

CoeffProvider = Callable[[int], Sequence[np.ndarray]]


class CoefficientError(ValueError):
    pass


def validate_coefficients(
    coeffs: Sequence[np.ndarray], k: int = 0, tol: float = COEFF_TOL, allow_self_delay: bool = False
) -> np.ndarray:
    """Stack and check one step's coefficients; returns an array of shape (tau+1, n, n).

    By default a row may only reference its own past through lag 0
    (``a_ii^l == 0`` for ``l >= 1``) and must keep ``a_ii^0 > 0``.
    """
    A = np.asarray(coeffs, dtype=float)
    if A.ndim != 3 or A.shape[1] != A.shape[2]:
        raise CoefficientError(f"step {k}: coefficients must be a list of square matrices")
    if np.any(A < 0):
        l, i, j = np.argwhere(A < 0)[0]
        raise CoefficientError(f"step {k}: negative coefficient a^{l}[{i},{j}]")
    sums = A.sum(axis=(0, 2))
    bad = np.flatnonzero(np.abs(sums - 1.0) > tol)
    if bad.size:
        raise CoefficientError(f"step {k}: row {bad[0]} sums to {sums[bad[0]]!r}, expected 1")
    if allow_self_delay:
        return A
    diag0 = np.diagonal(A[0])
    if np.any(diag0 <= 0):
        raise CoefficientError(f"step {k}: row {int(np.argmin(diag0))} has a_ii^0 <= 0")
    if A.shape[0] > 1 and np.any(np.diagonal(A[1:], axis1=1, axis2=2) != 0):
        l, i = np.argwhere(np.diagonal(A[1:], axis1=1, axis2=2) != 0)[0]
        raise CoefficientError(f"step {k}: row {i} has a delayed self-coefficient at lag {l + 1}")
    return A


class DelayedSystem:
    """Mutable delayed system; ``history[0]`` is x(k), ``history[tau]`` is x(k - tau)."""

    def __init__(
        self,
        provider: CoeffProvider,
        tau: int,
        x0,
        history=None,
        k0: int = 0,
        allow_self_delay: bool = False,
    ):
        if tau < 0:
            raise ValueError("tau must be >= 0")
        self.provider = provider
        self.tau = tau
        x0 = np.asarray(x0, dtype=float)
        self.n = x0.shape[0]
        if history is None:
            history = [x0] * (tau + 1)
        if len(history) != tau + 1:
            raise ValueError(f"history must hold tau+1 = {tau + 1} vectors")
        self.history = deque((np.asarray(h, dtype=float).copy() for h in history), maxlen=tau + 1)
        self.k = k0
        self.allow_self_delay = allow_self_delay

    @property
    def state(self) -> np.ndarray:
        return self.history[0]

    def window(self) -> np.ndarray:
        return np.array(self.history)

    def spread(self) -> float:
        w = self.window()
        return float(w.max() - w.min())

    def step(self) -> np.ndarray:
        A = validate_coefficients(self.provider(self.k), self.k, allow_self_delay=self.allow_self_delay)
        if A.shape[0] > self.tau + 1 or A.shape[1] != self.n:
            raise CoefficientError(
                f"step {self.k}: got {A.shape[0]} blocks of size {A.shape[1]}, "
                f"system has tau={self.tau}, n={self.n}"
            )
        x_new = np.zeros(self.n)
        for l in range(A.shape[0]):
            x_new += A[l] @ self.history[l]
        self.history.appendleft(x_new)
        self.k += 1
        return x_new


def step_delayed(sys: DelayedSystem) -> np.ndarray:
    return sys.step()


def run_to_consensus(sys: DelayedSystem, tol: float, max_steps: int = DEFAULT_MAX_STEPS) -> tuple[bool, int, float]:
    """Iterate until the spread over the whole delay window drops below ``tol``."""
    if tol <= 0:
        raise ValueError("tol must be > 0")
    spread = sys.spread()
    if spread < tol:
        return True, 0, spread
    for steps in range(1, max_steps + 1):
        sys.step()
        spread = sys.spread()
        if spread < tol:
            return True, steps, spread
    return False, max_steps, spread


def build_B(coeffs: Sequence) -> np.ndarray:
    """Collapse delays: ``b_ii = a_ii^0`` and ``b_ij = sum_l a_ij^l`` off the diagonal."""
    A = np.asarray(coeffs, dtype=float)
    B = A.sum(axis=0)
    np.fill_diagonal(B, np.diagonal(A[0]))
    return B


def window_tree_check(provider: CoeffProvider, k: int, h: int, delta: float) -> bool:
    """Does ``B(k+1) + ... + B(k+h)`` have a delta-spanning tree?"""
    if h < 1:
        raise ValueError("h must be >= 1")
    total = sum(build_B(provider(m)) for m in range(k + 1, k + h + 1))
    return has_delta_spanning_tree(total, delta)[0]


def schedule_provider(schedule: Sequence[Sequence], periodic: bool = True) -> CoeffProvider:
    """Provider over a finite list of per-step coefficient lists."""
    steps = [np.asarray(s, dtype=float) for s in schedule]
    if not steps:
        raise ValueError("empty schedule")

    def provider(k: int):
        if periodic:
            return steps[k % len(steps)]
        if k >= len(steps):
            raise IndexError(f"schedule has no coefficients for step {k}")
        return steps[k]

    return provider


def load_schedule(path) -> list[np.ndarray]:
    """JSON file: a list of steps, each a list of tau+1 square matrices."""
    raw = json.loads(Path(path).read_text())
    steps = []
    for k, step in enumerate(raw):
        steps.append(validate_coefficients(step, k))
    taus = {s.shape[0] for s in steps}
    if len(taus) != 1:
        raise CoefficientError("all steps must carry the same number of delay blocks")
    return steps


def dump_schedule(schedule: Sequence, path) -> None:
    Path(path).write_text(json.dumps([np.asarray(s).tolist() for s in schedule]))

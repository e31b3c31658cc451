"""Seeded random instances for tests and experiments."""

from __future__ import annotations

import numpy as np

from .delayed import build_B
from .graph import laplacian_from_weights


def random_tree_weights(
    n: int,
    rng: np.random.Generator,
    extra_edge_prob: float = 0.3,
    leader: bool = False,
    w_range: tuple[float, float] = (0.5, 1.5),
) -> np.ndarray:
    """Weight matrix (``w[i, j]`` is the edge j -> i) containing a random spanning tree.

    With ``leader=True`` the root keeps no incoming edges, so its Laplacian
    row is zero; otherwise every agent ends up with at least one in-neighbour.
    """
    lo, hi = w_range
    order = rng.permutation(n)
    w = np.zeros((n, n))
    for pos in range(1, n):
        child, parent = order[pos], order[rng.integers(pos)]
        w[child, parent] = rng.uniform(lo, hi)
    extra = (rng.random((n, n)) < extra_edge_prob) & (w == 0)
    np.fill_diagonal(extra, False)
    w[extra] = rng.uniform(lo, hi, size=int(extra.sum()))
    root = order[0]
    if leader:
        w[root] = 0.0
    elif n > 1 and not w[root].any():
        src = rng.choice([j for j in range(n) if j != root])
        w[root, src] = rng.uniform(lo, hi)
    return w


def random_tree_laplacian(n: int, rng: np.random.Generator, **kw) -> np.ndarray:
    return laplacian_from_weights(random_tree_weights(n, rng, **kw))


def random_stochastic(n: int, rng: np.random.Generator, zero_prob: float = 0.0) -> np.ndarray:
    """Uniform entries, optionally zeroed at random, then row-normalized.

    A row zeroed out entirely keeps one random positive entry.
    """
    a = rng.random((n, n))
    if zero_prob > 0:
        a[rng.random((n, n)) < zero_prob] = 0.0
        for i in np.flatnonzero(a.sum(axis=1) == 0):
            a[i, rng.integers(n)] = rng.random() + 1e-3
    return a / a.sum(axis=1, keepdims=True)


def _tree_edges(n: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Edges (i, j) meaning j -> i of a random spanning tree."""
    order = rng.permutation(n)
    return [(int(order[p]), int(order[rng.integers(p)])) for p in range(1, n)]


def _step_from_edges(n: int, tau: int, edges, rng: np.random.Generator, delta: float) -> np.ndarray:
    """One step's coefficient blocks: every listed edge gets weight >= delta at a random lag,
    and every diagonal ``a_ii^0`` keeps at least ``delta``."""
    A = np.zeros((tau + 1, n, n))
    by_row: dict[int, list[int]] = {}
    for i, j in edges:
        by_row.setdefault(i, []).append(j)
    for i in range(n):
        srcs = by_row.get(i, [])
        m = len(srcs) + 1
        if m * delta > 1:
            raise ValueError(f"row {i}: {m} entries cannot all reach delta={delta}")
        share = delta + (1 - m * delta) * rng.dirichlet(np.ones(m))
        A[0, i, i] = share[0]
        for j, s in zip(srcs, share[1:]):
            A[rng.integers(tau + 1), i, j] += s
    return A


def periodic_schedule(
    n: int,
    tau: int,
    period: int,
    rng: np.random.Generator,
    delta: float = 0.05,
    extra_edge_prob: float = 0.2,
) -> list[np.ndarray]:
    """One period of a deterministic delayed schedule.

    The edges of a random spanning tree are spread over the period's steps,
    so ``B`` summed over any ``period`` consecutive steps contains the tree
    with weights >= ``delta``, and every ``a_ii^0 >= delta``.
    """
    tree = _tree_edges(n, rng)
    slots: list[list[tuple[int, int]]] = [[] for _ in range(period)]
    for e in tree:
        slots[rng.integers(period)].append(e)
    steps = []
    for k in range(period):
        extra = [(i, j) for i in range(n) for j in range(n) if i != j and rng.random() < extra_edge_prob]
        edges = list(dict.fromkeys(slots[k] + extra))
        steps.append(_step_from_edges(n, tau, edges, rng, delta))
    return steps


class BlockwiseIIDSchedule:
    """Random delayed schedule whose blocks of ``N`` steps are i.i.d.

    Every block redistributes the edges of one fixed spanning tree over its
    steps (each edge kept with probability ``keep``), so the expected window
    sum of ``B`` over a block has the tree with weight >= keep * delta.
    Coefficients for step k are a function of (seed, k // N) alone.
    """

    def __init__(self, n: int, tau: int, N: int, seed: int, delta: float = 0.05, keep: float = 0.8):
        self.n, self.tau, self.N = n, tau, N
        self.seed, self.delta, self.keep = seed, delta, keep
        self.tree = _tree_edges(n, np.random.default_rng([seed, 0]))
        self._cache: dict[int, list[np.ndarray]] = {}

    def block(self, b: int) -> list[np.ndarray]:
        if b not in self._cache:
            if len(self._cache) > 64:
                self._cache.clear()
            rng = np.random.default_rng([self.seed, 1, b])
            slots: list[list[tuple[int, int]]] = [[] for _ in range(self.N)]
            for e in self.tree:
                if rng.random() < self.keep:
                    slots[rng.integers(self.N)].append(e)
            self._cache[b] = [_step_from_edges(self.n, self.tau, s, rng, self.delta) for s in slots]
        return self._cache[b]

    def __call__(self, k: int) -> np.ndarray:
        return self.block(k // self.N)[k % self.N]


def window_sum_B(steps) -> np.ndarray:
    return sum(build_B(s) for s in steps)

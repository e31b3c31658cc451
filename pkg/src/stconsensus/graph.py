"""Weighted digraphs, Laplacians, delta-thresholding and spanning trees.

Convention: ``a[i][j]`` is the weight of the edge ``v_j -> v_i`` (agent i
listens to agent j).  Diagonal entries never create edges, except in
:func:`has_rooted_tree_with_self_loop`, where they act as self-loops.
"""

from __future__ import annotations

from collections import deque

import numpy as np

ROW_SUM_TOL = 1e-12


def as_square(a, name: str = "matrix") -> np.ndarray:
    m = np.asarray(a, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    return m


def check_nonnegative(a, name: str = "matrix") -> np.ndarray:
    m = as_square(a, name)
    if np.any(m < 0) or not np.all(np.isfinite(m)):
        i, j = np.argwhere(~(m >= 0))[0]
        raise ValueError(f"{name} has a negative or non-finite entry at ({i}, {j})")
    return m


def laplacian_from_weights(w) -> np.ndarray:
    """Graph Laplacian of a nonnegative weight matrix.

    Off-diagonal ``l_ij = -a_ij``; diagonal is the off-diagonal row sum, so a
    row of zeros (a leader) is allowed.
    """
    a = check_nonnegative(w, "weight matrix")
    off = a - np.diag(np.diag(a))
    return np.diag(off.sum(axis=1)) - off


def weights_from_laplacian(lap) -> np.ndarray:
    """Off-diagonal edge weights ``-l_ij`` with a zero diagonal."""
    l = as_square(lap, "laplacian")
    w = -l.copy()
    np.fill_diagonal(w, 0.0)
    return w


def is_laplacian(lap, tol: float = ROW_SUM_TOL) -> bool:
    l = np.asarray(lap, dtype=float)
    if l.ndim != 2 or l.shape[0] != l.shape[1]:
        return False
    off = l - np.diag(np.diag(l))
    return bool(
        np.all(np.abs(l.sum(axis=1)) <= tol)
        and np.all(off <= 0)
        and np.all(np.diag(l) >= 0)
    )


def check_laplacian(lap, tol: float = ROW_SUM_TOL, name: str = "laplacian") -> np.ndarray:
    l = as_square(lap, name)
    sums = l.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums) > tol)
    if bad.size:
        raise ValueError(f"{name} row {bad[0]} sums to {sums[bad[0]]!r}, expected 0")
    off = l - np.diag(np.diag(l))
    if np.any(off > 0):
        i, j = np.argwhere(off > 0)[0]
        raise ValueError(f"{name} has a positive off-diagonal entry at ({i}, {j})")
    if np.any(np.diag(l) < 0):
        raise ValueError(f"{name} has a negative diagonal entry")
    return l


def delta_matrix(a, delta: float) -> np.ndarray:
    """Keep entries ``>= delta``; zero the rest."""
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    m = check_nonnegative(a)
    return np.where(m >= delta, m, 0.0)


def _reach(adj: np.ndarray, root: int) -> np.ndarray:
    # adj[i, j] True means edge j -> i
    n = adj.shape[0]
    seen = np.zeros(n, dtype=bool)
    seen[root] = True
    queue = deque([root])
    out = adj.T
    while queue:
        v = queue.popleft()
        for u in np.flatnonzero(out[v] & ~seen):
            seen[u] = True
            queue.append(u)
    return seen


def _edge_mask(a: np.ndarray, delta: float) -> np.ndarray:
    thr = delta if delta > 0 else np.finfo(float).tiny
    adj = a >= thr
    np.fill_diagonal(adj, False)
    return adj


def spanning_tree_roots(a, delta: float) -> list[int]:
    """All vertices from which every vertex is reachable in the delta-graph."""
    m = check_nonnegative(a)
    adj = _edge_mask(m, delta)
    return [r for r in range(m.shape[0]) if _reach(adj, r).all()]


def has_delta_spanning_tree(a, delta: float) -> tuple[bool, int | None]:
    """Whether the delta-graph of ``a`` has a directed spanning tree.

    Returns ``(True, root)`` with the smallest-index root, or ``(False, None)``.
    """
    m = check_nonnegative(a)
    adj = _edge_mask(m, delta)
    for r in range(m.shape[0]):
        if _reach(adj, r).all():
            return True, r
    return False, None


def has_rooted_tree_with_self_loop(a, delta: float) -> tuple[bool, int | None]:
    """Spanning tree in the delta-graph whose root carries a self-loop ``a_rr >= delta``."""
    m = check_nonnegative(a)
    thr = delta if delta > 0 else np.finfo(float).tiny
    for r in spanning_tree_roots(m, delta):
        if m[r, r] >= thr:
            return True, r
    return False, None


def max_spanning_tree_delta(a) -> float:
    """Largest delta for which the delta-graph still has a spanning tree (0.0 if none).

    For n == 1 every delta works; ``inf`` is returned.
    """
    m = check_nonnegative(a)
    if m.shape[0] == 1:
        return float("inf")
    off = m[~np.eye(m.shape[0], dtype=bool)]
    for d in np.unique(off[off > 0])[::-1]:
        if has_delta_spanning_tree(m, float(d))[0]:
            return float(d)
    return 0.0

"""Topology providers.

Centralized runs ask a provider for a stream of whole Laplacians
(:meth:`laplacians`); distributed runs ask for one agent's row each time that
agent updates (:meth:`row`).  Every random choice uses the generator handed
in by the caller, so providers hold no random state of their own.
"""

from __future__ import annotations

import itertools
from typing import Iterator, Sequence

import numpy as np

from .graph import ROW_SUM_TOL, check_laplacian


class TopologyError(ValueError):
    pass


class FixedTopology:
    kind = "fixed"

    def __init__(self, laplacian):
        self.L = check_laplacian(laplacian)
        self.n = self.L.shape[0]

    def laplacians(self, rng: np.random.Generator) -> Iterator[np.ndarray]:
        return itertools.repeat(self.L)

    def row(self, i: int, rng: np.random.Generator) -> np.ndarray:
        return self.L[i]

    def diag_bounds(self) -> list[tuple[float, float]]:
        d = np.diag(self.L)
        return [(float(v), float(v)) for v in d]


class ScaledTopology:
    """Each update rescales the agent's base row by ``eps ~ U[eps_min, eps_max]``.

    ``eps_min == eps_max`` is accepted; it pins the scaling.
    """

    kind = "scaled"

    def __init__(self, laplacian, eps_min: float, eps_max: float):
        if not 0 < eps_min <= eps_max:
            raise TopologyError(f"need 0 < eps_min <= eps_max, got [{eps_min}, {eps_max}]")
        self.L = check_laplacian(laplacian)
        self.n = self.L.shape[0]
        self.eps_min = float(eps_min)
        self.eps_max = float(eps_max)

    def row(self, i: int, rng: np.random.Generator) -> np.ndarray:
        eps = rng.uniform(self.eps_min, self.eps_max)
        return eps * self.L[i]

    def diag_bounds(self) -> list[tuple[float, float]]:
        d = np.diag(self.L)
        return [(float(self.eps_min * v), float(self.eps_max * v)) for v in d]


def check_row_membership(row, i: int, lo: float, hi: float, tol: float = ROW_SUM_TOL) -> None:
    """Raise unless ``row`` lies in S_i(lo, hi): diagonal in [lo, hi], off-diagonal <= 0, zero sum."""
    s = np.asarray(row, dtype=float)
    if not lo <= s[i] <= hi:
        raise TopologyError(f"agent {i}: diagonal {s[i]} outside [{lo}, {hi}]")
    off = np.delete(s, i)
    if np.any(off > 0):
        raise TopologyError(f"agent {i}: row has a positive off-diagonal entry")
    if abs(s.sum()) > tol:
        raise TopologyError(f"agent {i}: row sums to {s.sum()!r}, expected 0")


class RowFamilies:
    """Each agent draws its row i.i.d. from a finite family at every update.

    ``bounds[i] = (a_i, b_i)`` default to the min and max diagonal over the
    family; ``a_i == b_i`` is accepted.
    """

    kind = "iid"

    def __init__(self, families: Sequence[Sequence], probabilities: Sequence | None = None, bounds=None):
        self.families = [np.asarray(f, dtype=float).reshape(len(f), -1) for f in families]
        self.n = len(self.families)
        if any(f.shape[1] != self.n for f in self.families):
            raise TopologyError(f"every row must have {self.n} entries")
        if any(f.shape[0] == 0 for f in self.families):
            raise TopologyError("every agent needs at least one row")
        if probabilities is None:
            self.probabilities = [np.full(f.shape[0], 1.0 / f.shape[0]) for f in self.families]
        else:
            self.probabilities = [np.asarray(p, dtype=float) for p in probabilities]
            for i, (p, f) in enumerate(zip(self.probabilities, self.families)):
                if p.shape != (f.shape[0],) or np.any(p < 0) or abs(p.sum() - 1) > 1e-9:
                    raise TopologyError(f"agent {i}: bad selection probabilities {p.tolist()}")
        if bounds is None:
            bounds = [(float(f[:, i].min()), float(f[:, i].max())) for i, f in enumerate(self.families)]
        self.bounds = [(float(a), float(b)) for a, b in bounds]
        for i, (a, b) in enumerate(self.bounds):
            if not 0 < a <= b:
                raise TopologyError(f"agent {i}: need 0 < a_i <= b_i, got ({a}, {b})")
            for r in self.families[i]:
                check_row_membership(r, i, a, b)
        self._uniform = [probabilities is None] * self.n

    def row(self, i: int, rng: np.random.Generator) -> np.ndarray:
        fam = self.families[i]
        if self._uniform[i]:
            idx = rng.integers(fam.shape[0])
        else:
            idx = rng.choice(fam.shape[0], p=self.probabilities[i])
        return fam[idx]

    def sample_rows(self, i: int, size: int, rng: np.random.Generator) -> np.ndarray:
        fam = self.families[i]
        if self._uniform[i]:
            idx = rng.integers(fam.shape[0], size=size)
        else:
            idx = rng.choice(fam.shape[0], p=self.probabilities[i], size=size)
        return fam[idx]

    def mean_laplacian(self) -> np.ndarray:
        return np.array([p @ f for p, f in zip(self.probabilities, self.families)])

    def diag_bounds(self) -> list[tuple[float, float]]:
        return list(self.bounds)


def _lmax(L: np.ndarray) -> float:
    return float(np.max(np.diag(L)))


class _CentralSwitching:
    def __init__(self, laplacians: Sequence, l_bounds: tuple[float, float] | None):
        self.family = [check_laplacian(L, name=f"laplacian {k}") for k, L in enumerate(laplacians)]
        if not self.family:
            raise TopologyError("empty Laplacian family")
        self.n = self.family[0].shape[0]
        if any(L.shape != (self.n, self.n) for L in self.family):
            raise TopologyError("all Laplacians must share one shape")
        lmaxes = [_lmax(L) for L in self.family]
        if l_bounds is None:
            l_bounds = (min(lmaxes), max(lmaxes))
        lo, hi = l_bounds
        if not 0 < lo <= hi:
            raise TopologyError(f"need 0 < l_min <= l_max, got {l_bounds}")
        self.l_bounds = (float(lo), float(hi))


class LaplacianFamily(_CentralSwitching):
    """I.i.d. draws from a finite family of Laplacians."""

    kind = "iid-laplacian"

    def __init__(self, laplacians: Sequence, probabilities: Sequence | None = None, l_bounds=None):
        super().__init__(laplacians, l_bounds)
        m = len(self.family)
        self.probabilities = np.full(m, 1.0 / m) if probabilities is None else np.asarray(probabilities, float)
        if self.probabilities.shape != (m,) or abs(self.probabilities.sum() - 1) > 1e-9:
            raise TopologyError("probabilities must match the family and sum to 1")

    def laplacians(self, rng: np.random.Generator) -> Iterator[np.ndarray]:
        m = len(self.family)
        while True:
            yield self.family[rng.choice(m, p=self.probabilities)]

    def mean_laplacian(self) -> np.ndarray:
        return np.tensordot(self.probabilities, np.array(self.family), axes=1)


class MarkovLaplacians(_CentralSwitching):
    """Laplacians indexed by a homogeneous Markov chain on the family."""

    kind = "markov-laplacian"

    def __init__(self, laplacians: Sequence, transition, initial: int = 0, l_bounds=None):
        super().__init__(laplacians, l_bounds)
        P = np.asarray(transition, dtype=float)
        m = len(self.family)
        if P.shape != (m, m) or np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1) > 1e-9):
            raise TopologyError("transition must be a row-stochastic matrix over the family")
        self.P = P
        self.initial = int(initial)

    def laplacians(self, rng: np.random.Generator) -> Iterator[np.ndarray]:
        s = self.initial
        m = len(self.family)
        while True:
            yield self.family[s]
            s = rng.choice(m, p=self.P[s])

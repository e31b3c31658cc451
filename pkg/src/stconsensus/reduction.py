"""Reduce a distributed run to a delayed discrete-time consensus system.

Step ``k`` maps network event ``k`` to event ``k + 1``.  ``y_i(k)`` is the
value agent i last broadcast at or before ``t_k``.  A non-updating agent keeps
an identity row.  An agent that updates at ``t_{k+1}`` and last updated at
event ``p = k - d`` gets

* ``reads="latest"``: ``a_ii^0 = 1 - l_ii dt_i`` and, for every ``m`` in
  ``p..k``, ``a_ij^{k-m} = -dt_m l_ij`` where ``dt_m = t_{m+1} - t_m``;
* ``reads="own-update"``: ``a_ii^0`` as above and ``a_ij^d = -dt_i l_ij``.

``l`` is the row the agent drew at event ``p`` and ``dt_i`` the interval it
recorded there.  In a consistent log ``dt_i = t_{k+1} - t_p``, so a corrupted
interval shows up as a row-sum or replay violation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np

from .delayed import DelayedSystem, build_B, schedule_provider
from .graph import has_delta_spanning_tree, weights_from_laplacian
from .sim import EventLog, Trajectory

REPLAY_TOL = 1e-9
ROW_TOL = 1e-9


class ReductionError(RuntimeError):
    def __init__(self, agent: int, step: int, message: str):
        super().__init__(f"agent {agent}, step {step}: {message}")
        self.agent = agent
        self.step = step


@dataclass(frozen=True)
class StructuralBounds:
    delta_min: float
    delta_max: float
    h_prime: int
    tau: int
    h: int
    N: int

    def to_dict(self) -> dict:
        return asdict(self)


def smallest_cover(delta_min: float, delta_max: float) -> int:
    """Smallest positive integer m with ``m * delta_min >= delta_max``.

    The comparison carries a 1e-12 relative slack so that decimal inputs such
    as 9 * 0.1 vs 0.9 resolve the way their decimal values do.
    """
    m = max(1, math.ceil(delta_max / delta_min))
    while m > 1 and (m - 1) * delta_min >= delta_max * (1 - 1e-12):
        m -= 1
    while m * delta_min < delta_max * (1 - 1e-12):
        m += 1
    return m


def compute_bounds(deltas: Sequence[float], diag: Sequence, n: int | None = None) -> StructuralBounds:
    """Update-interval bounds and the derived delay/window constants.

    ``diag`` holds per-agent ``l_ii`` or ``(a_i, b_i)`` diagonal bounds.
    Agents with a zero diagonal (leaders) never update and are skipped.
    """
    deltas = list(deltas)
    n = len(deltas) if n is None else n
    lows, highs = [], []
    for d, g in zip(deltas, diag):
        a, b = (g, g) if np.isscalar(g) else g
        if b <= 0:
            continue
        lows.append(d / b)
        highs.append((1 - d) / a)
    if not lows:
        raise ValueError("no schedulable agent")
    delta_min, delta_max = min(lows), max(highs)
    hp = smallest_cover(delta_min, delta_max)
    return StructuralBounds(
        delta_min=delta_min,
        delta_max=delta_max,
        h_prime=hp,
        tau=(n - 1) * (hp + 1),
        h=n * (hp + 1),
        N=n * (hp + 1),
    )


@dataclass
class ReducedRun:
    """The delayed system extracted from one distributed run.

    ``coeffs[k, l]`` is ``A^l(k)``; lags beyond ``coeffs.shape[1] - 1`` are
    identically zero.  ``delays[k, i]`` is ``d_ik`` for agents updating at
    ``t_{k+1}`` and ``-1`` otherwise.
    """

    n: int
    reads: str
    times: np.ndarray
    y: np.ndarray
    coeffs: np.ndarray
    B: np.ndarray
    delays: np.ndarray
    updaters: list[tuple[int, ...]]
    one_step_errors: list[tuple[int, int, float]] = field(default_factory=list)

    @property
    def steps(self) -> int:
        return self.coeffs.shape[0]

    @property
    def max_delay(self) -> int:
        return int(self.delays.max()) if self.delays.size else 0

    def step_coefficients(self, k: int, tau: int | None = None) -> list[np.ndarray]:
        """``[A^0(k), ..., A^tau(k)]``, zero-padded up to ``tau``."""
        blocks = list(self.coeffs[k])
        if tau is not None:
            blocks += [np.zeros((self.n, self.n))] * (tau + 1 - len(blocks))
        return blocks

    def delayed_system(self) -> DelayedSystem:
        tau = self.coeffs.shape[1] - 1 if self.steps else 0
        provider = schedule_provider(list(self.coeffs), periodic=False) if self.steps else (lambda k: [np.eye(self.n)])
        return DelayedSystem(provider, tau, self.y[0])

    def to_dict(self, bounds: StructuralBounds | None = None) -> dict:
        steps = []
        for k in range(self.steps):
            nz = np.argwhere(self.coeffs[k] != 0)
            steps.append({
                "k": k,
                "updaters": list(self.updaters[k]),
                "delays": {str(i): int(self.delays[k, i]) for i in self.updaters[k]},
                "coeffs": [[int(l), int(i), int(j), float(self.coeffs[k, l, i, j])] for l, i, j in nz],
                "B": self.B[k].tolist(),
            })
        return {
            "n": self.n,
            "reads": self.reads,
            "coeff_format": "sparse [lag, i, j, value]; unlisted entries are zero",
            "times": self.times.tolist(),
            "y": self.y.tolist(),
            "steps": steps,
            "max_delay": self.max_delay,
            "bounds": bounds.to_dict() if bounds else None,
        }

    def to_json(self, bounds: StructuralBounds | None = None) -> str:
        return json.dumps(self.to_dict(bounds))


def _broadcast_sequence(log: EventLog, traj: Trajectory) -> np.ndarray:
    K = len(log)
    if traj.times.shape[0] < K or not np.array_equal(traj.times[:K], log.times()):
        raise ValueError("trajectory breakpoints do not line up with the event log")
    y = np.empty((K, log.n))
    cur = traj.states[0].copy()
    for k, e in enumerate(log.events):
        idx = list(e.agents)
        cur[idx] = traj.states[k, idx]
        y[k] = cur
    return y


def extract_reduced(log: EventLog, traj: Trajectory, strict: bool = True) -> ReducedRun:
    """Rebuild ``y(k)`` and the coefficients ``A^l(k)`` from a distributed run.

    With ``strict`` any step where the coefficients applied to the simulated
    ``y`` miss the simulated ``y(k+1)`` by more than 1e-9 raises
    :class:`ReductionError`; otherwise the misses are recorded.
    """
    if log.mode != "distributed":
        raise ValueError("reduction needs a distributed-mode log")
    n, K = log.n, len(log)
    times = log.times()
    y = _broadcast_sequence(log, traj)
    steps = max(K - 1, 0)

    last = np.zeros(n, dtype=int)
    first = log.events[0]
    rows = np.zeros((n, n))
    rows[list(first.agents)] = first.rows
    rec_dt = np.zeros(n)
    rec_dt[list(first.agents)] = first.dts

    delays = np.full((steps, n), -1, dtype=int)
    for k in range(steps):
        e = log.events[k + 1]
        for i in e.agents:
            delays[k, i] = k - last[i]
        last[list(e.agents)] = k + 1
    lags = int(delays.max()) + 1 if steps else 1

    coeffs = np.zeros((steps, lags, n, n))
    dts = np.diff(times)
    last[:] = 0
    updaters = []
    errors: list[tuple[int, int, float]] = []
    own = log.reads == "own-update"
    for k in range(steps):
        e = log.events[k + 1]
        upd = set(e.agents)
        updaters.append(tuple(e.agents))
        for i in range(n):
            if i not in upd:
                coeffs[k, 0, i, i] = 1.0
                continue
            p = last[i]
            d = k - p
            row = rows[i]
            span = rec_dt[i]
            if own:
                coeffs[k, d, i, :] = -span * row
            else:
                seg = dts[p:k + 1]
                coeffs[k, d - np.arange(d + 1), i, :] = -seg[:, None] * row[None, :]
            coeffs[k, :, i, i] = 0.0
            coeffs[k, 0, i, i] = 1.0 - row[i] * span
        for r, i in enumerate(e.agents):
            rows[i] = e.rows[r]
            rec_dt[i] = e.dts[r]
            last[i] = k + 1

        pred = np.zeros(n)
        for l in range(min(lags, k + 1)):
            pred += coeffs[k, l] @ y[k - l]
        err = np.abs(pred - y[k + 1])
        worst = int(np.argmax(err))
        if err[worst] > REPLAY_TOL:
            if strict:
                raise ReductionError(worst, k, f"reconstructed y(k+1) off by {err[worst]:.3e}")
            errors.append((worst, k, float(err[worst])))

    B = np.array([build_B(c) for c in coeffs]) if steps else np.zeros((0, n, n))
    return ReducedRun(
        n=n, reads=log.reads, times=times, y=y, coeffs=coeffs, B=B,
        delays=delays, updaters=updaters, one_step_errors=errors,
    )


@dataclass
class VerificationReport:
    violations: list[str]
    max_replay_error: float
    max_delay: int
    max_update_gap: int
    max_updates_per_window: int

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return asdict(self) | {"ok": self.ok}


def _replay(reduced: ReducedRun) -> np.ndarray:
    n = reduced.n
    lags = reduced.coeffs.shape[1] if reduced.steps else 1
    out = np.empty((reduced.steps + 1, n))
    out[0] = reduced.y[0]
    hist = [reduced.y[0]] * lags
    for k in range(reduced.steps):
        nxt = np.zeros(n)
        for l in range(lags):
            nxt += reduced.coeffs[k, l] @ hist[l]
        hist = [nxt] + hist[:-1]
        out[k + 1] = nxt
    return out


def verify_reduction(
    reduced: ReducedRun,
    sim_states=None,
    bounds: StructuralBounds | None = None,
    deltas: Sequence[float] | None = None,
    max_violations: int = 50,
) -> VerificationReport:
    """Replay the recursion from ``y(0)`` alone and audit every structural claim.

    ``sim_states`` is the simulated ``y`` sequence (defaults to ``reduced.y``).
    Checks: replay error <= 1e-9, coefficient signs and row sums, ``a_ii^0 >=
    min delta_i``, ``d_ik <= tau``, gaps between an agent's updates <= ``h``
    network events and at most ``h' + 1`` updates per agent in any time window
    of length ``delta_max``.
    """
    sim = reduced.y if sim_states is None else np.asarray(sim_states, dtype=float)
    v: list[str] = []

    def flag(msg: str):
        if len(v) < max_violations:
            v.append(msg)

    replay = _replay(reduced)
    errs = np.abs(replay - sim[: replay.shape[0]]).max(axis=1) if replay.size else np.zeros(1)
    for k in np.flatnonzero(errs > REPLAY_TOL):
        flag(f"step {k}: replayed y differs from simulation by {errs[k]:.3e}")

    if reduced.steps:
        if np.any(reduced.coeffs < -ROW_TOL):
            k, l, i, j = np.argwhere(reduced.coeffs < -ROW_TOL)[0]
            flag(f"step {k}: negative coefficient a^{l}[{i},{j}]")
        sums = reduced.coeffs.sum(axis=(1, 3))
        for k, i in np.argwhere(np.abs(sums - 1.0) > ROW_TOL):
            flag(f"step {k}: row {i} sums to {sums[k, i]!r}")
        if deltas is not None:
            dmin = float(np.min(deltas))
            diag0 = np.diagonal(reduced.coeffs[:, 0], axis1=1, axis2=2)
            for k, i in np.argwhere(diag0 < dmin - ROW_TOL):
                flag(f"step {k}: a_ii^0 of agent {i} is {diag0[k, i]!r} < {dmin}")

    max_gap = 0
    max_count = 0
    if reduced.times.size:
        per_agent: list[list[int]] = [[0] for _ in range(reduced.n)]
        for k, upd in enumerate(reduced.updaters):
            for i in upd:
                per_agent[i].append(k + 1)
        for idx in per_agent:
            if len(idx) > 1:
                max_gap = max(max_gap, int(np.max(np.diff(idx))))
        if bounds is not None:
            for i, idx in enumerate(per_agent):
                if len(idx) < 2:
                    continue
                t = reduced.times[idx]
                hi = np.searchsorted(t, t + bounds.delta_max * (1 + 1e-12), side="right")
                max_count = max(max_count, int(np.max(hi - np.arange(t.size))))
    if bounds is not None:
        if reduced.max_delay > bounds.tau:
            flag(f"realized delay {reduced.max_delay} exceeds tau = {bounds.tau}")
        if max_gap > bounds.h:
            flag(f"gap of {max_gap} network events between updates exceeds h = {bounds.h}")
        if max_count > bounds.h_prime + 1:
            flag(f"{max_count} updates within delta_max exceed h' + 1 = {bounds.h_prime + 1}")
    return VerificationReport(
        violations=v,
        max_replay_error=float(errs.max()) if errs.size else 0.0,
        max_delay=reduced.max_delay,
        max_update_gap=max_gap,
        max_updates_per_window=max_count,
    )


@dataclass
class WindowCheck:
    domination: bool
    spanning_tree: bool
    windows: int
    delta: float

    def __bool__(self) -> bool:
        return self.domination and self.spanning_tree


def window_B_domination_check(
    reduced: ReducedRun, L, bounds: StructuralBounds, delta: float | None = None, tol: float = 1e-12
) -> WindowCheck:
    """Every window of ``h`` consecutive ``B(m)`` dominates ``delta_min`` times the edge weights of ``L``.

    The spanning-tree part asks that each window sum has a ``delta``-spanning
    tree; ``delta`` defaults to ``delta_min`` times the smallest edge weight.
    It fails outright when the graph of ``L`` itself has none.
    """
    W = weights_from_laplacian(L)
    if delta is None:
        pos = W[W > 0]
        delta = bounds.delta_min * float(pos.min()) if pos.size else bounds.delta_min
    base_tree = has_delta_spanning_tree(W, np.finfo(float).tiny)[0]
    h = bounds.h
    steps = reduced.steps
    if reduced.n == 1:
        return WindowCheck(True, True, 0, delta)
    if steps < h:
        return WindowCheck(True, base_tree, 0, delta)
    csum = np.concatenate([np.zeros((1, reduced.n, reduced.n)), np.cumsum(reduced.B, axis=0)])
    target = bounds.delta_min * W
    dom = True
    tree = base_tree
    windows = steps - h + 1
    for k in range(windows):
        S = csum[k + h] - csum[k]
        off = S.copy()
        np.fill_diagonal(off, 0.0)
        if np.any(off < target - tol):
            dom = False
        if tree and not has_delta_spanning_tree(off, delta * (1 - 1e-12))[0]:
            tree = False
        if not dom and not tree:
            break
    return WindowCheck(dom, tree, windows, delta)

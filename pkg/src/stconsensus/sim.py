"""Event-driven simulation of structure-based self-triggered consensus.

Control inputs are piecewise constant, so every state is piecewise linear in
time and is advanced exactly as ``x + slope * dt``; there is no ODE solver.

Centralized mode: one network clock.  At ``t_k`` the whole network samples
``dt_k`` from ``[delta / l_max, (1 - delta) / l_max]`` and holds
``u = -L^k x(t_k)`` until ``t_{k+1} = t_k + dt_k``.

Distributed mode: agent i schedules its own next update
``dt in [delta_i / l_ii, (1 - delta_i) / l_ii]`` from its own row only.  An
agent with ``l_ii == 0`` (a leader) is never scheduled.  Each agent
broadcasts its state when it updates; how it reads neighbours is set by
``reads``:

* ``"latest"`` (default): the input of agent i at time t uses every
  neighbour's latest broadcast, so slopes are refreshed at every network
  event.  The row ``l_i.`` itself only changes at i's own updates.
* ``"own-update"``: agent i samples neighbour broadcasts only at its own
  update instants and holds that input until its next update.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .streams import agent_streams, stream
from .topology import FixedTopology, RowFamilies, ScaledTopology

READS = ("latest", "own-update")


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class DtRule:
    """``uniform`` draws from the admissible interval; ``fixed`` takes ``lo + f (hi - lo)``."""

    kind: str = "uniform"
    fraction: float = 0.5

    def __post_init__(self):
        if self.kind not in ("uniform", "fixed"):
            raise ValueError(f"unknown dt rule {self.kind!r}")
        if self.kind == "fixed" and not 0.0 <= self.fraction <= 1.0:
            raise ValueError("fixed fraction must lie in [0, 1]")

    def draw(self, lo: float, hi: float, rng: np.random.Generator) -> float:
        u = rng.random() if self.kind == "uniform" else self.fraction
        return lo + u * (hi - lo)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "fraction": self.fraction} if self.kind == "fixed" else {"kind": self.kind}


def check_delta(delta, n: int | None = None) -> np.ndarray:
    d = np.atleast_1d(np.asarray(delta, dtype=float))
    if n is not None and d.size == 1:
        d = np.full(n, d[0])
    if n is not None and d.shape != (n,):
        raise ValueError(f"need one delta per agent ({n}), got {d.size}")
    if np.any(d <= 0) or np.any(d >= 0.5):
        raise ValueError(f"every delta must lie strictly inside (0, 1/2), got {d.tolist()}")
    return d


@dataclass(frozen=True)
class SchedulerParams:
    mode: str
    delta: float | tuple[float, ...]
    dt_rule: DtRule = DtRule()
    reads: str = "latest"

    def __post_init__(self):
        if self.mode not in ("centralized", "distributed"):
            raise ValueError(f"unknown scheduler mode {self.mode!r}")
        if self.reads not in READS:
            raise ValueError(f"reads must be one of {READS}")
        if isinstance(self.delta, (list, np.ndarray)):
            object.__setattr__(self, "delta", tuple(float(v) for v in self.delta))
        check_delta(self.delta)

    def deltas(self, n: int) -> np.ndarray:
        return check_delta(self.delta, n)


@dataclass(frozen=True, eq=False)
class UpdateEvent:
    """One network update: the merged set of agents updating at ``time``.

    ``rows[r]`` is the Laplacian row in force for ``agents[r]`` after the
    update and ``dts[r]`` the interval it drew (``inf`` for a leader).
    """

    time: float
    agents: tuple[int, ...]
    rows: np.ndarray
    dts: tuple[float, ...]

    def __eq__(self, other):
        if not isinstance(other, UpdateEvent):
            return NotImplemented
        return (
            self.time == other.time
            and self.agents == other.agents
            and self.dts == other.dts
            and np.array_equal(self.rows, other.rows)
        )

    def to_dict(self) -> dict:
        return {
            "time": self.time,
            "agents": list(self.agents),
            "rows": self.rows.tolist(),
            "dts": [None if math.isinf(d) else d for d in self.dts],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "UpdateEvent":
        return cls(
            time=float(d["time"]),
            agents=tuple(int(a) for a in d["agents"]),
            rows=np.asarray(d["rows"], dtype=float),
            dts=tuple(math.inf if v is None else float(v) for v in d["dts"]),
        )


@dataclass
class EventLog:
    n: int
    mode: str
    reads: str
    horizon: float
    events: list[UpdateEvent] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def __getitem__(self, k):
        return self.events[k]

    def times(self) -> np.ndarray:
        return np.array([e.time for e in self.events])

    def same_events(self, other: "EventLog") -> bool:
        return len(self) == len(other) and all(a == b for a, b in zip(self.events, other.events))

    def header(self) -> dict:
        return {"n": self.n, "mode": self.mode, "reads": self.reads, "horizon": self.horizon}

    def to_jsonl(self) -> str:
        lines = [json.dumps({"header": self.header()})]
        lines += [json.dumps(e.to_dict()) for e in self.events]
        return "\n".join(lines) + "\n"

    def write_jsonl(self, path) -> None:
        Path(path).write_text(self.to_jsonl())

    @classmethod
    def from_jsonl(cls, text: str) -> "EventLog":
        lines = [json.loads(l) for l in text.splitlines() if l.strip()]
        h = lines[0]["header"]
        return cls(
            n=h["n"], mode=h["mode"], reads=h["reads"], horizon=h["horizon"],
            events=[UpdateEvent.from_dict(d) for d in lines[1:]],
        )

    @classmethod
    def read_jsonl(cls, path) -> "EventLog":
        return cls.from_jsonl(Path(path).read_text())


@dataclass
class Trajectory:
    """Shared breakpoints for all agents.

    ``states[k]`` is x at ``times[k]`` and ``slopes[k]`` the slope on
    ``[times[k], times[k+1])``.  The last breakpoint is the horizon.
    """

    times: np.ndarray
    states: np.ndarray
    slopes: np.ndarray
    horizon: float

    @property
    def n(self) -> int:
        return self.states.shape[1]

    def segments(self, i: int) -> list[tuple[float, float, float]]:
        return list(zip(self.times.tolist(), self.states[:, i].tolist(), self.slopes[:, i].tolist()))

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def sample(self, grid: Iterable[float]) -> np.ndarray:
        return np.array([state_at(self, t) for t in grid])

    def csv_times(self, grid_points: int = 200) -> np.ndarray:
        grid = np.linspace(0.0, self.horizon, grid_points) if grid_points > 0 else np.empty(0)
        return np.unique(np.concatenate([self.times, grid]))

    def to_csv(self, grid_points: int = 200) -> str:
        ts = self.csv_times(grid_points)
        head = ",".join(["time"] + [f"agent_{i}" for i in range(self.n)])
        lines = [head]
        for t in ts:
            x = state_at(self, float(t))
            lines.append(",".join([repr(float(t))] + [repr(float(v)) for v in x]))
        return "\n".join(lines) + "\n"

    def write_csv(self, path, grid_points: int = 200) -> None:
        Path(path).write_text(self.to_csv(grid_points))


def disagreement(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(x.max() - x.min())


def state_at(traj: Trajectory, t: float) -> np.ndarray:
    """Exact at breakpoints, linear in between."""
    if not 0.0 <= t <= traj.horizon:
        raise ValueError(f"t = {t} outside [0, {traj.horizon}]")
    k = int(np.searchsorted(traj.times, t, side="right")) - 1
    dt = t - traj.times[k]
    if dt == 0.0:
        return traj.states[k].copy()
    return traj.states[k] + traj.slopes[k] * dt


class _Recorder:
    def __init__(self):
        self.times: list[float] = []
        self.states: list[np.ndarray] = []
        self.slopes: list[np.ndarray] = []

    def add(self, t: float, x: np.ndarray, s: np.ndarray) -> None:
        self.times.append(t)
        self.states.append(x.copy())
        self.slopes.append(s.copy())

    def finish(self, horizon: float, x: np.ndarray, s: np.ndarray, t_last: float) -> Trajectory:
        if horizon > t_last:
            self.add(horizon, x + s * (horizon - t_last), s)
        return Trajectory(
            times=np.array(self.times),
            states=np.array(self.states),
            slopes=np.array(self.slopes),
            horizon=float(horizon),
        )


def _check_common(x0, horizon: float) -> np.ndarray:
    x = np.array(x0, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("x0 must be a nonempty vector")
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    return x


def run_centralized_switching(provider, params: SchedulerParams, x0, horizon: float, seed: int):
    """Centralized self-triggered consensus, drawing ``L^k`` from ``provider`` at every event."""
    x = _check_common(x0, horizon)
    n = x.size
    delta = float(params.deltas(1)[0])
    rng_dt = stream(seed, "dt")
    laps = provider.laplacians(stream(seed, "topology"))
    l_bounds = getattr(provider, "l_bounds", None)
    log = EventLog(n=n, mode="centralized", reads="latest", horizon=float(horizon))
    rec = _Recorder()
    t = 0.0
    while True:
        L = next(laps)
        lmax = float(np.max(np.diag(L)))
        if lmax <= 0.0:
            raise SimulationError("l_max = 0: a fully decoupled network cannot run centralized")
        if l_bounds is not None and not l_bounds[0] <= lmax <= l_bounds[1]:
            raise SimulationError(f"event {len(log)}: l_max = {lmax} outside {l_bounds}")
        dt = params.dt_rule.draw(delta / lmax, (1.0 - delta) / lmax, rng_dt)
        s = -(L @ x)
        rec.add(t, x, s)
        log.events.append(UpdateEvent(t, tuple(range(n)), L.copy(), (dt,) * n))
        t_next = t + dt
        if t_next >= horizon:
            break
        x = x + s * dt
        t = t_next
    return rec.finish(horizon, x, s, t), log


def run_centralized(L, params: SchedulerParams, x0, horizon: float, seed: int):
    return run_centralized_switching(FixedTopology(L), params, x0, horizon, seed)


def _run_distributed(provider, params: SchedulerParams, x0, horizon: float, seed: int):
    x = _check_common(x0, horizon)
    n = x.size
    if provider.n != n:
        raise ValueError(f"topology has {provider.n} agents, x0 has {n}")
    deltas = params.deltas(n)
    rng_dt = agent_streams(seed, "dt", n)
    rng_top = agent_streams(seed, "topology", n)
    latest = params.reads == "latest"

    rows = np.zeros((n, n))
    y = x.copy()
    heap: list[tuple[float, int]] = []

    def update(i: int, t: float) -> float:
        r = np.asarray(provider.row(i, rng_top[i]), dtype=float)
        rows[i] = r
        lii = r[i]
        if lii <= 0.0:
            return math.inf
        dt = params.dt_rule.draw(deltas[i] / lii, (1.0 - deltas[i]) / lii, rng_dt[i])
        heapq.heappush(heap, (t + dt, i))
        return dt

    log = EventLog(n=n, mode="distributed", reads=params.reads, horizon=float(horizon))
    rec = _Recorder()
    t = 0.0
    agents = tuple(range(n))
    dts = tuple(update(i, t) for i in agents)
    s = -(rows @ y)
    rec.add(t, x, s)
    log.events.append(UpdateEvent(t, agents, rows.copy(), dts))

    while heap and heap[0][0] < horizon:
        t_new = heap[0][0]
        due = []
        while heap and heap[0][0] == t_new:
            due.append(heapq.heappop(heap)[1])
        due.sort()
        x = x + s * (t_new - t)
        t = t_new
        y[due] = x[due]
        dts = tuple(update(i, t) for i in due)
        if latest:
            s = -(rows @ y)
        else:
            s[due] = -(rows[due] @ y)
        rec.add(t, x, s)
        log.events.append(UpdateEvent(t, tuple(due), rows[due].copy(), dts))
    return rec.finish(horizon, x, s, t), log


def run_distributed(L, params: SchedulerParams, x0, horizon: float, seed: int):
    """Distributed self-triggered consensus on a fixed Laplacian."""
    return _run_distributed(FixedTopology(L), params, x0, horizon, seed)


def run_distributed_scaled(provider: ScaledTopology, params: SchedulerParams, x0, horizon: float, seed: int):
    """Each agent rescales its row by a fresh ``eps`` at every update."""
    if not isinstance(provider, ScaledTopology):
        raise TypeError("run_distributed_scaled needs a ScaledTopology")
    return _run_distributed(provider, params, x0, horizon, seed)


def run_distributed_iid(provider: RowFamilies, params: SchedulerParams, x0, horizon: float, seed: int):
    """Each agent redraws its row from its family at every update."""
    if not isinstance(provider, RowFamilies):
        raise TypeError("run_distributed_iid needs RowFamilies")
    return _run_distributed(provider, params, x0, horizon, seed)


def centralized_step_matrices(log: EventLog) -> list[np.ndarray]:
    """``A_k = I - dt_k L^k`` for every recorded centralized event."""
    if log.mode != "centralized":
        raise ValueError("not a centralized log")
    eye = np.eye(log.n)
    return [eye - e.dts[0] * e.rows for e in log.events]


def update_times(log: EventLog) -> list[list[float]]:
    """Per agent, the times it updated (including t = 0)."""
    out: list[list[float]] = [[] for _ in range(log.n)]
    for e in log.events:
        for i in e.agents:
            out[i].append(e.time)
    return out


def sampled_dt_violations(log: EventLog, deltas: Sequence[float], tol: float = 1e-12) -> list[str]:
    """Drawn intervals outside their admissible range.

    Distributed: ``[delta_i / l_ii, (1 - delta_i) / l_ii]`` of the row just drawn.
    Centralized: ``[delta / l_max^k, (1 - delta) / l_max^k]``.
    """
    bad = []
    for k, e in enumerate(log.events):
        if log.mode == "centralized":
            lmax = float(np.max(np.diag(e.rows)))
            lo, hi = deltas[0] / lmax, (1 - deltas[0]) / lmax
            if not lo - tol <= e.dts[0] <= hi + tol:
                bad.append(f"event {k}: dt {e.dts[0]} outside [{lo}, {hi}]")
            continue
        for r, i in enumerate(e.agents):
            lii = e.rows[r, i]
            dt = e.dts[r]
            if lii <= 0:
                if not math.isinf(dt):
                    bad.append(f"event {k}: leader {i} was scheduled")
                continue
            lo, hi = deltas[i] / lii, (1 - deltas[i]) / lii
            if not lo - tol <= dt <= hi + tol:
                bad.append(f"event {k}: agent {i} dt {dt} outside [{lo}, {hi}]")
    return bad

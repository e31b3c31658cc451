"""Seeded Monte Carlo runs, matrix analysis reports and mean-topology estimation."""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import sim
from .config import ScenarioConfig, build_provider
from .graph import (
    check_nonnegative,
    has_delta_spanning_tree,
    max_spanning_tree_delta,
    weights_from_laplacian,
)
from .reduction import compute_bounds, extract_reduced, verify_reduction
from .stochastic import (
    delta_coefficient,
    is_scrambling,
    is_sia_sufficient,
    is_stochastic,
    lambda_coefficient,
    sia_power_index,
)
from .streams import stream
from .topology import LaplacianFamily, RowFamilies

log = logging.getLogger(__name__)

SUMMARY_FIELDS = (
    "seed", "converged", "time_to_tolerance", "event_count", "final_disagreement", "reduction_violations",
)


@dataclass
class RunSummary:
    seed: int
    converged: bool
    time_to_tolerance: float | None
    event_count: int
    final_disagreement: float
    reduction_violations: int
    violations: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def initial_state(cfg: ScenarioConfig, n: int, seed: int) -> np.ndarray:
    if isinstance(cfg.x0, dict):
        lo, hi = cfg.x0["uniform"]
        return stream(seed, "x0").uniform(lo, hi, size=n)
    return np.asarray(cfg.x0, dtype=float)


def time_to_tolerance(traj: sim.Trajectory, tol: float) -> float | None:
    """First breakpoint after which the disagreement stays below ``tol``.

    On each linear segment max - min is convex, so it is bounded by its
    endpoint values and breakpoints are enough to certify the tail.
    """
    d = traj.states.max(axis=1) - traj.states.min(axis=1)
    above = np.flatnonzero(d >= tol)
    if above.size == 0:
        return 0.0
    k = above[-1] + 1
    return float(traj.times[k]) if k < traj.times.size else None


def simulate(cfg: ScenarioConfig, seed: int):
    """One run of the configured scenario: ``(trajectory, event_log, x0)``."""
    prov = build_provider(cfg)
    x0 = initial_state(cfg, prov.n, seed)
    params = cfg.scheduler()
    if cfg.mode in ("centralized", "centralized-switching"):
        traj, elog = sim.run_centralized_switching(prov, params, x0, cfg.horizon, seed)
    else:
        traj, elog = sim._run_distributed(prov, params, x0, cfg.horizon, seed)
    return traj, elog, x0


def _centralized_violations(elog: sim.EventLog, delta: float) -> list[str]:
    bad = sim.sampled_dt_violations(elog, [delta])
    for k, A in enumerate(sim.centralized_step_matrices(elog)):
        if np.any(A < -1e-12) or np.any(np.abs(A.sum(axis=1) - 1) > 1e-12):
            bad.append(f"event {k}: A_k is not stochastic")
        if np.any(np.diag(A) < delta - 1e-12):
            bad.append(f"event {k}: A_k diagonal below delta")
    return bad


def run_one(cfg: ScenarioConfig, seed: int, out_dir: Path | None = None) -> RunSummary:
    traj, elog, _ = simulate(cfg, seed)
    final = sim.disagreement(traj.final_state)
    reduced = None
    bounds = None
    if cfg.distributed:
        prov = build_provider(cfg)
        deltas = cfg.scheduler().deltas(prov.n)
        bounds = compute_bounds(deltas, prov.diag_bounds(), prov.n)
        reduced = extract_reduced(elog, traj, strict=False)
        report = verify_reduction(reduced, bounds=bounds, deltas=deltas)
        problems = [f"step {k}: one-step mismatch {e:.3e} at agent {i}" for i, k, e in reduced.one_step_errors]
        problems += report.violations + sim.sampled_dt_violations(elog, deltas)
    else:
        problems = _centralized_violations(elog, float(cfg.scheduler().deltas(1)[0]))
    summary = RunSummary(
        seed=seed,
        converged=final < cfg.tolerance,
        time_to_tolerance=time_to_tolerance(traj, cfg.tolerance),
        event_count=len(elog) - 1,
        final_disagreement=final,
        reduction_violations=len(problems),
        violations=problems,
    )
    if out_dir is not None:
        d = Path(out_dir) / f"seed_{seed}"
        d.mkdir(parents=True, exist_ok=True)
        traj.write_csv(d / "trajectory.csv", cfg.grid_points)
        elog.write_jsonl(d / "events.jsonl")
        if reduced is not None:
            (d / "reduced.json").write_text(reduced.to_json(bounds))
        (d / "summary.json").write_text(json.dumps(summary.to_dict(), indent=2) + "\n")
    return summary


def _job(args) -> RunSummary:
    cfg, seed, out_dir = args
    return run_one(cfg, seed, out_dir)


def summaries_csv(summaries: Sequence[RunSummary]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_FIELDS)
    for s in summaries:
        row = s.to_dict()
        w.writerow(["" if row[f] is None else repr(row[f]) if isinstance(row[f], float) else row[f] for f in SUMMARY_FIELDS])
    return buf.getvalue()


def run_scenario(cfg: ScenarioConfig, out_dir=None, jobs: int = 1) -> list[RunSummary]:
    """One independent run per seed; artifacts go under ``out_dir/<name>/``."""
    build_provider(cfg)
    scen_dir = Path(out_dir) / cfg.name if out_dir is not None else None
    if scen_dir is not None:
        scen_dir.mkdir(parents=True, exist_ok=True)
        (scen_dir / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")
    tasks = [(cfg, s, scen_dir) for s in cfg.seeds]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            summaries = list(pool.map(_job, tasks))
    else:
        summaries = [_job(t) for t in tasks]
    if scen_dir is not None:
        (scen_dir / "summary.csv").write_text(summaries_csv(summaries))
    n_ok = sum(s.converged for s in summaries)
    log.info("%s: %d/%d runs converged", cfg.name, n_ok, len(summaries))
    return summaries


def failures(summaries: Sequence[RunSummary]) -> list[dict]:
    out = []
    for s in summaries:
        if not s.converged:
            out.append({"seed": s.seed, "reason": "not converged", "final_disagreement": s.final_disagreement})
        if s.reduction_violations:
            out.append({"seed": s.seed, "reason": "verification", "violations": s.violations[:10]})
    return out


def _key(d: float) -> str:
    return repr(float(d))


@dataclass
class AnalysisReport:
    matrix: list
    is_stochastic: bool
    delta_coeff: float | None
    lambda_coeff: float | None
    delta_grid: list[float]
    scrambling_delta: dict[str, bool]
    sia_sufficient: dict[str, bool]
    sia_oracle: dict
    spanning_tree_delta: dict[str, bool]
    root: dict[str, int | None]
    max_tree_delta: float

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def analyze_matrix(a, delta_grid: Sequence[float], max_power: int = 10_000, tol: float = 1e-9) -> AnalysisReport:
    m = check_nonnegative(a)
    stoch = is_stochastic(m)
    grid = [float(d) for d in delta_grid]
    tree = {_key(d): has_delta_spanning_tree(m, d) for d in grid}
    oracle: dict = {"procedure": "power-iteration", "max_power": max_power, "tol": tol, "sia": None, "power": None}
    if stoch:
        k = sia_power_index(m, max_power, tol)
        oracle.update(sia=k is not None, power=k)
    return AnalysisReport(
        matrix=m.tolist(),
        is_stochastic=stoch,
        delta_coeff=delta_coefficient(m) if stoch else None,
        lambda_coeff=lambda_coefficient(m) if stoch else None,
        delta_grid=grid,
        scrambling_delta={_key(d): is_scrambling(m, d) for d in grid},
        sia_sufficient={_key(d): stoch and is_sia_sufficient(m, d) for d in grid},
        sia_oracle=oracle,
        spanning_tree_delta={k: v[0] for k, v in tree.items()},
        root={k: v[1] for k, v in tree.items()},
        max_tree_delta=max_spanning_tree_delta(m),
    )


def load_matrix(path) -> np.ndarray:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not valid JSON ({exc})") from exc
    try:
        m = np.asarray(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"{path}: not a numeric matrix") from exc
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{path}: expected a square matrix, got shape {m.shape}")
    return m


def analyze_matrix_file(path, delta_grid: Sequence[float], **kw) -> AnalysisReport:
    return analyze_matrix(load_matrix(path), delta_grid, **kw)


@dataclass
class MeanTopology:
    mean: np.ndarray
    samples: int
    delta: float
    has_tree: bool
    root: int | None
    max_tree_delta: float

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "samples": self.samples,
            "delta": self.delta,
            "has_tree": self.has_tree,
            "root": self.root,
            "max_tree_delta": self.max_tree_delta,
        }


def estimate_mean_topology(source, samples: int, seed: int = 0, delta: float | None = None) -> MeanTopology:
    """Empirical mean Laplacian and a delta-spanning-tree check of its edge weights.

    ``source`` is a :class:`RowFamilies` or :class:`LaplacianFamily` sampler,
    or a distributed :class:`~stconsensus.sim.EventLog` whose recorded rows
    are averaged (at most ``samples`` per agent).  ``delta=None`` checks for
    any positive edge.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if isinstance(source, RowFamilies):
        mean = np.array([
            source.sample_rows(i, samples, stream(seed, "estimate", i)).mean(axis=0) for i in range(source.n)
        ])
        used = samples
    elif isinstance(source, LaplacianFamily):
        it = source.laplacians(stream(seed, "estimate"))
        mean = np.mean([next(it) for _ in range(samples)], axis=0)
        used = samples
    elif isinstance(source, sim.EventLog):
        rows: list[list[np.ndarray]] = [[] for _ in range(source.n)]
        for e in source.events:
            for r, i in enumerate(e.agents):
                if len(rows[i]) < samples:
                    rows[i].append(e.rows[r])
        mean = np.array([np.mean(r, axis=0) for r in rows])
        used = min(len(r) for r in rows)
    else:
        raise TypeError(f"cannot sample topologies from {type(source).__name__}")
    W = weights_from_laplacian(mean)
    thr = np.finfo(float).tiny if delta is None else delta
    ok, root = has_delta_spanning_tree(W, thr)
    return MeanTopology(mean, used, 0.0 if delta is None else delta, ok, root, max_spanning_tree_delta(W))

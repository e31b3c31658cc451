"""Scenario configuration: one JSON document per scenario.

Example (the built-in ``paper-sec4``)::

    {
      "name": "paper-sec4",
      "mode": "distributed-iid",
      "topology": {"row_families": [[[1, -1, 0, 0], [1, 0, 0, -1]], ...]},
      "delta": 0.1,
      "dt_rule": {"kind": "uniform"},
      "x0": {"uniform": [0, 10]},
      "horizon": 50,
      "seeds": {"start": 0, "count": 100},
      "tolerance": 1e-3
    }

Topology keys by mode:

* ``centralized``, ``distributed``: ``laplacian`` or ``weights``
* ``distributed-scaled``: the same plus ``epsilon: [eps_min, eps_max]``
* ``centralized-switching``: ``laplacians`` (or ``weights_family``), optional
  ``probabilities``, ``process: "iid" | "markov"``, ``transition``,
  ``initial``, ``l_bounds``
* ``distributed-iid``: ``row_families``, optional ``probabilities``, ``bounds``
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from .graph import laplacian_from_weights
from .sim import DtRule, READS, SchedulerParams, check_delta
from .topology import FixedTopology, LaplacianFamily, MarkovLaplacians, RowFamilies, ScaledTopology

MODES = ("centralized", "centralized-switching", "distributed", "distributed-scaled", "distributed-iid")
BUILTIN = {"paper-sec4": "paper-sec4.json"}


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("invalid scenario config:\n  " + "\n  ".join(errors))
        self.errors = errors


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    mode: str
    topology: dict
    delta: Any
    dt_rule: DtRule = DtRule()
    x0: Any = field(default_factory=lambda: {"uniform": [0.0, 10.0]})
    horizon: float = 50.0
    seeds: tuple[int, ...] = tuple(range(100))
    tolerance: float = 1e-3
    reads: str = "latest"
    grid_points: int = 200

    @property
    def distributed(self) -> bool:
        return self.mode.startswith("distributed")

    @property
    def n(self) -> int:
        return build_provider(self).n

    def scheduler(self) -> SchedulerParams:
        return SchedulerParams(
            mode="distributed" if self.distributed else "centralized",
            delta=self.delta,
            dt_rule=self.dt_rule,
            reads=self.reads,
        )

    def with_seeds(self, seeds) -> "ScenarioConfig":
        return replace(self, seeds=tuple(int(s) for s in seeds))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "mode": self.mode,
            "topology": self.topology,
            "delta": list(self.delta) if isinstance(self.delta, (list, tuple)) else self.delta,
            "dt_rule": self.dt_rule.to_dict(),
            "x0": self.x0,
            "horizon": self.horizon,
            "seeds": list(self.seeds),
            "tolerance": self.tolerance,
            "reads": self.reads,
            "grid_points": self.grid_points,
        }


def _laplacian(topo: dict, errors: list[str], where: str = "topology"):
    try:
        if "laplacian" in topo:
            return FixedTopology(topo["laplacian"]).L
        if "weights" in topo:
            return laplacian_from_weights(topo["weights"])
    except ValueError as exc:
        errors.append(f"{where}: {exc}")
        return None
    errors.append(f"{where}: needs 'laplacian' or 'weights'")
    return None


def build_provider(cfg: ScenarioConfig):
    """Topology provider for the configured mode; raises ConfigError on bad input."""
    errors: list[str] = []
    prov = _provider(cfg.mode, cfg.topology, errors)
    if errors:
        raise ConfigError(errors)
    return prov


def _provider(mode: str, topo: dict, errors: list[str]):
    try:
        if mode in ("centralized", "distributed"):
            L = _laplacian(topo, errors)
            return FixedTopology(L) if L is not None else None
        if mode == "distributed-scaled":
            L = _laplacian(topo, errors)
            eps = topo.get("epsilon")
            if not (isinstance(eps, (list, tuple)) and len(eps) == 2):
                errors.append("topology.epsilon: needs [eps_min, eps_max]")
                return None
            return ScaledTopology(L, *eps) if L is not None else None
        if mode == "centralized-switching":
            if "laplacians" in topo:
                fam = topo["laplacians"]
            elif "weights_family" in topo:
                fam = [laplacian_from_weights(w) for w in topo["weights_family"]]
            else:
                errors.append("topology: needs 'laplacians' or 'weights_family'")
                return None
            process = topo.get("process", "iid")
            if process == "iid":
                return LaplacianFamily(fam, topo.get("probabilities"), topo.get("l_bounds"))
            if process == "markov":
                if "transition" not in topo:
                    errors.append("topology.transition: required for a markov process")
                    return None
                return MarkovLaplacians(fam, topo["transition"], topo.get("initial", 0), topo.get("l_bounds"))
            errors.append(f"topology.process: unknown process {process!r}")
            return None
        if mode == "distributed-iid":
            if "row_families" not in topo:
                errors.append("topology.row_families: required")
                return None
            return RowFamilies(topo["row_families"], topo.get("probabilities"), topo.get("bounds"))
    except (ValueError, TypeError) as exc:
        errors.append(f"topology: {exc}")
        return None
    errors.append(f"mode: unknown mode {mode!r}")
    return None


def _seeds(raw, errors: list[str]) -> tuple[int, ...]:
    if isinstance(raw, dict):
        try:
            start, count = int(raw.get("start", 0)), int(raw["count"])
        except (KeyError, TypeError, ValueError):
            errors.append("seeds: expected {'start': int, 'count': int}")
            return ()
        return tuple(range(start, start + count))
    if isinstance(raw, list) and all(isinstance(s, int) for s in raw):
        return tuple(raw)
    errors.append("seeds: expected a list of ints or {'start', 'count'}")
    return ()


def parse_seeds(text: str) -> tuple[int, ...]:
    """CLI seed syntax: ``7``, ``0-99`` (inclusive) or ``1,5,9``."""
    text = text.strip()
    if "," in text:
        return tuple(int(s) for s in text.split(","))
    if "-" in text[1:]:
        a, b = text.split("-", 1)
        return tuple(range(int(a), int(b) + 1))
    return (int(text),)


def config_from_dict(d: dict) -> ScenarioConfig:
    """Validate every field before building; all problems are reported together."""
    errors: list[str] = []
    if not isinstance(d, dict):
        raise ConfigError(["config: expected a JSON object"])
    mode = d.get("mode")
    if mode not in MODES:
        errors.append(f"mode: expected one of {MODES}, got {mode!r}")
    topo = d.get("topology")
    prov = None
    if not isinstance(topo, dict):
        errors.append("topology: expected an object")
    elif mode in MODES:
        prov = _provider(mode, topo, errors)

    delta = d.get("delta")
    try:
        check_delta(delta, prov.n if prov is not None and np.ndim(delta) else None)
        if mode in ("centralized", "centralized-switching") and np.ndim(delta):
            errors.append("delta: centralized modes take a single delta")
    except (ValueError, TypeError) as exc:
        errors.append(f"delta: {exc}")

    try:
        rule = d.get("dt_rule", {"kind": "uniform"})
        dt_rule = DtRule(rule.get("kind", "uniform"), float(rule.get("fraction", 0.5)))
    except (ValueError, TypeError, AttributeError) as exc:
        errors.append(f"dt_rule: {exc}")
        dt_rule = DtRule()

    x0 = d.get("x0", {"uniform": [0.0, 10.0]})
    if isinstance(x0, dict):
        u = x0.get("uniform")
        if not (isinstance(u, (list, tuple)) and len(u) == 2 and u[0] <= u[1]):
            errors.append("x0.uniform: expected [low, high] with low <= high")
    elif isinstance(x0, list):
        if prov is not None and len(x0) != prov.n:
            errors.append(f"x0: expected {prov.n} values, got {len(x0)}")
    else:
        errors.append("x0: expected a vector or {'uniform': [low, high]}")

    horizon = d.get("horizon", 50.0)
    if not isinstance(horizon, (int, float)) or horizon < 0:
        errors.append("horizon: expected a number >= 0")
    tol = d.get("tolerance", 1e-3)
    if not isinstance(tol, (int, float)) or tol <= 0:
        errors.append("tolerance: expected a number > 0")
    reads = d.get("reads", "latest")
    if reads not in READS:
        errors.append(f"reads: expected one of {READS}")
    grid = d.get("grid_points", 200)
    if not isinstance(grid, int) or grid < 0:
        errors.append("grid_points: expected an int >= 0")
    seeds = _seeds(d.get("seeds", {"start": 0, "count": 100}), errors)

    if errors:
        raise ConfigError(errors)
    return ScenarioConfig(
        name=str(d.get("name", "scenario")),
        mode=mode,
        topology=topo,
        delta=tuple(delta) if isinstance(delta, list) else delta,
        dt_rule=dt_rule,
        x0=x0,
        horizon=float(horizon),
        seeds=seeds,
        tolerance=float(tol),
        reads=reads,
        grid_points=grid,
    )


def load_config(path) -> ScenarioConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config: not valid JSON ({exc})"]) from exc
    return config_from_dict(raw)


def builtin_config(name: str) -> ScenarioConfig:
    if name not in BUILTIN:
        raise ConfigError([f"scenario: unknown built-in {name!r}; known: {sorted(BUILTIN)}"])
    text = resources.files("stconsensus").joinpath("scenarios", BUILTIN[name]).read_text()
    return config_from_dict(json.loads(text))

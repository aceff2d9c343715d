"""Topology and traffic generation for the evaluation scenarios.

Ships the three traffic models used in the evaluations (TSN-like classes,
inter-datacenter classes, and fully synthetic flows), the parking-lot
topology generator, and uniform deadline scaling.  Everything is a pure
function of its parameters and the seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .network import FlowSpec, Scenario, Scheduler, Topology

TSN = "tsn"
INTERDC = "interdc"
SYNTHETIC = "synthetic"
CUSTOM = "custom"

# Deadline sets fixed by each named model (seconds).
_REQUIRED_DEADLINES = {
    TSN: (0.1e-3, 2e-3, 50e-3),
    INTERDC: (10e-3, 50e-3, 200e-3),
    SYNTHETIC: (10e-3, 25e-3, 50e-3, 100e-3),
}
_DEFAULT_RATE = (1.0, 100.0)
_DEFAULT_BURST = (1.0, 100.0)


@dataclass(frozen=True)
class TrafficClass:
    """One application class: fixed deadline, uniform rate/burst ranges."""

    deadline: float
    rate_range: Tuple[float, float] = _DEFAULT_RATE
    burst_range: Tuple[float, float] = _DEFAULT_BURST

    def __post_init__(self):
        if self.deadline <= 0:
            raise ValueError("class deadline must be positive")
        for lo, hi in (self.rate_range, self.burst_range):
            if not 0 < lo <= hi:
                raise ValueError("distribution ranges must satisfy 0 < lo <= hi")


@dataclass(frozen=True)
class TrafficModel:
    kind: str
    classes: Tuple[TrafficClass, ...]

    def __post_init__(self):
        if not self.classes:
            raise ValueError("traffic model needs at least one class")
        required = _REQUIRED_DEADLINES.get(self.kind)
        if required is not None:
            got = tuple(sorted(c.deadline for c in self.classes))
            if got != tuple(sorted(required)):
                raise ValueError(
                    f"{self.kind} model must use deadlines {required} s, got {got}")


def tsn_model() -> TrafficModel:
    return TrafficModel(TSN, tuple(TrafficClass(d) for d in _REQUIRED_DEADLINES[TSN]))


def interdc_model() -> TrafficModel:
    return TrafficModel(
        INTERDC, tuple(TrafficClass(d) for d in _REQUIRED_DEADLINES[INTERDC]))


def synthetic_model() -> TrafficModel:
    return TrafficModel(
        SYNTHETIC, tuple(TrafficClass(d) for d in _REQUIRED_DEADLINES[SYNTHETIC]))


_BUILTINS = {TSN: tsn_model, INTERDC: interdc_model, SYNTHETIC: synthetic_model}


def model_by_name(name: str) -> TrafficModel:
    try:
        return _BUILTINS[name]()
    except KeyError:
        raise ValueError(f"unknown traffic model {name!r}; "
                         f"choose from {sorted(_BUILTINS)}") from None


def load_model(path) -> TrafficModel:
    """Read a model file: {"kind": ..., "classes": [{"deadline_ms": ...,
    "rate_mbps": [lo, hi], "burst_mb": [lo, hi]}, ...]}."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    classes = []
    for entry in doc["classes"]:
        classes.append(TrafficClass(
            deadline=float(entry["deadline_ms"]) / 1000.0,
            rate_range=tuple(entry.get("rate_mbps", _DEFAULT_RATE)),
            burst_range=tuple(entry.get("burst_mb", _DEFAULT_BURST)),
        ))
    return TrafficModel(doc.get("kind", CUSTOM), tuple(classes))


def sample_flows(model: TrafficModel, count: int, paths: Sequence[Sequence[int]],
                 seed: int, first_id: int = 0) -> List[FlowSpec]:
    """Draw ``count`` flows: class membership uniform over the model's
    classes, rate and burst uniform within the class ranges, path taken from
    ``paths`` in order."""
    if count < 0:
        raise ValueError("count must be non-negative")
    if len(paths) != count:
        raise ValueError(f"need one path per flow: {len(paths)} paths, {count} flows")
    rng = np.random.default_rng(seed)
    flows = []
    for q in range(count):
        cls = model.classes[int(rng.integers(len(model.classes)))]
        rate = float(rng.uniform(*cls.rate_range))
        burst = float(rng.uniform(*cls.burst_range))
        flows.append(FlowSpec(first_id + q, rate, burst, cls.deadline, paths[q]))
    return flows


def gen_parking_lot(m: int, n: int, cross_per_link: Optional[int] = None,
                    model: Optional[TrafficModel] = None, seed: int = 0,
                    scheduler: Optional[Scheduler] = None) -> Scenario:
    """Parking-lot scenario: ``m`` main flows over links 0..n-1 plus
    single-hop cross traffic on every link (``m`` per link by default)."""
    if m < 0 or n < 1:
        raise ValueError("need m >= 0 main flows and n >= 1 links")
    if model is None:
        model = synthetic_model()
    if scheduler is None:
        scheduler = Scheduler("fifo")
    if cross_per_link is None:
        cross_per_link = m
    main_paths = [list(range(n))] * m
    cross_paths = [[j] for j in range(n) for _ in range(cross_per_link)]
    flows = sample_flows(model, m + len(cross_paths), main_paths + cross_paths,
                         seed)
    return Scenario(Topology(n), flows, scheduler)


def scale_deadlines(s: Scenario, omega: float) -> Scenario:
    """Multiply every flow's deadline by ``omega``."""
    if omega <= 0:
        raise ValueError(f"scaling factor must be positive, got {omega}")
    flows = [FlowSpec(f.id, f.rate, f.burst, f.deadline * omega, f.path)
             for f in s.flows]
    return Scenario(s.topology, flows, s.scheduler)


@dataclass(frozen=True)
class TopologyFile:
    """A user-editable topology: links, example routes, suggested model."""

    topology: Topology
    candidate_paths: Tuple[Tuple[int, ...], ...]
    suggested_model: str


def load_topology_file(path) -> TopologyFile:
    """Read one of the shipped (placeholder) topology files or a user copy."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    links = doc["links"]
    ids = sorted(int(entry["id"]) for entry in links)
    if ids != list(range(len(links))):
        raise ValueError("topology link ids must be exactly 0..n-1")
    names: List[Optional[str]] = [None] * len(links)
    for entry in links:
        names[int(entry["id"])] = entry.get("name")
    return TopologyFile(
        Topology(len(links), tuple(names)),
        tuple(tuple(int(j) for j in p) for p in doc.get("candidate_paths", [])),
        doc.get("suggested_model", SYNTHETIC),
    )


def builtin_topology_path(name: str) -> str:
    """Filesystem path of a shipped topology file ('orion_cev' or 'us_topo')."""
    import importlib.resources as res

    fname = {"orion_cev": "orion_cev_topology.json",
             "us_topo": "us_topo_topology.json"}.get(name)
    if fname is None:
        raise ValueError(f"unknown builtin topology {name!r}")
    return str(res.files("reprofile").joinpath("data", fname))

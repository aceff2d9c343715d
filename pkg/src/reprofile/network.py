"""Flows, links, scenarios, and their JSON wire format.

Internal units are seconds and megabits.  The JSON schema carries
milliseconds (``deadline_ms``) and converts at the boundary.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List, Mapping, Optional, Sequence, Tuple

from .curves import TokenBucketProfile

FIFO = "fifo"
STATIC_PRIORITY = "sp"


class ScenarioFormatError(ValueError):
    """Raised when a scenario JSON document does not match the schema."""


@dataclass(frozen=True)
class FlowSpec:
    """A token-bucket regulated flow with an end-to-end deadline and a route.

    ``rate`` is Mb/s, ``burst`` Mb, ``deadline`` seconds, ``path`` the
    ordered link ids traversed.
    """

    id: int
    rate: float
    burst: float
    deadline: float
    path: Tuple[int, ...]

    def __init__(self, id: int, rate: float, burst: float, deadline: float,
                 path: Sequence[int]):
        object.__setattr__(self, "id", int(id))
        object.__setattr__(self, "rate", float(rate))
        object.__setattr__(self, "burst", float(burst))
        object.__setattr__(self, "deadline", float(deadline))
        object.__setattr__(self, "path", tuple(int(j) for j in path))

    @property
    def profile(self) -> TokenBucketProfile:
        return TokenBucketProfile(self.rate, self.burst)


def max_shaping_delay(f: FlowSpec) -> float:
    """Largest shaping delay the flow can afford: min(d, b/r)."""
    return min(f.deadline, f.burst / f.rate)


@dataclass(frozen=True)
class Topology:
    n: int
    names: Tuple[Optional[str], ...] = ()

    def __post_init__(self):
        if self.names and len(self.names) != self.n:
            raise ValueError("link name list must match the link count")

    @property
    def links(self) -> range:
        return range(self.n)


@dataclass(frozen=True)
class Scheduler:
    kind: str
    classes: int = 1

    def __post_init__(self):
        if self.kind not in (FIFO, STATIC_PRIORITY):
            raise ValueError(f"unknown scheduler kind {self.kind!r}")
        if self.kind == FIFO:
            object.__setattr__(self, "classes", 1)

    @property
    def is_fifo(self) -> bool:
        return self.kind == FIFO


@dataclass(frozen=True)
class Scenario:
    topology: Topology
    flows: Tuple[FlowSpec, ...]
    scheduler: Scheduler

    def __init__(self, topology: Topology, flows: Sequence[FlowSpec],
                 scheduler: Scheduler):
        object.__setattr__(self, "topology", topology)
        object.__setattr__(self, "flows", tuple(flows))
        object.__setattr__(self, "scheduler", scheduler)

    def flow(self, flow_id: int) -> FlowSpec:
        for f in self.flows:
            if f.id == flow_id:
                return f
        raise KeyError(f"no flow with id {flow_id}")

    def with_scheduler(self, scheduler: Scheduler) -> "Scenario":
        return Scenario(self.topology, self.flows, scheduler)


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    flow_id: Optional[int] = None
    link_id: Optional[int] = None

    def __str__(self) -> str:
        where = ""
        if self.flow_id is not None:
            where += f" flow={self.flow_id}"
        if self.link_id is not None:
            where += f" link={self.link_id}"
        return f"[{self.code}]{where}: {self.message}"


def flows_on_link(s: Scenario, j: int) -> List[int]:
    """Ids of the flows whose path includes link ``j`` (sorted)."""
    if not 0 <= j < s.topology.n:
        raise KeyError(f"unknown link id {j}")
    return sorted(f.id for f in s.flows if j in f.path)


def validate(s: Scenario) -> List[Diagnostic]:
    """Check every type invariant; an empty list means the scenario is valid."""
    out: List[Diagnostic] = []
    if s.scheduler.classes < 1:
        out.append(Diagnostic("bad-class-count",
                              f"class count must be >= 1, got {s.scheduler.classes}"))
    seen = set()
    for f in s.flows:
        if f.id in seen:
            out.append(Diagnostic("duplicate-flow-id", "flow id reused", flow_id=f.id))
        seen.add(f.id)
        if not f.rate > 0:
            out.append(Diagnostic("nonpositive rate",
                                  f"rate must be positive, got {f.rate}", flow_id=f.id))
        if not f.burst > 0:
            out.append(Diagnostic("nonpositive burst",
                                  f"burst must be positive, got {f.burst}", flow_id=f.id))
        if not f.deadline > 0:
            out.append(Diagnostic("nonpositive deadline",
                                  f"deadline must be positive, got {f.deadline}",
                                  flow_id=f.id))
        if not f.path:
            out.append(Diagnostic("empty path", "path has no links", flow_id=f.id))
        if len(set(f.path)) != len(f.path):
            out.append(Diagnostic("repeated link",
                                  "path visits a link twice (routing must be feed-forward)",
                                  flow_id=f.id))
        for j in f.path:
            if not 0 <= j < s.topology.n:
                out.append(Diagnostic("unknown link",
                                      f"path references link {j} outside 0..{s.topology.n - 1}",
                                      flow_id=f.id, link_id=j))
    return out


# -- JSON wire format --------------------------------------------------------

_LINK_KEYS = {"id", "name", "propagation_ms"}
_FLOW_KEYS = {"id", "rate_mbps", "burst_mb", "deadline_ms", "path"}
_SCHED_KEYS = {"type", "classes"}
_TOP_KEYS = {"links", "scheduler", "flows"}


def _require_keys(obj: Mapping, allowed: set, what: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ScenarioFormatError(f"unknown key(s) {sorted(unknown)} in {what}")


def scenario_from_dict(doc: Mapping) -> Scenario:
    if not isinstance(doc, Mapping):
        raise ScenarioFormatError("scenario document must be a JSON object")
    _require_keys(doc, _TOP_KEYS, "scenario")
    for key in ("links", "scheduler", "flows"):
        if key not in doc:
            raise ScenarioFormatError(f"missing required key {key!r}")
    links = doc["links"]
    names: List[Optional[str]] = []
    ids = []
    for entry in links:
        _require_keys(entry, _LINK_KEYS, "link")
        if "id" not in entry:
            raise ScenarioFormatError("link entry missing 'id'")
        prop = entry.get("propagation_ms", 0)
        if prop != 0:
            raise ScenarioFormatError(
                "nonzero propagation_ms is not supported (fluid model assumes "
                "zero propagation delay)")
        ids.append(int(entry["id"]))
        names.append(entry.get("name"))
    if sorted(ids) != list(range(len(ids))):
        raise ScenarioFormatError(f"link ids must be exactly 0..{len(ids) - 1}")
    ordered = [None] * len(ids)
    for i, name in zip(ids, names):
        ordered[i] = name
    sched_doc = doc["scheduler"]
    _require_keys(sched_doc, _SCHED_KEYS, "scheduler")
    kind = sched_doc.get("type")
    if kind not in (FIFO, STATIC_PRIORITY):
        raise ScenarioFormatError(f"scheduler type must be 'fifo' or 'sp', got {kind!r}")
    classes = int(sched_doc.get("classes", 1))
    flows = []
    for entry in doc["flows"]:
        _require_keys(entry, _FLOW_KEYS, "flow")
        missing = _FLOW_KEYS - set(entry)
        if missing:
            raise ScenarioFormatError(f"flow entry missing {sorted(missing)}")
        flows.append(FlowSpec(
            id=int(entry["id"]),
            rate=float(entry["rate_mbps"]),
            burst=float(entry["burst_mb"]),
            deadline=float(entry["deadline_ms"]) / 1000.0,
            path=entry["path"],
        ))
    return Scenario(Topology(len(ids), tuple(ordered)), flows,
                    Scheduler(kind, classes))


def scenario_to_dict(s: Scenario) -> dict:
    links = []
    for j in s.topology.links:
        entry: dict = {"id": j}
        if s.topology.names and s.topology.names[j] is not None:
            entry["name"] = s.topology.names[j]
        links.append(entry)
    sched: dict = {"type": s.scheduler.kind}
    if not s.scheduler.is_fifo:
        sched["classes"] = s.scheduler.classes
    return {
        "links": links,
        "scheduler": sched,
        "flows": [
            {
                "id": f.id,
                "rate_mbps": f.rate,
                "burst_mb": f.burst,
                "deadline_ms": f.deadline * 1000.0,
                "path": list(f.path),
            }
            for f in s.flows
        ],
    }


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return scenario_from_dict(json.load(fh))


def dump_scenario(s: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(s), fh, indent=2, sort_keys=True)
        fh.write("\n")

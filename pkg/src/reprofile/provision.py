"""Per-link bandwidth mathematics.

Given shaped flows partitioned into priority classes with per-class local
deadlines, this module assembles each class's minimal service function,
enumerates its inflection points, and computes the minimum link bandwidth
(the max of the aggregate sustained rate and every per-class sup of S(t)/t).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .curves import (
    ConcaveCurve,
    Reprofiler,
    TokenBucketProfile,
    TIME_MERGE_TOL,
    curve_sum,
    make_2src_curve,
    shift_left,
    sup_ratio,
)

FIRST_POINT = "first"
OWN_CLASS = "own"
HIGHER_CLASS = "higher"


class InconsistentProvisioningError(RuntimeError):
    """Provisioned bandwidth is below what the current state requires."""


@dataclass(frozen=True)
class PriorityAssignment:
    """Partition of a link's flows into ordered classes 1 (highest) .. k."""

    k: int
    class_of: Mapping[int, int]

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"class count must be >= 1, got {self.k}")
        object.__setattr__(self, "class_of", dict(self.class_of))
        for i, h in self.class_of.items():
            if not 1 <= h <= self.k:
                raise ValueError(f"flow {i} assigned to class {h} outside 1..{self.k}")

    def group(self, h: int) -> List[int]:
        return sorted(i for i, g in self.class_of.items() if g == h)

    def groups(self) -> Dict[int, List[int]]:
        return {h: self.group(h) for h in range(1, self.k + 1)}


@dataclass(frozen=True)
class LinkClassState:
    """Everything needed to provision one link.

    ``T[h-1]`` is the scheduling deadline of class ``h``; ``D`` maps flow id
    to its current shaping delay.
    """

    link: int
    profiles: Mapping[int, TokenBucketProfile]
    D: Mapping[int, float]
    assignment: PriorityAssignment
    T: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "profiles", dict(self.profiles))
        object.__setattr__(self, "D", dict(self.D))
        object.__setattr__(self, "T", tuple(float(t) for t in self.T))
        if len(self.T) != self.assignment.k:
            raise ValueError("need one deadline per priority class")
        if set(self.profiles) != set(self.assignment.class_of):
            raise ValueError("assignment must cover exactly the link's flows")
        for i, p in self.profiles.items():
            d = self.D.get(i)
            if d is None:
                raise ValueError(f"missing shaping delay for flow {i}")
            cap = p.b / p.r
            if not -1e-15 <= d <= cap * (1 + 1e-9):
                raise ValueError(f"shaping delay {d} of flow {i} outside [0, {cap}]")
        for t in self.T:
            if t < 0:
                raise ValueError(f"negative class deadline {t}")

    def sum_rate(self) -> float:
        return sum(p.r for p in self.profiles.values())

    def reprofiler(self, i: int) -> Reprofiler:
        p = self.profiles[i]
        return Reprofiler(p, min(self.D[i], p.b / p.r))

    def with_deadline(self, h: int, t: float) -> "LinkClassState":
        T = list(self.T)
        T[h - 1] = t
        return replace(self, T=tuple(T))


@dataclass
class InflectionPoint:
    """A time where the minimal service function's slope can drop.

    ``sources`` records every origin of the point after merging: the class
    deadline itself, a rate change of an own-class flow, or a rate change of
    a higher-class flow.  Only the first kind moves when the deadline does.
    """

    t: float
    sources: Tuple[Tuple[str, Optional[int]], ...]
    klass: int
    slack: Optional[float] = None

    @property
    def stationary(self) -> bool:
        return all(kind != FIRST_POINT for kind, _ in self.sources)


class ServiceFunction(NamedTuple):
    """Minimal service function: zero up to ``origin``, then ``curve`` re-based.

    ``value(origin + tau) = curve(tau)`` for ``tau > 0``; the jump of
    ``curve`` is the service owed instantly once the deadline expires.
    """

    origin: float
    curve: ConcaveCurve

    def value(self, t: float) -> float:
        if t <= self.origin:
            return 0.0
        return float(self.curve.values(np.asarray([t - self.origin]))[0])

    def values_right(self, ts: np.ndarray) -> np.ndarray:
        """Right-limits S(t+), vectorized (meaningful for t >= origin)."""
        return self.curve.values(np.asarray(ts, dtype=float) - self.origin,
                                 right_at_origin=True)


def aggregate_shaped_curve(r: np.ndarray, b: np.ndarray, D: np.ndarray,
                           ) -> ConcaveCurve:
    """Sum of two-slope shaped curves, assembled in one pass.

    Unshaped flows (D = 0) contribute their burst to the jump; each positive
    shaping delay is a breakpoint where the aggregate slope drops from the
    flow's peak rate to its sustained rate.
    """
    r = np.asarray(r, dtype=float)
    b = np.asarray(b, dtype=float)
    D = np.asarray(D, dtype=float)
    if not len(r):
        return ConcaveCurve.zero()
    cap = b / r
    D = np.minimum(D, cap)
    shaped = D > 0
    jump = float(b[~shaped].sum())
    R = np.zeros_like(r)
    R[shaped] = b[shaped] / D[shaped]
    slope = float(r[~shaped].sum() + R[shaped].sum())
    segs = [(0.0, slope)]
    order = np.argsort(D[shaped], kind="stable")
    ds = D[shaped][order]
    drops = (R[shaped] - r[shaped])[order]
    for d, drop in zip(ds.tolist(), drops.tolist()):
        slope -= drop
        if segs[-1][0] == d:
            segs[-1] = (d, slope)
        else:
            segs.append((d, slope))
    return ConcaveCurve(jump, segs)


def aggregate_curve(state: LinkClassState, classes: Sequence[int]) -> ConcaveCurve:
    """Sum of the shaped arrival curves of all flows in the given classes."""
    ids = [i for h in classes for i in state.assignment.group(h)]
    return aggregate_shaped_curve(
        np.array([state.profiles[i].r for i in ids]),
        np.array([state.profiles[i].b for i in ids]),
        np.array([state.D[i] for i in ids]),
    )


def minimal_service_function(state: LinkClassState, h: int) -> ServiceFunction:
    """Service class ``h`` must receive: higher-priority traffic plus its own
    aggregate shifted by the class deadline."""
    T = state.T[h - 1]
    higher = aggregate_curve(state, range(1, h))
    own = aggregate_curve(state, [h])
    return ServiceFunction(T, curve_sum(shift_left(higher, T), own))


def inflection_points(state: LinkClassState, h: int) -> List[InflectionPoint]:
    """Candidate times for the sup of S(t)/t, deduplicated and sorted."""
    T = state.T[h - 1]
    raw: List[Tuple[float, Tuple[str, Optional[int]]]] = [(T, (FIRST_POINT, None))]
    for i in state.assignment.group(h):
        if state.D[i] > 0:
            raw.append((T + state.D[i], (OWN_CLASS, i)))
    for hp in range(1, h):
        for i in state.assignment.group(hp):
            if state.D[i] > T:
                raw.append((state.D[i], (HIGHER_CLASS, i)))
    raw.sort(key=lambda x: x[0])
    out: List[InflectionPoint] = []
    for t, src in raw:
        if out and t - out[-1].t <= TIME_MERGE_TOL:
            out[-1] = InflectionPoint(out[-1].t, out[-1].sources + (src,), h)
        else:
            out.append(InflectionPoint(t, (src,), h))
    return out


class ClassBandwidth(NamedTuple):
    value: float
    witness: Optional[InflectionPoint]


def class_bandwidth(state: LinkClassState, h: int) -> ClassBandwidth:
    """Bandwidth needed by class ``h``: sup over t > T of S(t)/t.

    Inflection points are evaluated as right-limits; a deadline of 0 facing
    an instantaneous burst yields the ``inf`` sentinel (infeasible deadline,
    not an exception).  When the sup is only approached in the long-run-rate
    limit the witness is None.
    """
    sf = minimal_service_function(state, h)
    value, loc = sup_ratio(sf.curve, sf.origin)
    if math.isinf(value):
        return ClassBandwidth(math.inf, None)
    if math.isinf(loc):
        return ClassBandwidth(value, None)
    witness = None
    for pt in inflection_points(state, h):
        if abs(pt.t - loc) <= max(TIME_MERGE_TOL, 1e-12 * loc):
            witness = pt
            break
    return ClassBandwidth(value, witness)


class LinkBandwidth(NamedTuple):
    total: float
    per_class: Tuple[ClassBandwidth, ...]


def link_bandwidth(state: LinkClassState) -> LinkBandwidth:
    """Minimum bandwidth for the link: max of the aggregate sustained rate
    and every class's requirement."""
    per = tuple(class_bandwidth(state, h) for h in range(1, state.assignment.k + 1))
    total = state.sum_rate()
    for cb in per:
        total = max(total, cb.value)
    return LinkBandwidth(total, per)


def slacks(state: LinkClassState, h: int, C_j: float) -> List[InflectionPoint]:
    """Excess service ``C_j*t - S(t+)`` at each of class ``h``'s inflection
    points under provisioned bandwidth ``C_j``."""
    sf = minimal_service_function(state, h)
    pts = inflection_points(state, h)
    ts = np.array([pt.t for pt in pts])
    vals = sf.values_right(ts)
    out = []
    for pt, v in zip(pts, vals):
        s = C_j * pt.t - float(v)
        if s < -1e-9 * max(C_j * pt.t, 1.0):
            raise InconsistentProvisioningError(
                f"negative slack {s} at t={pt.t} for class {h}: provisioned "
                f"bandwidth {C_j} is below the state's requirement")
        out.append(InflectionPoint(pt.t, pt.sources, pt.klass, slack=s))
    return out

"""Brute-force reference computations for desk-scale instances.

Everything here recomputes bandwidths from first principles (direct curve
formulas, dense time grids, exhaustive enumeration) and shares no code with
the solvers or the provisioning module, so it can serve as an independent
oracle in tests.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .network import FlowSpec, Scenario, flows_on_link, max_shaping_delay

DENSE_SAMPLES = 10_000


class OracleSizeError(ValueError):
    """Instance exceeds the oracle's size caps."""


class OracleResolutionError(RuntimeError):
    """The search grid contained no feasible point."""

    def __init__(self, gap: float):
        super().__init__(
            f"no feasible grid point; best infeasibility gap {gap:.3e} s "
            "(refine the resolution)")
        self.gap = gap


def _sigma(r: float, b: float, D: float, taus: np.ndarray) -> np.ndarray:
    """Shaped arrival curve evaluated directly from (r, b, D).

    Right-limit semantics: an unshaped flow (D = 0) is worth its burst
    already at tau = 0+.
    """
    taus = np.asarray(taus, dtype=float)
    if D <= 0:
        vals = np.where(taus >= 0, b + r * taus, 0.0)
    else:
        vals = np.where(taus > 0,
                        np.minimum(b / D * taus, (b - r * D) + r * taus), 0.0)
    return vals


def _dense_taus(flows: Sequence[FlowSpec]) -> np.ndarray:
    """Offsets after the class deadline at which S(t)/t is sampled.

    Log-spaced so the sup is resolved whether it sits at sub-millisecond
    shaping delays or out where the long-run rate takes over, plus the exact
    right-limit at the deadline itself.
    """
    if not flows:
        W = 1.0
    else:
        W = 10.0 * (max(max_shaping_delay(f) for f in flows)
                    + max(f.burst / f.rate for f in flows))
    return np.concatenate([[0.0], np.geomspace(W * 1e-9, W, DENSE_SAMPLES - 1)])


def grid_min_bandwidth_fifo(s: Scenario, resolution: float = 0.1) -> float:
    """Exhaustive grid search over shaping delays and per-link deadlines.

    ``resolution`` is the grid step as a fraction of each variable's range
    (0.1 gives 11 points per dimension).  Bandwidths come from a dense-grid
    sup of S(t)/t, independent of the inflection-point shortcut used by the
    solvers.
    """
    m, n = len(s.flows), s.topology.n
    if m > 3 or n > 3:
        raise OracleSizeError(f"grid oracle caps at 3 flows / 3 links, got m={m}, n={n}")
    if m == 0:
        return 0.0
    points = int(round(1.0 / resolution)) + 1
    flows = list(s.flows)
    link_members: Dict[int, List[FlowSpec]] = {
        j: [f for f in flows if j in f.path] for j in range(n)
    }
    active = [j for j in range(n) if link_members[j]]
    taus = _dense_taus(flows)

    d_grids = [np.linspace(0.0, max_shaping_delay(f), points) for f in flows]
    t_grids = {j: np.linspace(0.0, min(f.deadline for f in link_members[j]), points)
               for j in active}

    best = math.inf
    best_gap = math.inf
    t_mesh = np.meshgrid(*[t_grids[j] for j in active], indexing="ij") if active else []
    for combo in itertools.product(*d_grids):
        # per-link bandwidth as a function of the local deadline
        c_of_t = []
        for j in active:
            agg = np.zeros_like(taus)
            for f, D in zip(flows, combo):
                if j in f.path:
                    agg += _sigma(f.rate, f.burst, D, taus)
            denom = taus[None, :] + t_grids[j][:, None]
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(denom > 0, agg[None, :] / denom,
                                  np.where(agg[None, :] > 0, math.inf, 0.0))
            stability = sum(f.rate for f in link_members[j])
            c_of_t.append(np.maximum(ratios.max(axis=1), stability))
        total = np.zeros([points] * len(active))
        for axis, cvals in enumerate(c_of_t):
            shape = [1] * len(active)
            shape[axis] = points
            total = total + cvals.reshape(shape)
        # feasibility of every T combination for this D combo
        feas = np.ones([points] * len(active), dtype=bool)
        gap = np.zeros([points] * len(active))
        for f, D in zip(flows, combo):
            path_sum = np.zeros([points] * len(active))
            for axis, j in enumerate(active):
                if j in f.path:
                    path_sum = path_sum + t_mesh[axis]
            over = D + path_sum - f.deadline
            feas &= over <= 1e-9
            gap = np.maximum(gap, over)
        if feas.any():
            best = min(best, float(total[feas].min()))
        else:
            best_gap = min(best_gap, float(gap.min()))
    if math.isinf(best):
        raise OracleResolutionError(best_gap)
    return best


@dataclass(frozen=True)
class AssignmentOptimum:
    bandwidth: float
    assignment: Tuple[int, ...]


def _assignment_bandwidth(flows: Sequence[FlowSpec], D: Mapping[int, float],
                          local_deadlines: Mapping[int, float],
                          classes: Sequence[int], taus: np.ndarray) -> float:
    """Dense-grid bandwidth of one priority assignment (classes[i] pairs with
    flows[i]; class deadlines are the member minima)."""
    k = max(classes)
    stability = sum(f.rate for f in flows)
    C = stability
    for h in range(1, k + 1):
        members = [f for f, g in zip(flows, classes) if g == h]
        if not members:
            continue
        T_h = min(local_deadlines[f.id] for f in members)
        S = np.zeros_like(taus)
        ts = taus + T_h
        for f, g in zip(flows, classes):
            if g < h:
                S += _sigma(f.rate, f.burst, D[f.id], ts)
            elif g == h:
                S += _sigma(f.rate, f.burst, D[f.id], taus)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.where(ts > 0, S / np.where(ts > 0, ts, 1.0),
                              np.where(S > 0, math.inf, 0.0))
        C = max(C, float(ratios.max()))
    return C


def _is_deadline_ordered(flows: Sequence[FlowSpec],
                         local_deadlines: Mapping[int, float],
                         classes: Sequence[int]) -> bool:
    for (f1, g1), (f2, g2) in itertools.combinations(zip(flows, classes), 2):
        if g1 < g2 and not local_deadlines[f1.id] < local_deadlines[f2.id]:
            return False
        if g2 < g1 and not local_deadlines[f2.id] < local_deadlines[f1.id]:
            return False
    return True


def enumerate_assignments_min(flows: Sequence[FlowSpec], D: Mapping[int, float],
                              local_deadlines: Mapping[int, float], k: int,
                              only_deadline_ordered: bool = False,
                              ) -> AssignmentOptimum:
    """Try every priority assignment of up to 6 flows into up to 3 classes.

    Returns the minimum dense-grid bandwidth and the first assignment
    attaining it (enumeration order is lexicographic in class tuples).
    """
    if len(flows) > 6 or k > 3:
        raise OracleSizeError(
            f"assignment oracle caps at 6 flows / 3 classes, got {len(flows)}/{k}")
    if not flows:
        return AssignmentOptimum(0.0, ())
    taus = _dense_taus(flows)
    best: Optional[AssignmentOptimum] = None
    for classes in itertools.product(range(1, k + 1), repeat=len(flows)):
        if only_deadline_ordered and not _is_deadline_ordered(
                flows, local_deadlines, classes):
            continue
        c = _assignment_bandwidth(flows, D, local_deadlines, classes, taus)
        if best is None or c < best.bandwidth * (1.0 - 1e-15):
            best = AssignmentOptimum(c, classes)
    assert best is not None
    return best

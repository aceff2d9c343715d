"""Static-priority solvers: deadline-driven priority assignment, the
shaping/no-shaping baselines, and the greedy exploration-plus-adjustment
heuristic.

The adjustment pass walks links in decreasing order of reach, clusters local
deadlines into priority classes, provisions each class, then lowers every
class deadline as far as the provisioned bandwidth allows while moving the
freed budget into shaping, which smooths traffic for every other hop.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .curves import (
    ConcaveCurve,
    Reprofiler,
    TokenBucketProfile,
    curve_sum,
    make_2src_curve,
    shift_left,
    sup_ratio,
)
from .network import FlowSpec, Scenario, max_shaping_delay
from .provision import (
    LinkClassState,
    PriorityAssignment,
    aggregate_curve,
    aggregate_shaped_curve,
    link_bandwidth,
)

FEAS_TOL = 1e-9
BISECT_TOL = 1e-9


@dataclass(frozen=True)
class GammaSchedule:
    """Exploration grid for the global reprofiling ratio, with refinement."""

    grid: Tuple[float, ...] = tuple(np.linspace(0.0, 1.0, 11).tolist())
    depth: int = 2

    def __post_init__(self):
        g = tuple(sorted(float(v) for v in self.grid))
        object.__setattr__(self, "grid", g)
        if not g or g[0] != 0.0 or g[-1] != 1.0:
            raise ValueError("gamma grid must include 0 and 1")


@dataclass
class SpSolution:
    scenario: Scenario
    D: Dict[int, float]
    assignments: Dict[int, PriorityAssignment]
    T: Dict[int, Tuple[float, ...]]
    C: Dict[int, float]
    total: float
    feasible: bool
    infeasible_links: Tuple[int, ...] = ()
    gamma: Optional[float] = None
    strategy: str = ""

    def class_of(self, flow_id: int, link: int) -> int:
        return self.assignments[link].class_of[flow_id]

    def feasibility_violation(self) -> float:
        worst = 0.0
        for f in self.scenario.flows:
            lhs = self.D[f.id]
            for j in f.path:
                lhs += self.T[j][self.class_of(f.id, j) - 1]
            worst = max(worst, lhs - f.deadline)
        return worst

    def link_states(self) -> Dict[int, LinkClassState]:
        out = {}
        for j, asg in self.assignments.items():
            profiles = {i: self.scenario.flow(i).profile for i in asg.class_of}
            D = {i: self.D[i] for i in asg.class_of}
            out[j] = LinkClassState(j, profiles, D, asg, self.T[j])
        return out


# -- 1-D k-means (exact dynamic program) -------------------------------------


def _kmeans_1d(values: np.ndarray, weights: np.ndarray, k: int) -> List[int]:
    """Boundaries of the optimal contiguous k-partition (SSE-minimal).

    Returns the end index (exclusive) of each cluster over the sorted
    distinct values.  Exact O(k n^2) dynamic program, deterministic
    tie-break toward earlier splits.
    """
    n = len(values)
    W = np.concatenate([[0.0], np.cumsum(weights)])
    WV = np.concatenate([[0.0], np.cumsum(weights * values)])
    WV2 = np.concatenate([[0.0], np.cumsum(weights * values * values)])

    def sse(i: int, j: int) -> float:
        # weighted SSE of values[i..j] inclusive
        w = W[j + 1] - W[i]
        s = WV[j + 1] - WV[i]
        q = WV2[j + 1] - WV2[i]
        return max(q - s * s / w, 0.0)

    cost = np.full((k + 1, n), math.inf)
    split = np.zeros((k + 1, n), dtype=int)
    for j in range(n):
        cost[1][j] = sse(0, j)
    for c in range(2, k + 1):
        for j in range(c - 1, n):
            best, arg = math.inf, c - 1
            for i in range(c - 1, j + 1):
                v = cost[c - 1][i - 1] + sse(i, j)
                if v < best - 1e-15:
                    best, arg = v, i
            cost[c][j] = best
            split[c][j] = arg
    bounds = []
    j = n - 1
    for c in range(k, 0, -1):
        bounds.append(j + 1)
        i = split[c][j] if c > 1 else 0
        j = i - 1
    return bounds[::-1]


def kmeans_assign(deadlines: Mapping[int, float], k: int) -> PriorityAssignment:
    """Cluster a link's local deadlines into at most ``k`` priority classes.

    Exact 1-D k-means over the distinct deadline values (contiguous clusters,
    so smaller deadlines always land in higher-priority classes).  Fewer
    distinct values than ``k`` yield correspondingly fewer classes.
    """
    if not deadlines:
        raise ValueError("cannot assign priorities to an empty flow set")
    if k < 1:
        raise ValueError(f"class count must be >= 1, got {k}")
    items = sorted(deadlines.items(), key=lambda kv: (kv[1], kv[0]))
    vals: List[float] = []
    weights: List[float] = []
    members: List[List[int]] = []
    for i, v in items:
        if vals and v == vals[-1]:
            weights[-1] += 1
            members[-1].append(i)
        else:
            vals.append(v)
            weights.append(1.0)
            members.append([i])
    c = min(k, len(vals))
    bounds = _kmeans_1d(np.array(vals), np.array(weights), c)
    class_of: Dict[int, int] = {}
    start = 0
    for h, end in enumerate(bounds, start=1):
        for group in members[start:end]:
            for i in group:
                class_of[i] = h
        start = end
    return PriorityAssignment(c, class_of)


# -- alternative boundary strategies (assignment-quality harness) ------------


def same_size_assign(deadlines: Mapping[int, float], k: int) -> PriorityAssignment:
    """Contiguous classes with as-equal-as-possible flow counts."""
    items = sorted(deadlines.items(), key=lambda kv: (kv[1], kv[0]))
    chunks = np.array_split(np.arange(len(items)), min(k, len(items)))
    class_of = {}
    for h, chunk in enumerate(chunks, start=1):
        for p in chunk:
            class_of[items[p][0]] = h
    return PriorityAssignment(max(class_of.values()), class_of)


def uniform_assign(deadlines: Mapping[int, float], k: int) -> PriorityAssignment:
    """Equidistant boundaries over the deadline range."""
    lo = min(deadlines.values())
    hi = max(deadlines.values())
    if hi <= lo:
        return PriorityAssignment(1, {i: 1 for i in deadlines})
    edges = np.linspace(lo, hi, k + 1)[1:-1]
    class_of = {i: int(np.searchsorted(edges, v, side="right")) + 1
                for i, v in deadlines.items()}
    return _compact({i: h for i, h in class_of.items()})


def random_assign(deadlines: Mapping[int, float], k: int,
                  rng: np.random.Generator) -> PriorityAssignment:
    """Boundaries placed uniformly at random over the deadline range."""
    lo = min(deadlines.values())
    hi = max(deadlines.values())
    if hi <= lo:
        return PriorityAssignment(1, {i: 1 for i in deadlines})
    edges = np.sort(rng.uniform(lo, hi, size=k - 1))
    class_of = {i: int(np.searchsorted(edges, v, side="right")) + 1
                for i, v in deadlines.items()}
    return _compact(class_of)


def _compact(class_of: Mapping[int, int]) -> PriorityAssignment:
    """Renumber classes 1..c dropping empty ones (order preserved)."""
    used = sorted(set(class_of.values()))
    remap = {h: p + 1 for p, h in enumerate(used)}
    return PriorityAssignment(len(used), {i: remap[h] for i, h in class_of.items()})


# -- shaped-curve evaluation helpers ------------------------------------------


def _shaped_curve(f: FlowSpec, D: float) -> ConcaveCurve:
    return make_2src_curve(Reprofiler(f.profile, min(D, f.burst / f.rate)))


def _sigma_right(r: np.ndarray, b: np.ndarray, D: np.ndarray,
                 taus: np.ndarray) -> np.ndarray:
    """Right-limits of the shaped curves, one row per flow (vectorized)."""
    taus = np.asarray(taus)[None, :]
    r = r[:, None]
    b = b[:, None]
    D = D[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        peak = np.where(D > 0, b / np.where(D > 0, D, 1.0) * taus, np.inf)
    vals = np.minimum(peak, (b - r * D) + r * taus)
    return np.where(taus < 0, 0.0, np.where(taus == 0, np.where(D > 0, 0.0, b), vals))


def _crossing_time(curve: ConcaveCurve, C: float) -> Optional[float]:
    """Smallest t >= 0 with C*t >= curve(t+), or None if the line never
    catches up."""
    if curve.jump0 <= 0 and C >= curve.slopes[0]:
        return 0.0
    if not math.isfinite(C):
        return 0.0
    knots = curve._knots
    bps = curve.bps
    slopes = curve.slopes
    for kk in range(len(bps)):
        s = slopes[kk]
        hi = bps[kk + 1] if kk + 1 < len(bps) else math.inf
        if C > s:
            t = (knots[kk] - s * bps[kk]) / (C - s)
            t = max(t, bps[kk])
            if t < hi or (kk + 1 == len(bps)):
                return float(t)
        elif C * bps[kk] >= knots[kk]:
            return float(bps[kk])
    return None


def _reduce(higher: ConcaveCurve, higher_D: Sequence[float],
            r: np.ndarray, b: np.ndarray, cap: np.ndarray, D9: np.ndarray,
            T_h: float, C_j: float) -> Tuple[float, np.ndarray]:
    """Smallest class deadline the provisioned bandwidth still supports.

    Own-class shaping delays absorb the reduction (their inflection points
    stay put until the b/r cap binds); feasibility is checked at inflection
    points only.  Returns the critical deadline and the shaping delays at it.
    """
    hd = np.asarray([d for d in higher_D if d > 0], dtype=float)

    def candidate_D(T_star: float) -> np.ndarray:
        return np.minimum(D9 + (T_h - T_star), cap)

    def feasible(T_star: float) -> bool:
        Dc = candidate_D(T_star)
        pts = [T_star]
        pts.extend((T_star + Dc[Dc > 0]).tolist())
        if len(hd):
            pts.extend(hd[hd > T_star].tolist())
        ts = np.array(sorted(set(pts)))
        S = higher.values(ts, right_at_origin=True)
        S = S + _sigma_right(r, b, Dc, ts - T_star).sum(axis=0)
        return bool(np.all(S <= C_j * ts * (1.0 + 1e-9) + 1e-15))

    if not math.isfinite(C_j):
        return T_h, D9.copy()
    t_plus = _crossing_time(higher, C_j)
    lo = T_h if t_plus is None else min(max(t_plus, 0.0), T_h)
    hi = T_h
    if feasible(lo):
        return lo, candidate_D(lo)
    if lo >= hi:
        return T_h, D9.copy()
    while hi - lo > BISECT_TOL:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi, candidate_D(hi)


def reduce_class_deadline(state: LinkClassState, h: int, C_j: float,
                          ) -> Tuple[float, Dict[int, float]]:
    """Lower class ``h``'s deadline as far as bandwidth ``C_j`` allows,
    extending the members' shaping delays to keep their inflection points
    fixed (capped at b/r).  Returns the new deadline and the members' new
    shaping delays."""
    G = state.assignment.group(h)
    T_h = state.T[h - 1]
    if not G:
        return T_h, {}
    higher = aggregate_curve(state, range(1, h))
    higher_D = [state.D[i] for hp in range(1, h)
                for i in state.assignment.group(hp)]
    r = np.array([state.profiles[i].r for i in G])
    b = np.array([state.profiles[i].b for i in G])
    cap = b / r
    D9 = np.array([state.D[i] for i in G])
    T_star, Dc = _reduce(higher, higher_D, r, b, cap, D9, T_h, C_j)
    return T_star, dict(zip(G, Dc.tolist()))


# -- baselines ----------------------------------------------------------------


def initial_allocation(s: Scenario, gamma: float,
                       ) -> Tuple[Dict[int, float], Dict[Tuple[int, int], float]]:
    """Shaping delay ``gamma * dhat`` per flow; remaining budget split evenly
    across the flow's hops."""
    D = {}
    Tt = {}
    for f in s.flows:
        D[f.id] = gamma * max_shaping_delay(f)
        share = (f.deadline - D[f.id]) / len(f.path)
        for j in f.path:
            Tt[(f.id, j)] = share
    return D, Tt


def _require_sp(s: Scenario) -> None:
    if s.scheduler.is_fifo:
        raise ValueError("this solver requires a static-priority scenario")


def _link_members(s: Scenario) -> Dict[int, List[FlowSpec]]:
    return {j: [f for f in s.flows if j in f.path] for j in range(s.topology.n)}


def _evaluate(s: Scenario, D: Mapping[int, float],
              Tt: Mapping[Tuple[int, int], float], strategy: str,
              gamma: Optional[float]) -> SpSolution:
    """Cluster, fix class deadlines at the member minima, and provision."""
    members = _link_members(s)
    assignments: Dict[int, PriorityAssignment] = {}
    T: Dict[int, Tuple[float, ...]] = {}
    C: Dict[int, float] = {}
    bad: List[int] = []
    for j in range(s.topology.n):
        if not members[j]:
            assignments[j] = PriorityAssignment(1, {})
            T[j] = (0.0,)
            C[j] = 0.0
            continue
        local = {f.id: Tt[(f.id, j)] for f in members[j]}
        asg = kmeans_assign(local, s.scheduler.classes)
        T[j] = tuple(min(local[i] for i in asg.group(h))
                     for h in range(1, asg.k + 1))
        state = LinkClassState(
            j, {f.id: f.profile for f in members[j]},
            {f.id: D[f.id] for f in members[j]}, asg, T[j])
        C[j] = link_bandwidth(state).total
        assignments[j] = asg
        if math.isinf(C[j]):
            bad.append(j)
    total = sum(C.values())
    sol = SpSolution(s, dict(D), assignments, T, C, total, True, tuple(bad),
                     gamma, strategy)
    sol.feasible = sol.feasibility_violation() <= FEAS_TOL
    return sol


def sp_ns_solve(s: Scenario) -> SpSolution:
    """No shaping: whole budget split evenly over hops, then clustered."""
    _require_sp(s)
    D, Tt = initial_allocation(s, 0.0)
    return _evaluate(s, D, Tt, "ns", gamma=0.0)


def sp_fs_solve(s: Scenario) -> SpSolution:
    """Full shaping: maximum shaping delay, residual split evenly."""
    _require_sp(s)
    D, Tt = initial_allocation(s, 1.0)
    return _evaluate(s, D, Tt, "fs", gamma=1.0)


# -- the adjustment phase -------------------------------------------------------


@dataclass
class AuditRecord:
    link: int
    iteration: int
    pre: float
    post: float


@dataclass
class AdjustmentResult:
    solution: SpSolution
    best_total: float
    first_total: float
    iterations: int
    audits: List[AuditRecord] = field(default_factory=list)


def _link_order(s: Scenario) -> List[int]:
    members = _link_members(s)
    reach = {}
    for j in range(s.topology.n):
        touched = set()
        for f in members[j]:
            touched.update(f.path)
        reach[j] = len(touched)
    return sorted(range(s.topology.n), key=lambda j: (-reach[j], j))


def adjustment(s: Scenario, D0: Mapping[int, float],
               Tt0: Mapping[Tuple[int, int], float], eps: float = 1e-3,
               audit: bool = True, gamma: Optional[float] = None,
               strategy: str = "gr") -> AdjustmentResult:
    """Iterative deadline adjustment (running-minimum total bandwidth).

    Links are processed in decreasing order of the number of links their
    flows touch.  Per link: cluster local deadlines, then per class set the
    deadline to the member minimum, extend shaping delays by the leftover,
    provision, and lower the deadline as far as the provisioned bandwidth
    allows.  Unused budget is re-split evenly and the loop repeats until the
    relative improvement drops below ``eps``.
    """
    _require_sp(s)
    members = _link_members(s)
    order = _link_order(s)
    flows = {f.id: f for f in s.flows}
    cap = {f.id: f.burst / f.rate for f in s.flows}
    D = dict(D0)
    Tt = dict(Tt0)
    link_asg: Dict[int, PriorityAssignment] = {}
    link_T: Dict[int, Tuple[float, ...]] = {}

    best_total = math.inf
    first_total = math.inf
    best_snapshot = None
    audits: List[AuditRecord] = []
    prev_total = math.inf
    iteration = 0
    while True:
        iteration += 1
        for j in order:
            if not members[j]:
                link_asg[j] = PriorityAssignment(1, {})
                link_T[j] = (0.0,)
                continue
            local = {f.id: Tt[(f.id, j)] for f in members[j]}
            asg = kmeans_assign(local, s.scheduler.classes)
            profiles = {f.id: f.profile for f in members[j]}
            if audit:
                T_pre = tuple(min(local[i] for i in asg.group(h))
                              for h in range(1, asg.k + 1))
                pre_state = LinkClassState(
                    j, profiles, {i: D[i] for i in profiles}, asg, T_pre)
                pre_bw = link_bandwidth(pre_state).total
            C_j = sum(p.r for p in profiles.values())
            higher = ConcaveCurve.zero()
            higher_D: List[float] = []
            final_T: List[float] = []
            for h in range(1, asg.k + 1):
                G = asg.group(h)
                T_h = min(local[i] for i in G)
                for i in G:
                    D[i] = min(local[i] + D[i] - T_h, cap[i])
                r = np.array([flows[i].rate for i in G])
                b = np.array([flows[i].burst for i in G])
                caps = np.array([cap[i] for i in G])
                D9 = np.array([D[i] for i in G])
                own = aggregate_shaped_curve(r, b, D9)
                C_h, _ = sup_ratio(curve_sum(shift_left(higher, T_h), own), T_h)
                C_j = max(C_j, C_h)
                if math.isfinite(C_j):
                    T_star, Dc = _reduce(higher, higher_D, r, b, caps, D9,
                                         T_h, C_j)
                else:
                    T_star, Dc = T_h, D9
                for i, dnew in zip(G, Dc.tolist()):
                    D[i] = dnew
                    local[i] = T_star
                    Tt[(i, j)] = T_star
                higher = curve_sum(higher, aggregate_shaped_curve(r, b, Dc))
                higher_D.extend(D[i] for i in G)
                final_T.append(T_star)
            link_asg[j] = asg
            link_T[j] = tuple(final_T)
            if audit:
                post_state = LinkClassState(
                    j, profiles, {i: D[i] for i in profiles}, asg, link_T[j])
                post_bw = link_bandwidth(post_state).total
                if post_bw > pre_bw * (1 + 1e-9) + 1e-12:
                    raise RuntimeError(
                        f"deadline reduction raised link {j} bandwidth "
                        f"{pre_bw} -> {post_bw}")
                audits.append(AuditRecord(j, iteration, pre_bw, post_bw))
        # re-provision every link with the final shaping delays
        C: Dict[int, float] = {}
        for j in range(s.topology.n):
            if not members[j]:
                C[j] = 0.0
                continue
            state = LinkClassState(
                j, {f.id: f.profile for f in members[j]},
                {f.id: D[f.id] for f in members[j]}, link_asg[j], link_T[j])
            C[j] = link_bandwidth(state).total
        total = sum(C.values())
        if iteration == 1:
            first_total = total
        if total < best_total:
            best_total = total
            best_snapshot = (dict(D), dict(link_asg), dict(link_T), dict(C))
        # redistribute unused budget evenly across each flow's hops
        for f in s.flows:
            spent = sum(Tt[(f.id, j)] for j in f.path)
            resid = f.deadline - D[f.id] - spent
            if resid >= 0.0:
                share = resid / len(f.path)
                for j in f.path:
                    Tt[(f.id, j)] += share
            elif spent > 0.0:
                scale = max(f.deadline - D[f.id], 0.0) / spent
                for j in f.path:
                    Tt[(f.id, j)] *= scale
        if math.isinf(prev_total):
            improvement = 0.0 if math.isinf(total) else 1.0
        elif prev_total <= 0.0:
            improvement = 0.0
        else:
            improvement = (prev_total - total) / prev_total
        prev_total = total
        if improvement <= eps:
            break
    assert best_snapshot is not None
    Db, asgb, Tb, Cb = best_snapshot
    bad = tuple(j for j, c in Cb.items() if math.isinf(c))
    sol = SpSolution(s, Db, asgb, Tb, Cb, best_total, True, bad, gamma, strategy)
    sol.feasible = sol.feasibility_violation() <= FEAS_TOL
    return AdjustmentResult(sol, best_total, first_total, iteration, audits)


def greedy_reprofiling(s: Scenario, schedule: Optional[GammaSchedule] = None,
                       eps: float = 1e-3, audit: bool = True) -> SpSolution:
    """Search the global reprofiling ratio: run the adjustment phase on a
    gamma grid, then refine around the best value.  Ties pick the smallest
    gamma."""
    _require_sp(s)
    if schedule is None:
        schedule = GammaSchedule()
    cache: Dict[float, AdjustmentResult] = {}

    def evaluate(gamma: float) -> AdjustmentResult:
        key = round(gamma, 12)
        if key not in cache:
            D, Tt = initial_allocation(s, key)
            cache[key] = adjustment(s, D, Tt, eps=eps, audit=audit,
                                    gamma=key, strategy="gr")
        return cache[key]

    for g in schedule.grid:
        evaluate(g)
    for _ in range(schedule.depth):
        evaluated = sorted(cache)
        best_g = min(evaluated,
                     key=lambda g: (cache[g].best_total, g))
        idx = evaluated.index(best_g)
        lo = evaluated[max(idx - 1, 0)]
        hi = evaluated[min(idx + 1, len(evaluated) - 1)]
        for g in np.linspace(lo, hi, 5):
            evaluate(float(g))
    best_g = min(sorted(cache), key=lambda g: (cache[g].best_total, g))
    return cache[best_g].solution


def shaping_ratio_report(sol: SpSolution) -> Dict[int, float]:
    """Per-class weighted average of D/dhat; a flow's weight in a class is
    the fraction of its hops served in that class.  Zero-weight classes are
    omitted."""
    num: Dict[int, float] = {}
    den: Dict[int, float] = {}
    for f in sol.scenario.flows:
        dhat = max_shaping_delay(f)
        ratio = sol.D[f.id] / dhat
        for j in f.path:
            h = sol.class_of(f.id, j)
            w = 1.0 / len(f.path)
            num[h] = num.get(h, 0.0) + ratio * w
            den[h] = den.get(h, 0.0) + w
    return {h: num[h] / den[h] for h in sorted(den) if den[h] > 0}

"""FIFO solvers: full shaping, NLP-based deadline allocation, and the
ordering-constrained nonlinear program with randomized ordering search.

Under FIFO every link has a single class, so the minimum bandwidth has a
closed form once the relative order of the shaping delays is fixed: the sup
of S(t)/t is attained at one of the per-flow inflection points ``T_j + D_i``.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from .network import FlowSpec, Scenario, max_shaping_delay

FEAS_TOL = 1e-9


class OrderingViolationError(ValueError):
    """Shaping delays are not sorted consistently with the assumed ordering."""


@dataclass(frozen=True)
class Ordering:
    """Assumed non-decreasing order of the flows' shaping delays."""

    order: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "order", tuple(int(i) for i in self.order))
        if len(set(self.order)) != len(self.order):
            raise ValueError("ordering must be a permutation without repeats")

    def rank(self) -> Dict[int, int]:
        return {i: p for p, i in enumerate(self.order)}


@dataclass
class FifoSolution:
    scenario: Scenario
    D: Dict[int, float]
    T: Dict[int, float]
    C: Dict[int, float]
    total: float
    feasible: bool
    strategy: str = ""

    def feasibility_violation(self) -> float:
        worst = 0.0
        for f in self.scenario.flows:
            lhs = self.D[f.id] + sum(self.T[j] for j in f.path)
            worst = max(worst, lhs - f.deadline)
        return worst


def _require_fifo(s: Scenario) -> None:
    if not s.scheduler.is_fifo:
        raise ValueError("this solver requires a FIFO scenario")


def _link_members(s: Scenario) -> Dict[int, List[FlowSpec]]:
    return {j: [f for f in s.flows if j in f.path] for j in range(s.topology.n)}


# -- baselines ---------------------------------------------------------------


def fs_solve(s: Scenario) -> FifoSolution:
    """Full shaping: every flow takes its maximum affordable shaping delay,
    local deadlines collapse to zero, and each link needs the sum of the
    resulting peak rates."""
    _require_fifo(s)
    D = {}
    R = {}
    for f in s.flows:
        dhat = max_shaping_delay(f)
        D[f.id] = dhat
        R[f.id] = f.rate if f.deadline >= f.burst / f.rate else f.burst / f.deadline
    T = {j: 0.0 for j in range(s.topology.n)}
    C = {j: sum(R[f.id] for f in members)
         for j, members in _link_members(s).items()}
    return FifoSolution(s, D, T, C, sum(C.values()), True, strategy="fs")


def ns_solve(s: Scenario) -> FifoSolution:
    """No shaping: distribute each flow's whole delay budget over its hops so
    that the total of ``max(sum r, sum b / T_j)`` is minimized.

    With all shaping delays zero the per-link bandwidth has a single
    inflection point at ``T_j``, so the allocation is a smooth convex program
    in epigraph form, solved with SLSQP.
    """
    _require_fifo(s)
    members = _link_members(s)
    active = [j for j in range(s.topology.n) if members[j]]
    D = {f.id: 0.0 for f in s.flows}
    if not active:
        T = {j: 0.0 for j in range(s.topology.n)}
        return FifoSolution(s, D, T, {j: 0.0 for j in T}, 0.0, True, strategy="ns")
    A = np.array([sum(f.rate for f in members[j]) for j in active])
    B = np.array([sum(f.burst for f in members[j]) for j in active])
    pos = {j: p for p, j in enumerate(active)}
    nl = len(active)

    t0 = np.array([min(f.deadline / len(f.path) for f in members[j]) for j in active])
    t_hi = np.array([min(f.deadline for f in members[j]) for j in active])
    c0 = np.maximum(A, B / t0)
    x0 = np.concatenate([t0, c0])

    def objective(x):
        return float(np.sum(x[nl:]))

    def objective_grad(x):
        g = np.zeros_like(x)
        g[nl:] = 1.0
        return g

    cons = []
    for f in s.flows:
        a = np.zeros(2 * nl)
        for j in f.path:
            a[pos[j]] = 1.0
        cons.append({
            "type": "ineq",
            "fun": (lambda x, a=a, d=f.deadline: d - a @ x),
            "jac": (lambda x, a=a: -a),
        })

    def epi_fun(x):
        return x[nl:] - B / x[:nl]

    def epi_jac(x):
        J = np.zeros((nl, 2 * nl))
        J[:, :nl] = np.diag(B / x[:nl] ** 2)
        J[:, nl:] = np.eye(nl)
        return J

    cons.append({"type": "ineq", "fun": epi_fun, "jac": epi_jac})
    t_lo = np.maximum(1e-9 * t_hi, 1e-15)
    bounds = [(t_lo[p], t_hi[p]) for p in range(nl)] + \
             [(A[p], None) for p in range(nl)]
    res = minimize(objective, x0, jac=objective_grad, method="SLSQP",
                   bounds=bounds, constraints=cons,
                   options={"maxiter": 500, "ftol": 1e-12})
    x = res.x if res.success else x0
    T_act = np.clip(x[:nl], t_lo, t_hi)
    # restore strict feasibility (SLSQP satisfies constraints only to ftol)
    scale = 1.0
    for f in s.flows:
        path_sum = sum(T_act[pos[j]] for j in f.path)
        if path_sum > f.deadline:
            scale = min(scale, f.deadline / path_sum)
    T_act = T_act * scale
    # keep whichever of (solution, even-split start) costs less
    def total_of(tv):
        return float(np.sum(np.maximum(A, B / tv)))
    if total_of(T_act) > total_of(t0):
        T_act = t0
    T = {j: 0.0 for j in range(s.topology.n)}
    C = {j: 0.0 for j in range(s.topology.n)}
    for j in active:
        T[j] = float(T_act[pos[j]])
        C[j] = float(max(A[pos[j]], B[pos[j]] / T[j]))
    return FifoSolution(s, D, T, C, sum(C.values()), True, strategy="ns")


# -- closed-form bandwidth ---------------------------------------------------


def nlp_closed_form_bandwidth(flows: Sequence[FlowSpec], D: Mapping[int, float],
                              T_j: float, ord: Ordering) -> float:
    """Closed-form minimum bandwidth of one FIFO link.

    Evaluates ``max(sum r, max_i sum_q sigma_q(D_i) / (T_j + D_i))`` with the
    flows' shaping delays assumed sorted per ``ord``.
    """
    if not flows:
        return 0.0
    rank = ord.rank()
    try:
        flows = sorted(flows, key=lambda f: rank[f.id])
    except KeyError as exc:
        raise OrderingViolationError(f"flow {exc} missing from ordering") from exc
    Dv = np.array([D[f.id] for f in flows], dtype=float)
    if np.any(np.diff(Dv) < -FEAS_TOL * np.maximum(1.0, Dv[:-1])):
        raise OrderingViolationError(
            "shaping delays are not non-decreasing along the ordering")
    Dv = np.maximum.accumulate(Dv)  # absorb sub-tolerance inversions
    r = np.array([f.rate for f in flows])
    b = np.array([f.burst for f in flows])
    return _closed_form(r, b, Dv, T_j)[0]


def _closed_form(r: np.ndarray, b: np.ndarray, Dv: np.ndarray, T_j: float,
                 ) -> Tuple[float, int]:
    """Bandwidth and active candidate index for one link, D sorted ascending.

    Candidate i sits at ``T_j + D_i``; flows with smaller-or-equal delay are
    past their knee (burst plus residual rate), later flows still ramp at
    their peak rate.
    """
    stability = float(r.sum())
    prefB = np.cumsum(b - r * Dv)
    prefr = np.cumsum(r)
    with np.errstate(divide="ignore"):
        R = np.where(Dv > 0, b / np.where(Dv > 0, Dv, 1.0), 0.0)
    sufR = np.concatenate([np.cumsum(R[::-1])[::-1], [0.0]])
    cnt = np.searchsorted(Dv, Dv, side="right")
    N = prefB[cnt - 1] + Dv * (prefr[cnt - 1] + sufR[cnt])
    denom = T_j + Dv
    with np.errstate(divide="ignore", invalid="ignore"):
        V = np.where(denom > 0, N / np.where(denom > 0, denom, 1.0), math.inf)
    k = int(np.argmax(V))
    if V[k] > stability:
        return float(V[k]), k
    return stability, -1


# -- ordering-constrained NLP -------------------------------------------------


@dataclass
class _NlpProblem:
    """Pre-digested scenario for one ordering: everything in rank space."""

    m: int
    n: int
    flow_ids: List[int]
    r: np.ndarray
    b: np.ndarray
    dhat: np.ndarray
    d: np.ndarray
    paths: List[np.ndarray]          # per flow, link indices
    link_flows: List[np.ndarray]     # per link, flow positions in rank order
    t_hi: float

    @staticmethod
    def build(s: Scenario, ordering: Ordering) -> "_NlpProblem":
        rank = ordering.rank()
        flows = sorted(s.flows, key=lambda f: rank[f.id])
        link_flows = []
        for j in range(s.topology.n):
            link_flows.append(np.array(
                [p for p, f in enumerate(flows) if j in f.path], dtype=int))
        return _NlpProblem(
            m=len(flows),
            n=s.topology.n,
            flow_ids=[f.id for f in flows],
            r=np.array([f.rate for f in flows]),
            b=np.array([f.burst for f in flows]),
            dhat=np.array([max_shaping_delay(f) for f in flows]),
            d=np.array([f.deadline for f in flows]),
            paths=[np.array(sorted(f.path), dtype=int) for f in flows],
            link_flows=link_flows,
            t_hi=max((f.deadline for f in flows), default=1.0),
        )

    def objective(self, x: np.ndarray) -> float:
        D, T = x[: self.m], x[self.m:]
        total = 0.0
        for j in range(self.n):
            idx = self.link_flows[j]
            if not len(idx):
                continue
            c, _ = _closed_form(self.r[idx], self.b[idx], D[idx], T[j])
            total += c
        return total

    def objective_grad(self, x: np.ndarray) -> Tuple[float, np.ndarray]:
        D, T = x[: self.m], x[self.m:]
        g = np.zeros_like(x)
        total = 0.0
        for j in range(self.n):
            idx = self.link_flows[j]
            if not len(idx):
                continue
            r, b, Dl = self.r[idx], self.b[idx], D[idx]
            c, k = _closed_form(r, b, Dl, T[j])
            total += c
            if k < 0 or not math.isfinite(c):
                continue
            Dstar = Dl[k]
            tau = T[j] + Dstar
            cnt = int(np.searchsorted(Dl, Dstar, side="right"))
            with np.errstate(divide="ignore"):
                R = np.where(Dl > 0, b / np.where(Dl > 0, Dl, 1.0), 0.0)
            Q = float(r[:cnt].sum() + R[cnt:].sum())
            N = c * tau
            g[self.m + j] += -N / tau ** 2
            pre = idx[:cnt]
            g[pre] += -r[:cnt] / tau
            suf = idx[cnt:]
            g[suf] += -Dstar * b[cnt:] / (Dl[cnt:] ** 2 * tau)
            # own candidate: replace the prefix rate term by the full ratio rule
            g[idx[k]] += r[k] / tau + (Q - r[k]) / tau - N / tau ** 2
        return total, g

    # -- feasible-set projection (Dykstra over box / chain / budget halfspaces)

    def project(self, x: np.ndarray, max_cycles: int = 500) -> np.ndarray:
        """Dykstra projection onto the ordering/box/budget polytope.

        Each constraint family keeps a correction restricted to the
        coordinates it touches, so one cycle is O(m + n + sum path lengths).
        """
        m = self.m
        norms = np.array([1.0 + len(p) for p in self.paths])
        y = x.copy()
        mem_box = np.zeros_like(x)
        mem_chain = np.zeros(m)
        mem_flow_d = np.zeros(m)
        mem_flow_t = [np.zeros(len(p)) for p in self.paths]
        for _ in range(max_cycles):
            prev = y.copy()
            z = y + mem_box
            np.clip(z[:m], 0.0, self.dhat, out=y[:m])
            np.clip(z[m:], 0.0, self.t_hi, out=y[m:])
            mem_box = z - y
            zc = y[:m] + mem_chain
            y[:m] = _isotonic(zc)
            mem_chain = zc - y[:m]
            for i in range(m):
                path = self.paths[i]
                zd = y[i] + mem_flow_d[i]
                zt = y[m + path] + mem_flow_t[i]
                lhs = zd + zt.sum()
                step = (lhs - self.d[i]) / norms[i]
                if step > 0.0:
                    y[i] = zd - step
                    y[m + path] = zt - step
                else:
                    y[i] = zd
                    y[m + path] = zt
                mem_flow_d[i] = zd - y[i]
                mem_flow_t[i] = zt - y[m + path]
            if float(np.abs(y - prev).max()) < 1e-12 and self.violation(y) < 1e-10:
                break
        return y

    def violation(self, x: np.ndarray) -> float:
        D, T = x[: self.m], x[self.m:]
        v = max(0.0, float(-D.min(initial=0.0)), float(-T.min(initial=0.0)),
                float((D - self.dhat).max(initial=0.0)))
        if self.m > 1:
            v = max(v, float(-(np.diff(D).min())))
        for i in range(self.m):
            v = max(v, D[i] + T[self.paths[i]].sum() - self.d[i])
        return v


def _isotonic(v: np.ndarray) -> np.ndarray:
    """L2 projection onto the non-decreasing cone (pool adjacent violators)."""
    sums = []
    counts = []
    for val in v:
        sums.append(float(val))
        counts.append(1)
        while len(sums) > 1 and sums[-2] / counts[-2] > sums[-1] / counts[-1]:
            sums[-2] += sums[-1]
            counts[-2] += counts[-1]
            sums.pop()
            counts.pop()
    out = np.empty_like(v)
    pos = 0
    for ssum, cnt in zip(sums, counts):
        out[pos: pos + cnt] = ssum / cnt
        pos += cnt
    return out


def _projected_gradient(prob: _NlpProblem, x0: np.ndarray, max_iter: int = 5000,
                        rel_tol: float = 1e-7) -> Tuple[np.ndarray, float]:
    x = prob.project(x0)
    f, g = prob.objective_grad(x)
    best_x, best_f = x.copy(), f
    step = 1.0
    for _ in range(max_iter):
        if not math.isfinite(f):
            break
        accepted = False
        step = min(step * 2.0, 1.0)
        # keep the trial displacement within the feasible set's diameter so
        # the projection stays well-conditioned
        gnorm = float(np.linalg.norm(g))
        eff = min(step, prob.t_hi / gnorm) if gnorm > 0 else step
        while eff > 1e-18:
            xn = prob.project(x - eff * g)
            fn = prob.objective(xn)
            dx = xn - x
            if fn <= f + 1e-4 * float(g @ dx):
                accepted = True
                break
            eff *= 0.5
        step = eff
        if not accepted:
            break
        rel = (f - fn) / max(abs(f), 1e-30)
        x = xn
        f, g = prob.objective_grad(x)
        if f < best_f:
            best_x, best_f = x.copy(), f
        if 0 <= rel < rel_tol:
            break
    return best_x, best_f


def _starts(prob: _NlpProblem, ns_T: Mapping[int, float]) -> List[np.ndarray]:
    fs = np.concatenate([prob.dhat, np.zeros(prob.n)])
    ns = np.concatenate([np.zeros(prob.m),
                         np.array([ns_T.get(j, 0.0) for j in range(prob.n)])])
    starts = [fs, ns]
    seed = zlib.crc32(np.array(prob.flow_ids, dtype=np.int64).tobytes())
    rng = np.random.default_rng(seed)
    for _ in range(3):
        D = rng.uniform(0.0, 1.0, prob.m) * prob.dhat
        D = np.sort(D)
        T = rng.uniform(0.0, 0.5, prob.n) * prob.t_hi / max(prob.n, 1)
        starts.append(np.concatenate([D, T]))
    return starts


def nlp_solve_for_ordering(s: Scenario, ordering: Ordering,
                           ns_solution: Optional[FifoSolution] = None,
                           max_iter: int = 5000) -> FifoSolution:
    """Local minimum of the total bandwidth for one assumed delay ordering.

    Runs a projected-gradient descent (Armijo backtracking, Dykstra
    projection onto the ordering/box/budget polytope) from five deterministic
    starts and returns the best feasible point seen.
    """
    _require_fifo(s)
    if sorted(ordering.order) != sorted(f.id for f in s.flows):
        raise OrderingViolationError("ordering must permute the scenario's flows")
    prob = _NlpProblem.build(s, ordering)
    if prob.m == 0:
        sol = fs_solve(s)
        sol.strategy = "nlp"
        return sol
    if ns_solution is None:
        ns_solution = ns_solve(s)
    best_x, best_f = None, math.inf
    for x0 in _starts(prob, ns_solution.T):
        x, f = _projected_gradient(prob, x0, max_iter=max_iter)
        if f < best_f and prob.violation(x) <= FEAS_TOL:
            best_x, best_f = x, f
    if best_x is None:
        # numerically stubborn geometry: fall back to a hard projection of
        # the full-shaping point, which is always feasible
        best_x = prob.project(np.concatenate([prob.dhat, np.zeros(prob.n)]),
                              max_cycles=20_000)
    assert prob.violation(best_x) <= FEAS_TOL
    # strip projection noise at the variable bounds
    best_x[: prob.m] = np.clip(best_x[: prob.m], 0.0, prob.dhat)
    best_x[prob.m:] = np.maximum(best_x[prob.m:], 0.0)
    D = {fid: float(best_x[p]) for p, fid in enumerate(prob.flow_ids)}
    T = {j: float(best_x[prob.m + j]) for j in range(prob.n)}
    members = _link_members(s)
    C = {j: nlp_closed_form_bandwidth(members[j], D, T[j], ordering)
         for j in range(s.topology.n)}
    sol = FifoSolution(s, D, T, C, sum(C.values()), True, strategy="nlp")
    sol.feasible = sol.feasibility_violation() <= FEAS_TOL
    return sol


def default_budget(m: int) -> int:
    """Number of orderings explored by default: ~10 ln(m!), capped at 200."""
    return min(200, int(math.ceil(10.0 * math.lgamma(max(m, 2) + 1))))


def randomized_search(s: Scenario, budget: Optional[int] = None,
                      seed: int = 0, max_iter: int = 5000) -> FifoSolution:
    """Best NLP solution over the delay-sorted ordering plus seeded random
    permutations (``budget`` orderings in total)."""
    _require_fifo(s)
    if budget is None:
        budget = default_budget(len(s.flows))
    if budget < 1:
        raise ValueError("search budget must be at least 1")
    ids = [f.id for f in s.flows]
    if not ids:
        return fs_solve(s)
    dhat = {f.id: max_shaping_delay(f) for f in s.flows}
    first = tuple(sorted(ids, key=lambda i: (dhat[i], i)))
    rng = np.random.default_rng(seed)
    orderings = [first]
    for _ in range(budget - 1):
        orderings.append(tuple(int(i) for i in rng.permutation(ids)))
    ns_solution = ns_solve(s)
    best: Optional[FifoSolution] = None
    cache: Dict[Tuple[int, ...], FifoSolution] = {}
    for order in orderings:
        sol = cache.get(order)
        if sol is None:
            sol = nlp_solve_for_ordering(s, Ordering(order), ns_solution,
                                         max_iter=max_iter)
            cache[order] = sol
        if best is None or (sol.feasible and sol.total < best.total):
            best = sol
    assert best is not None
    return best

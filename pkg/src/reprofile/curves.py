"""Piecewise-linear concave curve algebra.

All traffic in the library is described by non-decreasing, piecewise-linear,
concave curves: the token bucket ``r*t + b``, the two-slope shaped profile
``min(R*t, B + r*t)``, and their sums and shifts.  Values are megabits,
times are seconds, slopes are megabits per second.

A curve is 0 at ``t = 0`` and jumps to ``jump0`` as ``t -> 0+`` (the fluid
burst).  Segments carry strictly decreasing slopes; construction merges
equal-slope neighbours so concavity is always strict.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

import numpy as np

# Breakpoints closer than this (seconds) are considered identical.
TIME_MERGE_TOL = 1e-12
# Adjacent slopes closer than this (relative) are merged into one segment.
SLOPE_MERGE_TOL = 1e-12


class InvalidPeakRateError(ValueError):
    """Peak rate below the sustained rate: shaping delay would exceed b/r."""


@dataclass(frozen=True)
class TokenBucketProfile:
    """Token-bucket regulator ``(r, b)``: rate in Mb/s, burst in Mb."""

    r: float
    b: float

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError(f"token-bucket rate must be positive, got {self.r}")
        if not self.b > 0:
            raise ValueError(f"token-bucket burst must be positive, got {self.b}")


@dataclass(frozen=True)
class Reprofiler:
    """Two-slope shaping of a token bucket, parameterized by the delay ``D``.

    ``D = 0`` means no shaping (infinite peak rate), ``D = b/r`` shapes the
    flow all the way down to its sustained rate.
    """

    base: TokenBucketProfile
    D: float

    def __post_init__(self):
        cap = self.base.b / self.base.r
        if not 0.0 <= self.D <= cap * (1.0 + 1e-9):
            raise ValueError(
                f"shaping delay {self.D} outside [0, b/r] = [0, {cap}]"
            )

    @property
    def peak_rate(self) -> float:
        """Peak rate R = b/D (infinite when unshaped)."""
        if self.D == 0.0:
            return math.inf
        return self.base.b / self.D

    @property
    def residual_burst(self) -> float:
        """Burst left after shaping, B = b - r*D (never negative)."""
        return max(self.base.b - self.base.r * self.D, 0.0)


class ConcaveCurve:
    """Non-decreasing concave piecewise-linear curve with a jump at 0+.

    ``curve(0) = 0`` and ``curve(t) = jump0 + sum of slope mass`` for
    ``t > 0``.  Immutable; all operations return new curves.
    """

    __slots__ = ("jump0", "bps", "slopes", "_knots")

    def __init__(self, jump0: float, segments: Iterable[Tuple[float, float]]):
        if jump0 < 0:
            raise ValueError(f"jump0 must be non-negative, got {jump0}")
        segs = sorted(segments)
        if not segs:
            segs = [(0.0, 0.0)]
        if abs(segs[0][0]) > TIME_MERGE_TOL:
            raise ValueError(f"first breakpoint must be 0, got {segs[0][0]}")
        # collapse coincident breakpoints (the later slope wins: the earlier
        # segment would have zero length)
        dedup: list[list[float]] = []
        for bp, sl in segs:
            if sl < -1e-12:
                raise ValueError(f"slope must be non-negative, got {sl}")
            sl = max(sl, 0.0)
            if dedup and bp - dedup[-1][0] <= TIME_MERGE_TOL:
                dedup[-1][1] = sl
            else:
                dedup.append([bp, sl])
        merged: list[list[float]] = []
        for bp, sl in dedup:
            if merged and abs(sl - merged[-1][1]) <= SLOPE_MERGE_TOL * max(1.0, merged[-1][1]):
                continue
            if merged and sl > merged[-1][1]:
                raise ValueError(
                    f"slopes must be strictly decreasing, got {merged[-1][1]} -> {sl}"
                )
            merged.append([bp, sl])
        merged[0][0] = 0.0
        self.jump0 = float(jump0)
        self.bps = np.array([m[0] for m in merged], dtype=float)
        self.slopes = np.array([m[1] for m in merged], dtype=float)
        # cumulative value at each breakpoint (right-continuous piece start)
        gaps = np.diff(self.bps)
        self._knots = self.jump0 + np.concatenate(
            ([0.0], np.cumsum(self.slopes[:-1] * gaps))
        )

    # -- constructors ------------------------------------------------------

    @staticmethod
    def zero() -> "ConcaveCurve":
        return ConcaveCurve(0.0, [(0.0, 0.0)])

    # -- basic queries -----------------------------------------------------

    @property
    def segments(self) -> Tuple[Tuple[float, float], ...]:
        return tuple(zip(self.bps.tolist(), self.slopes.tolist()))

    @property
    def last_slope(self) -> float:
        return float(self.slopes[-1])

    def __call__(self, t: float) -> float:
        return float(self.values(np.asarray([t]))[0])

    def values(self, ts: np.ndarray, right_at_origin: bool = False) -> np.ndarray:
        """Evaluate at an array of times.

        At ``t = 0`` the curve is 0 by definition; with ``right_at_origin``
        the right-limit ``jump0`` is returned instead (used when the sup over
        ``t > 0`` needs the value just after the jump).
        """
        ts = np.asarray(ts, dtype=float)
        idx = np.searchsorted(self.bps, ts, side="right") - 1
        idx = np.clip(idx, 0, len(self.bps) - 1)
        vals = self._knots[idx] + self.slopes[idx] * (ts - self.bps[idx])
        if right_at_origin:
            return np.where(ts <= 0.0, np.where(ts == 0.0, self.jump0, 0.0), vals)
        return np.where(ts <= 0.0, 0.0, vals)

    def __repr__(self) -> str:
        return f"ConcaveCurve(jump0={self.jump0!r}, segments={self.segments!r})"

    def isclose(self, other: "ConcaveCurve", rel: float = 1e-9) -> bool:
        if abs(self.jump0 - other.jump0) > rel * max(1.0, self.jump0):
            return False
        if len(self.bps) != len(other.bps):
            return False
        return bool(
            np.allclose(self.bps, other.bps, rtol=rel, atol=1e-12)
            and np.allclose(self.slopes, other.slopes, rtol=rel, atol=1e-12)
        )


# -- operations ------------------------------------------------------------


def make_token_bucket_curve(p: TokenBucketProfile) -> ConcaveCurve:
    """Affine arrival curve of a token bucket: jump b, then slope r."""
    return ConcaveCurve(p.b, [(0.0, p.r)])


def make_2src_curve(rep: Reprofiler) -> ConcaveCurve:
    """Two-slope shaped arrival curve ``min(R*t, B + r*t)``.

    ``D = 0`` degenerates to the raw token bucket; ``D = b/r`` to the pure
    sustained rate.
    """
    r, b = rep.base.r, rep.base.b
    if rep.D == 0.0:
        return make_token_bucket_curve(rep.base)
    cap = b / r
    if rep.D >= cap * (1.0 - 1e-12):
        return ConcaveCurve(0.0, [(0.0, r)])
    R = b / rep.D
    return ConcaveCurve(0.0, [(0.0, R), (rep.D, r)])


def shaping_delay(p: TokenBucketProfile, R: float) -> float:
    """Delay incurred shaping ``p`` to peak rate ``R``: b/R."""
    if R < p.r:
        raise InvalidPeakRateError(
            f"peak rate {R} below sustained rate {p.r}: shaping delay would exceed b/r"
        )
    return p.b / R


def curve_sum(a: ConcaveCurve, b: ConcaveCurve) -> ConcaveCurve:
    """Pointwise sum; breakpoint sets merge, jumps add."""
    bps = np.union1d(a.bps, b.bps)
    ia = np.clip(np.searchsorted(a.bps, bps, side="right") - 1, 0, None)
    ib = np.clip(np.searchsorted(b.bps, bps, side="right") - 1, 0, None)
    slopes = a.slopes[ia] + b.slopes[ib]
    return ConcaveCurve(a.jump0 + b.jump0, list(zip(bps.tolist(), slopes.tolist())))


def shift_left(curve: ConcaveCurve, delta: float) -> ConcaveCurve:
    """Restrict to ``t > delta`` and re-base at the origin.

    The result evaluates to ``curve(delta + tau)`` for ``tau > 0`` (with the
    right-limit at ``delta`` becoming the new jump).
    """
    if delta < 0:
        raise ValueError(f"shift must be non-negative, got {delta}")
    if delta == 0.0:
        return curve
    new_jump = float(curve.values(np.asarray([delta]))[0])
    idx = int(np.searchsorted(curve.bps, delta + TIME_MERGE_TOL, side="right") - 1)
    segs = [(0.0, float(curve.slopes[idx]))]
    for bp, sl in zip(curve.bps[idx + 1 :], curve.slopes[idx + 1 :]):
        segs.append((float(bp - delta), float(sl)))
    return ConcaveCurve(new_jump, segs)


def horizontal_deviation(alpha: ConcaveCurve, beta: ConcaveCurve) -> float:
    """Worst-case delay: the largest horizontal gap from arrival to service.

    Returns ``inf`` when the service curve's long-run slope cannot keep up
    with the arrival's.
    """
    if beta.last_slope < alpha.last_slope * (1.0 - 1e-12):
        return math.inf
    if beta.last_slope == 0.0 and alpha.last_slope == 0.0:
        # both flat eventually; compare plateau heights
        if alpha.values(np.asarray([_far_t(alpha)]))[0] > beta.values(
            np.asarray([_far_t(beta)])
        )[0] + 1e-12:
            return math.inf

    def inv_beta(y: float) -> float:
        # smallest t with beta(t) >= y
        if y <= 0.0:
            return 0.0
        if y <= beta.jump0:
            return 0.0
        knots = beta._knots
        k = int(np.searchsorted(knots, y, side="left") - 1)
        k = max(k, 0)
        while k + 1 < len(knots) and knots[k + 1] < y:
            k += 1
        sl = beta.slopes[k]
        if sl == 0.0:
            return math.inf
        return float(beta.bps[k] + (y - knots[k]) / sl)

    # candidate arrival times: the jump (t -> 0+), alpha's own breakpoints,
    # and the points where alpha crosses beta's knot values
    cands = [0.0] + [float(t) for t in alpha.bps if t > 0]
    for y in beta._knots:
        t = _inv_value(alpha, float(y))
        if t is not None and t > 0:
            cands.append(t)
    best = 0.0
    for t in cands:
        y = alpha.jump0 if t == 0.0 else float(alpha.values(np.asarray([t]))[0])
        gap = inv_beta(y) - t
        if gap > best:
            best = gap
    return best


def _far_t(curve: ConcaveCurve) -> float:
    return float(curve.bps[-1]) + 1.0


def _inv_value(curve: ConcaveCurve, y: float):
    """Smallest t > 0 with curve(t) >= y, or None if never reached."""
    if y <= curve.jump0:
        return None
    knots = curve._knots
    k = int(np.searchsorted(knots, y, side="right") - 1)
    k = max(k, 0)
    sl = curve.slopes[k]
    if knots[k] >= y:
        return float(curve.bps[k])
    if sl == 0.0:
        return None
    return float(curve.bps[k] + (y - knots[k]) / sl)


def sup_ratio(curve: ConcaveCurve, origin_shift: float) -> Tuple[float, float]:
    """Supremum of ``S(t)/t`` over ``t > T`` for ``S(t) = curve(t - T)``.

    ``origin_shift`` is ``T``.  Concavity puts the sup at the origin's
    right-limit, at a breakpoint, or in the ``t -> inf`` limit (then the
    reported location is ``inf``).  Ties resolve to the smallest location.
    Returns ``(value, location)``; the value is ``inf`` when the curve jumps
    at an origin of 0.
    """
    T = float(origin_shift)
    if T < 0:
        raise ValueError(f"origin shift must be non-negative, got {T}")
    # right-limit at the origin
    if T > 0:
        best, best_t = curve.jump0 / T, T
    elif curve.jump0 > 0:
        return math.inf, 0.0
    else:
        best, best_t = float(curve.slopes[0]), 0.0
    interior = curve.bps[1:]
    if len(interior):
        vals = curve.values(interior) / (interior + T)
        k = int(np.argmax(vals))
        # smallest attaining t wins ties
        for i in range(len(interior)):
            if vals[i] >= vals[k] * (1.0 - 1e-15):
                k = i
                break
        if vals[k] > best * (1.0 + 1e-15):
            best, best_t = float(vals[k]), float(interior[k] + T)
    tail = curve.last_slope
    if tail > best * (1.0 + 1e-12):
        return tail, math.inf
    return best, best_t

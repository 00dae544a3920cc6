"""Circle arithmetic on T^1 = R/Z: wrapped points, oriented arcs, Diophantine checks.

Everything downstream (fibre maps, critical regions, boundary strips) reduces
to the handful of primitives in this module, so they are kept exact and
vectorised: every operation accepts floats or numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "QpfError",
    "ConfigError",
    "FamilyStructureError",
    "ConvergenceError",
    "wrap",
    "signed_diff",
    "circle_dist",
    "CircleInterval",
    "interval_dist",
    "merge_intervals",
    "union_measure",
    "DiophantineSpec",
    "DiophantineReport",
    "verify_diophantine",
    "GOLDEN_MEAN",
]

GOLDEN_MEAN = (math.sqrt(5.0) - 1.0) / 2.0


class QpfError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(QpfError):
    """Invalid configuration / family definition."""


class FamilyStructureError(QpfError):
    """The family violates a structural assumption (e.g. critical region is not two arcs)."""


class ConvergenceError(QpfError):
    """A numerical iteration failed to converge."""


def wrap(x):
    """Reduce x mod 1 to the canonical representative in [0, 1).

    Works elementwise on arrays.  Non-finite input raises ConfigError.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ConfigError("wrap: non-finite input")
    out = x - np.floor(x)
    # floor can land exactly on 1.0 for values like -1e-17
    out = np.where(out >= 1.0, out - 1.0, out)
    if out.ndim == 0:
        return float(out)
    return out


def signed_diff(a, b):
    """Signed circle difference a - b, reduced to [-1/2, 1/2)."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    out = d - np.floor(d + 0.5)
    if out.ndim == 0:
        return float(out)
    return out


def circle_dist(a, b):
    """Distance on T^1: min(|a-b|, 1-|a-b|), in [0, 1/2]."""
    out = np.abs(signed_diff(a, b))
    if np.ndim(out) == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class CircleInterval:
    """Closed arc on T^1 traversed counter-clockwise from `left` over `length`.

    (left, length) is unambiguous for wrap-around arcs; length == 1 encodes
    the whole circle.
    """

    left: float
    length: float

    def __post_init__(self):
        object.__setattr__(self, "left", wrap(self.left))
        if not (0.0 <= self.length <= 1.0):
            raise ConfigError(f"interval length {self.length} outside [0, 1]")

    @classmethod
    def from_endpoints(cls, left, right) -> "CircleInterval":
        """Arc from left ccw to right; [x, x] is a point, full circle not representable here."""
        return cls(wrap(left), wrap(np.asarray(right, dtype=float) - left))

    @property
    def right(self) -> float:
        return wrap(self.left + self.length)

    @property
    def right_lift(self) -> float:
        """Right endpoint in the lift anchored at `left` (so left <= right_lift <= left+1)."""
        return self.left + self.length

    @property
    def midpoint(self) -> float:
        return wrap(self.left + 0.5 * self.length)

    def contains(self, x, tol: float = 0.0):
        """Membership test, optionally padded by tol on both sides."""
        off = wrap(np.asarray(x, dtype=float) - self.left)
        inside = (off <= self.length + tol) | (off >= 1.0 - tol)
        if np.ndim(inside) == 0:
            return bool(inside)
        return inside

    def shifted(self, c: float) -> "CircleInterval":
        return CircleInterval(self.left + c, self.length)

    def ball(self, r: float) -> "CircleInterval":
        """Closed r-neighbourhood B_r of the arc."""
        if self.length + 2.0 * r >= 1.0:
            return CircleInterval(0.0, 1.0)
        return CircleInterval(self.left - r, self.length + 2.0 * r)

    def intersects(self, other: "CircleInterval") -> bool:
        return interval_dist(self, other) == 0.0

    def contains_interval(self, other: "CircleInterval", tol: float = 0.0) -> bool:
        if self.length >= 1.0:
            return True
        if other.length > self.length + 2 * tol:
            return False
        off = wrap(other.left - self.left)
        if off > 0.5 and off >= 1.0 - tol:
            off = off - 1.0  # other.left just below self.left
        return off <= self.length - other.length + tol

    def complement(self) -> "CircleInterval":
        """Closure of the complementary arc."""
        return CircleInterval(self.right, 1.0 - self.length)


def interval_dist(I: CircleInterval, J: CircleInterval) -> float:
    """inf over a in I, b in J of circle_dist(a, b); 0 iff the closed arcs meet."""
    if I.length >= 1.0 or J.length >= 1.0:
        return 0.0
    g1 = wrap(J.left - I.left - I.length)  # ccw gap from end of I to start of J
    g2 = wrap(I.left - J.left - J.length)
    if g1 + J.length >= 1.0 - 1e-15 or g2 + I.length >= 1.0 - 1e-15:
        return 0.0
    return float(min(g1, g2))


def merge_intervals(intervals) -> list[CircleInterval]:
    """Union of closed arcs as a disjoint list (sorted by left endpoint)."""
    ivs = [iv for iv in intervals if iv.length > 0 or True]
    if not ivs:
        return []
    if any(iv.length >= 1.0 for iv in ivs):
        return [CircleInterval(0.0, 1.0)]
    events = sorted(ivs, key=lambda iv: iv.left)
    merged: list[list[float]] = []  # [left, right_lift] in lift coords
    for iv in events:
        lo, hi = iv.left, iv.left + iv.length
        if merged and lo <= merged[-1][1] + 1e-15:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    # wrap-around: last may swallow first
    if len(merged) > 1 and merged[-1][1] >= merged[0][0] + 1.0 - 1e-15:
        merged[0][0] = merged[-1][0] - 1.0
        merged[0][1] = max(merged[0][1], merged[-1][1] - 1.0)
        merged.pop()
    out = []
    for lo, hi in merged:
        if hi - lo >= 1.0:
            return [CircleInterval(0.0, 1.0)]
        out.append(CircleInterval(lo, hi - lo))
    return out


def union_measure(intervals) -> float:
    return float(sum(iv.length for iv in merge_intervals(intervals)))


@dataclass(frozen=True)
class DiophantineSpec:
    """Base rotation omega with claimed Diophantine constants gamma, nu."""

    omega: float
    gamma: float = 0.38
    nu: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "omega", wrap(self.omega))
        if self.gamma <= 0:
            raise ConfigError("gamma must be positive")
        if self.nu < 1:
            raise ConfigError("nu must be >= 1")

    @classmethod
    def golden(cls, gamma: float = 0.38, nu: float = 1.0) -> "DiophantineSpec":
        return cls(GOLDEN_MEAN, gamma, nu)


@dataclass(frozen=True)
class DiophantineReport:
    ok: bool
    q_check: int
    worst_n: int
    worst_dist: float
    worst_margin: float  # d(n*omega,0) * n^nu - gamma  (negative => violated)


def verify_diophantine(spec: DiophantineSpec, q_check: int) -> DiophantineReport:
    """Check d(n*omega, 0) > gamma * |n|^-nu for all 0 < |n| <= q_check.

    Finite-horizon only; reports the n minimising d(n*omega,0) * n^nu.
    By symmetry d(-n w, 0) = d(n w, 0), so positive n suffice.
    """
    if q_check < 1:
        raise ConfigError("q_check must be >= 1")
    worst_n, worst_d, worst_m = 0, np.inf, np.inf
    chunk = 1_000_000
    for start in range(1, q_check + 1, chunk):
        n = np.arange(start, min(start + chunk, q_check + 1), dtype=float)
        d = np.abs(signed_diff(n * spec.omega, 0.0))
        m = d * n**spec.nu - spec.gamma
        i = int(np.argmin(m))
        if m[i] < worst_m:
            worst_m = float(m[i])
            worst_n = int(n[i])
            worst_d = float(d[i])
    return DiophantineReport(
        ok=bool(worst_m > 0.0),
        q_check=q_check,
        worst_n=worst_n,
        worst_dist=worst_d,
        worst_margin=worst_m,
    )

"""Fibred rotation numbers, devil's-staircase sweeps, mode-locking plateaus.

The fibred rotation number rho(f) = lim (F_theta^n(x) - x)/n mod 1 exists and
is independent of the start, so it is estimated by averaging finite-orbit
displacement rates over several random starts; the spread across starts plus
the O(1/n) truncation term gives a (heuristic, non-rigorous) error bound that
is carried through all downstream bookkeeping.

Sweeps run all (tau, start) lanes simultaneously through the vectorised fibre
lift, so a 10^3-point staircase at 10^5 iterates is a few seconds of numpy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .circle import CircleInterval, ConfigError, FamilyStructureError, circle_dist, wrap
from .families import QpfFamily, QpfMap

__all__ = [
    "RotationEstimate",
    "Staircase",
    "Plateau",
    "ModuleWitness",
    "estimate_rotation_number",
    "sweep_staircase",
    "detect_plateaus",
    "refine_plateau_edge",
    "module_membership",
    "count_monotonicity_violations",
]


@dataclass(frozen=True)
class RotationEstimate:
    """Finite-orbit rotation number: value mod 1, unwrapped rate, and error bookkeeping."""

    rho: float
    rho_unwrapped: float
    n_iter: int
    spread: float
    error_bound: float  # heuristic: spread + 2/n_iter


@dataclass
class Staircase:
    tau_grid: np.ndarray
    estimates: list[RotationEstimate]
    meta: dict = field(default_factory=dict)

    def rho_unwrapped(self) -> np.ndarray:
        return np.array([e.rho_unwrapped for e in self.estimates])

    def error_bounds(self) -> np.ndarray:
        return np.array([e.error_bound for e in self.estimates])

    @property
    def grid_spacing(self) -> float:
        return float(np.min(np.diff(self.tau_grid))) if len(self.tau_grid) > 1 else 0.0


@dataclass(frozen=True)
class Plateau:
    interval: CircleInterval  # tau-arc of constant rotation number
    rho_locked: float  # mod 1
    edge_tolerance: float  # coarse-grid spacing the edges are known to
    first_index: int
    last_index: int


@dataclass(frozen=True)
class ModuleWitness:
    """rho ~ p1/q1 + (p2/q2) * omega mod 1."""

    p1: int
    q1: int
    p2: int
    q2: int
    value: float
    error: float


def _displacement_rates(family: QpfFamily, taus, n_iter: int, burn_in: int, n_starts: int, seed: int) -> np.ndarray:
    """Per-(tau, start) displacement rates (F^n(x)-x)/n after burn_in, shape (len(taus), n_starts)."""
    taus = np.asarray(taus, dtype=float)
    ntau = taus.size
    rng = np.random.default_rng(seed)
    starts = rng.uniform(0.0, 1.0, size=(2, ntau, n_starts))
    th = starts[0].reshape(-1)
    x = starts[1].reshape(-1).copy()
    tau_lane = np.repeat(taus, n_starts)
    omega = family.omega.omega
    fib = family.fibre
    for _ in range(burn_in):
        x = fib.lift(th, x, tau_lane)
        th += omega
        th -= np.floor(th)
    x_ref = x.copy()
    for _ in range(n_iter):
        x = fib.lift(th, x, tau_lane)
        th += omega
        th -= np.floor(th)
    return ((x - x_ref) / n_iter).reshape(ntau, n_starts)


def _estimate_from_rates(rates: np.ndarray, n_iter: int) -> RotationEstimate:
    mean = float(np.mean(rates))
    spread = float(np.max(rates) - np.min(rates))
    return RotationEstimate(
        rho=wrap(mean),
        rho_unwrapped=mean,
        n_iter=n_iter,
        spread=spread,
        error_bound=spread + 2.0 / n_iter,
    )


def estimate_rotation_number(
    m: QpfMap, n_iter: int, burn_in: int | None = None, n_starts: int = 3, seed: int = 0
) -> RotationEstimate:
    """Estimate rho(f_tau) from n_starts random orbits of length n_iter (after burn_in)."""
    if n_iter < 1000:
        raise ConfigError("n_iter must be >= 1e3")
    if n_starts < 1:
        raise ConfigError("n_starts must be >= 1")
    if burn_in is None:
        burn_in = min(1000, n_iter // 10)
    rates = _displacement_rates(m.family, [m.tau], n_iter, burn_in, n_starts, seed)
    return _estimate_from_rates(rates, n_iter)


def sweep_staircase(
    family: QpfFamily,
    tau_grid,
    n_iter: int = 100_000,
    burn_in: int | None = None,
    n_starts: int = 3,
    seed: int = 0,
) -> Staircase:
    """Estimate rho over a tau grid; deterministic given the seed, lanes all advance together."""
    tau_grid = np.asarray(tau_grid, dtype=float)
    if tau_grid.size < 2:
        raise ConfigError("tau grid needs at least 2 points")
    if burn_in is None:
        burn_in = min(1000, n_iter // 10)
    rates = _displacement_rates(family, tau_grid, n_iter, burn_in, n_starts, seed)
    ests = [_estimate_from_rates(rates[i : i + 1], n_iter) for i in range(tau_grid.size)]
    meta = {"n_iter": n_iter, "burn_in": burn_in, "n_starts": n_starts, "seed": seed}
    return Staircase(tau_grid=tau_grid, estimates=ests, meta=meta)


def detect_plateaus(st: Staircase, flat_tol: float | None = None) -> list[Plateau]:
    """Maximal runs of grid points whose unwrapped rho values pairwise differ <= flat_tol.

    Runs of length 1 are discarded; the run's median rho (mod 1) is reported.
    Default flat_tol = 10/n_iter, below the estimator's resolving power.
    """
    if np.any(np.diff(st.tau_grid) <= 0):
        raise ConfigError("staircase must be sorted by tau")
    if flat_tol is None:
        flat_tol = 10.0 / st.meta.get("n_iter", st.estimates[0].n_iter)
    rho = st.rho_unwrapped()
    spacing = st.grid_spacing
    plateaus: list[Plateau] = []
    i = 0
    n = rho.size
    while i < n:
        j = i
        lo = hi = rho[i]
        while j + 1 < n:
            nlo, nhi = min(lo, rho[j + 1]), max(hi, rho[j + 1])
            if nhi - nlo <= flat_tol:
                lo, hi = nlo, nhi
                j += 1
            else:
                break
        if j > i:
            tau_l, tau_r = st.tau_grid[i], st.tau_grid[j]
            plateaus.append(
                Plateau(
                    interval=CircleInterval(wrap(tau_l), tau_r - tau_l),
                    rho_locked=wrap(float(np.median(rho[i : j + 1]))),
                    edge_tolerance=spacing,
                    first_index=i,
                    last_index=j,
                )
            )
        i = j + 1
    return plateaus


def refine_plateau_edge(
    family: QpfFamily,
    pl: Plateau,
    side: str,
    bisect_tol: float,
    n_iter: int = 100_000,
    burn_in: int | None = None,
    n_starts: int = 3,
    seed: int = 0,
    lock_tol: float | None = None,
) -> float:
    """Bisect the plateau edge in tau; returns the last tau still locked to pl.rho_locked.

    Valid under monotone tau-dependence (A8); families failing the d_tau f > 0
    spot check are rejected.  Raises FamilyStructureError if the plateau's own
    interior sample is not locked (false plateau).
    """
    if side not in ("left", "right"):
        raise ConfigError("side must be 'left' or 'right'")
    if not family.monotone_in_tau():
        raise FamilyStructureError("refinement disabled: family fails the monotonicity condition (A8)")
    if lock_tol is None:
        lock_tol = max(10.0 / n_iter, 1e-8)

    def locked(tau: float) -> bool:
        est = estimate_rotation_number(family.map(wrap(tau)), n_iter, burn_in, n_starts, seed)
        return circle_dist(est.rho, pl.rho_locked) <= lock_tol

    # work in unwrapped tau coordinates around the plateau
    t_in = pl.interval.left + (pl.interval.length if side == "right" else 0.0)
    step = pl.edge_tolerance if pl.edge_tolerance > 0 else bisect_tol
    t_out = t_in + step if side == "right" else t_in - step
    if not locked(t_in):
        raise FamilyStructureError("false plateau: rho differs at the plateau boundary sample")
    lo, hi = (t_in, t_out) if side == "right" else (t_out, t_in)
    # invariant: the t_in side stays locked, the t_out side unlocked (or unknown until it unlocks)
    for _ in range(200):
        if abs(hi - lo) <= bisect_tol:
            break
        mid = 0.5 * (lo + hi)
        if locked(mid):
            if side == "right":
                lo = mid
            else:
                hi = mid
        else:
            if side == "right":
                hi = mid
            else:
                lo = mid
    return wrap(lo if side == "right" else hi)


def count_monotonicity_violations(st: Staircase) -> int:
    """Decreases of unwrapped rho beyond the summed error bounds of the two estimates."""
    rho = st.rho_unwrapped()
    err = st.error_bounds()
    drops = rho[1:] - rho[:-1]
    allowance = err[1:] + err[:-1]
    return int(np.sum(drops < -allowance))


def module_membership(
    rho: float, omega: float, max_denominator: int = 8, tol: float = 1e-4
) -> ModuleWitness | None:
    """Search rho ~ p1/q1 + (p2/q2)*omega (mod 1) with q_i <= max_denominator, |p2| <= max(q2, max_denominator).

    Returns the smallest-complexity witness (max(q1, q2), then |p1|+|p2|) within
    tol, or None.  Mode-locked rotation numbers take values in Q + omega*Q, so a
    hit is expected on plateaus.
    """
    if max_denominator < 1:
        raise ConfigError("max_denominator must be >= 1")
    rho = wrap(rho)
    candidates = []
    for q2 in range(1, max_denominator + 1):
        for p2 in range(-max_denominator, max_denominator + 1):
            if math.gcd(abs(p2), q2) != 1 and not (p2 == 0 and q2 == 1):
                continue
            if p2 == 0 and q2 != 1:
                continue
            base = p2 / q2 * omega
            for q1 in range(1, max_denominator + 1):
                for p1 in range(0, q1):
                    if math.gcd(p1, q1) != 1 and not (p1 == 0 and q1 == 1):
                        continue
                    if p1 == 0 and q1 != 1:
                        continue
                    val = wrap(p1 / q1 + base)
                    err = circle_dist(rho, val)
                    if err <= tol:
                        candidates.append((max(q1, q2), abs(p1) + abs(p2), ModuleWitness(p1, q1, p2, q2, val, err)))
    if not candidates:
        return None
    candidates.sort(key=lambda t: (t[0], t[1], t[2].error))
    return candidates[0][2]

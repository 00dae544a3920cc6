"""Multiscale critical-set machinery: assumption checks, critical regions, recurrence conditions.

The construction follows the recursive scheme

    A_n = (I_n - (M_n-1) w) x C,   B_n = (I_n + (M_n+1) w) x E,
    C_n = f^(M_n - 1)(A_n)  ^  f^(-(M_n+1))(B_n),   I_{n+1} = int(pi_1(C_n)),

with per-level slow-recurrence conditions (X)_n / (Y)_n on the critical
regions, occupancy counts P/Q, and the exceptional sets V/W.  Monotone fibres
make interval endpoints exact carriers of all the set information used here,
so critical sets are computed by endpoint iteration over adaptive theta grids
with bisection-refined component boundaries.

Time scales explode super-exponentially in the paper's regime; schedules here
come in a conforming "auto" flavour and a user-capped "desk" flavour that is
explicitly labelled non-conforming but keeps every per-level inequality
checkable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .circle import (
    CircleInterval,
    ConfigError,
    FamilyStructureError,
    circle_dist,
    interval_dist,
    merge_intervals,
    signed_diff,
    union_measure,
    wrap,
)
from .families import QpfFamily, QpfMap

__all__ = [
    "MultiscaleSchedule",
    "CriticalRegion",
    "MultiscaleState",
    "GridSpec",
    "AssumptionReport",
    "ConditionResult",
    "verify_assumptions",
    "detect_I0",
    "fibre_interval_image",
    "forward_interval_images",
    "backward_interval_images",
    "build_critical_sets",
    "check_recurrence",
    "RecurrenceReport",
    "exceptional_sets",
    "ExceptionalSets",
    "occupancy_counts",
    "OccupancyTable",
    "sample_b1_starts",
    "sample_b2_starts",
    "check_occupancy_forward",
    "check_occupancy_backward",
]


# ---------------------------------------------------------------------------
# schedules


@dataclass
class MultiscaleSchedule:
    """Time scales M_j, shift counts K_j and interval bounds eps_j for the recursion.

    conforming=True means M and eps were generated inside the ranges
        M_{j+1} in [alpha^(M_j/2pq), 2 alpha^(M_j/pq)],
        eps_{j+1} in [2 alpha^(-M_j/p)/s, 2 alpha^(-M_j/2p)/s],
    with M_0 = 3, K_j = 2^(j+t+2), q = max(8, 4 nu).  Desk schedules cap the
    M_j by hand (the ranges above are astronomically out of reach at desk
    scale) and are labelled non-conforming in every report.
    """

    M: list[int]
    eps: list[float]
    K: list[int]
    t: int
    q: float
    alpha: float
    p: float
    s: float
    conforming: bool

    def __post_init__(self):
        if len(self.M) != len(self.eps) or len(self.K) < len(self.M):
            raise ConfigError("schedule arrays must align (K at least as long as M)")
        if any(m < 1 for m in self.M):
            raise ConfigError("time scales must be positive")
        if any(e <= 0 for e in self.eps):
            raise ConfigError("eps must be positive")
        if 2.0 ** (-self.t) > math.log((self.p**2 + 2.0) / (self.p**2 + 1.0)) + 1e-15:
            raise ConfigError("t violates 2^-t <= log((p^2+2)/(p^2+1))")
        for n in range(1, len(self.M) + 1):
            b = self.beta(n)
            if (2.0 / self.p) * b - (1.0 - b) * self.p < 1.0 / self.p - 1e-12:
                raise ConfigError(f"beta_{n} violates the occupancy-exponent inequality")

    def beta(self, n: int) -> float:
        out = 1.0
        for j in range(n):
            out *= 1.0 - 1.0 / self.K[j]
        return out

    @property
    def n_levels(self) -> int:
        return len(self.M)

    @staticmethod
    def _t_for(p: float, t: int | None) -> int:
        t_min = max(4, math.ceil(-math.log2(math.log((p**2 + 2.0) / (p**2 + 1.0)))))
        return t_min if t is None else max(t, t_min)

    @classmethod
    def auto(
        cls,
        alpha: float,
        p: float,
        nu: float,
        eps0: float,
        s: float,
        n_levels: int,
        t: int | None = None,
    ) -> "MultiscaleSchedule":
        """Conforming schedule with M_0 = 3; raises if alpha is too small to grow the M_j."""
        t = cls._t_for(p, t)
        q = max(8.0, 4.0 * nu)
        M = [3]
        eps = [float(eps0)]
        for j in range(n_levels - 1):
            lo = alpha ** (M[j] / (2 * p * q))
            hi = 2.0 * alpha ** (M[j] / (p * q))
            nxt = int(math.floor(hi))
            if nxt < max(math.ceil(lo), M[j] + 1):
                raise ConfigError(
                    f"auto schedule infeasible at level {j + 1}: range [{lo:.3g}, {hi:.3g}] "
                    f"cannot exceed M_{j} = {M[j]}; use a desk schedule"
                )
            M.append(nxt)
            eps.append(2.0 * alpha ** (-0.75 * M[j] / p) / s)  # geometric midpoint of the allowed range
        K = [2 ** (j + t + 2) for j in range(n_levels)]
        return cls(M=M, eps=eps, K=K, t=t, q=q, alpha=alpha, p=p, s=s, conforming=True)

    @classmethod
    def desk(
        cls,
        M,
        eps,
        alpha: float,
        p: float,
        s: float,
        nu: float = 1.0,
        t: int | None = None,
    ) -> "MultiscaleSchedule":
        t = cls._t_for(p, t)
        q = max(8.0, 4.0 * nu)
        K = [2 ** (j + t + 2) for j in range(len(M))]
        return cls(M=list(M), eps=list(eps), K=K, t=t, q=q, alpha=alpha, p=p, s=s, conforming=False)

    def to_dict(self) -> dict:
        return {
            "M": list(self.M),
            "eps": list(self.eps),
            "K": list(self.K[: len(self.M)]),
            "t": self.t,
            "q": self.q,
            "alpha": self.alpha,
            "p": self.p,
            "s": self.s,
            "conforming": self.conforming,
            "beta": [self.beta(n) for n in range(len(self.M) + 1)],
        }


# ---------------------------------------------------------------------------
# critical regions


@dataclass(frozen=True)
class CriticalRegion:
    """Level-n critical region: two disjoint open arcs I1 (downward slope) and I2 (upward)."""

    I1: CircleInterval
    I2: CircleInterval
    level: int

    def __post_init__(self):
        if interval_dist(self.I1, self.I2) <= 0.0:
            raise FamilyStructureError(f"critical region components overlap at level {self.level}")

    def components(self) -> tuple[CircleInterval, CircleInterval]:
        return (self.I1, self.I2)

    def union(self) -> list[CircleInterval]:
        return [self.I1, self.I2]

    def contains(self, theta) -> np.ndarray:
        return np.asarray(self.I1.contains(theta)) | np.asarray(self.I2.contains(theta))

    @property
    def max_length(self) -> float:
        return max(self.I1.length, self.I2.length)


@dataclass(frozen=True)
class GridSpec:
    coarse: int = 4096
    refine_tol: float = 1e-10
    margin_frac: float = 0.05


def _bisect_edge(pred, t_true: float, t_false: float, tol: float) -> float:
    """Edge of {pred} between a true and a false sample, by bisection in lift coords."""
    for _ in range(200):
        if abs(t_false - t_true) <= tol:
            break
        mid = 0.5 * (t_true + t_false)
        if pred(mid):
            t_true = mid
        else:
            t_false = mid
    return 0.5 * (t_true + t_false)


def _runs_circular(mask: np.ndarray) -> list[tuple[int, int]]:
    """Index runs of True in a circular mask, as (start, stop_inclusive) pairs."""
    n = mask.size
    if mask.all():
        return [(0, n - 1)]
    if not mask.any():
        return []
    # rotate so position 0 is False, then find linear runs
    first_false = int(np.argmin(mask))
    rolled = np.roll(mask, -first_false)
    edges = np.diff(rolled.astype(int))
    starts = list(np.nonzero(edges == 1)[0] + 1)
    stops = list(np.nonzero(edges == -1)[0])
    runs = []
    for s in starts:
        t = next((x for x in stops if x >= s), n - 1)
        runs.append(((s + first_false) % n, (t + first_false) % n))
    return runs


def detect_I0(m: QpfMap, grid: GridSpec = GridSpec()) -> CriticalRegion:
    """The level-0 critical region: {theta : f_theta(cl(T^1 \\ E)) not inside int(C)}.

    Tracks the image arc of the complement of E over a coarse theta grid and
    refines each component boundary by bisection.  Exactly two components are
    required; anything else is a structural failure of (A1) for this map.
    """
    consts = m.family.constants
    if consts is None or consts.E is None or consts.C is None:
        raise ConfigError("detect_I0 needs family constants with E and C set")
    E, C = consts.E, consts.C
    comp_left = E.right  # complement of E, as an arc of length 1-|E|
    comp_len = 1.0 - E.length

    def good(thetas) -> np.ndarray:
        thetas = np.asarray(thetas, dtype=float)
        ya = m.lift(thetas, comp_left)
        yb = m.lift(thetas, comp_left + comp_len)
        off = wrap(ya - C.left)
        return (off > 0.0) & (off + (yb - ya) < C.length)

    thetas = np.linspace(0.0, 1.0, grid.coarse, endpoint=False)
    bad = ~np.asarray(good(thetas))
    if bad.all():
        raise FamilyStructureError("(A1) fails everywhere: the violating set is all of T^1")
    if not bad.any():
        raise FamilyStructureError("(A1) violating set is empty: no critical region (map uniformly trapping)")
    runs = _runs_circular(bad)
    if len(runs) != 2:
        raise FamilyStructureError(f"(A1) violating set has {len(runs)} components, expected 2")
    h = 1.0 / grid.coarse
    comps = []
    for s_idx, t_idx in runs:
        left_out = thetas[s_idx] - h  # last good sample before the run (lift coords)
        left_in = thetas[s_idx]
        right_in = thetas[s_idx] + (t_idx - s_idx) % grid.coarse * h
        right_out = right_in + h
        bad_pred = lambda t: not bool(good(np.array([wrap(t)]))[0])
        left = _bisect_edge(bad_pred, left_in, left_out, grid.refine_tol)
        right = _bisect_edge(bad_pred, right_in, right_out, grid.refine_tol)
        comps.append(CircleInterval(wrap(left), right - left))
    # label by crossing direction: I1 carries d_theta f < 0 (A7)
    slopes = []
    for c in comps:
        xg = np.linspace(0.0, 1.0, 17, endpoint=False)
        slopes.append(float(np.mean(m.derivatives(np.full_like(xg, c.midpoint), xg)[1])))
    if slopes[0] < 0 <= slopes[1]:
        I1, I2 = comps
    elif slopes[1] < 0 <= slopes[0]:
        I2, I1 = comps
    else:
        # ambiguous slopes: keep grid order but flag via exception only when both same sign
        raise FamilyStructureError(f"(A7) slope signs do not separate the components: {slopes}")
    return CriticalRegion(I1=I1, I2=I2, level=0)


# ---------------------------------------------------------------------------
# interval images by endpoint iteration


def forward_interval_images(m: QpfMap, thetas, lo, hi, n: int):
    """Iterate fibre-interval endpoints n steps forward from base angles `thetas` (lift coords)."""
    thetas = np.asarray(thetas, dtype=float).copy()
    lo = np.broadcast_to(np.asarray(lo, dtype=float), thetas.shape).astype(float).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), thetas.shape).astype(float).copy()
    for _ in range(n):
        lo = np.asarray(m.lift(thetas, lo), dtype=float)
        hi = np.asarray(m.lift(thetas, hi), dtype=float)
        thetas += m.omega
        thetas -= np.floor(thetas)
    return lo, hi


def backward_interval_images(m: QpfMap, thetas, lo, hi, n: int):
    """Iterate fibre-interval endpoints n steps backward (order is preserved by monotonicity)."""
    thetas = np.asarray(thetas, dtype=float).copy()
    lo = np.broadcast_to(np.asarray(lo, dtype=float), thetas.shape).astype(float).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), thetas.shape).astype(float).copy()
    for _ in range(n):
        thetas -= m.omega
        thetas -= np.floor(thetas)
        lo = np.asarray(m.inverse_lift(thetas, lo), dtype=float)
        hi = np.asarray(m.inverse_lift(thetas, hi), dtype=float)
    return lo, hi


def fibre_interval_image(m: QpfMap, theta: float, J: CircleInterval, n: int) -> CircleInterval:
    """Image of the fibre interval {theta} x J under f^n; base advances to theta + n*omega.

    Raises FamilyStructureError when the image length saturates at 1 (endpoint
    iteration is then meaningless).
    """
    th = np.array([float(theta)])
    lo0, hi0 = J.left, J.left + J.length
    if n >= 0:
        lo, hi = forward_interval_images(m, th, lo0, hi0, n)
    else:
        lo, hi = backward_interval_images(m, th, lo0, hi0, -n)
    length = float(hi[0] - lo[0])
    if length >= 1.0 - 1e-12:
        raise FamilyStructureError("fibre interval image wraps the whole circle")
    return CircleInterval(wrap(float(lo[0])), length)


# ---------------------------------------------------------------------------
# the critical-set recursion


@dataclass
class LevelStatus:
    empty: bool = False
    geometry_breakdown: bool = False
    n_components: int = 2
    nesting_ok: bool | None = None
    nesting_margin: float | None = None
    X_holds: bool | None = None
    Y_holds: bool | None = None
    Xprime_holds: bool | None = None
    Yprime_holds: bool | None = None
    Ydoubleprime_holds: bool | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class MultiscaleState:
    m: QpfMap
    schedule: MultiscaleSchedule
    regions: list[CriticalRegion]
    status: list[LevelStatus]

    @property
    def tau(self) -> float:
        return self.m.tau

    @property
    def top_level(self) -> int:
        return len(self.regions) - 1

    def region(self, n: int) -> CriticalRegion:
        return self.regions[n]


def _intersect_nonempty(la, lena, lb, lenb):
    """Vectorised: do closed arcs (la, lena) and (lb, lenb) intersect?"""
    return (wrap(lb - la) <= lena) | (wrap(la - lb) <= lenb)


def _component_runs_linear(mask: np.ndarray) -> list[tuple[int, int]]:
    if not mask.any():
        return []
    edges = np.diff(mask.astype(int))
    starts = list(np.nonzero(edges == 1)[0] + 1)
    stops = list(np.nonzero(edges == -1)[0])
    if mask[0]:
        starts.insert(0, 0)
    if mask[-1]:
        stops.append(mask.size - 1)
    return list(zip(starts, stops))


def _next_level_region(
    m: QpfMap, parent: CircleInterval, Mn: int, E: CircleInterval, C: CircleInterval, grid: GridSpec
) -> list[CircleInterval]:
    """Children of one parent component: {theta in parent : Fwd(theta) ^ Bwd(theta) != 0}."""
    pad = grid.margin_frac * parent.length
    left = parent.left - pad
    span = parent.length + 2 * pad
    thetas_lift = np.linspace(left, left + span, grid.coarse)
    thetas = wrap(thetas_lift)

    def predicate(th):
        th = np.atleast_1d(np.asarray(th, dtype=float))
        flo, fhi = forward_interval_images(m, wrap(th - (Mn - 1) * m.omega), C.left, C.left + C.length, Mn - 1)
        blo, bhi = backward_interval_images(m, wrap(th + (Mn + 1) * m.omega), E.left, E.left + E.length, Mn + 1)
        return _intersect_nonempty(wrap(flo), fhi - flo, wrap(blo), bhi - blo)

    mask = predicate(thetas)
    runs = _component_runs_linear(mask)
    out = []
    h = span / (grid.coarse - 1)
    for s_idx, t_idx in runs:
        in_l, in_r = thetas_lift[s_idx], thetas_lift[t_idx]
        scalar_pred = lambda t: bool(predicate(np.array([wrap(t)]))[0])
        left_edge = _bisect_edge(scalar_pred, in_l, in_l - h, grid.refine_tol) if s_idx > 0 else in_l
        right_edge = _bisect_edge(scalar_pred, in_r, in_r + h, grid.refine_tol) if t_idx < mask.size - 1 else in_r
        out.append(CircleInterval(wrap(left_edge), right_edge - left_edge))
    return out


def build_critical_sets(
    m: QpfMap,
    schedule: MultiscaleSchedule,
    n_max: int,
    grid: GridSpec = GridSpec(),
    I0: CriticalRegion | None = None,
) -> MultiscaleState:
    """Run the critical-set recursion up to level n_max (regions I_0 .. I_{n_max}).

    Each level's region is found by scanning a refined theta grid over the
    parent components; component boundaries are bisection-refined to
    grid.refine_tol.  An empty intersection at level n records C_n = empty and
    stops; a component count other than one-per-parent records a geometry
    breakdown and stops.  Recurrence flags and the nesting check

        B_(9 eps_{n+1})(I_{n+1}) inside I_n

    are filled in per level.
    """
    if n_max + 1 > schedule.n_levels:
        raise ConfigError(f"schedule has {schedule.n_levels} levels, cannot build to {n_max}")
    consts = m.family.constants
    if consts is None or consts.E is None or consts.C is None:
        raise ConfigError("build_critical_sets needs family constants with E and C")
    regions = [I0 if I0 is not None else detect_I0(m, grid)]
    status = [LevelStatus()]
    for n in range(n_max):
        Mn = schedule.M[n]
        st = LevelStatus()
        children: dict[int, list[CircleInterval]] = {}
        for idx, parent in enumerate(regions[n].components()):
            children[idx] = _next_level_region(m, parent, Mn, consts.E, consts.C, grid)
        counts = (len(children[0]), len(children[1]))
        total = counts[0] + counts[1]
        if total == 0:
            st.empty = True
            st.n_components = 0
            status.append(st)
            break
        if counts != (1, 1):
            st.geometry_breakdown = True
            st.n_components = total
            status.append(st)
            break
        child = CriticalRegion(I1=children[0][0], I2=children[1][0], level=n + 1)
        eps_next = schedule.eps[n + 1] if n + 1 < len(schedule.eps) else None
        if eps_next is not None:
            margins = []
            for ci, pi in zip(child.components(), regions[n].components()):
                ball = ci.ball(9.0 * eps_next)
                margins.append(pi.length - ball.length - 2.0 * abs(signed_diff(ball.midpoint, pi.midpoint)))
                st.nesting_ok = bool(
                    (st.nesting_ok is None or st.nesting_ok) and pi.contains_interval(ball)
                )
            st.nesting_margin = float(min(margins))
        st.n_components = 2
        status.append(st)
        regions.append(child)
    state = MultiscaleState(m=m, schedule=schedule, regions=regions, status=status)
    _fill_recurrence_flags(state)
    return state


def _fill_recurrence_flags(state: MultiscaleState) -> None:
    for variant, attr in (
        ("X", "X_holds"),
        ("X'", "Xprime_holds"),
        ("Y", "Y_holds"),
        ("Y'", "Yprime_holds"),
        ("Y''", "Ydoubleprime_holds"),
    ):
        rep = check_recurrence(state, variant)
        for n, st in enumerate(state.status[: len(rep.per_level)]):
            setattr(st, attr, rep.per_level[n])


# ---------------------------------------------------------------------------
# slow-recurrence conditions


@dataclass
class RecurrenceReport:
    variant: str
    per_level: list[bool]
    margins: list[float]  # raw min distance minus required margin, per level
    worst_witness: tuple | None  # (j, l, comp_i, comp_j)


def _min_shift_distance(A: list[CircleInterval], B: list[CircleInterval], shifts: np.ndarray, omega: float):
    """min over l in shifts, a in A, b in B of d(a, b + l*omega), with argmin."""
    best = (np.inf, None)
    for ia, a in enumerate(A):
        for ib, b in enumerate(B):
            lefts = wrap(b.left + shifts * omega)
            g1 = wrap(lefts - a.left - a.length)
            g2 = wrap(a.left - lefts - b.length)
            inter = (wrap(lefts - a.left) <= a.length) | (wrap(a.left - lefts) <= b.length)
            d = np.where(inter, 0.0, np.minimum(g1, g2))
            i = int(np.argmin(d))
            if d[i] < best[0]:
                best = (float(d[i]), (int(shifts[i]), ia, ib))
    return best


def check_recurrence(state: MultiscaleState, variant: str) -> RecurrenceReport:
    """Evaluate (X)_n, (X')_n, (Y)_n, (Y')_n or (Y'')_n for every built level n.

    X-variants: d(I_j, X_j) > {3, 9} eps_j for all j <= n, with
    X_j = union of I_j + l*omega, l = 1..2 K_j M_j.
    Y-variants: d((I_j - (M_j-1)w) u (I_j + (M_j+1)w), Y_{j-1}) > {0, 2 eps_{j-1}, eps_{j-1}}
    for all j = 1..n, with Y_{j-1} = union over j' < j, l = -M_j'..M_j'+2 of I_j' + l*omega.
    """
    sched = state.schedule
    omega = state.m.omega
    regions = state.regions
    n_top = len(regions) - 1
    if variant in ("X", "X'"):
        factor = 3.0 if variant == "X" else 9.0
        level_margin = []
        witness = None
        worst = np.inf
        for j in range(n_top + 1):
            shifts = np.arange(1, 2 * sched.K[j] * sched.M[j] + 1)
            comps = regions[j].union()
            d, wit = _min_shift_distance(comps, comps, shifts, omega)
            margin = d - factor * sched.eps[j]
            level_margin.append(margin)
            if margin < worst:
                worst = margin
                witness = (j,) + (wit if wit else ())
        per_level = [bool(all(mg > 0 for mg in level_margin[: n + 1])) for n in range(n_top + 1)]
        return RecurrenceReport(variant, per_level, level_margin, witness)
    if variant in ("Y", "Y'", "Y''"):
        req = {"Y": lambda j: 0.0, "Y'": lambda j: 2.0 * sched.eps[j - 1], "Y''": lambda j: sched.eps[j - 1]}[variant]
        level_margin = [np.inf]  # j = 0 is vacuous
        witness = None
        worst = np.inf
        for j in range(1, n_top + 1):
            Mj = sched.M[j]
            U = [c.shifted(-(Mj - 1) * omega) for c in regions[j].components()] + [
                c.shifted((Mj + 1) * omega) for c in regions[j].components()
            ]
            d_min = np.inf
            wit = None
            for jp in range(j):
                shifts = np.arange(-sched.M[jp], sched.M[jp] + 3)
                d, w = _min_shift_distance(U, regions[jp].union(), shifts, omega)
                if d < d_min:
                    d_min = d
                    wit = (jp,) + (w if w else ())
            margin = d_min - req(j)
            level_margin.append(margin)
            if margin < worst:
                worst = margin
                witness = (j,) + (wit if wit else ())
        per_level = [bool(all(mg > 0 for mg in level_margin[1 : n + 1])) for n in range(n_top + 1)]
        return RecurrenceReport(variant, per_level, level_margin, witness)
    raise ConfigError(f"unknown recurrence variant {variant!r}")


# ---------------------------------------------------------------------------
# exceptional sets


@dataclass
class ExceptionalSets:
    V_minus: list[CircleInterval]
    W_plus: list[CircleInterval]
    V_plus: list[CircleInterval]
    W_minus: list[CircleInterval]
    measures: dict
    bound_report: dict


def exceptional_sets(state: MultiscaleState, n: int) -> ExceptionalSets:
    """The four shifted-copy unions controlling forward/backward trapping, with measures.

        V_n^- = U_{j<=n} U_{l=-M_j+2..0} (I_j + l w)     W_n^+ = U_{l=1..M_j+1}
        V_n^+ = U_{j<=n} U_{l=1..M_j}    (I_j + l w)     W_n^- = U_{l=-M_j+1..0}

    Measures are compared against Leb(W_n^+) <= sum (M_j+1) eps_j and the
    cascade bound 1/(2(p^2+2)) (resp. 1/(4(p^2+2)) for V_n^-).
    """
    if n > state.top_level:
        raise ConfigError("regions not built to the requested level")
    omega = state.m.omega
    sched = state.schedule

    def build(lo_of, hi_of):
        out = []
        for j in range(n + 1):
            for comp in state.regions[j].components():
                for l in range(lo_of(j), hi_of(j) + 1):
                    out.append(comp.shifted(l * omega))
        return merge_intervals(out)

    V_minus = build(lambda j: -sched.M[j] + 2, lambda j: 0)
    W_plus = build(lambda j: 1, lambda j: sched.M[j] + 1)
    V_plus = build(lambda j: 1, lambda j: sched.M[j])
    W_minus = build(lambda j: -sched.M[j] + 1, lambda j: 0)
    measures = {
        "V_minus": union_measure(V_minus),
        "W_plus": union_measure(W_plus),
        "V_plus": union_measure(V_plus),
        "W_minus": union_measure(W_minus),
    }
    p = sched.p
    sum_w = sum((sched.M[j] + 1) * 2.0 * max(c.length for c in state.regions[j].components()) for j in range(n + 1))
    sum_wp_eps = sum((sched.M[j] + 1) * sched.eps[j] for j in range(n + 1))
    sum_v_eps = sum(sched.M[j] * sched.eps[j] for j in range(n + 1))
    bound_report = {
        "W_plus_measured": measures["W_plus"],
        "W_plus_count_bound": sum_w,
        "W_plus_eps_bound": sum_wp_eps,
        "W_plus_cascade_bound": 1.0 / (2.0 * (p * p + 2.0)),
        "W_plus_within_eps_bound": measures["W_plus"] <= sum_wp_eps + 1e-12,
        "W_plus_within_cascade": measures["W_plus"] < 1.0 / (2.0 * (p * p + 2.0)),
        "V_minus_measured": measures["V_minus"],
        "V_minus_eps_bound": sum_v_eps,
        "V_minus_cascade_bound": 1.0 / (4.0 * (p * p + 2.0)),
        "V_minus_within_cascade": measures["V_minus"] < 1.0 / (4.0 * (p * p + 2.0)),
    }
    return ExceptionalSets(V_minus, W_plus, V_plus, W_minus, measures, bound_report)


# ---------------------------------------------------------------------------
# occupancy counts and the trapping inequality


@dataclass
class OccupancyTable:
    """Forward C-visits and backward E-visits of one orbit, with prefix sums.

    P(m, N) = #{l in [m, N-1] : x_l in C} and Q(m, N) = #{l in [m, N-1] :
    x_{-l} in E} are read off the prefix arrays.
    """

    in_C_fwd: np.ndarray  # flag x_l in C, l = 0..N
    in_E_bwd: np.ndarray  # flag x_{-l} in E, l = 0..N
    theta0: float
    x0: float

    def __post_init__(self):
        self._pc = np.concatenate([[0], np.cumsum(self.in_C_fwd.astype(int))])
        self._pe = np.concatenate([[0], np.cumsum(self.in_E_bwd.astype(int))])

    def P(self, m: int, N: int) -> int:
        return int(self._pc[N] - self._pc[m])

    def Q(self, m: int, N: int) -> int:
        return int(self._pe[N] - self._pe[m])


def occupancy_counts(m: QpfMap, theta0: float, x0: float, N: int) -> OccupancyTable:
    """Contracting-region visits forward and expanding-region visits backward, horizon N."""
    consts = m.family.constants
    if consts is None or consts.E is None or consts.C is None:
        raise ConfigError("occupancy_counts needs E and C")
    if N < 1:
        raise ConfigError("N must be >= 1")
    _, _, _, orbit_f = m.iterate(theta0, x0, N, keep_orbit=True)
    _, _, _, orbit_b = m.iterate(theta0, x0, -N, keep_orbit=True)
    return OccupancyTable(
        in_C_fwd=consts.C.contains(orbit_f),
        in_E_bwd=consts.E.contains(orbit_b),
        theta0=float(theta0),
        x0=float(x0),
    )


def sample_b1_starts(state: MultiscaleState, n: int, count: int, seed: int = 0):
    """Starts satisfying (B1)_n: theta not in V_{n-1}^-, x not in int(E).  Rejection sampling."""
    exc = exceptional_sets(state, n - 1) if n >= 1 else None
    E = state.m.family.constants.E
    rng = np.random.default_rng(seed)
    thetas, xs = [], []
    guard = 0
    while len(thetas) < count:
        guard += 1
        if guard > 1000 * count:
            raise FamilyStructureError("(B1) start sampling starves: V^- nearly covers the circle")
        th = float(rng.uniform())
        x = float(rng.uniform())
        if exc is not None and any(iv.contains(th) for iv in exc.V_minus):
            continue
        if E.contains(x) and not (
            circle_dist(x, E.left) < 1e-12 or circle_dist(x, E.right) < 1e-12
        ):
            continue
        thetas.append(th)
        xs.append(x)
    return np.array(thetas), np.array(xs)


def sample_b2_starts(state: MultiscaleState, n: int, count: int, seed: int = 0):
    """Starts satisfying (B2)_n: theta not in V_{n-1}^+, x not in int(C)."""
    exc = exceptional_sets(state, n - 1) if n >= 1 else None
    C = state.m.family.constants.C
    rng = np.random.default_rng(seed)
    thetas, xs = [], []
    guard = 0
    while len(thetas) < count:
        guard += 1
        if guard > 2000 * count:
            raise FamilyStructureError("(B2) start sampling starves")
        th = float(rng.uniform())
        x = float(rng.uniform())
        if exc is not None and any(iv.contains(th) for iv in exc.V_plus):
            continue
        if C.contains(x) and not (
            circle_dist(x, C.left) < 1e-12 or circle_dist(x, C.right) < 1e-12
        ):
            continue
        thetas.append(th)
        xs.append(x)
    return np.array(thetas), np.array(xs)


def _first_hit(flags: np.ndarray) -> int | None:
    hits = np.nonzero(flags)[0]
    return int(hits[0]) if hits.size else None


def check_occupancy_forward(state: MultiscaleState, n: int, theta0: float, x0: float, N_cap: int):
    """Check P_m^{L_j} >= beta_n (L_j - m) at every I_{n-1}-visit L_j up to the first I_n-hit.

    Returns (violations, n_returns, L_script) where violations is a list of
    (L_j, worst_m, deficit) triples; the horizon is capped at N_cap.
    """
    m = state.m
    consts = m.family.constants
    beta = state.schedule.beta(n)
    _, _, _, orbit = m.iterate(theta0, x0, N_cap, keep_orbit=True)
    thetas = wrap(theta0 + np.arange(N_cap + 1) * m.omega)
    in_prev = np.asarray(state.regions[n - 1].contains(thetas))
    in_cur = np.asarray(state.regions[n].contains(thetas)) if n <= state.top_level else np.zeros_like(in_prev)
    in_C = np.asarray(consts.C.contains(orbit))
    L_script = _first_hit(in_cur[1:])
    horizon = N_cap if L_script is None else L_script + 1
    cum = np.concatenate([[0], np.cumsum(in_C.astype(int))])  # cum[l] = C-visits among x_0..x_{l-1}
    returns = [l for l in range(1, horizon + 1) if in_prev[l]]
    violations = []
    run_max, run_arg = -np.inf, 0
    prev_m = 0
    for L in returns:
        for mm in range(prev_m, L):
            v = cum[mm] - beta * mm
            if v > run_max:
                run_max, run_arg = v, mm
        prev_m = L
        deficit = (cum[L] - beta * L) - run_max
        if deficit < 0:
            violations.append((L, run_arg, float(-deficit)))
        if not in_C[L]:
            violations.append((L, -1, float("nan")))  # lemma also asserts x_{L_j} in C
    return violations, len(returns), L_script


def check_occupancy_backward(state: MultiscaleState, n: int, theta0: float, x0: float, N_cap: int):
    """Backward analogue: Q_m^{R_j} >= beta_n (R_j - m) at visits of I_{n-1}+omega, x_{-R_j} in E."""
    m = state.m
    consts = m.family.constants
    beta = state.schedule.beta(n)
    omega = m.omega
    _, _, _, orbit = m.iterate(theta0, x0, -N_cap, keep_orbit=True)
    thetas = wrap(theta0 - np.arange(N_cap + 1) * omega)
    prev_shift = [c.shifted(omega) for c in state.regions[n - 1].components()]
    cur_shift = (
        [c.shifted(omega) for c in state.regions[n].components()] if n <= state.top_level else []
    )
    in_prev = np.zeros(N_cap + 1, dtype=bool)
    in_cur = np.zeros(N_cap + 1, dtype=bool)
    for iv in prev_shift:
        in_prev |= np.asarray(iv.contains(thetas))
    for iv in cur_shift:
        in_cur |= np.asarray(iv.contains(thetas))
    in_E = np.asarray(consts.E.contains(orbit))
    R_script = _first_hit(in_cur[1:])
    horizon = N_cap if R_script is None else R_script + 1
    cum = np.concatenate([[0], np.cumsum(in_E.astype(int))])
    returns = [l for l in range(1, horizon + 1) if in_prev[l]]
    violations = []
    run_max, run_arg = -np.inf, 0
    prev_m = 0
    for R in returns:
        for mm in range(prev_m, R):
            v = cum[mm] - beta * mm
            if v > run_max:
                run_max, run_arg = v, mm
        prev_m = R
        deficit = (cum[R] - beta * R) - run_max
        if deficit < 0:
            violations.append((R, run_arg, float(-deficit)))
        if not in_E[R]:
            violations.append((R, -1, float("nan")))
    return violations, len(returns), R_script


# ---------------------------------------------------------------------------
# assumption verification


@dataclass
class ConditionResult:
    name: str
    status: str  # "pass" | "fail" | "not-evaluable"
    worst: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status == "pass"


@dataclass
class AssumptionReport:
    conditions: dict
    I0: CriticalRegion | None
    tau: float

    def passed(self, *names: str) -> bool:
        return all(self.conditions[n].passed for n in names)

    def to_dict(self) -> dict:
        out = {"tau": self.tau, "conditions": {}}
        for k, v in self.conditions.items():
            out["conditions"][k] = {"status": v.status, "worst": v.worst}
        if self.I0 is not None:
            out["I0"] = [[c.left, c.length] for c in self.I0.components()]
        return out


def _crossings(vals: np.ndarray) -> int:
    """Sign changes of a signed circle difference sampled along an arc."""
    s = np.sign(vals)
    s = s[s != 0]
    return int(np.sum(s[1:] != s[:-1]))


def verify_assumptions(
    family: QpfFamily,
    tau: float,
    n_theta: int = 1000,
    n_x: int = 1000,
    dtau: float = 1e-4,
    grid: GridSpec = GridSpec(),
) -> AssumptionReport:
    """Grid verification of (A1)-(A10) for f_tau, with worst witnesses.

    Derivative bounds are sampled on n_theta x n_x grids; (A1) is delegated to
    detect_I0; crossing counts for (A6) use sign changes of the lifted
    differences; (A9)/(A10) use finite differences of the I_0 endpoints in tau.
    When detect_I0 fails, (A6), (A7), (A9), (A10) are reported not-evaluable.
    """
    consts = family.constants
    if consts is None or consts.E is None or consts.C is None:
        raise ConfigError("verify_assumptions needs family constants with E and C")
    m = family.map(tau)
    alpha, p, S, s, ell, L = consts.alpha, consts.p, consts.S, consts.s, consts.ell, consts.L
    E, C = consts.E, consts.C
    conds: dict[str, ConditionResult] = {}

    th = np.linspace(0.0, 1.0, n_theta, endpoint=False)[:, None]
    xs = np.linspace(0.0, 1.0, n_x, endpoint=False)[None, :]

    # A1 via detect_I0
    I0 = None
    try:
        I0 = detect_I0(m, grid)
        conds["A1"] = ConditionResult(
            "A1", "pass", {"components": [[c.left, c.length] for c in I0.components()]}
        )
    except (FamilyStructureError, ConfigError) as exc:
        conds["A1"] = ConditionResult("A1", "fail", {"error": str(exc)})

    # A1': inverse trapping off I0 + omega (sampled at bases sigma outside I0)
    if I0 is not None:
        sig = np.linspace(0.0, 1.0, 512, endpoint=False)
        outside = ~np.asarray(I0.contains(sig))
        sig = sig[outside]
        lo = m.inverse_lift(sig, np.full_like(sig, C.right))
        hi = m.inverse_lift(sig, np.full_like(sig, C.right + (1.0 - C.length)))
        off = wrap(lo - E.left)
        ok = (off > 0) & (off + (hi - lo) < E.length)
        i = int(np.argmin(ok)) if not ok.all() else int(np.argmax(ok))
        conds["A1'"] = ConditionResult(
            "A1'", "pass" if bool(ok.all()) else "fail", {"worst_sigma": float(sig[i])}
        )
    else:
        conds["A1'"] = ConditionResult("A1'", "not-evaluable")

    dx = m.dx(th, xs)

    def worst_entry(arr, idx):
        i, j = np.unravel_index(idx, arr.shape)
        return {"theta": float(th[i, 0]), "x": float(xs[0, j]), "value": float(arr[i, j])}

    lo_ok = dx > alpha ** (-p)
    hi_ok = dx < alpha**p
    i_bad = int(np.argmin(dx)) if not lo_ok.all() else int(np.argmin(dx))
    conds["A2"] = ConditionResult(
        "A2",
        "pass" if bool(lo_ok.all() and hi_ok.all()) else "fail",
        {"min": worst_entry(dx, int(np.argmin(dx))), "max": worst_entry(dx, int(np.argmax(dx))),
         "bounds": [alpha ** (-p), alpha**p]},
    )

    xE = wrap(np.linspace(E.left, E.left + E.length, max(n_x // 8, 64)))[None, :]
    dE = m.dx(th, xE)
    conds["A3"] = ConditionResult(
        "A3",
        "pass" if bool((dE > alpha ** (2.0 / p)).all()) else "fail",
        {"min_on_E": float(dE.min()), "bound": alpha ** (2.0 / p)},
    )
    xC = wrap(np.linspace(C.left, C.left + C.length, n_x))[None, :]
    dC = m.dx(th, xC)
    conds["A4"] = ConditionResult(
        "A4",
        "pass" if bool((dC < alpha ** (-2.0 / p)).all()) else "fail",
        {"max_on_C": float(dC.max()), "bound": alpha ** (-2.0 / p)},
    )

    dth = m.derivatives(th, xs)[1]
    conds["A5"] = ConditionResult(
        "A5",
        "pass" if bool((np.abs(dth) < S).all()) else "fail",
        {"max_abs": float(np.abs(dth).max()), "bound": S},
    )

    # A6/A7 need I0
    if I0 is not None:
        a6_ok = True
        a6_info = {}
        for label, comp in zip(("I1", "I2"), I0.components()):
            tg = wrap(np.linspace(comp.left, comp.left + comp.length, 4096))
            d1 = signed_diff(m.fibre(tg, np.full_like(tg, C.right)), E.left)  # f(c+) vs e-
            d2 = signed_diff(m.fibre(tg, np.full_like(tg, C.left)), E.right)  # f(c-) vs e+
            c1, c2 = _crossings(d1), _crossings(d2)
            a6_info[label] = {"crossings_cplus_eminus": c1, "crossings_cminus_eplus": c2}
            a6_ok &= c1 == 1 and c2 == 1
        conds["A6"] = ConditionResult("A6", "pass" if a6_ok else "fail", a6_info)

        xg = np.linspace(0.0, 1.0, 64, endpoint=False)[None, :]
        t1 = wrap(np.linspace(I0.I1.left, I0.I1.left + I0.I1.length, 256))[:, None]
        t2 = wrap(np.linspace(I0.I2.left, I0.I2.left + I0.I2.length, 256))[:, None]
        s1 = m.derivatives(t1, xg)[1]
        s2 = m.derivatives(t2, xg)[1]
        a7_ok = bool((s1 < -s).all() and (s2 > s).all())
        conds["A7"] = ConditionResult(
            "A7", "pass" if a7_ok else "fail",
            {"max_on_I1": float(s1.max()), "min_on_I2": float(s2.min()), "s": s},
        )
    else:
        conds["A6"] = ConditionResult("A6", "not-evaluable")
        conds["A7"] = ConditionResult("A7", "not-evaluable")

    dtau_grid = m.derivatives(th, xs)[2]
    conds["A8"] = ConditionResult(
        "A8",
        "pass" if bool((dtau_grid > ell).all() and (dtau_grid < L).all()) else "fail",
        {"min": float(dtau_grid.min()), "max": float(dtau_grid.max()), "window": [ell, L]},
    )

    if I0 is not None:
        try:
            Ip = detect_I0(family.map(wrap(tau + dtau)), grid)
            Im = detect_I0(family.map(wrap(tau - dtau)), grid)
            rates = {}
            for lbl, comp_sel in (("1", lambda r: r.I1), ("2", lambda r: r.I2)):
                cp, cm = comp_sel(Ip), comp_sel(Im)
                da = signed_diff(cp.left, cm.left) / (2 * dtau)
                db = signed_diff(cp.right, cm.right) / (2 * dtau)
                rates[lbl] = (float(da), float(db))
            sep = min(rates["1"]) - max(rates["2"])
            conds["A9"] = ConditionResult(
                "A9", "pass" if sep > ell / S else "fail", {"separation": sep, "bound": ell / S, "rates": rates}
            )
            mx = max(abs(v) for pair in rates.values() for v in pair)
            conds["A10"] = ConditionResult(
                "A10", "pass" if mx < 2 * L / s else "fail", {"max_rate": mx, "bound": 2 * L / s}
            )
        except (FamilyStructureError, ConfigError) as exc:
            conds["A9"] = ConditionResult("A9", "not-evaluable", {"error": str(exc)})
            conds["A10"] = ConditionResult("A10", "not-evaluable", {"error": str(exc)})
    else:
        conds["A9"] = ConditionResult("A9", "not-evaluable")
        conds["A10"] = ConditionResult("A10", "not-evaluable")

    return AssumptionReport(conditions=conds, I0=I0, tau=wrap(tau))

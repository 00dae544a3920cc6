"""Parametrised families of qpf circle diffeomorphisms f_tau(theta, x) = (theta+omega, f_{tau,theta}(x)).

A family bundles a fibre model (one of the built-in kinds below, or a
user-supplied closed-form lift), the base rotation omega and the geometric
constants used by the multiscale machinery.  All fibre evaluations go through
degree-one lifts F with F(x+1) = F(x)+1 and broadcast over numpy arrays;
backward iteration uses closed-form inverses where available and safeguarded
bisection on the lift otherwise.

Built-in kinds
--------------
rigid            F = x + tau + V(theta)
unforced_arnold  F = x + tau + (alpha/2pi) sin(2pi x)
forced_arnold    F = x + tau + (alpha/2pi) sin(2pi x) + arctan(beta sin(2pi theta))/pi
additive         F = H_alpha(x) + tau + V(theta), H_alpha built from
                 a_p(x) = int_0^x dt/(1+|t|^p)  (arctan for p = 2)
harper           projective action of the almost-Mathieu cocycle
expr             user closed-form lift in x, theta, tau
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.integrate import quad

from ._expr import compile_expression
from .circle import (
    CircleInterval,
    ConfigError,
    ConvergenceError,
    DiophantineSpec,
    FamilyStructureError,
    wrap,
)

TWO_PI = 2.0 * math.pi

__all__ = [
    "FamilyConstants",
    "QpfFamily",
    "QpfMap",
    "eval_ap_profile",
    "ap_integral",
    "load_family",
    "family_to_dict",
    "propose_regions",
]


# ---------------------------------------------------------------------------
# the a_p profile of Example (a)


def ap_integral(x, p: float):
    """a_p(x) = int_0^x dt / (1 + |t|^p).  Closed form arctan for p = 2."""
    if p == 2.0:
        out = np.arctan(np.asarray(x, dtype=float))
        return float(out) if out.ndim == 0 else out
    x = np.asarray(x, dtype=float)
    flat = np.atleast_1d(x)
    out = np.empty_like(flat)
    for i, xi in enumerate(flat):
        val, err = quad(lambda t: 1.0 / (1.0 + abs(t) ** p), 0.0, abs(xi), epsabs=1e-13, epsrel=1e-13, limit=200)
        if err > 1e-10:
            raise ConvergenceError(f"a_p quadrature error {err:.2e} at x={xi}")
        out[i] = math.copysign(val, xi)
    out = out.reshape(x.shape)
    return float(out) if x.ndim == 0 else out


@lru_cache(maxsize=64)
def _ap_norm(p: float, alpha: float) -> float:
    return 2.0 * float(ap_integral(alpha / 2.0, p))


def eval_ap_profile(p: float, alpha: float, x):
    """The fibre nonlinearity h_alpha on T^1: a_p(alpha*iota(x)) / (2 a_p(alpha/2)), projected back.

    iota is the lift of the identity into (-1/2, 1/2].  h_alpha fixes 0 and 1/2,
    expands near 0 and contracts near 1/2 for large alpha.
    """
    if p < 2:
        raise ConfigError("p must be >= 2")
    if alpha < 1:
        raise ConfigError("alpha must be >= 1")
    x = np.asarray(x, dtype=float)
    k = np.round(x)
    iota = x - k
    h = ap_integral(alpha * iota, p) / _ap_norm(p, alpha)
    out = wrap(k + h)
    return out


# ---------------------------------------------------------------------------
# profile (x-part) models: lift H, derivative H', optional closed inverse


class _IdentityProfile:
    def H(self, x):
        return np.asarray(x, dtype=float)

    def dH(self, x):
        return np.ones_like(np.asarray(x, dtype=float))

    def H_inv(self, w):
        return np.asarray(w, dtype=float)

    disp_range = (0.0, 0.0)


class _ArnoldProfile:
    def __init__(self, alpha: float):
        if not (0.0 <= alpha <= 1.0):
            raise ConfigError("arnold nonlinearity alpha must lie in [0, 1]")
        self.alpha = float(alpha)
        a = self.alpha / TWO_PI
        self.disp_range = (-a, a)

    def H(self, x):
        x = np.asarray(x, dtype=float)
        return x + self.alpha / TWO_PI * np.sin(TWO_PI * x)

    def dH(self, x):
        return 1.0 + self.alpha * np.cos(TWO_PI * np.asarray(x, dtype=float))

    H_inv = None


class _ApProfile:
    def __init__(self, p: float, alpha: float):
        if p < 2:
            raise ConfigError("p must be >= 2")
        if alpha < 1:
            raise ConfigError("alpha must be >= 1")
        self.p = float(p)
        self.alpha = float(alpha)
        self.norm = _ap_norm(self.p, self.alpha)
        # H(x) - x is extremal where H' = 1
        grid = np.linspace(-0.5, 0.5, 2049)
        d = self.H(grid) - grid
        self.disp_range = (float(d.min()), float(d.max()))

    def H(self, x):
        x = np.asarray(x, dtype=float)
        k = np.round(x)
        iota = x - k
        if self.p == 2.0:
            return k + np.arctan(self.alpha * iota) / self.norm
        return k + ap_integral(self.alpha * iota, self.p) / self.norm

    def dH(self, x):
        x = np.asarray(x, dtype=float)
        iota = x - np.round(x)
        return self.alpha / (1.0 + np.abs(self.alpha * iota) ** self.p) / self.norm

    def H_inv(self, w):
        if self.p != 2.0:
            return None
        w = np.asarray(w, dtype=float)
        k = np.round(w)
        r = w - k
        return k + np.tan(r * self.norm) / self.alpha


# ---------------------------------------------------------------------------
# forcing (theta-part) models: V, V'


class _ZeroForcing:
    range = (0.0, 0.0)

    def V(self, theta):
        return np.zeros_like(np.asarray(theta, dtype=float))

    def dV(self, theta):
        return np.zeros_like(np.asarray(theta, dtype=float))


class _CosineForcing:
    def __init__(self, amplitude: float):
        self.amplitude = float(amplitude)
        self.range = (-abs(self.amplitude), abs(self.amplitude))

    def V(self, theta):
        return self.amplitude * np.cos(TWO_PI * np.asarray(theta, dtype=float))

    def dV(self, theta):
        return -self.amplitude * TWO_PI * np.sin(TWO_PI * np.asarray(theta, dtype=float))


class _ArctanSinForcing:
    """V_beta(theta) = arctan(beta sin(2 pi theta)) / pi, steep for large beta."""

    def __init__(self, beta: float):
        if beta <= 0:
            raise ConfigError("beta must be positive")
        self.beta = float(beta)
        a = math.atan(beta) / math.pi
        self.range = (-a, a)

    def V(self, theta):
        return np.arctan(self.beta * np.sin(TWO_PI * np.asarray(theta, dtype=float))) / math.pi

    def dV(self, theta):
        theta = np.asarray(theta, dtype=float)
        s = self.beta * np.sin(TWO_PI * theta)
        return 2.0 * self.beta * np.cos(TWO_PI * theta) / (1.0 + s * s)


def _smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def _dsmoothstep(u):
    inside = (u > 0.0) & (u < 1.0)
    u = np.clip(u, 0.0, 1.0)
    return np.where(inside, 6.0 * u * (1.0 - u), 0.0)


class _TwoRampForcing:
    """C^1 forcing with two monotone ramps and flat plateaus in between.

    V rises 0 -> level over [up_left, up_left+width] and falls back over
    [down_left, down_left+width]; each value in (0, level) is taken exactly
    twice, once with V' > 0 and once with V' < 0.  Used to build families whose
    critical regions sit at chosen positions.
    """

    def __init__(self, level: float, width: float, up_left: float, down_left: float):
        if level <= 0 or not (0 < width < 0.5):
            raise ConfigError("two_ramp needs level > 0 and width in (0, 1/2)")
        self.level = float(level)
        self.width = float(width)
        self.up_left = wrap(up_left)
        self.down_left = wrap(down_left)
        gap1 = wrap(self.down_left - (self.up_left + width))
        gap2 = wrap(self.up_left - (self.down_left + width))
        if gap1 + gap2 + 2 * width > 1.0 + 1e-12 or gap1 <= 0 or gap2 <= 0:
            raise ConfigError("two_ramp zones overlap")
        self.range = (0.0, self.level)

    def _u(self, theta):
        theta = np.asarray(theta, dtype=float)
        du = wrap(theta - self.up_left)
        dd = wrap(theta - self.down_left)
        return du, dd

    def V(self, theta):
        du, dd = self._u(theta)
        up = _smoothstep(du / self.width)
        down = _smoothstep(dd / self.width)
        # after the down ramp (dd past width) the up contribution has also completed a period
        val = up - down
        # positions before the up ramp but after the down ramp completed: up=0, down=1 -> -1; fix by +1
        return self.level * np.where(val < -1e-12, val + 1.0, val)

    def dV(self, theta):
        du, dd = self._u(theta)
        up = _dsmoothstep(du / self.width) / self.width
        down = _dsmoothstep(dd / self.width) / self.width
        return self.level * (up - down)


def _make_forcing(spec) -> object:
    if spec is None:
        return _ZeroForcing()
    if isinstance(spec, dict):
        kind = spec.get("kind", "cosine")
        if kind in ("none", "zero"):
            return _ZeroForcing()
        if kind == "cosine":
            return _CosineForcing(spec.get("amplitude", 0.5))
        if kind == "arctan_sin":
            return _ArctanSinForcing(spec["beta"])
        if kind == "two_ramp":
            return _TwoRampForcing(spec["level"], spec["width"], spec["up_left"], spec["down_left"])
        raise ConfigError(f"unknown forcing kind {kind!r}")
    raise ConfigError("forcing must be null or an object")


def _forcing_to_dict(f) -> dict | None:
    if isinstance(f, _ZeroForcing):
        return {"kind": "none"}
    if isinstance(f, _CosineForcing):
        return {"kind": "cosine", "amplitude": f.amplitude}
    if isinstance(f, _ArctanSinForcing):
        return {"kind": "arctan_sin", "beta": f.beta}
    if isinstance(f, _TwoRampForcing):
        return {"kind": "two_ramp", "level": f.level, "width": f.width, "up_left": f.up_left, "down_left": f.down_left}
    return None


# ---------------------------------------------------------------------------
# fibre models


class _AdditiveFibre:
    """F(theta, x, tau) = H(x) + tau + V(theta): tau enters additively (A8 trivially)."""

    approximate_derivs = False

    def __init__(self, profile, forcing):
        self.profile = profile
        self.forcing = forcing

    def lift(self, theta, x, tau):
        return self.profile.H(x) + tau + self.forcing.V(theta)

    def dx(self, theta, x, tau):
        return self.profile.dH(x) * np.ones_like(np.asarray(theta, dtype=float) * np.asarray(x, dtype=float))

    def dtheta(self, theta, x, tau):
        return self.forcing.dV(theta) * np.ones_like(np.asarray(x, dtype=float))

    def dtau(self, theta, x, tau):
        return np.ones(np.broadcast(np.asarray(theta, float), np.asarray(x, float)).shape)

    def inverse_lift(self, theta, y, tau):
        if self.profile.H_inv is None:
            return None
        return self.profile.H_inv(np.asarray(y, dtype=float) - tau - self.forcing.V(theta))

    def disp_range(self, tau):
        plo, phi = self.profile.disp_range
        flo, fhi = self.forcing.range
        return (plo + flo + tau, phi + fhi + tau)


class _HarperFibre:
    """Projective action of the almost-Mathieu cocycle at coupling lambda.

    Lift on iota = x - round(x):  F = round(x) + 1 + atan2(-1, tan(pi iota) - c)/pi
    with c = tau - lambda cos(2 pi theta).  Note d tau F < 0 for this sign
    convention; verify_assumptions will report (A8) accordingly.
    """

    approximate_derivs = False

    def __init__(self, lam: float):
        if lam <= 0:
            raise ConfigError("harper coupling lambda must be positive")
        self.lam = float(lam)

    def _c(self, theta, tau):
        return tau - self.lam * np.cos(TWO_PI * np.asarray(theta, dtype=float))

    def lift(self, theta, x, tau):
        x = np.asarray(x, dtype=float)
        k = np.round(x)
        t = np.tan(np.pi * (x - k))
        c = self._c(theta, tau)
        return k + 1.0 + np.arctan2(-1.0, t - c) / np.pi

    def dx(self, theta, x, tau):
        x = np.asarray(x, dtype=float)
        t = np.tan(np.pi * (x - np.round(x)))
        c = self._c(theta, tau)
        return (1.0 + t * t) / (1.0 + (t - c) ** 2)

    def dtheta(self, theta, x, tau):
        x = np.asarray(x, dtype=float)
        t = np.tan(np.pi * (x - np.round(x)))
        c = self._c(theta, tau)
        dc = TWO_PI * self.lam * np.sin(TWO_PI * np.asarray(theta, dtype=float))
        return -dc / (np.pi * (1.0 + (t - c) ** 2))

    def dtau(self, theta, x, tau):
        x = np.asarray(x, dtype=float)
        t = np.tan(np.pi * (x - np.round(x)))
        c = self._c(theta, tau)
        return -1.0 / (np.pi * (1.0 + (t - c) ** 2))

    def inverse_lift(self, theta, y, tau):
        return None

    def disp_range(self, tau):
        return None  # scanned numerically


class _ExprFibre:
    """User-defined closed-form lift; derivatives by central differences (flagged approximate)."""

    approximate_derivs = True
    _FD_STEP = 1e-6

    def __init__(self, expression: str):
        self.expression = expression
        self._fn = compile_expression(expression)

    def lift(self, theta, x, tau):
        return self._fn(theta, x, tau)

    def _fd(self, f, u):
        h = self._FD_STEP
        return (f(u + h) - f(u - h)) / (2.0 * h)

    def dx(self, theta, x, tau):
        return self._fd(lambda u: self._fn(theta, u, tau), np.asarray(x, dtype=float))

    def dtheta(self, theta, x, tau):
        return self._fd(lambda u: self._fn(u, x, tau), np.asarray(theta, dtype=float))

    def dtau(self, theta, x, tau):
        return self._fd(lambda u: self._fn(theta, x, u), np.asarray(tau, dtype=float))

    def inverse_lift(self, theta, y, tau):
        return None

    def disp_range(self, tau):
        return None


# ---------------------------------------------------------------------------
# constants and family


@dataclass(frozen=True)
class FamilyConstants:
    """Scale constants of the multiscale machinery.

    alpha > 1 and p >= 2 set the derivative thresholds alpha^(2/p), alpha^(-2/p)
    defining the expanding interval E and contracting interval C; S/s bound the
    theta-derivative, (ell, L) the tau-derivative window.  alpha and p are
    machinery scales and need not coincide with same-named fibre parameters.
    """

    alpha: float
    p: float
    S: float
    s: float
    ell: float
    L: float
    E: CircleInterval | None = None
    C: CircleInterval | None = None

    def __post_init__(self):
        if not self.alpha > 1:
            raise ConfigError("constants.alpha must exceed 1")
        if self.p < 2:
            raise ConfigError("constants.p must be >= 2")
        if not (0 < self.s < self.S):
            raise ConfigError("need 0 < s < S")
        if not (0 < self.ell < self.L):
            raise ConfigError("need 0 < ell < L")
        if self.E is not None and self.C is not None:
            from .circle import interval_dist

            if interval_dist(self.E, self.C) <= 0:
                raise ConfigError("E and C must be disjoint")


_FIBRE_KINDS = ("rigid", "unforced_arnold", "additive", "forced_arnold", "harper", "expr")


@dataclass
class QpfFamily:
    """A tau-parametrised family of qpf circle diffeomorphisms over a fixed base rotation."""

    kind: str
    params: dict
    omega: DiophantineSpec
    constants: FamilyConstants | None = None
    fibre: object = field(init=False, repr=False)

    def __post_init__(self):
        if self.kind not in _FIBRE_KINDS:
            raise ConfigError(f"unknown family kind {self.kind!r}; expected one of {_FIBRE_KINDS}")
        p = self.params
        if self.kind == "rigid":
            self.fibre = _AdditiveFibre(_IdentityProfile(), _make_forcing(p.get("forcing")))
        elif self.kind == "unforced_arnold":
            self.fibre = _AdditiveFibre(_ArnoldProfile(p.get("alpha", 0.0)), _ZeroForcing())
        elif self.kind == "forced_arnold":
            self.fibre = _AdditiveFibre(_ArnoldProfile(p.get("alpha", 0.0)), _ArctanSinForcing(p["beta"]))
        elif self.kind == "additive":
            self.fibre = _AdditiveFibre(_ApProfile(p.get("p", 2.0), p["alpha"]), _make_forcing(p.get("forcing")))
        elif self.kind == "harper":
            self.fibre = _HarperFibre(p.get("lambda", p.get("lam", 1.0)))
        elif self.kind == "expr":
            self.fibre = _ExprFibre(p["expression"])
        self._spot_check_monotone()

    def _spot_check_monotone(self, n_theta: int = 32, n_x: int = 257, taus=(0.0, 0.37, 0.71)):
        th = np.linspace(0.0, 1.0, n_theta, endpoint=False)[:, None]
        xs = np.linspace(0.0, 1.0, n_x, endpoint=False)[None, :]
        for tau in taus:
            dx = self.fibre.dx(th, xs, tau)
            if np.min(dx) < -1e-9:
                raise FamilyStructureError(
                    f"fibre map is not orientation preserving: d_x f = {np.min(dx):.3e} < 0 at tau={tau}"
                )

    def map(self, tau: float) -> "QpfMap":
        return QpfMap(self, wrap(float(tau)))

    def monotone_in_tau(self) -> bool:
        """Spot check of d_tau f > 0 (condition A8's sign); bisection refinement relies on it."""
        th = np.linspace(0.0, 1.0, 17)[:, None]
        xs = np.linspace(0.0, 1.0, 33)[None, :]
        return all(np.min(self.fibre.dtau(th, xs, tau)) > 0 for tau in (0.1, 0.6))


class QpfMap:
    """A single qpf circle diffeomorphism: a family frozen at one twist parameter tau."""

    INVERSE_TOL = 1e-13

    def __init__(self, family: QpfFamily, tau: float):
        self.family = family
        self.tau = wrap(float(tau))
        self.omega = family.omega.omega
        self._disp = None

    # -- basic evaluations -------------------------------------------------

    def lift(self, theta, x):
        """F_theta(x) on the lift: degree one, F(x+1) = F(x)+1."""
        return self.family.fibre.lift(theta, x, self.tau)

    def fibre(self, theta, x):
        return wrap(self.family.fibre.lift(theta, x, self.tau))

    def derivatives(self, theta, x):
        """(d_x f, d_theta f, d_tau f); finite differences only for expr fibres."""
        fib = self.family.fibre
        return (fib.dx(theta, x, self.tau), fib.dtheta(theta, x, self.tau), fib.dtau(theta, x, self.tau))

    def dx(self, theta, x):
        return self.family.fibre.dx(theta, x, self.tau)

    # -- inverses ----------------------------------------------------------

    def _displacement_bounds(self):
        if self._disp is None:
            rng = self.family.fibre.disp_range(self.tau)
            if rng is None:
                th = np.linspace(0.0, 1.0, 96, endpoint=False)[:, None]
                xs = np.linspace(0.0, 1.0, 193, endpoint=False)[None, :]
                d = self.lift(th, xs) - xs
                rng = (float(d.min()) - 0.02, float(d.max()) + 0.02)
            self._disp = rng
        return self._disp

    def inverse_lift(self, theta, y, max_iter: int = 200):
        """Solve F_theta(x) = y for x on the lift (to ~1e-14), vectorised.

        Closed form where the profile provides one; otherwise bracketed
        bisection, which tolerates near-zero derivatives (critical Arnold map).
        """
        closed = self.family.fibre.inverse_lift(theta, y, self.tau)
        if closed is not None:
            return closed
        theta = np.asarray(theta, dtype=float)
        y = np.asarray(y, dtype=float)
        dlo, dhi = self._displacement_bounds()
        shape = np.broadcast(theta, y).shape
        lo = np.broadcast_to(y - dhi - 1e-3, shape).copy()
        hi = np.broadcast_to(y - dlo + 1e-3, shape).copy()
        tb = np.broadcast_to(theta, shape)
        for _ in range(8):
            bad = self.lift(tb, lo) > y
            if not np.any(bad):
                break
            lo = np.where(bad, lo - 0.25, lo)
        for _ in range(8):
            bad = self.lift(tb, hi) < y
            if not np.any(bad):
                break
            hi = np.where(bad, hi + 0.25, hi)
        if np.any(self.lift(tb, lo) > y) or np.any(self.lift(tb, hi) < y):
            raise ConvergenceError("inverse_lift: could not bracket (fibre not monotone?)")
        for _ in range(max_iter):
            mid = 0.5 * (lo + hi)
            below = self.lift(tb, mid) < y
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.max(hi - lo) < self.INVERSE_TOL:
                break
        else:
            raise ConvergenceError("inverse_lift: bisection did not converge")
        out = 0.5 * (lo + hi)
        return float(out) if out.ndim == 0 and np.ndim(y) == 0 and np.ndim(theta) == 0 else out

    def inverse_fibre(self, theta, y):
        return wrap(self.inverse_lift(theta, y))

    def inverse_dx(self, theta, y):
        """d_y of the inverse fibre at y: 1 / d_x f at the preimage."""
        x = self.inverse_lift(theta, y)
        return 1.0 / self.family.fibre.dx(theta, x, self.tau)

    # -- iteration ----------------------------------------------------------

    def iterate(self, theta0, x0, n: int, keep_orbit: bool = False):
        """n-fold composition along the base orbit; n < 0 uses fibre inverses.

        Returns (theta_n, x_n, displacement[, orbit]) where displacement is the
        accumulated lift displacement F^n(x~) - x~ and orbit (optional) the
        wrapped x-values x_0..x_n.
        """
        theta0 = np.asarray(theta0, dtype=float)
        x0 = np.asarray(x0, dtype=float)
        x0b = np.broadcast_to(x0, np.broadcast(theta0, x0).shape).astype(float)
        xl = x0b.copy()
        orbit = [wrap(xl.copy())] if keep_orbit else None
        if n >= 0:
            for l in range(n):
                th = wrap(theta0 + l * self.omega)
                xl = np.asarray(self.lift(th, xl), dtype=float)
                if keep_orbit:
                    orbit.append(wrap(xl.copy()))
        else:
            for l in range(1, -n + 1):
                th = wrap(theta0 - l * self.omega)
                xl = np.asarray(self.inverse_lift(th, xl), dtype=float)
                if keep_orbit:
                    orbit.append(wrap(xl.copy()))
        theta_n = wrap(theta0 + n * self.omega)
        disp = xl - x0b
        if np.ndim(disp) == 0:
            disp = float(disp)
        if keep_orbit:
            return theta_n, wrap(xl), disp, np.array(orbit)
        return theta_n, wrap(xl), disp


# ---------------------------------------------------------------------------
# region proposal and (de)serialisation


def propose_regions(family: QpfFamily, alpha: float | None = None, p: float | None = None,
                    n_theta: int = 64, n_x: int = 8192, margin: float = 0.02,
                    taus=(0.0, 0.25, 0.5, 0.75)) -> tuple[CircleInterval, CircleInterval]:
    """Propose E and C as the largest arcs where inf_theta d_x f clears alpha^(2/p) / alpha^(-2/p).

    Each arc is shrunk by `margin` of its length on both sides so the strict
    inequalities (A3)/(A4) survive grid refinement.  Raises FamilyStructureError
    if either thresholded set is empty or wraps the whole circle.
    """
    if alpha is None or p is None:
        if family.constants is None:
            raise ConfigError("propose_regions needs alpha, p or family constants")
        alpha = family.constants.alpha
        p = family.constants.p
    th = np.linspace(0.0, 1.0, n_theta, endpoint=False)[:, None]
    xs = np.linspace(0.0, 1.0, n_x, endpoint=False)
    lo = np.full(n_x, np.inf)
    hi = np.full(n_x, -np.inf)
    for tau in taus:
        d = family.fibre.dx(th, xs[None, :], tau)
        lo = np.minimum(lo, d.min(axis=0))
        hi = np.maximum(hi, d.max(axis=0))

    def biggest_run(mask) -> CircleInterval:
        if not mask.any():
            raise FamilyStructureError("thresholded derivative set is empty; E/C proposal failed")
        if mask.all():
            raise FamilyStructureError("thresholded derivative set is the whole circle")
        ext = np.concatenate([mask, mask])
        best_len, best_start, run, start = 0, 0, 0, 0
        for i, v in enumerate(ext):
            if v:
                if run == 0:
                    start = i
                run += 1
                if run > best_len and start < n_x:
                    best_len, best_start = run, start
            else:
                run = 0
        best_len = min(best_len, n_x - 1)
        left = xs[best_start % n_x]
        length = best_len / n_x
        shrink = margin * length
        return CircleInterval(left + shrink, max(length - 2 * shrink, 1.0 / n_x))

    E = biggest_run(lo > alpha ** (2.0 / p))
    C = biggest_run(hi < alpha ** (-2.0 / p))
    return E, C


def _interval_from_json(v) -> CircleInterval | None:
    if v is None:
        return None
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return CircleInterval(float(v[0]), float(v[1]))
    raise ConfigError("interval must be [left, length]")


def load_family(source) -> QpfFamily:
    """Build a QpfFamily from a definition file path or an already-parsed dict."""
    if isinstance(source, (str, Path)):
        with open(source) as fh:
            data = json.load(fh)
    elif isinstance(source, dict):
        data = source
    else:
        raise ConfigError("family source must be a path or dict")
    try:
        kind = data["family_kind"]
        om = data.get("omega", "golden")
        gamma = float(data.get("gamma", 0.38))
        nu = float(data.get("nu", 1.0))
        omega = DiophantineSpec.golden(gamma, nu) if om == "golden" else DiophantineSpec(float(om), gamma, nu)
        params = dict(data.get("parameters", {}))
        constants = None
        cdata = data.get("constants")
        if cdata is not None:
            constants = FamilyConstants(
                alpha=float(cdata.get("alpha", params.get("alpha", 2.0))),
                p=float(cdata.get("p", params.get("p", 2.0))),
                S=float(cdata["S"]),
                s=float(cdata["s"]),
                ell=float(cdata["ell"]),
                L=float(cdata["L"]),
                E=_interval_from_json(data.get("E")),
                C=_interval_from_json(data.get("C")),
            )
    except KeyError as exc:
        raise ConfigError(f"family definition missing field {exc}") from exc
    return QpfFamily(kind=kind, params=params, omega=omega, constants=constants)


def family_to_dict(family: QpfFamily) -> dict:
    """Serialise a family back to the definition-file schema (round-trips with load_family)."""
    params = dict(family.params)
    if "forcing" in params or family.kind in ("rigid", "additive"):
        params["forcing"] = _forcing_to_dict(getattr(family.fibre, "forcing", None)) or params.get("forcing")
    out = {
        "family_kind": family.kind,
        "omega": "golden" if abs(family.omega.omega - wrap((math.sqrt(5) - 1) / 2)) < 1e-15 else family.omega.omega,
        "gamma": family.omega.gamma,
        "nu": family.omega.nu,
        "parameters": params,
    }
    c = family.constants
    if c is not None:
        out["constants"] = {"alpha": c.alpha, "p": c.p, "S": c.S, "s": c.s, "ell": c.ell, "L": c.L}
        out["E"] = [c.E.left, c.E.length] if c.E else None
        out["C"] = [c.C.left, c.C.length] if c.C else None
    return out

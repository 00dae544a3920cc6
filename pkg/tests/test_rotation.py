import numpy as np
import pytest

from qpf.circle import CircleInterval, DiophantineSpec, FamilyStructureError, circle_dist, wrap
from qpf.families import QpfFamily
from qpf.rotation import (
    count_monotonicity_violations,
    detect_plateaus,
    estimate_rotation_number,
    module_membership,
    refine_plateau_edge,
    sweep_staircase,
)

GOLDEN = DiophantineSpec.golden()


def arnold(alpha):
    return QpfFamily("unforced_arnold", {"alpha": alpha}, GOLDEN)


def test_rigid_rotation_number():
    est = estimate_rotation_number(arnold(0.0).map(0.3), n_iter=5000)
    assert circle_dist(est.rho, 0.3) <= 1.0 / 5000
    assert est.spread <= est.error_bound


def test_arnold_fixed_point_rho_zero():
    # x = 1/2 is a fixed point of the alpha=0.5, tau=0 map, forcing rho = 0
    est = estimate_rotation_number(arnold(0.5).map(0.0), n_iter=5000)
    assert circle_dist(est.rho, 0.0) <= 2.0 / 5000


def test_spread_shrinks_with_n():
    fam = arnold(0.0)
    e1 = estimate_rotation_number(fam.map(0.3), n_iter=2000, n_starts=8, seed=3)
    e2 = estimate_rotation_number(fam.map(0.3), n_iter=4000, n_starts=8, seed=3)
    assert e2.spread <= e1.spread + 4.0 / 2000


def test_staircase_identity_line_for_rigid():
    fam = arnold(0.0)
    taus = np.linspace(0.0, 0.999, 40)
    st = sweep_staircase(fam, taus, n_iter=2000, n_starts=2, seed=1)
    rho = st.rho_unwrapped()
    assert np.max(np.abs(rho - taus)) < 1e-3
    assert count_monotonicity_violations(st) == 0
    # no plateaus on a strictly increasing staircase
    assert detect_plateaus(st, flat_tol=1e-6) == []


def test_staircase_endpoint_sum():
    fam = arnold(0.6)
    taus = np.linspace(0.0, 1.0, 101)
    st = sweep_staircase(fam, taus, n_iter=4000, n_starts=2, seed=0)
    rho = st.rho_unwrapped()
    assert rho[-1] - rho[0] == pytest.approx(1.0, abs=5e-3)


def test_staircase_monotone_no_violations():
    st = sweep_staircase(arnold(0.8), np.linspace(0, 1, 201), n_iter=3000, n_starts=2, seed=2)
    assert count_monotonicity_violations(st) == 0


def test_degenerate_constant_staircase_single_plateau():
    fam = arnold(0.8)
    taus = np.linspace(0.02, 0.06, 9)  # interior of the rho=0 tongue
    st = sweep_staircase(fam, taus, n_iter=3000, n_starts=2, seed=0)
    pls = detect_plateaus(st, flat_tol=1e-3)
    assert len(pls) == 1
    assert pls[0].first_index == 0 and pls[0].last_index == 8


def test_detect_plateau_arnold_08():
    fam = arnold(0.8)
    taus = np.linspace(0.0, 1.0, 1001)[:-1]
    st = sweep_staircase(fam, taus, n_iter=20_000, n_starts=2, seed=0)
    pls = detect_plateaus(st, flat_tol=5e-4)
    zero_pls = [p for p in pls if circle_dist(p.rho_locked, 0.0) < 1e-3]
    width = sum(p.interval.length for p in zero_pls)
    # fixed point exists iff |tau| <= alpha/2pi: full width 2*0.8/2pi = 0.2546
    assert width == pytest.approx(2 * 0.8 / (2 * np.pi), abs=5e-3)


def test_refine_plateau_edges_tongue_boundary():
    fam = arnold(0.8)
    taus = np.linspace(0.0, 0.2, 81)
    st = sweep_staircase(fam, taus, n_iter=20_000, n_starts=2, seed=0)
    pls = detect_plateaus(st, flat_tol=5e-4)
    pl = next(p for p in pls if p.interval.contains(0.05))
    edge = refine_plateau_edge(fam, pl, "right", bisect_tol=2e-5, n_iter=50_000, n_starts=2)
    assert abs(edge - 0.8 / (2 * np.pi)) < 5e-5
    # bisect_tol = grid spacing returns a point within one grid cell of the coarse edge
    coarse = refine_plateau_edge(fam, pl, "right", bisect_tol=st.grid_spacing, n_iter=20_000, n_starts=2)
    assert abs(coarse - pl.interval.right) <= 2 * st.grid_spacing


def test_refine_left_edge_wrapping():
    # the rho=0 tongue extends to tau = -0.8/2pi mod 1; detect the wrapped run
    fam = arnold(0.8)
    taus = np.linspace(0.8, 0.999, 80)
    st = sweep_staircase(fam, taus, n_iter=20_000, n_starts=2, seed=0)
    pls = detect_plateaus(st, flat_tol=5e-4)
    pl = next(p for p in pls if circle_dist(p.rho_locked, 0.0) < 1e-3)
    edge = refine_plateau_edge(fam, pl, "left", bisect_tol=2e-5, n_iter=50_000, n_starts=2)
    assert circle_dist(edge, wrap(-0.8 / (2 * np.pi))) < 5e-5


def test_refine_rejects_false_plateau():
    fam = arnold(0.8)
    taus = np.linspace(0.0, 0.2, 81)
    st = sweep_staircase(fam, taus, n_iter=20_000, n_starts=2, seed=0)
    pls = detect_plateaus(st, flat_tol=5e-4)
    pl = pls[0]
    fake = type(pl)(interval=pl.interval, rho_locked=wrap(pl.rho_locked + 0.25),
                    edge_tolerance=pl.edge_tolerance, first_index=pl.first_index, last_index=pl.last_index)
    with pytest.raises(FamilyStructureError):
        refine_plateau_edge(fam, fake, "right", bisect_tol=1e-4, n_iter=20_000)


def test_module_membership_examples():
    w = module_membership(0.0, GOLDEN.omega)
    assert (w.p1, w.q1, w.p2, w.q2) == (0, 1, 0, 1)
    w = module_membership(wrap(3 * GOLDEN.omega), GOLDEN.omega, max_denominator=4, tol=1e-10)
    assert (w.p2, w.q2, w.p1, w.q1) == (3, 1, 0, 1)
    w = module_membership(wrap(GOLDEN.omega / 2 + 1 / 3), GOLDEN.omega, max_denominator=6, tol=1e-10)
    assert (w.p1, w.q1, w.p2, w.q2) == (1, 3, 1, 2)
    assert module_membership(wrap(np.pi / 10), GOLDEN.omega, max_denominator=5, tol=1e-9) is None


def test_plateau_rhos_are_low_denominator_rationals():
    fam = arnold(0.8)
    st = sweep_staircase(fam, np.linspace(0, 1, 501), n_iter=20_000, n_starts=2, seed=0)
    pls = detect_plateaus(st, flat_tol=1e-3)
    assert pls, "expected tongues for alpha = 0.8"
    for p in pls:
        if p.last_index - p.first_index < 3:
            continue  # too short to trust the median at this n_iter
        w = module_membership(p.rho_locked, GOLDEN.omega, max_denominator=8, tol=1e-4)
        assert w is not None and w.p2 == 0, (p.rho_locked, w)


def test_sweep_determinism():
    fam = arnold(0.7)
    a = sweep_staircase(fam, np.linspace(0, 1, 21), n_iter=2000, seed=42)
    b = sweep_staircase(fam, np.linspace(0, 1, 21), n_iter=2000, seed=42)
    assert all(x.rho == y.rho and x.spread == y.spread for x, y in zip(a.estimates, b.estimates))

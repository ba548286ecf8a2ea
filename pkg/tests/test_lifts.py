import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qerlab.eigensolver import analytic_modes
from qerlab.geometry import build_curve, build_domain
from qerlab.lifts import (
    LiftError,
    LiftRecord,
    compute_lifts,
    convergence_gap,
    lift_cauchy,
    lift_renormalized_dirichlet,
    lift_renormalized_neumann,
    limit_state,
    liouville_volume,
)
from qerlab.psido import const1, cos_s, gauss_xi, glancing_cutoff, poly_xi, s_window
from qerlab.trace import CauchyTrace, cauchy_trace

from oracles import disk_lifts_closed_form as _closed_form

@pytest.mark.parametrize("lk", [(3, 4), (7, 2), (0, 5), (-5, 3)])
@pytest.mark.parametrize("which", ["const", "cos", "gauss"])
def test_disk_oracle(unit_disk, disk_circle, lk, which):
    L = disk_circle.length
    a = {"const": const1(), "cos": cos_s(L, 1, 1, 0.5), "gauss": gauss_xi(0.2, 0.4)}[which]
    m = analytic_modes(unit_disk, [lk])[0]
    tr = cauchy_trace(m, disk_circle)
    cf = _closed_form(m, a, L)
    r = compute_lifts(a, tr, 0.1)
    scale = max(abs(cf["neumann"]), abs(cf["dirichlet"]), 1e-3)
    assert abs(r.neumann - cf["neumann"]) <= 1e-6 * scale
    assert abs(r.renormalized_dirichlet - cf["renormalized_dirichlet"]) <= 1e-6 * scale
    assert abs(r.dirichlet - cf["dirichlet"]) <= 1e-6 * scale
    assert abs(r.renormalized_neumann - cf["renormalized_neumann"](0.1)) <= 1e-6 * scale


def test_multiplier_and_matrix_paths_agree(unit_disk, disk_circle):
    tr = cauchy_trace(analytic_modes(unit_disk, [(5, 3)])[0], disk_circle)
    a = cos_s(disk_circle.length, 2, 1, 0.5) * gauss_xi(0.3, 0.5)
    x = lift_renormalized_dirichlet(a, tr)
    y = lift_renormalized_dirichlet(a, tr, path="matrix")
    assert abs(x - y) <= 1e-12 * max(1.0, abs(x))
    with pytest.raises(LiftError):
        lift_renormalized_dirichlet(a, tr, path="other")


def test_record_combinations(unit_disk, disk_circle):
    tr = cauchy_trace(analytic_modes(unit_disk, [(2, 2)])[0], disk_circle)
    r = compute_lifts(const1(), tr, 0.2)
    assert r.cauchy == pytest.approx(lift_cauchy(const1(), tr))
    assert r.renormalized_sum == r.dirichlet + r.renormalized_neumann
    with pytest.raises(LiftError):
        LiftRecord(0, 0.1, "x", 0, 0, 0).renormalized_sum


def test_renormalized_neumann_rejections(unit_square, square_segment, unit_disk, disk_circle):
    tr = cauchy_trace(analytic_modes(unit_disk, [(2, 2)])[0], disk_circle)
    with pytest.raises(LiftError):
        lift_renormalized_neumann(const1(), tr, 0.0)
    seg = cauchy_trace(analytic_modes(unit_square, [(3, 5)])[0], square_segment)
    with pytest.raises(LiftError, match="closed"):
        lift_renormalized_neumann(s_window(0.1, 0.4, 0.08), seg, 0.1)


def test_open_arc_needs_window(unit_square, square_segment):
    seg = cauchy_trace(analytic_modes(unit_square, [(3, 5)])[0], square_segment)
    with pytest.raises(LiftError):
        lift_renormalized_dirichlet(gauss_xi(), seg)
    v = compute_lifts(s_window(0.1, 0.4, 0.08), seg)
    assert np.isfinite(v.cauchy)


def test_coarse_lattice_rejected():
    tr = CauchyTrace(0.001, 1.0, np.ones(8, complex), np.ones(8, complex), True, 0, "x")
    with pytest.raises(LiftError, match="too coarse"):
        compute_lifts(gauss_xi(), tr)


STADIUM = {"kind": "stadium", "alpha": 1, "r": 1}


@pytest.mark.parametrize(
    "dspec,cspec",
    [
        (STADIUM, {"kind": "circle", "rho": 0.8}),
        ({"kind": "disk", "R": 1.0}, {"kind": "circle", "rho": 0.5}),
        ({"kind": "rectangle", "a": 2, "b": 1}, {"kind": "segment", "x0": 0.5, "y0": 0.5, "x1": 1.5, "y1": 0.5}),
    ],
)
def test_normalization_lock(dspec, cspec):
    D = build_domain(dspec)
    C = build_curve(cspec, D)
    one = const1()
    assert limit_state(one, 0.5, C, D).value == pytest.approx(C.length / D.area, abs=1e-8)
    assert limit_state(one, -0.5, C, D).value == pytest.approx(2 * C.length / D.area, abs=1e-8)


def test_stadium_value():
    D = build_domain(STADIUM)
    C = build_curve({"kind": "circle", "rho": 0.8}, D)
    assert limit_state(const1(), 0.5, C, D).value == pytest.approx(1.6 * np.pi / (4 + np.pi), abs=1e-12)


def test_limit_state_closed_forms(unit_disk, disk_circle):
    # a = xi^2 (inside the plateau): int xi^2 sqrt(1 - xi^2) = pi/8, int xi^2 / sqrt(1 - xi^2) = pi/2
    L, vol = disk_circle.length, liouville_volume(unit_disk)
    p = poly_xi()
    assert limit_state(p, 0.5, disk_circle, unit_disk).value == pytest.approx(4 * L * np.pi / 8 / vol, abs=1e-9)
    assert limit_state(p, -0.5, disk_circle, unit_disk).value == pytest.approx(4 * L * np.pi / 2 / vol, abs=1e-9)
    # s-oscillation averages out
    c = cos_s(L, 3, 0.0, 1.0)
    assert abs(limit_state(c, 0.5, disk_circle, unit_disk).value) < 1e-12


def test_limit_state_rejections(unit_disk, disk_circle):
    with pytest.raises(LiftError):
        limit_state(const1(), 0.0, disk_circle, unit_disk)


def test_convergence_gap_single_and_windows():
    recs = [LiftRecord(i, 0.1, "a", complex(v), 0, 0, lam2=l2) for i, (v, l2) in enumerate([(1.0, 10), (3.0, 20), (2.0, 30)])]
    one = convergence_gap(recs[:1], 0.5)
    assert one.running_mean[0] == 1.0
    rep = convergence_gap(recs, 2.0, windows=[(0, 25), (25, 40), (40, 50)])
    assert rep.windows[0][2] == 2 and rep.windows[0][3] == 2.0
    assert rep.windows[0][5] == pytest.approx(1.0)
    assert rep.windows[2][2] == 0
    assert convergence_gap([], 1.0).gaps.size == 0


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 0.45))
def test_glancing_complement_splits_limit_state(eps1):
    D = build_domain(STADIUM)
    C = build_curve({"kind": "circle", "rho": 0.8}, D)
    a = gauss_xi(0.1, 0.6)
    g = glancing_cutoff(eps1)
    whole = limit_state(a, 0.5, C, D).value
    parts = limit_state(a.complement_times(g), 0.5, C, D).value + limit_state(a * g, 0.5, C, D).value
    assert parts == pytest.approx(whole, abs=1e-8)


@settings(max_examples=20, deadline=None)
@given(st.floats(-3, 3), st.floats(0.1, 3))
def test_lifts_linear_in_symbol(c, amp):
    D = build_domain({"kind": "disk", "R": 1.0})
    C = build_curve({"kind": "circle", "rho": 0.6}, D)
    tr = cauchy_trace(analytic_modes(D, [(4, 2)])[0], C)
    a = cos_s(C.length, 1, 1, amp)
    assert compute_lifts(a.scaled(c), tr).cauchy == pytest.approx(c * compute_lifts(a, tr).cauchy, abs=1e-12)

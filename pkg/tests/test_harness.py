import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qerlab.archive import ModeArchive, TraceArchive
from qerlab.eigensolver import analytic_modes, assemble_laplacian, eigenvalue_count
from qerlab.geometry import build_curve, build_domain
from qerlab.harness import (
    ExperimentPlan,
    HarnessError,
    Observable,
    count_inversions,
    default_budget,
    density_one_extract,
    glancing_weyl_sums,
    loglog_slope,
    qe_diagnostic,
    qer_convergence,
    solve_to_archive,
    traces_to_archive,
    weyl_estimate,
    window_stats,
)
from qerlab.lifts import compute_lifts
from qerlab.psido import const1, gauss_xi
from qerlab.trace import CauchyTrace, cauchy_trace


def _trace(values_d, values_n, h=0.05, length=1.0, mode_id=0, lam2=None):
    return CauchyTrace(h, length, np.asarray(values_d, complex), np.asarray(values_n, complex), True, mode_id, "c",
                       lam2 if lam2 is not None else 1 / h**2)


def _plane_wave(n, h, length, xi_target, mode_id=0):
    k = round(xi_target * length / (2 * np.pi * h))
    s = length * np.arange(n) / n
    w = np.exp(2j * np.pi * k * s / length)
    return _trace(w, w, h, length, mode_id), 2 * np.pi * k * h / length


def test_weyl_estimate_tracks_count(unit_square):
    op = assemble_laplacian(unit_square, 1 / 64)
    for lam2 in (500.0, 1500.0):
        assert abs(eigenvalue_count(op, lam2) - weyl_estimate(unit_square, lam2)) < 0.1 * weyl_estimate(unit_square, lam2)


def test_plan_validation():
    with pytest.raises(HarnessError):
        ExperimentPlan({"kind": "rectangle", "a": 1, "b": 1}, {"kind": "circle", "rho": 0.2}, 1 / 64, [(10, 5)])
    with pytest.raises(HarnessError):
        ExperimentPlan({"kind": "rectangle", "a": 1, "b": 1}, {}, 1 / 64, [(10, 50), (40, 60)])
    p = ExperimentPlan({"kind": "rectangle", "a": 1, "b": 1}, {}, 1 / 64, [(10, 50), (50, 60)], output="x")
    assert p.lam2_max == 60 and p.key.startswith("rectangle-")


def test_solve_resumes(tmp_path, unit_square):
    path = tmp_path / "m.qer"
    solve_to_archive(unit_square, 1 / 32, 120, path, chunk=4)
    first = ModeArchive(path).spectrum()
    solve_to_archive(unit_square, 1 / 32, 300, path, chunk=4)
    second = ModeArchive(path).spectrum()
    assert second[: len(first)] == first
    ids = [r[0] for r in second]
    assert ids == list(range(len(ids)))
    op = assemble_laplacian(unit_square, 1 / 32)
    assert len(second) == eigenvalue_count(op, 300)
    assert (tmp_path / "spectrum.csv").exists()
    with pytest.raises(HarnessError):
        solve_to_archive(unit_square, 1 / 16, 300, path)


def test_traces_resume_and_reject_other_curve(tmp_path, unit_square, square_segment):
    modes = analytic_modes(unit_square, [(1, 1), (1, 2), (2, 1)])
    for i, m in enumerate(modes):
        m.mode_id = i
    path = tmp_path / "t.qer"
    traces_to_archive(modes[:2], unit_square, square_segment, path)
    traces_to_archive(modes, unit_square, square_segment, path)
    assert [t.mode_id for t in TraceArchive(path).read()] == [0, 1, 2]
    other = build_curve({"kind": "segment", "x0": 0.2, "y0": 0.3, "x1": 0.7, "y1": 0.3}, unit_square)
    with pytest.raises(HarnessError):
        traces_to_archive(modes, unit_square, other, path)


def test_slopes_and_inversions():
    x = np.array([0.4, 0.2, 0.1])
    assert loglog_slope(x, 3 * x**2) == pytest.approx(2.0)
    assert count_inversions([5, 4, 4.5, 3]) == 1
    with pytest.raises(HarnessError):
        loglog_slope([1.0], [1.0])


def test_window_stats_basic():
    st_ = window_stats([1, 2, 3, 11], [1.0, 2.0, 3.0, 5.0], 2.0, [(0, 10), (10, 20), (20, 30)])
    assert st_[0].count == 3 and st_[0].mean == 2.0 and st_[0].variance == pytest.approx(2 / 3)
    assert st_[1].cesaro == pytest.approx(11 / 4)
    assert st_[2].count == 0 and math.isnan(st_[2].mean)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=30), st.randoms())
def test_cesaro_permutation_invariant(values, rnd):
    lam2 = np.linspace(1, 9, len(values))
    perm = list(range(len(values)))
    rnd.shuffle(perm)
    a = window_stats(lam2, values, 0.0, [(0, 10)])[0]
    b = window_stats(lam2[perm], np.asarray(values)[perm], 0.0, [(0, 10)])[0]
    assert a.mean == pytest.approx(b.mean) and a.variance == pytest.approx(b.variance)


def test_glancing_sums_vanish_off_the_shell():
    # every trace lives at |xi| < 1 - 3 eps1^2 for the whole ladder
    traces = [_plane_wave(256, 0.01, 1.0, xi, i)[0] for i, xi in enumerate([0.0, 0.3, 0.5, -0.4])]
    tab = glancing_weyl_sums(traces, [0.4, 0.2, 0.1])
    assert max(tab.dirichlet) < 1e-10 and max(tab.neumann) < 1e-10


def test_glancing_plane_waves_do_not_scale():
    # traces concentrated exactly on |xi| = 1 keep full mass on every rung
    traces = [_plane_wave(256, 0.01, 1.0, xi, i)[0] for i, xi in enumerate([1.0, -1.0])]
    tab = glancing_weyl_sums(traces, [0.4, 0.2, 0.1])
    assert np.allclose(tab.dirichlet, tab.dirichlet[0])
    assert abs(tab.dirichlet_slope) < 1e-8
    assert tab.profile_sup[0] == pytest.approx(1.0)


def test_glancing_needs_two_rungs():
    with pytest.raises(HarnessError):
        glancing_weyl_sums([_plane_wave(64, 0.05, 1.0, 0.2)[0]], [0.1])


def test_density_extraction_ties_and_budget():
    tr = [_plane_wave(64, 0.05, 1.0, 0.2, i)[0] for i in range(10)]
    for i, t in enumerate(tr):
        t.lam2 = 100.0 + i
    keep, rows = density_one_extract(tr, 0.2, [(0, 1000)], budget=0.3)
    assert keep.tolist() == [False] * 3 + [True] * 7
    assert rows[0][2:4] == (10, 7)
    with pytest.raises(HarnessError):
        density_one_extract(tr, 0.2, [(0, 1000)], budget=1.0)


def test_density_extraction_drops_largest():
    tr = [_plane_wave(256, 0.01, 1.0, xi, i)[0] for i, xi in enumerate([0.1, 1.0, 0.2, 0.3])]
    for i, t in enumerate(tr):
        t.lam2 = 10.0 + i
    keep, rows = density_one_extract(tr, 0.2, [(0, 100)], budget=0.25)
    assert keep.tolist() == [True, False, True, True]
    assert rows[0][4] >= 1 - 0.25


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 40))
def test_default_budget_decreases(k):
    assert 0 < default_budget(k + 1) < default_budget(k) < 1
    assert default_budget(1) == pytest.approx(0.2)


def _rect_modes(D, lam2_max):
    a, b = D.params["a"], D.params["b"]
    idx = [(m, n) for m in range(1, 80) for n in range(1, 80) if np.pi**2 * (m * m / a**2 + n * n / b**2) < lam2_max]
    idx.sort(key=lambda t: t[0] ** 2 / a**2 + t[1] ** 2 / b**2)
    modes = analytic_modes(D, idx)
    for i, m in enumerate(modes):
        m.mode_id = i
    return modes


def test_qe_diagnostic_constant_observable():
    D = build_domain({"kind": "rectangle", "a": 1, "b": 0.7})
    modes = _rect_modes(D, 800)
    out = qe_diagnostic(modes, [Observable("one", lambda x, y: np.ones_like(x))], [(0, 800)], delta=1 / 200)
    assert out["ergodic_hypothesis"] is False
    s = out["one"][0]
    assert s.mean == pytest.approx(1.0, abs=1e-3) and s.variance < 1e-5


def test_observable_order_limit():
    with pytest.raises(HarnessError):
        Observable("x", lambda x, y: x, (2, 1))


def test_qe_diagnostic_rejects_mixed_domains(unit_square, unit_disk):
    m = analytic_modes(unit_square, [(1, 1)]) + analytic_modes(unit_disk, [(0, 1)])
    with pytest.raises(HarnessError):
        qe_diagnostic(m, [Observable("one", lambda x, y: np.ones_like(x))], [(0, 100)])


def test_qer_report_flags_integrable_domain_and_single_mode():
    D = build_domain({"kind": "rectangle", "a": 1, "b": 0.7})
    C = build_curve({"kind": "circle", "rho": 0.25, "cx": 0.5, "cy": 0.35}, D)
    modes = _rect_modes(D, 900)
    traces = [cauchy_trace(m, C) for m in modes]
    rep = qer_convergence(traces, D, C, [const1(), gauss_xi(0, 0.5)], [(0, 900)], (0.4, 0.2))
    assert not rep.ergodic_hypothesis and rep.flags
    one = qer_convergence(traces[-1:], D, C, [const1()], [(0, 900)], (0.4, 0.2))
    assert one.cauchy["const1"][0].mean == pytest.approx(compute_lifts(const1(), traces[-1]).cauchy.real)
    with pytest.raises(HarnessError):
        qer_convergence([], D, C, [const1()], [(0, 900)])

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qerlab.eigensolver import analytic_modes
from qerlab.geometry import build_curve, fermi_chart
from qerlab.harness import loglog_slope
from qerlab.psido import cos_s, gauss_xi, poly_xi, s_window
from qerlab.rellich import (
    CollarField,
    RellichError,
    apply_test_operator,
    boundary_decomposition,
    bracket_symbol,
    collar_average,
    collar_field_from_mode,
    collar_laplacian,
    default_profile,
    poisson_bracket_fd,
    bracket_remainder,
    rellich_defect,
    tilted_profile,
    collar_limit,
)

WINDOWED = s_window(0.1, 0.4, 0.08) * gauss_xi(0.3, 0.5)


@pytest.fixture(scope="module")
def disk_setup(unit_disk):
    C = build_curve({"kind": "circle", "rho": 0.5}, unit_disk)
    a = cos_s(C.length, 1, 1, 0.5) * poly_xi((1, 0, -0.5))
    return unit_disk, C, a


@pytest.mark.parametrize("mn", [(2, 5), (4, 4)])
def test_rellich_identity_second_order(unit_square, square_segment, mn):
    m = analytic_modes(unit_square, [mn])[0]
    spec = default_profile(WINDOWED, 0.2)
    d = [rellich_defect(m, spec, fermi_chart(square_segment, 0.2, ns, nn)).defect for ns, nn in [(128, 321), (256, 641), (512, 1281)]]
    assert d[-1] < 1e-6
    order = np.log2(d[0] / d[2]) / 2
    assert 1.7 <= order <= 2.3


def test_collar_laplacian_of_plane_wave(unit_square, square_segment):
    # e^{i k . x} is an exact eigenfunction of the flat Laplacian; h = 1 gives -Delta
    ch = fermi_chart(square_segment, 0.2, 256, 401)
    xy = ch.cartesian()
    k = np.array([7.0, 4.0])
    u = CollarField(ch, np.exp(1j * (xy[..., 0] * k[0] + xy[..., 1] * k[1])), 1.0)
    lap = collar_laplacian(u)
    inner = slice(4, -4)
    assert np.allclose(lap.values[inner, inner], (k @ k) * u.values[inner, inner], rtol=2e-3, atol=2e-3 * (k @ k))


def test_curved_collar_laplacian(unit_disk):
    C = build_curve({"kind": "circle", "rho": 0.5}, unit_disk)
    ch = fermi_chart(C, 0.2, 256, 401)
    xy = ch.cartesian()
    u = CollarField(ch, xy[..., 0] ** 2 + xy[..., 1] ** 2 + 0j, 1.0)  # Laplacian = 4
    assert np.allclose(collar_laplacian(u).values, -4.0, atol=1e-8)


def test_collar_laplacian_rejects_small_jacobian(unit_disk):
    C = build_curve({"kind": "circle", "rho": 0.5}, unit_disk)
    ch = fermi_chart(C, 0.2, 64, 41)
    bad = type(ch)(ch.curve, ch.eps, ch.s, ch.xn, np.full_like(ch.jacobian, 0.4))
    with pytest.raises(RellichError):
        collar_laplacian(CollarField(bad, np.zeros(bad.jacobian.shape, complex), 1.0))


def test_open_arc_operator_requires_window_and_collar(unit_square, square_segment):
    m = analytic_modes(unit_square, [(2, 5)])[0]
    ch = fermi_chart(square_segment, 0.1, 64, 81)
    u = collar_field_from_mode(m, ch)
    with pytest.raises(RellichError):
        apply_test_operator(default_profile(WINDOWED, 0.2), u)


def test_under_resolved_chart_rejected(unit_square, square_segment):
    m = analytic_modes(unit_square, [(20, 20)])[0]
    with pytest.raises(RellichError, match="per wavelength"):
        bracket_remainder(m, default_profile(WINDOWED, 0.2), fermi_chart(square_segment, 0.2, 16, 21))


def test_boundary_terms_match_lifts_for_flat_profile(disk_setup):
    D, C, _ = disk_setup
    a = cos_s(C.length, 1, 1, 0.5) * gauss_xi(0.2, 0.5)
    m = analytic_modes(D, [(6, 4)])[0]
    ch = fermi_chart(C, 0.2, 256, 401)
    flat = boundary_decomposition(m, default_profile(a, 0.2), ch)
    # the Neumann part is exact; the Dirichlet part agrees up to O(h) symbol corrections
    assert abs(flat.t2 - flat.mu_neumann) < 1e-12 * abs(flat.mu_neumann)
    assert flat.defect < 0.05
    tilted = boundary_decomposition(m, tilted_profile(a, 0.2, 1.0), ch)
    assert tilted.defect > 2 * flat.defect


def test_bracket_symbolic_vs_fd(disk_setup):
    D, C, a = disk_setup
    spec = default_profile(a, 0.2)
    B = bracket_symbol(spec, C)
    r = np.random.default_rng(1)

    def p_sym(s, xn, xin, xis):
        return xin**2 + xis**2 / (1 - C.curvature(s) * xn) ** 2

    def g_sym(s, xn, xin, xis):
        return spec.chi(xn / 0.2) * xin * a(s, xis)

    for _ in range(6):
        pt = np.array([r.uniform(0, C.length), r.uniform(0.05, 0.19), r.uniform(-1, 1), r.uniform(-1, 1)])
        assert abs(B(*pt) - poisson_bracket_fd(p_sym, g_sym, pt)) <= 1e-8


def test_bracket_split_leading_plus_remainder(disk_setup):
    D, C, a = disk_setup
    B = bracket_symbol(default_profile(a, 0.2), C)
    spec = default_profile(a, 0.2)
    for pt in [(0.7, 0.13, 0.4, -0.3), (2.0, 0.05, -0.9, 0.2)]:
        chi = spec.chi(pt[1] / spec.eps)
        assert B(*pt) == pytest.approx(B.leading_term(*pt) + chi * B.r2(*pt), abs=1e-12)


def test_collar_average_approaches_collar_limit(disk_setup):
    D, C, a = disk_setup
    up = collar_limit(a, C, D)
    ladder = [0.2, 0.1, 0.05]
    errs = [abs(collar_average(default_profile(a, e), C, D) - up) for e in ladder]
    assert errs[0] > errs[1] > errs[2]
    assert loglog_slope(ladder, errs) >= 1.0


def test_bracket_remainder_shrinks(unit_square):
    C = build_curve({"kind": "segment", "x0": 0.25, "y0": 0.25, "x1": 0.75, "y1": 0.25}, unit_square)
    spec = default_profile(WINDOWED, 0.2)
    out = []
    for k in (17, 49):
        m = analytic_modes(unit_square, [(round(0.6 * k), k)])[0]
        n = max(int(2 * np.ceil(4 * C.length / (2 * np.pi * m.h))), 64)
        ch = fermi_chart(C, 0.2, n, int(0.4 / (2 * np.pi * m.h / 24)) | 1)
        out.append(bracket_remainder(m, spec, ch)["remainder"])
    assert out[1] < out[0]


def test_bracket_remainder_slope_in_h(unit_square):
    # modes (3j, 5j) see the segment at the same relative phase; the normal
    # step error (second order) is removed by Richardson extrapolation
    C = build_curve({"kind": "segment", "x0": 0.25, "y0": 0.3, "x1": 0.75, "y1": 0.3}, unit_square)
    spec = default_profile(WINDOWED, 0.2)
    hs, rs = [], []
    for j in (1, 3, 5):
        m = analytic_modes(unit_square, [(3 * j, 5 * j)])[0]
        wl = 2 * np.pi * m.h
        n = max(int(2 * np.ceil(4 * C.length / wl)), 64)
        coarse, fine = (bracket_remainder(m, spec, fermi_chart(C, 0.2, n, int(0.4 / (wl / p)) // 2 * 2 + 1)) for p in (32, 64))
        bracket = (4 * fine["bracket"] - coarse["bracket"]) / 3
        hs.append(m.h)
        rs.append(abs(fine["cauchy"] + bracket))
    assert loglog_slope(hs, rs) >= 1.0


@settings(max_examples=15, deadline=None)
@given(st.floats(0.0, 3.0), st.floats(-0.19, 0.19), st.floats(-1.2, 1.2), st.floats(-1.2, 1.2))
def test_bracket_antisymmetry_property(s, xn, xin, xis):
    f = lambda s, xn, xin, xis: np.cos(s) * xin + xn * xis**2
    g = lambda s, xn, xin, xis: np.sin(2 * s) * xis + xn**2 * xin
    pt = (s, xn, xin, xis)
    assert poisson_bracket_fd(f, g, pt) == pytest.approx(-poisson_bracket_fd(g, f, pt), abs=1e-9)


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6))
def test_rellich_identity_holds_for_any_mode(m, n):
    from qerlab.geometry import build_domain

    D = build_domain({"kind": "rectangle", "a": 1, "b": 1})
    C = build_curve({"kind": "segment", "x0": 0.25, "y0": 0.45, "x1": 0.75, "y1": 0.45}, D)
    mode = analytic_modes(D, [(m, n)])[0]
    r = rellich_defect(mode, default_profile(WINDOWED, 0.2), fermi_chart(C, 0.2, 256, 641))
    assert r.defect < 1e-4 or abs(r.lhs - r.rhs) < 1e-8

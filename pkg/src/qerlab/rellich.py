"""
Rellich commutator identity on a Fermi collar of ``H``.

The test operator is ``A = chi(x_n / eps) h D_{x_n} a^w(s, h D_s)``.  Ambient
operators are built from finite differences in ``x_n`` and the tangential
quantisation on each ``x_n = const`` slice.  ``M_+`` is the side ``x_n >= 0``,
into which the unit normal points.

Orientation
-----------
With the normal pointing *into* ``M_+``, Green's formula gives::

    (i/h) int_{M_+} ([-h^2 Delta, A] phi) conj(phi) = -(T1 + T2),
    T1 = int_H (h D_nu A phi) conj(phi),   T2 = int_H (A phi) conj(h D_nu phi).

``rellich_defect`` compares the left side with ``-(T1 + T2)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
import sympy as sp

from .eigensolver import EigenMode
from .geometry import Curve, Domain, FermiChart
from .lifts import inner, lift_neumann, lift_renormalized_dirichlet, limit_state, liouville_volume
from .psido import SymbolFn, arc_taper, quantize, smooth_step, smooth_step_prime
from .trace import CauchyTrace

__all__ = [
    "RellichError",
    "CollarField",
    "TestOperatorSpec",
    "default_profile",
    "tilted_profile",
    "collar_field_from_mode",
    "collar_cauchy_trace",
    "apply_test_operator",
    "collar_laplacian",
    "RellichResult",
    "rellich_defect",
    "BoundaryDecomposition",
    "boundary_decomposition",
    "BracketSymbol",
    "bracket_symbol",
    "poisson_bracket_fd",
    "collar_average",
    "collar_limit",
    "bracket_remainder",
]

MIN_NODES_PER_WAVELENGTH = 6


class RellichError(ValueError):
    pass


# ----------------------------------------------------------------------------- data


@dataclass
class CollarField:
    """Samples ``u[i, m] = u(s_i, x_{n,m})`` on a Fermi chart."""

    chart: FermiChart
    values: np.ndarray
    h: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (len(self.chart.s), len(self.chart.xn)):
            raise RellichError("collar samples do not match the chart shape")

    def like(self, values) -> "CollarField":
        return CollarField(self.chart, values, self.h)


@dataclass(frozen=True)
class TestOperatorSpec:
    """``chi(x_n/eps) h D_{x_n} a^w``.

    ``chi`` and ``chi_prime`` are the cutoff profile and its derivative.
    """

    symbol: SymbolFn
    eps: float
    chi: Callable[[np.ndarray], np.ndarray]
    chi_prime: Callable[[np.ndarray], np.ndarray]
    profile: str = "flat"


def _chi_flat(x):
    return 1.0 - smooth_step(2.0 * np.abs(x) - 1.0)


def _chi_flat_prime(x):
    return -2.0 * np.sign(x) * smooth_step_prime(2.0 * np.abs(x) - 1.0)


def default_profile(symbol: SymbolFn, eps: float) -> TestOperatorSpec:
    """Profile equal to 1 on ``|x| <= 1/2`` and 0 on ``|x| >= 1``."""
    return TestOperatorSpec(symbol, eps, _chi_flat, _chi_flat_prime, "flat")


def tilted_profile(symbol: SymbolFn, eps: float, slope: float = 1.0) -> TestOperatorSpec:
    """``chi(x) (1 + slope x)``: same support, but ``chi'(0) = slope``."""

    def chi(x):
        return _chi_flat(x) * (1.0 + slope * x)

    def chi_prime(x):
        return _chi_flat_prime(x) * (1.0 + slope * x) + slope * _chi_flat(x)

    return TestOperatorSpec(symbol, eps, chi, chi_prime, f"tilted({slope:g})")


def _check_resolution(chart: FermiChart, h: float) -> None:
    wl = 2 * np.pi * h
    for name, d in (("tangential", chart.ds), ("normal", chart.dn)):
        if wl / d < MIN_NODES_PER_WAVELENGTH:
            raise RellichError(
                f"{name} spacing {d:.4g} gives {wl / d:.2f} nodes per wavelength; need <= {wl / MIN_NODES_PER_WAVELENGTH:.4g}"
            )


def collar_field_from_mode(mode: EigenMode, chart: FermiChart) -> CollarField:
    xy = chart.cartesian()
    return CollarField(chart, mode.value(xy[..., 0], xy[..., 1]), mode.h)


# ----------------------------------------------------------------------------- derivatives


def _d_normal(values: np.ndarray, dn: float) -> np.ndarray:
    return np.gradient(values, dn, axis=1, edge_order=2)


def _d_tangent(values: np.ndarray, chart: FermiChart) -> np.ndarray:
    if chart.curve.closed:
        n = values.shape[0]
        k = 2j * np.pi * np.fft.fftfreq(n, d=chart.ds)
        if n % 2 == 0:
            k[n // 2] = 0.0
        return np.fft.ifft(k[:, None] * np.fft.fft(values, axis=0), axis=0)
    # fourth-order centred in the interior, second order at the two ends
    ds = chart.ds
    out = np.gradient(values, ds, axis=0, edge_order=2)
    out[2:-2] = (values[:-4] - 8 * values[1:-3] + 8 * values[3:-1] - values[4:]) / (12 * ds)
    return out


def _hdn(u: CollarField) -> np.ndarray:
    return (u.h / 1j) * _d_normal(u.values, u.chart.dn)


def collar_laplacian(u: CollarField) -> CollarField:
    """``-h^2 Delta`` in Fermi coordinates.

    ``-h^2 [ J^{-1} d_n (J d_n u) + J^{-1} d_s (J^{-1} d_s u) ]`` with
    ``J = 1 - kappa(s) x_n``.  The normal part is the conservative three-point
    stencil (one-sided second order on the first and last rows); the
    tangential part is spectral on closed curves and fourth order on arcs.
    """
    ch = u.chart
    J = ch.jacobian
    if np.any(J <= 0.5):
        raise RellichError("Fermi Jacobian must exceed 1/2")
    kappa = ch.curve.curvature(ch.s)[:, None]
    dn = ch.dn
    v = u.values
    Jp = 1.0 - kappa * (ch.xn[None, 1:-1] + 0.5 * dn)
    Jm = 1.0 - kappa * (ch.xn[None, 1:-1] - 0.5 * dn)
    normal = np.empty_like(v)
    normal[:, 1:-1] = (Jp * (v[:, 2:] - v[:, 1:-1]) - Jm * (v[:, 1:-1] - v[:, :-2])) / (J[:, 1:-1] * dn**2)
    wide = _d_normal(J * _d_normal(v, dn), dn) / J
    normal[:, 0], normal[:, -1] = wide[:, 0], wide[:, -1]
    tangential = _d_tangent(_d_tangent(v, ch) / J, ch) / J
    return u.like(-(u.h**2) * (normal + tangential))


# ----------------------------------------------------------------------------- test operator


def _tangential_matrix(symbol: SymbolFn, chart: FermiChart, h: float) -> np.ndarray:
    return quantize(symbol, h, len(chart.s), chart.curve.length, closed=chart.curve.closed).matrix


def apply_test_operator(spec: TestOperatorSpec, u: CollarField) -> CollarField:
    """``chi(x_n/eps) h D_{x_n} a^w u`` on the chart; zero outside the collar.

    On an open arc the result is also multiplied by ``arc_taper`` so that it
    vanishes near the arc ends; this keeps the collar integral free of
    boundary terms in ``s`` (the tangential quantisation treats the arc as
    periodic, and its kernel tails would otherwise reach the ends).
    """
    ch = u.chart
    _check_resolution(ch, u.h)
    if spec.eps > ch.eps + 1e-12:
        raise RellichError(f"test operator width {spec.eps} leaks outside the chart (half-width {ch.eps})")
    M = _tangential_matrix(spec.symbol, ch, u.h)
    v = u.like(M @ u.values)
    w = _hdn(v)
    x = ch.xn / spec.eps
    cut = np.where(np.abs(x) < 1.0, spec.chi(x), 0.0)
    out = w * cut[None, :]
    if not ch.curve.closed:
        out = out * _taper(spec, ch)[:, None]
    return u.like(out)


def _taper(spec: TestOperatorSpec, chart: FermiChart) -> np.ndarray:
    if spec.symbol.window is None:
        raise RellichError(f"symbol {spec.symbol.name} needs an s-window on an open arc")
    return arc_taper(chart.s, spec.symbol.window, chart.curve.length)


# ----------------------------------------------------------------------------- identity


@dataclass
class RellichResult:
    mode_id: int
    eps: float
    ds: float
    dn: float
    lhs: complex
    rhs: complex
    t1: complex
    t2: complex
    defect: float


def _plus_side_weights(chart: FermiChart) -> np.ndarray:
    """Trapezoidal weights in ``x_n`` over ``[0, eps]``."""
    m0 = chart.zero_index
    w = np.zeros(len(chart.xn))
    w[m0:] = chart.dn
    w[m0] *= 0.5
    w[-1] *= 0.5
    return w


def _boundary_terms(Au: CollarField, u: CollarField) -> tuple[complex, complex]:
    ch = u.chart
    m0 = ch.zero_index
    L = ch.curve.length
    hdn_Au = (u.h / 1j) * (Au.values[:, m0 + 1] - Au.values[:, m0 - 1]) / (2 * ch.dn)
    hdn_u = (u.h / 1j) * (u.values[:, m0 + 1] - u.values[:, m0 - 1]) / (2 * ch.dn)
    t1 = inner(hdn_Au, u.values[:, m0], L)
    t2 = inner(Au.values[:, m0], hdn_u, L)
    return t1, t2


def rellich_defect(mode: EigenMode | CollarField, spec: TestOperatorSpec, chart: FermiChart | None = None, floor: float = 1e-14) -> RellichResult:
    """Relative mismatch of the two sides of the Rellich identity.

    The left side uses ``[-h^2 Delta, A] phi = -h^2 Delta (A phi) - A phi``
    and is integrated over ``x_n >= 0`` with weight ``J ds dx_n``.
    """
    u = mode if isinstance(mode, CollarField) else collar_field_from_mode(mode, chart)
    ch = u.chart
    Au = apply_test_operator(spec, u)
    PAu = collar_laplacian(Au)
    integrand = (PAu.values - Au.values) * np.conj(u.values) * ch.jacobian
    lhs = (1j / u.h) * ch.ds * complex(np.sum(integrand * _plus_side_weights(ch)[None, :]))
    t1, t2 = _boundary_terms(Au, u)
    rhs = -(t1 + t2)
    defect = abs(lhs - rhs) / (abs(lhs) + abs(rhs) + floor)
    mid = getattr(mode, "mode_id", 0)
    return RellichResult(mid, spec.eps, ch.ds, ch.dn, lhs, rhs, t1, t2, float(defect))


def collar_cauchy_trace(u: CollarField, mode_id: int = 0) -> CauchyTrace:
    """Cauchy data at ``x_n = 0`` with the same centred normal difference as the identity."""
    ch = u.chart
    m0 = ch.zero_index
    hdn_u = (u.h / 1j) * (u.values[:, m0 + 1] - u.values[:, m0 - 1]) / (2 * ch.dn)
    return CauchyTrace(u.h, ch.curve.length, u.values[:, m0], hdn_u, ch.curve.closed, mode_id, ch.curve.spec_hash)


@dataclass
class BoundaryDecomposition:
    """Boundary terms against the lifts they reduce to when ``chi'(0) = 0``."""

    t1: complex
    t2: complex
    mu_neumann: complex
    mu_renormalized_dirichlet: complex

    @property
    def cauchy(self) -> complex:
        return self.mu_neumann + self.mu_renormalized_dirichlet

    @property
    def defect(self) -> float:
        """``|T1 + T2 - Phi^CD| / |Phi^CD|``."""
        return abs(self.t1 + self.t2 - self.cauchy) / max(abs(self.cauchy), 1e-300)


def boundary_decomposition(mode: EigenMode | CollarField, spec: TestOperatorSpec, chart: FermiChart | None = None) -> BoundaryDecomposition:
    """Split the boundary side into ``T1 ~ mu^RD(a)`` and ``T2 = mu^N(a)``."""
    u = mode if isinstance(mode, CollarField) else collar_field_from_mode(mode, chart)
    Au = apply_test_operator(spec, u)
    t1, t2 = _boundary_terms(Au, u)
    tr = collar_cauchy_trace(u)
    return BoundaryDecomposition(t1, t2, lift_neumann(spec.symbol, tr), lift_renormalized_dirichlet(spec.symbol, tr))


# ----------------------------------------------------------------------------- bracket


_S, _XN, _XI_N, _XI_S, _EPS = sp.symbols("s x_n xi_n xi_s epsilon", real=True)


@lru_cache(maxsize=1)
def _symbolic_bracket():
    """Bracket ``{xi_n^2 + R, chi(x_n/eps) xi_n a(s, xi_s)}`` with ``R = xi_s^2 / J^2``.

    Returns the full bracket, the leading term and ``R_2`` as expressions in
    placeholder symbols for ``kappa, kappa', a, a_s, a_xi, chi, chi'``.
    """
    kappa = sp.Function("kappa")(_S)
    a = sp.Function("a")(_S, _XI_S)
    chi = sp.Function("chi")(_XN / _EPS)
    J = 1 - kappa * _XN
    f = _XI_N**2 + _XI_S**2 / J**2
    g = chi * _XI_N * a
    br = sp.diff(f, _XI_N) * sp.diff(g, _XN) + sp.diff(f, _XI_S) * sp.diff(g, _S)
    br -= sp.diff(f, _XN) * sp.diff(g, _XI_N) + sp.diff(f, _S) * sp.diff(g, _XI_S)
    k0, k1, a0, a_s, a_x, c0, c1 = sp.symbols("k0 k1 a0 a_s a_xi c0 c1", real=True)
    t = sp.Symbol("t")
    subs = {
        sp.Derivative(kappa, _S): k1,
        sp.Derivative(a, _S): a_s,
        sp.Derivative(a, _XI_S): a_x,
    }
    br = br.subs(subs)
    # chi'(x_n/eps) appears as Subs(Derivative(chi(t), t), t, x_n/eps)
    br = br.replace(lambda e: isinstance(e, sp.Subs), lambda e: c1)
    br = br.subs({kappa: k0, a: a0, chi: c0})
    br = sp.simplify(br)
    lead = 2 / _EPS * c1 * _XI_N**2 * a0
    r2 = sp.simplify(sp.expand(br - lead) / c0)
    args = (_S, _XN, _XI_N, _XI_S, _EPS, k0, k1, a0, a_s, a_x, c0, c1)
    return br, lead, r2, args, t


def _fd(g, step):
    """Eighth-order central difference of ``d -> g(d)`` at ``d = 0``."""
    c = (4 / 5, -1 / 5, 4 / 105, -1 / 280)
    out = 0.0
    for k, ck in enumerate(c, start=1):
        out = out + ck * (g(k * step) - g(-k * step))
    return out / step


@dataclass
class BracketSymbol:
    """Poisson bracket of ``xi_n^2 + R`` with ``chi(x_n/eps) xi_n a`` on the collar."""

    spec: TestOperatorSpec
    curve: Curve
    expr: sp.Expr
    leading: sp.Expr
    r2_expr: sp.Expr
    fd_step: float = 1e-3

    def _inputs(self, s, xn, xi_n, xi_s):
        a = self.spec.symbol
        h = self.fd_step
        s, xn, xi_n, xi_s = np.broadcast_arrays(*(np.asarray(v, float) for v in (s, xn, xi_n, xi_s)))
        a0 = a(s, xi_s)
        a_s = _fd(lambda d: a(s + d, xi_s), h)
        a_x = _fd(lambda d: a(s, xi_s + d), h)
        k0 = self.curve.curvature(s)
        k1 = _fd(lambda d: self.curve.curvature(s + d), h)
        c0 = self.spec.chi(xn / self.spec.eps)
        c1 = self.spec.chi_prime(xn / self.spec.eps)
        return s, xn, xi_n, xi_s, self.spec.eps, k0, k1, a0, a_s, a_x, c0, c1

    def __call__(self, s, xn, xi_n, xi_s):
        return _lambdas()[0](*self._inputs(s, xn, xi_n, xi_s))

    def r2(self, s, xn, xi_n, xi_s):
        return _lambdas()[2](*self._inputs(s, xn, xi_n, xi_s))

    def leading_term(self, s, xn, xi_n, xi_s):
        return _lambdas()[1](*self._inputs(s, xn, xi_n, xi_s))


@lru_cache(maxsize=1)
def _lambdas():
    br, lead, r2, args, _ = _symbolic_bracket()
    return tuple(sp.lambdify(args, e, "numpy") for e in (br, lead, r2))


def bracket_symbol(spec: TestOperatorSpec, curve: Curve) -> BracketSymbol:
    br, lead, r2, _, _ = _symbolic_bracket()
    return BracketSymbol(spec, curve, br, lead, r2)


def poisson_bracket_fd(f, g, point, step: float = 2e-4) -> float:
    """``{f, g}`` at ``(s, x_n, xi_n, xi_s)`` by eighth-order differences.

    ``f`` and ``g`` take the four phase-space coordinates in that order.
    """
    p = np.asarray(point, dtype=float)

    def partial(fun, i):
        def shifted(d):
            q = p.copy()
            q[i] += d
            return fun(*q)

        return _fd(shifted, step)

    # pairs (position, momentum): (s, xi_s) and (x_n, xi_n)
    out = 0.0
    for x_i, xi_i in ((0, 3), (1, 2)):
        out += partial(f, xi_i) * partial(g, x_i) - partial(f, x_i) * partial(g, xi_i)
    return float(np.real(out))


def collar_average(spec: TestOperatorSpec, curve: Curve, domain: Domain, n_theta: int = 256, n_s: int = 256, n_n: int = 128) -> float:
    """Oriented Liouville average of ``(1/eps) chi'(x_n/eps) (1 - R) a`` over ``S*M_+``.

    On the unit cosphere over the collar ``xi_n = cos(theta)``,
    ``xi_s = J sin(theta)``, ``1 - R = cos(theta)^2`` and
    ``dmu = J ds dx_n dtheta``.  Because ``int (1/eps) chi' = -1`` on the
    ``M_+`` side, the average is returned with the sign flipped so that it
    tends to ``collar_limit(a)`` as ``eps -> 0``.
    """
    eps = spec.eps
    L = curve.length
    s = L * np.arange(n_s) / n_s if curve.closed else (np.arange(n_s) + 0.5) * L / n_s
    th = 2 * np.pi * np.arange(n_theta) / n_theta
    # chi' is supported in [eps/2, eps] with flat ends: Gauss-Legendre there
    xg, wg = np.polynomial.legendre.leggauss(n_n)
    xn = 0.75 * eps + 0.25 * eps * xg
    wn = 0.25 * eps * wg
    total = 0.0
    kappa = curve.curvature(s)
    for x, wx in zip(xn, wn):
        J = 1.0 - kappa * x
        vals = spec.symbol(s[:, None], (J[:, None] * np.sin(th)[None, :]))
        f = np.real(vals) * np.cos(th)[None, :] ** 2 * J[:, None]
        total += wx * spec.chi_prime(x / eps) / eps * f.sum() * (L / n_s) * (2 * np.pi / n_theta)
    return -2.0 / liouville_volume(domain) * total


def collar_limit(symbol: SymbolFn, curve: Curve, domain: Domain) -> float:
    """``(4/mu(S*M)) int_{B*H} a (1 - xi^2)^{1/2} ds dxi``."""
    return limit_state(symbol, 0.5, curve, domain).value


# ----------------------------------------------------------------------------- bracket quantisation


def _sym(name, func, support, window):
    return SymbolFn(name, func, support, window=window)


def _apply_bracket_operator(spec: TestOperatorSpec, u: CollarField) -> np.ndarray:
    """Product-form quantisation of the bracket symbol on the collar.

    ``(2/eps) chi' (h D_n)^2 a^w + chi R_2^w`` with each ``xi_n`` realised as
    ``h D_n`` applied after the tangential factor.
    """
    ch = u.chart
    h = u.h
    a = spec.symbol
    eps = spec.eps
    x = ch.xn / eps
    c0 = np.where(np.abs(x) < 1, spec.chi(x), 0.0)
    c1 = np.where(np.abs(x) < 1, spec.chi_prime(x), 0.0)
    Ma = _tangential_matrix(a, ch, h)
    au = Ma @ u.values
    hdn = lambda v: (h / 1j) * _d_normal(v, ch.dn)
    lead = (2.0 / eps) * c1[None, :] * hdn(hdn(au))

    step = 1e-3
    a_s = lambda s, xi: _fd(lambda d: a(s + d, xi), step)
    a_x = lambda s, xi: _fd(lambda d: a(s, xi + d), step)
    k1fun = lambda s: _fd(lambda d: ch.curve.curvature(s + d), step)
    rest = np.zeros_like(u.values)
    for m, xn in enumerate(ch.xn):
        if c0[m] == 0.0:
            continue

        def b1(s, xi, xn=xn):
            J = 1.0 - ch.curve.curvature(s) * xn
            return 2.0 * xi * a_s(s, xi) / J**2

        def b0(s, xi, xn=xn):
            J = 1.0 - ch.curve.curvature(s) * xn
            return -2.0 * ch.curve.curvature(s) * xi**2 * a(s, xi) / J**3

        def b2(s, xi, xn=xn):
            J = 1.0 - ch.curve.curvature(s) * xn
            return -2.0 * xi**2 * xn * k1fun(s) * a_x(s, xi) / J**3

        B1 = quantize(_sym("b1", b1, a.xi_support, a.window), h, len(ch.s), ch.curve.length, ch.curve.closed).matrix
        B0 = quantize(_sym("b0", b0, a.xi_support, a.window), h, len(ch.s), ch.curve.length, ch.curve.closed).matrix
        B2 = quantize(_sym("b2", b2, a.xi_support, a.window), h, len(ch.s), ch.curve.length, ch.curve.closed).matrix
        rest[:, m] = c0[m] * (B0 @ u.values[:, m])
        rest[:, m] += c0[m] * ((B1 + B2) @ hdn(u.values)[:, m])
    out = lead + rest
    if not ch.curve.closed:
        out = out * _taper(spec, ch)[:, None]
    return out


def bracket_remainder(mode: EigenMode | CollarField, spec: TestOperatorSpec, chart: FermiChart | None = None) -> dict:
    """Compare ``Phi^CD(a)`` with the collar matrix element of the quantised bracket.

    Returns the two values and ``remainder = |Phi^CD + <B phi, phi>_{M_+}|``;
    the sum (not the difference) is the orientation-consistent comparison.
    """
    u = mode if isinstance(mode, CollarField) else collar_field_from_mode(mode, chart)
    ch = u.chart
    _check_resolution(ch, u.h)
    Bu = _apply_bracket_operator(spec, u)
    elem = ch.ds * complex(np.sum(Bu * np.conj(u.values) * ch.jacobian * _plus_side_weights(ch)[None, :]))
    tr = collar_cauchy_trace(u)
    cd = lift_neumann(spec.symbol, tr) + lift_renormalized_dirichlet(spec.symbol, tr)
    return {"h": u.h, "cauchy": cd, "bracket": elem, "remainder": abs(cd + elem)}

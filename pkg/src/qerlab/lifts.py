"""
Microlocal lifts of Cauchy data and the classical states they approach.

All quadratic forms use the trapezoidal inner product on the curve,
``<u, v> = (L/N) sum_i u_i conj(v_i)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Curve, Domain
from .psido import QuantizationError, SymbolFn, arc_taper, quantize
from .trace import CauchyTrace, curve_fourier_multiplier, frequencies

__all__ = [
    "LiftError",
    "LiftRecord",
    "LimitState",
    "GapReport",
    "inner",
    "apply_symbol",
    "lift_neumann",
    "lift_renormalized_dirichlet",
    "lift_cauchy",
    "lift_dirichlet",
    "lift_renormalized_neumann",
    "compute_lifts",
    "limit_state",
    "liouville_volume",
    "convergence_gap",
]


class LiftError(ValueError):
    pass


def inner(u: np.ndarray, v: np.ndarray, length: float) -> complex:
    return complex(length / u.size * np.vdot(v, u))


def apply_symbol(a: SymbolFn, values: np.ndarray, trace: CauchyTrace, matrix: np.ndarray | None = None) -> np.ndarray:
    """``Op_H(a) values``; s-independent symbols on closed curves go through the FFT.

    ``matrix`` may carry a previously quantised ``Op_H(a)`` for this trace.
    """
    values = np.asarray(values, dtype=complex)
    if values.shape != (trace.n,):
        raise LiftError(f"vector of length {values.shape} does not match trace with N = {trace.n}")
    if matrix is None and a.s_independent and trace.closed:
        # same lattice check as the matrix path
        quantize_check(a, trace)
        return curve_fourier_multiplier(values, lambda xi: a(0.0, xi), trace.h, trace.length)
    if matrix is None:
        matrix = _matrix(a, trace)
    return matrix @ values


def _matrix(a: SymbolFn, trace: CauchyTrace) -> np.ndarray | None:
    if a.s_independent and trace.closed:
        return None
    try:
        return quantize(a, trace.h, trace.n, trace.length, closed=trace.closed).matrix
    except QuantizationError as exc:
        raise LiftError(str(exc)) from exc


def quantize_check(a: SymbolFn, trace: CauchyTrace) -> None:
    xi_max = trace.h * np.pi * trace.n / trace.length
    if xi_max < 1.5 * a.xi_support:
        raise LiftError(f"frequency lattice too coarse for symbol {a.name}: max |xi| = {xi_max:.4g} < 1.5 * {a.xi_support:.4g}")


def _taper(trace: CauchyTrace, a: SymbolFn) -> np.ndarray:
    try:
        return arc_taper(trace.nodes, a.window, trace.length)
    except QuantizationError as exc:
        raise LiftError(str(exc)) from exc


def _one_minus_xi2(trace: CauchyTrace, values: np.ndarray) -> np.ndarray:
    return curve_fourier_multiplier(values, lambda xi: 1.0 - xi**2, trace.h, trace.length)


def lift_neumann(a: SymbolFn, trace: CauchyTrace, matrix: np.ndarray | None = None) -> complex:
    """``<Op(a) n, n>`` with ``n = h D_nu phi|_H``."""
    return inner(apply_symbol(a, trace.neumann, trace, matrix), trace.neumann, trace.length)


def lift_renormalized_dirichlet(
    a: SymbolFn, trace: CauchyTrace, path: str = "multiplier", matrix: np.ndarray | None = None
) -> complex:
    """``<Op(a) (1 + h^2 Delta_H) d, d>``.

    ``path="multiplier"`` applies ``1 - xi^2`` by FFT first; ``path="matrix"``
    folds it into a dense matrix ``Op(a) F* diag(1 - xi^2) F``.  On open arcs the
    Dirichlet samples are first multiplied by a taper that is 1 around the
    symbol's s-window, which changes the result only by terms supported where
    the symbol vanishes.
    """
    d = trace.dirichlet
    if not trace.closed:
        if a.window is None:
            raise LiftError(f"symbol {a.name} needs an s-window on an open arc")
        d = d * _taper(trace, a)
    if path == "multiplier":
        v = apply_symbol(a, _one_minus_xi2(trace, d), trace, matrix)
    elif path == "matrix":
        xi = frequencies(trace.n, trace.h, trace.length)
        F = np.fft.fft(np.eye(trace.n), axis=0)
        D = np.fft.ifft((1.0 - xi**2)[:, None] * F, axis=0)
        M = quantize(a, trace.h, trace.n, trace.length, closed=trace.closed).matrix
        v = (M @ D) @ d
    else:
        raise LiftError(f"unknown path {path!r}")
    return inner(v, trace.dirichlet, trace.length)


def lift_cauchy(a: SymbolFn, trace: CauchyTrace) -> complex:
    return lift_neumann(a, trace) + lift_renormalized_dirichlet(a, trace)


def lift_dirichlet(a: SymbolFn, trace: CauchyTrace, matrix: np.ndarray | None = None) -> complex:
    """``<Op(a) d, d>``."""
    return inner(apply_symbol(a, trace.dirichlet, trace, matrix), trace.dirichlet, trace.length)


def lift_renormalized_neumann(a: SymbolFn, trace: CauchyTrace, eps1: float, matrix: np.ndarray | None = None) -> complex:
    """``<(1 + h^2 Delta_H + i eps1)^{-1} Op(a) n, n>`` on a closed curve."""
    if not eps1 > 0:
        raise LiftError(f"eps1 must be positive, got {eps1!r}")
    if not trace.closed:
        raise LiftError("the regularised resolvent is only available on closed curves")
    v = apply_symbol(a, trace.neumann, trace, matrix)
    v = curve_fourier_multiplier(v, lambda xi: 1.0 / (1.0 - xi**2 + 1j * eps1), trace.h, trace.length)
    return inner(v, trace.neumann, trace.length)


@dataclass
class LiftRecord:
    mode_id: int
    h: float
    symbol: str
    neumann: complex
    renormalized_dirichlet: complex
    dirichlet: complex
    renormalized_neumann: complex | None = None
    eps1: float | None = None
    lam2: float | None = None

    @property
    def cauchy(self) -> complex:
        return self.neumann + self.renormalized_dirichlet

    @property
    def renormalized_sum(self) -> complex:
        """``Phi^D + Phi^RN``, the combination tested against the ``w = -1/2`` state."""
        if self.renormalized_neumann is None:
            raise LiftError("record has no renormalised Neumann lift")
        return self.dirichlet + self.renormalized_neumann


def compute_lifts(a: SymbolFn, trace: CauchyTrace, eps1: float | None = None) -> LiftRecord:
    """All lifts of ``a`` for one trace, quantising ``Op_H(a)`` once."""
    if not trace.closed and eps1 is not None:
        raise LiftError("the regularised resolvent is only available on closed curves")
    M = _matrix(a, trace)
    rn = lift_renormalized_neumann(a, trace, eps1, M) if eps1 is not None else None
    return LiftRecord(
        mode_id=trace.mode_id,
        h=trace.h,
        symbol=a.name,
        neumann=lift_neumann(a, trace, M),
        renormalized_dirichlet=lift_renormalized_dirichlet(a, trace, matrix=M),
        dirichlet=lift_dirichlet(a, trace, M),
        renormalized_neumann=rn,
        eps1=eps1,
        lam2=trace.lam2,
    )


# ----------------------------------------------------------------------------- limit states


@dataclass(frozen=True)
class LimitState:
    symbol: str
    w: float
    value: float
    error: float
    liouville_volume: float


def liouville_volume(domain: Domain) -> float:
    """``mu(S*M) = 2 pi Area`` for a flat planar domain."""
    return 2 * np.pi * domain.area


def _trapezoid_2d(a: SymbolFn, w: float, length: float, ns: int, nt: int) -> float:
    # xi = sin(theta) over a full period: the integrand is smooth and periodic
    # in both variables, so the trapezoidal rule converges spectrally
    s = length * np.arange(ns) / ns
    th = 2 * np.pi * np.arange(nt) / nt
    weight = np.abs(np.cos(th)) ** (2 * w + 1)
    vals = np.asarray(a(s[:, None], np.sin(th)[None, :]))
    if np.iscomplexobj(vals) and np.max(np.abs(vals.imag)) > 0:
        raise LiftError(f"symbol {a.name} is not real on B*H")
    vals = np.real(vals)
    return 0.5 * (length / ns) * (2 * np.pi / nt) * float(np.sum(vals * weight[None, :]))


def limit_state(a: SymbolFn, w: float, curve: Curve, domain: Domain, tol: float = 1e-9) -> LimitState:
    """``(4 / mu(S*M)) int_H int_{-1}^{1} a(s, xi) (1 - xi^2)^w dxi ds``.

    The fibre integral is taken in ``xi = sin(theta)``, which removes the
    endpoint singularity for ``w = -1/2``.  Node counts double until two
    successive estimates agree to ``tol``.
    """
    if w not in (0.5, -0.5):
        raise LiftError(f"weight exponent must be +1/2 or -1/2, got {w!r}")
    if not a.real:
        raise LiftError(f"symbol {a.name} is flagged complex")
    length = curve.length
    ns = 1 if a.s_independent else 64
    nt = 128
    prev = _trapezoid_2d(a, w, length, ns, nt)
    err = np.inf
    for _ in range(14):
        ns2 = ns if a.s_independent else 2 * ns
        nt2 = 2 * nt
        cur = _trapezoid_2d(a, w, length, ns2, nt2)
        err = abs(cur - prev)
        ns, nt, prev = ns2, nt2, cur
        if err <= tol * max(1.0, abs(cur)):
            break
    else:
        raise LiftError(f"limit-state quadrature for {a.name} did not reach {tol}")
    vol = liouville_volume(domain)
    return LimitState(a.name, w, 4.0 / vol * prev, 4.0 / vol * err, vol)


# ----------------------------------------------------------------------------- gaps


@dataclass
class GapReport:
    """Per-mode gaps ``g_j = value_j - omega`` with window statistics."""

    omega: float
    mode_ids: np.ndarray
    gaps: np.ndarray
    running_mean: np.ndarray
    windows: list = field(default_factory=list)  # (lo, hi, count, mean value, mean gap, variance)


def convergence_gap(records, omega: float, kind: str = "cauchy", windows=None) -> GapReport:
    """Gaps of ``Phi^CD`` (``kind="cauchy"``) or ``Phi^D + Phi^RN`` (``kind="renormalized_sum"``).

    ``windows`` is a list of ``(lo, hi)`` ranges in ``lambda^2``; records are
    binned by their ``lam2``.  The variance is ``(1/n) sum |g_j|^2``.
    """
    records = list(records)
    if not records:
        return GapReport(omega, np.zeros(0, int), np.zeros(0, complex), np.zeros(0, complex), [])
    vals = np.array([getattr(r, kind) for r in records], dtype=complex)
    gaps = vals - omega
    running = np.cumsum(vals) / np.arange(1, len(vals) + 1)
    rep = GapReport(omega, np.array([r.mode_id for r in records]), gaps, running)
    if windows:
        lam2 = np.array([np.nan if r.lam2 is None else r.lam2 for r in records])
        for lo, hi in windows:
            sel = (lam2 >= lo) & (lam2 < hi)
            n = int(sel.sum())
            if n == 0:
                rep.windows.append((lo, hi, 0, np.nan, np.nan, np.nan))
                continue
            rep.windows.append(
                (lo, hi, n, complex(vals[sel].mean()), complex(gaps[sel].mean()), float(np.mean(np.abs(gaps[sel]) ** 2)))
            )
    return rep

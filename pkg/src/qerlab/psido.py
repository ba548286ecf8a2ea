"""
Weyl quantisation of order-zero symbols on a curve.

A symbol ``a(s, xi)`` is quantised on ``N`` uniform nodes with the DFT
frequency lattice ``xi_k = 2 pi k h / L``::

    M[i, j] = (1/N) sum_k exp(2 pi i k (i - j) / N) a(mid(s_i, s_j), xi_k)

where ``mid`` is the midpoint along the shorter arc.  For the antipodal pair
``|i - j| = N/2`` the two candidate midpoints are averaged, which keeps the
matrix exactly Hermitian for real symbols.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "SymbolFn",
    "QuantizedOperator",
    "QuantizationError",
    "smooth_step",
    "smooth_step_prime",
    "quantize",
    "kernel_oracle",
    "glancing_cutoff",
    "xi_cutoff",
    "const1",
    "cos_s",
    "gauss_xi",
    "poly_xi",
    "s_window",
    "arc_taper",
    "symbol_from_name",
    "SYMBOL_LIBRARY",
]

ORACLE_MAX_N = 512


class QuantizationError(ValueError):
    pass


# ----------------------------------------------------------------------------- profiles


def _psi(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def smooth_step(t):
    """C-infinity step: 0 for ``t <= 0``, 1 for ``t >= 1``."""
    t = np.asarray(t, dtype=float)
    a, b = _psi(t), _psi(1.0 - t)
    return a / (a + b)


def smooth_step_prime(t):
    t = np.asarray(t, dtype=float)
    a, b = _psi(t), _psi(1.0 - t)
    with np.errstate(divide="ignore", invalid="ignore"):
        da = np.where(t > 0, a / np.where(t > 0, t, 1.0) ** 2, 0.0)
        db = np.where(t < 1, -b / np.where(t < 1, 1.0 - t, 1.0) ** 2, 0.0)
    return (da * b - a * db) / (a + b) ** 2


# ----------------------------------------------------------------------------- symbols


@dataclass(frozen=True)
class SymbolFn:
    """An h-independent order-zero symbol on ``T*H``.

    ``func(s, xi)`` must broadcast; ``xi_support`` is a radius beyond which the
    symbol vanishes; ``window`` (``(s_lo, s_hi)``) is the s-support required on
    open arcs.
    """

    name: str
    func: Callable[[np.ndarray, np.ndarray], np.ndarray]
    xi_support: float
    real: bool = True
    window: tuple[float, float] | None = None
    s_independent: bool = False
    meta: dict = field(default_factory=dict, compare=False)

    def __call__(self, s, xi):
        return self.func(np.asarray(s, dtype=float), np.asarray(xi, dtype=float))

    principal = __call__

    def __mul__(self, other: "SymbolFn") -> "SymbolFn":
        f, g = self.func, other.func
        window = _intersect(self.window, other.window)
        return SymbolFn(
            f"{self.name}*{other.name}",
            lambda s, xi: f(s, xi) * g(s, xi),
            min(self.xi_support, other.xi_support),
            self.real and other.real,
            window,
            self.s_independent and other.s_independent,
        )

    def complement_times(self, cutoff: "SymbolFn") -> "SymbolFn":
        """``self * (1 - cutoff)``; support is that of ``self``."""
        f, g = self.func, cutoff.func
        return SymbolFn(
            f"{self.name}*(1-{cutoff.name})",
            lambda s, xi: f(s, xi) * (1.0 - g(s, xi)),
            self.xi_support,
            self.real and cutoff.real,
            self.window,
            self.s_independent and cutoff.s_independent,
        )

    def scaled(self, c: float) -> "SymbolFn":
        f = self.func
        return SymbolFn(f"{c:g}*{self.name}", lambda s, xi: c * f(s, xi), self.xi_support, self.real, self.window, self.s_independent)


def _intersect(w1, w2):
    if w1 is None:
        return w2
    if w2 is None:
        return w1
    return (max(w1[0], w2[0]), min(w1[1], w2[1]))


def xi_cutoff(plateau: float = 1.25, support: float = 1.6) -> SymbolFn:
    """Radial cutoff, 1 on ``|xi| <= plateau`` and 0 for ``|xi| >= support``."""
    if not 0 < plateau < support:
        raise QuantizationError("need 0 < plateau < support")

    def f(s, xi):
        out = 1.0 - smooth_step((np.abs(xi) - plateau) / (support - plateau))
        return np.broadcast_to(out, np.broadcast(s, xi).shape)

    return SymbolFn(f"cut({plateau:g},{support:g})", f, support, s_independent=True)


def const1(plateau: float = 1.25, support: float = 1.6) -> SymbolFn:
    """The constant symbol 1, cut off in ``xi`` outside the trace band."""
    c = xi_cutoff(plateau, support)
    return SymbolFn("const1", c.func, support, s_independent=True)


def cos_s(length: float, k: int = 1, offset: float = 0.0, amplitude: float = 1.0, plateau: float = 1.25, support: float = 1.6) -> SymbolFn:
    """``(offset + amplitude cos(2 pi k s / L))`` times the ``xi`` cutoff."""
    c = xi_cutoff(plateau, support).func

    def f(s, xi):
        return (offset + amplitude * np.cos(2 * np.pi * k * s / length)) * c(s, xi)

    name = f"cos_s(k={k})" if offset == 0 and amplitude == 1 else f"cos_s(k={k},{offset:g}+{amplitude:g})"
    return SymbolFn(name, f, support)


def gauss_xi(center: float = 0.0, width: float = 0.5, plateau: float = 1.25, support: float = 1.6) -> SymbolFn:
    c = xi_cutoff(plateau, support).func

    def f(s, xi):
        return np.exp(-0.5 * ((xi - center) / width) ** 2) * c(s, xi)

    return SymbolFn(f"gauss_xi({center:g},{width:g})", f, support, s_independent=True)


def poly_xi(coeffs=(0.0, 0.0, 1.0), plateau: float = 1.25, support: float = 1.6) -> SymbolFn:
    """Polynomial ``sum c_j xi^j`` times the cutoff (default ``xi^2``)."""
    coeffs = tuple(float(c) for c in coeffs)
    c = xi_cutoff(plateau, support).func

    def f(s, xi):
        return np.polynomial.polynomial.polyval(xi, coeffs) * c(s, xi)

    return SymbolFn(f"poly_xi{coeffs}", f, support, s_independent=True)


def s_window(lo: float, hi: float, ramp: float, plateau: float = 1.25, support: float = 1.6) -> SymbolFn:
    """Smooth bump in ``s``: 0 outside ``[lo, hi]``, 1 on ``[lo+ramp, hi-ramp]``."""
    c = xi_cutoff(plateau, support).func

    def f(s, xi):
        w = smooth_step((s - lo) / ramp) * smooth_step((hi - s) / ramp)
        return w * c(s, xi)

    return SymbolFn(f"s_window({lo:g},{hi:g},{ramp:g})", f, support, window=(lo, hi))


def arc_taper(s, window: tuple[float, float], length: float) -> np.ndarray:
    """Smooth function of arclength: 1 near ``window``, 0 near the arc ends.

    With ``g`` the smaller gap between the window and an end, the taper rises
    over ``[lo - 0.9 g, lo - 0.1 g]`` and falls over the mirror interval.
    """
    lo, hi = window
    gap = min(lo, length - hi)
    if gap <= 0:
        raise QuantizationError(f"s-window {window} touches the ends of the arc")
    s = np.asarray(s, dtype=float)
    return smooth_step((s - lo + 0.9 * gap) / (0.8 * gap)) * smooth_step((hi + 0.9 * gap - s) / (0.8 * gap))


def glancing_cutoff(eps1: float) -> SymbolFn:
    """Cutoff near the glancing set ``|xi| = 1``.

    Equal to 1 for ``1 - eps1^2 <= |xi| <= 1 + eps1^2`` and 0 for
    ``|xi| <= 1 - 2 eps1^2``; on the outer side it decays over
    ``[1 + eps1^2, 1 + 2 eps1^2]`` so that the cutoff stays smooth.
    """
    if not 0 < eps1 < 0.5:
        raise QuantizationError(f"eps1 must lie in (0, 1/2), got {eps1!r}")
    e2 = eps1**2

    def f(s, xi):
        r = np.abs(xi)
        up = smooth_step((r - (1 - 2 * e2)) / e2)
        down = 1.0 - smooth_step((r - (1 + e2)) / e2)
        return np.broadcast_to(up * down, np.broadcast(s, xi).shape)

    return SymbolFn(f"glancing({eps1:g})", f, 1 + 2 * e2, s_independent=True, meta={"eps1": eps1})


def symbol_from_name(name: str, length: float) -> SymbolFn:
    """Resolve a library name such as ``gauss_xi(0,0.5)`` or ``const1*cos_s``."""
    if "*" in name:
        parts = [symbol_from_name(p.strip(), length) for p in name.split("*")]
        out = parts[0]
        for p in parts[1:]:
            out = out * p
        return out
    base, _, rest = name.partition("(")
    args = [float(a) for a in rest.rstrip(")").split(",") if a.strip()] if rest else []
    if base not in SYMBOL_LIBRARY:
        raise QuantizationError(f"unknown symbol {name!r}")
    return SYMBOL_LIBRARY[base](length, *args)


SYMBOL_LIBRARY: dict[str, Callable[..., SymbolFn]] = {
    "const1": lambda L, *a: const1(*a),
    "cos_s": lambda L, *a: cos_s(L, *(int(a[0]),) if a else (), *a[1:]),
    "gauss_xi": lambda L, *a: gauss_xi(*a),
    "poly_xi": lambda L, *a: poly_xi(a) if a else poly_xi(),
    "glancing_cutoff": lambda L, *a: glancing_cutoff(*a),
    "s_window": lambda L, *a: s_window(*a),
    "xi_cutoff": lambda L, *a: xi_cutoff(*a),
}


# ----------------------------------------------------------------------------- quantisation


@dataclass
class QuantizedOperator:
    h: float
    n: int
    length: float
    matrix: np.ndarray
    symbol: str
    scheme: str = "weyl-midpoint"

    def __matmul__(self, v):
        return self.matrix @ v


def _check_lattice(a: SymbolFn, h: float, n: int, length: float, closed: bool) -> None:
    if n % 2:
        raise QuantizationError(f"node count must be even, got {n}")
    if h * (2 * np.pi / length) * (n / 2) < 1.5 * a.xi_support:
        raise QuantizationError(
            f"frequency lattice too coarse for symbol {a.name}: max |xi| = "
            f"{h * np.pi * n / length:.4g} < 1.5 * {a.xi_support:.4g}"
        )
    if not closed and a.window is None:
        raise QuantizationError(f"symbol {a.name} needs an s-window on an open arc")


def quantize(a: SymbolFn, h: float, n: int, length: float, closed: bool = True, scheme: str = "weyl") -> QuantizedOperator:
    """Dense ``N x N`` matrix of ``Op_H(a)`` acting on trace samples.

    ``scheme="left"`` evaluates the symbol at ``s_i`` instead of the midpoint
    (the standard left quantisation, used to check quantisation independence).
    """
    _check_lattice(a, h, n, length, closed)
    ds = length / n
    xi = 2 * np.pi * h * np.fft.fftfreq(n, d=1.0 / n) / length
    i = np.arange(n)
    if scheme == "left":
        A = a(i[:, None] * ds, xi[None, :])
        G = np.fft.ifft(A, axis=1)  # G[i, d] = kernel for offset d = i - j
        d = (i[:, None] - i[None, :]) % n
        M = np.take_along_axis(G, d, axis=1)
        return QuantizedOperator(h, n, length, M, a.name, "left")
    if scheme != "weyl":
        raise QuantizationError(f"unknown scheme {scheme!r}")
    if a.s_independent:
        row = np.fft.ifft(a(0.0, xi))
        M = row[(i[:, None] - i[None, :]) % n]
        return QuantizedOperator(h, n, length, M, a.name)
    mids = 0.5 * ds * np.arange(2 * n)
    G = np.fft.ifft(a(mids[:, None], xi[None, :]), axis=1)
    diff = i[:, None] - i[None, :]
    dw = (diff + n // 2) % n - n // 2  # wrapped into [-N/2, N/2)
    m = (2 * i[:, None] - dw) % (2 * n)
    M = G[m, dw % n]
    tie = dw == -(n // 2)
    if np.any(tie):
        m2 = np.broadcast_to((2 * i[:, None] - n // 2) % (2 * n), M.shape)
        M[tie] = 0.5 * (M[tie] + G[m2[tie], n // 2])
    return QuantizedOperator(h, n, length, M, a.name)


def kernel_oracle(a: SymbolFn, h: float, n: int, length: float) -> np.ndarray:
    """Direct ``O(N^3)`` evaluation of the same Weyl sum, for tests only."""
    if n > ORACLE_MAX_N:
        raise QuantizationError(f"oracle limited to N <= {ORACLE_MAX_N}")
    ds = length / n
    k = np.concatenate([np.arange(0, n // 2), np.arange(-n // 2, 0)])
    xi = 2 * np.pi * h * k / length
    M = np.zeros((n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            d = i - j
            if d > n // 2:
                d -= n
            elif d < -n // 2:
                d += n
            phase = np.exp(2j * np.pi * k * d / n)
            if abs(d) == n // 2:
                s1 = (i * ds - 0.5 * d * ds) % length
                s2 = (i * ds + 0.5 * d * ds) % length
                vals = 0.5 * (a(np.full(n, s1), xi) + a(np.full(n, s2), xi))
            else:
                s = (i * ds - 0.5 * d * ds) % length
                vals = a(np.full(n, s), xi)
            M[i, j] = np.sum(phase * vals) / n
    return M

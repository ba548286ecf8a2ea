"""
Semiclassical Cauchy data on a curve and Fourier calculus along it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .eigensolver import EigenMode
from .geometry import Curve

__all__ = [
    "CauchyTrace",
    "TraceError",
    "default_node_count",
    "dirichlet_trace",
    "neumann_trace",
    "cauchy_trace",
    "frequencies",
    "curve_fourier_multiplier",
    "multiplier_matrix",
]

MIN_POINTS_PER_WAVELENGTH = 6


class TraceError(ValueError):
    pass


@dataclass
class CauchyTrace:
    """``(phi|_H, h D_nu phi|_H)`` sampled at ``s_i = i L / N``."""

    h: float
    length: float
    dirichlet: np.ndarray
    neumann: np.ndarray
    closed: bool = True
    mode_id: int = 0
    curve_hash: str = ""
    lam2: float | None = None

    def __post_init__(self):
        self.dirichlet = np.asarray(self.dirichlet, dtype=complex)
        self.neumann = np.asarray(self.neumann, dtype=complex)
        if self.dirichlet.shape != self.neumann.shape or self.dirichlet.ndim != 1:
            raise TraceError("Dirichlet and Neumann samples must be 1-D and equally long")
        if self.n % 2:
            raise TraceError(f"node count must be even, got {self.n}")

    @property
    def n(self) -> int:
        return self.dirichlet.size

    @property
    def weight(self) -> float:
        """Trapezoidal quadrature weight ``L / N``."""
        return self.length / self.n

    @property
    def nodes(self) -> np.ndarray:
        return self.length * np.arange(self.n) / self.n

    def frequencies(self) -> np.ndarray:
        return frequencies(self.n, self.h, self.length)


def default_node_count(curve: Curve, h: float) -> int:
    """Smallest even count with at least 8 nodes per wavelength ``2 pi h``."""
    return int(2 * np.ceil(4 * curve.length / (2 * np.pi * h)))


def _check_resolution(mode: EigenMode) -> None:
    if mode.field is None:
        return
    ppw = 2 * np.pi * mode.h / mode.field.grid.delta
    if ppw < MIN_POINTS_PER_WAVELENGTH:
        need = 2 * np.pi * mode.h / MIN_POINTS_PER_WAVELENGTH
        raise TraceError(
            f"grid under-resolves the mode ({ppw:.2f} points per wavelength); "
            f"need delta <= {need:.4g}"
        )


def _nodes(curve: Curve, n: int) -> np.ndarray:
    if n % 2:
        raise TraceError(f"node count must be even, got {n}")
    return curve.nodes(n)


def dirichlet_trace(mode: EigenMode, curve: Curve, n: int) -> np.ndarray:
    """``phi(gamma(s_i))``: exact for analytic modes, bicubic for grid modes."""
    _check_resolution(mode)
    p = curve.point(_nodes(curve, n))
    return np.asarray(mode.value(p[:, 0], p[:, 1]), dtype=complex)


def neumann_trace(mode: EigenMode, curve: Curve, n: int) -> np.ndarray:
    """``(h/i) grad(phi) . nu`` at the nodes, ``nu`` pointing into ``M_+``."""
    _check_resolution(mode)
    s = _nodes(curve, n)
    p = curve.point(s)
    nu = curve.normal(s)
    gx, gy = mode.gradient(p[:, 0], p[:, 1])
    return (mode.h / 1j) * (np.asarray(gx) * nu[:, 0] + np.asarray(gy) * nu[:, 1])


def cauchy_trace(mode: EigenMode, curve: Curve, n: int | None = None) -> CauchyTrace:
    n = default_node_count(curve, mode.h) if n is None else n
    return CauchyTrace(
        h=mode.h,
        length=curve.length,
        dirichlet=dirichlet_trace(mode, curve, n),
        neumann=neumann_trace(mode, curve, n),
        closed=curve.closed,
        mode_id=mode.mode_id,
        curve_hash=curve.spec_hash,
        lam2=mode.lam2,
    )


def frequencies(n: int, h: float, length: float) -> np.ndarray:
    """Semiclassical frequency lattice ``xi_k = 2 pi k h / L`` in FFT order."""
    return 2 * np.pi * h * np.fft.fftfreq(n, d=1.0 / n) / length


def curve_fourier_multiplier(
    values: np.ndarray,
    multiplier: Callable[[np.ndarray], np.ndarray],
    h: float,
    length: float,
    closed: bool = True,
) -> np.ndarray:
    """``IDFT[m(xi_k) DFT[values]]`` on a closed curve.

    Examples
    --------
    ``m(xi) = 1 - xi**2`` realises ``1 + h^2 Delta_H``; ``1/(1 - xi**2 + 1j*eps1)``
    its regularised inverse.
    """
    if not closed:
        raise TraceError("Fourier multipliers need a closed curve; use a windowed symbol on open arcs")
    values = np.asarray(values, dtype=complex)
    xi = frequencies(values.shape[-1], h, length)
    m = np.asarray(multiplier(xi), dtype=complex)
    if not np.all(np.isfinite(m)):
        raise TraceError("multiplier is unbounded on the frequency lattice")
    return np.fft.ifft(m * np.fft.fft(values, axis=-1), axis=-1)


def multiplier_matrix(multiplier, n: int, h: float, length: float) -> np.ndarray:
    """Dense matrix of a Fourier multiplier (used for path-equivalence checks)."""
    xi = frequencies(n, h, length)
    F = np.fft.fft(np.eye(n), axis=0)
    return np.fft.ifft(np.asarray(multiplier(xi), dtype=complex)[:, None] * F, axis=0)

"""
Dirichlet eigenpairs of the Laplacian on planar domains.

Grid modes come from a symmetric embedded-boundary five-point operator
(exterior nodes eliminated, boundary cut fractions folded into the diagonal)
solved window by window with shift-invert Lanczos.  Rectangle and disk modes
are also available in closed form as test oracles.
"""

from __future__ import annotations

from dataclasses import dataclass
from dataclasses import field as dc_field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import ndimage, optimize, special

from .geometry import Domain

__all__ = [
    "SolverError",
    "GridSpec",
    "GridField",
    "DiscreteLaplacian",
    "AnalyticForm",
    "EigenMode",
    "assemble_laplacian",
    "eigenvalue_count",
    "solve_window",
    "analytic_modes",
    "bessel_zero",
    "sample_on_grid",
    "quasimode_residual",
    "accept_quasimode",
]

THETA_MIN = 1e-3


class SolverError(RuntimeError):
    """Raised when assembly, factorisation or the Lanczos iteration fails."""


@dataclass(frozen=True)
class GridSpec:
    x0: float
    y0: float
    delta: float
    nx: int
    ny: int

    @property
    def xs(self) -> np.ndarray:
        return self.x0 + self.delta * np.arange(self.nx)

    @property
    def ys(self) -> np.ndarray:
        return self.y0 + self.delta * np.arange(self.ny)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.xs, self.ys, indexing="ij")


@dataclass
class GridField:
    """Samples ``u(x_i, y_j)`` on a uniform grid, zero off the interior mask."""

    grid: GridSpec
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.values = np.where(self.mask, self.values, 0)

    def norm(self) -> float:
        """Trapezoidal L2 norm (the field vanishes on and beyond the boundary)."""
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2)) * self.grid.delta)

    def interpolate(self, x, y, order: int = 3) -> np.ndarray:
        """Spline interpolation (bicubic for ``order=3``) at arbitrary points."""
        g = self.grid
        coords = np.array([(np.ravel(x) - g.x0) / g.delta, (np.ravel(y) - g.y0) / g.delta])
        v = self.values
        if np.iscomplexobj(v):
            out = ndimage.map_coordinates(v.real, coords, order=order, mode="nearest") + 1j * ndimage.map_coordinates(
                v.imag, coords, order=order, mode="nearest"
            )
        else:
            out = ndimage.map_coordinates(v, coords, order=order, mode="nearest")
        return out.reshape(np.shape(x))

    def gradient(self) -> tuple["GridField", "GridField"]:
        """Fourth-order centred differences; the field is extended by zero."""
        v = np.pad(self.values, 2)
        d = self.grid.delta
        gx = (-v[4:, 2:-2] + 8 * v[3:-1, 2:-2] - 8 * v[1:-3, 2:-2] + v[:-4, 2:-2]) / (12 * d)
        gy = (-v[2:-2, 4:] + 8 * v[2:-2, 3:-1] - 8 * v[2:-2, 1:-3] + v[2:-2, :-4]) / (12 * d)
        full = np.ones_like(self.mask)
        return GridField(self.grid, gx, full), GridField(self.grid, gy, full)


@dataclass
class DiscreteLaplacian:
    """Sparse SPD matrix approximating ``-Delta`` with Dirichlet conditions."""

    domain: Domain
    grid: GridSpec
    mask: np.ndarray
    matrix: sp.csr_matrix

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def to_field(self, vec: np.ndarray) -> GridField:
        values = np.zeros(self.mask.shape, dtype=vec.dtype)
        values[self.mask] = vec
        return GridField(self.grid, values, self.mask)

    def from_field(self, f: GridField) -> np.ndarray:
        return f.values[self.mask]


@dataclass(frozen=True)
class AnalyticForm:
    """Closed-form eigenfunction with exact value and gradient."""

    label: str
    value: Callable[[np.ndarray, np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]


@dataclass
class EigenMode:
    """One (quasi-)eigenpair ``(-h^2 Delta - 1) phi = 0`` with ``h = 1/lambda``."""

    lam2: float
    domain: Domain
    field: GridField | None = None
    analytic: AnalyticForm | None = None
    residual: float = 0.0
    mode_id: int = 0
    meta: dict = dc_field(default_factory=dict)

    @property
    def h(self) -> float:
        return 1.0 / np.sqrt(self.lam2)

    @property
    def lam(self) -> float:
        return float(np.sqrt(self.lam2))

    def value(self, x, y) -> np.ndarray:
        if self.analytic is not None:
            return self.analytic.value(np.asarray(x, float), np.asarray(y, float))
        return self.field.interpolate(x, y)

    def gradient(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        if self.analytic is not None:
            return self.analytic.gradient(np.asarray(x, float), np.asarray(y, float))
        gx, gy = self._grad_fields()
        return gx.interpolate(x, y), gy.interpolate(x, y)

    def _grad_fields(self):
        cache = self.meta.get("_grad")
        if cache is None:
            cache = self.field.gradient()
            self.meta["_grad"] = cache
        return cache

    def drop_field(self) -> None:
        """Release grid samples (keeps scalars) to bound memory in long runs."""
        self.field = None
        self.meta.pop("_grad", None)


# ------------------------------------------------------------------------------ assembly


def assemble_laplacian(domain: Domain, delta: float) -> DiscreteLaplacian:
    """Five-point ``-Delta`` on the nodes strictly inside ``domain``.

    Where a stencil arm leaves the domain at fraction ``theta`` of the spacing,
    the ghost value is extrapolated linearly through the zero boundary value;
    this only changes the diagonal, so the matrix stays symmetric and the
    scheme is second-order accurate for smooth boundaries.
    """
    if not np.isfinite(delta) or delta <= 0:
        raise SolverError("grid spacing must be positive")
    if domain.feature / delta < 10:
        raise SolverError(
            f"grid spacing {delta:g} too coarse: need >= 10 points across the narrowest "
            f"feature ({domain.feature:g})"
        )
    x0, x1, y0, y1 = domain.bbox
    nx = int(np.floor((x1 - x0) / delta + 1e-9)) + 1
    ny = int(np.floor((y1 - y0) / delta + 1e-9)) + 1
    grid = GridSpec(x0, y0, delta, nx, ny)
    X, Y = grid.mesh()
    mask = domain.distance(X, Y) > 0
    n = int(mask.sum())
    if n < 4:
        raise SolverError("degenerate grid: fewer than four interior nodes")
    index = -np.ones(mask.shape, dtype=np.int64)
    index[mask] = np.arange(n)
    I, J = np.nonzero(mask)
    k = index[I, J]
    diag = np.zeros(n)
    rows, cols = [], []
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        I2, J2 = I + di, J + dj
        ok = (I2 >= 0) & (I2 < nx) & (J2 >= 0) & (J2 < ny)
        nb = np.zeros(I.size, dtype=bool)
        nb[ok] = mask[I2[ok], J2[ok]]
        rows.append(k[nb])
        cols.append(index[I2[nb], J2[nb]])
        diag[k[nb]] += 1.0
        out = ~nb
        if np.any(out):
            theta = _cut_fraction(domain, X[I[out], J[out]], Y[I[out], J[out]], di * delta, dj * delta)
            diag[k[out]] += 1.0 / np.maximum(theta, THETA_MIN)
    off = np.concatenate(rows)
    data = np.concatenate([-np.ones(off.size), diag])
    r = np.concatenate([off, np.arange(n)])
    c = np.concatenate([np.concatenate(cols), np.arange(n)])
    A = sp.csr_matrix((data / delta**2, (r, c)), shape=(n, n))
    return DiscreteLaplacian(domain, grid, mask, A)


def _cut_fraction(domain: Domain, x, y, dx, dy, iters: int = 60) -> np.ndarray:
    lo = np.zeros(x.shape)
    hi = np.ones(x.shape)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        inside = domain.distance(x + mid * dx, y + mid * dy) > 0
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return 0.5 * (lo + hi)


# ------------------------------------------------------------------------------ solving


class _ShiftFactor:
    """LU of ``A - sigma I`` with symmetric ordering, exposing the inertia."""

    def __init__(self, A: sp.csr_matrix, sigma: float):
        self.sigma = sigma
        M = (A - sigma * sp.identity(A.shape[0], format="csr")).tocsc()
        try:
            self.lu = spla.splu(
                M,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options={"SymmetricMode": True},
            )
        except RuntimeError as exc:  # exactly singular shift
            raise SolverError(f"factorisation failed at shift {sigma:.12g}: {exc}") from exc

    def below(self) -> int:
        if not np.array_equal(self.lu.perm_r, self.lu.perm_c):
            raise SolverError(f"pivoting broke symmetric ordering at shift {self.sigma:.12g}")
        return int(np.sum(self.lu.U.diagonal() < 0))

    def operator(self) -> spla.LinearOperator:
        n = self.lu.shape[0]
        return spla.LinearOperator((n, n), matvec=self.lu.solve, dtype=float)


def _factor(A, sigma):
    # nudge off an exact eigenvalue; the window logic only needs approximate centres
    for attempt in range(4):
        try:
            return _ShiftFactor(A, sigma * (1 + 1e-9 * attempt))
        except SolverError:
            if attempt == 3:
                raise


def eigenvalue_count(op: DiscreteLaplacian, lam2: float) -> int:
    """Number of discrete eigenvalues strictly below ``lam2`` (Sylvester inertia)."""
    return _factor(op.matrix, lam2).below()


def solve_window(
    op: DiscreteLaplacian,
    window: Sequence[float],
    k_max: int = 200,
    seed: int = 0,
    tol: float = 1e-12,
    maxiter: int | None = None,
    first_id: int = 0,
) -> list[EigenMode]:
    """All discrete eigenpairs with ``lam2`` in ``[lo, hi)``, at most ``k_max``.

    Completeness is certified by comparing the number of Ritz values found
    with the inertia count of ``A - lo`` and ``A - hi``.
    """
    lo, hi = float(window[0]), float(window[1])
    if not (0 < lo < hi):
        raise SolverError(f"window must satisfy 0 < lo < hi, got {window!r}")
    A = op.matrix
    f_lo, f_hi = _factor(A, lo), _factor(A, hi)
    expected = f_hi.below() - f_lo.below()
    if expected == 0:
        return []
    want = min(expected, k_max)
    sigma = 0.5 * (lo + hi) if expected <= k_max else lo
    fac = _factor(A, sigma)
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(op.size)
    k = min(want + max(6, want // 5), op.size - 2)
    while True:
        try:
            w, V = spla.eigsh(
                A, k=k, sigma=sigma, which="LM", OPinv=fac.operator(), v0=v0, tol=tol, maxiter=maxiter
            )
        except spla.ArpackNoConvergence as exc:
            raise SolverError(f"Lanczos did not converge at shift {sigma:.12g}") from exc
        sel = (w >= lo) & (w < hi)
        if expected <= k_max:
            covered = np.max(np.abs(w - sigma)) >= max(hi - sigma, sigma - lo)
            done = covered and sel.sum() == expected
        else:
            inw = np.sort(w[sel])
            done = inw.size >= want and np.max(np.abs(w - sigma)) >= inw[want - 1] - sigma
        if done or k >= op.size - 2:
            break
        k = min(int(1.6 * k) + 1, op.size - 2)
    V = V[:, sel]
    w, V = _rayleigh_ritz(A, V)
    w, V = w[:want], V[:, :want]
    if expected <= k_max and w.size != expected:
        raise SolverError(f"found {w.size} eigenvalues in window, inertia says {expected}")
    modes = []
    delta = op.grid.delta
    for j in range(w.size):
        vec = V[:, j]
        # deterministic sign: largest-magnitude entry positive
        vec = vec * np.sign(vec[np.argmax(np.abs(vec))])
        res = np.linalg.norm(A @ vec - w[j] * vec) / w[j]
        modes.append(
            EigenMode(
                lam2=float(w[j]),
                domain=op.domain,
                field=op.to_field(vec / delta),
                residual=float(res),
                mode_id=first_id + j,
            )
        )
    return modes


def _rayleigh_ritz(A, V):
    Q, _ = np.linalg.qr(V)
    T = Q.T @ (A @ Q)
    w, Y = np.linalg.eigh(0.5 * (T + T.T))
    return w, Q @ Y


# ------------------------------------------------------------------------------ oracles


def bessel_zero(order: int, k: int) -> float:
    """k-th positive zero of ``J_order`` by bracketing and Brent's method."""
    order = abs(int(order))
    found = 0
    x = max(1e-6, order * 0.9)
    step = 0.25
    f_prev = special.jv(order, x)
    while True:
        x_next = x + step
        f_next = special.jv(order, x_next)
        if f_prev == 0.0 or f_prev * f_next < 0:
            found += 1
            if found == k:
                return optimize.brentq(lambda t: special.jv(order, t), x, x_next, xtol=1e-15, rtol=1e-15)
        x, f_prev = x_next, f_next


def _rectangle_mode(domain: Domain, m: int, n: int, mode_id: int) -> EigenMode:
    a, b = domain.params["a"], domain.params["b"]
    c = 2.0 / np.sqrt(a * b)
    kx, ky = m * np.pi / a, n * np.pi / b

    def value(x, y):
        return c * np.sin(kx * x) * np.sin(ky * y)

    def gradient(x, y):
        return c * kx * np.cos(kx * x) * np.sin(ky * y), c * ky * np.sin(kx * x) * np.cos(ky * y)

    form = AnalyticForm(f"rect({m},{n})", value, gradient)
    return EigenMode(kx**2 + ky**2, domain, analytic=form, mode_id=mode_id, meta={"m": m, "n": n})


def _disk_mode(domain: Domain, ell: int, k: int, mode_id: int) -> EigenMode:
    R, cx, cy = domain.params["R"], domain.params["cx"], domain.params["cy"]
    j = bessel_zero(ell, k)
    lam = j / R
    c = 1.0 / (np.sqrt(np.pi) * R * abs(special.jv(abs(ell) + 1, j)))

    def value(x, y):
        r = np.hypot(x - cx, y - cy)
        th = np.arctan2(y - cy, x - cx)
        return c * special.jv(ell, lam * r) * np.exp(1j * ell * th)

    def gradient(x, y):
        dx, dy = x - cx, y - cy
        r = np.hypot(dx, dy)
        th = np.arctan2(dy, dx)
        e = np.exp(1j * ell * th)
        radial = c * lam * special.jvp(ell, lam * r) * e
        with np.errstate(invalid="ignore", divide="ignore"):
            angular = np.where(r > 0, c * special.jv(ell, lam * r) * 1j * ell * e / r, 0)
            ux, uy = np.where(r > 0, dx / r, 1.0), np.where(r > 0, dy / r, 0.0)
        # d/dx = cos * d/dr - sin/r * d/dth, with the 1/r already in ``angular``
        return radial * ux - angular * uy, radial * uy + angular * ux

    form = AnalyticForm(f"disk({ell},{k})", value, gradient)
    return EigenMode(lam**2, domain, analytic=form, mode_id=mode_id, meta={"ell": ell, "k": k})


def analytic_modes(domain: Domain, indices: Sequence[tuple[int, int]]) -> list[EigenMode]:
    """Closed-form Dirichlet modes, L2-normalised.

    Rectangle indices are ``(m, n)`` with ``phi = 2/sqrt(ab) sin(m pi x/a) sin(n pi y/b)``;
    disk indices are ``(ell, k)`` with ``phi ~ J_ell(j_{ell,k} r/R) exp(i ell theta)``.
    """
    if domain.kind == "rectangle":
        make = _rectangle_mode
        for m, n in indices:
            if m < 1 or n < 1:
                raise ValueError(f"rectangle indices must be >= 1, got {(m, n)}")
    elif domain.kind == "disk":
        make = _disk_mode
    else:
        raise ValueError(f"no closed-form modes for domain kind {domain.kind!r}")
    modes = [make(domain, int(p), int(q), i) for i, (p, q) in enumerate(indices)]
    return modes


def sample_on_grid(mode: EigenMode, op: DiscreteLaplacian) -> EigenMode:
    """Grid samples of an analytic mode (for residual and trace-accuracy studies)."""
    X, Y = op.grid.mesh()
    vals = np.where(op.mask, mode.analytic.value(X, Y), 0)
    f = GridField(op.grid, vals, op.mask)
    return EigenMode(mode.lam2, mode.domain, field=f, mode_id=mode.mode_id, meta=dict(mode.meta))


def quasimode_residual(mode: EigenMode, op: DiscreteLaplacian | None = None) -> float:
    """``||(-h^2 Delta_delta - 1) u|| / ||u||`` for the grid samples ``u`` of ``mode``."""
    if mode.field is None:
        raise ValueError("quasimode residual needs grid samples")
    if op is None:
        op = assemble_laplacian(mode.domain, mode.field.grid.delta)
    u = op.from_field(mode.field)
    nu = np.linalg.norm(u)
    if nu == 0:
        raise ValueError("zero field has no residual (norm is zero)")
    r = op.matrix @ u / mode.lam2 - u
    return float(np.linalg.norm(r) / nu)


def accept_quasimode(mode: EigenMode, c: float = 0.1) -> bool:
    """The ``o(h)`` gate: accept when the stored residual is at most ``c h``."""
    return mode.residual <= c * mode.h

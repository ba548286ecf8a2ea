"""
Planar domains, interior curves and Fermi collars.

Conventions
-----------
* Domains carry a signed distance function that is positive inside.
* Closed curves are oriented counter-clockwise and ``normal`` points into the
  enclosed region (the ``M_+`` side).  Open arcs use the left normal of their
  direction of travel.
* Signed curvature satisfies ``t' = kappa * nu`` so that the Fermi Jacobian is
  ``J(s, x_n) = 1 - kappa(s) * x_n``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import integrate, interpolate, ndimage

__all__ = [
    "Domain",
    "Curve",
    "FermiChart",
    "GeometryError",
    "build_domain",
    "build_curve",
    "fermi_chart",
    "separates",
]


class GeometryError(ValueError):
    """Invalid domain, curve or chart request."""


def _cross(u, v):
    """z-component of the planar cross product, broadcasting over leading axes."""
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def _spec_hash(spec: dict) -> str:
    blob = json.dumps(spec, sort_keys=True, default=float).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _segment_distance(px, py, ax, ay, bx, by):
    """Unsigned distance from points to the segment ``[a, b]``."""
    dx, dy = bx - ax, by - ay
    len2 = dx * dx + dy * dy
    t = np.clip(((px - ax) * dx + (py - ay) * dy) / len2, 0.0, 1.0)
    return np.hypot(px - ax - t * dx, py - ay - t * dy)


# --------------------------------------------------------------------------- domains


@dataclass(frozen=True)
class Domain:
    """A bounded planar region ``M`` with Dirichlet boundary.

    Use :func:`build_domain` rather than instantiating directly.
    """

    kind: str
    params: dict[str, Any]
    area: float
    bbox: tuple[float, float, float, float]
    feature: float
    _vertices: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def spec(self) -> dict[str, Any]:
        return {"kind": self.kind, **self.params}

    @property
    def spec_hash(self) -> str:
        return _spec_hash(self.spec)

    @property
    def integrable(self) -> bool:
        """True for domains with integrable billiard flow (QE hypothesis fails)."""
        return self.kind in ("rectangle", "disk")

    def distance(self, x, y) -> np.ndarray:
        """Signed distance to the boundary, positive inside."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        p = self.params
        if self.kind == "rectangle":
            a, b = p["a"], p["b"]
            qx = np.maximum(-x, x - a)
            qy = np.maximum(-y, y - b)
            outside = np.hypot(np.maximum(qx, 0.0), np.maximum(qy, 0.0))
            inside = np.minimum(np.maximum(qx, qy), 0.0)
            return -(outside + inside)
        if self.kind == "disk":
            return p["R"] - np.hypot(x - p["cx"], y - p["cy"])
        if self.kind == "stadium":
            alpha, r = p["alpha"], p["r"]
            px = np.clip(x, -alpha, alpha)
            return r - np.hypot(x - px, y)
        # polygon
        v = self._vertices
        d = np.full(np.broadcast(x, y).shape, np.inf)
        inside = np.zeros(d.shape, dtype=bool)
        n = len(v)
        for i in range(n):
            ax, ay = v[i]
            bx, by = v[(i + 1) % n]
            d = np.minimum(d, _segment_distance(x, y, ax, ay, bx, by))
            crosses = (ay > y) != (by > y)
            with np.errstate(divide="ignore", invalid="ignore"):
                xint = ax + (y - ay) * (bx - ax) / (by - ay)
            inside ^= crosses & (x < xint)
        return np.where(inside, d, -d)

    def inside(self, x, y) -> np.ndarray:
        return self.distance(x, y) > 0.0


def _require_positive(**kw: float) -> None:
    for name, value in kw.items():
        if not np.isfinite(value) or value <= 0:
            raise GeometryError(f"parameter {name!r} must be positive, got {value!r}")


def build_domain(spec: dict[str, Any]) -> Domain:
    """Build a :class:`Domain` from a parameter record.

    Supported kinds::

        {"kind": "rectangle", "a": 1.0, "b": 1.0}          # [0, a] x [0, b]
        {"kind": "disk", "R": 1.0, "cx": 0.0, "cy": 0.0}
        {"kind": "stadium", "alpha": 1.0, "r": 1.0}        # centred at the origin
        {"kind": "polygon", "vertices": [[x0, y0], ...]}
    """
    kind = spec.get("kind")
    if kind == "rectangle":
        a, b = float(spec["a"]), float(spec["b"])
        _require_positive(a=a, b=b)
        return Domain("rectangle", {"a": a, "b": b}, a * b, (0.0, a, 0.0, b), min(a, b))
    if kind == "disk":
        R = float(spec["R"])
        cx, cy = float(spec.get("cx", 0.0)), float(spec.get("cy", 0.0))
        _require_positive(R=R)
        return Domain(
            "disk",
            {"R": R, "cx": cx, "cy": cy},
            np.pi * R**2,
            (cx - R, cx + R, cy - R, cy + R),
            2 * R,
        )
    if kind == "stadium":
        alpha, r = float(spec["alpha"]), float(spec["r"])
        _require_positive(alpha=alpha, r=r)
        area = 4 * alpha * r + np.pi * r**2
        return Domain(
            "stadium",
            {"alpha": alpha, "r": r},
            area,
            (-alpha - r, alpha + r, -r, r),
            2 * r,
        )
    if kind == "polygon":
        v = np.asarray(spec["vertices"], dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise GeometryError("parameter 'vertices' must be a list of >= 3 points")
        x, y = v[:, 0], v[:, 1]
        signed = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
        _require_positive(area=abs(signed))
        if signed < 0:
            v = v[::-1].copy()
        bbox = (v[:, 0].min(), v[:, 0].max(), v[:, 1].min(), v[:, 1].max())
        feature = min(bbox[1] - bbox[0], bbox[3] - bbox[2])
        return Domain(
            "polygon",
            {"vertices": v.tolist()},
            abs(signed),
            tuple(float(t) for t in bbox),
            feature,
            _vertices=v,
        )
    raise GeometryError(f"unknown domain kind {kind!r}")


# --------------------------------------------------------------------------- curves


class Curve:
    """Arclength-parametrised curve ``H`` inside a domain.

    Attributes
    ----------
    kind : str
        ``"circle"``, ``"segment"`` or ``"spline"``.
    length : float
        Total arclength ``L``.
    closed : bool
    eps_max : float
        Supremum of admissible collar half-widths.
    """

    def __init__(self, kind: str, params: dict[str, Any], length: float, closed: bool):
        self.kind = kind
        self.params = params
        self.length = float(length)
        self.closed = closed
        self.eps_max = np.inf
        self._spline = None

    def __repr__(self) -> str:
        return f"Curve({self.kind!r}, L={self.length:.6g}, eps_max={self.eps_max:.4g})"

    @property
    def spec(self) -> dict[str, Any]:
        return {"kind": self.kind, **self.params}

    @property
    def spec_hash(self) -> str:
        return _spec_hash(self.spec)

    # -- evaluation, all vectorised in s ------------------------------------------------

    def _wrap(self, s):
        s = np.asarray(s, dtype=float)
        return np.mod(s, self.length) if self.closed else s

    def point(self, s) -> np.ndarray:
        """``gamma(s)`` as an array of shape ``s.shape + (2,)``."""
        s = self._wrap(s)
        p = self.params
        if self.kind == "circle":
            th = s / p["rho"]
            return np.stack([p["cx"] + p["rho"] * np.cos(th), p["cy"] + p["rho"] * np.sin(th)], -1)
        if self.kind == "segment":
            t = self._seg_tangent()
            return np.stack([p["x0"] + s * t[0], p["y0"] + s * t[1]], -1)
        u = self._s_to_u(s)
        return np.stack([self._spline[0](u), self._spline[1](u)], -1)

    def tangent(self, s) -> np.ndarray:
        s = self._wrap(s)
        if self.kind == "circle":
            th = s / self.params["rho"]
            return np.stack([-np.sin(th), np.cos(th)], -1)
        if self.kind == "segment":
            return np.broadcast_to(self._seg_tangent(), np.shape(s) + (2,)).copy()
        u = self._s_to_u(s)
        d = np.stack([self._spline[0](u, 1), self._spline[1](u, 1)], -1)
        return d / np.linalg.norm(d, axis=-1, keepdims=True)

    def normal(self, s) -> np.ndarray:
        t = self.tangent(s)
        return np.stack([-t[..., 1], t[..., 0]], -1)

    def curvature(self, s) -> np.ndarray:
        s = self._wrap(s)
        if self.kind == "circle":
            return np.full(np.shape(s), 1.0 / self.params["rho"])
        if self.kind == "segment":
            return np.zeros(np.shape(s))
        u = self._s_to_u(s)
        x1, y1 = self._spline[0](u, 1), self._spline[1](u, 1)
        x2, y2 = self._spline[0](u, 2), self._spline[1](u, 2)
        return (x1 * y2 - y1 * x2) / np.hypot(x1, y1) ** 3

    def nodes(self, n: int) -> np.ndarray:
        """Uniform nodes ``s_i = i L / n``."""
        return self.length * np.arange(n) / n

    def to_cartesian(self, s, xn) -> np.ndarray:
        s, xn = np.broadcast_arrays(np.asarray(s, float), np.asarray(xn, float))
        return self.point(s) + xn[..., None] * self.normal(s)

    def to_fermi(self, xy) -> tuple[np.ndarray, np.ndarray]:
        """Project Cartesian points onto the curve: returns ``(s, x_n)``."""
        xy = np.asarray(xy, dtype=float)
        flat = xy.reshape(-1, 2)
        probe = self.nodes(512) if self.closed else np.linspace(0, self.length, 512)
        g = self.point(probe)
        d2 = ((flat[:, None, :] - g[None, :, :]) ** 2).sum(-1)
        s = probe[np.argmin(d2, axis=1)]
        for _ in range(30):
            r = flat - self.point(s)
            t = self.tangent(s)
            k = self.curvature(s)
            rt = (r * t).sum(-1)
            rn = (r * self.normal(s)).sum(-1)
            step = rt / (1.0 - k * rn)
            s = s + step
            if not self.closed:
                s = np.clip(s, 0.0, self.length)
            if np.max(np.abs(step)) < 1e-14 * max(1.0, self.length):
                break
        s = self._wrap(s)
        xn = ((flat - self.point(s)) * self.normal(s)).sum(-1)
        return s.reshape(xy.shape[:-1]), xn.reshape(xy.shape[:-1])

    # -- internals ---------------------------------------------------------------------

    def _seg_tangent(self) -> np.ndarray:
        p = self.params
        v = np.array([p["x1"] - p["x0"], p["y1"] - p["y0"]])
        return v / np.linalg.norm(v)

    def _s_to_u(self, s):
        return self._inverse(s)


def _spline_curve(points: np.ndarray) -> Curve:
    pts = np.asarray(points, dtype=float)
    if np.allclose(pts[0], pts[-1]):
        pts = pts[:-1]
    x, y = pts[:, 0], pts[:, 1]
    if 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y) < 0:
        pts = pts[::-1]
    closed_pts = np.vstack([pts, pts[:1]])
    u = np.arange(len(closed_pts), dtype=float)
    sx = interpolate.CubicSpline(u, closed_pts[:, 0], bc_type="periodic")
    sy = interpolate.CubicSpline(u, closed_pts[:, 1], bc_type="periodic")

    def speed(t):
        return np.hypot(sx(t, 1), sy(t, 1))

    knots = np.arange(len(pts) + 1)
    pieces = [integrate.quad(speed, a, b, epsabs=1e-13, epsrel=1e-13)[0] for a, b in zip(knots[:-1], knots[1:])]
    S = np.concatenate([[0.0], np.cumsum(pieces)])
    length = S[-1]

    # dense table then Newton polish: s -> u
    ut = np.linspace(0, len(pts), 64 * len(pts) + 1)
    st = np.concatenate([[0.0], integrate.cumulative_trapezoid(speed(ut), ut)])
    st *= length / st[-1]
    coarse = interpolate.interp1d(st, ut)

    def arclen(uu):
        uu = np.atleast_1d(uu)
        k = np.clip(np.floor(uu).astype(int), 0, len(pts) - 1)
        out = np.empty(uu.shape)
        for i, (kk, val) in enumerate(zip(k.ravel(), uu.ravel())):
            out.flat[i] = S[kk] + integrate.quad(speed, kk, val, epsabs=1e-14, epsrel=1e-14)[0]
        return out

    def inverse(s):
        s = np.asarray(s, dtype=float)
        flat = np.mod(s.ravel(), length)
        uu = coarse(flat)
        for _ in range(4):
            uu = uu - (arclen(uu) - flat) / speed(uu)
        return uu.reshape(s.shape)

    params = {"points": pts.tolist()}
    curve = Curve("spline", params, length, closed=True)
    curve._spline = (sx, sy)
    curve._inverse = inverse
    return curve


def _collar_bound(curve: Curve, domain: Domain) -> float:
    n = 2048
    s = curve.nodes(n) if curve.closed else np.linspace(0, curve.length, n)
    xy = curve.point(s)
    dist = domain.distance(xy[:, 0], xy[:, 1])
    if np.any(dist <= 0):
        raise GeometryError("curve meets or leaves the domain boundary (H must not touch dM)")
    kmax = np.max(np.abs(curve.curvature(s)))
    bound = min(float(dist.min()), 0.5 / kmax if kmax > 0 else np.inf)
    # global injectivity: points far apart along the curve must stay 2*eps apart
    step = curve.length / n
    sep = np.abs(s[:, None] - s[None, :])
    if curve.closed:
        sep = np.minimum(sep, curve.length - sep)
    gap = np.linalg.norm(xy[:, None, :] - xy[None, :, :], axis=-1)
    far = sep > max(np.pi * bound, 8 * step)
    if np.any(far):
        bound = min(bound, 0.5 * float(gap[far].min()))
    return bound


def _check_simple(curve: Curve) -> None:
    n = 512
    s = curve.nodes(n) if curve.closed else np.linspace(0, curve.length, n)
    p = curve.point(s)
    a = p
    b = np.roll(p, -1, axis=0) if curve.closed else np.vstack([p[1:], p[-1:]])
    m = n if curve.closed else n - 1
    for i in range(m):
        j = np.arange(i + 2, m)
        if curve.closed and i == 0:
            j = j[j != m - 1]
        if j.size == 0:
            continue
        d1 = _cross(b[i] - a[i], a[j] - a[i])
        d2 = _cross(b[i] - a[i], b[j] - a[i])
        d3 = _cross(b[j] - a[j], a[i] - a[j])
        d4 = _cross(b[j] - a[j], b[i] - a[j])
        if np.any((d1 * d2 < 0) & (d3 * d4 < 0)):
            raise GeometryError("curve self-intersects")


def build_curve(spec: dict[str, Any], domain: Domain) -> Curve:
    """Build an interior curve and validate it against ``domain``.

    Supported kinds::

        {"kind": "circle", "rho": 0.5, "cx": 0.0, "cy": 0.0}
        {"kind": "segment", "x0": .., "y0": .., "x1": .., "y1": ..}   # open arc
        {"kind": "spline", "points": [[x, y], ...]}                    # closed, periodic
    """
    kind = spec.get("kind")
    if kind == "circle":
        rho = float(spec["rho"])
        _require_positive(rho=rho)
        params = {"rho": rho, "cx": float(spec.get("cx", 0.0)), "cy": float(spec.get("cy", 0.0))}
        curve = Curve("circle", params, 2 * np.pi * rho, closed=True)
    elif kind == "segment":
        params = {k: float(spec[k]) for k in ("x0", "y0", "x1", "y1")}
        length = np.hypot(params["x1"] - params["x0"], params["y1"] - params["y0"])
        _require_positive(length=length)
        curve = Curve("segment", params, length, closed=False)
    elif kind == "spline":
        curve = _spline_curve(np.asarray(spec["points"], dtype=float))
        _check_simple(curve)
    else:
        raise GeometryError(f"unknown curve kind {kind!r}")
    curve.eps_max = _collar_bound(curve, domain)
    return curve


def separates(curve: Curve, domain: Domain, delta: float) -> bool:
    """Flood-fill check that a closed curve splits the solver grid in two.

    Grid nodes within ``delta`` of the curve act as walls; the enclosed side
    must not be connected to the outer side through the remaining nodes.
    """
    if not curve.closed:
        raise GeometryError("separation is only defined for closed curves")
    x0, x1, y0, y1 = domain.bbox
    xs = np.arange(x0, x1 + delta / 2, delta)
    ys = np.arange(y0, y1 + delta / 2, delta)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    inside = domain.inside(X, Y)
    s = curve.nodes(max(64, int(4 * curve.length / delta)))
    g = curve.point(s)
    tree_d = np.full(X.shape, np.inf)
    for chunk in np.array_split(g, max(1, len(g) // 256)):
        d = np.sqrt((X[..., None] - chunk[:, 0]) ** 2 + (Y[..., None] - chunk[:, 1]) ** 2).min(-1)
        tree_d = np.minimum(tree_d, d)
    open_nodes = inside & (tree_d > delta)
    labels, _ = ndimage.label(open_nodes)
    off = min(curve.eps_max, 0.5 * curve.length) * 0.5
    p_in = curve.to_cartesian(0.0, off)
    p_out = curve.to_cartesian(0.0, -off)

    def lab(p):
        i = int(round((p[0] - x0) / delta))
        j = int(round((p[1] - y0) / delta))
        return labels[i, j]

    a, b = lab(p_in), lab(p_out)
    return a != 0 and b != 0 and a != b


# --------------------------------------------------------------------------- Fermi chart


@dataclass(frozen=True)
class FermiChart:
    """Tensor grid of Fermi coordinates ``(s_i, x_{n,m})`` on a collar of ``H``."""

    curve: Curve
    eps: float
    s: np.ndarray
    xn: np.ndarray
    jacobian: np.ndarray

    @property
    def ds(self) -> float:
        return self.curve.length / len(self.s)

    @property
    def dn(self) -> float:
        return float(self.xn[1] - self.xn[0])

    @property
    def zero_index(self) -> int:
        return len(self.xn) // 2

    def cartesian(self) -> np.ndarray:
        """Cartesian coordinates of all chart nodes, shape ``(N_s, N_n, 2)``."""
        S, XN = np.meshgrid(self.s, self.xn, indexing="ij")
        return self.curve.to_cartesian(S, XN)

    def from_cartesian(self, xy) -> tuple[np.ndarray, np.ndarray]:
        return self.curve.to_fermi(xy)


def fermi_chart(curve: Curve, eps: float, n_s: int, n_n: int) -> FermiChart:
    """Fermi collar chart of half-width ``eps`` with ``n_s`` x ``n_n`` nodes.

    ``n_n`` is forced odd so that ``x_n = 0`` is a node.
    """
    if eps <= 0 or eps > curve.eps_max:
        raise GeometryError(f"collar half-width {eps} exceeds eps_max = {curve.eps_max:.6g}")
    if n_n % 2 == 0:
        n_n += 1
    s = curve.nodes(n_s)
    xn = np.linspace(-eps, eps, n_n)
    J = 1.0 - curve.curvature(s)[:, None] * xn[None, :]
    if np.any(J <= 0.5):
        raise GeometryError("Fermi Jacobian must stay above 1/2 on the collar")
    return FermiChart(curve, float(eps), s, xn, J)

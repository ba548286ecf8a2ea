"""
End-to-end experiments: eigen-solves, traces, lift statistics, glancing sums
and density-one extraction.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import special

from .archive import ModeArchive, TraceArchive, write_spectrum_csv
from .eigensolver import EigenMode, GridSpec, assemble_laplacian, eigenvalue_count, solve_window
from .geometry import Curve, Domain, build_domain
from .lifts import compute_lifts, limit_state
from .psido import SymbolFn, glancing_cutoff
from .trace import CauchyTrace, cauchy_trace, curve_fourier_multiplier

__all__ = [
    "HarnessError",
    "ExperimentPlan",
    "archive_root",
    "weyl_estimate",
    "solve_to_archive",
    "traces_to_archive",
    "Observable",
    "qe_diagnostic",
    "WindowStats",
    "ConvergenceReport",
    "qer_convergence",
    "GlancingTable",
    "glancing_weyl_sums",
    "default_budget",
    "density_one_extract",
    "window_stats",
    "loglog_slope",
    "count_inversions",
]

log = logging.getLogger(__name__)

DEFAULT_LADDER = (0.4, 0.2, 0.1, 0.05)


class HarnessError(ValueError):
    pass


def archive_root() -> Path:
    """Archive directory from ``QERLAB_ARCHIVE_ROOT`` (default ``~/.cache/qerlab``)."""
    return Path(os.environ.get("QERLAB_ARCHIVE_ROOT", Path.home() / ".cache" / "qerlab")).expanduser()


# ----------------------------------------------------------------------------- plan


@dataclass
class ExperimentPlan:
    domain: dict
    curve: dict
    delta: float
    windows: list[tuple[float, float]]
    symbols: list[str] = field(default_factory=lambda: ["const1"])
    eps1_ladder: tuple[float, ...] = DEFAULT_LADDER
    collar_eps: tuple[float, ...] = (0.2, 0.1, 0.05)
    output: Path | None = None
    seed: int = 0
    quasimode_c: float = 0.1
    chunk: int = 150

    def __post_init__(self):
        self.windows = [(float(a), float(b)) for a, b in self.windows]
        for (a, b), (c, _) in zip(self.windows, self.windows[1:] + [(np.inf, np.inf)]):
            if not (0 < a < b <= c):
                raise HarnessError(f"windows must be disjoint and increasing, got {self.windows}")
        if self.output is None:
            self.output = archive_root() / self.key
        self.output = Path(self.output)

    @property
    def key(self) -> str:
        d = build_domain(self.domain)
        return f"{d.kind}-{d.spec_hash[:10]}-d{round(1 / self.delta)}"

    @property
    def lam2_max(self) -> float:
        return self.windows[-1][1]


def weyl_estimate(domain: Domain, lam2: float) -> float:
    """Two-term Weyl law ``A lam^2 / 4 pi - P lam / 4 pi`` (Dirichlet)."""
    return domain.area * lam2 / (4 * np.pi) - _perimeter(domain) * np.sqrt(lam2) / (4 * np.pi)


def _perimeter(domain: Domain) -> float:
    p = domain.params
    if domain.kind == "rectangle":
        return 2 * (p["a"] + p["b"])
    if domain.kind == "disk":
        return 2 * np.pi * p["R"]
    if domain.kind == "stadium":
        return 4 * p["alpha"] + 2 * np.pi * p["r"]
    v = np.asarray(domain._vertices)
    return float(np.sum(np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1)))


# ----------------------------------------------------------------------------- solve


def _chunk_edges(domain: Domain, lo: float, hi: float, chunk: int) -> list[float]:
    edges = [lo]
    while edges[-1] < hi:
        target = weyl_estimate(domain, edges[-1]) + chunk
        # invert the monotone Weyl estimate by bisection
        a, b = edges[-1], edges[-1] * 2 + 100
        for _ in range(80):
            m = 0.5 * (a + b)
            if weyl_estimate(domain, m) < target:
                a = m
            else:
                b = m
        edges.append(min(b, hi))
    return edges


def solve_to_archive(
    domain: Domain,
    delta: float,
    lam2_max: float,
    path: Path,
    chunk: int = 150,
    seed: int = 0,
    progress: Callable[[str], None] | None = None,
) -> ModeArchive:
    """Solve all eigenpairs with ``lam2 < lam2_max`` into a mode archive.

    Resumable: an existing archive for the same domain and grid is extended
    from its largest stored eigenvalue.
    """
    path = Path(path)
    op = assemble_laplacian(domain, delta)
    arc = ModeArchive(path)
    start = 0.5 * np.pi * special.jn_zeros(0, 1)[0] ** 2 / domain.area  # half the Faber-Krahn bound
    first_id = 0
    if path.exists():
        hd = arc.header()
        if hd.domain.spec_hash != domain.spec_hash or hd.grid != op.grid:
            raise HarnessError(f"{path} holds a different domain or grid")
        spec = arc.spectrum()
        if spec:
            first_id = spec[-1][0] + 1
            # step clear of the last stored cluster: Ritz values of a degenerate
            # pair differ from the inertia count's view at rounding level
            start = spec[-1][1] * (1 + 1e-9)
            below = eigenvalue_count(op, start)
            if below != len(spec):
                raise HarnessError(f"{path} holds {len(spec)} modes but {below} eigenvalues lie below {start:.12g}")
    else:
        arc.create(op)
    if start >= lam2_max:
        return arc
    edges = _chunk_edges(domain, start, lam2_max, chunk)
    for lo, hi in zip(edges, edges[1:]):
        modes = solve_window(op, (lo, hi), k_max=4 * chunk + 50, seed=seed, first_id=first_id)
        arc.append(modes)
        first_id += len(modes)
        if progress:
            progress(f"solved [{lo:.2f}, {hi:.2f}): {len(modes)} modes, total {first_id}")
    write_spectrum_csv(path.with_name("spectrum.csv"), arc.spectrum())
    return arc


def traces_to_archive(modes: Iterable[EigenMode], domain: Domain, curve: Curve, path: Path) -> TraceArchive:
    """Compute Cauchy traces for ``modes`` not yet present in the trace archive."""
    path = Path(path)
    arc = TraceArchive(path)
    done = set()
    if path.exists():
        dspec, cspec = arc.specs()
        if build_domain(dspec).spec_hash != domain.spec_hash or cspec != curve.spec:
            raise HarnessError(f"{path} holds traces for another domain or curve")
        done = {t.mode_id for t in arc.read()}
    else:
        arc.create(domain, curve)
    batch = []
    for m in modes:
        if m.mode_id in done:
            continue
        batch.append(cauchy_trace(m, curve))
        m.drop_field()
        if len(batch) >= 50:
            arc.append(batch)
            batch = []
    if batch:
        arc.append(batch)
    return arc


# ----------------------------------------------------------------------------- statistics helpers


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of ``log|y|`` against ``log x``."""
    x, y = np.asarray(x, float), np.abs(np.asarray(y, float))
    if x.size < 2:
        raise HarnessError("need at least two points for a slope")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def count_inversions(values: Sequence[float]) -> int:
    """Number of consecutive increases in a sequence expected to decrease."""
    v = np.asarray(values, float)
    return int(np.sum(v[1:] > v[:-1]))


@dataclass
class WindowStats:
    lo: float
    hi: float
    count: int
    mean: float
    omega: float
    variance: float
    cesaro: float  # running mean over all modes with lam2 < hi

    @property
    def relative_gap(self) -> float:
        return abs(self.mean - self.omega) / abs(self.omega) if self.omega else float("nan")


def window_stats(lam2: np.ndarray, values: np.ndarray, omega: float, windows, mask: np.ndarray | None = None) -> list[WindowStats]:
    """Per-window means and quantum variances ``(1/n) sum |v_j - omega|^2``."""
    lam2 = np.asarray(lam2, float)
    values = np.real(np.asarray(values))
    keep = np.ones(lam2.size, bool) if mask is None else np.asarray(mask, bool)
    out = []
    for lo, hi in windows:
        sel = keep & (lam2 >= lo) & (lam2 < hi)
        upto = keep & (lam2 < hi)
        n = int(sel.sum())
        if n == 0:
            out.append(WindowStats(lo, hi, 0, float("nan"), omega, float("nan"), float("nan")))
            continue
        v = values[sel]
        out.append(
            WindowStats(lo, hi, n, float(v.mean()), omega, float(np.mean((v - omega) ** 2)), float(values[upto].mean()))
        )
    return out


# ----------------------------------------------------------------------------- interior QE


@dataclass(frozen=True)
class Observable:
    """``f(x, y) (h D_x)^i (h D_y)^j`` with ``i + j <= 2``."""

    name: str
    f: Callable[[np.ndarray, np.ndarray], np.ndarray]
    alpha: tuple[int, int] = (0, 0)

    def __post_init__(self):
        if min(self.alpha) < 0 or sum(self.alpha) > 2:
            raise HarnessError(f"unsupported observable order {self.alpha}; need |alpha| <= 2")


def _liouville_average(obs: Observable, domain: Domain, n: int = 400) -> float:
    """Closed-form fibre average times a quadrature of ``f`` over the domain."""
    fiber = {(0, 0): 1.0, (1, 0): 0.0, (0, 1): 0.0, (1, 1): 0.0, (2, 0): 0.5, (0, 2): 0.5}[obs.alpha]
    if fiber == 0.0:
        return 0.0
    x0, x1, y0, y1 = domain.bbox
    xs = x0 + (np.arange(n) + 0.5) * (x1 - x0) / n
    ys = y0 + (np.arange(n) + 0.5) * (y1 - y0) / n
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    inside = domain.inside(X, Y)
    if domain.kind == "rectangle":
        integral = np.sum(obs.f(X, Y)) * (x1 - x0) * (y1 - y0) / n**2
    else:
        integral = np.sum(np.where(inside, obs.f(X, Y), 0.0)) * (x1 - x0) * (y1 - y0) / n**2
    return fiber * integral / domain.area


def _matrix_element(obs: Observable, mode: EigenMode, delta: float) -> float:
    if mode.field is not None and abs(mode.field.grid.delta - delta) < 1e-15:
        g = mode.field.grid
        values = mode.field.values
    else:
        x0, x1, y0, y1 = mode.domain.bbox
        nx, ny = int(round((x1 - x0) / delta)) + 1, int(round((y1 - y0) / delta)) + 1
        g = GridSpec(x0, y0, delta, nx, ny)
        X, Y = g.mesh()
        values = np.where(mode.domain.inside(X, Y), mode.value(X, Y), 0.0)
    X, Y = g.mesh()
    v = np.asarray(values, dtype=complex)
    h = mode.h
    d = g.delta

    def hd(u, axis):
        p = np.pad(u, [(2, 2) if a == axis else (0, 0) for a in range(2)])
        sl = lambda k: tuple(slice(2 + k, p.shape[a] - 2 + k) if a == axis else slice(None) for a in range(2))
        return (h / 1j) * (-p[sl(2)] + 8 * p[sl(1)] - 8 * p[sl(-1)] + p[sl(-2)]) / (12 * d)

    w = v
    for _ in range(obs.alpha[0]):
        w = hd(w, 0)
    for _ in range(obs.alpha[1]):
        w = hd(w, 1)
    num = np.sum(obs.f(X, Y) * w * np.conj(v))
    den = np.sum(np.abs(v) ** 2)
    return float(np.real(num / den))


def qe_diagnostic(modes: Sequence[EigenMode], observables: Sequence[Observable], windows, delta: float | None = None) -> dict:
    """Window means and variances of ``<A phi, phi> - (Liouville average of A)``.

    Grid modes are used on their own grid; closed-form modes are sampled on a
    grid of spacing ``delta``.  Returns ``{name: [WindowStats, ...]}`` plus the
    key ``"ergodic_hypothesis"`` (False for rectangles and disks).
    """
    if not modes:
        return {"ergodic_hypothesis": None}
    doms = {m.domain.spec_hash for m in modes}
    if len(doms) != 1:
        raise HarnessError("qe_diagnostic needs modes from one domain")
    domain = modes[0].domain
    if delta is None:
        delta = modes[0].field.grid.delta if modes[0].field is not None else 1 / 256
    lam2 = np.array([m.lam2 for m in modes])
    out: dict = {"ergodic_hypothesis": not domain.integrable}
    for obs in observables:
        avg = _liouville_average(obs, domain)
        vals = np.array([_matrix_element(obs, m, delta) for m in modes])
        out[obs.name] = window_stats(lam2, vals, avg, windows)
    return out


# ----------------------------------------------------------------------------- glancing sums


def _chi_norm2(values: np.ndarray, chi: SymbolFn, trace: CauchyTrace) -> float:
    v = curve_fourier_multiplier(values, lambda xi: chi(0.0, xi), trace.h, trace.length)
    return float(trace.weight * np.sum(np.abs(v) ** 2))


def _chi_profile(values: np.ndarray, chi: SymbolFn, trace: CauchyTrace) -> np.ndarray:
    v = curve_fourier_multiplier(values, lambda xi: chi(0.0, xi), trace.h, trace.length)
    return np.abs(v) ** 2


def glancing_mass(trace: CauchyTrace, eps1: float) -> tuple[float, float]:
    """``(||chi^w d||^2, ||chi^w n||^2)`` for the glancing cutoff at ``eps1``."""
    chi = glancing_cutoff(eps1)
    return _chi_norm2(trace.dirichlet, chi, trace), _chi_norm2(trace.neumann, chi, trace)


@dataclass
class GlancingTable:
    ladder: list[float]
    dirichlet: list[float]  # (1/N) sum ||chi d_j||^2
    neumann: list[float]  # (1/N) sum eps1^{-1} ||chi n_j||^2
    dirichlet_slope: float
    neumann_slope: float
    profile_nodes: np.ndarray | None = None
    profiles: list[np.ndarray] = field(default_factory=list)  # per rung, (1/N) sum |chi d_j(s)|^2

    @property
    def profile_sup(self) -> list[float]:
        return [float(p.max()) for p in self.profiles]


def glancing_weyl_sums(traces: Sequence[CauchyTrace], ladder: Sequence[float], profile: bool = True) -> GlancingTable:
    """Cesaro sums of glancing Dirichlet and ``eps1^{-1}``-weighted Neumann mass.

    ``traces`` must share a curve; when they also share ``N`` the pointwise
    profile in ``s`` is reported for every rung.
    """
    ladder = [float(e) for e in ladder]
    if len(ladder) < 2:
        raise HarnessError("need at least two eps1 rungs")
    traces = list(traces)
    if not traces:
        raise HarnessError("no traces")
    dsum, nsum, profiles = [], [], []
    same_n = len({t.n for t in traces}) == 1 and profile
    for e in ladder:
        chi = glancing_cutoff(e)
        d = [_chi_norm2(t.dirichlet, chi, t) for t in traces]
        n = [_chi_norm2(t.neumann, chi, t) / e for t in traces]
        dsum.append(float(np.mean(d)))
        nsum.append(float(np.mean(n)))
        if same_n:
            profiles.append(np.mean([_chi_profile(t.dirichlet, chi, t) for t in traces], axis=0))
    nodes = traces[0].nodes if same_n else None
    return GlancingTable(ladder, dsum, nsum, loglog_slope(ladder, dsum), loglog_slope(ladder, nsum), nodes, profiles)


def default_budget(k: int) -> float:
    """Discard fraction for window ``k = 1, 2, ...``: ``0.2 / log(k + e - 1)``."""
    return 0.2 / math.log(k + math.e - 1)


def density_one_extract(
    traces: Sequence[CauchyTrace],
    eps1: float,
    windows,
    budget: Callable[[int], float] | float = default_budget,
) -> tuple[np.ndarray, list[tuple[float, float, int, int, float]]]:
    """Mask of retained modes after discarding the largest glancing masses.

    In window ``k`` the ``floor(budget(k) * n_k)`` modes with the largest
    ``||chi d||^2 + eps1^{-1} ||chi n||^2`` are dropped; equal masses are
    dropped in order of increasing mode id.  Returns the mask (aligned with
    ``traces``) and per-window ``(lo, hi, n, kept, density)`` rows.
    """
    traces = list(traces)
    mass = np.array([g[0] + g[1] / eps1 for g in (glancing_mass(t, eps1) for t in traces)])
    ids = np.array([t.mode_id for t in traces])
    lam2 = np.array([t.lam2 for t in traces], dtype=float)
    keep = np.ones(len(traces), bool)
    rows = []
    for k, (lo, hi) in enumerate(windows, start=1):
        frac = budget(k) if callable(budget) else float(budget)
        if not 0 <= frac < 1:
            raise HarnessError(f"budget fraction must lie in [0, 1), got {frac}")
        idx = np.flatnonzero((lam2 >= lo) & (lam2 < hi))
        drop = int(math.floor(frac * idx.size))
        if drop:
            order = np.lexsort((ids[idx], -mass[idx]))
            keep[idx[order[:drop]]] = False
        kept = idx.size - drop
        rows.append((lo, hi, idx.size, kept, kept / idx.size if idx.size else float("nan")))
    return keep, rows


# ----------------------------------------------------------------------------- QER report


@dataclass
class ConvergenceReport:
    """Window statistics of the boundary lifts against their limit states."""

    domain: dict
    curve: dict
    ergodic_hypothesis: bool
    liouville_volume: float
    cauchy: dict = field(default_factory=dict)  # symbol -> [WindowStats]
    renormalized: dict = field(default_factory=dict)  # (symbol, eps1) -> [WindowStats] on retained modes
    renormalized_all: dict = field(default_factory=dict)  # (symbol, eps1) -> [WindowStats] on all modes
    retained: dict = field(default_factory=dict)  # eps1 -> per-window density rows
    glancing: GlancingTable | None = None
    lifts: list = field(default_factory=list)  # flat LiftRecord list

    @property
    def flags(self) -> list[str]:
        return [] if self.ergodic_hypothesis else ["non-ergodic control: the domain's billiard flow is integrable"]


def qer_convergence(
    traces: Sequence[CauchyTrace],
    domain: Domain,
    curve: Curve,
    symbols: Sequence[SymbolFn],
    windows,
    ladder: Sequence[float] = DEFAULT_LADDER,
    budget: Callable[[int], float] | float = default_budget,
) -> ConvergenceReport:
    """Window statistics for both boundary limit statements.

    * ``Phi^CD(a)`` against ``omega_{+1/2}(a)`` over all modes;
    * ``Phi^D(b) + Phi^RN(b; eps1)`` with ``b = a (1 - chi_eps1)`` against
      ``omega_{-1/2}(b)``, on the density-one subsequence and on all modes.

    On an open arc only the first table is filled.
    """
    traces = sorted(traces, key=lambda t: t.mode_id)
    if not traces:
        raise HarnessError("no traces to report on; run the trace stage first")
    if len({t.curve_hash for t in traces}) > 1:
        raise HarnessError("traces come from different curves")
    lam2 = np.array([t.lam2 for t in traces], dtype=float)
    rep = ConvergenceReport(domain.spec, curve.spec, not domain.integrable, 2 * np.pi * domain.area)
    for a in symbols:
        recs = [compute_lifts(a, t) for t in traces]
        rep.lifts.extend(recs)
        om = limit_state(a, 0.5, curve, domain).value
        rep.cauchy[a.name] = window_stats(lam2, [r.cauchy for r in recs], om, windows)
    if not curve.closed:
        # the regularised resolvent and the glancing sums need a closed curve
        return rep
    for e in ladder:
        keep, rows = density_one_extract(traces, e, windows, budget)
        rep.retained[e] = rows
        chi = glancing_cutoff(e)
        for a in symbols:
            b = a.complement_times(chi)
            recs = [compute_lifts(b, t, e) for t in traces]
            rep.lifts.extend(recs)
            om = limit_state(b, -0.5, curve, domain).value
            vals = [r.renormalized_sum for r in recs]
            rep.renormalized[(a.name, e)] = window_stats(lam2, vals, om, windows, keep)
            rep.renormalized_all[(a.name, e)] = window_stats(lam2, vals, om, windows)
    rep.glancing = glancing_weyl_sums(traces, ladder)
    return rep

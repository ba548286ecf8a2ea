"""
Batch front end: ``qerlab <stage> --config run.cfg``.

The config file is flat ``key = value`` text; ``#`` starts a comment.  Keys::

    domain.kind      rectangle | disk | stadium | polygon
    domain.a, domain.b, domain.R, domain.cx, domain.cy, domain.alpha, domain.r
    domain.vertices  x0 y0; x1 y1; ...
    curve.kind       circle | segment | spline
    curve.rho, curve.cx, curve.cy, curve.x0, curve.y0, curve.x1, curve.y1
    curve.points     x0 y0; x1 y1; ...
    solver.delta     grid spacing, e.g. 1/128
    solver.lam2_max  largest eigenvalue to compute
    solver.chunk     eigenpairs per shift-invert window (150)
    solver.seed      Lanczos start-vector seed (0)
    windows          lo:hi, lo:hi, ...  spectral windows in lambda^2
    symbols          comma-separated library names, e.g. const1, gauss_xi(0,0.5)
    eps1             glancing ladder, e.g. 0.4, 0.2, 0.1, 0.05
    collar.eps       Rellich collar half-widths
    rellich.modes    number of modes checked in the rellich stage (5)
    quasimode.c      quasimode gate constant (0.1)
    run.name         sub-directory of the archive root (default: derived)

Exit status: 0 success, 1 domain or numerical error, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import platform
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .archive import ArchiveError, ModeArchive, TraceArchive, write_spectrum_csv
from .eigensolver import SolverError
from .geometry import GeometryError, build_curve, build_domain, fermi_chart
from .harness import (
    DEFAULT_LADDER,
    HarnessError,
    archive_root,
    glancing_weyl_sums,
    qer_convergence,
    solve_to_archive,
    traces_to_archive,
)
from .lifts import LiftError, compute_lifts, limit_state
from .psido import QuantizationError, glancing_cutoff, symbol_from_name
from .rellich import RellichError, default_profile, rellich_defect

__all__ = ["main", "ConfigError", "RunConfig", "parse_config", "run_pipeline", "STAGES"]

log = logging.getLogger("qerlab")

STAGES = ("solve", "trace", "lift", "rellich", "weyl", "report")
DEPENDS = {"solve": (), "trace": ("solve",), "lift": ("trace",), "rellich": ("solve",), "weyl": ("trace",), "report": ("trace",)}

EXIT_OK, EXIT_DOMAIN, EXIT_CONFIG = 0, 1, 2

DOMAIN_ERRORS = (GeometryError, SolverError, HarnessError, QuantizationError, LiftError, RellichError, ArchiveError)


class ConfigError(ValueError):
    pass


# ----------------------------------------------------------------------------- config


def _num(text: str) -> float:
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        return float(text)


def _points(text: str) -> list[list[float]]:
    return [[_num(v) for v in p.split()] for p in text.split(";") if p.strip()]


def _floats(text: str) -> tuple[float, ...]:
    return tuple(_num(v) for v in text.split(",") if v.strip())


def _windows(text: str) -> list[tuple[float, float]]:
    out = []
    for part in text.split(","):
        lo, _, hi = part.partition(":")
        out.append((_num(lo), _num(hi)))
    return out


def _symbols(text: str) -> list[str]:
    # split on commas that are not inside parentheses
    out, depth, cur = [], 0, ""
    for ch in text:
        depth += ch == "("
        depth -= ch == ")"
        if ch == "," and depth == 0:
            out.append(cur.strip())
            cur = ""
        else:
            cur += ch
    if cur.strip():
        out.append(cur.strip())
    return out


SCHEMA = {
    "domain.kind": str,
    "domain.a": _num,
    "domain.b": _num,
    "domain.R": _num,
    "domain.cx": _num,
    "domain.cy": _num,
    "domain.alpha": _num,
    "domain.r": _num,
    "domain.vertices": _points,
    "curve.kind": str,
    "curve.rho": _num,
    "curve.cx": _num,
    "curve.cy": _num,
    "curve.x0": _num,
    "curve.y0": _num,
    "curve.x1": _num,
    "curve.y1": _num,
    "curve.points": _points,
    "solver.delta": _num,
    "solver.lam2_max": _num,
    "solver.chunk": int,
    "solver.seed": int,
    "windows": _windows,
    "symbols": _symbols,
    "eps1": _floats,
    "collar.eps": _floats,
    "rellich.modes": int,
    "quasimode.c": _num,
    "run.name": str,
}


@dataclass
class RunConfig:
    values: dict
    text: str
    path: Path | None = None
    raw: dict = field(default_factory=dict)

    def get(self, key, default=None):
        return self.values.get(key, default)

    def require(self, key):
        if key not in self.values:
            raise ConfigError(f"missing required key '{key}'")
        return self.values[key]

    def section(self, prefix: str) -> dict:
        return {k.split(".", 1)[1]: v for k, v in self.values.items() if k.startswith(prefix + ".")}

    @property
    def domain_spec(self) -> dict:
        return self.section("domain")

    @property
    def curve_spec(self) -> dict | None:
        s = self.section("curve")
        return s or None

    def digest(self, keys) -> str:
        sub = {k: self.raw[k] for k in sorted(self.raw) if any(k == p or k.startswith(p + ".") for p in keys)}
        return hashlib.sha256(json.dumps(sub, sort_keys=True).encode()).hexdigest()

    @property
    def run_dir(self) -> Path:
        name = self.get("run.name")
        if name is None:
            d = build_domain(self.domain_spec)
            name = f"{d.kind}-{d.spec_hash[:10]}-d{round(1 / self.require('solver.delta'))}"
        return archive_root() / name


def parse_config(text: str, path: Path | None = None) -> RunConfig:
    """Parse flat ``key = value`` text against the documented schema."""
    values, raw = {}, {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key '{key}'")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key '{key}'")
        try:
            values[key] = SCHEMA[key](val)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"line {lineno}: bad value for '{key}': {val!r}") from exc
        raw[key] = val
    if "domain.kind" not in values:
        raise ConfigError("missing required key 'domain.kind'")
    return RunConfig(values, text, path, raw)


# ----------------------------------------------------------------------------- manifest


def _file_hash(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class Manifest:
    def __init__(self, path: Path):
        self.path = path
        self.data = json.loads(path.read_text()) if path.exists() else {"stages": {}}

    def current(self, stage: str, inputs: str) -> bool:
        rec = self.data["stages"].get(stage)
        if not rec or rec.get("inputs") != inputs:
            return False
        for name, digest in rec.get("outputs", {}).items():
            p = self.path.parent / name
            if not p.exists() or _file_hash(p) != digest:
                return False
        return True

    def record(self, stage: str, inputs: str, outputs: list[Path], cache_hit: bool = False) -> None:
        self.data["stages"][stage] = {
            "inputs": inputs,
            "outputs": {p.name: _file_hash(p) for p in outputs if p.exists()},
            "cache_hit": cache_hit,
        }

    def output_digest(self, stage: str) -> str:
        rec = self.data["stages"].get(stage, {})
        return hashlib.sha256(json.dumps(rec.get("outputs", {}), sort_keys=True).encode()).hexdigest()

    def save(self, cfg: RunConfig) -> None:
        self.data["config"] = cfg.raw
        self.data["versions"] = {
            "qerlab": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
        }
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")

    @property
    def hash(self) -> str:
        return hashlib.sha256(json.dumps(self.data["stages"], sort_keys=True).encode()).hexdigest()[:16]


# ----------------------------------------------------------------------------- stages


def _objects(cfg: RunConfig):
    domain = build_domain(cfg.domain_spec)
    curve = build_curve(cfg.curve_spec, domain) if cfg.curve_spec else None
    return domain, curve


def _need_curve(curve, stage):
    if curve is None:
        raise ConfigError(f"stage '{stage}' needs the curve.* keys")
    return curve


def _symbol_objs(cfg: RunConfig, curve):
    return [symbol_from_name(n, curve.length) for n in cfg.get("symbols", ["const1"])]


def _trace_path(run: Path, curve) -> Path:
    return run / TraceArchive.filename(curve)


def _load_traces(cfg: RunConfig, run: Path, domain, curve):
    path = _trace_path(run, curve)
    if not path.exists():
        raise HarnessError(f"trace archive {path} missing; run the trace stage")
    dspec, _ = TraceArchive(path).specs()
    if build_domain(dspec).spec_hash != domain.spec_hash:
        raise HarnessError("trace archive and configuration describe different domains")
    gate = cfg.get("quasimode.c", 0.1)
    ok = {mid for mid, lam2, h, res in ModeArchive(run / "modes.qer").spectrum() if res <= gate * h}
    traces = [t for t in TraceArchive(path).read() if t.mode_id in ok]
    missing = sorted(ok - {t.mode_id for t in traces})
    if missing:
        shown = ", ".join(map(str, missing[:20])) + (" ..." if len(missing) > 20 else "")
        raise HarnessError(f"{len(missing)} accepted modes have no trace (ids {shown}); rerun the trace stage")
    return traces


def stage_solve(cfg, run, domain, curve):
    solve_to_archive(
        domain,
        cfg.require("solver.delta"),
        cfg.require("solver.lam2_max"),
        run / "modes.qer",
        chunk=cfg.get("solver.chunk", 150),
        seed=cfg.get("solver.seed", 0),
        progress=log.info,
    )
    arc = ModeArchive(run / "modes.qer")
    write_spectrum_csv(run / "spectrum.csv", arc.spectrum())
    return [run / "modes.qer", run / "spectrum.csv"]


def stage_trace(cfg, run, domain, curve):
    curve = _need_curve(curve, "trace")
    arc = ModeArchive(run / "modes.qer")
    hd = arc.header()
    if hd.domain.spec_hash != domain.spec_hash:
        raise HarnessError("mode archive and configuration describe different domains")
    path = _trace_path(run, curve)
    traces_to_archive(arc.read(), domain, curve, path)
    return [path]


LIFT_HEADER = [
    "mode_id", "lam2", "h", "symbol", "eps1",
    "re_mu_n", "im_mu_n", "re_mu_rd", "im_mu_rd", "re_phi_cd", "im_phi_cd",
    "re_phi_d", "im_phi_d", "re_phi_rn", "im_phi_rn",
    "omega_plus", "omega_minus", "gap_plus", "gap_minus",
]


def stage_lift(cfg, run, domain, curve):
    curve = _need_curve(curve, "lift")
    traces = _load_traces(cfg, run, domain, curve)
    out = run / "lifts.csv"
    # the regularised resolvent needs a closed curve; open arcs get the
    # Cauchy-data lifts only and blank renormalised columns
    ladder = cfg.get("eps1", DEFAULT_LADDER) if curve.closed else (None,)
    fmt = lambda z: [f"{z.real:.12g}", f"{z.imag:.12g}"]
    with open(out, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(LIFT_HEADER)
        for a in _symbol_objs(cfg, curve):
            om_p = limit_state(a, 0.5, curve, domain).value
            for e in ladder:
                if e is not None:
                    b = a.complement_times(glancing_cutoff(e))
                    om_m = limit_state(b, -0.5, curve, domain).value
                for t in traces:
                    r = compute_lifts(a, t)
                    row = [t.mode_id, repr(t.lam2), repr(t.h), a.name, "" if e is None else e]
                    row += fmt(r.neumann) + fmt(r.renormalized_dirichlet) + fmt(r.cauchy)
                    if e is None:
                        row += fmt(r.dirichlet) + ["", "", f"{om_p:.12g}", "", f"{(r.cauchy - om_p).real:.12g}", ""]
                    else:
                        r2 = compute_lifts(b, t, e)
                        row += fmt(r2.dirichlet) + fmt(r2.renormalized_neumann)
                        row += [f"{om_p:.12g}", f"{om_m:.12g}", f"{(r.cauchy - om_p).real:.12g}", f"{(r2.renormalized_sum - om_m).real:.12g}"]
                    w.writerow(row)
    return [out]


def stage_rellich(cfg, run, domain, curve):
    curve = _need_curve(curve, "rellich")
    n_modes = cfg.get("rellich.modes", 5)
    out = run / "rellich.csv"
    modes = []
    for m in ModeArchive(run / "modes.qer").read():
        modes.append(m)
        if len(modes) >= n_modes:
            break
    symbols = _symbol_objs(cfg, curve)
    with open(out, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["mode_id", "symbol", "eps", "ds", "dn", "re_lhs", "im_lhs", "re_rhs", "im_rhs", "defect", "order"])
        for m in modes:
            for eps in cfg.get("collar.eps", (0.2, 0.1, 0.05)):
                eps = min(eps, 0.95 * curve.eps_max)
                for a in symbols:
                    rows = []
                    for level in range(3):
                        # base level: 16 nodes per wavelength along the curve, 24 across,
                        # and never fewer than 128 tangential or 64 normal steps
                        wl = 2 * np.pi * m.h
                        n_s = 2 * max(64, int(np.ceil(8 * curve.length / wl))) * 2**level
                        n_n = 2 * max(32, int(np.ceil(12 * eps / wl))) * 2**level + 1
                        rows.append(rellich_defect(m, default_profile(a, eps), fermi_chart(curve, eps, n_s, n_n)))
                    d = [r.defect for r in rows]
                    order = float(np.log2(d[-2] / d[-1])) if d[-1] > 0 and d[-2] > 0 else float("nan")
                    for r in rows:
                        w.writerow([m.mode_id, a.name, eps, f"{r.ds:.6g}", f"{r.dn:.6g}", f"{r.lhs.real:.12g}", f"{r.lhs.imag:.12g}",
                                    f"{r.rhs.real:.12g}", f"{r.rhs.imag:.12g}", f"{r.defect:.6g}", f"{order:.4g}"])
            m.drop_field()
    return [out]


def stage_weyl(cfg, run, domain, curve):
    curve = _need_curve(curve, "weyl")
    if not curve.closed:
        raise HarnessError("glancing sums use the curve Fourier basis and need a closed curve")
    traces = _load_traces(cfg, run, domain, curve)
    out = run / "weyl.csv"
    with open(out, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["window_lo", "window_hi", "eps1", "count", "dirichlet_sum", "neumann_sum", "profile_sup", "dirichlet_slope", "neumann_slope"])
        lam2 = np.array([t.lam2 for t in traces])
        for lo, hi in cfg.get("windows", [(0, np.inf)]):
            sel = [t for t, l2 in zip(traces, lam2) if lo <= l2 < hi]
            if not sel:
                continue
            tab = glancing_weyl_sums(sel, cfg.get("eps1", DEFAULT_LADDER))
            for i, e in enumerate(tab.ladder):
                sup = tab.profile_sup[i] if tab.profiles else float("nan")
                w.writerow([lo, hi, e, len(sel), f"{tab.dirichlet[i]:.12g}", f"{tab.neumann[i]:.12g}", f"{sup:.12g}",
                            f"{tab.dirichlet_slope:.6g}", f"{tab.neumann_slope:.6g}"])
    return [out]


def stage_report(cfg, run, domain, curve):
    from .report import write_report

    curve = _need_curve(curve, "report")
    traces = _load_traces(cfg, run, domain, curve)
    windows = cfg.get("windows")
    if not windows:
        raise ConfigError("stage 'report' needs the 'windows' key")
    if traces:
        rep = qer_convergence(traces, domain, curve, _symbol_objs(cfg, curve), windows, cfg.get("eps1", DEFAULT_LADDER))
    else:
        rep = None
    return write_report(rep, run, windows)


RUNNERS = {
    "solve": (stage_solve, ("domain", "solver")),
    "trace": (stage_trace, ("domain", "curve")),
    "lift": (stage_lift, ("domain", "curve", "symbols", "eps1", "quasimode")),
    "rellich": (stage_rellich, ("domain", "curve", "symbols", "collar", "rellich")),
    "weyl": (stage_weyl, ("domain", "curve", "windows", "eps1", "quasimode")),
    "report": (stage_report, ("domain", "curve", "symbols", "eps1", "windows", "quasimode")),
}


def run_pipeline(cfg: RunConfig, stages, force: bool = False) -> dict:
    """Run ``stages`` in DAG order, skipping any whose inputs are unchanged."""
    run = cfg.run_dir
    run.mkdir(parents=True, exist_ok=True)
    man = Manifest(run / "manifest.json")
    domain, curve = _objects(cfg)
    ordered = [s for s in STAGES if s in stages]
    status = {}
    for stage in ordered:
        for dep in DEPENDS[stage]:
            if dep not in man.data["stages"] and dep not in ordered:
                raise HarnessError(f"stage '{stage}' needs stage '{dep}' to have run")
        fn, keys = RUNNERS[stage]
        inputs = cfg.digest(keys) + "".join(man.output_digest(d) for d in DEPENDS[stage])
        inputs = hashlib.sha256(inputs.encode()).hexdigest()
        if not force and man.current(stage, inputs):
            man.data["stages"][stage]["cache_hit"] = True
            status[stage] = "cached"
            log.info("%s: up to date", stage)
            continue
        outputs = fn(cfg, run, domain, curve)
        man.record(stage, inputs, outputs)
        status[stage] = "ran"
        man.save(cfg)
    man.save(cfg)
    return status


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="qerlab", description="Restriction-QE experiments on planar billiards.")
    p.add_argument("command", choices=STAGES + ("all",))
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--stages", help="comma-separated subset for 'all'")
    p.add_argument("--jobs", type=int, default=1, help="accepted for compatibility; stages run sequentially")
    p.add_argument("--force", action="store_true", help="rerun stages even when up to date")
    p.add_argument("-v", "--verbose", action="store_true")
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = parse_config(args.config.read_text(), args.config)
        if args.command == "all":
            stages = STAGES if not args.stages else tuple(s.strip() for s in args.stages.split(","))
            bad = [s for s in stages if s not in STAGES]
            if bad:
                raise ConfigError(f"unknown stage(s): {', '.join(bad)}")
            if not args.stages and cfg.get("curve.kind") == "segment":
                # glancing sums need a closed curve; drop them from the default set
                stages = tuple(s for s in stages if s != "weyl")
        else:
            stages = (args.command,)
        status = run_pipeline(cfg, stages, force=args.force)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DOMAIN_ERRORS as exc:
        print(f"error ({type(exc).__module__.rsplit('.', 1)[-1]}): {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    for stage, st in status.items():
        print(f"{stage}: {st}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

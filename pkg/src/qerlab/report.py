"""
CSV tables and SVG figures for a :class:`~qerlab.harness.ConvergenceReport`.

SVG output is byte-stable across runs: the hash salt is fixed and no creation
date is embedded.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

__all__ = ["write_report", "save_svg"]

STATS_HEADER = ["symbol", "eps1", "window_lo", "window_hi", "count", "mean", "omega", "relative_gap", "variance", "cesaro"]


def save_svg(fig, path: Path) -> None:
    with matplotlib.rc_context({"svg.hashsalt": "qerlab", "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def _stats_rows(table: dict):
    for key, stats in table.items():
        sym, e = key if isinstance(key, tuple) else (key, "")
        for s in stats:
            yield [sym, e, s.lo, s.hi, s.count, f"{s.mean:.12g}", f"{s.omega:.12g}", f"{s.relative_gap:.6g}",
                   f"{s.variance:.6g}", f"{s.cesaro:.12g}"]


def _write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def _plot_gaps(table: dict, windows, title: str, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    mids = [0.5 * (lo + hi) for lo, hi in windows]
    for key, stats in table.items():
        label = key if isinstance(key, str) else f"{key[0]}, eps1={key[1]}"
        ax.plot(mids[: len(stats)], [s.relative_gap for s in stats], marker="o", label=label)
    ax.set_xlabel("window centre in lambda^2")
    ax.set_ylabel("|mean - omega| / |omega|")
    ax.set_yscale("log")
    ax.set_title(title)
    if table:
        ax.legend(fontsize=6)
    save_svg(fig, path)
    return path


def _plot_glancing(glancing, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    if glancing is not None:
        ax.loglog(glancing.ladder, glancing.dirichlet, "o-", label=f"Dirichlet, slope {glancing.dirichlet_slope:.2f}")
        ax.loglog(glancing.ladder, glancing.neumann, "s-", label=f"Neumann / eps1, slope {glancing.neumann_slope:.2f}")
        ax.legend(fontsize=7)
    ax.set_xlabel("eps1")
    ax.set_ylabel("mean glancing mass")
    save_svg(fig, path)
    return path


def write_report(rep, run: Path, windows) -> list[Path]:
    """Write report tables and figures into ``run``; ``rep=None`` gives empty tables."""
    run = Path(run)
    empty = rep is None
    out = [
        _write_csv(run / "report-cauchy.csv", STATS_HEADER, [] if empty else _stats_rows(rep.cauchy)),
        _write_csv(run / "report-renormalized.csv", STATS_HEADER + ["subsequence"],
                   [] if empty else [r + ["density-one"] for r in _stats_rows(rep.renormalized)]
                   + [r + ["all"] for r in _stats_rows(rep.renormalized_all)]),
        _write_csv(run / "report-retained.csv", ["eps1", "window_lo", "window_hi", "count", "kept", "density"],
                   [] if empty else [[e, *row] for e, rows in rep.retained.items() for row in rows]),
    ]
    g = None if empty else rep.glancing
    grows = [] if g is None else [
        [e, f"{d:.12g}", f"{n:.12g}", f"{g.dirichlet_slope:.6g}", f"{g.neumann_slope:.6g}"]
        for e, d, n in zip(g.ladder, g.dirichlet, g.neumann)
    ]
    out.append(_write_csv(run / "report-glancing.csv", ["eps1", "dirichlet", "neumann", "dirichlet_slope", "neumann_slope"], grows))
    flags = [] if empty else rep.flags
    (run / "report-flags.txt").write_text("".join(f"{f}\n" for f in flags))
    out.append(run / "report-flags.txt")
    out.append(_plot_gaps({} if empty else rep.cauchy, windows, "Cauchy lift vs +1/2 state", run / "report-cauchy.svg"))
    out.append(_plot_gaps({} if empty else rep.renormalized, windows, "renormalised lift vs -1/2 state", run / "report-renormalized.svg"))
    out.append(_plot_glancing(g, run / "report-glancing.svg"))
    return out


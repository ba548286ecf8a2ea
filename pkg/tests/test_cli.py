import csv
import json

import pytest

from qerlab.cli import EXIT_CONFIG, EXIT_DOMAIN, EXIT_OK, ConfigError, main, parse_config

SQUARE = """\
domain.kind = rectangle
domain.a = 1
domain.b = 1
solver.delta = 1/64
solver.lam2_max = 60
run.name = square
"""

DISK = """\
domain.kind = disk
domain.R = 1
curve.kind = circle
curve.rho = 0.6
solver.delta = 1/48
solver.lam2_max = 160
windows = 20:80, 80:160
symbols = const1, gauss_xi(0,0.5)
eps1 = 0.4, 0.2
run.name = disk
"""


def _cfg(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def _rows(path):
    with open(path, newline="") as f:
        return list(csv.reader(f))


@pytest.fixture(scope="module")
def disk_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("disk-archives")
    mp = pytest.MonkeyPatch()
    mp.setenv("QERLAB_ARCHIVE_ROOT", str(root))
    cfg = _cfg(tmp_path_factory.mktemp("cfg"), DISK)
    assert main(["all", "--config", str(cfg), "--stages", "solve,trace,lift,weyl,report"]) == EXIT_OK
    yield root / "disk", cfg
    mp.undo()


def test_solve_unit_square_first_eigenvalue(tmp_path, archive_tmp, capsys):
    assert main(["solve", "--config", str(_cfg(tmp_path, SQUARE))]) == EXIT_OK
    rows = _rows(archive_tmp / "square" / "spectrum.csv")
    assert rows[0] == ["mode_id", "lam2", "h", "residual"]
    assert float(rows[1][1]) == pytest.approx(19.74, abs=0.01)
    assert "solve: ran" in capsys.readouterr().out


def test_unknown_key_is_config_error(tmp_path, archive_tmp, capsys):
    cfg = _cfg(tmp_path, SQUARE + "qunatize.n = 64\n")
    assert main(["solve", "--config", str(cfg)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "qunatize.n" in err and "line 7" in err


def test_missing_config_file_is_config_error(tmp_path, capsys):
    assert main(["solve", "--config", str(tmp_path / "nope.cfg")]) == EXIT_CONFIG


def test_parse_config_values():
    cfg = parse_config(DISK + "domain.vertices = 0 0; 1 0; 0 1\n")
    assert cfg.get("solver.delta") == pytest.approx(1 / 48)
    assert cfg.get("windows") == [(20.0, 80.0), (80.0, 160.0)]
    assert cfg.get("symbols") == ["const1", "gauss_xi(0,0.5)"]
    assert cfg.get("eps1") == (0.4, 0.2)
    assert cfg.get("domain.vertices") == [[0, 0], [1, 0], [0, 1]]


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("domain.kind = disk\ndomain.kind = disk\n", "duplicate"),
        ("domain.kind = disk\nsolver.delta = abc\n", "bad value"),
        ("domain.kind = disk\njust words\n", "key = value"),
        ("solver.delta = 1/64\n", "domain.kind"),
    ],
)
def test_parse_config_errors(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config(text)


def test_rerun_is_cached(tmp_path, archive_tmp, capsys):
    cfg = _cfg(tmp_path, SQUARE)
    assert main(["solve", "--config", str(cfg)]) == EXIT_OK
    man = json.loads((archive_tmp / "square" / "manifest.json").read_text())
    assert man["stages"]["solve"]["cache_hit"] is False
    capsys.readouterr()
    assert main(["solve", "--config", str(cfg)]) == EXIT_OK
    assert "solve: cached" in capsys.readouterr().out
    man = json.loads((archive_tmp / "square" / "manifest.json").read_text())
    assert man["stages"]["solve"]["cache_hit"] is True
    assert man["config"]["solver.delta"] == "1/64"
    assert set(man["versions"]) == {"qerlab", "python", "numpy"}
    assert set(man["stages"]["solve"]["outputs"]) == {"modes.qer", "spectrum.csv"}


def test_force_reruns(tmp_path, archive_tmp, capsys):
    cfg = _cfg(tmp_path, SQUARE)
    main(["solve", "--config", str(cfg)])
    capsys.readouterr()
    assert main(["solve", "--config", str(cfg), "--force"]) == EXIT_OK
    assert "solve: ran" in capsys.readouterr().out


def test_stage_dependency_missing(tmp_path, archive_tmp, capsys):
    cfg = _cfg(tmp_path, SQUARE + "curve.kind = segment\ncurve.x0 = 0.2\ncurve.y0 = 0.5\ncurve.x1 = 0.8\ncurve.y1 = 0.5\n")
    assert main(["trace", "--config", str(cfg)]) == EXIT_DOMAIN
    assert "needs stage 'solve'" in capsys.readouterr().err


def test_empty_archive_gives_header_only_report(tmp_path, archive_tmp):
    # lam2_max below the first eigenvalue: the archive holds no modes
    text = SQUARE.replace("solver.lam2_max = 60", "solver.lam2_max = 10")
    text += "curve.kind = segment\ncurve.x0 = 0.2\ncurve.y0 = 0.5\ncurve.x1 = 0.8\ncurve.y1 = 0.5\nwindows = 0:100\n"
    cfg = _cfg(tmp_path, text)
    assert main(["all", "--config", str(cfg), "--stages", "solve,trace,report"]) == EXIT_OK
    run = archive_tmp / "square"
    assert len(_rows(run / "spectrum.csv")) == 1
    for name in ("report-cauchy.csv", "report-renormalized.csv", "report-retained.csv", "report-glancing.csv"):
        rows = _rows(run / name)
        assert len(rows) == 1 and rows[0]
    for name in ("report-cauchy.svg", "report-renormalized.svg", "report-glancing.svg"):
        assert (run / name).read_text().lstrip().startswith("<?xml")


def test_mixed_domain_rejected(tmp_path, archive_tmp, capsys):
    cfg = _cfg(tmp_path, SQUARE)
    assert main(["solve", "--config", str(cfg)]) == EXIT_OK
    # same run directory, different domain: the stored archive must be refused
    other = SQUARE.replace("domain.b = 1", "domain.b = 0.7")
    other += "curve.kind = segment\ncurve.x0 = 0.2\ncurve.y0 = 0.3\ncurve.x1 = 0.8\ncurve.y1 = 0.3\n"
    cfg2 = _cfg(tmp_path, other, "other.cfg")
    assert main(["trace", "--config", str(cfg2)]) == EXIT_DOMAIN
    assert "different domains" in capsys.readouterr().err


def test_weyl_rejects_open_curve(tmp_path, archive_tmp, capsys):
    text = SQUARE + "curve.kind = segment\ncurve.x0 = 0.2\ncurve.y0 = 0.5\ncurve.x1 = 0.8\ncurve.y1 = 0.5\n"
    cfg = _cfg(tmp_path, text)
    assert main(["all", "--config", str(cfg), "--stages", "solve,trace,weyl"]) == EXIT_DOMAIN
    assert "closed curve" in capsys.readouterr().err


def test_closed_curve_pipeline_outputs(disk_run):
    run, _ = disk_run
    lifts = _rows(run / "lifts.csv")
    assert lifts[0][:5] == ["mode_id", "lam2", "h", "symbol", "eps1"]
    assert {r[3] for r in lifts[1:]} == {"const1", "gauss_xi(0,0.5)"}
    assert {r[4] for r in lifts[1:]} == {"0.4", "0.2"}
    cauchy = _rows(run / "report-cauchy.csv")
    assert len(cauchy) == 1 + 2 * 2
    weyl = _rows(run / "weyl.csv")
    assert len(weyl) == 1 + 2 * 2


def test_report_svg_byte_identical(disk_run, capsys):
    run, cfg = disk_run
    before = {p.name: p.read_bytes() for p in run.glob("report-*")}
    assert main(["report", "--config", str(cfg), "--force"]) == EXIT_OK
    after = {p.name: p.read_bytes() for p in run.glob("report-*")}
    assert before.keys() == after.keys() and len(before) == 8
    for name in before:
        assert before[name] == after[name], name


def test_all_rerun_fully_cached(disk_run, capsys):
    run, cfg = disk_run
    capsys.readouterr()
    assert main(["all", "--config", str(cfg), "--stages", "solve,trace,lift,weyl,report"]) == EXIT_OK
    out = capsys.readouterr().out.split("\n")
    assert [line for line in out if line] == [f"{s}: cached" for s in ("solve", "trace", "lift", "weyl", "report")]


def test_missing_traces_abort_report(disk_run, tmp_path):
    from qerlab.archive import TraceArchive
    from qerlab.cli import _load_traces, _objects
    from qerlab.harness import HarnessError

    run, cfg_path = disk_run
    cfg = parse_config(cfg_path.read_text())
    domain, curve = _objects(cfg)
    src = run / TraceArchive.filename(curve)
    recs = list(TraceArchive(src).read())
    # rebuild the trace archive without its last record
    work = tmp_path / "work"
    work.mkdir()
    (work / "modes.qer").symlink_to(run / "modes.qer")
    arc = TraceArchive(work / src.name)
    arc.create(domain, curve)
    arc.append(recs[:-1])
    with pytest.raises(HarnessError, match=f"have no trace .*{recs[-1].mode_id}"):
        _load_traces(cfg, work, domain, curve)
    assert len(_load_traces(cfg, run, domain, curve)) == len(recs)


def test_all_on_open_arc_skips_glancing_sums(tmp_path, archive_tmp, capsys):
    text = SQUARE.replace("solver.lam2_max = 60", "solver.lam2_max = 300")
    text += "curve.kind = segment\ncurve.x0 = 0.25\ncurve.y0 = 0.45\ncurve.x1 = 0.75\ncurve.y1 = 0.45\n"
    text += "windows = 0:150, 150:300\nsymbols = s_window(0.1,0.4,0.08)*gauss_xi(0,0.5)\nrellich.modes = 1\ncollar.eps = 0.2\n"
    assert main(["all", "--config", str(_cfg(tmp_path, text))]) == EXIT_OK
    out = capsys.readouterr().out
    assert "weyl" not in out and "report: ran" in out
    run = archive_tmp / "square"
    assert len(_rows(run / "report-cauchy.csv")) == 3
    assert len(_rows(run / "report-renormalized.csv")) == 1
    assert (run / "report-flags.txt").read_text().startswith("non-ergodic")
    defects = [float(r[9]) for r in _rows(run / "rellich.csv")[1:]]
    assert defects[-1] < defects[0] and defects[-1] < 1e-3

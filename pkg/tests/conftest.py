import numpy as np
import pytest

from qerlab.geometry import build_curve, build_domain


@pytest.fixture(scope="session")
def unit_square():
    return build_domain({"kind": "rectangle", "a": 1, "b": 1})


@pytest.fixture(scope="session")
def unit_disk():
    return build_domain({"kind": "disk", "R": 1.0})


@pytest.fixture(scope="session")
def stadium():
    return build_domain({"kind": "stadium", "alpha": 1, "r": 1})


@pytest.fixture(scope="session")
def square_segment(unit_square):
    return build_curve({"kind": "segment", "x0": 0.25, "y0": 0.45, "x1": 0.75, "y1": 0.45}, unit_square)


@pytest.fixture(scope="session")
def disk_circle(unit_disk):
    return build_curve({"kind": "circle", "rho": 0.6}, unit_disk)


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


@pytest.fixture
def archive_tmp(tmp_path, monkeypatch):
    monkeypatch.setenv("QERLAB_ARCHIVE_ROOT", str(tmp_path / "archives"))
    return tmp_path / "archives"


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def verdict(request, capsys):
    """Print and record one ``criterion N title: PASS|FAIL (numbers)`` line."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def emit(n, title, ok, detail):
        line = f"criterion {n} {title}: {'PASS' if ok else 'FAIL'} ({detail})"
        lines.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)

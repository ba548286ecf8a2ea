import numpy as np
import pytest

from qerlab.archive import ArchiveError, ModeArchive, TraceArchive, read_spectrum_csv, write_spectrum_csv
from qerlab.eigensolver import EigenMode, assemble_laplacian, solve_window
from qerlab.geometry import build_domain
from qerlab.trace import cauchy_trace


@pytest.fixture(scope="module")
def small(unit_square):
    op = assemble_laplacian(unit_square, 1 / 32)
    return op, solve_window(op, (10, 120), 20)


def test_mode_round_trip(tmp_path, small):
    op, modes = small
    arc = ModeArchive(tmp_path / "m.qer")
    arc.create(op)
    arc.append(modes[:3])
    arc.append(modes[3:], keep_fields=False)
    back = list(arc.read())
    assert [m.mode_id for m in back] == [m.mode_id for m in modes]
    assert [m.lam2 for m in back] == [m.lam2 for m in modes]
    assert np.array_equal(back[0].field.values, modes[0].field.values)
    assert back[-1].field is None
    assert back[0].domain.spec_hash == op.domain.spec_hash
    hd = arc.header()
    assert np.array_equal(hd.mask, op.mask) and hd.grid == op.grid


def test_spectrum_only_read(tmp_path, small):
    op, modes = small
    arc = ModeArchive(tmp_path / "m.qer")
    arc.create(op)
    arc.append(modes)
    assert all(m.field is None for m in arc.read(with_fields=False))
    rows = arc.spectrum()
    write_spectrum_csv(tmp_path / "s.csv", rows)
    assert read_spectrum_csv(tmp_path / "s.csv") == rows


def test_torn_tail_is_ignored(tmp_path, small):
    op, modes = small
    arc = ModeArchive(tmp_path / "m.qer")
    arc.create(op)
    arc.append(modes[:2])
    with open(arc.path, "ab") as f:
        f.write(b"\x01\x02\x03")
    assert len(list(arc.read())) == 2


def test_foreign_domain_rejected(tmp_path, small):
    op, modes = small
    arc = ModeArchive(tmp_path / "m.qer")
    arc.create(op)
    other = build_domain({"kind": "rectangle", "a": 2, "b": 1})
    with pytest.raises(ArchiveError):
        arc.append([EigenMode(10.0, other)])


def test_bad_magic(tmp_path):
    p = tmp_path / "x.qer"
    p.write_bytes(b"NOTANARCHIVE")
    with pytest.raises(ArchiveError):
        ModeArchive(p).header()
    with pytest.raises(ArchiveError):
        TraceArchive(p).specs()


def test_trace_round_trip(tmp_path, small, unit_square, square_segment):
    op, modes = small
    path = tmp_path / TraceArchive.filename(square_segment)
    arc = TraceArchive(path)
    arc.create(unit_square, square_segment)
    tr = [cauchy_trace(m, square_segment) for m in modes[:4]]
    arc.append(tr)
    back = list(arc.read())
    dspec, cspec = arc.specs()
    assert dspec == unit_square.spec and cspec == square_segment.spec
    for a, b in zip(tr, back):
        assert np.array_equal(a.dirichlet, b.dirichlet) and np.array_equal(a.neumann, b.neumann)
        assert (a.mode_id, a.lam2, a.h, a.closed, a.curve_hash) == (b.mode_id, b.lam2, b.h, b.closed, b.curve_hash)

"""
Flat binary containers for eigenmodes and Cauchy traces.

Mode archive (``modes.qer``), little-endian::

    b"QERMODES"  magic
    u32          format version
    u32 + bytes  domain spec as UTF-8 JSON
    f8 f8 f8     grid x0, y0, delta
    u32 u32      grid nx, ny
    u32 + bytes  interior mask, bit-packed (numpy.packbits, row-major)
    records, each:
        u32 mode_id, f8 lam2, f8 h, f8 residual, u8 has_field,
        f8[n_interior] field samples on the mask (if has_field)

Trace archive (``traces-<curve hash>.qer``)::

    b"QERTRACE", u32 version, u32 + bytes domain spec JSON,
    u32 + bytes curve spec JSON, f8 curve length,
    records, each:
        u32 mode_id, f8 lam2, f8 h, u32 N, c16[N] dirichlet, c16[N] neumann

Both files are append-only; a record is only visible once fully written.  A
CSV index (``spectrum.csv``) lists mode id, eigenvalue, h and residual.
"""

from __future__ import annotations

import csv
import io
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .eigensolver import DiscreteLaplacian, EigenMode, GridField, GridSpec
from .geometry import Curve, Domain, _spec_hash, build_domain
from .trace import CauchyTrace

__all__ = [
    "ArchiveError",
    "FORMAT_VERSION",
    "ModeArchive",
    "TraceArchive",
    "write_spectrum_csv",
    "read_spectrum_csv",
]

FORMAT_VERSION = 1
MODE_MAGIC = b"QERMODES"
TRACE_MAGIC = b"QERTRACE"


class ArchiveError(RuntimeError):
    pass


def _write_blob(f, data: bytes) -> None:
    f.write(struct.pack("<I", len(data)))
    f.write(data)


def _read_blob(f) -> bytes:
    (n,) = struct.unpack("<I", _read_exact(f, 4))
    return _read_exact(f, n)


def _read_exact(f, n: int) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise EOFError
    return data


def _spec_json(spec: dict) -> bytes:
    return json.dumps(spec, sort_keys=True).encode()


def _check_magic(f, magic: bytes, path: Path) -> None:
    head = f.read(len(magic))
    if head != magic:
        raise ArchiveError(f"{path} is not a {magic.decode()} archive")
    (ver,) = struct.unpack("<I", _read_exact(f, 4))
    if ver != FORMAT_VERSION:
        raise ArchiveError(f"{path}: unsupported format version {ver}")


# ----------------------------------------------------------------------------- modes


@dataclass
class ModeHeader:
    domain: Domain
    grid: GridSpec
    mask: np.ndarray


class ModeArchive:
    """Append-only mode container bound to one domain and grid."""

    _REC = struct.Struct("<Idddb")

    def __init__(self, path: str | Path):
        self.path = Path(path)

    # -- writing ---------------------------------------------------------------------

    def create(self, op: DiscreteLaplacian) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        g = op.grid
        with open(self.path, "wb") as f:
            f.write(MODE_MAGIC)
            f.write(struct.pack("<I", FORMAT_VERSION))
            _write_blob(f, _spec_json(op.domain.spec))
            f.write(struct.pack("<dddII", g.x0, g.y0, g.delta, g.nx, g.ny))
            _write_blob(f, np.packbits(op.mask.ravel()).tobytes())

    def append(self, modes: Iterable[EigenMode], keep_fields: bool = True) -> None:
        header = self.header()
        buf = io.BytesIO()
        for m in modes:
            if m.domain.spec_hash != header.domain.spec_hash:
                raise ArchiveError(f"mode {m.mode_id} belongs to a different domain")
            has = keep_fields and m.field is not None
            buf.write(self._REC.pack(m.mode_id, m.lam2, m.h, m.residual, int(has)))
            if has:
                buf.write(np.ascontiguousarray(m.field.values[header.mask], dtype="<f8").tobytes())
        with open(self.path, "ab") as f:
            f.write(buf.getvalue())

    # -- reading ---------------------------------------------------------------------

    def header(self) -> ModeHeader:
        with open(self.path, "rb") as f:
            return self._read_header(f)

    def _read_header(self, f) -> ModeHeader:
        _check_magic(f, MODE_MAGIC, self.path)
        domain = build_domain(json.loads(_read_blob(f)))
        x0, y0, delta, nx, ny = struct.unpack("<dddII", _read_exact(f, 32))
        grid = GridSpec(x0, y0, delta, nx, ny)
        bits = np.frombuffer(_read_blob(f), dtype=np.uint8)
        mask = np.unpackbits(bits)[: nx * ny].reshape(nx, ny).astype(bool)
        return ModeHeader(domain, grid, mask)

    def __iter__(self) -> Iterator[EigenMode]:
        return self.read()

    def read(self, with_fields: bool = True) -> Iterator[EigenMode]:
        with open(self.path, "rb") as f:
            hd = self._read_header(f)
            n = int(hd.mask.sum())
            while True:
                try:
                    mid, lam2, h, res, has = self._REC.unpack(_read_exact(f, self._REC.size))
                except EOFError:
                    return
                field = None
                if has:
                    raw = _read_exact(f, 8 * n)
                    if with_fields:
                        values = np.zeros(hd.mask.shape)
                        values[hd.mask] = np.frombuffer(raw, dtype="<f8")
                        field = GridField(hd.grid, values, hd.mask)
                yield EigenMode(lam2=lam2, domain=hd.domain, field=field, residual=res, mode_id=mid)

    def spectrum(self) -> list[tuple[int, float, float, float]]:
        return [(m.mode_id, m.lam2, m.h, m.residual) for m in self.read(with_fields=False)]


def write_spectrum_csv(path: str | Path, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["mode_id", "lam2", "h", "residual"])
        for mid, lam2, h, res in rows:
            w.writerow([mid, repr(float(lam2)), repr(float(h)), repr(float(res))])


def read_spectrum_csv(path: str | Path) -> list[tuple[int, float, float, float]]:
    with open(path, newline="") as f:
        r = csv.DictReader(f)
        return [(int(x["mode_id"]), float(x["lam2"]), float(x["h"]), float(x["residual"])) for x in r]


# ----------------------------------------------------------------------------- traces


class TraceArchive:
    """Append-only Cauchy-trace container keyed by domain and curve."""

    _REC = struct.Struct("<IddI")

    def __init__(self, path: str | Path):
        self.path = Path(path)

    @staticmethod
    def filename(curve: Curve) -> str:
        return f"traces-{curve.spec_hash}.qer"

    def create(self, domain: Domain, curve: Curve) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "wb") as f:
            f.write(TRACE_MAGIC)
            f.write(struct.pack("<I", FORMAT_VERSION))
            _write_blob(f, _spec_json(domain.spec))
            _write_blob(f, _spec_json(curve.spec))
            f.write(struct.pack("<d", curve.length))

    def specs(self) -> tuple[dict, dict]:
        with open(self.path, "rb") as f:
            return self._read_header(f)[:2]

    def _read_header(self, f):
        _check_magic(f, TRACE_MAGIC, self.path)
        dspec, cspec = json.loads(_read_blob(f)), json.loads(_read_blob(f))
        (length,) = struct.unpack("<d", _read_exact(f, 8))
        return dspec, cspec, length

    def append(self, traces: Iterable[CauchyTrace]) -> None:
        buf = io.BytesIO()
        for t in traces:
            buf.write(self._REC.pack(t.mode_id, np.nan if t.lam2 is None else t.lam2, t.h, t.n))
            buf.write(np.ascontiguousarray(t.dirichlet, dtype="<c16").tobytes())
            buf.write(np.ascontiguousarray(t.neumann, dtype="<c16").tobytes())
        with open(self.path, "ab") as f:
            f.write(buf.getvalue())

    def read(self) -> Iterator[CauchyTrace]:
        with open(self.path, "rb") as f:
            _, cspec, length = self._read_header(f)
            chash = _spec_hash(cspec)
            closed = cspec.get("kind") != "segment"
            while True:
                try:
                    mid, lam2, h, n = self._REC.unpack(_read_exact(f, self._REC.size))
                    d = np.frombuffer(_read_exact(f, 16 * n), dtype="<c16").copy()
                    nn = np.frombuffer(_read_exact(f, 16 * n), dtype="<c16").copy()
                except EOFError:
                    return
                yield CauchyTrace(h, length, d, nn, closed, mid, chash, lam2)

    def __iter__(self):
        return self.read()


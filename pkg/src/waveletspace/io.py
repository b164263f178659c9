"""WGF1 grid files and WCF1 coefficient files.

WGF1: ASCII header ``WGF1 <n> <J>\\n`` followed by 2^{Jn} little-endian
float64 values in row-major order.

WCF1: ASCII header ``WCF1 <n> <J>`` then one CSV line per entry,
``eps_bits,j,k_1[,k_2],value`` where ``eps_bits`` is the eps vector written
as a bit string (``"01"``). Values use ``repr`` so they round-trip exactly.
"""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np

from .core import CoefficientField, GridFunction, WaveletIndex


MAX_GRID_EXPONENT = 28


class FormatError(ValueError):
    """Malformed input file. ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


def atomic_write(path, data: bytes) -> None:
    """Write to a temp file in the target directory, then rename over path."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write(path, text.encode("utf-8"))


def _parse_header(raw: bytes, magic: str):
    nl = raw.find(b"\n")
    if nl < 0:
        raise FormatError("missing header line", 0)
    try:
        parts = raw[:nl].decode("ascii").split()
    except UnicodeDecodeError:
        raise FormatError("header is not ASCII", 0) from None
    if not parts or parts[0] != magic:
        raise FormatError(f"expected magic {magic!r}", 0)
    if len(parts) != 3:
        raise FormatError("header must read '<magic> <n> <J>'", len(parts[0]) + 1)
    try:
        n, J = int(parts[1]), int(parts[2])
    except ValueError:
        raise FormatError("n and J must be integers", len(parts[0]) + 1) from None
    if n not in (1, 2) or not 0 <= J * n <= MAX_GRID_EXPONENT:
        raise FormatError(f"unsupported n={n}, J={J}", len(parts[0]) + 1)
    return n, J, nl + 1


def grid_to_bytes(f: GridFunction) -> bytes:
    head = f"WGF1 {f.n} {f.J}\n".encode("ascii")
    return head + np.ascontiguousarray(f.values, dtype="<f8").tobytes()


def grid_from_bytes(raw: bytes) -> GridFunction:
    n, J, start = _parse_header(raw, "WGF1")
    count = 2 ** (J * n)
    body = raw[start:]
    if len(body) != 8 * count:
        off = start + min(len(body), 8 * count)
        raise FormatError(f"expected {8 * count} payload bytes, found {len(body)}", off)
    vals = np.frombuffer(body, dtype="<f8").astype(float)
    bad = np.flatnonzero(~np.isfinite(vals))
    if bad.size:
        raise FormatError("non-finite sample", start + 8 * int(bad[0]))
    return GridFunction(n, J, vals)


def write_grid(path, f: GridFunction) -> None:
    atomic_write(path, grid_to_bytes(f))


def read_grid(path) -> GridFunction:
    with open(path, "rb") as fh:
        return grid_from_bytes(fh.read())


def coeffs_to_text(c: CoefficientField) -> str:
    lines = [f"WCF1 {c.n} {c.J}"]
    for idx, v in c.entries():
        eps = "".join(str(e) for e in idx.eps)
        ks = ",".join(str(x) for x in idx.k)
        lines.append(f"{eps},{idx.j},{ks},{v!r}")
    return "\n".join(lines) + "\n"


def coeffs_from_text(raw: bytes) -> CoefficientField:
    n, J, pos = _parse_header(raw, "WCF1")
    data = np.zeros((2**J,) * n)
    seen = np.zeros(data.shape, dtype=bool)
    while pos < len(raw):
        nl = raw.find(b"\n", pos)
        end = len(raw) if nl < 0 else nl
        line = raw[pos:end].decode("ascii", errors="replace").strip()
        if line:
            fields = line.split(",")
            if len(fields) != 3 + n:
                raise FormatError(f"expected {3 + n} fields, got {len(fields)}", pos)
            eps_s = fields[0]
            if len(eps_s) != n or set(eps_s) - {"0", "1"}:
                raise FormatError(f"bad eps bits {eps_s!r}", pos)
            try:
                j = int(fields[1])
                k = tuple(int(x) for x in fields[2:2 + n])
                v = float(fields[-1])
                idx = WaveletIndex(tuple(int(ch) for ch in eps_s), j, k)
            except ValueError as exc:
                raise FormatError(f"bad entry: {exc}", pos) from None
            if j >= J:
                raise FormatError(f"level {j} not below J={J}", pos)
            if not np.isfinite(v):
                raise FormatError("non-finite coefficient", pos)
            slot = idx.slot()
            if seen[slot]:
                raise FormatError(f"duplicate entry {eps_s},{j},{k}", pos)
            seen[slot] = True
            data[slot] = v
        pos = end + 1
    # missing lines mean zero coefficients, which keeps sparse files legal
    return CoefficientField(n, J, data)


def write_coeffs(path, c: CoefficientField) -> None:
    atomic_write_text(path, coeffs_to_text(c))


def read_coeffs(path) -> CoefficientField:
    with open(path, "rb") as fh:
        return coeffs_from_text(fh.read())


def dumps(obj) -> str:
    """Canonical JSON used for every emitted report."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"

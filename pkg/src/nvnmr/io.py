"""CSV emission and ingestion for signals, spectra and peak tables.

Every file starts with a commented ``# key: value`` block carrying units and
the id of the run manifest that produced it, followed by one CSV header row.
"""

from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .protocols import AcquisitionGrid, Signal, Signal2D


class DataFormatError(ValueError):
    """Malformed data file; ``line`` is 1-based."""

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _header_lines(meta):
    out = []
    for key, val in meta.items():
        out.append(f"# {key}: {json.dumps(val, sort_keys=True)}")
    return out


def _write(path, meta, columns, rows):
    buf = _io.StringIO()
    for line in _header_lines(meta):
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    path = Path(path)
    path.write_text(buf.getvalue())
    return path


def read_table(path):
    """Return (metadata, columns, rows-as-strings, first data line number)."""
    path = Path(path)
    text = path.read_text()
    meta = {}
    lines = text.splitlines()
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        body = lines[i][1:].strip()
        if body:
            key, sep, val = body.partition(":")
            if not sep:
                raise DataFormatError(path, i + 1, "header line must be '# key: value'")
            try:
                meta[key.strip()] = json.loads(val.strip())
            except json.JSONDecodeError:
                meta[key.strip()] = val.strip()
        i += 1
    if i >= len(lines):
        raise DataFormatError(path, i + 1, "missing column header row")
    columns = next(csv.reader([lines[i]]))
    rows = []
    for j, row in enumerate(csv.reader(lines[i + 1 :]), start=i + 2):
        if not row:
            continue
        if len(row) != len(columns):
            raise DataFormatError(path, j, f"expected {len(columns)} fields, found {len(row)}")
        rows.append((j, row))
    return meta, columns, rows


def _floats(path, rows, idx):
    out = np.empty((len(rows), len(idx)))
    for r, (line, row) in enumerate(rows):
        for c, k in enumerate(idx):
            try:
                out[r, c] = float(row[k])
            except ValueError:
                raise DataFormatError(path, line, f"not a number: {row[k]!r}") from None
            if not math.isfinite(out[r, c]):
                raise DataFormatError(path, line, f"non-finite value {row[k]!r}")
    return out


# --------------------------------------------------------------------------
# signals


def write_signal(path, signal, manifest_id=None, extra=None):
    meta = {"format": "signal", "manifest": manifest_id}
    meta.update(extra or {})
    meta.update({k: v for k, v in signal.metadata.items() if _jsonable(v)})
    meta["phase_cycled"] = bool(signal.phase_cycled)
    if isinstance(signal, Signal2D):
        meta["units"] = "t1_s: s, t2_s: s, p: probability"
        meta["shape"] = [signal.grid1.count, signal.grid2.count]
        t1, t2 = signal.grid1.times, signal.grid2.times
        rows = (
            (t1[i], t2[j], signal.values[i, j])
            for i in range(len(t1))
            for j in range(len(t2))
        )
        return _write(path, meta, ["t1_s", "t2_s", "p"], rows)
    meta["units"] = "t1_s: s, p: probability"
    return _write(path, meta, ["t1_s", "p"], zip(signal.t, signal.values))


def _jsonable(v):
    try:
        json.dumps(v)
    except TypeError:
        return False
    return True


def _grid(path, t, name):
    if len(t) == 1:
        return AcquisitionGrid(float(t[0]), 1.0, 1)
    d = np.diff(t)
    if not np.allclose(d, d[0], rtol=1e-6, atol=0) or d[0] <= 0:
        raise DataFormatError(path, 0, f"{name} column is not a uniform increasing grid")
    return AcquisitionGrid(float(t[0]), float(d[0]), len(t))


def read_signal(path):
    """Load a 1D or 2D signal written by :func:`write_signal`."""
    meta, cols, rows = read_table(path)
    if not rows:
        raise DataFormatError(path, 0, "signal file holds no samples")
    phase_cycled = bool(meta.get("phase_cycled", False))
    if cols == ["t1_s", "p"]:
        data = _floats(path, rows, [0, 1])
        grid = _grid(path, data[:, 0], "t1_s")
        return Signal(grid, data[:, 1], phase_cycled=phase_cycled, metadata=meta)
    if cols == ["t1_s", "t2_s", "p"]:
        data = _floats(path, rows, [0, 1, 2])
        t1 = np.unique(data[:, 0])
        t2 = np.unique(data[:, 1])
        if len(t1) * len(t2) != len(data):
            raise DataFormatError(path, 0, "2D signal is not a full rectangular grid")
        vals = data[:, 2].reshape(len(t1), len(t2))
        g1, g2 = _grid(path, t1, "t1_s"), _grid(path, t2, "t2_s")
        return Signal2D(g1, g2, vals, phase_cycled=phase_cycled, metadata=meta)
    raise DataFormatError(path, len(meta) + 1, f"unknown signal columns {cols}")


# --------------------------------------------------------------------------
# spectra and peaks


def write_spectrum(path, spectrum, manifest_id=None, extra=None):
    meta = {"format": "spectrum", "manifest": manifest_id, "units": "f_hz: Hz"}
    meta.update(extra or {})
    meta.update({"dwell_s": spectrum.dwell, "n_samples": spectrum.n_samples, "nfft": spectrum.nfft})
    v = spectrum.values
    rows = zip(spectrum.freqs, v.real, v.imag, np.abs(v))
    return _write(path, meta, ["f_hz", "re", "im", "abs"], rows)


def write_spectrum_2d(path, spec, manifest_id=None, extra=None):
    meta = {"format": "spectrum2d", "manifest": manifest_id, "units": "f1_hz: Hz, f2_hz: Hz"}
    meta.update(extra or {})
    rows = (
        (spec.f1[i], spec.f2[j], spec.values[i, j].real, spec.values[i, j].imag,
         abs(spec.values[i, j]))
        for i in range(len(spec.f1))
        for j in range(len(spec.f2))
    )
    return _write(path, meta, ["f1_hz", "f2_hz", "re", "im", "abs"], rows)


PEAK_COLUMNS = ["f_hz", "f_err_hz", "amp", "isotope", "harmonic_m", "harmonic_k", "kind"]


def write_peaks(path, assignments, manifest_id=None, extra=None):
    """One row per PeakAssignment; empty cells when a field does not apply."""
    meta = {"format": "peaks", "manifest": manifest_id, "units": "f_hz: Hz, f_err_hz: Hz"}
    meta.update(extra or {})
    rows = []
    for a in assignments:
        h = a.harmonic
        err = a.peak.fit_uncertainty
        rows.append(
            (
                a.peak.freq,
                "" if math.isnan(err) else err,
                a.peak.amplitude,
                a.isotope or "",
                h.m if h else "",
                h.k if h else "",
                str(h) if h else "",
            )
        )
    return _write(path, meta, PEAK_COLUMNS, rows)


def read_peaks(path):
    meta, cols, rows = read_table(path)
    if cols != PEAK_COLUMNS:
        raise DataFormatError(path, len(meta) + 1, f"unexpected peak columns {cols}")
    return meta, [dict(zip(cols, r)) for _, r in rows]


def write_peaks_2d(path, peaks, manifest_id=None, extra=None):
    meta = {"format": "peaks2d", "manifest": manifest_id, "units": "f1_hz: Hz, f2_hz: Hz"}
    meta.update(extra or {})
    return _write(path, meta, ["f1_hz", "f2_hz", "amp"], peaks)


# --------------------------------------------------------------------------
# manifest


def sha256_file(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def config_hash(config):
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class RunManifest:
    config_hash: str
    seed: int | None
    tool_version: str
    command: str
    started: str = ""
    finished: str = ""
    files: list = field(default_factory=list)

    @property
    def run_id(self):
        """Deterministic id referenced from every output header."""
        key = f"{self.config_hash}:{self.seed}:{self.tool_version}:{self.command}"
        return hashlib.sha256(key.encode()).hexdigest()[:16]

    def add(self, path):
        self.files.append({"path": Path(path).name, "sha256": sha256_file(path)})

    def write(self, path):
        d = asdict(self)
        d["run_id"] = self.run_id
        Path(path).write_text(json.dumps(d, indent=2, sort_keys=True) + "\n")
        return Path(path)

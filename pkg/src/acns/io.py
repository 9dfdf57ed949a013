"""
Persistence: CSV time series (17 significant digits, so floats round-trip),
field snapshots (one JSON header line followed by little-endian float64
data) and run manifests.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .dynamics import CoupledState
from .spectral import ScalarField, SolenoidalField, SpectralGrid

SNAPSHOT_FORMAT = "acns-field-v1"


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v) + 0.0  # drops the sign of zero
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.17g}"


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(x) for x in r])
    return path


def read_csv(path) -> tuple[list, np.ndarray]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array([[float(x) for x in r] for r in body]) if body else np.zeros((0, len(header)))
    return header, data


def write_snapshot(path, state: CoupledState) -> Path:
    """Spectral velocity as interleaved (re, im) pairs, then physical phi."""
    g = state.grid
    header = {
        "format": SNAPSHOT_FORMAT,
        "grid": {"nx": g.nx, "ny": g.ny, "Lx": g.Lx, "Ly": g.Ly},
        "t": state.t,
        "fields": [
            {"name": "u_hat", "shape": [2, g.nx, g.ny, 2], "dtype": "<f8", "layout": "interleaved complex"},
            {"name": "phi", "shape": [g.nx, g.ny], "dtype": "<f8"},
        ],
    }
    uh = np.ascontiguousarray(state.u.hat, dtype="<c16").view("<f8")
    ph = np.ascontiguousarray(state.phi.values, dtype="<f8")
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(uh.tobytes())
        fh.write(ph.tobytes())
    return path


def read_snapshot(path) -> CoupledState:
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    header = json.loads(raw[:nl])
    if header.get("format") != SNAPSHOT_FORMAT:
        raise ValueError(f"{path}: not an {SNAPSHOT_FORMAT} file")
    gd = header["grid"]
    g = SpectralGrid(gd["nx"], gd["ny"], gd["Lx"], gd["Ly"])
    body = np.frombuffer(raw[nl + 1:], dtype="<f8")
    nu = 2 * g.nx * g.ny * 2
    if body.size != nu + g.nx * g.ny:
        raise ValueError(f"{path}: payload has {body.size} values, expected {nu + g.nx * g.ny}")
    uh = body[:nu].copy().view("<c16").reshape(2, g.nx, g.ny)
    phi = body[nu:].reshape(g.nx, g.ny).copy()
    return CoupledState(SolenoidalField(g, uh), ScalarField(g, phi), float(header["t"]))


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def inventory(out_dir, files) -> list[dict]:
    out_dir = Path(out_dir)
    return [{"path": str(Path(f).relative_to(out_dir)), "sha256": file_sha256(f)} for f in sorted(map(Path, files))]

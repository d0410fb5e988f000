"""Snapshots and diagnostics CSV.

Snapshot layout: one JSON header line, then the little-endian float64
payload.  The header lists each array (name, shape, offset) plus scalar
metadata, and carries a SHA-256 digest over the canonical header (digest
field excluded) followed by the payload, so corruption in either part is
caught before any state is returned.
"""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .elliptic import StreamFunction
from .errors import SnapshotError
from .geometry import ScalarField3D, SurfaceField, make_grid
from .timestepper import QGState, RunStatus, StepRecord
from .transport import ParticleSet

SNAPSHOT_FORMAT = "cylqg-snapshot"
SNAPSHOT_VERSION = 1


def _canonical(header):
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _digest(header, payload):
    h = hashlib.sha256()
    h.update(_canonical({k: v for k, v in header.items() if k != "sha256"}))
    h.update(payload)
    return h.hexdigest()


def snapshot_write(state: QGState, path, status: RunStatus = None, particles: ParticleSet = None,
                   extra=None):
    """Write ``state`` (and optional run status, particles, JSON-able extras)."""
    g = state.grid
    arrays = {
        "F": state.F.values,
        "G_bottom": state.G_bottom.values,
        "G_top": state.G_top.values,
        "j": np.asarray(state.j, dtype=float),
        "psi": state.psi_cache.psi.values,
        "psi_trace": np.asarray(state.psi_cache.lateral_trace, dtype=float),
    }
    if particles is not None:
        arrays["particles"] = particles.positions
        arrays["particle_z"] = particles.z_label.astype(float)
    layout, chunks, offset = [], [], 0
    for name, a in arrays.items():
        a = np.ascontiguousarray(a, dtype="<f8")
        layout.append({"name": name, "shape": list(a.shape), "offset": offset})
        chunks.append(a.tobytes())
        offset += a.size
    payload = b"".join(chunks)
    header = {
        "format": SNAPSHOT_FORMAT,
        "version": SNAPSHOT_VERSION,
        "grid": g.describe(),
        "t": float(state.t),
        "step": int(state.step),
        "psi_mean": float(state.psi_cache.mean),
        "arrays": layout,
        "status": None if status is None else {k: (float(v) if isinstance(v, (float, np.floating))
                                                   else v) for k, v in asdict(status).items()},
        "particles": None if particles is None else {
            "t": float(particles.t), "min_boundary_distance": float(particles.min_boundary_distance)},
        "extra": extra,
    }
    header["sha256"] = _digest(header, payload)
    tmp = Path(str(path) + ".tmp")
    tmp.write_bytes(_canonical(header) + b"\n" + payload)
    tmp.replace(path)


class Snapshot:
    """Everything read back from a snapshot file."""

    def __init__(self, state, status, particles, extra, header):
        self.state = state
        self.status = status
        self.particles = particles
        self.extra = extra
        self.header = header


def snapshot_load(path) -> Snapshot:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise SnapshotError(f"{path}: cannot read snapshot ({exc})") from None
    nl = raw.find(b"\n")
    if nl < 0:
        raise SnapshotError(f"{path}: missing snapshot header")
    try:
        header = json.loads(raw[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise SnapshotError(f"{path}: corrupt snapshot header") from None
    if not isinstance(header, dict) or header.get("format") != SNAPSHOT_FORMAT:
        raise SnapshotError(f"{path}: not a snapshot file")
    if header.get("version") != SNAPSHOT_VERSION:
        raise SnapshotError(f"{path}: snapshot version {header.get('version')!r} is not supported "
                            f"(expected {SNAPSHOT_VERSION})")
    payload = raw[nl + 1:]
    if _digest(header, payload) != header.get("sha256"):
        raise SnapshotError(f"{path}: checksum mismatch (file truncated or corrupt)")
    data = np.frombuffer(payload, dtype="<f8")
    arrays = {}
    for item in header["arrays"]:
        n = int(np.prod(item["shape"])) if item["shape"] else 1
        arrays[item["name"]] = data[item["offset"]:item["offset"] + n].reshape(item["shape"]).copy()
    gd = header["grid"]
    g = make_grid(gd["n_r"], gd["n_theta"], gd["n_z"], gd["h"])
    psi = StreamFunction(ScalarField3D(g, arrays["psi"]), arrays["psi_trace"], header["psi_mean"])
    state = QGState(ScalarField3D(g, arrays["F"]), SurfaceField(g, "bottom", arrays["G_bottom"]),
                    SurfaceField(g, "top", arrays["G_top"]), arrays["j"], header["t"], psi,
                    header["step"])
    status = RunStatus(**header["status"]) if header.get("status") else None
    particles = None
    if header.get("particles") is not None:
        pm = header["particles"]
        particles = ParticleSet(arrays["particles"], arrays["particle_z"].astype(int), pm["t"],
                                pm["min_boundary_distance"])
    return Snapshot(state, status, particles, header.get("extra"), header)


def snapshot_read(path) -> QGState:
    return snapshot_load(path).state


# -- diagnostics CSV -----------------------------------------------------------

DIAGNOSTICS_HEADER = StepRecord.COLUMNS


class DiagnosticsWriter:
    """Append-only diagnostics CSV; ``keep_rows`` truncates an existing file on resume."""

    def __init__(self, path, keep_rows=None):
        self.path = Path(path)
        if keep_rows is None or not self.path.exists():
            with self.path.open("w", newline="") as fh:
                csv.writer(fh, lineterminator="\n").writerow(DIAGNOSTICS_HEADER)
        else:
            lines = self.path.read_bytes().splitlines(keepends=True)
            self.path.write_bytes(b"".join(lines[:1 + keep_rows]))

    def append(self, record: StepRecord):
        with self.path.open("a", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerow(record.row())


def read_diagnostics(path):
    """Columns of a diagnostics CSV as float arrays."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {c: np.array([float(r[c]) for r in rows]) for c in DIAGNOSTICS_HEADER}

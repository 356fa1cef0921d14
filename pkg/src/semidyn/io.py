"""CSV, JSON and binary dumps of frames, trajectories, branches and ensembles."""
from __future__ import annotations

import hashlib
import json
import math
import struct
from pathlib import Path

import numpy as np

from .exactqm import Grid, Wavefunction, current_density, polar_decompose, quantum_potential

FRAME_HEADER = "x,re,im,R,S,j,Q"
TRAJECTORY_HEADER = "t,x,p,S,J,mu"
BRANCH_HEADER = "k,x,x0,p0,S,mu,reflections,re_weight,im_weight"
ENSEMBLE_HEADER = "id,t,x,v"
SOLITON_HEADER = "id,t,x_b,a,k_b"

_CACHE_HEADER = struct.Struct("<qddd")


def _write_rows(path, rows, header, int_cols=()):
    rows = np.asarray(rows, float)
    cols = header.split(",")
    fmt = ["%d" if i in int_cols else "%.17g" for i in range(len(cols))]
    np.savetxt(path, rows.reshape(-1, len(cols)), fmt=fmt, delimiter=",", header=header,
               comments="")


def read_csv(path):
    """Structured array with the columns named by the header line."""
    return np.genfromtxt(path, delimiter=",", names=True)


def frame_rows(psi: Wavefunction):
    pol = polar_decompose(psi)
    return np.column_stack([psi.x, psi.values.real, psi.values.imag, pol.R, pol.S,
                            current_density(psi), quantum_potential(psi)])


def write_frame_csv(path, psi: Wavefunction):
    _write_rows(path, frame_rows(psi), FRAME_HEADER)


def write_binary_frame(path, psi: Wavefunction):
    """Little-endian int64 N, float64 x_min, x_max, t, then N (re, im) float64 pairs."""
    g = psi.grid
    with open(path, "wb") as fh:
        fh.write(_CACHE_HEADER.pack(g.n, g.x_min, g.x_max, psi.time))
        fh.write(np.ascontiguousarray(psi.values, dtype="<c16").tobytes())


def read_binary_frame(path, boundary="periodic", mass=1.0, hbar=1.0) -> Wavefunction:
    data = Path(path).read_bytes()
    n, x_min, x_max, t = _CACHE_HEADER.unpack_from(data)
    values = np.frombuffer(data, dtype="<c16", count=n, offset=_CACHE_HEADER.size)
    return Wavefunction(Grid(x_min, x_max, n, boundary), values.copy(), t, mass, hbar)


def write_trajectory_csv(path, traj):
    _write_rows(path, traj.to_rows(), TRAJECTORY_HEADER, int_cols=(5,))


def write_branch_csv(path, state):
    _write_rows(path, state.table(), BRANCH_HEADER, int_cols=(0, 5, 6))


def write_ensemble_csv(path, ensemble):
    _write_rows(path, ensemble.rows(), ENSEMBLE_HEADER, int_cols=(0,))


def write_soliton_csv(path, histories):
    rows = [h.rows(i) for i, h in enumerate(histories)]
    rows = np.vstack(rows) if rows else np.zeros((0, 5))
    _write_rows(path, rows, SOLITON_HEADER, int_cols=(0, 4))


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, complex):
        return [_clean(obj.real), _clean(obj.imag)]
    return obj


def dumps(obj):
    return json.dumps(_clean(obj), indent=2, sort_keys=True)


def write_json(path, obj):
    Path(path).write_text(dumps(obj) + "\n")


def config_hash(obj):
    """sha256 of the canonical JSON form of ``obj``."""
    text = json.dumps(_clean(obj), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()

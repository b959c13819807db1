"""Panel serialization: CSV for inspection, MKVP binary for bulk storage.

CSV: header ``time,x0,...,x{N-1}``; one row per observation time; floats are
written with ``repr`` so a read/write cycle reproduces the file byte for byte.

MKVP: ``b"MKVP"``, version byte, little-endian u64 N, u64 n, f64 T, then the
N x (n+1) panel as little-endian f64 in row-major order.
"""

import io
import struct
from pathlib import Path

import numpy as np

from .simulate import ObservationGrid, TrajectoryPanel

MAGIC = b"MKVP"
VERSION = 1
_HEADER = struct.Struct("<4sBQQd")


def panel_to_csv(panel: TrajectoryPanel) -> str:
    buf = io.StringIO()
    buf.write(",".join(["time"] + [f"x{i}" for i in range(panel.N)]) + "\n")
    times = panel.grid.times
    for j in range(panel.n + 1):
        row = [times[j]] + panel.data[:, j].tolist()
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue()


def panel_from_csv(text: str, model_name: str = "") -> TrajectoryPanel:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("time"):
        raise ValueError("panel CSV must start with a 'time,...' header")
    header = lines[0].split(",")
    rows = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    if rows.ndim != 2 or rows.shape[0] < 2 or rows.shape[1] != len(header):
        raise ValueError("panel CSV needs at least two rows matching the header width")
    times = rows[:, 0]
    n = rows.shape[0] - 1
    T = float(times[-1])
    grid = ObservationGrid(n, T)
    if times[0] != 0.0 or not np.allclose(times, grid.times, rtol=1e-9, atol=1e-12):
        raise ValueError("panel CSV times are not an equidistant grid starting at 0")
    return TrajectoryPanel(rows[:, 1:].T.copy(), grid, model_name)


def panel_to_bytes(panel: TrajectoryPanel) -> bytes:
    head = _HEADER.pack(MAGIC, VERSION, panel.N, panel.n, float(panel.T))
    return head + np.ascontiguousarray(panel.data, dtype="<f8").tobytes()


def panel_from_bytes(blob: bytes, model_name: str = "") -> TrajectoryPanel:
    if len(blob) < _HEADER.size:
        raise ValueError("truncated MKVP header")
    magic, version, N, n, T = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise ValueError("not an MKVP file")
    if version != VERSION:
        raise ValueError(f"unsupported MKVP version {version}")
    payload = blob[_HEADER.size :]
    if len(payload) != 8 * N * (n + 1):
        raise ValueError("MKVP payload size does not match header")
    data = np.frombuffer(payload, dtype="<f8").reshape(N, n + 1).astype(float)
    return TrajectoryPanel(data, ObservationGrid(int(n), T), model_name)


def save_panel(panel: TrajectoryPanel, path) -> None:
    path = Path(path)
    if path.suffix.lower() in (".mkvp", ".bin"):
        path.write_bytes(panel_to_bytes(panel))
    else:
        path.write_text(panel_to_csv(panel))


def load_panel(path, model_name: str = "") -> TrajectoryPanel:
    blob = Path(path).read_bytes()
    if blob[:4] == MAGIC:
        return panel_from_bytes(blob, model_name)
    return panel_from_csv(blob.decode(), model_name)

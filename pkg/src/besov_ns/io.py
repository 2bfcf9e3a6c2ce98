"""On-disk formats: field containers, traces, reports and plot data.

Field container: ``b"BNSF"``, four little-endian u32 (version, d, N,
component count), then the coefficients as little-endian complex128.  A JSON
sidecar ``<name>.json`` carries the grid metadata.
"""
from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .criteria import ExperimentReport
from .spectral import FourierField, TimeTrace, TorusGrid

MAGIC = b"BNSF"
VERSION = 1
_HEADER = struct.Struct("<4sIIII")


class FormatError(ValueError):
    pass


def _ncomp(coeffs: np.ndarray, grid: TorusGrid) -> tuple[int, tuple]:
    comp = coeffs.shape[: coeffs.ndim - grid.d]
    return int(np.prod(comp, dtype=int)), comp


def field_bytes(f: FourierField) -> bytes:
    n, _ = _ncomp(f.coeffs, f.grid)
    head = _HEADER.pack(MAGIC, VERSION, f.grid.d, f.grid.N, n)
    return head + np.ascontiguousarray(f.coeffs, dtype="<c16").tobytes()


def field_from_bytes(data: bytes, comp_shape: tuple | None = None) -> FourierField:
    if len(data) < _HEADER.size:
        raise FormatError("truncated field container")
    magic, version, d, N, n = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError("not a field container")
    if version != VERSION:
        raise FormatError(f"unsupported container version {version}")
    try:
        grid = TorusGrid(d, N)
    except ValueError as exc:
        raise FormatError(f"bad grid in header: {exc}") from None
    if len(data) - _HEADER.size != 16 * n * N**d:
        raise FormatError("payload size does not match header")
    arr = np.frombuffer(data, dtype="<c16", offset=_HEADER.size)
    if comp_shape is None:
        comp_shape = () if n == 1 else (n,) if n == d else (d, d)
    return FourierField(grid, arr.reshape(tuple(comp_shape) + grid.shape).astype(np.complex128))


def _sidecar(f: FourierField) -> dict:
    return {"grid": f.grid.to_dict(), "components": list(f.comp_shape), "dtype": "<c16", "version": VERSION}


def save_field(f: FourierField, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(field_bytes(f))
    path.with_suffix(".json").write_text(json.dumps(_sidecar(f), indent=2, sort_keys=True) + "\n")
    return path


def load_field(path: str | Path) -> FourierField:
    path = Path(path)
    side = path.with_suffix(".json")
    comp = tuple(json.loads(side.read_text())["components"]) if side.exists() else None
    return field_from_bytes(path.read_bytes(), comp)


def save_trace(u: TimeTrace, directory: str | Path, config: dict | None = None,
               diagnostics: dict | None = None) -> Path:
    """One container per sample plus ``manifest.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for i in range(len(u)):
        name = f"field_{i:05d}.bnsf"
        (directory / name).write_bytes(field_bytes(u[i]))
        files.append(name)
    manifest = {
        "grid": u.grid.to_dict(),
        "components": list(u.comp_shape),
        "times": [float(t) for t in u.times],
        "files": files,
        "config": config or {},
        "diagnostics": diagnostics or {},
        "version": VERSION,
    }
    (directory / "manifest.json").write_text(json.dumps(_clean(manifest), indent=2, sort_keys=True) + "\n")
    return directory


def load_trace(directory: str | Path) -> TimeTrace:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    comp = tuple(manifest["components"])
    fields = [field_from_bytes((directory / name).read_bytes(), comp) for name in manifest["files"]]
    grid = fields[0].grid
    return TimeTrace(grid, np.array(manifest["times"], dtype=float), np.stack([f.coeffs for f in fields]),
                     {"config": manifest.get("config", {}), "diagnostics": manifest.get("diagnostics", {})})


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else repr(x)
    return obj


def report_json(report: ExperimentReport, include_series: bool = True) -> str:
    data = report.to_dict()
    if not include_series:
        data.pop("series")
    return json.dumps(_clean(data), indent=2, sort_keys=True) + "\n"


def strip_provenance(text: str) -> dict:
    data = json.loads(text)
    data.pop("provenance", None)
    return data


def emit_plot_data(report: ExperimentReport, directory: str | Path) -> list[Path]:
    """One CSV per series, header ``t,value``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    for name, (t, v) in sorted(report.series.items()):
        path = directory / f"{name}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "value"])
            for a, b in zip(t, v):
                w.writerow([repr(float(a)), repr(float(b))])
        out.append(path)
    return out


def save_report(report: ExperimentReport, directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{report.name}.json"
    path.write_text(report_json(report))
    emit_plot_data(report, directory)
    return path


def write_ratio_rows(rows: list[dict], path: str | Path) -> Path:
    """CSV rows (inputs..., lhs, rhs, ratio) for inequality checks."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    keys = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return path

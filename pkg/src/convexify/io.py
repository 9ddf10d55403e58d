"""Reading and writing arrays, traces, slices and Cauchy data.

Binary tensor layout: a 32-byte header (8-byte magic, six little-endian
uint32 dimensions, unused dimensions set to 1) followed by little-endian
float64 payload with the first dimension varying fastest.  Complex arrays
store interleaved real and imaginary parts.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .forward import CauchyData, SpatialGrid

MAGIC_REAL = b"CVXFR64\0"
MAGIC_COMPLEX = b"CVXFC128"
MAX_DIMS = 6
HEADER = struct.Struct("<8s6I")


def write_tensor(path, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    if arr.ndim > MAX_DIMS:
        raise ValueError(f"at most {MAX_DIMS} dimensions, got {arr.ndim}")
    dims = list(arr.shape) + [1] * (MAX_DIMS - arr.ndim)
    if np.iscomplexobj(arr):
        magic = MAGIC_COMPLEX
        payload = _interleave(arr)
    else:
        magic = MAGIC_REAL
        payload = np.asarray(arr, dtype="<f8").ravel(order="F")
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(magic, *dims))
        fh.write(payload.tobytes())


def _interleave(arr: np.ndarray) -> np.ndarray:
    flat = np.asarray(arr, dtype=complex).ravel(order="F")
    out = np.empty(2 * flat.size, dtype="<f8")
    out[0::2], out[1::2] = flat.real, flat.imag
    return out


def read_tensor(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, *dims = HEADER.unpack_from(raw)
    shape = tuple(dims)
    count = int(np.prod(shape))
    body = np.frombuffer(raw, dtype="<f8", offset=HEADER.size)
    if magic == MAGIC_REAL:
        if body.size != count:
            raise ValueError(f"{path}: expected {count} values, found {body.size}")
        out = body.reshape(shape, order="F")
    elif magic == MAGIC_COMPLEX:
        if body.size != 2 * count:
            raise ValueError(f"{path}: expected {2 * count} values, found {body.size}")
        out = (body[0::2] + 1j * body[1::2]).reshape(shape, order="F")
    else:
        raise ValueError(f"{path}: unknown magic {magic!r}")
    while out.ndim > 1 and out.shape[-1] == 1:
        out = out[..., 0]
    return np.ascontiguousarray(out)


def save_cauchy(directory, data: CauchyData) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_tensor(d / "f.bin", data.f)
    write_tensor(d / "g.bin", data.g)
    meta = dict(data.meta, noise_level=data.noise_level, seed=data.seed)
    (d / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_cauchy(directory) -> CauchyData:
    d = Path(directory)
    meta = json.loads((d / "meta.json").read_text())
    f, g = read_tensor(d / "f.bin"), read_tensor(d / "g.bin")
    if f.shape != g.shape:
        raise ValueError(f"f and g shapes differ: {f.shape} vs {g.shape}")
    return CauchyData(f=f, g=g, noise_level=float(meta.get("noise_level", 0.0)),
                      seed=meta.get("seed"), meta=meta)


def write_slices(path_prefix, c: np.ndarray, grid: SpatialGrid, z_level: float = -0.7,
                 y_level: float = 0.0) -> list[Path]:
    """CSV cross sections of c at the lattice planes nearest z_level and y_level."""
    coords = grid.coords
    iz = int(np.argmin(np.abs(coords - z_level)))
    iy = int(np.argmin(np.abs(coords - y_level)))
    out = []
    for name, sl, (a, b) in (
        (f"z{coords[iz]:+.2f}", c[:, :, iz], ("x", "y")),
        (f"y{coords[iy]:+.2f}", c[:, iy, :], ("x", "z")),
    ):
        p = Path(f"{path_prefix}_{name}.csv")
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([a, b, "c"])
            for i, ca in enumerate(coords):
                for j, cb in enumerate(coords):
                    w.writerow([f"{ca:.6f}", f"{cb:.6f}", f"{sl[i, j]:.10g}"])
        out.append(p)
    return out


def write_trace(path, trace) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "objective", "iterate_norm", "step_norm"])
        for m, (J, nv, st) in enumerate(zip(trace.objective_values, trace.iterates_norms, trace.step_norms)):
            w.writerow([m, repr(J), repr(nv), repr(st)])


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")

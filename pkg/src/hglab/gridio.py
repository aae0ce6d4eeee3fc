"""Self-describing grid files for initial data and snapshots.

A file is a NumPy ``.npz`` archive with

``format``       the string ``hglab-grid/1``
``shape``        (nx, ny, nz)
``lower``        coordinates of the first grid node
``dx``           grid spacing
``fields``       names of the stacked components, in order
``data``         array (22, nx, ny, nz)
``t``, ``M``     slice time and mass parameter
``config_hash``  hash of the configuration that produced the file

The component order is g_{mu nu} for mu <= nu row-major (g00, g01, g02, g03,
g11, ...), then d_t g_{mu nu} in the same order, then psi and d_t psi.
"""
from __future__ import annotations

from pathlib import Path
from typing import Union

import numpy as np

from .blocks import SYM_PAIRS, Grid
from .initdata import FullSlice

FORMAT = "hglab-grid/1"
FIELD_NAMES = tuple(f"g{a}{b}" for a, b in SYM_PAIRS) + tuple(f"dtg{a}{b}" for a, b in SYM_PAIRS) \
    + ("psi", "dtpsi")


class GridFormatError(ValueError):
    pass


def pack_fields(g: np.ndarray, dtg: np.ndarray, psi: np.ndarray, dtpsi: np.ndarray) -> np.ndarray:
    comps = [g[a, b] for a, b in SYM_PAIRS] + [dtg[a, b] for a, b in SYM_PAIRS] + [psi, dtpsi]
    return np.stack(comps).astype(float)


def unpack_fields(data: np.ndarray):
    shape = data.shape[1:]
    g = np.empty((4, 4) + shape)
    dtg = np.empty_like(g)
    for k, (a, b) in enumerate(SYM_PAIRS):
        g[a, b] = g[b, a] = data[k]
        dtg[a, b] = dtg[b, a] = data[10 + k]
    return g, dtg, data[20].copy(), data[21].copy()


def write_slice(path: Union[str, Path], slice_: FullSlice, config_hash: str = "", t: float = 0.0) -> Path:
    path = Path(path)
    grid = slice_.grid
    with open(path, "wb") as fh:
        np.savez(fh, format=np.array(FORMAT), shape=np.array(grid.shape), lower=np.array(grid.lower),
                 dx=np.array(grid.dx), fields=np.array(FIELD_NAMES),
                 data=pack_fields(slice_.g, slice_.dtg, slice_.psi, slice_.dtpsi),
                 t=np.array(t), M=np.array(slice_.M), config_hash=np.array(config_hash))
    return path


def write_state(path: Union[str, Path], grid: Grid, u: np.ndarray, v: np.ndarray, t: float,
                M: float = 0.0, config_hash: str = "") -> Path:
    """Snapshot of an Einstein-mode evolution state (packed u, v with 11 rows)."""
    if u.shape[0] != 11:
        raise GridFormatError("snapshots are written for einstein-mode states only")
    data = np.concatenate([u[:10], v[:10], u[10:11], v[10:11]])
    path = Path(path)
    with open(path, "wb") as fh:
        np.savez(fh, format=np.array(FORMAT), shape=np.array(grid.shape), lower=np.array(grid.lower),
                 dx=np.array(grid.dx), fields=np.array(FIELD_NAMES), data=data,
                 t=np.array(t), M=np.array(M), config_hash=np.array(config_hash))
    return path


def read_slice(path: Union[str, Path]) -> FullSlice:
    with np.load(path, allow_pickle=False) as z:
        if str(z["format"]) != FORMAT:
            raise GridFormatError(f"{path}: unknown format {str(z['format'])!r}")
        if tuple(str(s) for s in z["fields"]) != FIELD_NAMES:
            raise GridFormatError(f"{path}: unexpected field order")
        grid = Grid(tuple(int(s) for s in z["shape"]), tuple(float(s) for s in z["lower"]), float(z["dx"]))
        data = z["data"]
        M = float(z["M"])
    if data.shape != (22,) + grid.shape:
        raise GridFormatError(f"{path}: data shape {data.shape} does not match grid {grid.shape}")
    g, dtg, psi, dtpsi = unpack_fields(data)
    lapse = np.sqrt(np.maximum(-g[0, 0], 0.0))
    return FullSlice(grid, g, dtg, psi, dtpsi, lapse, M)


def read_meta(path: Union[str, Path]) -> dict:
    with np.load(path, allow_pickle=False) as z:
        return {"format": str(z["format"]), "t": float(z["t"]), "M": float(z["M"]),
                "config_hash": str(z["config_hash"]), "shape": tuple(int(s) for s in z["shape"])}

"""Grid and field containers shared by the geometry, evolution and diagnostics code."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

ROLES = ("g", "h", "h0", "h1", "H")

# (mu <= nu) component order used for packed symmetric storage and file layout
SYM_PAIRS: Tuple[Tuple[int, int], ...] = tuple((a, b) for a in range(4) for b in range(a, 4))
SYM_INDEX = np.zeros((4, 4), dtype=int)
for _k, (_a, _b) in enumerate(SYM_PAIRS):
    SYM_INDEX[_a, _b] = SYM_INDEX[_b, _a] = _k


def unpack_sym(packed: np.ndarray) -> np.ndarray:
    """(10, ...) -> (4, 4, ...)."""
    return packed[SYM_INDEX]


def pack_sym(full: np.ndarray) -> np.ndarray:
    """(4, 4, ...) -> (10, ...); takes the upper triangle."""
    return np.stack([full[a, b] for a, b in SYM_PAIRS])


@dataclass(frozen=True)
class Grid:
    """Uniform Cartesian grid with equal spacing on all three axes."""
    shape: Tuple[int, int, int]
    lower: Tuple[float, float, float]
    dx: float

    @classmethod
    def cube(cls, n: int, half_width: float) -> "Grid":
        """``n`` points per axis spanning ``[-half_width, half_width]``."""
        dx = 2.0 * half_width / (n - 1)
        return cls((n, n, n), (-half_width,) * 3, dx)

    @classmethod
    def periodic_cube(cls, n: int, length: float) -> "Grid":
        """``n`` points per axis on ``[0, length)`` for periodic problems."""
        return cls((n, n, n), (0.0,) * 3, length / n)

    def axes(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(self.lower[i] + self.dx * np.arange(self.shape[i]) for i in range(3))

    def mesh(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return np.meshgrid(*self.axes(), indexing="ij")

    def radius(self) -> np.ndarray:
        X, Y, Z = self.mesh()
        return np.sqrt(X * X + Y * Y + Z * Z)

    @property
    def upper(self) -> Tuple[float, ...]:
        return tuple(self.lower[i] + self.dx * (self.shape[i] - 1) for i in range(3))


@dataclass
class MetricBlock:
    """Symmetric 4x4 field on ``n_t`` equally spaced time levels.

    ``data`` has shape ``(n_t, 4, 4, nx, ny, nz)``; level ``k`` sits at
    ``t0 + k*dt``.  ``dtdata`` optionally carries an exact time derivative
    at the centre level, which lets single-level blocks be differentiated.
    """
    data: np.ndarray
    grid: Grid
    dt: float = 0.0
    t0: float = 0.0
    role: str = "g"
    dtdata: Optional[np.ndarray] = None
    periodic: bool = False

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown metric role {self.role!r}")
        if self.data.ndim != 6 or self.data.shape[1:3] != (4, 4):
            raise ValueError("metric data must have shape (n_t, 4, 4, nx, ny, nz)")

    @property
    def n_t(self) -> int:
        return self.data.shape[0]

    @property
    def center(self) -> int:
        return self.n_t // 2

    @property
    def t_center(self) -> float:
        return self.t0 + self.center * self.dt

    def level(self, k: int) -> np.ndarray:
        return self.data[k]

    def check_symmetry(self) -> float:
        return float(np.max(np.abs(self.data - np.swapaxes(self.data, 1, 2))))


@dataclass
class ScalarBlock:
    """Scalar field on ``n_t`` time levels, ``data`` of shape ``(n_t, nx, ny, nz)``."""
    data: np.ndarray
    grid: Grid
    dt: float = 0.0
    t0: float = 0.0
    dtdata: Optional[np.ndarray] = None
    periodic: bool = False

    @property
    def n_t(self) -> int:
        return self.data.shape[0]

    @property
    def center(self) -> int:
        return self.n_t // 2

    @property
    def t_center(self) -> float:
        return self.t0 + self.center * self.dt

    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_t)


def sample_metric(fn, grid: Grid, times, role: str = "g", periodic: bool = False) -> MetricBlock:
    """Evaluate ``fn(t, X, Y, Z) -> (4, 4, ...)`` on each time in ``times``."""
    times = np.asarray(times, dtype=float)
    X, Y, Z = grid.mesh()
    data = np.stack([fn(t, X, Y, Z) for t in times])
    dt = float(times[1] - times[0]) if len(times) > 1 else 0.0
    return MetricBlock(data, grid, dt, float(times[0]), role, periodic=periodic)


def sample_scalar(fn, grid: Grid, times, periodic: bool = False) -> ScalarBlock:
    times = np.asarray(times, dtype=float)
    X, Y, Z = grid.mesh()
    data = np.stack([np.broadcast_to(fn(t, X, Y, Z), X.shape) for t in times]).astype(float)
    dt = float(times[1] - times[0]) if len(times) > 1 else 0.0
    return ScalarBlock(data, grid, dt, float(times[0]), periodic=periodic)

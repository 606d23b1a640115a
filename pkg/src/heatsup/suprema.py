"""Windowed supremum statistics of a sampled field.

F1 is the field value at the anchor point, F2 the supremum of the re-centered
field over a short time window at fixed position, M0 the supremum over a small
space-time rectangle anchored at time zero.  Argmax ties (possible only on a
grid) resolve to the earliest time, then the smallest position.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import FieldPath


@dataclass(frozen=True)
class WindowSpec:
    """Observation window geometry for the supremum statistics."""

    s0: float
    y0: float
    delta1: float
    delta2: float = 0.0

    def __post_init__(self):
        if self.delta1 <= 0.0:
            raise ValueError("delta1 must be positive")
        if self.delta2 < 0.0:
            raise ValueError("delta2 must be nonnegative")
        if not 0.0 < self.y0 < 1.0:
            raise ValueError("y0 must lie in ]0, 1[")
        if self.y0 + self.delta2 >= 1.0:
            raise ValueError("y0 + delta2 must stay below 1")
        if self.s0 < 0.0:
            raise ValueError("s0 must be nonnegative")

    @property
    def delta(self) -> float:
        """Combined window scale delta1^(1/2) + delta2."""
        return np.sqrt(self.delta1) + self.delta2


@dataclass(frozen=True)
class FStatistics:
    f1: float
    f2: float
    argmax_time: float


@dataclass(frozen=True)
class M0Statistics:
    m0: float
    argmax_time: float
    argmax_x: float


def _grid_index(value: float, step: float, label: str) -> int:
    idx = int(round(value / step))
    if abs(idx * step - value) > 1e-9:
        raise ValueError(f"{label}={value:g} does not lie on the grid (step {step:g})")
    return idx


def running_max_stats(values: np.ndarray, times: np.ndarray) -> tuple[float, float]:
    """Maximum and its earliest time over sorted sample times."""
    if values.shape != times.shape:
        raise ValueError("values and times must align")
    i = int(np.argmax(values))
    return float(values[i]), float(times[i])


def compute_F(path: FieldPath, w: WindowSpec) -> FStatistics:
    """F statistics on a grid path.

    F2 is the supremum of u(t, y0) - u(s0, y0) over grid times in
    [s0, s0 + delta1]; the window endpoints must lie on the grid.
    """
    grid = path.grid
    i0 = _grid_index(w.s0, grid.dt, "s0")
    i1 = _grid_index(w.s0 + w.delta1, grid.dt, "s0 + delta1")
    j0 = _grid_index(w.y0, grid.dx, "y0")
    trace = path.values[i0 : i1 + 1, j0]
    f1 = float(trace[0])
    ubar = trace - f1
    f2, s_arg = running_max_stats(ubar, grid.times[i0 : i1 + 1])
    return FStatistics(f1=f1, f2=float(f2), argmax_time=s_arg)


def compute_M0(path: FieldPath, w: WindowSpec) -> M0Statistics:
    """Supremum of u over [0, delta1] x [y0, y0 + delta2] on the grid.

    The time window includes t = 0 where the field vanishes, so M0 >= 0.
    """
    grid = path.grid
    i1 = _grid_index(w.delta1, grid.dt, "delta1")
    j0 = _grid_index(w.y0, grid.dx, "y0")
    j1 = _grid_index(w.y0 + w.delta2, grid.dx, "y0 + delta2")
    block = path.values[: i1 + 1, j0 : j1 + 1]
    flat = block.reshape(-1)
    i = int(np.argmax(flat))  # row-major: earliest time wins, then smallest x
    ti, xi = divmod(i, block.shape[1])
    return M0Statistics(
        m0=float(flat[i]),
        argmax_time=float(grid.times[ti]),
        argmax_x=float(grid.xs[j0 + xi]),
    )


def batch_F_from_window(increments: np.ndarray, offsets: np.ndarray):
    """Vectorized F2 and argmax offsets for window-sampled increment batches.

    increments has shape (n_paths, k) holding ubar at the given offsets; the
    supremum candidate set implicitly contains the window anchor where
    ubar = 0, so F2 is clipped at zero with argmax offset 0 in that case.
    """
    if increments.ndim != 2 or increments.shape[1] != offsets.size:
        raise ValueError("increments must have shape (n_paths, len(offsets))")
    idx = np.argmax(increments, axis=1)
    raw = increments[np.arange(increments.shape[0]), idx]
    f2 = np.maximum(raw, 0.0)
    arg = np.where(raw > 0.0, offsets[idx], 0.0)
    return f2, arg


def batch_M0_from_window(values: np.ndarray, t_flat: np.ndarray, x_flat: np.ndarray):
    """Vectorized M0 and argmax for rectangle-window batches.

    values has shape (n_paths, k) over flattened (time major, position minor)
    window points; t = 0 rows are implicit (field vanishes there), so M0 is
    clipped at zero.
    """
    idx = np.argmax(values, axis=1)
    raw = values[np.arange(values.shape[0]), idx]
    m0 = np.maximum(raw, 0.0)
    pos = raw > 0.0
    return m0, np.where(pos, t_flat[idx], 0.0), np.where(pos, x_flat[idx], 0.0)

"""Input checks shared by the estimator wrappers."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .core import FTSPanel, Grid, GridMismatchError, make_uniform_grid


def check_panel(X, grid: Optional[Grid] = None, min_objects: int = 1,
                min_times: int = 1) -> tuple[np.ndarray, Grid]:
    """Return ``(values, grid)`` for an FTSPanel or an ``(I, T, J)`` array.

    Arrays without a grid are placed on ``J`` equally spaced points of [0, 1].
    """
    if isinstance(X, FTSPanel):
        if grid is not None and grid != X.grid:
            raise GridMismatchError("panel grid differs from the estimator grid")
        values, grid = X.values, X.grid
    else:
        values = np.asarray(X, dtype=float)
        if values.ndim == 2:
            values = values[None]
        if values.ndim != 3:
            raise ValueError(f"expected an (I, T, J) array, got shape {values.shape}")
        if grid is None:
            grid = make_uniform_grid(values.shape[2], 0.0, 1.0)
        elif len(grid) != values.shape[2]:
            raise GridMismatchError(f"array has {values.shape[2]} grid points, grid has {len(grid)}")
    if not np.all(np.isfinite(values)):
        raise ValueError("input contains NaN or infinite values")
    I, T, _ = values.shape
    if I < min_objects:
        raise ValueError(f"need at least {min_objects} objects, got {I}")
    if T < min_times:
        raise ValueError(f"need at least {min_times} time points, got {T}")
    return values, grid

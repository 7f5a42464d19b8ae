"""Deterministic preprocessing of raw frame matrices.

Order of operations for one sample:

1. :func:`dc_suppress`         -- remove each range bin's slow-time mean
2. :func:`background_suppress` -- remove each frame's fast-time mean
3. :func:`time_difference`     -- first difference along slow time
4. :func:`select_range_window` -- pick the contiguous bin window holding the
   most slow-time-difference energy
5. :func:`crop`                -- restrict a matrix to that window

The window is selected on the differenced matrix and then applied to both
the suppressed matrix (spectral view) and its difference (time view).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RangeWindow:
    """Contiguous range-bin window [start, end], both inclusive."""

    start: int
    end: int

    def __post_init__(self):
        if self.start < 0 or self.end < self.start:
            raise ValueError(f"invalid window ({self.start}, {self.end})")

    @property
    def size(self) -> int:
        return self.end - self.start + 1


def dc_suppress(r: np.ndarray) -> np.ndarray:
    """Subtract each row's mean: out[m, n] = R[m, n] - mean_n R[m, :]."""
    r = np.asarray(r, dtype=np.float64)
    return r - r.mean(axis=1, keepdims=True)


def background_suppress(rbar: np.ndarray) -> np.ndarray:
    """Subtract each column's mean, removing static clutter common to all bins."""
    rbar = np.asarray(rbar, dtype=np.float64)
    return rbar - rbar.mean(axis=0, keepdims=True)


def time_difference(y: np.ndarray) -> np.ndarray:
    """First difference along slow time: out[m, n] = Y[m, n+1] - Y[m, n].

    Shape M x (N-1).  Parts of the scene that do not change between frames
    are suppressed to zero.
    """
    y = np.asarray(y)
    if y.shape[1] < 2:
        raise ValueError("time_difference needs at least 2 slow-time frames")
    return np.diff(y, axis=1)


def select_range_window(yd: np.ndarray, ws: int) -> RangeWindow:
    """Find the ws-bin window maximizing the summed squared difference energy.

    Runs in O(M*N) using a prefix sum over per-bin energies; ties resolve to
    the smallest start index.
    """
    yd = np.asarray(yd, dtype=np.float64)
    m = yd.shape[0]
    if ws < 1 or ws > m:
        raise ValueError(f"window size {ws} outside [1, {m}]")
    row_energy = np.einsum("mn,mn->m", yd, yd)
    prefix = np.concatenate([[0.0], np.cumsum(row_energy)])
    window_energy = prefix[ws:] - prefix[:-ws]
    start = int(np.argmax(window_energy))  # argmax returns the first maximum
    return RangeWindow(start, start + ws - 1)


def crop(mat: np.ndarray, window: RangeWindow) -> np.ndarray:
    """Copy rows window.start..window.end (columns untouched)."""
    mat = np.asarray(mat)
    if window.end >= mat.shape[0]:
        raise ValueError(
            f"window ({window.start}, {window.end}) exceeds {mat.shape[0]} rows"
        )
    return mat[window.start : window.end + 1].copy()

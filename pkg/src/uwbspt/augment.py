"""Time-series augmentation for cropped frame matrices.

Four operators: time shift (TS), range shift (RS), time warp (TW) and
magnitude warp (MW).  :func:`expand` applies every non-empty combination of
the four to each training sample, growing the set 16x.  All randomness is
driven by explicit seeds so expansions are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .dataformat import SptClass

OP_ORDER = ("TS", "RS", "TW", "MW")  # fixed composition order

_MAX_WARP_RETRIES = 100


def all_combos() -> list[tuple[str, ...]]:
    """The 15 non-empty subsets of {TS, RS, TW, MW}, in mask order."""
    combos = []
    for mask in range(1, 16):
        combos.append(tuple(op for i, op in enumerate(OP_ORDER) if mask >> i & 1))
    return combos


@dataclass(frozen=True)
class AugmentSpec:
    """Operator parameters and the combination list used by :func:`expand`."""

    ts_shifts: tuple[int, ...] = (-10, -5, 5, 10)
    rs_shifts: tuple[int, ...] = (2, 4)
    tw_sigma: float = 0.4
    mw_sigma: float = 0.4
    knots: int = 4
    combos: tuple[tuple[str, ...], ...] = field(default_factory=lambda: tuple(all_combos()))
    rng_seed: int = 0

    def __post_init__(self):
        if not self.ts_shifts or any(s == 0 for s in self.ts_shifts):
            raise ValueError("ts_shifts must be non-empty and non-zero")
        if not self.rs_shifts or any(s < 1 for s in self.rs_shifts):
            raise ValueError("rs_shifts must be non-empty and >= 1")
        if self.tw_sigma < 0 or self.mw_sigma < 0:
            raise ValueError("sigmas must be >= 0")
        if self.knots < 1:
            raise ValueError("knots must be >= 1")
        for combo in self.combos:
            if not combo or any(op not in OP_ORDER for op in combo):
                raise ValueError(f"invalid combo {combo!r}")


@dataclass(frozen=True)
class Augmented:
    """An expansion output: the (possibly transformed) matrix plus provenance."""

    matrix: np.ndarray
    label: SptClass
    origin: int  # index into the input list
    combo: tuple[str, ...]  # () marks the untouched original


def time_shift(x: np.ndarray, shift: int) -> np.ndarray:
    """Shift columns right by `shift` (negative = left); vacated columns zero."""
    x = np.asarray(x)
    n = x.shape[1]
    if abs(shift) >= n:
        raise ValueError(f"|shift| must be < {n}, got {shift}")
    out = np.zeros_like(x)
    if shift > 0:
        out[:, shift:] = x[:, : n - shift]
    elif shift < 0:
        out[:, :shift] = x[:, -shift:]
    else:
        out[:] = x
    return out


def range_shift(x: np.ndarray, shift: int) -> np.ndarray:
    """Shift rows up by `shift` bins; vacated bottom rows zero."""
    x = np.asarray(x)
    m = x.shape[0]
    if not 0 < shift < m:
        raise ValueError(f"shift must be in (0, {m}), got {shift}")
    out = np.zeros_like(x)
    out[: m - shift] = x[shift:]
    return out


def _smooth_curve(n: int, sigma: float, knots: int, rng: np.random.Generator) -> np.ndarray:
    """Cubic spline through `knots + 2` values drawn from N(1, sigma^2)."""
    xs = np.linspace(0.0, n - 1.0, knots + 2)
    ys = 1.0 + sigma * rng.standard_normal(knots + 2)
    return CubicSpline(xs, ys)(np.arange(n))


def time_warp(
    x: np.ndarray, sigma: float, knots: int, rng: np.random.Generator
) -> np.ndarray:
    """Distort the slow-time axis with one shared smooth monotone warp.

    A random smooth step-size curve is integrated into a warp of [0, N-1]
    onto itself; every row is then resampled at the warped positions with
    cubic interpolation.  Endpoints map to themselves, so first and last
    columns are preserved.  Non-monotone draws are resampled.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[1]
    if n < 4:
        raise ValueError("time_warp needs at least 4 slow-time frames")
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    for _ in range(_MAX_WARP_RETRIES):
        steps = _smooth_curve(n, sigma, knots, rng)
        warped = np.concatenate([[0.0], np.cumsum(steps[1:])])
        if warped[-1] <= 0:
            continue
        warped *= (n - 1) / warped[-1]
        if np.all(np.diff(warped) > 0):
            break
    else:
        raise RuntimeError(f"no monotone warp after {_MAX_WARP_RETRIES} draws")
    return CubicSpline(np.arange(n), x, axis=1)(warped)


def magnitude_warp(
    x: np.ndarray, sigma: float, knots: int, rng: np.random.Generator
) -> np.ndarray:
    """Multiply every row by one shared smooth curve varying around 1."""
    x = np.asarray(x, dtype=np.float64)
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    curve = _smooth_curve(x.shape[1], sigma, knots, rng)
    return x * curve


def apply_combo(
    x: np.ndarray,
    combo: tuple[str, ...],
    spec: AugmentSpec,
    rng: np.random.Generator,
) -> np.ndarray:
    """Apply one operator subset in the fixed TS -> RS -> TW -> MW order."""
    out = np.asarray(x, dtype=np.float64)
    if "TS" in combo:
        out = time_shift(out, int(rng.choice(spec.ts_shifts)))
    if "RS" in combo:
        out = range_shift(out, int(rng.choice(spec.rs_shifts)))
    if "TW" in combo:
        out = time_warp(out, spec.tw_sigma, spec.knots, rng)
    if "MW" in combo:
        out = magnitude_warp(out, spec.mw_sigma, spec.knots, rng)
    return out


def expand(
    samples: list[tuple[np.ndarray, SptClass]], spec: AugmentSpec
) -> list[Augmented]:
    """Expand (matrix, label) pairs: each original plus one copy per combo.

    Output order is sample-major.  Parameters are drawn from a substream
    seeded by (spec.rng_seed, sample index, combo index), so the expansion
    is deterministic and per-sample parallelizable.
    """
    out: list[Augmented] = []
    for i, (matrix, label) in enumerate(samples):
        matrix = np.asarray(matrix, dtype=np.float64)
        out.append(Augmented(matrix=matrix.copy(), label=label, origin=i, combo=()))
        for j, combo in enumerate(spec.combos):
            rng = np.random.default_rng([spec.rng_seed, i, j])
            out.append(
                Augmented(
                    matrix=apply_combo(matrix, combo, spec, rng),
                    label=label,
                    origin=i,
                    combo=combo,
                )
            )
    return out
